import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from rate_region.constants import MI_CLAMP_TOL, PSD_TOL
from rate_region.errors import InvalidParametersError

INF = math.inf


class Regime(Enum):
    RESOLUTION_INFO = "resolution-info"
    CORRELATION_ONLY = "correlation-only"
    COMMON_MESSAGE = "common-message"


class Scheme(Enum):
    """Which storage scheme a rate expression accounts for."""
    DISTRIBUTED = "distributed"
    REPAIR_NODE = "repair-node"
    MODIFIED_PRP = "modified-prp"


def _is_absent(value: float) -> bool:
    return math.isinf(value) and value > 0


def _check_variance(name: str, value: float):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
        raise InvalidParametersError(f"{name} must be a real number, got {value!r}")
    if value <= 0:
        raise InvalidParametersError(f"{name} must be > 0 or +inf (absent), got {value}")


def noise_correlation_eigenvalues(n: int, rho: float) -> np.ndarray:
    """Eigenvalues of the n x n matrix with ones on the diagonal and rho elsewhere."""
    corr = np.full((n, n), rho, dtype=float)
    np.fill_diagonal(corr, 1.0)
    return np.linalg.eigvalsh(corr)


def encode_variance(value: float):
    return "inf" if _is_absent(value) else float(value)


def decode_variance(value: Any, name: str) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        raise InvalidParametersError(f"{name} must be a number or \"inf\", got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidParametersError(f"{name} must be a number or \"inf\", got {value!r}")
    return float(value)


@dataclass(frozen=True)
class LayerParams:
    """Test-channel noise of one layer: common codeword U_k and private codewords Y_{k,i}.

    A variance of +inf means the corresponding codeword is not stored.
    """
    sigma_u_sq: float = INF
    sigma_q_sq: float = INF
    rho: float = 0.0

    @property
    def has_common(self) -> bool:
        return not _is_absent(self.sigma_u_sq)

    @property
    def has_private(self) -> bool:
        return not _is_absent(self.sigma_q_sq)

    def to_dict(self) -> Dict[str, Any]:
        return {"sigma_u_sq": encode_variance(self.sigma_u_sq),
                "sigma_q_sq": encode_variance(self.sigma_q_sq),
                "rho": float(self.rho)}


@dataclass(frozen=True)
class ChannelParams:
    """Symmetric Gaussian test channels for n nodes.

    Attributes:
        n (int): Number of storage nodes.
        layers (tuple): LayerParams for k = 1, 2, ...; the distributed scheme uses n - 2 layers,
            the repair-node scheme n - 1.
        top_sigma_sq (float): Noise variance of the top-layer codeword(s), +inf when absent.
        top_codewords (int): Number of independently generated top codewords (1 except for the
            unmodified PRP baseline).
    """
    n: int
    layers: Tuple[LayerParams, ...] = ()
    top_sigma_sq: float = INF
    top_codewords: int = 1

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 2:
            raise InvalidParametersError(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) > self.n - 1:
            raise InvalidParametersError(f"at most n - 1 = {self.n - 1} layers allowed, got {len(self.layers)}")
        for k, layer in enumerate(self.layers, start=1):
            if not isinstance(layer, LayerParams):
                raise InvalidParametersError(f"layer {k} must be a LayerParams, got {type(layer).__name__}")
            _check_variance(f"layer {k} sigma_u_sq", layer.sigma_u_sq)
            _check_variance(f"layer {k} sigma_q_sq", layer.sigma_q_sq)
            if not isinstance(layer.rho, (int, float)) or not math.isfinite(layer.rho):
                raise InvalidParametersError(f"layer {k} rho must be a finite real, got {layer.rho!r}")
            if layer.has_private:
                smallest = float(noise_correlation_eigenvalues(self.n, layer.rho).min())
                if smallest < -PSD_TOL:
                    raise InvalidParametersError(
                        f"layer {k} rho={layer.rho} gives a noise correlation matrix that is not "
                        f"positive semidefinite (smallest eigenvalue {smallest:.6g}); "
                        f"rho must lie in [{-1.0 / (self.n - 1):.6g}, 1]")
        _check_variance("top_sigma_sq", self.top_sigma_sq)
        if isinstance(self.top_codewords, bool) or not isinstance(self.top_codewords, int) or self.top_codewords < 1:
            raise InvalidParametersError(f"top_codewords must be an integer >= 1, got {self.top_codewords!r}")

    @property
    def has_top(self) -> bool:
        return not _is_absent(self.top_sigma_sq)

    @property
    def has_common(self) -> bool:
        return any(layer.has_common for layer in self.layers)

    def to_dict(self) -> Dict[str, Any]:
        doc = {"n": self.n,
               "layers": [layer.to_dict() for layer in self.layers],
               "top_sigma_sq": encode_variance(self.top_sigma_sq)}
        if self.top_codewords != 1:
            doc["top_codewords"] = self.top_codewords
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ChannelParams":
        if not isinstance(doc, dict):
            raise InvalidParametersError("channel parameters must be a JSON object")
        try:
            layers = tuple(
                LayerParams(sigma_u_sq=decode_variance(item.get("sigma_u_sq", "inf"), "sigma_u_sq"),
                            sigma_q_sq=decode_variance(item.get("sigma_q_sq", "inf"), "sigma_q_sq"),
                            rho=float(item.get("rho", 0.0)))
                for item in doc.get("layers", []))
            return cls(n=doc["n"], layers=layers,
                       top_sigma_sq=decode_variance(doc.get("top_sigma_sq", "inf"), "top_sigma_sq"),
                       top_codewords=doc.get("top_codewords", 1))
        except (KeyError, TypeError, AttributeError) as e:
            raise InvalidParametersError(f"malformed channel parameters: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "ChannelParams":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidParametersError(f"malformed JSON: {e}") from e
        return cls.from_dict(doc)


@dataclass(frozen=True)
class DistortionSpec:
    """Mean-squared error targets for one-node (d1) and two-node (d2) access, unit source variance."""
    d1: float
    d2: float

    def __post_init__(self):
        for name in ("d1", "d2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 < value < 1:
                raise InvalidParametersError(f"{name} must lie in (0, 1), got {value!r}")
        if self.d2 > self.d1:
            raise InvalidParametersError(f"d2={self.d2} exceeds d1={self.d1}; more nodes cannot hurt")

    @property
    def targets(self) -> Tuple[float, float]:
        return self.d1, self.d2


def clamp_rate(value: float) -> float:
    if -MI_CLAMP_TOL < value < 0:
        return 0.0
    return value


@dataclass(frozen=True)
class RatePoint:
    """Operational rate r and repair rate r_repair in bits per source sample."""
    r: float
    r_repair: float
    regime: Optional[Regime] = None
    params: Optional[ChannelParams] = None
    transcription_divergent: bool = False

    def __post_init__(self):
        for name in ("r", "r_repair"):
            value = clamp_rate(float(getattr(self, name)))
            if not value >= 0:
                raise InvalidParametersError(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def r_total(self) -> float:
        return self.r + self.r_repair

    def to_dict(self) -> Dict[str, Any]:
        return {"regime": self.regime.value if self.regime else None,
                "r": self.r,
                "r_repair": self.r_repair,
                "r_total": self.r_total,
                "params": self.params.to_dict() if self.params else None,
                "transcription_divergent": self.transcription_divergent}


@dataclass(frozen=True)
class LayerTerms:
    """Per-layer rate terms of one rate expression."""
    layer: int
    common_rate: float
    private_rate: float
    repair_term: float
    common_codebook_rate: float
    private_codebook_rate: float

    @property
    def repair_free(self) -> bool:
        # the lost private codeword is recoverable from the survivors without extra bits
        return self.repair_term <= 0

    def to_dict(self) -> Dict[str, Any]:
        return {"layer": self.layer,
                "common_rate": self.common_rate,
                "private_rate": self.private_rate,
                "repair_term": self.repair_term,
                "repair_free": self.repair_free,
                "common_codebook_rate": self.common_codebook_rate,
                "private_codebook_rate": self.private_codebook_rate}


@dataclass(frozen=True)
class RateBreakdown:
    scheme: Scheme
    n: int
    layers: Tuple[LayerTerms, ...]
    top_rate: float
    r: float
    r_repair: float

    def to_rate_point(self, params: Optional[ChannelParams] = None) -> RatePoint:
        return RatePoint(r=self.r, r_repair=self.r_repair, params=params)

    def to_dict(self) -> Dict[str, Any]:
        return {"scheme": self.scheme.value,
                "n": self.n,
                "r": self.r,
                "r_repair": self.r_repair,
                "r_total": self.r + self.r_repair,
                "top_rate": self.top_rate,
                "layers": [terms.to_dict() for terms in self.layers]}
