"""
Closed-form Gaussian rates for two and three nodes.

Factors such as (D2 - 1) or (D1 - 1) that are negative for valid distortions appear here as
(1 - D2), (1 - D1); every expression is checked against the entropy engine in the tests.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from rate_region.constants import RHO_EPS, TRANSCRIPTION_TOL
from rate_region.errors import DegenerateConditioningError, InvalidParametersError
from rate_region.models import INF, ChannelParams, DistortionSpec, LayerParams, RatePoint, Regime
from rate_region.optimizer import OptimizerConfig, minimize_scalar

logger = logging.getLogger(__name__)

ABSENT_PRECISION = 1e-12


def _log2(x: float) -> float:
    return math.log2(x)


def _precision(variance: float) -> float:
    return 0.0 if math.isinf(variance) else 1.0 / variance


def _variance(precision: float) -> float:
    """Inverse of a noise precision; precisions at or below round-off mean the codeword is dropped."""
    return INF if precision <= ABSENT_PRECISION else 1.0 / precision


def _ratio_or_absent(numerator: float, denominator: float) -> float:
    return INF if denominator <= ABSENT_PRECISION else numerator / denominator


def private_variance_for(d1: float, sigma_u_sq: float) -> float:
    """Private-noise variance that makes a single node meet d1 exactly, given the common noise."""
    return _variance(1.0 / d1 - 1.0 - _precision(sigma_u_sq))


def tight_top_variance(d2: float, d2_without_top: float) -> float:
    """Smallest top-codeword noise needed to pull d2_without_top down to d2 (+inf if already met)."""
    if d2_without_top <= d2:
        return INF
    return _variance(1.0 / d2 - 1.0 / d2_without_top)


def _single_layer(params: ChannelParams) -> LayerParams:
    if len(params.layers) != 1:
        raise InvalidParametersError(
            f"closed forms cover a single layer plus the top codeword, got {len(params.layers)} layers")
    return params.layers[0]


def _access_distortions(params: ChannelParams) -> Tuple[float, float]:
    """
    One-node and two-node MMSE of a single-layer test channel.

    D1 = 1 / (1 + 1/s_u + 1/s_q), D2 = 1 / (1 + 1/s_u + 2/(s_q (1 + rho)) + 1/s_top); absent
    codewords contribute zero precision.
    """
    layer = _single_layer(params)
    base = 1.0 + _precision(layer.sigma_u_sq)
    private = _precision(layer.sigma_q_sq)
    d1 = 1.0 / (base + private)
    pair = 0.0
    if layer.has_private:
        if layer.rho <= -1:
            return d1, 0.0
        pair = 2.0 * private / (1.0 + layer.rho)
    d2 = 1.0 / (base + pair + _precision(params.top_sigma_sq))
    return d1, d2


def two_node_distortions(params: ChannelParams) -> Tuple[float, float]:
    if params.n != 2:
        raise InvalidParametersError(f"two_node_distortions needs n=2, got n={params.n}")
    return _access_distortions(params)


def three_node_distortions(params: ChannelParams) -> Tuple[float, float]:
    """Any single node and any pair of nodes; the top codeword is decodable from two nodes."""
    if params.n != 3:
        raise InvalidParametersError(f"three_node_distortions needs n=3, got n={params.n}")
    return _access_distortions(params)


def _common_parts(layer: LayerParams) -> Tuple[float, float]:
    """Common-codeword rate I(X;U) and the residual source variance v = Var(X | U)."""
    if not layer.has_common:
        return 0.0, 1.0
    s_u = layer.sigma_u_sq
    return 0.5 * _log2(1.0 + 1.0 / s_u), s_u / (1.0 + s_u)


def _pair_residual(v: float, s: float, rho: float) -> float:
    """Var(X | U, Y_1, Y_2) from the residual v and two private codewords."""
    return 1.0 / (1.0 / v + 2.0 / (s * (1.0 + rho)))


def two_node_rates(params: ChannelParams) -> RatePoint:
    """
    R and R_r of the two-node common-message scheme for arbitrary test-channel parameters.

    R   = 1/2 log(1 + 1/s_u) + 1/2 log((v + s) / (s sqrt(1 - rho^2))) + R_top
    R_r = [1/2 log((1 - rho)(2v + s(1 + rho)) / ((v + s) sqrt(1 - rho^2)))]^+ + R_top
    with v = s_u / (1 + s_u), R_top = 1/4 log((s_top + D2') / s_top) and D2' the two-node MMSE
    before the top codeword.
    """
    if params.n != 2:
        raise InvalidParametersError(f"two_node_rates needs n=2, got n={params.n}")
    layer = _single_layer(params)
    r_common, v = _common_parts(layer)
    r_private = repair = 0.0
    residual = v
    if layer.has_private:
        s, rho = layer.sigma_q_sq, layer.rho
        if abs(rho) >= 1:
            raise DegenerateConditioningError(f"rho={rho} makes the private noises linearly dependent")
        root = math.sqrt(1.0 - rho * rho)
        r_private = 0.5 * _log2((v + s) / (s * root))
        repair = 0.5 * _log2((1.0 - rho) * (2.0 * v + s * (1.0 + rho)) / ((v + s) * root))
        residual = _pair_residual(v, s, rho)
    r_top = 0.0
    if params.has_top:
        t = params.top_sigma_sq
        r_top = 0.25 * _log2((t + residual) / t)
    return RatePoint(r=r_common + r_private + r_top, r_repair=max(repair, 0.0) + r_top, params=params)


def _cube_root_det(rho: float) -> float:
    """((1 - rho)^2 (1 + 2 rho))^(1/3), the normalized geometric mean of the 3x3 noise eigenvalues."""
    det = (1.0 - rho) ** 2 * (1.0 + 2.0 * rho)
    if det <= 0:
        raise DegenerateConditioningError(f"rho={rho} makes the three private noises linearly dependent")
    return det ** (1.0 / 3.0)


def three_node_rates(params: ChannelParams) -> RatePoint:
    """
    R and R_r of three nodes with distributed repair for arbitrary test-channel parameters.

    R   = 1/2 log(1 + 1/s_u) + 1/2 log((v + s) / (c s)) + 1/4 log((s_top + D2') / s_top)
    R_r = 1/2 [1/2 log((1 - rho)(s(1 + 2 rho) + 3v) / ((s(1 + rho) + 2v) c))]^+
    with c = ((1 - rho)^2 (1 + 2 rho))^(1/3).
    """
    if params.n != 3:
        raise InvalidParametersError(f"three_node_rates needs n=3, got n={params.n}")
    layer = _single_layer(params)
    r_common, v = _common_parts(layer)
    r_private = repair = 0.0
    residual = v
    if layer.has_private:
        s, rho = layer.sigma_q_sq, layer.rho
        c = _cube_root_det(rho)
        r_private = 0.5 * _log2((v + s) / (s * c))
        repair = 0.5 * _log2((1.0 - rho) * (s * (1.0 + 2.0 * rho) + 3.0 * v) / ((s * (1.0 + rho) + 2.0 * v) * c))
        residual = _pair_residual(v, s, rho)
    r_top = 0.0
    if params.has_top:
        t = params.top_sigma_sq
        r_top = 0.25 * _log2((t + residual) / t)
    return RatePoint(r=r_common + r_private + r_top, r_repair=0.5 * max(repair, 0.0), params=params)


def two_node_regime(spec: DistortionSpec) -> Regime:
    d1, d2 = spec.targets
    if d2 <= 2 * d1 - 1:
        return Regime.RESOLUTION_INFO
    if d2 >= d1 / (2 - d1):
        return Regime.COMMON_MESSAGE
    return Regime.CORRELATION_ONLY


def two_node_params(spec: DistortionSpec, regime: Regime) -> ChannelParams:
    """Test-channel parameters achieving the two-node optimum in `regime`."""
    d1, d2 = spec.targets
    s_private = d1 / (1 - d1)
    if regime is Regime.COMMON_MESSAGE:
        sigma_u = _ratio_or_absent(d1 * d2, 2 * d2 - d1 * d2 - d1)
        layer = LayerParams(sigma_u_sq=sigma_u, sigma_q_sq=private_variance_for(d1, sigma_u), rho=0.0)
        return ChannelParams(n=2, layers=(layer,))
    if regime is Regime.CORRELATION_ONLY:
        rho = (d1 * d2 + d1 - 2 * d2) / (d1 * (d2 - 1))
        return ChannelParams(n=2, layers=(LayerParams(sigma_q_sq=s_private, rho=rho),))
    rho = (d1 - 1) / d1
    top = _ratio_or_absent(d1 * d2 * (rho + 1), d1 * (d2 * (1 - rho) + rho + 1) - 2 * d2)
    return ChannelParams(n=2, layers=(LayerParams(sigma_q_sq=s_private, rho=rho),), top_sigma_sq=top)


def two_node_optimal(spec: DistortionSpec) -> RatePoint:
    """
    Optimum repair rate for two nodes and the operational rate that goes with it.

    In every regime R + R_r = 1/2 log(1/D2), the smallest total any repairable scheme can reach.
    """
    d1, d2 = spec.targets
    regime = two_node_regime(spec)
    if regime is Regime.COMMON_MESSAGE:
        r_repair = 0.5 * _log2(d1 / d2)
        r = 0.5 * _log2(1 / d1)
    elif regime is Regime.CORRELATION_ONLY:
        r_repair = 0.5 * _log2(2 * math.sqrt((1 - d1) * (d1 - d2)) / ((1 - d2) * math.sqrt(d2)))
        r = 0.5 * _log2(1 / d2) - r_repair
    else:
        r = r_repair = 0.25 * _log2(1 / d2)
    logger.debug("two-node d1=%g d2=%g: %s r=%.9g r_repair=%.9g", d1, d2, regime.value, r, r_repair)
    return RatePoint(r=r, r_repair=r_repair, regime=regime, params=two_node_params(spec, regime))


def _pair_distortion_without_top(d1: float, rho: float) -> float:
    """Two-node MMSE when each node's private codeword alone meets d1 and nothing else is stored."""
    return d1 * (1 + rho) / (d1 * (rho - 1) + 2)


def two_node_ec_rate(spec: DistortionSpec, rho: float) -> float:
    """Per-node rate of two independently binned descriptions with private-noise correlation rho."""
    if not -1 < rho < 1:
        return INF
    d1, d2 = spec.targets
    excess = _pair_distortion_without_top(d1, rho) / d2
    return 0.5 * _log2(1 / (d1 * math.sqrt(1 - rho * rho))) + 0.25 * _log2(max(excess, 1.0))


def two_node_ec_baseline(spec: DistortionSpec, cfg: OptimizerConfig = OptimizerConfig()) -> float:
    _, rate = minimize_scalar(lambda rho: two_node_ec_rate(spec, rho), -1 + RHO_EPS, 1 - RHO_EPS, cfg)
    return rate


def correlation_boundary(spec: DistortionSpec) -> float:
    """The rho at which private codewords alone meet d2 exactly."""
    d1, d2 = spec.targets
    return (2 * d2 - d1 * d2 - d1) / (d1 * (1 - d2))


def _check_three_node_rho(rho: float):
    if not -0.5 < rho < 1:
        raise InvalidParametersError(f"rho must lie in (-1/2, 1) for three nodes, got {rho}")


def three_node_regime_params(spec: DistortionSpec, rho: float, regime: Regime) -> Optional[ChannelParams]:
    """Parameters of `regime` at correlation rho, or None where the regime is not valid."""
    _check_three_node_rho(rho)
    d1, d2 = spec.targets
    boundary = correlation_boundary(spec)
    s_private = d1 / (1 - d1)
    if regime is Regime.CORRELATION_ONLY:
        if rho > boundary:
            return None
        return ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=s_private, rho=rho),))
    if regime is Regime.COMMON_MESSAGE:
        if rho >= boundary:
            return None
        if d1 == d2:
            return ChannelParams(n=3, layers=(LayerParams(sigma_u_sq=d1 / (1 - d1), rho=rho),))
        sigma_q = (1 - rho) * d1 * d2 / ((1 + rho) * (d1 - d2))
        sigma_u = _ratio_or_absent(d1 * d2 * (1 - rho), 2 * d2 - d1 * (d2 * (1 - rho) + rho + 1))
        return ChannelParams(n=3, layers=(LayerParams(sigma_u_sq=sigma_u, sigma_q_sq=sigma_q, rho=rho),))
    if rho <= boundary:
        return None
    top = _ratio_or_absent(d1 * d2 * (rho + 1), d1 * (d2 * (1 - rho) + rho + 1) - 2 * d2)
    return ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=s_private, rho=rho),), top_sigma_sq=top)


def _three_node_repair(rho: float, c: float, numerator: float, denominator: float) -> float:
    """Distributed repair rate 1/2 [1/2 log((1 - rho) numerator / (denominator c))]^+."""
    return 0.5 * max(0.5 * _log2((1 - rho) * numerator / (denominator * c)), 0.0)


def three_node_regime_rates(spec: DistortionSpec, rho: float) -> Dict[Regime, Optional[float]]:
    """
    R + R_r of each three-node regime at correlation rho; None where the regime is not valid.

    CORRELATION_ONLY (rho <= boundary): no common codeword and no top codeword.
    COMMON_MESSAGE (rho < boundary): a common codeword sized so that two nodes meet d2 exactly.
    RESOLUTION_INFO (rho > boundary): a top codeword sized so that two nodes meet d2 exactly.
    """
    _check_three_node_rho(rho)
    d1, d2 = spec.targets
    boundary = correlation_boundary(spec)
    c = _cube_root_det(rho)
    r_private = 0.5 * _log2(1 / (d1 * c))
    repair_private_only = _three_node_repair(rho, c, 2 * d1 * (rho - 1) + 3, d1 * (rho - 1) + 2)

    rates: Dict[Regime, Optional[float]] = {regime: None for regime in Regime}
    if rho <= boundary:
        rates[Regime.CORRELATION_ONLY] = r_private + repair_private_only
    if rho < boundary:
        if d1 == d2:
            rates[Regime.COMMON_MESSAGE] = 0.5 * _log2(1 / d1)
        else:
            repair = _three_node_repair(rho, c, 2 * (1 + rho) * d1 - d2, d1 * (1 + rho))
            rates[Regime.COMMON_MESSAGE] = r_private + repair
    if rho > boundary:
        r_top = 0.25 * _log2(d1 * (1 + rho) / (d2 * (d1 * (rho - 1) + 2)))
        rates[Regime.RESOLUTION_INFO] = r_private + r_top + repair_private_only
    return rates


@dataclass(frozen=True)
class TranscriptionCheck:
    """The transcribed COMMON_MESSAGE closed form next to the rate actually used at one rho."""
    rho: float
    transcribed: float
    rate: float

    @property
    def divergent(self) -> bool:
        return not abs(self.transcribed - self.rate) <= TRANSCRIPTION_TOL


def three_node_common_message_transcription(spec: DistortionSpec, rho: float) -> float:
    """
    R + R_r of the COMMON_MESSAGE regime as transcribed:

        1/2 log2( d2 sqrt(|d2 - 2 d1 (rho + 1)| / (d1 (2 rho + 1))) / |d1 rho + d1 - 2 d2| )

    Absolute values keep both sign-indefinite factors real. NaN where either factor vanishes.
    """
    _check_three_node_rho(rho)
    d1, d2 = spec.targets
    denominator = abs(d1 * rho + d1 - 2 * d2)
    ratio = abs(d2 - 2 * d1 * (rho + 1)) / (d1 * (2 * rho + 1))
    if denominator == 0 or ratio == 0:
        return math.nan
    return 0.5 * _log2(d2 * math.sqrt(ratio) / denominator)


def check_common_message(spec: DistortionSpec, rho: float) -> Optional[TranscriptionCheck]:
    """
    Compares the transcribed COMMON_MESSAGE closed form with the re-derived rate at rho.

    The re-derived rate (which agrees with the entropy engine) is the one reported; a disagreement
    beyond TRANSCRIPTION_TOL is logged at WARNING. None where COMMON_MESSAGE is not valid at rho.
    """
    rate = three_node_regime_rates(spec, rho)[Regime.COMMON_MESSAGE]
    if rate is None:
        return None
    check = TranscriptionCheck(rho=rho, transcribed=three_node_common_message_transcription(spec, rho), rate=rate)
    if check.divergent:
        logger.warning("common-message transcription divergent for d1=%g, d2=%g at rho=%.9g: "
                       "transcribed %.9g, re-derived %.9g", spec.d1, spec.d2, rho, check.transcribed, rate)
    return check


def three_node_no_repair_rate(spec: DistortionSpec, rho: float, modified: bool = True) -> float:
    """
    Per-node rate of three nodes (at most two accessed) without repair information.

    With `modified` the top layer is a single codeword binned over two nodes; otherwise two
    independently generated top codewords are used, each twice as noisy, and the rate pays for the
    sum of their marginal entropies.
    """
    if not -0.5 < rho < 1:
        return INF
    d1, d2 = spec.targets
    base = 0.5 * _log2(1 / (d1 * _cube_root_det(rho)))
    excess = _pair_distortion_without_top(d1, rho) / d2
    if excess <= 1:
        return base
    if modified:
        return base + 0.25 * _log2(excess)
    return base + 0.5 * _log2((excess + 1) / 2)
