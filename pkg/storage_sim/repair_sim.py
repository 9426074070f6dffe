"""
Operational analog of the storage system: each node stores entropy-coded quantizer indices of a
common codeword, its own private codeword and a share of the top codeword, plus a share of the
repair parity.

Binning is replaced by MDS codes: the common stream is repeated on every node, the top stream is
split with an (n, 2) code, and the payload a node cannot rebuild from the survivors alone (its
private stream, and its top share when the top code has no redundancy) is protected by the XOR of
all payloads, itself stored with an (n, n - 1) code. Repair is therefore exact by construction and
never decodes an index stream.

The private quantizers run in a rotating order with error feedback through the Cholesky factor of
the private noise covariance, so the quantization noise itself carries the correlation rho. All
test-channel noises are inflated by a common factor chosen so the modelled distortions stay below
the ceilings; every stream is coded under a Gaussian model of its indices given the codewords any
decoder of that stream already holds.
"""
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from rate_region.closed_form import two_node_optimal
from rate_region.constants import DEFAULT_QUANTIZER_OVERHEAD_BITS
from rate_region.entropy_engine import (CovarianceModel, VariableSet, build_covariance, common_label,
                                        distributed_repair_rates, lmmse_weights, mmse_distortion, private_label,
                                        rate_breakdown, repair_node_rates, subset_distortion, top_decoding_size,
                                        top_labels)
from rate_region.errors import ConfigInfeasibleError, InvalidParametersError
from rate_region.models import ChannelParams, DistortionSpec, LayerParams, RatePoint, Scheme
from rate_region.optimizer import OptimizerConfig
from rate_region.region_explorer import three_node_optimal
from storage_sim.entropy_coder import decode_indices, encode_indices, expected_index_entropy
from storage_sim.erasure_code import MDSCode
from storage_sim.quantizer import DitheredQuantizer, draw_dither

logger = logging.getLogger(__name__)

SUBSET_SIZES = (1, 2)
TOP_DECODERS = 2
MIN_ERROR_VARIANCE = 1e-12
# modelled distortions of the inflated channel stay below this share of the ceilings
DISTORTION_MARGIN = 0.85
INFLATION_STEPS = 60
LENGTH_BYTES = 4
DECODE_CACHE_SIZE = 32

# SeedSequence spawn keys of the per-block random streams
SOURCE_STREAM = 0
DITHER_STREAM = 1


def inflate(params: ChannelParams, kappa: float) -> ChannelParams:
    """`params` with every test-channel noise variance multiplied by `kappa`."""
    layers = tuple(LayerParams(sigma_u_sq=layer.sigma_u_sq * kappa, sigma_q_sq=layer.sigma_q_sq * kappa,
                               rho=layer.rho) for layer in params.layers)
    return replace(params, layers=layers, top_sigma_sq=params.top_sigma_sq * kappa)


@dataclass(frozen=True)
class SimConfig:
    """
    Attributes:
        n (int): Number of storage nodes, 2 or 3.
        spec (DistortionSpec): Distortion targets the parameters were chosen for.
        params (ChannelParams): One layer plus an optional top codeword.
        block_len (int): Source samples per block.
        seed (int): Root seed; every block derives its own streams from (seed, block index).
        quantizer_overhead_bits (float): Allowance for the scalar quantizer loss. Distortion
            ceilings are the targets scaled by 2^(2 * overhead), and every stored piece may exceed
            its information rate by this many bits per sample.
    """
    n: int
    spec: DistortionSpec
    params: ChannelParams
    block_len: int
    seed: int
    quantizer_overhead_bits: float = DEFAULT_QUANTIZER_OVERHEAD_BITS

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConfigInfeasibleError(f"the simulator supports 2 or 3 nodes, got {self.n}")
        if self.params.n != self.n:
            raise ConfigInfeasibleError(f"parameters are for n={self.params.n}, config has n={self.n}")
        if len(self.params.layers) != 1:
            raise ConfigInfeasibleError(f"the simulator needs exactly one layer, got {len(self.params.layers)}")
        if self.params.top_codewords != 1:
            raise ConfigInfeasibleError("the simulator stores a single top codeword")
        if self.block_len < 1:
            raise ConfigInfeasibleError(f"block_len must be >= 1, got {self.block_len}")
        if self.seed < 0:
            raise ConfigInfeasibleError(f"seed must be >= 0, got {self.seed}")
        if self.quantizer_overhead_bits < 0:
            raise ConfigInfeasibleError(f"quantizer_overhead_bits must be >= 0, got {self.quantizer_overhead_bits}")
        if not (self.layer.has_common or self.layer.has_private or self.params.has_top):
            raise ConfigInfeasibleError("parameters store no codeword at all")
        if self.layer.has_private and self.private_noise_floor <= MIN_ERROR_VARIANCE:
            raise ConfigInfeasibleError(
                f"rho={self.layer.rho} leaves no room for quantization noise in the private codewords")
        self._check_budget()

    @classmethod
    def from_spec(cls, n: int, spec: DistortionSpec, block_len: int, seed: int,
                  quantizer_overhead_bits: float = DEFAULT_QUANTIZER_OVERHEAD_BITS,
                  cfg: OptimizerConfig = OptimizerConfig()) -> "SimConfig":
        """Config with the optimal parameters for `spec`: the two-node optimum or the best three-node regime."""
        if n not in (2, 3):
            raise ConfigInfeasibleError(f"the simulator supports 2 or 3 nodes, got {n}")
        point = two_node_optimal(spec) if n == 2 else three_node_optimal(spec, cfg)
        return cls(n=n, spec=spec, params=point.params, block_len=block_len, seed=seed,
                   quantizer_overhead_bits=quantizer_overhead_bits)

    @property
    def layer(self) -> LayerParams:
        return self.params.layers[0]

    @property
    def scheme(self) -> Scheme:
        return Scheme.REPAIR_NODE if self.n == TOP_DECODERS else Scheme.DISTRIBUTED

    @property
    def max_access(self) -> int:
        """Most nodes a decoder reads: all of them with two nodes, n - 1 otherwise."""
        return top_decoding_size(self.params, self.scheme)

    @property
    def private_noise_floor(self) -> float:
        """Smallest eigenvalue of the private noise covariance."""
        layer = self.layer
        return layer.sigma_q_sq * min(1 - layer.rho, 1 + (self.n - 1) * layer.rho)

    def distortion_ceiling(self, m: int) -> float:
        target = self.spec.d1 if m == 1 else self.spec.d2
        return target * 2 ** (2 * self.quantizer_overhead_bits)

    @cached_property
    def noise_inflation(self) -> float:
        """
        Largest factor in [1, 2^(2 * overhead)] by which the test-channel noises can grow while every
        modelled subset distortion stays within DISTORTION_MARGIN of its ceiling; 1 when none can.
        """
        def fits(kappa: float) -> bool:
            params = inflate(self.params, kappa)
            return all(subset_distortion(params, m, self.scheme) <= DISTORTION_MARGIN * self.distortion_ceiling(m)
                       for m in SUBSET_SIZES)

        lo, hi = 1.0, 2 ** (2 * self.quantizer_overhead_bits)
        if not fits(lo):
            return lo
        if fits(hi):
            return hi
        for _ in range(INFLATION_STEPS):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if fits(mid) else (lo, mid)
        return lo

    @cached_property
    def coded_params(self) -> ChannelParams:
        """Test channels the quantizers realize."""
        return inflate(self.params, self.noise_inflation)

    @cached_property
    def model(self) -> CovarianceModel:
        return build_covariance(self.coded_params)

    def expected_distortion(self, m: int) -> float:
        return subset_distortion(self.coded_params, m, self.scheme)

    @cached_property
    def common_code(self) -> MDSCode:
        return MDSCode(self.n, 1)

    @cached_property
    def top_code(self) -> MDSCode:
        return MDSCode(self.n, TOP_DECODERS)

    @cached_property
    def repair_code(self) -> MDSCode:
        return MDSCode(self.n, self.n - 1)

    @property
    def top_protected(self) -> bool:
        """True when a lost top share cannot be rebuilt from the survivors' top shares alone."""
        return self.top_code.k == self.n

    @cached_property
    def common_quantizer(self) -> DitheredQuantizer:
        return DitheredQuantizer.for_noise_variance(self.coded_params.layers[0].sigma_u_sq)

    @cached_property
    def top_quantizer(self) -> DitheredQuantizer:
        return DitheredQuantizer.for_noise_variance(self.coded_params.top_sigma_sq)

    @cached_property
    def private_factor(self) -> np.ndarray:
        """Lower Cholesky factor of the private noise covariance, rows in quantization order."""
        layer = self.coded_params.layers[0]
        corr = np.full((self.n, self.n), layer.rho)
        np.fill_diagonal(corr, 1.0)
        return np.linalg.cholesky(layer.sigma_q_sq * corr)

    @cached_property
    def private_steps(self) -> np.ndarray:
        """Quantizer step of each position in the private quantization order."""
        return math.sqrt(12.0) * np.diag(self.private_factor)

    def positions(self, node_id: int) -> np.ndarray:
        """Position of node `node_id` in the private quantization order, per sample; the order rotates."""
        return (node_id - np.arange(self.block_len)) % self.n

    def context(self, labels: Sequence[str]) -> Tuple[VariableSet, np.ndarray, float]:
        """Stored codewords among `labels`, the LMMSE weights of the source given them and the residual variance."""
        observed = self.model.present(labels)
        if len(observed) == 0:
            return observed, np.zeros(0), 1.0
        return observed, lmmse_weights(self.model, observed), mmse_distortion(self.model, observed)

    @property
    def common_labels(self) -> List[str]:
        return [common_label(1)] if self.layer.has_common else []

    @property
    def top_context_labels(self) -> List[str]:
        """Codewords every decoder of the top stream holds before decoding it."""
        labels = self.common_labels
        if self.top_protected and self.layer.has_private:
            labels = labels + [private_label(1, i + 1) for i in range(self.n)]
        return labels

    @cached_property
    def private_context_variance(self) -> np.ndarray:
        """Variance of each position's quantizer input given the common codeword."""
        _, _, residual = self.context(self.common_labels)
        return residual + np.array([np.sum(self.private_factor[p, :p] ** 2) for p in range(self.n)])

    @cached_property
    def expected_rates(self) -> Dict[str, float]:
        """Coded bits per sample and node of each stored piece when the index models are exact."""
        rates = {}
        if self.layer.has_common:
            rates["common"] = expected_index_entropy(1.0 / self.common_quantizer.step)
        if self.layer.has_private:
            spreads = np.sqrt(self.private_context_variance) / self.private_steps
            rates["private"] = float(np.mean([expected_index_entropy(s) for s in spreads]))
        if self.params.has_top:
            _, _, residual = self.context(self.top_context_labels)
            rates["top"] = expected_index_entropy(math.sqrt(residual) / self.top_quantizer.step) / TOP_DECODERS
        protected = rates.get("private", 0.0) + (rates.get("top", 0.0) if self.top_protected else 0.0)
        if protected > 0:
            rates["repair"] = protected / (self.n - 1)
        return rates

    @cached_property
    def rate_budget(self) -> Dict[str, float]:
        """Information rate of each stored piece plus the quantizer overhead."""
        breakdown = rate_breakdown(self.params, self.scheme)
        terms = breakdown.layers[0]
        overhead = self.quantizer_overhead_bits
        return {"common": terms.common_rate + overhead,
                "private": terms.private_rate + overhead,
                "top": breakdown.top_rate + overhead,
                "repair": breakdown.r_repair + overhead}

    def _check_budget(self):
        over = [f"{piece} needs {bits:.4f} bits/sample, budget {self.rate_budget[piece]:.4f}"
                for piece, bits in self.expected_rates.items() if bits > self.rate_budget[piece]]
        if over:
            raise ConfigInfeasibleError(f"rate budget insufficient: {'; '.join(over)}")
        logger.debug("n=%d: noise inflation %.4f, coded rates %s", self.n, self.noise_inflation,
                     {piece: round(bits, 4) for piece, bits in self.expected_rates.items()})


@dataclass(frozen=True)
class NodeContent:
    node_id: int
    block_index: int
    common: bytes = b""
    private: bytes = b""
    top_share: bytes = b""
    repair_share: bytes = b""

    def to_bytes(self) -> bytes:
        """Stored bytes: layers in ascending order, repair parity last."""
        return self.common + self.private + self.top_share + self.repair_share

    @property
    def bits(self) -> int:
        return 8 * len(self.to_bytes())


@dataclass(frozen=True)
class _BlockRandomness:
    common: np.ndarray
    private: np.ndarray
    top: np.ndarray


def _stream(cfg: SimConfig, block_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, block_index, stream]))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@lru_cache(maxsize=DECODE_CACHE_SIZE)
def _dithers(cfg: SimConfig, block_index: int) -> _BlockRandomness:
    """Dithers shared by encoder and decoders of one block."""
    rng = _stream(cfg, block_index, DITHER_STREAM)
    size = cfg.block_len
    return _BlockRandomness(common=_frozen(draw_dither(rng, size)),
                            private=_frozen(np.stack([draw_dither(rng, size) for _ in range(cfg.n)])),
                            top=_frozen(draw_dither(rng, size)))


def draw_source(cfg: SimConfig, block_index: int) -> np.ndarray:
    return _stream(cfg, block_index, SOURCE_STREAM).standard_normal(cfg.block_len)


def _prediction(cfg: SimConfig, labels: Sequence[str], recovered: Dict[str, np.ndarray]) -> Tuple[Any, float]:
    """LMMSE prediction of the source from the recovered `labels` and its residual variance."""
    observed, weights, residual = cfg.context(labels)
    if len(observed) == 0:
        return 0.0, residual
    return weights @ np.stack([recovered[label] for label in observed]), residual


def _private_context(cfg: SimConfig, node_id: int, dither: np.ndarray,
                     common: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    positions = cfg.positions(node_id)
    steps = cfg.private_steps[positions]
    mean, _ = _prediction(cfg, cfg.common_labels, common)
    return mean / steps + dither, np.sqrt(cfg.private_context_variance[positions]) / steps


def _top_context(cfg: SimConfig, dither: np.ndarray, recovered: Dict[str, np.ndarray]) -> Tuple[np.ndarray, float]:
    step = cfg.top_quantizer.step
    mean, residual = _prediction(cfg, cfg.top_context_labels, recovered)
    return mean / step + dither, math.sqrt(residual) / step


def _quantize_private(x: np.ndarray, cfg: SimConfig, dithers: _BlockRandomness) -> Tuple[np.ndarray, np.ndarray]:
    """
    Indices and reconstructions of the n private quantizers.

    At sample t the quantizer at position p serves node (p + t) mod n and adds the normalized errors of
    the earlier positions through row p of the Cholesky factor, so the reconstruction errors have the
    private noise covariance.
    """
    n, t = cfg.n, np.arange(cfg.block_len)
    lower = cfg.private_factor
    errors = np.zeros((n, cfg.block_len))
    indices = np.zeros((n, cfg.block_len), dtype=np.int64)
    recon = np.zeros((n, cfg.block_len))
    for p in range(n):
        nodes = (p + t) % n
        dither = dithers.private[nodes, t]
        quantizer = DitheredQuantizer(cfg.private_steps[p])
        target = x + lower[p, :p] @ errors[:p]
        indices[nodes, t] = quantizer.quantize(target, dither)
        recon[nodes, t] = quantizer.dequantize(indices[nodes, t], dither)
        errors[p] = (recon[nodes, t] - target) / lower[p, p]
    return indices, recon


def encode_block(source: np.ndarray, cfg: SimConfig, block_index: int = 0) -> List[NodeContent]:
    """
    Quantizes one source block into the contents of all n nodes.

    Raises:
        InvalidParametersError: If the block length does not match cfg.block_len.
    """
    x = np.asarray(source, dtype=float)
    if x.shape != (cfg.block_len,):
        raise InvalidParametersError(f"source block must have shape ({cfg.block_len},), got {x.shape}")
    n = cfg.n
    dithers = _dithers(cfg, block_index)
    recovered = {}

    common = [b""] * n
    if cfg.layer.has_common:
        quantizer = cfg.common_quantizer
        indices = quantizer.quantize(x, dithers.common)
        common = cfg.common_code.encode(encode_indices(indices, dithers.common, 1.0 / quantizer.step))
        recovered[common_label(1)] = quantizer.dequantize(indices, dithers.common)

    private = [b""] * n
    if cfg.layer.has_private:
        indices, recon = _quantize_private(x, cfg, dithers)
        private = [encode_indices(indices[i], *_private_context(cfg, i, dithers.private[i], recovered))
                   for i in range(n)]
        recovered.update({private_label(1, i + 1): recon[i] for i in range(n)})

    top = [b""] * n
    if cfg.params.has_top:
        indices = cfg.top_quantizer.quantize(x, dithers.top)
        top = cfg.top_code.encode(encode_indices(indices, *_top_context(cfg, dithers.top, recovered)))

    nodes = [NodeContent(node_id=i, block_index=block_index, common=common[i], private=private[i], top_share=top[i])
             for i in range(n)]
    payloads = [_payload(node, cfg) for node in nodes]
    parity_length = cfg.repair_code.k * cfg.repair_code.share_length(max(len(p) for p in payloads))
    repair = cfg.repair_code.encode(_xor_padded(payloads, parity_length).tobytes())
    return [replace(node, repair_share=repair[node.node_id]) for node in nodes]


def _xor_padded(payloads: Sequence[bytes], length: int) -> np.ndarray:
    out = np.zeros(length, dtype=np.uint8)
    for payload in payloads:
        out[:len(payload)] ^= np.frombuffer(payload, dtype=np.uint8)
    return out


def _payload(node: NodeContent, cfg: SimConfig) -> bytes:
    """Bytes the repair parity protects: the length-prefixed private stream and an unprotected top share."""
    payload = len(node.private).to_bytes(LENGTH_BYTES, "big") + node.private if cfg.layer.has_private else b""
    return payload + (node.top_share if cfg.top_protected else b"")


@lru_cache(maxsize=DECODE_CACHE_SIZE)
def _decode_common(cfg: SimConfig, block_index: int, stream: bytes) -> np.ndarray:
    dither = _dithers(cfg, block_index).common
    quantizer = cfg.common_quantizer
    indices = decode_indices(stream, dither, 1.0 / quantizer.step)
    return _frozen(quantizer.dequantize(indices, dither))


@lru_cache(maxsize=DECODE_CACHE_SIZE)
def _decode_private(cfg: SimConfig, block_index: int, node_id: int, common: bytes, stream: bytes) -> np.ndarray:
    dither = _dithers(cfg, block_index).private[node_id]
    recovered = {common_label(1): _decode_common(cfg, block_index, common)} if cfg.layer.has_common else {}
    means, scales = _private_context(cfg, node_id, dither, recovered)
    steps = cfg.private_steps[cfg.positions(node_id)]
    return _frozen(DitheredQuantizer(steps).dequantize(decode_indices(stream, means, scales), dither))


@lru_cache(maxsize=DECODE_CACHE_SIZE)
def _decode_top(cfg: SimConfig, block_index: int, stream: bytes, common: bytes,
                private: Tuple[bytes, ...]) -> np.ndarray:
    dither = _dithers(cfg, block_index).top
    recovered = {common_label(1): _decode_common(cfg, block_index, common)} if cfg.layer.has_common else {}
    for node_id, data in enumerate(private):
        recovered[private_label(1, node_id + 1)] = _decode_private(cfg, block_index, node_id, common, data)
    indices = decode_indices(stream, *_top_context(cfg, dither, recovered))
    return _frozen(cfg.top_quantizer.dequantize(indices, dither))


def _check_nodes(nodes: Sequence[NodeContent], cfg: SimConfig):
    ids = [node.node_id for node in nodes]
    if len(set(ids)) != len(ids):
        raise InvalidParametersError(f"duplicate nodes {ids}")
    if any(not 0 <= i < cfg.n for i in ids):
        raise InvalidParametersError(f"node ids {ids} out of range for n={cfg.n}")
    if len({node.block_index for node in nodes}) > 1:
        raise InvalidParametersError("nodes belong to different blocks")


def _reconstructions(nodes: Sequence[NodeContent], cfg: SimConfig) -> Dict[str, np.ndarray]:
    """Dequantized codewords a decoder holding `nodes` can recover, keyed by model label."""
    block_index = nodes[0].block_index
    common = nodes[0].common
    out = {}
    if cfg.layer.has_common:
        out[common_label(1)] = _decode_common(cfg, block_index, common)
    if cfg.layer.has_private:
        for node in nodes:
            out[private_label(1, node.node_id + 1)] = _decode_private(cfg, block_index, node.node_id, common,
                                                                      node.private)
    if cfg.params.has_top and len(nodes) >= cfg.top_code.k:
        shares = {node.node_id: node.top_share for node in nodes}
        stream = cfg.top_code.decode(shares, len(nodes[0].top_share) * cfg.top_code.k)
        private = tuple(node.private for node in sorted(nodes, key=lambda node: node.node_id))
        out[top_labels(cfg.params)[0]] = _decode_top(cfg, block_index, stream, common,
                                                     private if cfg.top_protected else ())
    return out


def decode_subset(nodes: Sequence[NodeContent], cfg: SimConfig) -> np.ndarray:
    """
    Linear MMSE estimate of the source block from the contents of `nodes`.

    Raises:
        InvalidParametersError: If `nodes` is empty, larger than cfg.max_access, repeats a node or mixes blocks.
    """
    if not nodes:
        raise InvalidParametersError("cannot decode from an empty set of nodes")
    if len(nodes) > cfg.max_access:
        raise InvalidParametersError(f"a decoder reads at most {cfg.max_access} of {cfg.n} nodes, got {len(nodes)}")
    _check_nodes(nodes, cfg)
    recovered = _reconstructions(nodes, cfg)
    labels = VariableSet(tuple(recovered))
    weights = lmmse_weights(cfg.model, labels)
    return weights @ np.stack([recovered[label] for label in labels])


def repair_node(survivors: Sequence[NodeContent], failed_id: int, cfg: SimConfig) -> NodeContent:
    """
    Rebuilds the exact content of node `failed_id` from the other n - 1 nodes without decoding any stream.

    The common share is copied, the top share is rebuilt from the (n, 2) code when it has
    redundancy, and the repair parity share is rebuilt from the (n, n - 1) code. The failed
    payload is the decoded parity XOR the survivors' payloads; its length prefix gives the split.
    """
    if len(survivors) != cfg.n - 1:
        raise InvalidParametersError(f"repair needs exactly {cfg.n - 1} survivors, got {len(survivors)}")
    _check_nodes(survivors, cfg)
    if not 0 <= failed_id < cfg.n or any(node.node_id == failed_id for node in survivors):
        raise InvalidParametersError(f"node {failed_id} is not a missing node of n={cfg.n}")
    block_index = survivors[0].block_index

    def shares(field: str) -> Dict[int, bytes]:
        return {node.node_id: getattr(node, field) for node in survivors}

    share_len = len(survivors[0].repair_share)
    parity_length = share_len * cfg.repair_code.k
    parity = cfg.repair_code.decode(shares("repair_share"), parity_length)
    repair_share = cfg.repair_code.rebuild_share(shares("repair_share"), failed_id, parity_length)
    common = cfg.common_code.rebuild_share(shares("common"), failed_id, len(survivors[0].common))

    payload = (_xor_padded([_payload(node, cfg) for node in survivors], parity_length)
               ^ np.frombuffer(parity, dtype=np.uint8)).tobytes()
    private, offset = b"", 0
    if cfg.layer.has_private:
        private_len = int.from_bytes(payload[:LENGTH_BYTES], "big")
        offset = LENGTH_BYTES + private_len
        if offset > len(payload):
            raise InvalidParametersError(f"block {block_index}: repair parity is corrupt")
        private = payload[LENGTH_BYTES:offset]
    if cfg.top_protected:
        top_share = payload[offset:offset + len(survivors[0].top_share)]
    else:
        top_len = len(survivors[0].top_share) * cfg.top_code.k
        top_share = cfg.top_code.rebuild_share(shares("top_share"), failed_id, top_len)
    logger.debug("block %d: rebuilt node %d from %s", block_index, failed_id, sorted(shares("common")))
    return NodeContent(node_id=failed_id, block_index=block_index, common=common, private=private,
                       top_share=top_share, repair_share=repair_share)


def subset_errors(nodes: Sequence[NodeContent], source: np.ndarray,
                  cfg: SimConfig) -> Dict[Tuple[int, ...], np.ndarray]:
    """Per-sample squared error of every subset of each size in SUBSET_SIZES, keyed by sorted node ids."""
    ordered = sorted(nodes, key=lambda node: node.node_id)
    return {tuple(node.node_id for node in subset): (decode_subset(subset, cfg) - source) ** 2
            for m in SUBSET_SIZES for subset in itertools.combinations(ordered, m)}


def subset_distortions(nodes: Sequence[NodeContent], source: np.ndarray, cfg: SimConfig) -> Dict[int, float]:
    """Mean squared error averaged over every subset of each size in SUBSET_SIZES."""
    errors = subset_errors(nodes, source, cfg)
    return {m: float(np.mean([np.mean(err) for ids, err in errors.items() if len(ids) == m])) for m in SUBSET_SIZES}


def measured_noise_correlation(nodes: Sequence[NodeContent], source: np.ndarray, cfg: SimConfig) -> Optional[float]:
    """Average pairwise correlation of the private reconstruction errors, None without private codewords."""
    if not cfg.layer.has_private or cfg.block_len < 2:
        return None
    recovered = _reconstructions(sorted(nodes, key=lambda node: node.node_id), cfg)
    noises = np.stack([recovered[private_label(1, i + 1)] - source for i in range(cfg.n)])
    corr = np.corrcoef(noises)
    return float(corr[np.triu_indices(cfg.n, k=1)].mean())


def information_rates(cfg: SimConfig) -> RatePoint:
    """R and R_r the stored parameters need in theory (repair-node rates for two nodes)."""
    return repair_node_rates(cfg.params) if cfg.n == 2 else distributed_repair_rates(cfg.params)


@dataclass(frozen=True)
class TrialResult:
    distortions: Dict[int, float]
    exact: bool
    bits: float
    noise_correlation: Optional[float]


def run_trial(cfg: SimConfig, trial: int) -> TrialResult:
    """Encodes block `trial`, then fails and repairs every node in turn."""
    source = draw_source(cfg, trial)
    nodes = encode_block(source, cfg, block_index=trial)
    before = subset_distortions(nodes, source, cfg)
    exact = True
    for failed in range(cfg.n):
        survivors = [node for node in nodes if node.node_id != failed]
        repaired = repair_node(survivors, failed, cfg)
        after = subset_distortions(survivors + [repaired], source, cfg)
        if repaired != nodes[failed] or after != before:
            logger.warning("block %d: node %d was not repaired exactly", trial, failed)
            exact = False
    return TrialResult(distortions=before, exact=exact,
                       bits=float(np.mean([node.bits for node in nodes])),
                       noise_correlation=measured_noise_correlation(nodes, source, cfg))


@dataclass(frozen=True)
class SimReport:
    per_node_bits: float
    empirical_d: Dict[int, float]
    repair_exact: Tuple[bool, ...]
    trials: int
    seed: int
    measured_rho: Optional[float]
    block_len: int
    info_rate: float

    @property
    def repair_exact_rate(self) -> float:
        return sum(self.repair_exact) / len(self.repair_exact)

    @property
    def bits_per_sample(self) -> float:
        return self.per_node_bits / self.block_len

    def to_dict(self) -> Dict[str, Any]:
        return {"per_node_bits": self.per_node_bits,
                "empirical_d": {str(m): d for m, d in sorted(self.empirical_d.items())},
                "repair_exact_rate": self.repair_exact_rate,
                "repair_exact": list(self.repair_exact),
                "trials": self.trials,
                "seed": self.seed,
                "measured_rho": self.measured_rho,
                "block_len": self.block_len,
                "bits_per_sample": self.bits_per_sample,
                "info_rate": self.info_rate}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "SimReport":
        try:
            return cls(per_node_bits=float(doc["per_node_bits"]),
                       empirical_d={int(m): float(d) for m, d in doc["empirical_d"].items()},
                       repair_exact=tuple(bool(flag) for flag in doc["repair_exact"]),
                       trials=int(doc["trials"]),
                       seed=int(doc["seed"]),
                       measured_rho=None if doc["measured_rho"] is None else float(doc["measured_rho"]),
                       block_len=int(doc["block_len"]),
                       info_rate=float(doc["info_rate"]))
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise InvalidParametersError(f"malformed simulation report: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "SimReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise InvalidParametersError(f"malformed JSON: {e}") from e


def run_experiment(cfg: SimConfig, trials: int, workers: int = 1) -> SimReport:
    """
    Runs `trials` independent blocks and aggregates them in trial order.

    Raises:
        InvalidParametersError: If trials or workers is < 1.
    """
    if trials < 1 or workers < 1:
        raise InvalidParametersError(f"trials and workers must be >= 1, got {trials}, {workers}")
    logger.info("simulating n=%d, %d trials of %d samples (seed %d)", cfg.n, trials, cfg.block_len, cfg.seed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda trial: run_trial(cfg, trial), range(trials)))
    else:
        results = [run_trial(cfg, trial) for trial in range(trials)]

    correlations = [r.noise_correlation for r in results if r.noise_correlation is not None]
    report = SimReport(
        per_node_bits=float(np.mean([r.bits for r in results])),
        empirical_d={m: float(np.mean([r.distortions[m] for r in results])) for m in SUBSET_SIZES},
        repair_exact=tuple(r.exact for r in results),
        trials=trials,
        seed=cfg.seed,
        measured_rho=float(np.mean(correlations)) if correlations else None,
        block_len=cfg.block_len,
        info_rate=information_rates(cfg).r_total)
    if not math.isclose(report.repair_exact_rate, 1.0):
        logger.warning("exact repair failed in %d of %d trials", trials - sum(report.repair_exact), trials)
    logger.info("bits/sample %.4f (information rate %.4f), d1 %.6f, d2 %.6f", report.bits_per_sample,
                report.info_rate, report.empirical_d[1], report.empirical_d[2])
    return report
