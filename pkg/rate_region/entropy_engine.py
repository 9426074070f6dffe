"""
Joint Gaussian covariance models of the symmetric test channels and the differential-entropy
rate expressions evaluated on them.

Variables are labelled "X" (the unit-variance source), "U{k}" (common codeword of layer k),
"Y{k}_{i}" (private codeword of layer k at node i) and "Y{L+1}" (the single top codeword that
follows the L layers; "Y{L+1}_{j}" when several independent top codewords are generated).
Variables whose noise variance is +inf are not part of the model.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from rate_region.constants import LOG2_2PIE, MI_CLAMP_TOL, PIVOT_TOL, PSD_TOL
from rate_region.errors import DegenerateConditioningError, InvalidParametersError
from rate_region.models import ChannelParams, LayerTerms, RateBreakdown, RatePoint, Scheme, clamp_rate

logger = logging.getLogger(__name__)

SOURCE = "X"


@dataclass(frozen=True)
class VariableSet:
    """An ordered selection of model labels without duplicates."""
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise InvalidParametersError(f"duplicate labels in variable set {labels}")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def isdisjoint(self, other: "VariableSet") -> bool:
        return set(self.labels).isdisjoint(other.labels)


def variables(*labels: str) -> VariableSet:
    return VariableSet(tuple(labels))


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    labels: Tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "_index", {label: i for i, label in enumerate(self.labels)})
        if matrix.shape != (len(self.labels), len(self.labels)):
            raise InvalidParametersError(f"matrix shape {matrix.shape} does not match {len(self.labels)} labels")
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
            raise InvalidParametersError("covariance matrix must be symmetric")
        smallest = float(np.linalg.eigvalsh(matrix).min())
        if smallest < -PSD_TOL:
            raise InvalidParametersError(f"covariance matrix is not positive semidefinite (smallest eigenvalue {smallest:.6g})")

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def indices(self, labels: Iterable[str]) -> List[int]:
        try:
            return [self._index[label] for label in labels]
        except KeyError as e:
            raise InvalidParametersError(f"label {e.args[0]!r} is not in the model {self.labels}") from e

    def present(self, labels: Iterable[str]) -> VariableSet:
        """The subset of `labels` that the model carries, in the given order."""
        return VariableSet(tuple(label for label in labels if label in self._index))

    def block(self, rows: VariableSet, cols: VariableSet) -> np.ndarray:
        return self.matrix[np.ix_(self.indices(rows), self.indices(cols))]


def common_label(k: int) -> str:
    return f"U{k}"


def private_label(k: int, node: int) -> str:
    return f"Y{k}_{node}"


def top_labels(params: ChannelParams) -> List[str]:
    level = len(params.layers) + 1
    if params.top_codewords == 1:
        return [f"Y{level}"]
    return [f"Y{level}_{j}" for j in range(1, params.top_codewords + 1)]


def build_covariance(params: ChannelParams) -> CovarianceModel:
    """
    Builds the joint covariance of the source and every stored codeword.

    Every codeword is the source plus noise, so all pairwise covariances start at 1 (the source
    variance). Noise adds sigma_u_sq on the diagonal for U_k, sigma_q_sq * ((1 - rho) I + rho J)
    on the private block of layer k, and top_sigma_sq on the diagonal of each top codeword.
    Noises of different layers are uncorrelated; absent codewords are left out.
    """
    labels = [SOURCE]
    noise_blocks = []
    for k, layer in enumerate(params.layers, start=1):
        if layer.has_common:
            noise_blocks.append((len(labels), np.array([[layer.sigma_u_sq]])))
            labels.append(common_label(k))
        if layer.has_private:
            corr = np.full((params.n, params.n), layer.rho)
            np.fill_diagonal(corr, 1.0)
            noise_blocks.append((len(labels), layer.sigma_q_sq * corr))
            labels.extend(private_label(k, i) for i in range(1, params.n + 1))
    if params.has_top:
        names = top_labels(params)
        noise_blocks.append((len(labels), params.top_sigma_sq * np.eye(len(names))))
        labels.extend(names)

    matrix = np.ones((len(labels), len(labels)))
    for start, block in noise_blocks:
        stop = start + block.shape[0]
        matrix[start:stop, start:stop] += block
    return CovarianceModel(tuple(labels), matrix)


def _factor(sigma: np.ndarray, what: str) -> np.ndarray:
    try:
        lower = cholesky(sigma, lower=True, check_finite=False)
    except LinAlgError as e:
        raise DegenerateConditioningError(f"{what} is singular or indefinite") from e
    pivots = np.diag(lower) ** 2
    if pivots.min() < PIVOT_TOL:
        raise DegenerateConditioningError(f"{what} is singular (pivot {pivots.min():.3g} < {PIVOT_TOL})")
    return lower


def conditional_covariance(model: CovarianceModel, a: VariableSet, b: VariableSet) -> np.ndarray:
    """Schur complement Sigma_aa - Sigma_ab Sigma_bb^-1 Sigma_ba."""
    sigma_aa = model.block(a, a)
    if len(b) == 0:
        return sigma_aa
    lower = _factor(model.block(b, b), f"covariance of {b.labels}")
    whitened = solve_triangular(lower, model.block(b, a), lower=True, check_finite=False)
    schur = sigma_aa - whitened.T @ whitened
    return (schur + schur.T) / 2


def cond_entropy(model: CovarianceModel, a: VariableSet, b: VariableSet = VariableSet()) -> float:
    """
    Differential entropy h(a | b) in bits: 1/2 log2((2 pi e)^|a| det Sigma_{a|b}).

    Raises:
        InvalidParametersError: If `a` is empty or overlaps `b`.
        DegenerateConditioningError: If Sigma_bb or the conditional covariance is singular.
    """
    if len(a) == 0:
        raise InvalidParametersError("cond_entropy needs a nonempty variable set")
    if not a.isdisjoint(b):
        raise InvalidParametersError(f"variable sets {a.labels} and {b.labels} overlap")
    lower = _factor(conditional_covariance(model, a, b), f"conditional covariance of {a.labels} given {b.labels}")
    logdet2 = 2.0 * np.sum(np.log2(np.diag(lower)))
    return 0.5 * (len(a) * LOG2_2PIE + logdet2)


def mutual_information(model: CovarianceModel, a: VariableSet, b: VariableSet) -> float:
    """I(a; b) = h(a) - h(a | b), with round-off negatives clamped to zero."""
    if len(a) == 0 or len(b) == 0:
        return 0.0
    value = cond_entropy(model, a) - cond_entropy(model, a, b)
    if -MI_CLAMP_TOL < value < 0:
        return 0.0
    return value


def mmse_distortion(model: CovarianceModel, observed: VariableSet) -> float:
    """Var(X | observed) = 1 - Sigma_xo Sigma_oo^-1 Sigma_ox."""
    if len(observed) == 0:
        raise InvalidParametersError("mmse_distortion needs at least one observed variable")
    if SOURCE in observed.labels:
        raise InvalidParametersError("the source itself cannot be observed")
    return float(conditional_covariance(model, variables(SOURCE), observed)[0, 0])


def lmmse_weights(model: CovarianceModel, observed: VariableSet) -> np.ndarray:
    """Weights w with E[X | observed] = w @ observed (all variables zero mean)."""
    lower = _factor(model.block(observed, observed), f"covariance of {observed.labels}")
    rhs = model.block(observed, variables(SOURCE))[:, 0]
    return solve_triangular(lower.T, solve_triangular(lower, rhs, lower=True, check_finite=False),
                            lower=False, check_finite=False)


class _Terms:
    """Entropy bookkeeping for one model; absent labels silently drop out of every set."""

    def __init__(self, params: ChannelParams):
        self.params = params
        self.model = build_covariance(params)
        self.n = params.n

    def h(self, a: Iterable[str], b: Iterable[str] = ()) -> float:
        a_set = self.model.present(a)
        if len(a_set) == 0:
            return 0.0
        return cond_entropy(self.model, a_set, self.model.present(b))

    def common(self, upto: int) -> List[str]:
        return [common_label(j) for j in range(1, upto + 1)]

    def private(self, k: int, nodes: Sequence[int]) -> List[str]:
        return [private_label(k, i) for i in nodes]

    def private_below(self, k: int, nodes: Sequence[int]) -> List[str]:
        return [label for j in range(1, k) for label in self.private(j, nodes)]

    def layer(self, k: int) -> LayerTerms:
        n = self.n
        nodes_k, all_nodes = range(1, k + 1), range(1, n + 1)
        u_k, u_before, u_upto = [common_label(k)], self.common(k - 1), self.common(k)
        own = self.private(k, all_nodes)
        earlier_all = self.private_below(k, all_nodes)

        encoder_side = [SOURCE] + earlier_all + u_upto
        h_private_joint = self.h(own, encoder_side)

        common_rate = (self.h(u_k, self.private_below(k, nodes_k) + u_before)
                       - self.h(u_k, [SOURCE] + earlier_all + u_before)) / k
        common_codebook = self.h(u_k) - self.h(u_k, [SOURCE] + earlier_all + u_before)

        if len(self.model.present(own)) == 0:
            private_rate = repair_term = private_codebook = 0.0
        else:
            private_rate = (self.h(self.private(k, nodes_k), u_upto + self.private_below(k, nodes_k)) / k
                            - h_private_joint / n)
            repair_term = (self.h([private_label(k, n)], u_upto + self.private(k, range(1, n)) + earlier_all)
                           - h_private_joint / n)
            private_codebook = (sum(self.h([label]) for label in own) - h_private_joint) / n
        return LayerTerms(layer=k, common_rate=clamp_rate(common_rate), private_rate=clamp_rate(private_rate),
                          repair_term=repair_term, common_codebook_rate=clamp_rate(common_codebook),
                          private_codebook_rate=clamp_rate(private_codebook))

    def top(self, decoders: int) -> float:
        """Rate of the top codeword(s) decoded from `decoders` nodes, binned over them."""
        layers = len(self.params.layers)
        names = top_labels(self.params)
        if not self.params.has_top:
            return 0.0
        decoder_side = [label for k in range(1, layers + 1) for label in self.private(k, range(1, decoders + 1))]
        decoder_side += self.common(layers)
        encoder_side = ([SOURCE] + [label for k in range(1, layers + 1) for label in self.private(k, range(1, self.n + 1))]
                        + self.common(layers))
        # independently generated top codewords are decoded one by one
        decoded = sum(self.h([name], decoder_side) for name in names)
        return clamp_rate((decoded - self.h(names, encoder_side)) / decoders)


def _expected_layers(params: ChannelParams, scheme: Scheme) -> int:
    return params.n - 1 if scheme is Scheme.REPAIR_NODE else params.n - 2


def rate_breakdown(params: ChannelParams, scheme: Scheme) -> RateBreakdown:
    """
    Evaluates a rate expression term by term.

    DISTRIBUTED: layers k = 1..n-2 plus a top codeword decoded from n - 1 nodes; every node stores
    1/(n-1) of the repair information. REPAIR_NODE: layers k = 1..n-1 plus a top codeword decoded
    from all n nodes; a dedicated node stores the layer repair terms and the top-codeword rate.
    MODIFIED_PRP: the distributed operational rate without common codewords and without repair.
    """
    n = params.n
    if scheme is not Scheme.REPAIR_NODE and n < 3:
        raise InvalidParametersError(f"the {scheme.value} scheme needs n >= 3, got n={n}")
    expected = _expected_layers(params, scheme)
    if len(params.layers) != expected:
        raise InvalidParametersError(f"the {scheme.value} scheme with n={n} needs {expected} layers, got {len(params.layers)}")
    if scheme is Scheme.MODIFIED_PRP and params.has_common:
        raise InvalidParametersError("the modified PRP scheme has no common codewords")

    terms = _Terms(params)
    layers = tuple(terms.layer(k) for k in range(1, expected + 1))
    operational = sum(t.common_rate + t.private_rate for t in layers)
    repair = sum(max(t.repair_term, 0.0) for t in layers)

    if scheme is Scheme.REPAIR_NODE:
        top_rate = terms.top(n)
        r, r_repair = operational + top_rate, repair + top_rate
    else:
        top_rate = terms.top(n - 1)
        r = operational + top_rate
        r_repair = repair / (n - 1) if scheme is Scheme.DISTRIBUTED else 0.0
    logger.debug("%s n=%d: r=%.9g r_repair=%.9g", scheme.value, n, r, r_repair)
    return RateBreakdown(scheme=scheme, n=n, layers=layers, top_rate=top_rate,
                         r=clamp_rate(r), r_repair=clamp_rate(r_repair))


def distributed_repair_rates(params: ChannelParams) -> RatePoint:
    """R and R_r when repair information is spread over the n nodes (n >= 3)."""
    return rate_breakdown(params, Scheme.DISTRIBUTED).to_rate_point(params)


def repair_node_rates(params: ChannelParams) -> RatePoint:
    """R and R_r when one collaborating repair node holds the repair information (n >= 2)."""
    return rate_breakdown(params, Scheme.REPAIR_NODE).to_rate_point(params)


def modified_prp_rate(params: ChannelParams) -> float:
    """Per-node rate of the layered scheme with a single top codeword and no repair (n >= 3)."""
    return rate_breakdown(params, Scheme.MODIFIED_PRP).r


def top_decoding_size(params: ChannelParams, scheme: Scheme) -> int:
    return params.n if scheme is Scheme.REPAIR_NODE else params.n - 1


def observed_labels(params: ChannelParams, m: int, scheme: Scheme) -> List[str]:
    """Codewords a decoder holding nodes 1..m can recover."""
    labels = []
    for k, layer in enumerate(params.layers, start=1):
        if k > m:
            break
        if layer.has_common:
            labels.append(common_label(k))
        if layer.has_private:
            labels.extend(private_label(k, i) for i in range(1, m + 1))
    if params.has_top and m >= top_decoding_size(params, scheme):
        labels.extend(top_labels(params))
    return labels


def subset_distortion(params: ChannelParams, m: int, scheme: Scheme = Scheme.DISTRIBUTED) -> float:
    """MMSE of the source from any m nodes (1 when nothing is decodable)."""
    if not 1 <= m <= params.n:
        raise InvalidParametersError(f"subset size must lie in [1, {params.n}], got {m}")
    labels = observed_labels(params, m, scheme)
    if not labels:
        return 1.0
    model = build_covariance(params)
    return mmse_distortion(model, VariableSet(tuple(labels)))


def distortion_profile(params: ChannelParams, scheme: Scheme) -> Dict[int, float]:
    """Subset distortions for m = 1 up to the top decoding size of `scheme` (at least 2, at most n)."""
    largest = min(params.n, max(2, top_decoding_size(params, scheme)))
    return {m: subset_distortion(params, m, scheme) for m in range(1, largest + 1)}


def gaussian_entropy_bits(variance: float) -> float:
    return 0.5 * math.log2(2 * math.pi * math.e * variance)
