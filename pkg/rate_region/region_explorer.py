"""
Numerical searches on top of the closed forms and the entropy engine: regime-wise minimization of
the three-node total rate, an exhaustive grid oracle, and d2 sweeps of every rate curve.
"""
import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from rate_region.closed_form import (check_common_message, correlation_boundary, private_variance_for,
                                     three_node_no_repair_rate, three_node_regime_params, three_node_regime_rates,
                                     tight_top_variance, two_node_ec_baseline, two_node_optimal)
from rate_region.constants import (CSV_HEADER, FLOAT_SIG_DIGITS, ORACLE_MAX_POINTS, ORACLE_RHO_POINTS,
                                   ORACLE_SIGMA_POINTS, ORACLE_SLACK, ORACLE_TIE_TOL, ORACLE_TOP_POINTS,
                                   ORACLE_VARIANCE_RANGE, RHO_EPS)
from rate_region.entropy_engine import distributed_repair_rates, repair_node_rates, subset_distortion
from rate_region.errors import DegenerateConditioningError, InvalidParametersError, NoFeasiblePointError
from rate_region.models import INF, ChannelParams, DistortionSpec, LayerParams, RatePoint, Regime, Scheme
from rate_region.optimizer import OptimizerConfig, minimize_scalar

logger = logging.getLogger(__name__)

__all__ = ["CURVES", "OptimizerConfig", "OracleGrid", "SweepResult", "SweepRow", "brute_force_oracle",
           "minimize_scalar", "sweep", "three_node_optimal", "three_node_regime_optima"]

CURVES = ("EC2", "PRP3", "ModifiedPRP3", "Repair3NoCommon", "Repair3Common", "TwoNodeOptimalTotal")

THREE_NODE_RHO_RANGE = (-0.5 + RHO_EPS, 1 - RHO_EPS)


def _regime_interval(spec: DistortionSpec, regime: Regime) -> Optional[Tuple[float, float]]:
    """The part of (-1/2, 1) on which `regime` is valid, inset by RHO_EPS at open ends."""
    lo, hi = THREE_NODE_RHO_RANGE
    boundary = correlation_boundary(spec)
    if regime is Regime.CORRELATION_ONLY:
        hi = min(hi, boundary)
    elif regime is Regime.COMMON_MESSAGE:
        hi = min(hi, boundary - RHO_EPS)
    else:
        lo = max(lo, boundary + RHO_EPS)
    if not lo < hi:
        return None
    return lo, hi


def _regime_search(spec: DistortionSpec, regime: Regime, cfg: OptimizerConfig) -> Optional[Tuple[float, float]]:
    interval = _regime_interval(spec, regime)
    if interval is None:
        logger.warning("regime %s has no valid rho for d1=%g, d2=%g", regime.value, spec.d1, spec.d2)
        return None

    def total(rho: float) -> float:
        value = three_node_regime_rates(spec, rho)[regime]
        return INF if value is None else value

    try:
        return minimize_scalar(total, *interval, cfg)
    except NoFeasiblePointError:
        logger.warning("regime %s is infeasible on [%.6g, %.6g]", regime.value, *interval)
        return None


def three_node_regime_optima(spec: DistortionSpec,
                             cfg: OptimizerConfig = OptimizerConfig()) -> Dict[Regime, Optional[RatePoint]]:
    """
    Minimizes the three-node total rate within each regime.

    The closed forms locate the best rho; R and R_r at that point come from the entropy engine.
    The COMMON_MESSAGE optimum is also checked against its transcribed closed form and flagged
    as transcription_divergent when the two disagree.
    Regimes without a valid rho map to None.
    """
    optima: Dict[Regime, Optional[RatePoint]] = {}
    for regime in Regime:
        found = _regime_search(spec, regime, cfg)
        if found is None:
            optima[regime] = None
            continue
        rho, total = found
        params = three_node_regime_params(spec, rho, regime)
        point = distributed_repair_rates(params)
        divergent = False
        if regime is Regime.COMMON_MESSAGE:
            check = check_common_message(spec, rho)
            divergent = check is not None and check.divergent
        optima[regime] = replace(point, regime=regime, transcription_divergent=divergent)
        logger.info("regime %s: rho=%.9g r=%.9g r_repair=%.9g (closed-form total %.9g)",
                    regime.value, rho, point.r, point.r_repair, total)
    return optima


def three_node_optimal(spec: DistortionSpec, cfg: OptimizerConfig = OptimizerConfig()) -> RatePoint:
    candidates = [point for point in three_node_regime_optima(spec, cfg).values() if point is not None]
    if not candidates:
        raise NoFeasiblePointError(f"no three-node regime is feasible for d1={spec.d1}, d2={spec.d2}")
    return min(candidates, key=lambda point: point.r_total)


@dataclass(frozen=True)
class OracleGrid:
    """
    Attributes:
        rho_points (int): Evenly spaced rho values over the open PSD range (0 and the rho that meets
            d2 exactly are always added).
        sigma_points (int): Log-spaced common-noise variances (the absent codeword is always added).
        top_points (int): Log-spaced top-codeword variances (absent and tight values are always added).
        variance_range (tuple): Bounds of the log-spaced variance grids.
        slack (float): Allowed excess over each distortion target.
        workers (int): Threads evaluating the common-noise columns of the grid.
    """
    rho_points: int = ORACLE_RHO_POINTS
    sigma_points: int = ORACLE_SIGMA_POINTS
    top_points: int = ORACLE_TOP_POINTS
    variance_range: Tuple[float, float] = ORACLE_VARIANCE_RANGE
    slack: float = ORACLE_SLACK
    workers: int = 1

    def __post_init__(self):
        if self.rho_points < 2 or self.sigma_points < 1 or self.top_points < 0:
            raise InvalidParametersError(
                f"oracle grid needs rho_points >= 2, sigma_points >= 1, top_points >= 0, got "
                f"{self.rho_points}, {self.sigma_points}, {self.top_points}")
        lo, hi = self.variance_range
        if not 0 < lo < hi:
            raise InvalidParametersError(f"variance_range must satisfy 0 < lo < hi, got {self.variance_range}")
        if self.slack < 0 or self.workers < 1:
            raise InvalidParametersError(f"slack must be >= 0 and workers >= 1, got {self.slack}, {self.workers}")
        if self.size > ORACLE_MAX_POINTS:
            raise InvalidParametersError(f"oracle grid has {self.size} points, more than {ORACLE_MAX_POINTS}")

    @property
    def size(self) -> int:
        return (self.rho_points + 2) * (self.sigma_points + 1) * (self.top_points + 2)

    def rho_values(self, n: int) -> np.ndarray:
        grid = np.linspace(-1.0 / (n - 1) + RHO_EPS, 1 - RHO_EPS, self.rho_points)
        return np.union1d(grid, [0.0])

    def sigma_values(self) -> np.ndarray:
        return np.append(np.geomspace(*self.variance_range, self.sigma_points), INF)

    def top_values(self) -> np.ndarray:
        return np.geomspace(*self.variance_range, self.top_points)


def _better(candidate: RatePoint, best: Optional[RatePoint], objective: Scheme) -> bool:
    if best is None:
        return True
    primary = (lambda p: p.r_total) if objective is Scheme.DISTRIBUTED else (lambda p: p.r)
    gap = primary(candidate) - primary(best)
    if gap < -ORACLE_TIE_TOL:
        return True
    return abs(gap) <= ORACLE_TIE_TOL and candidate.r_repair < best.r_repair


def _tight_rho(d2: float, residual: float, sigma_q: float, n: int) -> Optional[float]:
    """rho at which two private codewords on top of the common residual meet d2 exactly."""
    gap = 1.0 / d2 - 1.0 / residual
    if gap <= 0:
        return None
    rho = 2.0 / (sigma_q * gap) - 1.0
    if not -1.0 / (n - 1) + RHO_EPS <= rho <= 1 - RHO_EPS:
        return None
    return rho


def _oracle_column(spec: DistortionSpec, n: int, sigma_u: float, grid: OracleGrid,
                   objective: Scheme) -> Optional[RatePoint]:
    d1, d2 = spec.targets
    scheme = Scheme.REPAIR_NODE if n == 2 else Scheme.DISTRIBUTED
    rates = repair_node_rates if n == 2 else distributed_repair_rates
    residual = 1.0 if math.isinf(sigma_u) else sigma_u / (1.0 + sigma_u)
    if residual <= d1:
        sigma_q, rhos = INF, [0.0]
    else:
        sigma_q = private_variance_for(d1, sigma_u)
        rhos = list(grid.rho_values(n))
        tight = _tight_rho(d2, residual, sigma_q, n)
        if tight is not None:
            rhos.append(tight)

    best = None
    for rho in rhos:
        try:
            base = ChannelParams(n=n, layers=(LayerParams(sigma_u_sq=sigma_u, sigma_q_sq=sigma_q, rho=float(rho)),))
            if subset_distortion(base, 1, scheme) > d1 + grid.slack:
                continue
            d2_without_top = subset_distortion(base, 2, scheme)
        except (InvalidParametersError, DegenerateConditioningError):
            continue
        tops = {INF, tight_top_variance(d2, d2_without_top), *grid.top_values()}
        for top in sorted(tops):
            d2_actual = d2_without_top if math.isinf(top) else 1.0 / (1.0 / d2_without_top + 1.0 / top)
            if d2_actual > d2 + grid.slack:
                continue
            try:
                point = rates(replace(base, top_sigma_sq=float(top)))
            except DegenerateConditioningError:
                continue
            if _better(point, best, objective):
                best = point
    return best


def brute_force_oracle(spec: DistortionSpec, n: int, grid: OracleGrid = OracleGrid(),
                       objective: Scheme = Scheme.DISTRIBUTED) -> RatePoint:
    """
    Exhaustive search over common noise, private correlation and top noise.

    The private noise is solved so that one node meets d1 exactly. Two nodes use the repair-node
    rates, three nodes the distributed repair rates. With the DISTRIBUTED objective the smallest
    r_total wins; with REPAIR_NODE the smallest r. Ties go to the smaller r_repair.

    Raises:
        InvalidParametersError: If n is not 2 or 3, or the objective is unsupported.
        NoFeasiblePointError: If no grid point meets both targets.
    """
    if n not in (2, 3):
        raise InvalidParametersError(f"the oracle covers n=2 and n=3, got n={n}")
    if objective not in (Scheme.DISTRIBUTED, Scheme.REPAIR_NODE):
        raise InvalidParametersError(f"unsupported oracle objective {objective.value}")

    def column(sigma_u: float) -> Optional[RatePoint]:
        return _oracle_column(spec, n, float(sigma_u), grid, objective)

    sigmas = grid.sigma_values()
    logger.info("oracle n=%d d1=%g d2=%g over at most %d points", n, spec.d1, spec.d2, grid.size)
    if grid.workers > 1:
        with ThreadPoolExecutor(max_workers=grid.workers) as pool:
            columns = list(pool.map(column, sigmas))
    else:
        columns = [column(sigma_u) for sigma_u in sigmas]

    best = None
    for point in columns:
        if point is not None and _better(point, best, objective):
            best = point
    if best is None:
        raise NoFeasiblePointError(f"no grid point meets d1={spec.d1}, d2={spec.d2} for n={n}")
    return best


@dataclass(frozen=True)
class SweepRow:
    d2: float
    rates: Dict[str, float]

    def __getitem__(self, curve: str) -> float:
        return self.rates[curve]


@dataclass
class SweepResult:
    d1: float
    rows: List[SweepRow]
    metadata: Dict[str, str] = field(default_factory=dict)

    def column(self, curve: str) -> np.ndarray:
        return np.array([row[curve] for row in self.rows])

    @property
    def d2_values(self) -> np.ndarray:
        return np.array([row.d2 for row in self.rows])

    def to_csv(self) -> str:
        out = io.StringIO()
        for key, value in self.metadata.items():
            out.write(f"# {key}: {value}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([_format_float(row.d2)] + [_format_float(row[curve]) for curve in CURVES])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        metadata, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                metadata[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
        reader = csv.reader(body)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InvalidParametersError(f"unexpected sweep header {header}")
        try:
            rows = [SweepRow(d2=float(record[0]), rates=dict(zip(CURVES, map(float, record[1:]))))
                    for record in reader]
            d1 = float(metadata["d1"])
        except (KeyError, ValueError, IndexError) as e:
            raise InvalidParametersError(f"malformed sweep CSV: {e}") from e
        return cls(d1=d1, rows=rows, metadata=metadata)


def _format_float(value: float) -> str:
    return format(value, f".{FLOAT_SIG_DIGITS}g")


def _minimize_over_rho(f: Callable[[float], float], cfg: OptimizerConfig) -> float:
    return minimize_scalar(f, *THREE_NODE_RHO_RANGE, cfg)[1]


def _best_regime_total(spec: DistortionSpec, regimes: Iterable[Regime], cfg: OptimizerConfig) -> float:
    totals = [found[1] for found in (_regime_search(spec, regime, cfg) for regime in regimes) if found is not None]
    if not totals:
        raise NoFeasiblePointError(f"no regime is feasible for d1={spec.d1}, d2={spec.d2}")
    return min(totals)


def sweep_row(spec: DistortionSpec, cfg: OptimizerConfig = OptimizerConfig()) -> SweepRow:
    rates = {
        "EC2": two_node_ec_baseline(spec, cfg),
        "PRP3": _minimize_over_rho(lambda rho: three_node_no_repair_rate(spec, rho, modified=False), cfg),
        "ModifiedPRP3": _minimize_over_rho(lambda rho: three_node_no_repair_rate(spec, rho, modified=True), cfg),
        "Repair3NoCommon": _best_regime_total(spec, (Regime.CORRELATION_ONLY, Regime.RESOLUTION_INFO), cfg),
        "Repair3Common": _best_regime_total(spec, tuple(Regime), cfg),
        "TwoNodeOptimalTotal": two_node_optimal(spec).r_total,
    }
    logger.debug("sweep row d2=%g: %s", spec.d2, rates)
    return SweepRow(d2=spec.d2, rates=rates)


def sweep(d1: float, d2_grid: Sequence[float], cfg: OptimizerConfig = OptimizerConfig()) -> SweepResult:
    """
    Every rate curve at each d2 in `d2_grid`, rows ordered by d2.

    Rows are independent; with cfg.workers > 1 they are computed on a thread pool and collected in
    order, so the result does not depend on scheduling.
    """
    specs = [DistortionSpec(d1=d1, d2=float(d2)) for d2 in sorted(d2_grid)]
    if not specs:
        raise InvalidParametersError("d2 grid is empty")
    logger.info("sweeping %d values of d2 at d1=%g", len(specs), d1)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda spec: sweep_row(spec, cfg), specs))
    else:
        rows = [sweep_row(spec, cfg) for spec in specs]
    metadata = {"d1": _format_float(d1),
                "grid_points": str(cfg.grid_points),
                "refine_iters": str(cfg.refine_iters),
                "tol": str(cfg.tol),
                "rho_eps": str(RHO_EPS)}
    return SweepResult(d1=d1, rows=rows, metadata=metadata)
