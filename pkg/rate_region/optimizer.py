import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from rate_region.constants import (DEFAULT_GRID_POINTS, DEFAULT_REFINE_ITERS, DEFAULT_TOL, GOLDEN_RATIO,
                                   MIN_GRID_POINTS)
from rate_region.errors import InvalidParametersError, NoFeasiblePointError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Attributes:
        grid_points (int): Points of the coarse scan over [lo, hi].
        refine_iters (int): Maximum golden-section iterations around the best grid cell.
        tol (float): Stop refining once the bracket is narrower than this.
        workers (int): Threads used by callers that evaluate independent problems (sweep rows,
            oracle chunks). 1 runs everything inline.
    """
    grid_points: int = DEFAULT_GRID_POINTS
    refine_iters: int = DEFAULT_REFINE_ITERS
    tol: float = DEFAULT_TOL
    workers: int = 1

    def __post_init__(self):
        if self.grid_points < MIN_GRID_POINTS:
            raise InvalidParametersError(f"grid_points must be >= {MIN_GRID_POINTS}, got {self.grid_points}")
        if self.refine_iters < 0:
            raise InvalidParametersError(f"refine_iters must be >= 0, got {self.refine_iters}")
        if not self.tol > 0:
            raise InvalidParametersError(f"tol must be > 0, got {self.tol}")
        if self.workers < 1:
            raise InvalidParametersError(f"workers must be >= 1, got {self.workers}")


def _safe(f: Callable[[float], float], x: float) -> float:
    value = f(x)
    if value is None or math.isnan(value):
        return math.inf
    return float(value)


def minimize_scalar(f: Callable[[float], float], lo: float, hi: float,
                    cfg: OptimizerConfig = OptimizerConfig()) -> Tuple[float, float]:
    """
    Grid scan followed by golden-section refinement of the best grid cell.

    Points where `f` is undefined should return +inf (NaN and None are treated the same way).

    Returns:
        tuple: (argmin, min) of the best point evaluated.

    Raises:
        InvalidParametersError: If lo >= hi.
        NoFeasiblePointError: If `f` is +inf on every grid point.
    """
    if not lo < hi:
        raise InvalidParametersError(f"search interval is empty: lo={lo}, hi={hi}")
    grid = np.linspace(lo, hi, cfg.grid_points)
    values = np.array([_safe(f, x) for x in grid])
    if not np.isfinite(values).any():
        raise NoFeasiblePointError(f"objective is infinite on all {cfg.grid_points} points of [{lo}, {hi}]")

    best = int(np.argmin(values))
    best_x, best_f = float(grid[best]), float(values[best])
    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, len(grid) - 1)])

    c = b - GOLDEN_RATIO * (b - a)
    d = a + GOLDEN_RATIO * (b - a)
    fc, fd = _safe(f, c), _safe(f, d)
    for _ in range(cfg.refine_iters):
        if abs(b - a) < cfg.tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN_RATIO * (b - a)
            fc = _safe(f, c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN_RATIO * (b - a)
            fd = _safe(f, d)
        for x, fx in ((c, fc), (d, fd)):
            if fx < best_f:
                best_x, best_f = x, fx

    for x, fx in ((c, fc), (d, fd)):
        if fx < best_f:
            best_x, best_f = x, fx
    logger.debug("minimize_scalar on [%.6g, %.6g]: argmin=%.12g min=%.12g", lo, hi, best_x, best_f)
    return best_x, best_f
