"""
Subtractively dithered uniform scalar quantizer.
"""
import math
from typing import Union

import numpy as np

from rate_region.errors import ConfigInfeasibleError

Step = Union[float, np.ndarray]


class DitheredQuantizer:
    """
    Uniform quantizer with step `step`, a scalar or one step per sample; the dither is given in
    units of the step, uniform on [-1/2, 1/2).

    With the dither known to both sides the reconstruction error is uniform, has variance
    step^2 / 12 and is independent of the input.
    """

    def __init__(self, step: Step):
        step = np.asarray(step, dtype=float) if np.ndim(step) else float(step)
        if not (np.all(step > 0) and np.all(np.isfinite(step))):
            raise ConfigInfeasibleError(f"quantizer step must be positive and finite, got {step}")
        self.step = step

    @classmethod
    def for_noise_variance(cls, variance: float) -> "DitheredQuantizer":
        return cls(math.sqrt(12.0 * variance))

    @property
    def noise_variance(self) -> Step:
        return self.step ** 2 / 12.0

    def quantize(self, values: np.ndarray, dither: np.ndarray) -> np.ndarray:
        return np.rint(np.asarray(values) / self.step + dither).astype(np.int64)

    def dequantize(self, indices: np.ndarray, dither: np.ndarray) -> np.ndarray:
        return (np.asarray(indices, dtype=float) - dither) * self.step


def draw_dither(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=size)
