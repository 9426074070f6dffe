"""
Static-model rANS coding of dithered quantizer indices.

Each index is coded under its own discretized Gaussian, given as a mean and a spread in units of
the quantizer step; both come from what the decoder has already recovered, so encoder and decoder
build the same frequency tables. Indices within WINDOW_SIGMAS spreads of the rounded mean have a
symbol of their own, anything further out is sent as an escape symbol followed by the raw 32-bit
offset. The coder is the byte-wise rANS variant with a 32-bit state: the stream is the final state
(little-endian) followed by the renormalization bytes in decoding order.
"""
import math
from bisect import bisect_right
from typing import List, Tuple

import numpy as np
from scipy.special import ndtr

from rate_region.errors import ConfigInfeasibleError, InvalidParametersError

PROB_BITS = 16
PROB_SCALE = 1 << PROB_BITS
PROB_MASK = PROB_SCALE - 1
RANS_L = 1 << 23
STATE_BYTES = 4
RAW_BITS = 32
WINDOW_SIGMAS = 8.0
QUADRATURE_POINTS = 64


def window_radius(scales) -> int:
    return int(math.ceil(WINDOW_SIGMAS * float(np.max(scales)))) + 1


def _context(means, scales) -> Tuple[np.ndarray, np.ndarray]:
    means = np.asarray(means, dtype=float)
    if means.ndim != 1 or means.size == 0:
        raise InvalidParametersError(f"index context must be a non-empty 1-d array, got shape {means.shape}")
    scales = np.broadcast_to(np.asarray(scales, dtype=float), means.shape)
    if not np.all(np.isfinite(means)):
        raise InvalidParametersError("index context means must be finite")
    if not (np.all(scales > 0) and np.all(np.isfinite(scales))):
        raise InvalidParametersError("index context spreads must be positive and finite")
    return means, scales


def _cumulative(means, scales, centers, radius: int, offsets) -> np.ndarray:
    """
    Integer cumulative frequency at window position `offsets` (0 .. 2 radius + 1) of each index.

    Every symbol keeps a frequency of at least one; position 2 radius + 1 starts the escape symbol,
    which owns the rest of PROB_SCALE. Encoder and decoder evaluate the same elementwise expression.
    """
    spare = PROB_SCALE - 2 * radius - 2
    lowest = ndtr((centers - radius + np.zeros_like(offsets) - 0.5 - means) / scales)
    mass = ndtr((centers - radius + offsets - 0.5 - means) / scales) - lowest
    return np.floor(mass * spare).astype(np.int64) + offsets


def _rans_encode(starts: List[int], freqs: List[int]) -> bytes:
    x = RANS_L
    out = bytearray()
    append = out.append
    for start, freq in zip(reversed(starts), reversed(freqs)):
        x_max = ((RANS_L >> PROB_BITS) << 8) * freq
        while x >= x_max:
            append(x & 0xFF)
            x >>= 8
        quotient, remainder = divmod(x, freq)
        x = (quotient << PROB_BITS) + remainder + start
    out.reverse()
    return x.to_bytes(STATE_BYTES, "little") + bytes(out)


def encode_indices(indices, means, scales) -> bytes:
    """
    Codes integer indices, index t under a Gaussian with mean means[t] and spread scales[t].

    Raises:
        InvalidParametersError: If the context does not match the indices.
        ConfigInfeasibleError: If an index is 2^31 or more away from its predicted mean.
    """
    indices = np.asarray(indices, dtype=np.int64)
    means, scales = _context(means, scales)
    if indices.shape != means.shape:
        raise InvalidParametersError(f"{indices.size} indices for a context of {means.size}")
    radius = window_radius(scales)
    symbols = 2 * radius + 1
    centers = np.rint(means).astype(np.int64)
    offsets = indices - centers + radius
    escaped = (offsets < 0) | (offsets >= symbols)
    positions = np.where(escaped, symbols, offsets)
    starts = _cumulative(means, scales, centers, radius, positions)
    ends = np.where(escaped, PROB_SCALE, _cumulative(means, scales, centers, radius, positions + 1))

    start_list, freq_list = starts.tolist(), (ends - starts).tolist()
    escapes = np.flatnonzero(escaped)
    if escapes.size:
        residuals = indices[escapes] - centers[escapes]
        if np.abs(residuals).max() >= 2 ** (RAW_BITS - 1):
            raise ConfigInfeasibleError(f"index residual {int(np.abs(residuals).max())} does not fit an escape")
        for t, residual in zip(escapes.tolist()[::-1], residuals.tolist()[::-1]):
            raw = residual & (2 ** RAW_BITS - 1)
            start_list[t + 1:t + 1] = [raw & PROB_MASK, raw >> PROB_BITS]
            freq_list[t + 1:t + 1] = [1, 1]
    return _rans_encode(start_list, freq_list)


def decode_indices(data: bytes, means, scales) -> np.ndarray:
    """
    Inverse of encode_indices for the same context; bytes after the stream are ignored.

    Raises:
        InvalidParametersError: If the stream is truncated or does not end in the initial state.
    """
    means, scales = _context(means, scales)
    if len(data) < STATE_BYTES:
        raise InvalidParametersError(f"index stream shorter than its {STATE_BYTES}-byte state")
    radius = window_radius(scales)
    symbols = 2 * radius + 1
    centers = np.rint(means).astype(np.int64)
    table = _cumulative(means[:, None], scales[:, None], centers[:, None], radius,
                        np.arange(symbols + 1, dtype=np.int64)[None, :])
    rows = np.concatenate([table, np.full((means.size, 1), PROB_SCALE, dtype=np.int64)], axis=1).tolist()

    x = int.from_bytes(data[:STATE_BYTES], "little")
    pos = STATE_BYTES
    residuals = [0] * means.size
    try:
        for t, row in enumerate(rows):
            slot = x & PROB_MASK
            k = bisect_right(row, slot) - 1
            start = row[k]
            x = (row[k + 1] - start) * (x >> PROB_BITS) + slot - start
            while x < RANS_L:
                x = (x << 8) | data[pos]
                pos += 1
            if k < symbols:
                residuals[t] = k - radius
                continue
            raw = 0
            for shift in range(0, RAW_BITS, PROB_BITS):
                raw |= (x & PROB_MASK) << shift
                x >>= PROB_BITS
                while x < RANS_L:
                    x = (x << 8) | data[pos]
                    pos += 1
            residuals[t] = raw - 2 ** RAW_BITS if raw >= 2 ** (RAW_BITS - 1) else raw
    except IndexError as e:
        raise InvalidParametersError(f"index stream truncated after {pos} bytes") from e
    if x != RANS_L:
        raise InvalidParametersError("index stream is corrupt: decoder did not return to the initial state")
    return centers + np.array(residuals, dtype=np.int64)


def expected_index_entropy(scale: float, points: int = QUADRATURE_POINTS) -> float:
    """
    Bits per index the coder approaches when its model is exact: the entropy of a rounded Gaussian
    with spread `scale`, averaged over the fractional part of the mean.
    """
    if not (scale > 0 and math.isfinite(scale)):
        raise InvalidParametersError(f"spread must be positive and finite, got {scale}")
    radius = window_radius(scale)
    shifts = (np.arange(points) + 0.5) / points - 0.5
    edges = ndtr((np.arange(-radius, radius + 2)[None, :] - 0.5 - shifts[:, None]) / scale)
    pmf = np.diff(edges, axis=1)
    positive = pmf > 0
    bits = np.where(positive, -pmf * np.log2(np.where(positive, pmf, 1.0)), 0.0)
    return float(bits.sum(axis=1).mean())
