from typing import List

import numpy as np

from rate_region.constants import GF_PRIMITIVE_POLY

FIELD_SIZE = 256
ORDER = FIELD_SIZE - 1


class GF256:
    """Arithmetic in GF(2^8) with exp/log tables; byte arrays are handled elementwise with numpy."""

    def __init__(self, primitive_polynomial: int = GF_PRIMITIVE_POLY):
        self.primitive_polynomial = primitive_polynomial
        self.exp_table = np.zeros(2 * ORDER, dtype=np.uint8)
        self.log_table = np.zeros(FIELD_SIZE, dtype=np.int64)
        x = 1
        for i in range(ORDER):
            self.exp_table[i] = x
            self.log_table[x] = i
            x <<= 1
            if x & FIELD_SIZE:
                x ^= primitive_polynomial
        self.exp_table[ORDER:] = self.exp_table[:ORDER]

    @staticmethod
    def add(x: int, y: int) -> int:
        return x ^ y

    def mul(self, x: int, y: int) -> int:
        if x == 0 or y == 0:
            return 0
        return int(self.exp_table[(self.log_table[x] + self.log_table[y]) % ORDER])

    def inv(self, x: int) -> int:
        if x == 0:
            raise ZeroDivisionError("0 has no inverse in GF(256)")
        return int(self.exp_table[(ORDER - self.log_table[x]) % ORDER])

    def div(self, x: int, y: int) -> int:
        return self.mul(x, self.inv(y))

    def scale(self, c: int, data: np.ndarray) -> np.ndarray:
        """c * data for every byte of `data`."""
        data = np.asarray(data, dtype=np.uint8)
        if c == 0:
            return np.zeros_like(data)
        out = self.exp_table[(self.log_table[data] + self.log_table[c]) % ORDER]
        out[data == 0] = 0
        return out.astype(np.uint8)

    def combine(self, coefficients: List[int], rows: List[np.ndarray]) -> np.ndarray:
        """Sum over GF(256) of coefficients[j] * rows[j]; all rows have the same length."""
        out = np.zeros_like(np.asarray(rows[0], dtype=np.uint8))
        for c, row in zip(coefficients, rows):
            out ^= self.scale(c, row)
        return out

    def invert_matrix(self, matrix: List[List[int]]) -> List[List[int]]:
        """Gauss-Jordan inverse of a square matrix over GF(256)."""
        size = len(matrix)
        work = [list(row) + [int(i == j) for j in range(size)] for i, row in enumerate(matrix)]
        for col in range(size):
            pivot = next((r for r in range(col, size) if work[r][col] != 0), None)
            if pivot is None:
                raise ValueError("matrix is singular over GF(256)")
            work[col], work[pivot] = work[pivot], work[col]
            scale = self.inv(work[col][col])
            work[col] = [self.mul(scale, v) for v in work[col]]
            for r in range(size):
                if r != col and work[r][col] != 0:
                    factor = work[r][col]
                    work[r] = [v ^ self.mul(factor, p) for v, p in zip(work[r], work[col])]
        return [row[size:] for row in work]


FIELD = GF256()
