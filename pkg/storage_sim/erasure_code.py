import logging
from typing import Dict, List

import numpy as np

from rate_region.constants import MAX_NODES
from rate_region.errors import ConfigInfeasibleError, InvalidParametersError
from storage_sim.galois_field import FIELD

logger = logging.getLogger(__name__)


class MDSCode:
    """
    Systematic (n, k) MDS code over GF(256).

    A message is zero padded to a multiple of k and cut into k chunks; shares 0..k-1 are the chunks
    and shares k..n-1 are parity rows of the generator [I_k; P]. P is all ones when there is a
    single parity share or a single data chunk (XOR parity and repetition), and a Cauchy matrix
    1 / (x_j + y_i) otherwise, so any k shares determine the message.
    """

    def __init__(self, n: int, k: int):
        if not 1 <= k <= n <= MAX_NODES:
            raise ConfigInfeasibleError(f"need 1 <= k <= n <= {MAX_NODES} for an MDS code, got n={n}, k={k}")
        self.n = n
        self.k = k
        redundancy = n - k
        if redundancy <= 1 or k == 1:
            parity = [[1] * k for _ in range(redundancy)]
        else:
            parity = [[FIELD.inv(j ^ (redundancy + i)) for i in range(k)] for j in range(redundancy)]
        self.generator = [[int(i == j) for j in range(k)] for i in range(k)] + parity

    def __repr__(self) -> str:
        return f"MDSCode(n={self.n}, k={self.k})"

    def share_length(self, message_length: int) -> int:
        return -(-message_length // self.k)

    def encode(self, message: bytes) -> List[bytes]:
        size = self.share_length(len(message))
        padded = np.zeros(size * self.k, dtype=np.uint8)
        padded[:len(message)] = np.frombuffer(message, dtype=np.uint8)
        chunks = list(padded.reshape(self.k, size)) if size else [padded] * self.k
        return [FIELD.combine(row, chunks).tobytes() for row in self.generator]

    def decode(self, shares: Dict[int, bytes], message_length: int) -> bytes:
        """
        Recovers the message from any k shares, keyed by share index.

        Raises:
            InvalidParametersError: If fewer than k shares are given, an index is out of range, or
                the shares have different lengths.
        """
        if len(shares) < self.k:
            raise InvalidParametersError(f"{self!r} needs {self.k} shares, got {len(shares)}")
        chosen = sorted(shares)[:self.k]
        if chosen[0] < 0 or chosen[-1] >= self.n:
            raise InvalidParametersError(f"share indices {chosen} out of range for {self!r}")
        lengths = {len(shares[i]) for i in chosen}
        if len(lengths) != 1:
            raise InvalidParametersError(f"shares have different lengths {sorted(lengths)}")
        rows = [np.frombuffer(shares[i], dtype=np.uint8) for i in chosen]
        if chosen == list(range(self.k)):
            chunks = rows
        else:
            inverse = FIELD.invert_matrix([self.generator[i] for i in chosen])
            chunks = [FIELD.combine(coefficients, rows) for coefficients in inverse]
        message = b"".join(np.asarray(chunk, dtype=np.uint8).tobytes() for chunk in chunks)
        if message_length > len(message):
            raise InvalidParametersError(f"message length {message_length} exceeds the {len(message)} decoded bytes")
        return message[:message_length]

    def rebuild_share(self, shares: Dict[int, bytes], index: int, message_length: int) -> bytes:
        """Recomputes share `index` from any k other shares."""
        message = self.decode({i: share for i, share in shares.items() if i != index}, message_length)
        return self.encode(message)[index]
