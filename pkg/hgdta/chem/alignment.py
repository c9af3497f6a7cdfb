"""Smith-Waterman local alignment similarity of protein sequences."""
from dataclasses import dataclass

import numpy as np
from numba import njit

from hgdta.errors import SequenceError


@dataclass(frozen=True)
class AlignmentScoring():
    """Linear-gap scoring scheme."""
    match: float = 2.0
    mismatch: float = -1.0
    gap: float = -1.0


@njit(cache=True)
def _sw_score(a, b, match, mismatch, gap):
    n, m = len(a), len(b)
    prev = np.zeros(m + 1)
    curr = np.zeros(m + 1)
    best = 0.0
    for i in range(1, n + 1):
        curr[0] = 0.0
        for j in range(1, m + 1):
            s = match if a[i - 1] == b[j - 1] else mismatch
            v = max(0.0, prev[j - 1] + s, prev[j] + gap, curr[j - 1] + gap)
            curr[j] = v
            if v > best:
                best = v
        prev, curr = curr, prev
    return best


def _encode(seq):
    if not seq:
        raise SequenceError('cannot align an empty sequence')
    return np.frombuffer(seq.encode('ascii'), dtype=np.uint8)


def smith_waterman_score(seq_a: str, seq_b: str, scoring: AlignmentScoring = AlignmentScoring()) -> float:
    """Best local alignment score (never negative)."""
    return float(_sw_score(_encode(seq_a), _encode(seq_b),
                           scoring.match, scoring.mismatch, scoring.gap))


def smith_waterman_similarity(seq_a: str, seq_b: str,
                              scoring: AlignmentScoring = AlignmentScoring()) -> float:
    """SW(a, b) / sqrt(SW(a, a) * SW(b, b)), in [0, 1]."""
    ab = smith_waterman_score(seq_a, seq_b, scoring)
    if ab == 0:
        return 0.0
    aa = smith_waterman_score(seq_a, seq_a, scoring)
    bb = smith_waterman_score(seq_b, seq_b, scoring)
    return min(1.0, ab / np.sqrt(aa * bb))
