"""Global-level affinity graph: adjacency assembly, normalization, node signals,
DropEdge and topK pruning.

Drugs occupy node rows ``[0, n_d)`` and targets rows ``[n_d, n_d + n_t)``.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional, Tuple

import numpy as np
import torch

from hgdta.errors import GraphError
from hgdta.tensor import DTYPE

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass(frozen=True)
class AffinityMatrix():
    """Drug-target affinity matrix with a set of masked (hidden) entries.

    Parameters
    ----------
    n_d, n_t: int
        number of drugs / targets

    entries: dict (i, j) -> float
        raw affinity values of the known pairs

    mask: frozenset of (i, j)
        pairs hidden from the graph (test / validation entries)
    """
    n_d: int
    n_t: int
    entries: Dict[Pair, float]
    mask: FrozenSet[Pair] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, 'mask', frozenset(self.mask))
        for (i, j) in self.entries:
            if not (0 <= i < self.n_d and 0 <= j < self.n_t):
                raise GraphError(f'pair ({i}, {j}) out of range for a {self.n_d}x{self.n_t} matrix')
        missing = self.mask - set(self.entries)
        if missing:
            raise GraphError(f'masked pairs without an entry: {sorted(missing)[:5]}')

    @classmethod
    def from_triples(cls, n_d, n_t, triples: Iterable[Tuple[int, int, float]], mask=()):
        entries = {}
        for i, j, v in triples:
            if (i, j) in entries:
                raise GraphError(f'duplicate entry for pair ({i}, {j})')
            entries[(i, j)] = float(v)
        return cls(n_d, n_t, entries, frozenset(mask))

    @property
    def n_nodes(self):
        return self.n_d + self.n_t

    def visible(self) -> Dict[Pair, float]:
        """Entries not hidden by the mask, in sorted pair order."""
        return {k: self.entries[k] for k in sorted(self.entries) if k not in self.mask}

    def with_mask(self, mask):
        return AffinityMatrix(self.n_d, self.n_t, self.entries, frozenset(mask))

    def restrict(self, pairs):
        """Matrix holding only `pairs` (all visible)."""
        return AffinityMatrix(self.n_d, self.n_t, {k: self.entries[k] for k in sorted(pairs)})


def minmax_normalize(values) -> np.ndarray:
    """Min-max scales values into [0, 1]; a constant list maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise GraphError('cannot normalize an empty list of affinities')
    return AffinityNormalizer.fit(values).transform(values)


@dataclass(frozen=True)
class AffinityNormalizer():
    """Min-max statistics of the training affinities, reused for any later value."""
    lo: float
    hi: float

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise GraphError('cannot fit normalization on an empty list of affinities')
        return cls(float(values.min()), float(values.max()))

    def transform(self, values):
        values = np.asarray(values, dtype=np.float64)
        if self.hi == self.lo:
            return np.zeros_like(values)
        return (values - self.lo) / (self.hi - self.lo)

    def inverse_transform(self, values):
        values = np.asarray(values, dtype=np.float64)
        return values * (self.hi - self.lo) + self.lo


def build_affinity_adjacency(aff: AffinityMatrix, weighted: bool = True,
                             normalizer: Optional[AffinityNormalizer] = None) -> torch.Tensor:
    """Symmetric (n_d + n_t) x (n_d + n_t) adjacency of the visible entries.

    With ``weighted=False`` every visible pair gets weight 1 (binary affinity graph).
    """
    visible = aff.visible()
    A = torch.zeros(aff.n_nodes, aff.n_nodes, dtype=DTYPE)
    if not visible:
        return A
    rows = torch.tensor([i for i, _ in visible], dtype=torch.long)
    cols = torch.tensor([j for _, j in visible], dtype=torch.long) + aff.n_d
    if weighted:
        if normalizer is None:
            normalizer = AffinityNormalizer.fit(list(visible.values()))
        w = torch.as_tensor(normalizer.transform(list(visible.values())), dtype=DTYPE)
    else:
        w = torch.ones(len(visible), dtype=DTYPE)
    A[rows, cols] = w
    A[cols, rows] = w
    return A


def normalize_adjacency(A: torch.Tensor) -> torch.Tensor:
    """D^{-1/2} A D^{-1/2}; rows of zero degree stay zero."""
    if (A < 0).any():
        raise GraphError('adjacency has negative entries')
    deg = A.sum(dim=1)
    d_inv_sqrt = torch.where(deg > 0, deg.pow(-0.5), torch.zeros_like(deg))
    return d_inv_sqrt[:, None] * A * d_inv_sqrt[None, :]


def build_node_signals(aff: AffinityMatrix) -> torch.Tensor:
    """Node signal matrix X: [is_drug, is_target] followed by the binary connectivity row.

    Connectivity is taken from the visible pairs, so a visible pair whose normalized
    weight is 0 still counts as a neighbour.
    """
    n = aff.n_nodes
    X = torch.zeros(n, 2 + n, dtype=DTYPE)
    X[:aff.n_d, 0] = 1
    X[aff.n_d:, 1] = 1
    for (i, j) in aff.visible():
        X[i, 2 + aff.n_d + j] = 1
        X[aff.n_d + j, 2 + i] = 1
    return X


def drop_edge(A: torch.Tensor, rate: float, seed: int) -> torch.Tensor:
    """Removes every undirected edge independently with probability `rate`."""
    if not 0.0 <= rate <= 1.0:
        raise GraphError(f'DropEdge rate must lie in [0, 1], got {rate}')
    if rate == 0:
        return A.clone()
    g = torch.Generator().manual_seed(int(seed))
    keep = torch.rand(A.shape, generator=g, dtype=DTYPE) >= rate
    keep = torch.triu(keep, diagonal=1)
    keep = keep | keep.T
    return A * keep


def topk_prune(aff: AffinityMatrix, topk_d: int, topk_t: int) -> AffinityMatrix:
    """Keeps the topK_t strongest visible edges of each target, then the topK_d strongest
    surviving edges of each drug. Ties go to the lower drug index, then the lower
    target index. Masked entries are not edges and are kept untouched.
    """
    if topk_d < 1 or topk_t < 1:
        raise GraphError('topK values must be >= 1')
    visible = aff.visible()

    by_target = {}
    for (i, j), v in visible.items():
        by_target.setdefault(j, []).append((-v, i, j))
    survivors = set()
    for j, edges in by_target.items():
        survivors.update((i, jj) for _, i, jj in sorted(edges)[:topk_t])

    by_drug = {}
    for (i, j) in survivors:
        by_drug.setdefault(i, []).append((-visible[(i, j)], i, j))
    kept = set()
    for i, edges in by_drug.items():
        kept.update((ii, j) for _, ii, j in sorted(edges)[:topk_d])

    entries = {k: v for k, v in aff.entries.items() if k in kept or k in aff.mask}
    logger.debug('topK pruning kept %d of %d visible edges', len(kept), len(visible))
    return AffinityMatrix(aff.n_d, aff.n_t, entries, aff.mask)


def degree_stats(aff: AffinityMatrix) -> Dict[str, float]:
    """Mean / max number of visible edges per target and per drug."""
    visible = aff.visible()
    t_deg = np.bincount([j for _, j in visible], minlength=aff.n_t)
    d_deg = np.bincount([i for i, _ in visible], minlength=aff.n_d)
    return {'target_mean': float(t_deg.mean()) if aff.n_t else 0.0,
            'target_max': int(t_deg.max()) if aff.n_t else 0,
            'drug_mean': float(d_deg.mean()) if aff.n_d else 0.0,
            'drug_max': int(d_deg.max()) if aff.n_d else 0}


class AffinityGraph():
    """Training affinity graph: adjacency A, node signals X and the normalizer.

    X is fixed from the (pruned) training graph; `resample` rebuilds Â, optionally
    after DropEdge.
    """

    def __init__(self, aff: AffinityMatrix, weighted: bool = True,
                 normalizer: Optional[AffinityNormalizer] = None):
        visible = aff.visible()
        if normalizer is None and visible:
            normalizer = AffinityNormalizer.fit(list(visible.values()))
        self.aff = aff
        self.weighted = weighted
        self.normalizer = normalizer
        self.A = build_affinity_adjacency(aff, weighted=weighted, normalizer=normalizer)
        self.X = build_node_signals(aff)
        self._a_hat = normalize_adjacency(self.A)

    @property
    def n_d(self):
        return self.aff.n_d

    @property
    def signal_dim(self):
        return self.X.shape[1]

    def resample(self, rate: float = 0.0, seed: int = 0) -> torch.Tensor:
        if rate == 0:
            return self._a_hat
        return normalize_adjacency(drop_edge(self.A, rate, seed))
