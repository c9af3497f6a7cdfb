"""Node-attributed undirected graphs of drugs (atoms / bonds) and targets
(residues / contacts)."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from hgdta.errors import GraphError
from hgdta.tensor import DTYPE


@dataclass
class MolecularGraph():
    '''Undirected molecular graph
    Params
    ------
    x: torch.Tensor
        node attributes, one row per node (n, d)
    edges: list of (u, v)
        undirected edges, stored once with u < v
    edge_attr: torch.Tensor, optional
        one row per edge, in the order of `edges` (bond features of drugs)
    '''
    x: torch.Tensor
    edges: List[Tuple[int, int]]
    name: str = ''
    edge_attr: Optional[torch.Tensor] = None
    _propagation: Optional[torch.Tensor] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.x = torch.as_tensor(self.x, dtype=DTYPE)
        n = self.x.shape[0]
        if self.edge_attr is not None and len(self.edge_attr) != len(self.edges):
            raise GraphError(f'{len(self.edge_attr)} edge attribute rows for {len(self.edges)} edges')
        normalized = {}
        for k, (u, v) in enumerate(self.edges):
            if u == v:
                raise GraphError(f'self-loop on node {u}')
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f'edge ({u}, {v}) out of range for {n} nodes')
            normalized.setdefault((min(u, v), max(u, v)), k)
        self.edges = sorted(normalized)
        if self.edge_attr is not None:
            attr = torch.as_tensor(self.edge_attr, dtype=DTYPE)
            self.edge_attr = attr[torch.tensor([normalized[e] for e in self.edges], dtype=torch.long)]

    @property
    def num_nodes(self):
        return self.x.shape[0]

    @property
    def edge_index(self) -> torch.Tensor:
        """Both directed incidences of every edge, shape (2, 2E)."""
        if not self.edges:
            return torch.zeros(2, 0, dtype=torch.long)
        e = torch.tensor(self.edges, dtype=torch.long).T
        return torch.cat([e, e.flip(0)], dim=1)

    def degrees(self) -> torch.Tensor:
        """Self-loop degrees d̂ = 1 + |C(v)|."""
        deg = torch.ones(self.num_nodes, dtype=DTYPE)
        ei = self.edge_index
        if ei.shape[1]:
            deg.index_add_(0, ei[0], torch.ones(ei.shape[1], dtype=DTYPE))
        return deg

    def propagation(self) -> torch.Tensor:
        """Sparse D̂^{-1/2}(A + I)D̂^{-1/2}, cached."""
        if self._propagation is None:
            n = self.num_nodes
            loops = torch.arange(n)
            ei = self.edge_index
            rows = torch.cat([loops, ei[0]])
            cols = torch.cat([loops, ei[1]])
            deg = self.degrees()
            vals = (deg[rows] * deg[cols]).rsqrt()
            self._propagation = torch.sparse_coo_tensor(torch.stack([rows, cols]), vals,
                                                        (n, n)).coalesce()
        return self._propagation

    def permute(self, perm: Sequence[int]) -> 'MolecularGraph':
        """Relabels nodes: new node k is old node perm[k]."""
        perm = list(perm)
        inv = np.argsort(perm)
        edges = [(int(inv[u]), int(inv[v])) for u, v in self.edges]
        return MolecularGraph(self.x[perm], edges, name=self.name, edge_attr=self.edge_attr)


class GraphBatch():
    """Disjoint union of molecular graphs with a block-diagonal propagation matrix.

    `batch[v]` is the position (in `graphs`) of the graph that owns node v.
    """

    def __init__(self, graphs: Sequence[MolecularGraph]):
        if not graphs:
            raise GraphError('cannot batch zero graphs')
        self.graphs = list(graphs)
        sizes = [g.num_nodes for g in self.graphs]
        self.num_graphs = len(self.graphs)
        self.x = torch.cat([g.x for g in self.graphs], dim=0)
        self.batch = torch.repeat_interleave(torch.arange(self.num_graphs), torch.tensor(sizes))
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        blocks = [g.propagation() for g in self.graphs]
        indices = torch.cat([b.indices() + int(o) for b, o in zip(blocks, offsets)], dim=1)
        values = torch.cat([b.values() for b in blocks])
        n = int(sum(sizes))
        self._propagation = torch.sparse_coo_tensor(indices, values, (n, n)).coalesce()

    @property
    def num_nodes(self):
        return self.x.shape[0]

    def propagation(self) -> torch.Tensor:
        return self._propagation
