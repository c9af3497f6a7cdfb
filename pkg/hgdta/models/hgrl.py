"""Hierarchical graph network for drug-target affinity.

The global level runs a two-layer GCN over the drug-target affinity graph; the local
level runs self-loop GCN stacks over every drug's atom graph and every target's
residue graph. Global embeddings are broadcast onto the local nodes, refined by more
GCN layers, pooled by a readout MLP and passed to the affinity predictor.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence, Tuple

import torch
from torch import nn

from hgdta.errors import ContractViolation
from hgdta.graphs.molecular import GraphBatch
from hgdta.tensor import DTYPE, xavier_uniform

logger = logging.getLogger(__name__)

ABLATIONS = {
    'gag': 'use_global_graph',
    'lmg': 'use_local_graphs',
    'wa': 'weighted_affinities',
    'mb': 'use_message_broadcasting',
}


@dataclass
class ModelConfig():
    '''Widths, depths and ablation switches of HierarchicalGraphNet
    Params
    ------
    signal_dim: int
        width of the global node signals (2 + n_d + n_t), set from the affinity graph
    global_hidden, global_dim: int
        widths of the two global GCN layers
    drug_dim, target_dim: int
        local stack widths; also the output widths of the global transforms
    refined_drug_dim, refined_target_dim: int
        refinement stack widths
    use_skip_connection: bool, optional
        concatenates the global embedding to the pooled vector before the readout MLP;
        None lets training pick it from the scenario (on for S2-S4)
    '''
    signal_dim: int = 1
    drug_feature_dim: int = 78
    target_feature_dim: int = 27
    global_hidden: int = 128
    global_dim: int = 128
    drug_dim: int = 128
    target_dim: int = 128
    refined_drug_dim: int = 128
    refined_target_dim: int = 128
    readout_hidden: int = 256
    readout_dim: int = 128
    predictor_hidden: Tuple[int, ...] = (512, 256)
    local_layers: int = 3
    refine_layers: int = 2
    use_global_graph: bool = True
    use_local_graphs: bool = True
    weighted_affinities: bool = True
    use_message_broadcasting: bool = True
    use_skip_connection: Optional[bool] = None
    dropedge_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.predictor_hidden = tuple(int(h) for h in self.predictor_hidden)
        self.validate()

    def validate(self):
        dims = ['signal_dim', 'drug_feature_dim', 'target_feature_dim', 'global_hidden',
                'global_dim', 'drug_dim', 'target_dim', 'refined_drug_dim',
                'refined_target_dim', 'readout_hidden', 'readout_dim', 'local_layers']
        for name in dims:
            if getattr(self, name) < 1:
                raise ContractViolation(f'{name} must be >= 1, got {getattr(self, name)}')
        if self.refine_layers < 0:
            raise ContractViolation('refine_layers must be >= 0')
        if any(h < 1 for h in self.predictor_hidden):
            raise ContractViolation('predictor hidden widths must be >= 1')
        if not 0 <= self.dropedge_rate <= 1:
            raise ContractViolation(f'dropedge_rate must lie in [0, 1], got {self.dropedge_rate}')
        if not (self.use_global_graph or self.use_local_graphs):
            raise ContractViolation('at least one of the global and local levels must be used')

    def to_dict(self):
        return asdict(self)

    @property
    def broadcasts(self):
        return self.use_global_graph and self.use_local_graphs and self.use_message_broadcasting

    @property
    def skip(self):
        return bool(self.use_skip_connection) and self.broadcasts


def apply_ablation(config: ModelConfig, ablation: Optional[str]) -> ModelConfig:
    """Turns off the switch named by an ablation tag (gag, lmg, wa or mb)."""
    if ablation is None:
        return config
    if ablation not in ABLATIONS:
        raise ContractViolation(f'unknown ablation {ablation!r}, expected one of {sorted(ABLATIONS)}')
    setattr(config, ABLATIONS[ablation], False)
    config.validate()
    return config


class MLP(nn.Module):
    """Linear layers with ReLU between them (none after the last)."""

    def __init__(self, widths: Sequence[int], generator: Optional[torch.Generator] = None):
        super(MLP, self).__init__()
        self.layers = nn.ModuleList()
        for w_in, w_out in zip(widths[:-1], widths[1:]):
            fc = nn.Linear(w_in, w_out, dtype=DTYPE)
            with torch.no_grad():
                fc.weight.copy_(xavier_uniform((w_out, w_in), generator))
                fc.bias.zero_()
            self.layers.append(fc)

    def hidden(self, x):
        """Activations entering the last layer."""
        for fc in self.layers[:-1]:
            x = torch.relu(fc(x))
        return x

    def forward(self, x):
        return self.layers[-1](self.hidden(x))


def global_encode(a_hat: torch.Tensor, x: torch.Tensor, w1: torch.Tensor, w2: torch.Tensor) -> torch.Tensor:
    """H = ReLU(Â ReLU(Â X W1) W2)."""
    if a_hat.dim() != 2 or a_hat.shape[0] != a_hat.shape[1]:
        raise ContractViolation(f'Â must be square, got {tuple(a_hat.shape)}')
    if x.shape[0] != a_hat.shape[0]:
        raise ContractViolation(f'X has {x.shape[0]} rows, Â has {a_hat.shape[0]}')
    if x.shape[1] != w1.shape[0] or w1.shape[1] != w2.shape[0]:
        raise ContractViolation(f'weights {tuple(w1.shape)}, {tuple(w2.shape)} do not fit '
                                f'signals of width {x.shape[1]}')
    h = torch.relu(a_hat @ (x @ w1))
    return torch.relu(a_hat @ (h @ w2))


def global_transform(H, i, j, n_d: int, mlp_b: nn.Module, mlp_c: nn.Module):
    """(MLP_b(H[i]), MLP_c(H[j + n_d])); `i` and `j` may be ints or index tensors."""
    i, j = torch.as_tensor(i), torch.as_tensor(j)
    n_t = H.shape[0] - n_d
    if i.numel() and (i.min() < 0 or i.max() >= n_d):
        raise ContractViolation(f'drug index out of range [0, {n_d})')
    if j.numel() and (j.min() < 0 or j.max() >= n_t):
        raise ContractViolation(f'target index out of range [0, {n_t})')
    return mlp_b(H[i]), mlp_c(H[j + n_d])


def local_gcn_layer(graph, states: torch.Tensor, W: torch.Tensor) -> torch.Tensor:
    """Self-loop GCN layer ReLU(D̂^{-1/2}(A + I)D̂^{-1/2} states W) on a MolecularGraph
    or GraphBatch."""
    return torch.relu(torch.sparse.mm(graph.propagation(), states @ W))


def message_broadcast(h: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """(h + g) ∥ (h - g); `g` is one vector for all rows or one row per node."""
    if h.shape[-1] != g.shape[-1]:
        raise ContractViolation(f'local width {h.shape[-1]} differs from global width {g.shape[-1]}')
    return torch.cat([h + g, h - g], dim=-1)


def refine(graph, z: torch.Tensor, weights: Sequence[torch.Tensor]) -> torch.Tensor:
    for W in weights:
        z = local_gcn_layer(graph, z, W)
    return z


def readout(states: torch.Tensor, mlp: nn.Module, global_embedding: Optional[torch.Tensor] = None,
            batch: Optional[torch.Tensor] = None, num_graphs: int = 1) -> torch.Tensor:
    """Mean-pools node states (per graph when `batch` is given), optionally concatenates
    the global embedding, and applies the readout MLP."""
    if states.shape[0] == 0:
        raise ContractViolation('cannot read out an empty graph')
    if batch is None:
        pooled = states.mean(dim=0)
    else:
        counts = torch.bincount(batch, minlength=num_graphs).to(DTYPE)
        if (counts == 0).any():
            raise ContractViolation('cannot read out an empty graph')
        pooled = states.new_zeros((num_graphs, states.shape[1])).index_add_(0, batch, states)
        pooled = pooled / counts[:, None]
    if global_embedding is not None:
        pooled = torch.cat([pooled, global_embedding], dim=-1)
    return mlp(pooled)


def predict(d: torch.Tensor, t: torch.Tensor, mlp_g: nn.Module) -> torch.Tensor:
    return mlp_g(torch.cat([d, t], dim=-1)).squeeze(-1)


@dataclass
class GraphInputs():
    """What a forward pass reads besides the parameters.

    `drug_graphs[i]` / `target_graphs[j]` return MolecularGraphs; they are only touched
    when the local level is on.
    """
    n_d: int
    drug_graphs: Any = None
    target_graphs: Any = None


class _LocalStack(nn.Module):

    def __init__(self, feature_dim, dim, refined_dim, config: ModelConfig, global_width, generator):
        super(_LocalStack, self).__init__()
        widths = [feature_dim] + [dim] * config.local_layers
        self.local = nn.ParameterList(
            [nn.Parameter(xavier_uniform((a, b), generator)) for a, b in zip(widths[:-1], widths[1:])])
        refine_in = 2 * dim if config.broadcasts else dim
        widths = [refine_in] + [refined_dim] * config.refine_layers
        self.refine = nn.ParameterList(
            [nn.Parameter(xavier_uniform((a, b), generator)) for a, b in zip(widths[:-1], widths[1:])])
        pooled = widths[-1] + (global_width if config.skip else 0)
        # without broadcasting the readout lands on the global width for the add/sub merge
        out = config.readout_dim if config.broadcasts or not config.use_global_graph else global_width
        self.readout = MLP([pooled, config.readout_hidden, out], generator)
        self.config = config

    @property
    def out_dim(self):
        return self.readout.layers[-1].out_features

    def forward(self, graphs, g=None):
        batch = GraphBatch(graphs)
        states = batch.x
        for W in self.local:
            states = local_gcn_layer(batch, states, W)
        if self.config.broadcasts:
            states = message_broadcast(states, g[batch.batch])
        states = refine(batch, states, self.refine)
        out = readout(states, self.readout, g if self.config.skip else None,
                      batch=batch.batch, num_graphs=batch.num_graphs)
        if g is not None and not self.config.broadcasts:
            out = message_broadcast(out, g)
        return out


class HierarchicalGraphNet(nn.Module):
    """Parameters and forward pass of the hierarchical model.

    Parameters
    ----------
    config: ModelConfig
        widths and ablation switches; weights are drawn from a generator seeded with
        ``config.seed``.
    """

    def __init__(self, config: ModelConfig):
        super(HierarchicalGraphNet, self).__init__()
        self.config = config
        gen = torch.Generator().manual_seed(int(config.seed))
        c = config
        if c.use_global_graph:
            self.global_weights = nn.ParameterList([
                nn.Parameter(xavier_uniform((c.signal_dim, c.global_hidden), gen)),
                nn.Parameter(xavier_uniform((c.global_hidden, c.global_dim), gen))])
            self.drug_transform = MLP([c.global_dim, c.drug_dim, c.drug_dim], gen)
            self.target_transform = MLP([c.global_dim, c.target_dim, c.target_dim], gen)
        if c.use_local_graphs:
            self.drug_stack = _LocalStack(c.drug_feature_dim, c.drug_dim, c.refined_drug_dim,
                                          c, c.drug_dim, gen)
            self.target_stack = _LocalStack(c.target_feature_dim, c.target_dim, c.refined_target_dim,
                                            c, c.target_dim, gen)
            pair_dim = 2 * c.drug_dim + 2 * c.target_dim if c.use_global_graph and not c.broadcasts \
                else self.drug_stack.out_dim + self.target_stack.out_dim
        else:
            pair_dim = c.drug_dim + c.target_dim
        self.pair_dim = pair_dim
        self.predictor = MLP([pair_dim, *c.predictor_hidden, 1], gen)
        logger.debug('HierarchicalGraphNet with %d parameters',
                     sum(p.numel() for p in self.parameters()))

    def encode(self, a_hat: Optional[torch.Tensor], x: Optional[torch.Tensor]) -> Optional[torch.Tensor]:
        """Global embeddings H of every node, or None without the global level."""
        if not self.config.use_global_graph:
            return None
        return global_encode(a_hat, x, self.global_weights[0], self.global_weights[1])

    def _entity_embeddings(self, drugs, targets, inputs: GraphInputs, H):
        g_d = g_t = None
        if self.config.use_global_graph:
            g_d, g_t = global_transform(H, drugs, targets, inputs.n_d,
                                        self.drug_transform, self.target_transform)
        if not self.config.use_local_graphs:
            return g_d, g_t
        d = self.drug_stack([inputs.drug_graphs[int(i)] for i in drugs], g_d)
        t = self.target_stack([inputs.target_graphs[int(j)] for j in targets], g_t)
        return d, t

    def _pair_embeddings(self, drug_idx, target_idx, inputs, H):
        # each drug and target is embedded once per call, then gathered for its pairs
        drug_idx = torch.as_tensor(drug_idx, dtype=torch.long).reshape(-1)
        target_idx = torch.as_tensor(target_idx, dtype=torch.long).reshape(-1)
        if drug_idx.shape != target_idx.shape:
            raise ContractViolation('drug and target index lists differ in length')
        drugs, inv_d = torch.unique(drug_idx, return_inverse=True)
        targets, inv_t = torch.unique(target_idx, return_inverse=True)
        d, t = self._entity_embeddings(drugs, targets, inputs, H)
        return d[inv_d], t[inv_t]

    def embed_pair(self, drug_idx, target_idx, inputs: GraphInputs, H=None) -> torch.Tensor:
        """Predictor input d_i ∥ t_j of every pair, one row each."""
        return torch.cat(self._pair_embeddings(drug_idx, target_idx, inputs, H), dim=-1)

    def forward(self, drug_idx, target_idx, inputs: GraphInputs, H=None) -> torch.Tensor:
        d, t = self._pair_embeddings(drug_idx, target_idx, inputs, H)
        return predict(d, t, self.predictor)

    def forward_pair(self, i: int, j: int, inputs: GraphInputs, H=None) -> torch.Tensor:
        """Predicted affinity of the single pair (i, j) as a 0-d tensor."""
        return self.forward([i], [j], inputs, H)[0]

    def hidden(self, drug_idx, target_idx, inputs: GraphInputs, H=None) -> torch.Tensor:
        """Last hidden layer of the predictor."""
        return self.predictor.hidden(self.embed_pair(drug_idx, target_idx, inputs, H))
