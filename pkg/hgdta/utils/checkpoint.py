"""Checkpoint persistence.

A checkpoint is a dict written with `torch.save`; it holds everything evaluation needs
without the training run: configs, parameters, optimizer and RNG state, the pruned
training affinity graph with its normalizer, the ids and the split digest.
"""
import logging
import pickle
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch

from hgdta.errors import CheckpointError
from hgdta.graphs.affinity import AffinityGraph, AffinityMatrix, AffinityNormalizer
from hgdta.models.hgrl import HierarchicalGraphNet, ModelConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 2


@dataclass
class Checkpoint():
    """`state_dict` holds the parameters used for evaluation (the best validation epoch
    when early stopping ran); `last_state_dict` the parameters after the last epoch, which
    pair with `optimizer` when training resumes. `best_val`, `best_epoch` and `wait` are
    the early-stopping state at that epoch."""
    model_config: Dict
    train_config: Dict
    state_dict: Dict[str, torch.Tensor]
    optimizer: Optional[Dict] = None
    rng_state: Optional[torch.Tensor] = None
    epoch: int = 0
    scenario: str = 'S1'
    split_digest: str = ''
    kind: str = 'davis'
    drug_ids: List[str] = field(default_factory=list)
    target_ids: List[str] = field(default_factory=list)
    graph_entries: Dict[Tuple[int, int], float] = field(default_factory=dict)
    graph_mask: List[Tuple[int, int]] = field(default_factory=list)
    normalizer: Optional[Tuple[float, float]] = None
    fit_pairs: List[Tuple[int, int]] = field(default_factory=list)
    val_pairs: List[Tuple[int, int]] = field(default_factory=list)
    final_train_mse: Optional[float] = None
    train_losses: List[float] = field(default_factory=list)
    val_losses: List[float] = field(default_factory=list)
    last_state_dict: Optional[Dict[str, torch.Tensor]] = None
    best_val: Optional[float] = None
    best_epoch: Optional[int] = None
    wait: int = 0
    format_version: int = FORMAT_VERSION

    def model(self) -> HierarchicalGraphNet:
        """Rebuilds the model and loads the stored parameters."""
        model = HierarchicalGraphNet(ModelConfig(**self.model_config))
        expected = model.state_dict()
        if set(expected) != set(self.state_dict):
            missing = sorted(set(expected) ^ set(self.state_dict))
            raise CheckpointError(f'parameter names do not match the model config: {missing[:5]}')
        for name, tensor in self.state_dict.items():
            if tuple(tensor.shape) != tuple(expected[name].shape):
                raise CheckpointError(f'parameter {name!r} has shape {tuple(tensor.shape)}, '
                                      f'the config implies {tuple(expected[name].shape)}')
        model.load_state_dict(self.state_dict)
        return model.eval()

    def graph(self) -> AffinityGraph:
        n_d, n_t = len(self.drug_ids), len(self.target_ids)
        aff = AffinityMatrix(n_d, n_t, dict(self.graph_entries), frozenset(self.graph_mask))
        normalizer = AffinityNormalizer(*self.normalizer) if self.normalizer is not None else None
        return AffinityGraph(aff, weighted=self.model_config['weighted_affinities'], normalizer=normalizer)

    def check_compatible(self, model_config: ModelConfig):
        """Raises CheckpointError when `model_config` differs from the stored one."""
        theirs = model_config.to_dict()
        diff = sorted(k for k in set(theirs) | set(self.model_config)
                      if _normalize(theirs.get(k)) != _normalize(self.model_config.get(k)))
        if diff:
            raise CheckpointError(f'checkpoint is incompatible with the requested model config '
                                  f'(differs in {", ".join(diff)})')

    def check_split(self, digest: str):
        if digest != self.split_digest:
            raise CheckpointError('split manifest does not match the one the checkpoint was trained on')

    def check_kind(self, kind: str):
        if kind != self.kind:
            raise CheckpointError(f'checkpoint was trained on a {self.kind} dataset, got {kind}')


def _normalize(v):
    return list(v) if isinstance(v, tuple) else v


def save_checkpoint(ckpt: Checkpoint, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(asdict(ckpt), path)
    logger.info('saved checkpoint (epoch %d) to %s', ckpt.epoch, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = torch.load(path, map_location='cpu', weights_only=False)
    except FileNotFoundError:
        raise CheckpointError(f'no checkpoint at {path}') from None
    except (EOFError, RuntimeError, pickle.UnpicklingError, zipfile.BadZipFile, ValueError) as e:
        raise CheckpointError(f'{path}: truncated or unreadable checkpoint ({e})') from e
    if not isinstance(blob, dict) or 'format_version' not in blob:
        raise CheckpointError(f'{path}: not an hgdta checkpoint')
    if blob['format_version'] != FORMAT_VERSION:
        raise CheckpointError(f'{path}: checkpoint format {blob["format_version"]}, '
                              f'this version reads {FORMAT_VERSION}')
    names = {f.name for f in fields(Checkpoint)}
    unknown = set(blob) - names
    if unknown:
        raise CheckpointError(f'{path}: unexpected checkpoint fields {sorted(unknown)}')
    if not isinstance(blob.get('state_dict'), dict):
        raise CheckpointError(f'{path}: missing parameters')
    try:
        ckpt = Checkpoint(**blob)
    except TypeError as e:
        raise CheckpointError(f'{path}: incomplete checkpoint ({e})') from e
    return ckpt
