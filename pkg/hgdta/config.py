"""Training configuration and the key=value config file.

A config file holds one ``key=value`` entry per line; ``#`` starts a comment. Keys are
fields of `ModelConfig` or `TrainConfig`; values are coerced to the field's type.
"""
import logging
import typing
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional, Tuple

from hgdta.chem.alignment import AlignmentScoring
from hgdta.errors import ConfigError
from hgdta.models.hgrl import ModelConfig

logger = logging.getLogger(__name__)

_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


@dataclass
class TrainConfig():
    '''Optimization, data and cold-start settings
    Params
    ------
    topk_target: int, optional
        edges kept per target by topK pruning; None picks 150 for S1/S3 and 90 for S2/S4
    prune: bool, optional
        apply topK pruning; None prunes kiba-like datasets only
    val_fraction: float
        share of training pairs held out for early stopping (0 disables it)
    '''
    lr: float = 5e-4
    epochs: int = 2000
    batch_size: int = 512
    patience: int = 30
    val_fraction: float = 1 / 6
    seed: int = 0
    ratio: float = 5
    topk_drug: int = 40
    topk_target: Optional[int] = None
    prune: Optional[bool] = None
    simk_drug: int = 2
    simk_target: int = 7
    contact_threshold: float = 0.5
    synthesize_contacts: bool = False
    sw_match: float = 2.0
    sw_mismatch: float = -1.0
    sw_gap: float = -1.0
    lamL2: float = 0.0
    runs: int = 1
    n_print: int = 1
    quiet: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lr < 0:
            raise ConfigError(f'lr must be >= 0, got {self.lr}')
        for name in ('epochs', 'batch_size', 'patience', 'topk_drug', 'simk_drug',
                     'simk_target', 'runs', 'n_print'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be >= 1, got {getattr(self, name)}')
        if self.topk_target is not None and self.topk_target < 1:
            raise ConfigError(f'topk_target must be >= 1, got {self.topk_target}')
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f'val_fraction must lie in [0, 1), got {self.val_fraction}')
        if not 0 < self.contact_threshold < 1:
            raise ConfigError(f'contact_threshold must lie in (0, 1), got {self.contact_threshold}')
        if self.ratio <= 0:
            raise ConfigError(f'ratio must be positive, got {self.ratio}')

    def topk_target_for(self, scenario: str) -> int:
        if self.topk_target is not None:
            return self.topk_target
        return 150 if scenario.upper() in ('S1', 'S3') else 90

    def prune_for(self, kind: str) -> bool:
        return kind == 'kiba' if self.prune is None else self.prune

    @property
    def scoring(self) -> AlignmentScoring:
        return AlignmentScoring(self.sw_match, self.sw_mismatch, self.sw_gap)

    def to_dict(self):
        return asdict(self)


def _coerce(text: str, hint, key):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if text.lower() in ('none', ''):
            return None
        hint = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(hint), typing.get_args(hint)
    try:
        if hint is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if origin is tuple:
            return tuple(int(tok) for tok in text.replace(',', ' ').split())
        return hint(text)
    except ValueError:
        raise ConfigError(f'{key}: cannot read {text!r} as {getattr(hint, "__name__", hint)}') from None


def _field_types(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


MODEL_KEYS = _field_types(ModelConfig)
TRAIN_KEYS = _field_types(TrainConfig)


def parse_config_lines(lines, source='<config>') -> Tuple[Dict, Dict]:
    """Parses key=value lines into (ModelConfig kwargs, TrainConfig kwargs)."""
    model_kw, train_kw = {}, {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{lineno}: expected key=value, got {raw.strip()!r}')
        key, value = (s.strip() for s in line.split('=', 1))
        if key in TRAIN_KEYS:
            train_kw[key] = _coerce(value, TRAIN_KEYS[key], key)
        elif key in MODEL_KEYS:
            model_kw[key] = _coerce(value, MODEL_KEYS[key], key)
        else:
            raise ConfigError(f'{source}:{lineno}: unknown key {key!r}')
    return model_kw, train_kw


def load_config(path) -> Tuple[Dict, Dict]:
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f'cannot read config file {path} ({e})') from e
    model_kw, train_kw = parse_config_lines(lines, source=str(path))
    logger.debug('config %s: model %s, train %s', path, model_kw, train_kw)
    return model_kw, train_kw
