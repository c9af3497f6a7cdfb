"""Train / test partitions for the four evaluation scenarios.

S1  random affinity entries are held out
S2  random drugs are held out with all their entries (unseen drugs)
S3  random targets are held out with all their entries (unseen targets)
S4  random drugs and targets are held out; their cross pairs are tested and the pairs
    linking a held-out entity to a training entity are excluded
"""
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterator, List, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from hgdta.errors import DatasetError, SplitError
from hgdta.graphs.affinity import AffinityMatrix, Pair

logger = logging.getLogger(__name__)

SCENARIOS = ('S1', 'S2', 'S3', 'S4')
LABELS = ('train', 'test', 'excluded')


def scenario_tag(scenario: str) -> str:
    tag = str(scenario).upper()
    if tag not in SCENARIOS:
        raise SplitError(f'unknown scenario {scenario!r}, expected one of {SCENARIOS}')
    return tag


@dataclass(frozen=True)
class ScenarioSplit():
    scenario: str
    train: FrozenSet[Pair]
    test: FrozenSet[Pair]
    excluded: FrozenSet[Pair] = field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        for name in ('train', 'test', 'excluded'):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if self.train & self.test or self.train & self.excluded or self.test & self.excluded:
            raise SplitError('train, test and excluded pairs must be disjoint')

    @property
    def unseen_drugs(self) -> List[int]:
        """Drugs of test pairs that no training pair mentions."""
        return sorted({i for i, _ in self.test} - {i for i, _ in self.train})

    @property
    def unseen_targets(self) -> List[int]:
        return sorted({j for _, j in self.test} - {j for _, j in self.train})

    def label(self, pair) -> str:
        if pair in self.train:
            return 'train'
        if pair in self.test:
            return 'test'
        return 'excluded'


def _n_test(n, ratio, what):
    k = int(np.floor(n / (ratio + 1) + 0.5))
    if k < 1 or k >= n:
        raise SplitError(f'cannot hold out 1/{ratio + 1} of {n} {what}')
    return k


def split(aff: AffinityMatrix, scenario: str, ratio: float = 5, seed: int = 0) -> ScenarioSplit:
    """Divides the known entries of `aff` into train : test = ratio : 1.

    For S2-S4 the ratio applies to the number of drugs / targets with entries, not to
    the number of entries.
    """
    tag = scenario_tag(scenario)
    if ratio <= 0:
        raise SplitError(f'division ratio must be positive, got {ratio}')
    pairs = sorted(aff.entries)
    rng = np.random.default_rng(seed)
    drugs = sorted({i for i, _ in pairs})
    targets = sorted({j for _, j in pairs})

    def pick(items, what):
        chosen = rng.choice(len(items), size=_n_test(len(items), ratio, what), replace=False)
        return {items[k] for k in chosen}

    excluded = set()
    if tag == 'S1':
        test = pick(pairs, 'entries')
    elif tag == 'S2':
        held = pick(drugs, 'drugs')
        test = {p for p in pairs if p[0] in held}
    elif tag == 'S3':
        held = pick(targets, 'targets')
        test = {p for p in pairs if p[1] in held}
    else:
        held_d = pick(drugs, 'drugs')
        held_t = pick(targets, 'targets')
        test = {p for p in pairs if p[0] in held_d and p[1] in held_t}
        excluded = {p for p in pairs if (p[0] in held_d) != (p[1] in held_t)}
    train = set(pairs) - test - excluded
    if not test:
        raise SplitError(f'{tag} split with seed {seed} has no test pairs')
    if not train:
        raise SplitError(f'{tag} split with seed {seed} has no training pairs')
    logger.info('%s split (seed %d): %d train, %d test, %d excluded pairs',
                tag, seed, len(train), len(test), len(excluded))
    return ScenarioSplit(tag, frozenset(train), frozenset(test), frozenset(excluded), seed)


def cv_folds(aff: AffinityMatrix, base: ScenarioSplit, k: int = 5, seed: int = 0) -> Iterator[ScenarioSplit]:
    """k cross-validation folds of the training pairs of `base`, validation fold as test.

    S1 divides the pairs, S2 the drugs and S3 the targets into k disjoint folds, so the
    validation folds partition the training pairs. S4 divides drugs and targets alike;
    fold f validates on the cross pairs of its drugs and targets and excludes the pairs
    linking them to the other folds.
    """
    if k < 2:
        raise SplitError(f'need at least 2 folds, got {k}')
    if not base.train <= set(aff.entries):
        raise SplitError('training pairs of the base split are not entries of the matrix')
    tag = base.scenario
    pairs = sorted(base.train)
    kfold = KFold(n_splits=k, shuffle=True, random_state=seed)

    def chunks(items, what):
        if len(items) < k:
            raise SplitError(f'cannot divide {len(items)} {what} into {k} folds')
        return [{items[n] for n in held} for _, held in kfold.split(np.arange(len(items)))]

    drugs = sorted({i for i, _ in pairs})
    targets = sorted({j for _, j in pairs})
    if tag == 'S1':
        held, key = chunks(pairs, 'pairs'), lambda p: p
    elif tag == 'S3':
        held, key = chunks(targets, 'targets'), lambda p: p[1]
    else:
        held, key = chunks(drugs, 'drugs'), lambda p: p[0]
    held_t = chunks(targets, 'targets') if tag == 'S4' else None
    for f in range(k):
        excluded = set()
        if tag == 'S4':
            test = {p for p in pairs if p[0] in held[f] and p[1] in held_t[f]}
            excluded = {p for p in pairs if (p[0] in held[f]) != (p[1] in held_t[f])}
        else:
            test = {p for p in pairs if key(p) in held[f]}
        train = set(pairs) - test - excluded
        if not test or not train:
            raise SplitError(f'{tag} fold {f} of {k} leaves no validation or no training pairs')
        yield ScenarioSplit(tag, frozenset(train), frozenset(test), frozenset(excluded), seed)


def validation_holdout(pairs, fraction: float = 1 / 6, seed: int = 0) -> Tuple[List[Pair], List[Pair]]:
    """Randomly divides training pairs into (fit, validation); an empty validation
    list when the fraction rounds to nothing or would leave nothing to fit."""
    pairs = sorted(pairs)
    if not 0 <= fraction < 1:
        raise SplitError(f'validation fraction must lie in [0, 1), got {fraction}')
    n_val = int(np.floor(len(pairs) * fraction + 0.5))
    if n_val == 0 or n_val >= len(pairs):
        return pairs, []
    order = np.random.default_rng(seed).permutation(len(pairs))
    val = sorted(pairs[k] for k in order[:n_val])
    fit = sorted(pairs[k] for k in order[n_val:])
    return fit, val


def _manifest_lines(s: ScenarioSplit, drug_ids: Sequence[str], target_ids: Sequence[str]):
    lines = []
    for label, pairs in zip(LABELS, (s.train, s.test, s.excluded)):
        lines.extend(f'{drug_ids[i]}\t{target_ids[j]}\t{label}' for i, j in pairs)
    return sorted(lines)


def manifest_digest(s: ScenarioSplit, drug_ids: Sequence[str], target_ids: Sequence[str]) -> str:
    """sha256 of the sorted manifest lines; identifies the training split in checkpoints."""
    text = '\n'.join([f'# scenario={s.scenario}'] + _manifest_lines(s, drug_ids, target_ids))
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(s: ScenarioSplit, path, drug_ids: Sequence[str], target_ids: Sequence[str]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write(f'# scenario={s.scenario} seed={s.seed}\n')
        for line in _manifest_lines(s, drug_ids, target_ids):
            f.write(line + '\n')


def read_manifest(path, drug_ids: Sequence[str], target_ids: Sequence[str]) -> ScenarioSplit:
    path = Path(path)
    try:
        with open(path) as f:
            header = f.readline().strip()
    except OSError as e:
        raise DatasetError(f'cannot read split manifest ({e})', path=path) from e
    meta = dict(tok.split('=', 1) for tok in header.lstrip('#').split() if '=' in tok)
    if 'scenario' not in meta:
        raise DatasetError('manifest header lacks "scenario="', path=path, line=1)
    d_index = {d: k for k, d in enumerate(drug_ids)}
    t_index = {t: k for k, t in enumerate(target_ids)}
    df = pd.read_csv(path, sep='\t', header=None, comment='#', dtype=str,
                     names=['drug', 'target', 'label'], keep_default_na=False)
    groups = {label: set() for label in LABELS}
    for k, row in enumerate(df.itertuples(index=False), start=2):
        if row.drug not in d_index or row.target not in t_index:
            raise DatasetError(f'unknown pair ({row.drug}, {row.target})', path=path, line=k)
        if row.label not in groups:
            raise DatasetError(f'unknown label {row.label!r}', path=path, line=k)
        groups[row.label].add((d_index[row.drug], t_index[row.target]))
    return ScenarioSplit(scenario_tag(meta['scenario']), frozenset(groups['train']),
                         frozenset(groups['test']), frozenset(groups['excluded']),
                         int(meta.get('seed', 0)))
