"""Cold-start inference of global embeddings for drugs / targets that are absent from
the training affinity graph.

An unseen entity borrows the global embeddings of its `simk` most similar known
entities, weighted by their renormalized similarities. Similarities come from
fingerprint Tanimoto scores (drugs), Smith-Waterman scores (targets) or precomputed
files that take precedence over both.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from hgdta.chem.alignment import AlignmentScoring, smith_waterman_similarity
from hgdta.chem.fingerprint import fingerprint, tanimoto
from hgdta.errors import ColdStartError, ContractViolation, DatasetError
from hgdta.tensor import DTYPE

logger = logging.getLogger(__name__)


@dataclass
class SimilarityMatrix():
    '''Similarities of unseen entities (rows) to known entities (columns)
    Params
    ------
    values: np.ndarray
        (n_unseen, n_known), finite, in [0, 1]
    unseen: list
        entity index of every row
    known: list
        entity index of every column
    '''
    values: np.ndarray
    unseen: Sequence[int]
    known: Sequence[int]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.unseen), len(self.known))
        if not np.all(np.isfinite(self.values)):
            raise ContractViolation('similarities must be finite')
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ContractViolation('similarities must lie in [0, 1]')

    def row(self, entity) -> np.ndarray:
        try:
            return self.values[list(self.unseen).index(entity)]
        except ValueError:
            raise ColdStartError(entity) from None


def similarity_matrix(unseen: Sequence[int], known: Sequence[int],
                      fn: Optional[Callable[[int, int], float]] = None,
                      overrides: Optional[Mapping[Tuple[int, int], float]] = None,
                      names: Optional[Sequence[str]] = None) -> SimilarityMatrix:
    """Builds the similarity rows of `unseen` against `known`.

    An entity with at least one entry in `overrides` takes its whole row from there
    (absent pairs count as 0); the others are computed with `fn`.
    """
    overrides = overrides or {}
    overridden = {u for u, _ in overrides}
    values = np.zeros((len(unseen), len(known)))
    for r, u in enumerate(unseen):
        if u in overridden:
            values[r] = [overrides.get((u, k), 0.0) for k in known]
        elif fn is not None:
            values[r] = [fn(u, k) for k in known]
        else:
            raise ColdStartError(names[u] if names is not None else u)
    return SimilarityMatrix(values, list(unseen), list(known))


def drug_similarity_fn(molecules) -> Callable[[int, int], float]:
    """Tanimoto similarity between drug indices over cached path fingerprints."""
    cache = {}

    def fp(k):
        if k not in cache:
            cache[k] = fingerprint(molecules[k])
        return cache[k]

    return lambda a, b: tanimoto(fp(a), fp(b))


def target_similarity_fn(sequences, scoring: AlignmentScoring = AlignmentScoring()):
    return lambda a, b: smith_waterman_similarity(sequences[a], sequences[b], scoring)


def load_similarity_file(path, ids: Mapping[str, int]) -> Dict[Tuple[int, int], float]:
    """Reads "unseen_id known_id value" rows into {(unseen index, known index): value}."""
    try:
        df = pd.read_csv(path, sep=r'\s+', header=None, names=['unseen', 'known', 'value'],
                         dtype={'unseen': str, 'known': str}, comment='#')
    except (OSError, pd.errors.ParserError) as e:
        raise DatasetError(str(e), path=path) from e
    out = {}
    for k, row in enumerate(df.itertuples(index=False), start=1):
        for name in (row.unseen, row.known):
            if name not in ids:
                raise DatasetError(f'unknown id {name!r}', path=path, line=k)
        try:
            value = float(row.value)
        except (TypeError, ValueError):
            raise DatasetError(f'non-numeric similarity {row.value!r}', path=path, line=k) from None
        if not 0 <= value <= 1:
            raise DatasetError(f'similarity {value} outside [0, 1]', path=path, line=k)
        out[(ids[row.unseen], ids[row.known])] = value
    logger.info('read %d precomputed similarities from %s', len(out), path)
    return out


def infer_unseen_embedding(sim_row, H_known: torch.Tensor, simk: int) -> torch.Tensor:
    """Similarity-weighted mean of the `simk` most similar rows of `H_known`.

    Ties go to the lower index; if every selected similarity is 0 the selected rows
    get uniform weights.
    """
    sim_row = np.asarray(sim_row, dtype=np.float64)
    if simk < 1:
        raise ContractViolation(f'simK must be >= 1, got {simk}')
    if sim_row.shape[0] != H_known.shape[0]:
        raise ContractViolation(f'{sim_row.shape[0]} similarities for {H_known.shape[0]} known rows')
    if sim_row.shape[0] < simk:
        raise ContractViolation(f'simK={simk} exceeds the {sim_row.shape[0]} known entities')
    chosen = np.argsort(-sim_row, kind='stable')[:simk]
    w = sim_row[chosen]
    w = np.full(simk, 1.0 / simk) if w.sum() == 0 else w / w.sum()
    return torch.as_tensor(w, dtype=DTYPE) @ H_known[torch.as_tensor(chosen)]


def infer_embeddings(H_known: torch.Tensor, sim: SimilarityMatrix, simk: int) -> torch.Tensor:
    """Inferred embeddings of every unseen entity of `sim`, one row each."""
    if not len(sim.unseen):
        return H_known.new_zeros((0, H_known.shape[1]))
    return torch.stack([infer_unseen_embedding(row, H_known, simk) for row in sim.values])
