"""Protein sequences, contact maps and target molecular graphs.

Residue feature layout (27 columns, +20 when a PSSM profile is supplied)::

    residue one-hot        21  (20 canonical letters + X)
    aliphatic, aromatic, polar-neutral, acidic, basic, hydrophobic flags   6
    PSSM row               20  (optional)
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Set, Tuple

import numpy as np
import torch

from hgdta.errors import ContactMapError, SequenceError
from hgdta.graphs.molecular import MolecularGraph
from hgdta.tensor import DTYPE

logger = logging.getLogger(__name__)

AMINO_ACIDS = 'ACDEFGHIKLMNPQRSTVWY'
ALPHABET = AMINO_ACIDS + 'X'
RESIDUE_FLAGS = {
    'aliphatic': frozenset('AILMV'),
    'aromatic': frozenset('FWY'),
    'polar_neutral': frozenset('CNQST'),
    'acidic': frozenset('DE'),
    'basic': frozenset('HKR'),
    'hydrophobic': frozenset('ACFILMVWY'),
}
RESIDUE_FEATURE_DIM = len(ALPHABET) + len(RESIDUE_FLAGS)
PSSM_DIM = len(AMINO_ACIDS)


def validate_sequence(seq: str) -> str:
    if not seq:
        raise SequenceError('empty protein sequence')
    bad = [(k, c) for k, c in enumerate(seq) if c not in ALPHABET]
    if bad:
        k, c = bad[0]
        raise SequenceError(f'invalid residue {c!r} at position {k} '
                            f'(expected uppercase letters of {ALPHABET})')
    return seq


@dataclass
class ContactMap():
    scores: np.ndarray  # (n_r, n_r), symmetric, in [0, 1]

    @property
    def length(self):
        return self.scores.shape[0]


def _check_contact_map(scores: np.ndarray, expected_length: Optional[int], source='contact map'):
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ContactMapError(f'{source}: expected a square matrix, got shape {scores.shape}')
    if expected_length is not None and scores.shape[0] != expected_length:
        raise ContactMapError(f'{source}: size {scores.shape[0]} does not match '
                              f'sequence length {expected_length}')
    if not np.all(np.isfinite(scores)):
        raise ContactMapError(f'{source}: non-finite scores')
    if scores.min() < 0 or scores.max() > 1:
        raise ContactMapError(f'{source}: scores must lie in [0, 1]')
    if not np.allclose(scores, scores.T, atol=1e-6):
        raise ContactMapError(f'{source}: matrix is not symmetric')


def load_contact_map(path, expected_length: Optional[int] = None) -> ContactMap:
    """Reads a dense whitespace-separated contact map and validates it."""
    try:
        scores = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise ContactMapError(f'{path}: {e}') from e
    except OSError as e:
        raise ContactMapError(f'{path}: cannot read contact map ({e})') from e
    _check_contact_map(scores, expected_length, source=str(path))
    return ContactMap(scores)


def save_contact_map(cmap: ContactMap, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, cmap.scores, fmt='%.17g')


def contact_edges(cmap: ContactMap, threshold: float = 0.5) -> Set[Tuple[int, int]]:
    """Edges {(p, q): p < q, score >= threshold} plus the backbone chain (p, p + 1)."""
    if not 0 < threshold < 1:
        raise ContactMapError(f'contact threshold must lie in (0, 1), got {threshold}')
    n = cmap.length
    p, q = np.nonzero(np.triu(cmap.scores >= threshold, k=1))
    edges = {(int(a), int(b)) for a, b in zip(p, q)}
    edges.update((k, k + 1) for k in range(n - 1))
    return edges


def synthesize_contact_map(seq: str, seed: int, density: float = 0.05) -> ContactMap:
    """Stand-in for a predicted contact map: backbone band and diagonal at 1.0 plus seeded
    random long-range contacts (|p - q| > 1) with scores in [0.5, 1]."""
    if not 0 <= density <= 1:
        raise ContactMapError(f'contact density must lie in [0, 1], got {density}')
    n = len(seq)
    rng = np.random.default_rng(seed)
    scores = np.zeros((n, n))
    p, q = np.triu_indices(n, k=2)
    hit = rng.random(p.size) < density
    values = rng.uniform(0.5, 1.0, size=p.size)
    scores[p[hit], q[hit]] = values[hit]
    idx = np.arange(n - 1)
    scores[idx, idx + 1] = 1.0
    scores = np.maximum(scores, scores.T)
    np.fill_diagonal(scores, 1.0)
    return ContactMap(scores)


def load_pssm(path, expected_length: int) -> np.ndarray:
    """Reads an n_r x 20 position-specific scoring matrix."""
    try:
        pssm = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except (ValueError, OSError) as e:
        raise ContactMapError(f'{path}: cannot read PSSM ({e})') from e
    if pssm.shape != (expected_length, PSSM_DIM):
        raise ContactMapError(f'{path}: PSSM shape {pssm.shape} does not match '
                              f'({expected_length}, {PSSM_DIM})')
    return pssm


def residue_features(seq: str, position: int, pssm: Optional[np.ndarray] = None) -> np.ndarray:
    c = seq[position]
    one_hot = np.zeros(len(ALPHABET))
    one_hot[ALPHABET.index(c)] = 1
    flags = np.array([c in members for members in RESIDUE_FLAGS.values()], dtype=np.float64)
    parts = [one_hot, flags]
    if pssm is not None:
        parts.append(pssm[position])
    return np.concatenate(parts)


def target_molecular_graph(seq: str, cmap: ContactMap, threshold: float = 0.5,
                           pssm: Optional[np.ndarray] = None, name: str = '') -> MolecularGraph:
    validate_sequence(seq)
    if cmap.length != len(seq):
        raise ContactMapError(f'contact map of size {cmap.length} for a sequence of '
                              f'length {len(seq)}')
    x = np.stack([residue_features(seq, k, pssm) for k in range(len(seq))])
    edges: List[Tuple[int, int]] = sorted(contact_edges(cmap, threshold))
    return MolecularGraph(torch.as_tensor(x, dtype=DTYPE), edges, name=name)
