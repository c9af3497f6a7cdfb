"""Planted-bilinear synthetic datasets in the flat-file layout of `hgdta.data.dataset`."""
import logging
import os
from pathlib import Path

import numpy as np
import pandas as pd

from hgdta.chem.protein import AMINO_ACIDS, save_contact_map, synthesize_contact_map

opj = os.path.join
logger = logging.getLogger(__name__)

SMILES_POOL = [
    'CCO',
    'CC(=O)O',
    'c1ccccc1',
    'Cc1ccccc1',
    'CC(=O)Nc1ccc(O)cc1',
    'CC(=O)Oc1ccccc1C(=O)O',
    'CN1C=NC2=C1C(=O)N(C)C(=O)N2C',
    'c1ccc2ccccc2c1',
    'OC(=O)CCc1ccccc1',
    'Nc1ncnc2nc[nH]c12',
    'CCN(CC)CC',
    'C1CCNCC1',
    'c1ccncc1',
    'O=C(O)c1ccccc1O',
    'CC(C)Cc1ccc(cc1)C(C)C(=O)O',
    'Clc1ccc(Cl)cc1',
    'COc1ccc(CCN)cc1',
    'NC(=O)c1cccnc1',
    'CS(=O)(=O)Nc1ccccc1',
    'FC(F)(F)c1ccccc1',
]


def generate_synthetic(root, n_drugs: int = 8, n_targets: int = 6, seed: int = 0,
                       rank: int = 2, mean: float = 7.0, scale: float = 0.6,
                       min_length: int = 30, max_length: int = 60, density: float = 0.05):
    """Writes a complete synthetic dataset under `root` and returns its path.

    Every (drug, target) pair gets the affinity
    ``mean + scale * <u_i, v_j> / sqrt(rank)`` with standard-normal latent factors, so
    the matrix carries a learnable low-rank signal around `mean`.
    """
    rng = np.random.default_rng(seed)
    root = Path(root)
    (root / 'contact_maps').mkdir(parents=True, exist_ok=True)

    drug_ids = [f'D{k:03d}' for k in range(n_drugs)]
    smiles = [SMILES_POOL[k % len(SMILES_POOL)] for k in rng.permutation(max(n_drugs, len(SMILES_POOL)))[:n_drugs]]
    target_ids = [f'T{k:03d}' for k in range(n_targets)]
    letters = np.array(list(AMINO_ACIDS))
    sequences = [''.join(rng.choice(letters, size=rng.integers(min_length, max_length + 1)))
                 for _ in range(n_targets)]

    u = rng.standard_normal((n_drugs, rank))
    v = rng.standard_normal((n_targets, rank))
    values = mean + scale * (u @ v.T) / np.sqrt(rank)

    pd.DataFrame({'id': drug_ids, 'smiles': smiles}).to_csv(
        opj(root, 'drugs.tsv'), sep='\t', header=False, index=False)
    pd.DataFrame({'id': target_ids, 'sequence': sequences}).to_csv(
        opj(root, 'targets.tsv'), sep='\t', header=False, index=False)
    rows = [(drug_ids[i], target_ids[j], repr(float(values[i, j])))
            for i in range(n_drugs) for j in range(n_targets)]
    pd.DataFrame(rows).to_csv(opj(root, 'affinities.tsv'), sep='\t', header=False, index=False)
    for j, (t, seq) in enumerate(zip(target_ids, sequences)):
        save_contact_map(synthesize_contact_map(seq, seed=seed + j, density=density),
                         opj(root, 'contact_maps', f'{t}.txt'))
    logger.info('wrote synthetic dataset (%d drugs x %d targets) to %s', n_drugs, n_targets, root)
    return root
