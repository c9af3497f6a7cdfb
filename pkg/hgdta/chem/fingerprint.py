"""Hashed linear-path fingerprints and Tanimoto similarity of drugs."""
import hashlib

import numpy as np

from hgdta.chem.smiles import BondOrder, DrugMolecule
from hgdta.errors import ContractViolation

FP_BITS = 1024
MAX_PATH_BONDS = 7

_BOND_LABEL = {BondOrder.SINGLE: '-', BondOrder.DOUBLE: '=', BondOrder.TRIPLE: '#',
               BondOrder.AROMATIC: ':'}


def _atom_label(atom):
    return atom.symbol.lower() if atom.aromatic else atom.symbol


def _paths(mol: DrugMolecule, max_bonds: int):
    """Simple paths (no repeated atom) of 0..max_bonds bonds as label sequences."""
    adjacency = [mol.neighbors(k) for k in range(mol.num_atoms)]
    labels = [_atom_label(a) for a in mol.atoms]
    stack = [([k], [labels[k]]) for k in range(mol.num_atoms)]
    while stack:
        atoms, seq = stack.pop()
        yield seq
        if len(atoms) > max_bonds:
            continue
        for nb, order in adjacency[atoms[-1]]:
            if nb not in atoms:
                stack.append((atoms + [nb], seq + [_BOND_LABEL[order], labels[nb]]))


def fingerprint(mol: DrugMolecule, n_bits: int = FP_BITS, max_bonds: int = MAX_PATH_BONDS) -> np.ndarray:
    """Boolean fingerprint of length `n_bits`: every path is labelled canonically (the
    smaller of its two reading directions) and hashed onto one bit."""
    bits = np.zeros(n_bits, dtype=bool)
    for seq in _paths(mol, max_bonds):
        label = min(''.join(seq), ''.join(reversed(seq)))
        digest = hashlib.blake2b(label.encode(), digest_size=8).digest()
        bits[int.from_bytes(digest, 'little') % n_bits] = True
    return bits


def tanimoto(fp_a, fp_b) -> float:
    """|a & b| / |a | b|; two empty fingerprints have similarity 0."""
    fp_a, fp_b = np.asarray(fp_a, dtype=bool), np.asarray(fp_b, dtype=bool)
    if fp_a.shape != fp_b.shape:
        raise ContractViolation(f'fingerprint lengths differ: {fp_a.shape} vs {fp_b.shape}')
    union = np.count_nonzero(fp_a | fp_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(fp_a & fp_b) / union
