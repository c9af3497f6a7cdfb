"""SMILES subset parser and drug molecular graphs.

Supported grammar: organic-subset atoms (B C N O P S F Cl Br I) and their aromatic
lowercase forms (b c n o p s), bracket atoms with element, explicit H count and
charge, bonds ``- = # :``, branches, ring closures (``1``..``9`` and ``%nn``) and
``.`` for disconnected components. Stereochemistry, isotopes, atom classes and
wildcard atoms are rejected.

Aromaticity is syntactic: lowercase atoms are aromatic, and an unmarked bond between
two aromatic atoms is aromatic.

Atom feature layout (version 1, 78 columns)::

    element one-hot        44  (43 symbols + 'Unknown')
    degree one-hot         11  (0 .. 10)
    total H one-hot        11  (0 .. 10)
    implicit valence       11  (0 .. 10)
    aromatic flag           1
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Tuple

import numpy as np
import torch

from hgdta.errors import SmilesParseError
from hgdta.graphs.molecular import MolecularGraph
from hgdta.tensor import DTYPE

logger = logging.getLogger(__name__)

FEATURE_VERSION = 1

ORGANIC = ('Cl', 'Br', 'B', 'C', 'N', 'O', 'P', 'S', 'F', 'I')
AROMATIC_ORGANIC = ('b', 'c', 'n', 'o', 'p', 's')
AROMATIC_BRACKET = ('se', 'as', 'b', 'c', 'n', 'o', 'p', 's')
VALENCES = {'B': (3,), 'C': (4,), 'N': (3, 5), 'O': (2,), 'P': (3, 5), 'S': (2, 4, 6),
            'F': (1,), 'Cl': (1,), 'Br': (1,), 'I': (1,)}
ELEMENTS = frozenset('''H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co
    Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La
    Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr
    Ra Ac Th Pa U Np Pu'''.split())

ATOM_SYMBOLS = ['C', 'N', 'O', 'S', 'F', 'Si', 'P', 'Cl', 'Br', 'Mg', 'Na', 'Ca', 'Fe', 'As',
                'Al', 'I', 'B', 'V', 'K', 'Tl', 'Yb', 'Sb', 'Sn', 'Ag', 'Pd', 'Co', 'Se', 'Ti',
                'Zn', 'H', 'Li', 'Ge', 'Cu', 'Au', 'Ni', 'Cd', 'In', 'Mn', 'Zr', 'Cr', 'Pt',
                'Hg', 'Pb', 'Unknown']
MAX_COUNT = 10
ATOM_FEATURE_DIM = len(ATOM_SYMBOLS) + 3 * (MAX_COUNT + 1) + 1


class BondOrder(enum.Enum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


BOND_SYMBOLS = {'-': BondOrder.SINGLE, '=': BondOrder.DOUBLE, '#': BondOrder.TRIPLE,
                ':': BondOrder.AROMATIC}
BOND_VALENCE = {BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2, BondOrder.TRIPLE: 3,
                BondOrder.AROMATIC: 1}
UNSUPPORTED = {'/': 'E/Z stereo bonds are not supported',
               '\\': 'E/Z stereo bonds are not supported',
               '@': 'chirality is not supported',
               '*': 'wildcard atoms are not supported',
               '$': 'quadruple bonds are not supported'}


@dataclass
class Atom():
    symbol: str  # element symbol, capitalized ('C' for aromatic 'c')
    aromatic: bool = False
    charge: int = 0
    hcount: int = 0
    bracket: bool = False

    @property
    def implicit_valence(self):
        """Implicit hydrogens; bracket atoms carry theirs explicitly."""
        return 0 if self.bracket else self.hcount


@dataclass(frozen=True)
class Bond():
    a: int
    b: int
    order: BondOrder


@dataclass
class DrugMolecule():
    atoms: List[Atom]
    bonds: List[Bond]
    smiles: str = ''
    ring_closures: int = 0

    @property
    def num_atoms(self):
        return len(self.atoms)

    def degree(self, idx):
        return sum(1 for b in self.bonds if idx in (b.a, b.b))

    def neighbors(self, idx):
        """(neighbor index, bond order) pairs of atom `idx`."""
        out = []
        for b in self.bonds:
            if b.a == idx:
                out.append((b.b, b.order))
            elif b.b == idx:
                out.append((b.a, b.order))
        return out


class _Parser():

    def __init__(self, smiles):
        self.s = smiles
        self.atoms = []
        self.bonds = {}
        self.prev = None
        self.branches = []  # (anchor atom, position of '(')
        self.pending = None  # (BondOrder, position)
        self.rings = {}  # ring number -> (atom, BondOrder or None, position)
        self.n_ring_closures = 0
        self.last = None  # kind of the last token

    def error(self, message, pos):
        raise SmilesParseError(message, pos, self.s)

    def parse(self) -> DrugMolecule:
        s = self.s
        if not s:
            self.error('empty SMILES', 0)
        i = 0
        while i < len(s):
            ch = s[i]
            if ch == '[':
                i = self._bracket_atom(i)
                continue
            if s.startswith(('Cl', 'Br'), i):
                self._add_atom(Atom(s[i:i + 2]), i)
                i += 2
                continue
            if ch in ORGANIC:
                self._add_atom(Atom(ch), i)
            elif ch in AROMATIC_ORGANIC:
                self._add_atom(Atom(ch.upper(), aromatic=True), i)
            elif ch in BOND_SYMBOLS:
                if self.prev is None:
                    self.error('bond without a preceding atom', i)
                if self.pending is not None:
                    self.error('consecutive bond symbols', i)
                self.pending = (BOND_SYMBOLS[ch], i)
                self.last = 'bond'
            elif ch == '.':
                if self.prev is None or self.pending is not None:
                    self.error("misplaced '.'", i)
                self.prev = None
                self.last = 'dot'
            elif ch == '(':
                if self.prev is None:
                    self.error('branch without a preceding atom', i)
                if self.pending is not None:
                    self.error('bond symbol before a branch', i)
                self.branches.append((self.prev, i))
                self.last = 'open'
            elif ch == ')':
                if not self.branches:
                    self.error("unbalanced ')'", i)
                if self.pending is not None:
                    self.error('bond symbol without a following atom', self.pending[1])
                if self.last == 'open':
                    self.error('empty branch', i)
                self.prev = self.branches.pop()[0]
                self.last = 'close'
            elif ch.isdigit():
                self._ring_bond(int(ch), i)
            elif ch == '%':
                digits = s[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    self.error("'%' must be followed by two digits", i)
                self._ring_bond(int(s[i + 1:i + 3]), i)
                i += 3
                continue
            elif ch in UNSUPPORTED:
                self.error(UNSUPPORTED[ch], i)
            else:
                self.error(f'unknown token {ch!r}', i)
            i += 1

        if self.pending is not None:
            self.error('bond symbol without a following atom', self.pending[1])
        if self.branches:
            self.error("unbalanced '('", len(s))
        if self.rings:
            num, (_, _, pos) = min(self.rings.items(), key=lambda kv: kv[1][2])
            self.error(f'unpaired ring closure {num}', pos)
        if self.last == 'dot':
            self.error("trailing '.'", len(s) - 1)

        bonds = [Bond(a, b, order) for (a, b), order in sorted(self.bonds.items())]
        mol = DrugMolecule(self.atoms, bonds, smiles=s, ring_closures=self.n_ring_closures)
        _fill_implicit_hydrogens(mol)
        return mol

    def _add_atom(self, atom, pos):
        idx = len(self.atoms)
        self.atoms.append(atom)
        if self.prev is not None:
            if self.pending is not None:
                order = self.pending[0]
            elif atom.aromatic and self.atoms[self.prev].aromatic:
                order = BondOrder.AROMATIC
            else:
                order = BondOrder.SINGLE
            self._add_bond(self.prev, idx, order, pos)
        self.pending = None
        self.prev = idx
        self.last = 'atom'

    def _add_bond(self, a, b, order, pos):
        key = (min(a, b), max(a, b))
        if a == b:
            self.error('ring closure bonds an atom to itself', pos)
        if key in self.bonds:
            self.error(f'duplicate bond between atoms {key[0]} and {key[1]}', pos)
        self.bonds[key] = order

    def _ring_bond(self, num, pos):
        if self.prev is None:
            self.error('ring closure without a preceding atom', pos)
        order = self.pending[0] if self.pending is not None else None
        if num in self.rings:
            other, open_order, _ = self.rings.pop(num)
            if order is not None and open_order is not None and order != open_order:
                self.error(f'conflicting bond orders for ring closure {num}', pos)
            order = order or open_order
            if order is None:
                both_aromatic = self.atoms[other].aromatic and self.atoms[self.prev].aromatic
                order = BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE
            self._add_bond(other, self.prev, order, pos)
            self.n_ring_closures += 1
        else:
            self.rings[num] = (self.prev, order, pos)
        self.pending = None
        self.last = 'ring'

    def _bracket_atom(self, start):
        s = self.s
        end = s.find(']', start)
        if end < 0:
            self.error("unclosed '['", start)
        i = start + 1
        if i < end and s[i].isdigit():
            self.error('isotopes are not supported', i)

        symbol, aromatic = None, False
        for cand in AROMATIC_BRACKET:
            if s.startswith(cand, i):
                symbol, aromatic = cand.capitalize(), True
                break
        if symbol is None:
            if s[i:i + 2] in ELEMENTS and s[i + 1:i + 2].islower():
                symbol = s[i:i + 2]
            elif s[i:i + 1] in ELEMENTS:
                symbol = s[i]
            elif s[i:i + 1] == '*':
                self.error(UNSUPPORTED['*'], i)
            else:
                self.error('unknown element in bracket atom', i)
        i += len(symbol)

        if s[i:i + 1] == '@':
            self.error(UNSUPPORTED['@'], i)
        hcount = 0
        if s[i:i + 1] == 'H':
            i += 1
            hcount = 1
            if s[i:i + 1].isdigit():
                hcount = int(s[i])
                i += 1
        charge = 0
        if s[i:i + 1] in ('+', '-'):
            sign = 1 if s[i] == '+' else -1
            j = i + 1
            if s[j:j + 1].isdigit():
                while j < end and s[j].isdigit():
                    j += 1
                charge = sign * int(s[i + 1:j])
            else:
                while j < end and s[j] == s[i]:
                    j += 1
                charge = sign * (j - i)
            i = j
        if s[i:i + 1] == ':':
            self.error('atom classes are not supported', i)
        if i != end:
            self.error('malformed bracket atom', i)
        self._add_atom(Atom(symbol, aromatic=aromatic, charge=charge, hcount=hcount, bracket=True),
                       start)
        return end + 1


def _fill_implicit_hydrogens(mol: DrugMolecule):
    """Implicit H from standard valences; aromatic atoms use their lowest valence and
    count one extra bond for the delocalized system."""
    used = [0] * mol.num_atoms
    for b in mol.bonds:
        used[b.a] += BOND_VALENCE[b.order]
        used[b.b] += BOND_VALENCE[b.order]
    for idx, atom in enumerate(mol.atoms):
        if atom.bracket or atom.symbol not in VALENCES:
            continue
        if atom.aromatic:
            atom.hcount = max(0, VALENCES[atom.symbol][0] - used[idx] - 1)
        else:
            fitting = [v for v in VALENCES[atom.symbol] if v >= used[idx]]
            atom.hcount = fitting[0] - used[idx] if fitting else 0


def parse_smiles(smiles: str) -> DrugMolecule:
    """Parses a SMILES string (see module docstring for the supported subset).

    Raises
    ------
    SmilesParseError
        with the 0-based `position` of the offending character.
    """
    if not smiles.isascii():
        raise SmilesParseError('non-ASCII character', next(i for i, c in enumerate(smiles)
                                                           if not c.isascii()), smiles)
    return _Parser(smiles.strip()).parse()


def parse_smiles_lines(lines: Iterable[str]) -> Tuple[List, List[Tuple[int, int, str]]]:
    """Parses one SMILES per line.

    Returns
    -------
    molecules: list
        parsed molecule or None per line
    rejections: list of (line number, column, message)
        1-based line numbers and 0-based columns
    """
    molecules, rejections = [], []
    for lineno, line in enumerate(lines, start=1):
        try:
            molecules.append(parse_smiles(line.strip()))
        except SmilesParseError as e:
            molecules.append(None)
            rejections.append((lineno, e.position, e.reason))
            logger.warning('line %d, column %d: %s', lineno, e.position, e.reason)
    return molecules, rejections


def _one_hot(value, size):
    v = np.zeros(size)
    v[min(value, size - 1)] = 1
    return v


def atom_features(mol: DrugMolecule, idx: int) -> np.ndarray:
    """78-dimensional feature vector of atom `idx` (layout in the module docstring)."""
    atom = mol.atoms[idx]
    element = np.zeros(len(ATOM_SYMBOLS))
    element[ATOM_SYMBOLS.index(atom.symbol) if atom.symbol in ATOM_SYMBOLS else -1] = 1
    return np.concatenate([element,
                           _one_hot(mol.degree(idx), MAX_COUNT + 1),
                           _one_hot(atom.hcount, MAX_COUNT + 1),
                           _one_hot(atom.implicit_valence, MAX_COUNT + 1),
                           [float(atom.aromatic)]])


def bond_features(bond: Bond) -> np.ndarray:
    return np.array([bond.order == o for o in BondOrder], dtype=np.float64)


def drug_molecular_graph(mol: DrugMolecule, name: str = '') -> MolecularGraph:
    x = torch.as_tensor(np.stack([atom_features(mol, k) for k in range(mol.num_atoms)]),
                        dtype=DTYPE)
    edge_attr = np.stack([bond_features(b) for b in mol.bonds]) if mol.bonds else np.zeros((0, len(BondOrder)))
    return MolecularGraph(x, [(b.a, b.b) for b in mol.bonds], name=name, edge_attr=edge_attr)
