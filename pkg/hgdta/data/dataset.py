"""Flat-file dataset ingestion.

Directory layout::

    drugs.tsv            drug_id <TAB> smiles
    targets.tsv          target_id <TAB> sequence
    affinities.tsv       drug_id <TAB> target_id <TAB> value
    contact_maps/<target_id>.txt
    pssm/<target_id>.txt         optional, n_r x 20
    sim_drugs.tsv                optional, unseen_id known_id value
    sim_targets.tsv              optional

davis-like affinities are K_d values in nM and are stored as pK_d = -log10(K_d / 1e9);
kiba-like and synthetic values are used as given.
"""
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from hgdta.chem.protein import (load_contact_map, load_pssm, synthesize_contact_map,
                                target_molecular_graph, validate_sequence)
from hgdta.chem.smiles import DrugMolecule, drug_molecular_graph, parse_smiles_lines
from hgdta.coldstart import load_similarity_file
from hgdta.errors import ContactMapError, DatasetError, SequenceError
from hgdta.graphs.affinity import AffinityMatrix

opj = os.path.join
logger = logging.getLogger(__name__)

KINDS = {'davis': 'davis', 'davis-like': 'davis', 'kiba': 'kiba', 'kiba-like': 'kiba',
         'synthetic': 'synthetic'}
# weak / strong binding boundary used to label exported embeddings
CLUSTER_THRESHOLDS = {'davis': 7.0, 'kiba': 12.1, 'synthetic': 7.0}


def dataset_kind(kind: str) -> str:
    try:
        return KINDS[kind.lower()]
    except KeyError:
        raise DatasetError(f'unknown dataset kind {kind!r}, expected one of {sorted(set(KINDS))}') from None


def kd_to_pkd(kd_nm):
    """pK_d = -log10(K_d / 1e9) for K_d in nM."""
    kd_nm = np.asarray(kd_nm, dtype=np.float64)
    return -np.log10(kd_nm / 1e9)


def _read_table(path, columns: List[str]) -> pd.DataFrame:
    """Reads a header-less TSV into string columns; the frame index is the 1-based line."""
    if not os.path.isfile(path):
        raise DatasetError('missing file', path=path)
    try:
        df = pd.read_csv(path, sep='\t', header=None, dtype=str, keep_default_na=False,
                         skip_blank_lines=False, quoting=csv.QUOTE_NONE).fillna('')
    except pd.errors.EmptyDataError:
        raise DatasetError('empty file', path=path) from None
    except pd.errors.ParserError as e:
        raise DatasetError(f'malformed line ({e})', path=path) from None
    if df.shape[1] != len(columns):
        raise DatasetError(f'expected {len(columns)} tab-separated columns, found {df.shape[1]}', path=path)
    df.columns = columns
    df.index = np.arange(1, len(df) + 1)
    df = df[(df != '').any(axis=1)]
    for line, row in df.iterrows():
        if (row == '').any():
            raise DatasetError(f'expected {len(columns)} non-empty columns', path=path, line=line)
    return df.apply(lambda col: col.str.strip())


def _index_ids(df, column, path):
    index = {}
    for line, name in df[column].items():
        if name in index:
            raise DatasetError(f'duplicate id {name!r}', path=path, line=line)
        index[name] = len(index)
    return index


class LazyGraphs():
    """Index -> MolecularGraph, built on first access and cached."""

    def __init__(self, n: int, build: Callable):
        self.n = n
        self._build = build
        self._cache = {}
        self.build_count = 0

    def __len__(self):
        return self.n

    def __getitem__(self, k):
        if k not in self._cache:
            if not 0 <= k < self.n:
                raise IndexError(k)
            self._cache[k] = self._build(k)
            self.build_count += 1
        return self._cache[k]


@dataclass
class DatasetBundle():
    root: str
    kind: str
    drug_ids: List[str]
    smiles: List[str]
    molecules: List[DrugMolecule]
    target_ids: List[str]
    sequences: List[str]
    affinity: AffinityMatrix
    contact_paths: List[Optional[str]]
    pssm_paths: Optional[List[str]] = None
    sim_drugs: Optional[Dict] = None
    sim_targets: Optional[Dict] = None
    contact_threshold: float = 0.5
    contact_seed: int = 0
    drug_graphs: LazyGraphs = field(init=False, repr=False)
    target_graphs: LazyGraphs = field(init=False, repr=False)

    def __post_init__(self):
        self.drug_graphs = LazyGraphs(len(self.drug_ids), self._drug_graph)
        self.target_graphs = LazyGraphs(len(self.target_ids), self._target_graph)

    @property
    def n_d(self):
        return len(self.drug_ids)

    @property
    def n_t(self):
        return len(self.target_ids)

    @property
    def drug_index(self):
        return {d: k for k, d in enumerate(self.drug_ids)}

    @property
    def target_index(self):
        return {t: k for k, t in enumerate(self.target_ids)}

    @property
    def target_feature_dim(self):
        return 27 + (20 if self.pssm_paths is not None else 0)

    @property
    def cluster_threshold(self):
        return CLUSTER_THRESHOLDS[self.kind]

    @property
    def graphs_built(self):
        return self.drug_graphs.build_count + self.target_graphs.build_count

    def _drug_graph(self, i):
        return drug_molecular_graph(self.molecules[i], name=self.drug_ids[i])

    def contact_map(self, j):
        seq = self.sequences[j]
        if self.contact_paths[j] is None:
            return synthesize_contact_map(seq, seed=self.contact_seed + j)
        return load_contact_map(self.contact_paths[j], expected_length=len(seq))

    def _target_graph(self, j):
        seq = self.sequences[j]
        pssm = None
        if self.pssm_paths is not None:
            pssm = load_pssm(self.pssm_paths[j], expected_length=len(seq))
        try:
            return target_molecular_graph(seq, self.contact_map(j), self.contact_threshold,
                                          pssm=pssm, name=self.target_ids[j])
        except ContactMapError as e:
            raise DatasetError(f'target {self.target_ids[j]!r}: {e}') from e


def load_dataset(root, kind: str = 'davis', synthesize_contacts: bool = False,
                 contact_threshold: float = 0.5, contact_seed: int = 0) -> DatasetBundle:
    """Reads and validates a dataset directory (layout in the module docstring).

    Parameters
    ----------
    synthesize_contacts: bool
        substitute a seeded synthetic contact map for every target without a file
        instead of failing
    """
    kind = dataset_kind(kind)
    root = str(root)

    path = opj(root, 'drugs.tsv')
    drugs = _read_table(path, ['id', 'smiles'])
    drug_index = _index_ids(drugs, 'id', path)
    molecules, rejections = parse_smiles_lines(drugs.smiles)
    if rejections:
        lines, ids = drugs.index.to_numpy(), drugs.id.to_numpy()
        # file line and 1-based file column (after the id and its tab)
        where = [(lines[k - 1], len(ids[k - 1]) + 2 + col, ids[k - 1], reason) for k, col, reason in rejections]
        listing = '; '.join(f'{line}:{col} drug {name!r}: {reason}' for line, col, name, reason in where)
        raise DatasetError(f'{len(where)} SMILES rejected: {listing}', path=path, line=int(where[0][0]))

    path = opj(root, 'targets.tsv')
    targets = _read_table(path, ['id', 'sequence'])
    target_index = _index_ids(targets, 'id', path)
    for line, row in targets.iterrows():
        try:
            validate_sequence(row.sequence)
        except SequenceError as e:
            raise DatasetError(f'target {row.id!r}: {e}', path=path, line=line) from e

    path = opj(root, 'affinities.tsv')
    table = _read_table(path, ['drug', 'target', 'value'])
    triples = {}
    for line, row in table.iterrows():
        if row.drug not in drug_index:
            raise DatasetError(f'unknown drug id {row.drug!r}', path=path, line=line)
        if row.target not in target_index:
            raise DatasetError(f'unknown target id {row.target!r}', path=path, line=line)
        try:
            value = float(row.value)
        except ValueError:
            raise DatasetError(f'non-numeric affinity {row.value!r}', path=path, line=line) from None
        if not np.isfinite(value):
            raise DatasetError(f'non-finite affinity {row.value!r}', path=path, line=line)
        if kind == 'davis':
            if value <= 0:
                raise DatasetError(f'K_d must be positive, got {value}', path=path, line=line)
            value = float(kd_to_pkd(value))
        pair = (drug_index[row.drug], target_index[row.target])
        if pair in triples:
            raise DatasetError(f'duplicate affinity for ({row.drug}, {row.target})', path=path, line=line)
        triples[pair] = value
    affinity = AffinityMatrix(len(drug_index), len(target_index), triples)

    target_ids = list(targets.id)
    contact_paths, n_synth = [], 0
    for t in target_ids:
        p = opj(root, 'contact_maps', f'{t}.txt')
        if os.path.isfile(p):
            contact_paths.append(p)
        elif synthesize_contacts:
            contact_paths.append(None)
            n_synth += 1
        else:
            raise DatasetError(f'no contact map for target {t!r}', path=p)
    if n_synth:
        logger.info('synthesizing contact maps for %d of %d targets', n_synth, len(target_ids))

    pssm_paths = None
    if os.path.isdir(opj(root, 'pssm')):
        pssm_paths = [opj(root, 'pssm', f'{t}.txt') for t in target_ids]
        missing = [p for p in pssm_paths if not os.path.isfile(p)]
        if missing:
            raise DatasetError('pssm/ is present but profiles are missing', path=missing[0])

    sims = {}
    for name, ids in (('sim_drugs', drug_index), ('sim_targets', target_index)):
        p = opj(root, f'{name}.tsv')
        sims[name] = load_similarity_file(p, ids) if os.path.isfile(p) else None

    logger.info('loaded %s dataset from %s: %d drugs, %d targets, %d affinities',
                kind, root, len(drug_index), len(target_index), len(triples))
    return DatasetBundle(root, kind, list(drugs.id), list(drugs.smiles), molecules, target_ids,
                         list(targets.sequence), affinity, contact_paths, pssm_paths,
                         sims['sim_drugs'], sims['sim_targets'], contact_threshold, contact_seed)
