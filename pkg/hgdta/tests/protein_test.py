import itertools
import os
import tempfile
import unittest
from functools import lru_cache

import numpy as np

from hgdta.chem.alignment import AlignmentScoring, smith_waterman_score, smith_waterman_similarity
from hgdta.chem.protein import (RESIDUE_FEATURE_DIM, ContactMap, contact_edges, load_contact_map,
                                load_pssm, residue_features, save_contact_map, synthesize_contact_map,
                                target_molecular_graph, validate_sequence)
from hgdta.errors import ContactMapError, SequenceError

opj = os.path.join


def brute_force_local(a, b, match=2.0, mismatch=-1.0, gap=-1.0):
    '''best score over every substring pair of every global alignment (recursive enumeration)
    '''
    @lru_cache(maxsize=None)
    def best_global(x, y):
        if not x:
            return gap * len(y)
        if not y:
            return gap * len(x)
        s = match if x[0] == y[0] else mismatch
        return max(s + best_global(x[1:], y[1:]), gap + best_global(x[1:], y), gap + best_global(x, y[1:]))

    best = 0.0
    for i, j in itertools.combinations(range(len(a) + 1), 2):
        for k, l in itertools.combinations(range(len(b) + 1), 2):
            best = max(best, best_global(a[i:j], b[k:l]))
    return best


class TestAlignment(unittest.TestCase):

    def test_matches_enumeration_on_short_sequences(self):
        alphabet = 'ACGT'
        short = [''.join(p) for n in range(1, 4) for p in itertools.product(alphabet, repeat=n)]
        for a in short:
            for b in short:
                assert smith_waterman_score(a, b) == brute_force_local(a, b), (a, b)
        rng = np.random.default_rng(0)
        for _ in range(300):
            a = ''.join(rng.choice(list(alphabet), size=rng.integers(1, 7)))
            b = ''.join(rng.choice(list(alphabet), size=rng.integers(1, 7)))
            assert smith_waterman_score(a, b) == brute_force_local(a, b), (a, b)

    def test_similarity(self):
        assert smith_waterman_score('ACG', 'AG') == 3.0
        assert abs(smith_waterman_similarity('ACG', 'AG') - 3 / np.sqrt(24)) < 1e-12
        rng = np.random.default_rng(1)
        for _ in range(100):
            seq = ''.join(rng.choice(list('ACDEFGHIKLMNPQRSTVWY'), size=rng.integers(1, 40)))
            assert smith_waterman_similarity(seq, seq) == 1.0
        assert smith_waterman_similarity('AAAA', 'CCCC') == 0.0

    def test_custom_scoring(self):
        scoring = AlignmentScoring(match=1.0, mismatch=-3.0, gap=-5.0)
        assert smith_waterman_score('ACGT', 'ACTT', scoring) == 2.0
        assert smith_waterman_score('ACGT', 'ACTT', scoring) == brute_force_local('ACGT', 'ACTT', 1.0, -3.0, -5.0)

    def test_empty_sequence(self):
        with self.assertRaises(SequenceError):
            smith_waterman_score('', 'A')


class TestContactMaps(unittest.TestCase):

    def test_validate_sequence(self):
        assert validate_sequence('ACDX') == 'ACDX'
        for bad in ('', 'ACDZ', 'acd'):
            with self.assertRaises(SequenceError):
                validate_sequence(bad)

    def test_contact_edges_threshold_is_inclusive(self):
        scores = np.eye(4)
        scores[0, 2] = scores[2, 0] = 0.5
        scores[0, 3] = scores[3, 0] = 0.49
        edges = contact_edges(ContactMap(scores), threshold=0.5)
        assert edges == {(0, 1), (1, 2), (2, 3), (0, 2)}
        for bad in (0.0, 1.0):
            with self.assertRaises(ContactMapError):
                contact_edges(ContactMap(scores), threshold=bad)

    def test_save_load_identity(self):
        cmap = synthesize_contact_map('ACDEFGHIKLMNPQ', seed=3, density=0.3)
        with tempfile.TemporaryDirectory() as tmp:
            path = opj(tmp, 'maps', 'T.txt')
            save_contact_map(cmap, path)
            loaded = load_contact_map(path, expected_length=14)
        assert np.array_equal(loaded.scores, cmap.scores)

    def test_load_rejects_bad_maps(self):
        bad_maps = {'asym': np.array([[1.0, 0.2], [0.8, 1.0]]),
                    'range': np.array([[1.0, 1.5], [1.5, 1.0]]),
                    'size': np.eye(3)}
        with tempfile.TemporaryDirectory() as tmp:
            for name, scores in bad_maps.items():
                path = opj(tmp, f'{name}.txt')
                np.savetxt(path, scores)
                with self.assertRaises(ContactMapError):
                    load_contact_map(path, expected_length=2)
            with self.assertRaises(ContactMapError):
                load_contact_map(opj(tmp, 'missing.txt'))

    def test_synthesized_map(self):
        cmap = synthesize_contact_map('ACDEFGHIKLMNPQRSTVWY', seed=0, density=0.2)
        s = cmap.scores
        assert np.array_equal(s, s.T)
        assert np.all(np.diag(s) == 1.0)
        assert np.all(np.diag(s, 1) == 1.0)
        off = s[np.triu_indices(20, k=2)]
        assert np.all((off == 0) | ((off >= 0.5) & (off <= 1.0)))
        assert np.array_equal(s, synthesize_contact_map('ACDEFGHIKLMNPQRSTVWY', seed=0, density=0.2).scores)

    def test_target_graph(self):
        seq = 'MFKA'
        cmap = ContactMap(np.eye(4))
        graph = target_molecular_graph(seq, cmap, name='T1')
        assert graph.x.shape == (4, RESIDUE_FEATURE_DIM) == (4, 27)
        assert graph.edges == [(0, 1), (1, 2), (2, 3)]
        f = residue_features(seq, 1)
        assert f[4] == 1  # one-hot of 'F'
        assert f[21 + 1] == 1 and f[21 + 5] == 1  # aromatic, hydrophobic
        pssm = np.arange(80, dtype=float).reshape(4, 20)
        assert target_molecular_graph(seq, cmap, pssm=pssm).x.shape == (4, 47)
        with self.assertRaises(ContactMapError):
            target_molecular_graph('MFK', cmap)

    def test_load_pssm(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = opj(tmp, 'p.txt')
            np.savetxt(path, np.zeros((3, 20)))
            assert load_pssm(path, 3).shape == (3, 20)
            with self.assertRaises(ContactMapError):
                load_pssm(path, 4)


if __name__ == '__main__':
    unittest.main()
