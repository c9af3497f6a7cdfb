import os
import tempfile
import unittest

import numpy as np
import torch

from hgdta.chem.smiles import parse_smiles
from hgdta.coldstart import (SimilarityMatrix, drug_similarity_fn, infer_embeddings,
                             infer_unseen_embedding, load_similarity_file, similarity_matrix,
                             target_similarity_fn)
from hgdta.errors import ColdStartError, ContractViolation, DatasetError
from hgdta.tensor import DTYPE
from hgdta.utils.evaluate import apply_cold_start

opj = os.path.join


class TestColdStart(unittest.TestCase):

    def setUp(self):
        self.H = torch.tensor([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]], dtype=DTYPE)

    def test_weighted_mean_of_top_k(self):
        out = infer_unseen_embedding([0.2, 0.6, 0.0], self.H, simk=2)
        torch.testing.assert_close(out, torch.tensor([0.25, 0.75], dtype=DTYPE), rtol=0, atol=1e-12)

    def test_simk_one_copies_the_nearest_row(self):
        out = infer_unseen_embedding([0.1, 0.3, 0.9], self.H, simk=1)
        assert torch.equal(out, self.H[2])

    def test_ties_prefer_lower_index(self):
        out = infer_unseen_embedding([0.5, 0.5, 0.5], self.H, simk=1)
        assert torch.equal(out, self.H[0])

    def test_all_zero_similarities_average_uniformly(self):
        out = infer_unseen_embedding([0.0, 0.0, 0.0], self.H, simk=2)
        torch.testing.assert_close(out, torch.tensor([0.5, 0.5], dtype=DTYPE), rtol=0, atol=1e-12)

    def test_output_stays_in_the_hull_of_the_chosen_rows(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            H = torch.as_tensor(rng.standard_normal((6, 3)), dtype=DTYPE)
            sim = rng.random(6)
            simk = int(rng.integers(1, 7))
            out = infer_unseen_embedding(sim, H, simk)
            chosen = H[torch.as_tensor(np.argsort(-sim, kind='stable')[:simk])]
            assert torch.all(out >= chosen.min(dim=0).values - 1e-12)
            assert torch.all(out <= chosen.max(dim=0).values + 1e-12)

    def test_larger_simk_moves_toward_the_mean(self):
        H = torch.as_tensor(np.random.default_rng(1).standard_normal((5, 2)), dtype=DTYPE)
        mean = H.mean(dim=0)
        dists = [torch.linalg.norm(infer_unseen_embedding([0.3] * 5, H, k) - mean).item() for k in range(1, 6)]
        assert dists[-1] < 1e-12
        assert dists[0] > dists[-1]

    def test_contract(self):
        with self.assertRaises(ContractViolation):
            infer_unseen_embedding([0.5, 0.5], self.H, simk=1)
        with self.assertRaises(ContractViolation):
            infer_unseen_embedding([0.5, 0.5, 0.5], self.H, simk=4)
        with self.assertRaises(ContractViolation):
            infer_unseen_embedding([0.5, 0.5, 0.5], self.H, simk=0)
        with self.assertRaises(ContractViolation):
            SimilarityMatrix(np.array([[1.5]]), [0], [1])

    def test_similarity_matrix_overrides(self):
        fn = lambda a, b: 0.1 * (a + b)  # noqa: E731
        sim = similarity_matrix([3, 4], [0, 1], fn, overrides={(4, 1): 0.9})
        np.testing.assert_allclose(sim.values, [[0.3, 0.4], [0.0, 0.9]])
        np.testing.assert_allclose(sim.row(4), [0.0, 0.9])
        with self.assertRaises(ColdStartError):
            sim.row(7)

    def test_missing_similarity_names_entity(self):
        with self.assertRaises(ColdStartError) as ctx:
            similarity_matrix([1], [0], None, names=['D0', 'D1'])
        assert 'D1' in str(ctx.exception)
        # ColdStartError is also a KeyError
        with self.assertRaises(KeyError):
            similarity_matrix([1], [0])

    def test_infer_embeddings_rows(self):
        sim = SimilarityMatrix(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), [5, 6], [0, 1, 2])
        out = infer_embeddings(self.H, sim, simk=1)
        assert torch.equal(out, self.H[[0, 2]])

    def test_apply_cold_start_replaces_only_unseen_rows(self):
        H = torch.arange(12, dtype=DTYPE).reshape(6, 2)  # 3 drugs, 3 targets
        drug_sim = SimilarityMatrix(np.array([[0.0, 1.0]]), [2], [0, 1])
        target_sim = SimilarityMatrix(np.array([[1.0, 0.0]]), [0], [1, 2])
        out, routing = apply_cold_start(H, 3, drug_sim, target_sim, simk_drug=1, simk_target=5)
        assert routing.inferred_drugs == [2] and routing.inferred_targets == [0]
        assert torch.equal(out[2], H[1])
        # simK is lowered to the two known targets: weights 1 and 0
        assert torch.equal(out[3], H[4])
        assert torch.equal(out[[0, 1, 4, 5]], H[[0, 1, 4, 5]])
        assert torch.equal(H, torch.arange(12, dtype=DTYPE).reshape(6, 2))

    def test_similarity_functions(self):
        molecules = [parse_smiles(s) for s in ('CCO', 'CCO', 'c1ccccc1')]
        drug_sim = drug_similarity_fn(molecules)
        assert drug_sim(0, 1) == 1.0
        assert drug_sim(0, 2) < 1.0
        target_sim = target_similarity_fn(['ACG', 'AG'])
        assert abs(target_sim(0, 1) - 3 / np.sqrt(24)) < 1e-12

    def test_load_similarity_file(self):
        ids = {'D0': 0, 'D1': 1, 'D2': 2}
        with tempfile.TemporaryDirectory() as tmp:
            path = opj(tmp, 'sim.tsv')
            with open(path, 'w') as f:
                f.write('# unseen known value\nD2\tD0\t0.8\nD2 D1 0.25\n')
            assert load_similarity_file(path, ids) == {(2, 0): 0.8, (2, 1): 0.25}
            with open(path, 'w') as f:
                f.write('D2\tD9\t0.8\n')
            with self.assertRaises(DatasetError):
                load_similarity_file(path, ids)
            with open(path, 'w') as f:
                f.write('D2\tD0\t1.8\n')
            with self.assertRaises(DatasetError):
                load_similarity_file(path, ids)


if __name__ == '__main__':
    unittest.main()
