import unittest

import numpy as np
import torch

from hgdta.errors import GraphError
from hgdta.graphs.affinity import (AffinityGraph, AffinityMatrix, AffinityNormalizer,
                                   build_affinity_adjacency, build_node_signals, degree_stats,
                                   drop_edge, minmax_normalize, normalize_adjacency, topk_prune)
from hgdta.tensor import DTYPE


def random_matrix(rng, n_d, n_t, density=1.0, mask_share=0.0):
    entries = {(i, j): float(rng.uniform(5, 10)) for i in range(n_d) for j in range(n_t)
               if rng.random() < density}
    mask = [p for p in sorted(entries) if rng.random() < mask_share]
    return AffinityMatrix(n_d, n_t, entries, frozenset(mask))


class TestAffinityGraph(unittest.TestCase):

    def test_normalize_adjacency_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            M = rng.random((8, 8)) * (rng.random((8, 8)) < 0.6)
            M = np.triu(M, 1)
            M = M + M.T
            A_hat = normalize_adjacency(torch.as_tensor(M, dtype=DTYPE)).numpy()
            deg = M.sum(axis=1)
            ref = np.zeros_like(M)
            for u in range(8):
                for v in range(8):
                    if deg[u] > 0 and deg[v] > 0:
                        ref[u, v] = M[u, v] / np.sqrt(deg[u] * deg[v])
            np.testing.assert_allclose(A_hat, ref, rtol=0, atol=1e-12)
            np.testing.assert_allclose(A_hat, A_hat.T, rtol=0, atol=1e-12)

    def test_negative_adjacency(self):
        with self.assertRaises(GraphError):
            normalize_adjacency(-torch.eye(2, dtype=DTYPE))

    def test_adjacency_weighted_and_binary(self):
        aff = AffinityMatrix(2, 2, {(0, 0): 5.0, (0, 1): 7.0, (1, 1): 9.0}, frozenset([(1, 1)]))
        A = build_affinity_adjacency(aff)
        # visible values 5 and 7 normalize to 0 and 1; the masked pair is no edge
        assert A[0, 2].item() == 0.0 and A[0, 3].item() == 1.0
        assert A[1, 3].item() == 0.0
        assert torch.equal(A, A.T)
        B = build_affinity_adjacency(aff, weighted=False)
        assert B[0, 2].item() == 1.0 and B[0, 3].item() == 1.0 and B[1, 3].item() == 0.0
        assert B.sum().item() == 4.0

    def test_node_signals(self):
        aff = AffinityMatrix(2, 2, {(0, 0): 5.0, (1, 1): 6.0}, frozenset([(1, 1)]))
        X = build_node_signals(aff).numpy()
        assert X.shape == (4, 6)
        np.testing.assert_array_equal(X[:, :2], [[1, 0], [1, 0], [0, 1], [0, 1]])
        # drug 0 <-> target 0 (node 2) only
        np.testing.assert_array_equal(X[0, 2:], [0, 0, 1, 0])
        np.testing.assert_array_equal(X[2, 2:], [1, 0, 0, 0])
        np.testing.assert_array_equal(X[1, 2:], [0, 0, 0, 0])

    def test_normalizer(self):
        norm = AffinityNormalizer.fit([5.0, 7.0, 9.0])
        np.testing.assert_allclose(norm.transform([5.0, 8.0]), [0.0, 0.75])
        np.testing.assert_allclose(norm.inverse_transform(norm.transform([6.5])), [6.5])
        np.testing.assert_array_equal(minmax_normalize([3.0, 3.0]), [0.0, 0.0])
        with self.assertRaises(GraphError):
            minmax_normalize([])

    def test_matrix_validation(self):
        with self.assertRaises(GraphError):
            AffinityMatrix(1, 1, {(1, 0): 1.0})
        with self.assertRaises(GraphError):
            AffinityMatrix(1, 1, {(0, 0): 1.0}, frozenset([(0, 1)]))
        with self.assertRaises(GraphError):
            AffinityMatrix.from_triples(2, 2, [(0, 0, 1.0), (0, 0, 2.0)])

    def test_drop_edge_retention(self):
        rng = np.random.default_rng(1)
        aff = random_matrix(rng, 100, 100)
        A = build_affinity_adjacency(aff, weighted=False)
        n_edges = int(torch.triu(A, 1).sum().item())
        assert n_edges == 10000
        kept = [torch.triu(drop_edge(A, 0.2, seed), 1).sum().item() / n_edges for seed in range(50)]
        assert abs(np.mean(kept) - 0.8) < 0.02

    def test_drop_edge_is_symmetric_and_seeded(self):
        aff = random_matrix(np.random.default_rng(2), 5, 4)
        A = build_affinity_adjacency(aff)
        D = drop_edge(A, 0.5, seed=7)
        assert torch.equal(D, D.T)
        assert torch.equal(D, drop_edge(A, 0.5, seed=7))
        assert torch.equal(drop_edge(A, 0.0, seed=7), A)
        assert drop_edge(A, 1.0, seed=7).sum().item() == 0.0
        with self.assertRaises(GraphError):
            drop_edge(A, 1.5, seed=0)

    def test_topk_prune_bounds_and_idempotence(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            aff = random_matrix(rng, 12, 9, density=0.7, mask_share=0.1)
            pruned = topk_prune(aff, topk_d=3, topk_t=4)
            visible = pruned.visible()
            assert all(np.bincount([j for _, j in visible], minlength=9) <= 4)
            assert all(np.bincount([i for i, _ in visible], minlength=12) <= 3)
            assert pruned.mask == aff.mask
            again = topk_prune(pruned, topk_d=3, topk_t=4)
            assert again.entries == pruned.entries

    def test_topk_prune_keeps_strongest(self):
        aff = AffinityMatrix(3, 1, {(0, 0): 5.0, (1, 0): 9.0, (2, 0): 7.0})
        pruned = topk_prune(aff, topk_d=5, topk_t=2)
        assert sorted(pruned.entries) == [(1, 0), (2, 0)]
        tied = AffinityMatrix(3, 1, {(0, 0): 5.0, (1, 0): 5.0, (2, 0): 5.0})
        assert sorted(topk_prune(tied, 5, 1).entries) == [(0, 0)]

    def test_regular_graph_entries(self):
        aff = AffinityMatrix(3, 3, {(i, j): float(i + 2 * j) for i in range(3) for j in range(3)})
        A_hat = normalize_adjacency(build_affinity_adjacency(aff, weighted=False))
        nonzero = A_hat[A_hat != 0]
        assert nonzero.numel() == 18
        torch.testing.assert_close(nonzero, torch.full_like(nonzero, 1 / 3), rtol=0, atol=1e-15)

    def test_degree_stats(self):
        aff = AffinityMatrix(2, 2, {(0, 0): 1.0, (0, 1): 1.0, (1, 1): 1.0})
        stats = degree_stats(aff)
        assert stats == {'target_mean': 1.5, 'target_max': 2, 'drug_mean': 1.5, 'drug_max': 2}

    def test_graph_resample(self):
        aff = random_matrix(np.random.default_rng(4), 6, 5)
        graph = AffinityGraph(aff)
        assert graph.signal_dim == 2 + 11
        assert torch.equal(graph.resample(0.0), normalize_adjacency(graph.A))
        dropped = graph.resample(0.5, seed=1)
        assert torch.equal(dropped, graph.resample(0.5, seed=1))
        assert not torch.equal(dropped, graph.resample(0.0))
        # the normalizer is fitted on visible training values only
        assert graph.normalizer.lo == min(aff.visible().values())


if __name__ == '__main__':
    unittest.main()
