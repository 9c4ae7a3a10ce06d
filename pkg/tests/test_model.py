import numpy as np
import pytest

from bnmix.model import (
    ContractViolation,
    Dag,
    Genotype,
    VariableMeta,
    bins_from_genotype,
    dag_from_genotype,
    decode_children,
    decode_edges,
    edges_to_genes,
    is_acyclic,
    n_edge_genes,
    pair_index,
    repair_cycles,
)
from conftest import cont_meta, disc_meta


def all_pairs_lexicographic(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


class TestPairIndex:
    def test_first_pair(self):
        assert pair_index(0, 1, 8) == 0

    def test_total_gene_count(self):
        assert n_edge_genes(8) == 28

    def test_last_pair_matches_enumeration(self):
        pairs = all_pairs_lexicographic(8)
        assert pairs.index((6, 7)) == 27
        assert pair_index(6, 7, 8) == 27

    @pytest.mark.parametrize("n", [2, 3, 5, 8, 13])
    def test_bijection_against_enumeration(self, n):
        seen = [pair_index(i, j, n) for i, j in all_pairs_lexicographic(n)]
        assert seen == list(range(n_edge_genes(n)))

    def test_invalid_pairs_rejected(self):
        with pytest.raises(ContractViolation):
            pair_index(3, 3, 8)
        with pytest.raises(ContractViolation):
            pair_index(5, 2, 8)
        with pytest.raises(ContractViolation):
            pair_index(0, 8, 8)


class TestDecode:
    def test_all_zero_is_empty(self):
        g = Genotype(np.zeros(n_edge_genes(4), dtype=np.int8), [2, 2, 2, 2])
        assert decode_edges(g, 4) == []

    def test_trit_two_reverses_direction(self):
        genes = np.zeros(n_edge_genes(5), dtype=np.int8)
        genes[pair_index(1, 3, 5)] = 2
        g = Genotype(genes, [])
        assert decode_edges(g, 5) == [(3, 1)]

    def test_three_node_chain(self):
        g = Genotype(np.array([1, 1, 1], dtype=np.int8), [])
        assert sorted(decode_edges(g, 3)) == [(0, 1), (0, 2), (1, 2)]
        assert is_acyclic(decode_children(g, 3))

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            decode_edges(Genotype(np.zeros(5, dtype=np.int8), []), 4)

    def test_decode_encode_roundtrip(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 9))
            g = Genotype(rng.integers(0, 3, n_edge_genes(n)).astype(np.int8), [])
            assert np.array_equal(edges_to_genes(decode_edges(g, n), n), g.edge_genes)


class TestIsAcyclic:
    def test_empty(self):
        assert is_acyclic([[] for _ in range(4)])

    def test_three_cycle(self):
        assert not is_acyclic([[1], [2], [0]])

    def test_dag(self):
        assert is_acyclic([[1, 2], [2], []])


class TestRepair:
    def test_acyclic_unchanged(self):
        meta = cont_meta(3)
        g = Genotype(np.array([1, 1, 1], dtype=np.int8), [2, 2, 2])
        out = repair_cycles(g, meta)
        assert out.equal(g)

    def test_three_cycle_removes_back_edge(self):
        # edges 0->1, 1->2, 2->0; the DFS from node 0 discovers 2->0 as the
        # edge closing the cycle, so exactly that edge is dropped
        meta = cont_meta(3)
        genes = np.zeros(3, dtype=np.int8)
        genes[pair_index(0, 1, 3)] = 1
        genes[pair_index(1, 2, 3)] = 1
        genes[pair_index(0, 2, 3)] = 2
        out = repair_cycles(Genotype(genes, [2, 2, 2]), meta)
        assert out.edge_genes[pair_index(0, 1, 3)] == 1
        assert out.edge_genes[pair_index(1, 2, 3)] == 1
        assert out.edge_genes[pair_index(0, 2, 3)] == 0
        assert is_acyclic(decode_children(out, 3))

    def test_cyclic_tournament(self):
        meta = cont_meta(4)
        edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 1)]  # fully connected, cyclic
        g = Genotype(edges_to_genes(edges, 4), [2] * 4)
        out = repair_cycles(g, meta)
        assert is_acyclic(decode_children(out, 4))
        kept = decode_edges(out, 4)
        assert len(kept) >= 3
        assert set(kept) <= set(edges)

    def test_random_genotypes_acyclic_and_subset(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            meta = cont_meta(n)
            g = Genotype.random(meta, 2, 15, rng)
            out = repair_cycles(g, meta)
            assert is_acyclic(decode_children(out, n))
            assert set(decode_edges(out, n)) <= set(decode_edges(g, n))
            assert np.array_equal(out.bin_genes, g.bin_genes)

    def test_deterministic(self, rng):
        meta = cont_meta(6)
        g = Genotype.random(meta, 2, 15, rng)
        a = repair_cycles(g, meta)
        b = repair_cycles(g, meta)
        assert a.equal(b)


class TestDag:
    def test_cycle_rejected(self):
        with pytest.raises(ContractViolation):
            Dag(3, ((2,), (0,), (1,)))

    def test_topological_order(self):
        dag = Dag.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
        order = dag.topological_order()
        pos = {v: k for k, v in enumerate(order)}
        for p, v in dag.edge_set():
            assert pos[p] < pos[v]

    def test_children_consistent(self):
        dag = Dag.from_edges(3, [(0, 1), (1, 2)])
        assert dag.children == ((1,), (2,), ())
        assert dag.n_edges == 2


class TestVariableMeta:
    def test_discrete_needs_cardinality(self):
        with pytest.raises(ValueError):
            VariableMeta("a", "discrete", cardinality=1)

    def test_continuous_needs_range(self):
        with pytest.raises(ValueError):
            VariableMeta("a", "continuous", raw_range=(1.0, 1.0))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            VariableMeta("a", "fuzzy")


class TestGenotypeHelpers:
    def test_bins_from_genotype_mixed(self):
        meta = disc_meta([3]) + cont_meta(2)
        g = Genotype(np.zeros(n_edge_genes(3), dtype=np.int8), [4, 7])
        assert list(bins_from_genotype(g, meta)) == [3, 4, 7]

    def test_diff_and_set(self):
        g = Genotype(np.array([0, 1, 2], dtype=np.int8), [2, 5])
        h = g.copy()
        h.set_values([1, 4], [2, 9])
        assert list(g.diff_indices(h)) == [1, 4]
        assert list(h.values_at([1, 4])) == [2, 9]

    def test_dag_from_genotype_rejects_cycles(self):
        meta = cont_meta(3)
        genes = edges_to_genes([(0, 1), (1, 2), (2, 0)], 3)
        with pytest.raises(ContractViolation):
            dag_from_genotype(Genotype(genes, [2, 2, 2]), meta)
