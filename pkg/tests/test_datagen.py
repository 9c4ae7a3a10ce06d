import math

import numpy as np
import pytest

from bnmix.datagen import (
    GroundTruthNetwork,
    make_expert,
    random_network,
    sample,
)
from bnmix.model import n_edge_genes


class TestRandomNetwork:
    def test_structural_constraints(self, rng):
        for n_vars in (4, 8, 20):
            for kind in ("ew", "ef", "random"):
                net = random_network(n_vars, kind, rng)
                assert net.dag.n_edges <= int(0.4 * n_edge_genes(n_vars))
                assert all(len(ps) <= 6 for ps in net.dag.parents)

    def test_edge_cap_20_vars(self, rng):
        assert n_edge_genes(20) == 190
        for _ in range(5):
            net = random_network(20, "random", rng)
            assert net.dag.n_edges <= 76

    def test_discrete_count_minimum_one(self, rng):
        net = random_network(8, "random", rng)
        n_disc = sum(1 for m in net.meta if not m.is_continuous)
        assert n_disc == 1  # ceil(0.8) with the minimum rule

    def test_discrete_count_scales(self, rng):
        net = random_network(25, "random", rng)
        assert sum(1 for m in net.meta if not m.is_continuous) == 3

    def test_ef_rows_uniform(self, rng):
        net = random_network(6, "ef", rng)
        for cpt in net.cpts:
            assert np.allclose(cpt, 1.0 / cpt.shape[1])

    def test_levels_in_range_and_rows_normalized(self, rng):
        net = random_network(7, "random", rng)
        assert np.all((net.levels >= 2) & (net.levels <= 6))
        for cpt in net.cpts:
            assert np.allclose(cpt.sum(axis=1), 1.0, atol=1e-9)

    def test_ew_ranges_equally_spaced(self, rng):
        net = random_network(6, "ew", rng)
        for v, edges in net.ranges.items():
            b = int(net.levels[v])
            assert np.allclose(edges, np.linspace(0, 1, b + 1))

    def test_ranges_adjacent_and_ordered(self, rng):
        net = random_network(6, "random", rng)
        for edges in net.ranges.values():
            assert edges[0] == 0.0 and edges[-1] == 1.0
            assert np.all(np.diff(edges) > 0)

    def test_seeded_regeneration_identical(self):
        a = random_network(9, "random", np.random.default_rng(42))
        b = random_network(9, "random", np.random.default_rng(42))
        assert a.dag.parents == b.dag.parents
        assert all(np.array_equal(x, y) for x, y in zip(a.cpts, b.cpts))
        assert all(np.array_equal(a.ranges[k], b.ranges[k]) for k in a.ranges)


class TestSample:
    def test_single_row(self, rng):
        net = random_network(5, "random", rng)
        data = sample(net, 1, rng)
        assert data.n == 1
        assert len(data.columns) == 5

    def test_uniform_root_frequencies(self, rng):
        # an "ef" network has uniform rows everywhere, so every variable's
        # marginal level distribution is uniform
        net = random_network(4, "ef", rng)
        n = 30_000
        data = sample(net, n, rng)
        for v in range(4):
            lv = net.level_of(v, data.columns[v])
            k = int(net.levels[v])
            counts = np.bincount(lv, minlength=k)
            sigma = math.sqrt(n * (1 / k) * (1 - 1 / k))
            assert np.all(np.abs(counts - n / k) < 3.5 * sigma)

    def test_continuous_values_inside_level_range(self, rng):
        net = random_network(6, "random", rng)
        data = sample(net, 2000, rng)
        for v, edges in net.ranges.items():
            lv = net.level_of(v, data.columns[v])
            lo = edges[lv]
            hi = edges[lv + 1]
            col = data.columns[v]
            assert np.all((col >= lo) & (col < hi))

    def test_marginals_match_cpts_for_roots(self, rng):
        net = random_network(6, "random", rng)
        roots = [v for v in range(6) if not net.dag.parents[v]]
        n = 30_000
        data = sample(net, n, rng)
        for v in roots:
            lv = net.level_of(v, data.columns[v])
            k = int(net.levels[v])
            counts = np.bincount(lv, minlength=k)
            for level in range(k):
                p = net.cpts[v][0, level]
                sigma = math.sqrt(n * p * (1 - p)) + 1e-9
                assert abs(counts[level] - n * p) < 4 * sigma

    def test_log_density_matches_product_rule(self, rng):
        net = random_network(4, "random", rng)
        data = sample(net, 50, rng)
        ld = net.log_density(data.columns)
        # independent recomputation, sample by sample
        for t in range(10):
            total = 0.0
            levels = {v: int(net.level_of(v, data.columns[v][t : t + 1])[0]) for v in range(4)}
            for v in range(4):
                cfg = 0
                stride = 1
                for p in net.dag.parents[v]:
                    cfg += levels[p] * stride
                    stride *= int(net.levels[p])
                total += math.log(net.cpts[v][cfg, levels[v]])
                if net.meta[v].is_continuous:
                    e = net.ranges[v]
                    total -= math.log(e[levels[v] + 1] - e[levels[v]])
            assert abs(total - ld[t]) < 1e-9


class TestMakeExpert:
    def test_edge_budget(self, rng):
        for _ in range(20):
            net = random_network(8, "random", rng)
            l_edges = net.dag.n_edges
            expert = make_expert(net, rng)
            true_pairs = {frozenset(e) for e in net.dag.edge_set()}
            expert_edges = expert.dag.edge_set()
            kept = [e for e in expert_edges if frozenset(e) in true_pairs]
            wrong = [e for e in expert_edges if frozenset(e) not in true_pairs]
            assert len(kept) == l_edges // 2
            assert len(wrong) == l_edges // 2

    def test_kept_edges_are_true_edges(self, rng):
        net = random_network(6, "random", rng)
        expert = make_expert(net, rng)
        true_edges = net.dag.edge_set()
        for e in expert.dag.edge_set():
            if frozenset(e) in {frozenset(t) for t in true_edges}:
                assert e in true_edges  # direction preserved for known edges

    def test_bins_and_boundaries(self, rng):
        net = random_network(6, "random", rng)
        expert = make_expert(net, rng)
        for v, m in enumerate(net.meta):
            if m.is_continuous:
                assert 2 <= expert.bins[v] <= 4
                b = expert.boundaries[v]
                assert b.size == expert.bins[v] - 1
                assert np.all((b > 0) & (b < 1))

    def test_to_solution_model(self, rng):
        net = random_network(5, "random", rng)
        expert = make_expert(net, rng)
        model = expert.to_solution_model(net.meta)
        assert model.dag is expert.dag

    def test_too_few_edges_rejected(self, rng):
        net = random_network(4, "random", rng)
        thin = GroundTruthNetwork(
            dag=net.dag.from_edges(4, [(0, 1)]),
            meta=net.meta,
            levels=net.levels,
            cpts=net.cpts,
            ranges=net.ranges,
            kind=net.kind,
        )
        with pytest.raises(ValueError):
            make_expert(thin, rng)
