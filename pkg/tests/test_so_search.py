import itertools
import math

import numpy as np
import pytest

from bnmix.fitness import Evaluator, evaluate
from bnmix.linkage import gene_alphabet, learn_linkage_tree, population_matrix
from bnmix.model import (
    Genotype,
    decode_children,
    is_acyclic,
    n_edge_genes,
    repair_cycles,
)
from bnmix.so_search import LinkageTree, Solution, gom, local_search, ls_candidates, run_so
from conftest import cont_meta, make_normalized


def random_population(meta, size, rng, bin_min=2, bin_max=6):
    return [repair_cycles(Genotype.random(meta, bin_min, bin_max, rng), meta) for _ in range(size)]


class TestLinkageTree:
    def test_element_count(self, rng):
        meta = cont_meta(4)
        genos = random_population(meta, 12, rng)
        mat = population_matrix(genos, 2)
        tree = learn_linkage_tree(mat, gene_alphabet(meta, 2, 6), rng)
        L = genos[0].n_genes
        assert len(tree) == 2 * L - 2

    def test_identical_population_still_valid(self, rng):
        meta = cont_meta(3)
        g = random_population(meta, 1, rng)[0]
        mat = population_matrix([g.copy() for _ in range(8)], 2)
        tree = learn_linkage_tree(mat, gene_alphabet(meta, 2, 6), rng)
        L = g.n_genes
        assert len(tree) == 2 * L - 2
        sizes = sorted(len(e) for e in tree.elements)
        assert sizes[:L] == [1] * L

    def test_correlated_genes_merge_first(self, rng):
        meta = cont_meta(3)
        genos = []
        for _ in range(40):
            g = repair_cycles(Genotype.random(meta, 2, 6, rng), meta)
            g.edge_genes[1] = g.edge_genes[0]  # genes 0 and 1 perfectly coupled
            genos.append(repair_cycles(g, meta))
        mat = population_matrix(genos, 2)
        tree = learn_linkage_tree(mat, gene_alphabet(meta, 2, 6), rng)
        L = genos[0].n_genes
        first_merge = sorted(tree.elements[L].tolist())
        assert first_merge == [0, 1]


class TestGom:
    def _instance(self, rng, n_vars=3, n=50):
        meta = cont_meta(n_vars)
        data = make_normalized([rng.random(n) for _ in range(n_vars)], meta)
        ev = Evaluator(data, policy="ew", bin_min=2, bin_max=4)
        return meta, data, ev

    def _solution(self, geno, ev):
        bd, cache = ev.evaluate(geno)
        return Solution(geno, bd, cache)

    def test_identical_donor_is_identity(self, rng):
        meta, data, ev = self._instance(rng)
        g = random_population(meta, 1, rng, 2, 4)[0]
        sol = self._solution(g, ev)
        mat = population_matrix([g], 2)
        tree = learn_linkage_tree(mat, gene_alphabet(meta, 2, 4), rng)
        before = ev.evaluations
        out = gom(sol, tree, [sol], ev, meta, rng)
        assert out.genotype.equal(g)
        assert ev.evaluations == before  # identical copies are skipped unevaluated

    def test_full_copy_from_fitter_donor(self, rng):
        meta, data, ev = self._instance(rng)
        pool = [self._solution(g, ev) for g in random_population(meta, 8, rng, 2, 4)]
        pool.sort(key=lambda s: s.fitness)
        worst, best = pool[0], pool[-1]
        tree = LinkageTree([np.arange(worst.genotype.n_genes)])
        out = gom(worst, tree, [best], ev, meta, rng)
        assert out.fitness >= max(worst.fitness, best.fitness) - 1e-12

    def test_never_worse(self, rng):
        meta, data, ev = self._instance(rng, n_vars=4)
        pool = [self._solution(g, ev) for g in random_population(meta, 10, rng, 2, 4)]
        mat = population_matrix([s.genotype for s in pool], 2)
        tree = learn_linkage_tree(mat, gene_alphabet(meta, 2, 4), rng)
        for sol in pool:
            out = gom(sol, tree, pool, ev, meta, rng)
            assert out.fitness >= sol.fitness - 1e-12
            assert is_acyclic(decode_children(out.genotype, 4))


class TestLocalSearchCandidates:
    def test_bin_gene_at_minimum(self):
        assert ls_candidates(2, False, 2, 15) == [3]

    def test_bin_gene_at_maximum(self):
        assert ls_candidates(15, False, 2, 15) == [14]

    def test_bin_gene_interior(self):
        assert ls_candidates(7, False, 2, 15) == [6, 8]

    def test_edge_gene_alternatives(self):
        assert ls_candidates(0, True, 2, 15) == [1, 2]
        assert ls_candidates(1, True, 2, 15) == [0, 2]
        assert ls_candidates(2, True, 2, 15) == [0, 1]


class TestLocalSearch:
    def test_never_worse_and_in_range(self, rng):
        meta = cont_meta(4)
        data = make_normalized([rng.random(40) for _ in range(4)], meta)
        ev = Evaluator(data, policy="ew", bin_min=2, bin_max=5)
        for _ in range(10):
            g = repair_cycles(Genotype.random(meta, 2, 5, rng), meta)
            bd, cache = ev.evaluate(g)
            sol = Solution(g, bd, cache)
            out = local_search(sol, ev, meta, 2, 5, rng)
            assert out.fitness >= sol.fitness - 1e-12
            assert np.all(out.genotype.bin_genes >= 2)
            assert np.all(out.genotype.bin_genes <= 5)
            assert is_acyclic(decode_children(out.genotype, 4))


def exhaustive_optimum(data, meta, bin_values):
    best = -math.inf
    n_pairs = n_edge_genes(len(meta))
    for trits in itertools.product([0, 1, 2], repeat=n_pairs):
        g = Genotype(np.array(trits, dtype=np.int8), [bin_values[0]] * len(meta))
        if not is_acyclic(decode_children(g, len(meta))):
            continue
        for bins in itertools.product(bin_values, repeat=len(meta)):
            g2 = Genotype(np.array(trits, dtype=np.int8), list(bins))
            best = max(best, evaluate(g2, data, policy="ew", bin_min=min(bin_values), bin_max=max(bin_values)).total)
    return best


class TestRunSo:
    def test_zero_budget_returns_initialization_best(self, rng):
        meta = cont_meta(3)
        data = make_normalized([rng.random(30) for _ in range(3)], meta)
        res = run_so(data, rng, policy="ew", bin_min=2, bin_max=3, max_evaluations=0)
        assert res.status == "budget"
        assert res.best is not None
        assert not any(r["event"] == "cycle" for r in res.log)

    def test_best_fitness_monotone_in_log(self, rng):
        meta = cont_meta(3)
        data = make_normalized([rng.random(60) for _ in range(3)], meta)
        res = run_so(data, rng, policy="ew", bin_min=2, bin_max=4, max_evaluations=300)
        fits = [r["best_fitness"] for r in res.log if r["event"] == "improvement"]
        assert all(b >= a - 1e-12 for a, b in zip(fits, fits[1:]))

    def test_ims_schedule_ratios(self, rng):
        meta = cont_meta(3)
        data = make_normalized([rng.random(30) for _ in range(3)], meta)
        # enough evaluations for three interleaved populations to exist
        res = run_so(
            data, rng, policy="ew", bin_min=2, bin_max=3,
            max_evaluations=60_000, retire=False,
        )
        cycles = [r for r in res.log if r["event"] == "cycle"]
        deep = [r for r in cycles if len(r["pop_gens"]) >= 3]
        assert deep, "expected at least three interleaved populations"
        last = deep[-1]
        c = last["cycle"]
        assert last["pop_gens"][0] == c
        assert last["pop_gens"][1] == c // 4
        assert last["pop_gens"][2] == c // 16

    def test_finds_exhaustive_optimum_small_instance(self, rng):
        meta = cont_meta(3)
        cols = [rng.random(120) for _ in range(3)]
        cols[1] = (cols[0] * 2 + rng.random(120) * 0.3) % 1.0  # induce an edge
        data = make_normalized(cols, meta)
        target = exhaustive_optimum(data, meta, [2, 3])
        hits = 0
        for seed in range(3):
            res = run_so(
                data,
                np.random.default_rng(seed),
                policy="ew",
                bin_min=2,
                bin_max=3,
                max_evaluations=20_000,
            )
            if res.best.fitness >= target - 1e-9:
                hits += 1
        assert hits >= 2

    def test_determinism(self, rng):
        meta = cont_meta(3)
        data = make_normalized([rng.random(40) for _ in range(3)], meta)
        r1 = run_so(data, np.random.default_rng(5), policy="ew", bin_min=2, bin_max=4, max_evaluations=500)
        r2 = run_so(data, np.random.default_rng(5), policy="ew", bin_min=2, bin_max=4, max_evaluations=500)
        assert r1.best.fitness == r2.best.fitness
        assert len(r1.log) == len(r2.log)
        assert r1.evaluations == r2.evaluations

    def test_discrete_only_reduces_to_structure_search(self, rng):
        from conftest import disc_meta

        meta = disc_meta([2, 3, 2])
        cols = [rng.integers(0, m.cardinality, 80) for m in meta]
        data = make_normalized(cols, meta)
        res = run_so(data, rng, policy="ew", bin_min=2, bin_max=15, max_evaluations=2_000)
        assert res.best.genotype.bin_genes.size == 0
        assert res.best.fitness > -math.inf
