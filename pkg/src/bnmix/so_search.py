"""Single-objective network learning: optimal mixing, local search, multi-start.

Variation copies linkage-tree gene groups from random donors and keeps a
change unless it makes the fitness strictly worse. Local search tries the
alternative values of every gene in random order and keeps only strict
improvements; bin genes move by plus or minus one within their range.
Populations of doubling sizes are interleaved so that a population runs four
generations for every generation of the next larger one, starting from size 2.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fitness import EvalCache, Evaluator, FitnessBreakdown
from .linkage import LinkageTree, gene_alphabet, learn_linkage_tree, population_matrix
from .model import Genotype, repair_cycles

IMS_GENERATIONS_PER_LEVEL = 4
BASE_POPULATION = 2


@dataclass
class Solution:
    genotype: Genotype
    breakdown: FitnessBreakdown
    cache: EvalCache

    @property
    def fitness(self) -> float:
        return self.breakdown.total


@dataclass
class SoResult:
    best: Solution
    log: list[dict]
    evaluations: float
    status: str  # "budget" or "stalled"


def gom(target: Solution, tree: LinkageTree, donors: list[Solution], evaluator: Evaluator,
        meta, rng: np.random.Generator) -> Solution:
    """Optimal mixing of one solution: per gene group, copy from a random donor,
    repair if edges changed, and revert only on strictly worse fitness."""
    geno = target.genotype.copy()
    bd, cache = target.breakdown, target.cache
    n_edge = geno.edge_genes.size
    for element in tree.shuffled(rng):
        donor = donors[int(rng.integers(0, len(donors)))]
        donor_vals = donor.genotype.values_at(element)
        if np.array_equal(donor_vals, geno.values_at(element)):
            continue
        edge_touched = any(int(g) < n_edge for g in element)
        geno.set_values(element, donor_vals)
        if edge_touched:
            geno = repair_cycles(geno, meta)
        changed = geno.diff_indices(cache.genotype)
        if changed.size == 0:  # repair undid the whole copy
            continue
        new_bd, new_cache = evaluator.partial_evaluate(geno, changed, cache)
        if new_bd.total < bd.total:
            geno.set_values(changed, cache.genotype.values_at(changed))
        else:
            bd, cache = new_bd, new_cache
    return Solution(geno, bd, cache)


def ls_candidates(current: int, is_edge: bool, bin_min: int, bin_max: int) -> list[int]:
    """Alternative values local search may try for one gene.

    Edge genes try the other two trits; bin genes move one step, skipping
    steps that would leave [bin_min, bin_max].
    """
    if is_edge:
        return [v for v in (0, 1, 2) if v != current]
    return [v for v in (current - 1, current + 1) if bin_min <= v <= bin_max]


def local_search(sol: Solution, evaluator: Evaluator, meta, bin_min: int, bin_max: int,
                 rng: np.random.Generator) -> Solution:
    """Visit all genes once in random order, accepting strictly better values only."""
    geno = sol.genotype.copy()
    bd, cache = sol.breakdown, sol.cache
    n_edge = geno.edge_genes.size
    for idx in rng.permutation(geno.n_genes):
        idx = int(idx)
        if idx < n_edge:
            candidates = ls_candidates(int(geno.edge_genes[idx]), True, bin_min, bin_max)
        else:
            candidates = ls_candidates(int(geno.bin_genes[idx - n_edge]), False, bin_min, bin_max)
        if len(candidates) > 1:
            candidates = [candidates[i] for i in rng.permutation(len(candidates))]
        for v in candidates:
            trial = geno.copy()
            trial.set_values([idx], [v])
            if idx < n_edge:
                trial = repair_cycles(trial, meta)
            changed = trial.diff_indices(cache.genotype)
            if changed.size == 0:
                continue
            new_bd, new_cache = evaluator.partial_evaluate(trial, changed, cache)
            if new_bd.total > bd.total:
                geno, bd, cache = trial, new_bd, new_cache
    return Solution(geno, bd, cache)


@dataclass
class _Pop:
    members: list[Solution]
    gens: int = 0
    retired: bool = False

    def mean_fitness(self) -> float:
        return float(np.mean([s.fitness for s in self.members]))


def run_so(
    data,
    rng: np.random.Generator,
    policy: str = "ew",
    bin_min: int = 2,
    bin_max: int = 15,
    smoothing: bool = True,
    max_evaluations: float | None = None,
    max_seconds: float | None = None,
    stall_cycles: int | None = None,
    evaluator: Evaluator | None = None,
    retire: bool = True,
) -> SoResult:
    """Interleaved multi-start learning loop. Returns the best solution ever seen.

    At least one of max_evaluations / max_seconds must be set. Population 0 is
    always initialized (and locally searched), so a zero budget still returns
    the best of initialization.
    """
    if max_evaluations is None and max_seconds is None:
        raise ValueError("set max_evaluations and/or max_seconds")
    ev = evaluator or Evaluator(data, policy, bin_min, bin_max, smoothing)
    meta = data.meta
    alphabet = gene_alphabet(meta, bin_min, bin_max)
    t0 = time.perf_counter()
    log: list[dict] = []
    best: Solution | None = None
    cycle = 0
    last_improvement = 0

    def elapsed() -> float:
        return time.perf_counter() - t0

    def out_of_budget() -> bool:
        if max_evaluations is not None and ev.evaluations >= max_evaluations:
            return True
        return max_seconds is not None and elapsed() >= max_seconds

    def consider(sol: Solution):
        nonlocal best, last_improvement
        if best is None or sol.fitness > best.fitness:
            best = Solution(sol.genotype.copy(), sol.breakdown, sol.cache)
            last_improvement = cycle
            log.append(
                {
                    "event": "improvement",
                    "cycle": cycle,
                    "elapsed_s": elapsed(),
                    "evaluations": ev.evaluations,
                    "best_fitness": best.fitness,
                }
            )

    def fresh_solution() -> Solution:
        g = repair_cycles(Genotype.random(meta, bin_min, bin_max, rng), meta)
        bd, cache = ev.evaluate(g)
        return Solution(g, bd, cache)

    def init_pop(size: int, check_budget: bool) -> _Pop:
        members = []
        for _ in range(size):
            if check_budget and out_of_budget():
                break
            s = fresh_solution()
            consider(s)
            s = local_search(s, ev, meta, bin_min, bin_max, rng)
            consider(s)
            members.append(s)
        return _Pop(members)

    def generation(pop: _Pop) -> bool:
        mat = population_matrix([s.genotype for s in pop.members], bin_min)
        tree = learn_linkage_tree(mat, alphabet, rng)
        for i in range(len(pop.members)):
            if out_of_budget():
                return False
            sol = gom(pop.members[i], tree, pop.members, ev, meta, rng)
            pop.members[i] = sol
            consider(sol)
        for i in range(len(pop.members)):
            if out_of_budget():
                return False
            sol = local_search(pop.members[i], ev, meta, bin_min, bin_max, rng)
            pop.members[i] = sol
            consider(sol)
        pop.gens += 1
        return True

    pops: list[_Pop] = [init_pop(BASE_POPULATION, check_budget=False)]
    status = "budget"
    while True:
        if out_of_budget():
            status = "budget"
            break
        cycle += 1
        for level in range(len(pops) + 1):
            if cycle % (IMS_GENERATIONS_PER_LEVEL**level) != 0:
                break
            if level == len(pops):
                if out_of_budget():
                    break
                pops.append(init_pop(BASE_POPULATION * 2**level, check_budget=True))
            if not pops[level].retired and pops[level].members:
                if not generation(pops[level]):
                    log.append(
                        {
                            "event": "partial_generation",
                            "cycle": cycle,
                            "level": level,
                            "elapsed_s": elapsed(),
                            "evaluations": ev.evaluations,
                        }
                    )
        if retire:
            # a smaller population is retired once any larger one has caught up
            means = [p.mean_fitness() if p.members else -np.inf for p in pops]
            for i in range(len(pops)):
                if not pops[i].retired and any(means[j] > means[i] for j in range(i + 1, len(pops))):
                    pops[i].retired = True
        log.append(
            {
                "event": "cycle",
                "cycle": cycle,
                "elapsed_s": elapsed(),
                "evaluations": ev.evaluations,
                "pop_sizes": [len(p.members) for p in pops],
                "pop_gens": [p.gens for p in pops],
                "retired": [p.retired for p in pops],
                "best_fitness": best.fitness if best else None,
            }
        )
        if stall_cycles is not None and cycle - last_improvement >= stall_cycles:
            status = "stalled"
            break
    assert best is not None
    return SoResult(best, log, ev.evaluations, status)
