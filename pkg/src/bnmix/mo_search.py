"""Tri-objective network learning: data fit, complexity, distance to an expert.

Objectives are the per-node log density (maximized), the structure penalty
(minimized) and a Monte-Carlo divergence from a fitted expert network
(minimized). Feasibility is layered first: solutions whose complexity exceeds
ten times the expert's get a constraint value proportional to the excess, and
a lower constraint beats any objective trade-off. The population is split
into equal-size clusters in normalized objective space; one cluster per
objective runs single-objective mixing on it, the rest use multi-objective
acceptance against the target and a bounded archive of non-dominated
solutions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .fitness import EvalCache, Evaluator, FitnessBreakdown, FittedModel
from .linkage import gene_alphabet, learn_linkage_tree, population_matrix
from .model import Genotype, repair_cycles

ARCHIVE_CAPACITY = 10_000
N_OBJECTIVES = 3
MO_BIN_MAX = 9
COMPLEXITY_FACTOR = 10.0
BASE_POPULATION_MO = 8


@dataclass(frozen=True)
class ObjectiveVector:
    ll: float  # maximize
    complexity: float  # minimize
    kl_expert: float  # minimize
    constraint: float = 0.0  # 0 means feasible

    def as_min_array(self) -> np.ndarray:
        return np.array([-self.ll, self.complexity, self.kl_expert])

    @property
    def feasible(self) -> bool:
        return self.constraint == 0.0


def pareto_dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """Strict Pareto dominance on minimization vectors."""
    return bool(np.all(a <= b) and np.any(a < b))


def constraint_dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """Lower constraint wins outright; equal constraints fall back to Pareto."""
    if a.constraint != b.constraint:
        return a.constraint < b.constraint
    return pareto_dominates(a.as_min_array(), b.as_min_array())


def complexity_constraint(c_candidate: float, c_expert: float, factor: float = COMPLEXITY_FACTOR) -> float:
    """Violation of the complexity budget: max(0, C_candidate - factor * C_expert)."""
    return max(0.0, c_candidate - factor * c_expert)


def kl_to_expert(candidate: FittedModel, expert: FittedModel, mc: int, rng: np.random.Generator) -> float:
    """Monte-Carlo divergence of the candidate from the expert, both fitted on data."""
    if mc <= 0:
        raise ValueError("need a positive sample budget")
    cols = expert.sample(mc, rng)
    est = float(np.mean(expert.logpdf(cols) - candidate.logpdf(cols)))
    return max(0.0, est)


class ElitistArchive:
    """Bounded store of mutually non-dominated solutions (constraint-domination).

    Inserts are rejected when an existing entry constraint-dominates the
    candidate or duplicates its values exactly; accepted inserts evict every
    entry they dominate. At capacity the accepted entry replaces its nearest
    neighbor in min-max-normalized objective space.
    """

    def __init__(self, capacity: int = ARCHIVE_CAPACITY):
        self.capacity = capacity
        self.entries: list[tuple[Genotype, ObjectiveVector]] = []
        self._mins = np.empty((0, N_OBJECTIVES))
        self._cons = np.empty(0)

    def __len__(self) -> int:
        return len(self.entries)

    def vectors(self) -> np.ndarray:
        return self._mins.copy()

    def dominates_candidate(self, ov: ObjectiveVector) -> bool:
        """True iff some archive entry constraint-dominates ov (rule-3 test)."""
        if not self.entries:
            return False
        v = ov.as_min_array()
        lower_c = self._cons < ov.constraint
        if np.any(lower_c):
            return True
        eq = self._cons == ov.constraint
        if not np.any(eq):
            return False
        sub = self._mins[eq]
        return bool(np.any(np.all(sub <= v, axis=1) & np.any(sub < v, axis=1)))

    def insert(self, genotype: Genotype, ov: ObjectiveVector) -> bool:
        v = ov.as_min_array()
        if self.entries:
            dup = (self._cons == ov.constraint) & np.all(self._mins == v, axis=1)
            if np.any(dup) or self.dominates_candidate(ov):
                return False
            # evict entries the candidate constraint-dominates
            higher_c = self._cons > ov.constraint
            eq = self._cons == ov.constraint
            dominated = higher_c | (
                eq & np.all(v <= self._mins, axis=1) & np.any(v < self._mins, axis=1)
            )
            if np.any(dominated):
                keep = np.nonzero(~dominated)[0]
                self.entries = [self.entries[int(i)] for i in keep]
                self._mins = self._mins[keep]
                self._cons = self._cons[keep]
        self.entries.append((genotype.copy(), ov))
        self._mins = np.vstack([self._mins, v[None, :]])
        self._cons = np.append(self._cons, ov.constraint)
        if len(self.entries) > self.capacity:
            self._evict_nearest(v)
        return True

    def _evict_nearest(self, v: np.ndarray) -> None:
        lo = self._mins.min(axis=0)
        span = self._mins.max(axis=0) - lo
        span[span == 0] = 1.0
        norm = (self._mins - lo) / span
        target = (v - lo) / span
        d = np.sum((norm - target) ** 2, axis=1)
        d[-1] = np.inf  # the new entry keeps its place
        victim = int(np.argmin(d))
        self.entries.pop(victim)
        self._mins = np.delete(self._mins, victim, axis=0)
        self._cons = np.delete(self._cons, victim)


@dataclass
class MoSolution:
    genotype: Genotype
    breakdown: FitnessBreakdown
    cache: EvalCache
    objectives: ObjectiveVector


class MoProblem:
    """Objective assembly around a shared evaluator and a fitted expert model."""

    def __init__(
        self,
        data,
        expert_model: FittedModel,
        mc_kl: int,
        rng: np.random.Generator,
        policy: str = "ew",
        bin_min: int = 2,
        bin_max: int = MO_BIN_MAX,
        smoothing: bool = True,
        complexity_factor: float = COMPLEXITY_FACTOR,
    ):
        if mc_kl <= 0:
            raise ValueError("need a positive divergence sample budget")
        self.mc_columns = expert_model.sample(mc_kl, rng)  # one shared draw per run
        self.expert_mean_logp = float(np.mean(expert_model.logpdf(self.mc_columns)))
        self.evaluator = Evaluator(
            data, policy, bin_min, bin_max, smoothing, aux_columns=self.mc_columns
        )
        from .fitness import model_complexity

        self.c_expert = model_complexity(expert_model.model, data.n)
        self.complexity_factor = complexity_factor
        self.meta = data.meta
        self.bin_min = bin_min
        self.bin_max = bin_max

    def objectives_of(self, bd: FitnessBreakdown) -> ObjectiveVector:
        if not bd.feasible:
            return ObjectiveVector(-math.inf, math.inf, math.inf, math.inf)
        ll = bd.ll_total
        c = bd.penalty_total
        kl = max(0.0, self.expert_mean_logp - float(bd.aux_ll.sum()))
        return ObjectiveVector(ll, c, kl, complexity_constraint(c, self.c_expert, self.complexity_factor))

    def fresh(self, rng: np.random.Generator) -> MoSolution:
        g = repair_cycles(Genotype.random(self.meta, self.bin_min, self.bin_max, rng), self.meta)
        bd, cache = self.evaluator.evaluate(g)
        return MoSolution(g, bd, cache, self.objectives_of(bd))


def cluster_population(min_vectors: np.ndarray, c: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Balanced leader-based clustering in min-max-normalized objective space."""
    n = min_vectors.shape[0]
    c = min(c, n)
    lo = np.zeros(min_vectors.shape[1])
    hi = np.ones(min_vectors.shape[1])
    for k in range(min_vectors.shape[1]):
        col = min_vectors[:, k]
        finite = col[np.isfinite(col)]
        if finite.size:
            lo[k], hi[k] = finite.min(), finite.max()
    span = np.where(hi > lo, hi - lo, 1.0)
    with np.errstate(invalid="ignore"):
        norm = (min_vectors - lo) / span
    norm = np.clip(np.nan_to_num(norm, nan=0.5, posinf=1.5, neginf=-0.5), -1.0, 2.0)

    leaders = [int(rng.integers(0, n))]
    dist = np.sum((norm - norm[leaders[0]]) ** 2, axis=1)
    while len(leaders) < c:
        far = np.nonzero(dist >= dist.max() - 1e-14)[0]
        nxt = int(far[rng.integers(0, far.size)])
        leaders.append(nxt)
        dist = np.minimum(dist, np.sum((norm - norm[nxt]) ** 2, axis=1))

    # greedy balanced assignment: globally closest (solution, leader) pairs first
    cap = np.full(c, n // c)
    cap[: n % c] += 1
    d = np.stack([np.sum((norm - norm[l]) ** 2, axis=1) for l in leaders], axis=1)
    order = np.argsort(d, axis=None, kind="stable")
    assigned = np.full(n, -1)
    counts = np.zeros(c, dtype=int)
    placed = 0
    for flat in order:
        s, k = int(flat // c), int(flat % c)
        if assigned[s] >= 0 or counts[k] >= cap[k]:
            continue
        assigned[s] = k
        counts[k] += 1
        placed += 1
        if placed == n:
            break
    return [np.nonzero(assigned == k)[0] for k in range(c)]


def flag_extreme_clusters(clusters: list[np.ndarray], min_vectors: np.ndarray) -> dict[int, int]:
    """One cluster per objective, picked by best (lowest) cluster mean; disjoint."""
    flags: dict[int, int] = {}
    taken: set[int] = set()
    for obj in range(N_OBJECTIVES):
        best_k, best_val = -1, np.inf
        for k, idx in enumerate(clusters):
            if k in taken or idx.size == 0:
                continue
            val = float(np.mean(min_vectors[idx, obj]))
            if val < best_val:
                best_k, best_val = k, val
        if best_k >= 0:
            flags[best_k] = obj
            taken.add(best_k)
    return flags


@dataclass
class MoRunCounters:
    rule_dominates: int = 0
    rule_equal: int = 0
    rule_archive: int = 0
    reverted: int = 0
    archive_accepts: int = 0


def mo_gom(
    target: MoSolution,
    tree,
    donors: list[MoSolution],
    problem: MoProblem,
    archive: ElitistArchive,
    rng: np.random.Generator,
    counters: MoRunCounters,
) -> MoSolution:
    """Mixing with the three-way acceptance rule; kept offspring go to the archive."""
    geno = target.genotype.copy()
    bd, cache, ov = target.breakdown, target.cache, target.objectives
    n_edge = geno.edge_genes.size
    meta = problem.meta
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
        if changed.size == 0:
            continue
        new_bd, new_cache = problem.evaluator.partial_evaluate(geno, changed, cache)
        alt = problem.objectives_of(new_bd)
        if constraint_dominates(alt, ov):
            counters.rule_dominates += 1
            keep = True
        elif alt == ov:
            counters.rule_equal += 1
            keep = True
        elif not archive.dominates_candidate(alt):
            counters.rule_archive += 1
            keep = True
        else:
            keep = False
        if keep:
            bd, cache, ov = new_bd, new_cache, alt
            if archive.insert(geno, alt):
                counters.archive_accepts += 1
        else:
            counters.reverted += 1
            geno.set_values(changed, cache.genotype.values_at(changed))
    return MoSolution(geno, bd, cache, ov)


def so_gom_objective(
    target: MoSolution,
    tree,
    donors: list[MoSolution],
    problem: MoProblem,
    archive: ElitistArchive,
    objective: int,
    rng: np.random.Generator,
    counters: MoRunCounters,
) -> MoSolution:
    """Single-objective mixing on one flagged objective, constraint first."""
    geno = target.genotype.copy()
    bd, cache, ov = target.breakdown, target.cache, target.objectives
    n_edge = geno.edge_genes.size
    meta = problem.meta
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
        if changed.size == 0:
            continue
        new_bd, new_cache = problem.evaluator.partial_evaluate(geno, changed, cache)
        alt = problem.objectives_of(new_bd)
        worse = alt.constraint > ov.constraint or (
            alt.constraint == ov.constraint
            and alt.as_min_array()[objective] > ov.as_min_array()[objective]
        )
        if worse:
            geno.set_values(changed, cache.genotype.values_at(changed))
        else:
            bd, cache, ov = new_bd, new_cache, alt
            if archive.insert(geno, alt):
                counters.archive_accepts += 1
    return MoSolution(geno, bd, cache, ov)


@dataclass
class _MoPop:
    members: list[MoSolution]
    n_clusters: int
    gens: int = 0


@dataclass
class MoResult:
    archive: ElitistArchive
    log: list[dict]
    counters: MoRunCounters
    evaluations: float
    status: str


def run_mo(
    data,
    expert_model: FittedModel,
    rng: np.random.Generator,
    policy: str = "ew",
    bin_min: int = 2,
    bin_max: int = MO_BIN_MAX,
    smoothing: bool = True,
    mc_kl: int = 1_000,
    max_evaluations: float | None = None,
    max_seconds: float | None = None,
    stall_cycles: int | None = None,
    archive_capacity: int = ARCHIVE_CAPACITY,
) -> MoResult:
    """Interleaved multi-start multi-objective run; returns the final archive.

    Population sizes start at 8 and double; cluster counts start at 4 (one
    more than the number of objectives) and grow by one per population.
    """
    if max_evaluations is None and max_seconds is None:
        raise ValueError("set max_evaluations and/or max_seconds")
    problem = MoProblem(data, expert_model, mc_kl, rng, policy, bin_min, bin_max, smoothing)
    ev = problem.evaluator
    alphabet = gene_alphabet(problem.meta, bin_min, bin_max)
    archive = ElitistArchive(archive_capacity)
    counters = MoRunCounters()
    log: list[dict] = []
    t0 = time.perf_counter()
    cycle = 0
    last_accepts = 0
    last_progress_cycle = 0

    def out_of_budget() -> bool:
        if max_evaluations is not None and ev.evaluations >= max_evaluations:
            return True
        return max_seconds is not None and time.perf_counter() - t0 >= max_seconds

    def init_pop(size: int, n_clusters: int, check_budget: bool) -> _MoPop:
        members = []
        for _ in range(size):
            if check_budget and out_of_budget():
                break
            sol = problem.fresh(rng)
            if archive.insert(sol.genotype, sol.objectives):
                counters.archive_accepts += 1
            members.append(sol)
        return _MoPop(members, n_clusters)

    def generation(pop: _MoPop) -> bool:
        vectors = np.array([s.objectives.as_min_array() for s in pop.members])
        clusters = cluster_population(vectors, pop.n_clusters, rng)
        flags = flag_extreme_clusters(clusters, vectors)
        trees = {}
        for k, idx in enumerate(clusters):
            if idx.size == 0:
                continue
            mat = population_matrix([pop.members[int(i)].genotype for i in idx], bin_min)
            trees[k] = learn_linkage_tree(mat, alphabet, rng)
        for k, idx in enumerate(clusters):
            if k not in trees:
                continue
            cluster_members = [pop.members[int(i)] for i in idx]
            for i in idx:
                if out_of_budget():
                    return False
                target = pop.members[int(i)]
                if k in flags:
                    out = so_gom_objective(
                        target, trees[k], cluster_members, problem, archive, flags[k], rng, counters
                    )
                else:
                    out = mo_gom(target, trees[k], cluster_members, problem, archive, rng, counters)
                pop.members[int(i)] = out
        pop.gens += 1
        return True

    pops: list[_MoPop] = [init_pop(BASE_POPULATION_MO, N_OBJECTIVES + 1, check_budget=False)]
    status = "budget"
    while True:
        if out_of_budget():
            status = "budget"
            break
        cycle += 1
        for level in range(len(pops) + 1):
            if cycle % (4**level) != 0:
                break
            if level == len(pops):
                if out_of_budget():
                    break
                pops.append(
                    init_pop(
                        BASE_POPULATION_MO * 2**level,
                        N_OBJECTIVES + 1 + level,
                        check_budget=True,
                    )
                )
            if pops[level].members:
                if not generation(pops[level]):
                    log.append(
                        {
                            "event": "partial_generation",
                            "cycle": cycle,
                            "level": level,
                            "evaluations": ev.evaluations,
                        }
                    )
        if counters.archive_accepts > last_accepts:
            last_accepts = counters.archive_accepts
            last_progress_cycle = cycle
        log.append(
            {
                "event": "cycle",
                "cycle": cycle,
                "elapsed_s": time.perf_counter() - t0,
                "evaluations": ev.evaluations,
                "pop_sizes": [len(p.members) for p in pops],
                "archive_size": len(archive),
                "rule_counts": [counters.rule_dominates, counters.rule_equal, counters.rule_archive],
            }
        )
        if stall_cycles is not None and cycle - last_progress_cycle >= stall_cycles:
            status = "stalled"
            break
    return MoResult(archive, log, counters, ev.evaluations, status)
