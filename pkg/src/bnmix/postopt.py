"""Boundary placement optimization after structure learning.

Structure and bin counts stay fixed; only where the boundaries sit changes,
so the complexity term cannot move and only the log density is optimized.
Boundaries are encoded as real-valued indices into the sorted distinct values
of each variable: a parameter p stands for the midpoint between distinct
values floor(p) and floor(p) + 1. Optimization runs a small population
scheme that resamples one variable's parameter group at a time from a
Gaussian fitted to the elite, keeping non-worsening proposals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import NormalizedDataset, assign_bins
from .fitness import FitnessBreakdown, node_contribution
from .model import SolutionModel


def decode_boundary(u: np.ndarray, param: float) -> float:
    """Midpoint between distinct values floor(param) and floor(param) + 1.

    Out-of-range parameters clamp to the nearest valid index.
    """
    idx = int(math.floor(param))
    idx = min(max(idx, 0), len(u) - 2)
    return float((u[idx] + u[idx + 1]) / 2.0)


def repair_indices(indices, max_idx: int) -> list[int]:
    """Sorted distinct indices in [0, max_idx]; collisions shift to the nearest
    free index (upward on ties)."""
    used: set[int] = set()
    for i in sorted(int(min(max(i, 0), max_idx)) for i in indices):
        if i not in used:
            used.add(i)
            continue
        for d in range(1, max_idx + 2):
            if i + d <= max_idx and (i + d) not in used:
                used.add(i + d)
                break
            if i - d >= 0 and (i - d) not in used:
                used.add(i - d)
                break
        else:
            raise ValueError("no free index left; need distinct values >= bins")
    return sorted(used)


@dataclass
class BoundaryProblem:
    """Fixed-structure scoring of boundary index vectors."""

    model: SolutionModel
    data: NormalizedDataset
    smoothing: bool = True

    def __post_init__(self):
        self.groups: list[tuple[int, int, int]] = []  # (variable, n_params, max_idx)
        self.uniques: dict[int, np.ndarray] = {}
        for v, m in enumerate(self.data.meta):
            if not m.is_continuous:
                continue
            u = np.unique(self.data.columns[v])
            b = self.model.bins[v]
            if u.size < b:
                raise ValueError(f"variable {v}: {u.size} distinct values for {b} bins")
            self.uniques[v] = u
            if b >= 2:
                self.groups.append((v, b - 1, u.size - 2))
        self.n_params = sum(g[1] for g in self.groups)
        self.evaluations = 0

    def slices(self):
        out = {}
        start = 0
        for v, k, _ in self.groups:
            out[v] = slice(start, start + k)
            start += k
        return out

    def decode(self, params: np.ndarray) -> SolutionModel:
        boundaries = {v: b.copy() for v, b in self.model.boundaries.items()}
        start = 0
        for v, k, max_idx in self.groups:
            u = self.uniques[v]
            raw = [int(math.floor(p)) for p in params[start : start + k]]
            idx = repair_indices(raw, max_idx)
            boundaries[v] = np.array([(u[i] + u[i + 1]) / 2.0 for i in idx])
            start += k
        return SolutionModel(self.model.dag, self.model.bins, boundaries)

    def encode_current(self) -> np.ndarray:
        """Index parameters that decode to (the nearest representable) input boundaries."""
        params = np.empty(self.n_params)
        start = 0
        for v, k, max_idx in self.groups:
            u = self.uniques[v]
            mids = (u[:-1] + u[1:]) / 2.0
            raw = [int(np.argmin(np.abs(mids - b))) for b in self.model.boundaries[v]]
            idx = repair_indices(raw, max_idx)
            params[start : start + k] = np.array(idx) + 0.5
            start += k
        return params

    def score(self, params: np.ndarray) -> tuple[float, SolutionModel]:
        model = self.decode(params)
        assignment = assign_bins(self.data, model)
        total = 0.0
        for i in range(len(self.data.meta)):
            ll, c = node_contribution(i, assignment, model.dag, self.data.n, self.smoothing)
            total += ll - c
        self.evaluations += 1
        return total, model


def model_fitness(model: SolutionModel, data: NormalizedDataset, smoothing: bool = True) -> float:
    """Density fitness of a fixed model on the data."""
    assignment = assign_bins(data, model)
    total = 0.0
    for i in range(len(data.meta)):
        ll, c = node_contribution(i, assignment, model.dag, data.n, smoothing)
        total += ll - c
    return total


def optimize_boundaries(
    model: SolutionModel,
    data: NormalizedDataset,
    rng: np.random.Generator,
    max_evaluations: int = 3_000,
    population: int = 24,
    elite_frac: float = 0.4,
    min_std: float = 0.4,
    smoothing: bool = True,
    log: list | None = None,
) -> SolutionModel:
    """Maximize the density fitness over boundary placements; never worse than the input.

    The input's boundaries need not sit on representable midpoints, so the
    returned model falls back to the input whenever no encoded candidate beats
    its exact fitness.
    """
    problem = BoundaryProblem(model, data, smoothing)
    f_input = model_fitness(model, data, smoothing)
    if problem.n_params == 0 or max_evaluations <= 0:
        return model
    ubound = np.concatenate([np.full(k, max_idx + 0.999) for _, k, max_idx in problem.groups])

    pop: list[np.ndarray] = []
    scores: list[float] = []
    best_f, best_model, best_params = -math.inf, None, None

    def score_into(p: np.ndarray):
        nonlocal best_f, best_model, best_params
        f, m = problem.score(p)
        pop.append(p)
        scores.append(f)
        if f > best_f:
            best_f, best_model, best_params = f, m, p.copy()
            if log is not None:
                log.append(
                    {
                        "event": "improvement",
                        "evaluations": problem.evaluations,
                        "fitness": f,
                        "indices": np.floor(p).tolist(),
                    }
                )

    score_into(problem.encode_current())
    while len(pop) < population and problem.evaluations < max_evaluations:
        score_into(rng.random(problem.n_params) * (ubound + 1e-9))

    group_slices = []
    start = 0
    for _, k, _ in problem.groups:
        group_slices.append(slice(start, start + k))
        start += k

    def improve(trial: np.ndarray) -> tuple[float, object]:
        nonlocal best_f, best_model, best_params
        f_trial, m_trial = problem.score(trial)
        if f_trial > best_f:
            best_f, best_model, best_params = f_trial, m_trial, trial.copy()
            if log is not None:
                log.append(
                    {
                        "event": "improvement",
                        "evaluations": problem.evaluations,
                        "fitness": best_f,
                        "indices": np.floor(best_params).tolist(),
                    }
                )
        return f_trial, m_trial

    def coordinate_scan(base: np.ndarray, f_base: float) -> tuple[np.ndarray, float]:
        """Single-parameter refinement of a good solution: scan small index
        ranges outright, step larger ones by one or two."""
        start = 0
        param_meta = []
        for _, k, max_idx in problem.groups:
            for off in range(k):
                param_meta.append((start + off, max_idx))
            start += k
        for pi in rng.permutation(len(param_meta)):
            if problem.evaluations >= max_evaluations:
                break
            p, max_idx = param_meta[int(pi)]
            cur = int(math.floor(base[p]))
            if max_idx + 1 <= 64:
                cands = [i for i in range(max_idx + 1) if i != cur]
            else:
                cands = [c for c in (cur - 2, cur - 1, cur + 1, cur + 2) if 0 <= c <= max_idx]
            for c in cands:
                if problem.evaluations >= max_evaluations:
                    break
                trial = base.copy()
                trial[p] = c + 0.5
                f_trial, _ = improve(trial)
                if f_trial > f_base:
                    base, f_base = trial, f_trial
        return base, f_base

    while problem.evaluations < max_evaluations:
        order = np.argsort(scores)[::-1]
        n_elite = max(2, int(math.ceil(elite_frac * len(pop))))
        elite = np.array([pop[int(i)] for i in order[:n_elite]])
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), min_std)
        new_pop, new_scores = [], []
        for slot in range(len(pop)):
            if problem.evaluations >= max_evaluations:
                break
            if slot >= int(0.75 * len(pop)):  # fresh restarts keep exploration alive
                trial = rng.random(problem.n_params) * (ubound + 1e-9)
                f_trial, _ = improve(trial)
                new_pop.append(trial)
                new_scores.append(f_trial)
                continue
            base = pop[int(order[slot % n_elite])].copy()
            f_base = scores[int(order[slot % n_elite])]
            for gi in rng.permutation(len(group_slices)):
                if problem.evaluations >= max_evaluations:
                    break
                sl = group_slices[int(gi)]
                trial = base.copy()
                trial[sl] = np.clip(rng.normal(mean[sl], std[sl]), 0.0, ubound[sl])
                f_trial, _ = improve(trial)
                if f_trial >= f_base:
                    base, f_base = trial, f_trial
            new_pop.append(base)
            new_scores.append(f_base)
        for i in range(len(new_pop), len(pop)):
            new_pop.append(pop[i])
            new_scores.append(scores[i])
        pop, scores = new_pop, new_scores
        if problem.evaluations < max_evaluations and best_params is not None:
            refined, f_refined = coordinate_scan(best_params.copy(), best_f)
            pop[int(np.argmin(scores))] = refined
            scores[int(np.argmin(scores))] = f_refined

    if best_model is None or best_f < f_input:
        return model
    return best_model
