"""Ground-truth network generation, ancestral sampling, and simulated experts.

Networks are random DAGs under two structural constraints (at most 6 parents
per node, at most 40% of all possible edges), with roughly 10% discrete
variables (at least one) and 2 to 6 levels per variable. Distribution kinds:
"ef" uses uniform probability rows, "ew" and "random" draw rows from a flat
Dirichlet; continuous level ranges are equally spaced for "ew" and random
cut points otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import RawDataset
from .model import CONTINUOUS, DISCRETE, Dag, SolutionModel, VariableMeta, n_edge_genes

DIST_KINDS = ("ew", "ef", "random")
MAX_PARENTS = 6
EDGE_FRACTION_CAP = 0.4
LEVEL_RANGE = (2, 6)
EXPERT_BIN_RANGE = (2, 4)


@dataclass
class GroundTruthNetwork:
    """Generative model: DAG, per-node probability tables, continuous level ranges."""

    dag: Dag
    meta: tuple[VariableMeta, ...]
    levels: np.ndarray  # level count per variable
    cpts: list[np.ndarray]  # per node: (joint parent configs, levels), rows sum to 1
    ranges: dict[int, np.ndarray]  # continuous variable -> level edges over [0, 1]
    kind: str

    @property
    def n_vars(self) -> int:
        return len(self.meta)

    def _configs(self, node: int, level_columns: dict[int, np.ndarray]) -> np.ndarray:
        n = len(next(iter(level_columns.values()))) if level_columns else 0
        cfg = np.zeros(n, dtype=np.int64)
        stride = 1
        for p in self.dag.parents[node]:
            cfg += level_columns[p] * stride
            stride *= int(self.levels[p])
        return cfg

    def level_of(self, var: int, column: np.ndarray) -> np.ndarray:
        """Map raw values back to generating levels."""
        if not self.meta[var].is_continuous:
            return np.asarray(column, dtype=np.int64)
        edges = self.ranges[var]
        lv = np.searchsorted(edges[1:-1], column, side="right")
        return np.clip(lv, 0, int(self.levels[var]) - 1).astype(np.int64)

    def log_density(self, columns) -> np.ndarray:
        """Exact per-sample log density of raw samples under the generating model."""
        n = len(columns[0])
        level_cols = {v: self.level_of(v, columns[v]) for v in range(self.n_vars)}
        out = np.zeros(n)
        for v in range(self.n_vars):
            cfg = self._configs(v, level_cols)
            mass = self.cpts[v][cfg, level_cols[v]]
            out += np.log(mass)
            if self.meta[v].is_continuous:
                widths = np.diff(self.ranges[v])
                out -= np.log(widths[level_cols[v]])
        return out


def random_network(n_vars: int, kind: str, rng: np.random.Generator) -> GroundTruthNetwork:
    """Random generative network under the structural constraints above."""
    if n_vars < 2:
        raise ValueError("need at least 2 variables")
    if kind not in DIST_KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    levels = rng.integers(LEVEL_RANGE[0], LEVEL_RANGE[1] + 1, n_vars)
    n_discrete = max(1, math.ceil(0.1 * n_vars))
    discrete_set = set(int(v) for v in rng.choice(n_vars, size=n_discrete, replace=False))
    meta = tuple(
        VariableMeta(f"x{v}", DISCRETE, cardinality=int(levels[v]))
        if v in discrete_set
        else VariableMeta(f"x{v}", CONTINUOUS, raw_range=(0.0, 1.0))
        for v in range(n_vars)
    )

    order = rng.permutation(n_vars)
    cap = int(EDGE_FRACTION_CAP * n_edge_genes(n_vars))
    lo = min(n_vars - 1, cap)
    target = int(rng.integers(lo, cap + 1))
    candidates = [(int(order[i]), int(order[j])) for i in range(n_vars) for j in range(i + 1, n_vars)]
    parent_count = np.zeros(n_vars, dtype=int)
    edges = []
    for idx in rng.permutation(len(candidates)):
        if len(edges) == target:
            break
        u, v = candidates[int(idx)]
        if parent_count[v] >= MAX_PARENTS:
            continue
        edges.append((u, v))
        parent_count[v] += 1
    dag = Dag.from_edges(n_vars, edges)

    cpts = []
    for v in range(n_vars):
        q = 1
        for p in dag.parents[v]:
            q *= int(levels[p])
        b = int(levels[v])
        if kind == "ef":
            cpts.append(np.full((q, b), 1.0 / b))
        else:
            cpts.append(rng.dirichlet(np.ones(b), size=q))

    ranges = {}
    for v in range(n_vars):
        if v in discrete_set:
            continue
        b = int(levels[v])
        if kind == "ew":
            ranges[v] = np.linspace(0.0, 1.0, b + 1)
        else:
            while True:
                cuts = np.sort(rng.uniform(0.0, 1.0, b - 1))
                edges_v = np.concatenate([[0.0], cuts, [1.0]])
                if np.min(np.diff(edges_v)) > 1e-6:
                    break
            ranges[v] = edges_v
    return GroundTruthNetwork(dag, meta, levels, cpts, ranges, kind)


def sample(net: GroundTruthNetwork, n: int, rng: np.random.Generator) -> RawDataset:
    """Ancestral sampling; continuous variables draw uniformly within their level's range."""
    if n < 1:
        raise ValueError("need n >= 1")
    level_cols: dict[int, np.ndarray] = {}
    columns: list[np.ndarray] = [None] * net.n_vars  # type: ignore[list-item]
    for v in net.dag.topological_order():
        cfg = net._configs(v, level_cols) if net.dag.parents[v] else np.zeros(n, dtype=np.int64)
        cdf = np.cumsum(net.cpts[v], axis=1)[cfg]
        draws = (rng.random(n)[:, None] * cdf[:, -1:] > cdf).sum(axis=1)
        level_cols[v] = draws.astype(np.int64)
        if net.meta[v].is_continuous:
            edges = net.ranges[v]
            lo = edges[draws]
            hi = edges[draws + 1]
            columns[v] = lo + rng.random(n) * (hi - lo)
        else:
            columns[v] = draws.astype(np.int32)
    return RawDataset(columns, net.meta)


@dataclass
class ExpertNetwork:
    """A partially correct network standing in for prior domain belief."""

    dag: Dag
    bins: dict[int, int]  # continuous variable -> bin count in [2, 4]
    boundaries: dict[int, np.ndarray]  # continuous variable -> boundaries in (0, 1)

    def to_solution_model(self, meta) -> SolutionModel:
        bins = tuple(
            self.bins[v] if m.is_continuous else m.cardinality for v, m in enumerate(meta)
        )
        return SolutionModel(self.dag, bins, dict(self.boundaries))


def make_expert(net: GroundTruthNetwork, rng: np.random.Generator, max_restarts: int = 50) -> ExpertNetwork:
    """Expert knows half the true edges and believes in as many edges that are absent.

    Added wrong edges connect pairs unrelated in the truth; any addition that
    would close a cycle is resampled, and a whole new expert is drawn if a
    partial construction gets stuck.
    """
    true_edges = sorted(net.dag.edge_set())
    l_edges = len(true_edges)
    if l_edges < 2:
        raise ValueError("ground truth needs at least 2 edges")
    half = l_edges // 2
    n = net.n_vars
    connected = {frozenset(e) for e in true_edges}
    absent_pairs = [
        (u, v)
        for u in range(n)
        for v in range(n)
        if u != v and frozenset((u, v)) not in connected
    ]
    for _ in range(max_restarts):
        keep_idx = rng.choice(l_edges, size=half, replace=False)
        edges = [true_edges[int(i)] for i in keep_idx]
        used = {frozenset(e) for e in edges}
        ok = True
        for _ in range(half):
            added = False
            for _ in range(200):
                u, v = absent_pairs[int(rng.integers(0, len(absent_pairs)))]
                if frozenset((u, v)) in used:
                    continue
                try:
                    Dag.from_edges(n, edges + [(u, v)])
                except Exception:
                    continue  # would close a cycle
                edges.append((u, v))
                used.add(frozenset((u, v)))
                added = True
                break
            if not added:
                ok = False
                break
        if not ok:
            continue
        dag = Dag.from_edges(n, edges)
        bins: dict[int, int] = {}
        boundaries: dict[int, np.ndarray] = {}
        for v, m in enumerate(net.meta):
            if not m.is_continuous:
                continue
            b = int(rng.integers(EXPERT_BIN_RANGE[0], EXPERT_BIN_RANGE[1] + 1))
            while True:
                cuts = np.sort(rng.uniform(0.0, 1.0, b - 1))
                if cuts.size < 2 or np.min(np.diff(cuts)) > 1e-9:
                    break
            bins[v] = b
            boundaries[v] = cuts
        return ExpertNetwork(dag, bins, boundaries)
    raise RuntimeError("could not complete an acyclic expert network")
