"""Decomposable density fitness with per-node caching and partial evaluation.

The score of a network is the sum over nodes of the log density of the data
under a piecewise-uniform conditional model, minus a BIC-style penalty:

    ll_i      = sum_s log( p_hat(bin_s | parent config_s) / width(bin_s) )
    penalty_i = q_i * (b_i - 1) * ln(n / 2)

with q_i the number of joint parent instantiations (empty product = 1) and
the width division applied to continuous nodes only. p_hat uses add-one
smoothing by default. The per-node decomposition is what makes partial
evaluation after small genotype changes exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .discretize import (
    DEFAULT_BIN_MAX,
    DEFAULT_BIN_MIN,
    InsufficientDistinctValuesError,
    NormalizedDataset,
    assign_bins,
    bayesian_discretize,
    equal_frequency,
    equal_width,
)
from .model import (
    ContractViolation,
    Dag,
    Genotype,
    SolutionModel,
    bins_from_genotype,
    dag_from_genotype,
    decode_children,
    is_acyclic,
)

POLICIES = ("ew", "ef", "bd")


class StaleCacheError(ContractViolation):
    """The genotype differs from the cache outside the reported changed genes."""


@dataclass
class FitnessBreakdown:
    """Per-node log-density and penalty contributions; total = sum(ll) - sum(penalty)."""

    ll: np.ndarray
    penalty: np.ndarray
    aux_ll: np.ndarray | None = None  # per-node mean log density on the aux sample set
    feasible: bool = True

    @property
    def total(self) -> float:
        if not self.feasible:
            return -math.inf
        return float(self.ll.sum() - self.penalty.sum())

    @property
    def ll_total(self) -> float:
        return float(self.ll.sum()) if self.feasible else -math.inf

    @property
    def penalty_total(self) -> float:
        return float(self.penalty.sum()) if self.feasible else math.inf


@dataclass
class EvalCache:
    """Snapshot tying per-node contributions to the genotype that produced them."""

    genotype: Genotype
    parents: tuple[tuple[int, ...], ...]
    bins: np.ndarray
    node_ll: np.ndarray
    node_c: np.ndarray
    node_aux: np.ndarray | None
    feasible: bool
    evaluator: "Evaluator"

    def breakdown(self) -> FitnessBreakdown:
        return FitnessBreakdown(
            self.node_ll.copy(),
            self.node_c.copy(),
            None if self.node_aux is None else self.node_aux.copy(),
            self.feasible,
        )


class _Bank:
    """Growable matrix of int32 code columns shared with the kernels."""

    def __init__(self, n: int):
        self._data = np.zeros((8, n), dtype=np.int32)
        self.rows = 0

    def add(self, col: np.ndarray) -> int:
        if self.rows == self._data.shape[0]:
            grown = np.zeros((2 * self.rows, self._data.shape[1]), dtype=np.int32)
            grown[: self.rows] = self._data
            self._data = grown
        self._data[self.rows] = col
        self.rows += 1
        return self.rows - 1

    @property
    def view(self) -> np.ndarray:
        return self._data[: max(self.rows, 1)]


def _grouped_configs(code_columns: list[np.ndarray], bins: list[int]) -> tuple[np.ndarray, int]:
    """Joint parent configuration ids compressed to [0, q_eff) without overflow."""
    n = code_columns[0].size
    ids = np.zeros(n, dtype=np.int64)
    for col, b in zip(code_columns, bins):
        ids = ids * b + col
        _, ids = np.unique(ids, return_inverse=True)
    return ids, int(ids.max()) + 1


def _ll_from_configs(configs, codes, q, b, log_width, smoothing) -> float:
    counts = np.bincount(configs * b + codes, minlength=q * b).reshape(q, b)
    rows = counts.sum(axis=1)
    nz_c, nz_v = np.nonzero(counts)
    cell = counts[nz_c, nz_v].astype(np.float64)
    term = np.log(cell + smoothing) - np.log(rows[nz_c] + smoothing * b) - log_width[nz_v]
    return float(np.sum(cell * term))


def node_contribution(node: int, assignment, dag: Dag, n: int, smoothing: bool = True):
    """(ll_i, penalty_i) for one node, computed directly from a bin assignment."""
    if n <= 0:
        raise ValueError("need at least one sample")
    parents = dag.parents[node]
    b = int(assignment.bins[node])
    q = 1
    for p in parents:
        q *= int(assignment.bins[p])
    if parents:
        configs, q_eff = _grouped_configs(
            [assignment.codes[p].astype(np.int64) for p in parents],
            [int(assignment.bins[p]) for p in parents],
        )
    else:
        configs, q_eff = np.zeros(n, dtype=np.int64), 1
    if node in assignment.widths:
        log_width = np.log(assignment.widths[node])
    else:
        log_width = np.zeros(b)
    ll = _ll_from_configs(configs, assignment.codes[node].astype(np.int64), q_eff, b, log_width, int(smoothing))
    penalty = float(q) * (b - 1) * math.log(n / 2.0)
    return ll, penalty


class Evaluator:
    """Scores genotypes against a dataset, memoizing per-(variable, bin count) codes.

    The optional aux sample set (used by the divergence objective) is binned
    with the same boundaries as the training data and scored against tables
    counted from the training data.
    """

    def __init__(
        self,
        data: NormalizedDataset,
        policy: str = "ew",
        bin_min: int = DEFAULT_BIN_MIN,
        bin_max: int = DEFAULT_BIN_MAX,
        smoothing: bool = True,
        aux_columns: list[np.ndarray] | None = None,
        dense_cell_cap: int = 1 << 20,
        bd_params: dict | None = None,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        if data.n == 0:
            raise ValueError("empty dataset")
        if policy == "bd" and aux_columns is not None:
            raise ValueError("aux scoring is not supported with the bd policy")
        self.data = data
        self.meta = data.meta
        self.n = data.n
        self.policy = policy
        self.bin_min = bin_min
        self.bin_max = bin_max
        self.smoothing = int(smoothing)
        self.dense_cell_cap = dense_cell_cap
        self.bd_params = bd_params or {}
        self.evaluations = 0.0  # fractional: each node recompute counts 1/N
        self._n_vars = len(self.meta)
        self._bank = _Bank(self.n)
        self._aux = aux_columns
        self._aux_bank = _Bank(len(aux_columns[0])) if aux_columns is not None else None
        self._slots: dict[tuple[int, int | None], tuple[int, np.ndarray, int]] = {}
        self._log_half_n = math.log(self.n / 2.0)

    @property
    def n_vars(self) -> int:
        return self._n_vars

    # -- code columns ------------------------------------------------------

    def _boundaries(self, var: int, k: int) -> np.ndarray:
        if self.policy == "ew":
            return equal_width(k, self.bin_min, self.bin_max)
        return equal_frequency(self.data.columns[var], k, self.bin_min, self.bin_max)

    def _slot(self, var: int, k: int | None) -> tuple[int, np.ndarray, int]:
        """(bank row, log widths, bin count) for a variable at a given bin count."""
        key = (var, k)
        hit = self._slots.get(key)
        if hit is not None:
            return hit
        m = self.meta[var]
        if not m.is_continuous:
            codes = self.data.columns[var].astype(np.int32)
            logw = np.zeros(m.cardinality)
            b = m.cardinality
            aux_codes = self._aux[var].astype(np.int32) if self._aux is not None else None
        else:
            bnd = self._boundaries(var, k)
            codes = np.searchsorted(bnd, self.data.columns[var], side="right").astype(np.int32)
            logw = np.log(np.diff(np.concatenate([[0.0], bnd, [1.0]])))
            b = k
            if self._aux is not None:
                aux_codes = np.clip(
                    np.searchsorted(bnd, self._aux[var], side="right"), 0, b - 1
                ).astype(np.int32)
            else:
                aux_codes = None
        row = self._bank.add(codes)
        if aux_codes is not None:
            aux_row = self._aux_bank.add(aux_codes)
            assert aux_row == row
        slot = (row, logw, b)
        self._slots[key] = slot
        return slot

    # -- scoring -----------------------------------------------------------

    def _score_node(self, node: int, parents, bins) -> tuple[float, float, float]:
        k = int(bins[node]) if self.meta[node].is_continuous else None
        row_n, logw, b = self._slot(node, k)
        p_slots = [self._slot(p, int(bins[p]) if self.meta[p].is_continuous else None) for p in parents]
        q = 1
        for _, _, pb in p_slots:
            q *= pb
        self.evaluations += 1.0 / self._n_vars  # one node recompute = 1/N of an evaluation
        aux_mean = 0.0
        if q * b <= self.dense_cell_cap:
            strides = []
            acc = 1
            for _, _, pb in p_slots:
                strides.append(acc)
                acc *= pb
            rows = np.array([s[0] for s in p_slots], dtype=np.int64)
            strides = np.array(strides, dtype=np.int64)
            ll = kernels.node_ll(self._bank.view, rows, strides, row_n, q, b, logw, self.smoothing)
            if self._aux is not None:
                aux_mean = kernels.cross_mean_logp(
                    self._bank.view, self._aux_bank.view, rows, strides, row_n, q, b, logw, self.smoothing
                )
        else:
            ll, aux_mean = self._score_node_grouped(row_n, p_slots, b, logw)
        penalty = float(q) * (b - 1) * self._log_half_n
        return ll, penalty, aux_mean

    def _score_node_grouped(self, row_n, p_slots, b, logw) -> tuple[float, float]:
        """Huge parent spaces: compress joint configs over train (and aux) jointly."""
        train_cols = [self._bank.view[r].astype(np.int64) for r, _, _ in p_slots]
        p_bins = [pb for _, _, pb in p_slots]
        if not p_slots:
            train_cols, p_bins = [np.zeros(self.n, dtype=np.int64)], [1]
        node_codes = self._bank.view[row_n].astype(np.int64)
        if self._aux is None:
            configs, q_eff = _grouped_configs(train_cols, p_bins)
            return _ll_from_configs(configs, node_codes, q_eff, b, logw, self.smoothing), 0.0
        aux_cols = [self._aux_bank.view[r].astype(np.int64) for r, _, _ in p_slots]
        if not p_slots:
            aux_cols = [np.zeros(self._aux_bank.view.shape[1], dtype=np.int64)]
        joined = [np.concatenate([t, a]) for t, a in zip(train_cols, aux_cols)]
        configs, q_eff = _grouped_configs(joined, p_bins)
        tr, ax = configs[: self.n], configs[self.n :]
        ll = _ll_from_configs(tr, node_codes, q_eff, b, logw, self.smoothing)
        counts = np.bincount(tr * b + node_codes, minlength=q_eff * b)
        rows = counts.reshape(q_eff, b).sum(axis=1)
        aux_codes = self._aux_bank.view[row_n].astype(np.int64)
        cell = counts[ax * b + aux_codes].astype(np.float64)
        with np.errstate(divide="ignore"):
            logp = np.log(cell + self.smoothing) - np.log(rows[ax] + self.smoothing * b) - logw[aux_codes]
        return ll, float(np.mean(logp))

    def _structure(self, genotype: Genotype):
        children = decode_children(genotype, self._n_vars)
        if not is_acyclic(children):
            raise ContractViolation("genotype decodes to a cyclic graph; repair first")
        parents: list[list[int]] = [[] for _ in range(self._n_vars)]
        for u, cs in enumerate(children):
            for v in cs:
                parents[v].append(u)
        return tuple(tuple(sorted(ps)) for ps in parents)

    def evaluate(self, genotype: Genotype) -> tuple[FitnessBreakdown, EvalCache]:
        parents = self._structure(genotype)
        bins = bins_from_genotype(genotype, self.meta)
        if self.policy == "bd":
            return self._evaluate_bd(genotype, parents, bins)
        node_ll = np.zeros(self._n_vars)
        node_c = np.zeros(self._n_vars)
        node_aux = np.zeros(self._n_vars) if self._aux is not None else None
        feasible = True
        try:
            for i in range(self._n_vars):
                ll, c, aux = self._score_node(i, parents[i], bins)
                node_ll[i], node_c[i] = ll, c
                if node_aux is not None:
                    node_aux[i] = aux
        except InsufficientDistinctValuesError:
            feasible = False
        cache = EvalCache(genotype.copy(), parents, bins, node_ll, node_c, node_aux, feasible, self)
        return cache.breakdown(), cache

    def partial_evaluate(
        self, genotype: Genotype, changed_indices, cache: EvalCache
    ) -> tuple[FitnessBreakdown, EvalCache]:
        """Recompute only nodes whose parent set or bin context changed."""
        if cache.evaluator is not self:
            raise StaleCacheError("cache belongs to a different evaluator")
        changed = set(int(g) for g in changed_indices)
        for g in genotype.diff_indices(cache.genotype):
            if int(g) not in changed:
                raise StaleCacheError(f"gene {int(g)} differs but was not reported as changed")
        if not cache.feasible or self.policy == "bd":
            return self.evaluate(genotype)
        parents = self._structure(genotype)
        bins = bins_from_genotype(genotype, self.meta)
        dirty = []
        for i in range(self._n_vars):
            if parents[i] != cache.parents[i] or bins[i] != cache.bins[i]:
                dirty.append(i)
            elif any(bins[p] != cache.bins[p] for p in parents[i]):
                dirty.append(i)
        node_ll = cache.node_ll.copy()
        node_c = cache.node_c.copy()
        node_aux = None if cache.node_aux is None else cache.node_aux.copy()
        feasible = True
        try:
            for i in dirty:
                ll, c, aux = self._score_node(i, parents[i], bins)
                node_ll[i], node_c[i] = ll, c
                if node_aux is not None:
                    node_aux[i] = aux
        except InsufficientDistinctValuesError:
            feasible = False
        out = EvalCache(genotype.copy(), parents, bins, node_ll, node_c, node_aux, feasible, self)
        return out.breakdown(), out

    # -- policies that need the whole structure -----------------------------

    def _evaluate_bd(self, genotype, parents, bins):
        """Boundary selection per node from its discretized parents, in topological order.

        Expensive (quadratic per variable); no partial evaluation in this mode.
        """
        model = build_model(genotype, self.data, "bd", self.bin_min, self.bin_max, self.bd_params)
        assignment = assign_bins(self.data, model)
        node_ll = np.zeros(self._n_vars)
        node_c = np.zeros(self._n_vars)
        dag = Dag(self._n_vars, parents)
        for i in range(self._n_vars):
            node_ll[i], node_c[i] = node_contribution(i, assignment, dag, self.n, bool(self.smoothing))
        self.evaluations += 1.0
        cache = EvalCache(genotype.copy(), parents, np.array(model.bins), node_ll, node_c, None, True, self)
        return cache.breakdown(), cache


def build_model(
    genotype: Genotype,
    data: NormalizedDataset,
    policy: str = "ew",
    bin_min: int = DEFAULT_BIN_MIN,
    bin_max: int = DEFAULT_BIN_MAX,
    bd_params: dict | None = None,
) -> SolutionModel:
    """Decode a genotype into a SolutionModel with policy-determined boundaries."""
    dag = dag_from_genotype(genotype, data.meta)
    bins = bins_from_genotype(genotype, data.meta)
    boundaries: dict[int, np.ndarray] = {}
    if policy in ("ew", "ef"):
        for v, m in enumerate(data.meta):
            if not m.is_continuous:
                continue
            k = int(bins[v])
            if policy == "ew":
                boundaries[v] = equal_width(k, bin_min, bin_max)
            else:
                boundaries[v] = equal_frequency(data.columns[v], k, bin_min, bin_max)
    elif policy == "bd":
        params = bd_params or {}
        codes: dict[int, np.ndarray] = {}
        for v in dag.topological_order():
            m = data.meta[v]
            if not m.is_continuous:
                codes[v] = data.columns[v].astype(np.int64)
                continue
            context = [codes[p] for p in dag.parents[v]]
            bnd = bayesian_discretize(data.columns[v], context, bin_max=bin_max, **params)
            boundaries[v] = bnd  # may be empty: a single bin is a legal outcome here
            codes[v] = np.searchsorted(bnd, data.columns[v], side="right").astype(np.int64)
            bins[v] = bnd.size + 1
    else:
        raise ValueError(f"unknown policy {policy!r}")
    return SolutionModel(dag, tuple(int(b) for b in bins), boundaries)


def evaluate(
    genotype: Genotype,
    data: NormalizedDataset,
    policy: str = "ew",
    bin_min: int = DEFAULT_BIN_MIN,
    bin_max: int = DEFAULT_BIN_MAX,
    smoothing: bool = True,
) -> FitnessBreakdown:
    """One-shot scoring of a repaired genotype."""
    ev = Evaluator(data, policy, bin_min, bin_max, smoothing)
    breakdown, _ = ev.evaluate(genotype)
    return breakdown


def partial_evaluate(genotype: Genotype, changed_indices, cache: EvalCache) -> FitnessBreakdown:
    """Scoring after a small change, relative to a cache from the same evaluator."""
    breakdown, _ = cache.evaluator.partial_evaluate(genotype, changed_indices, cache)
    return breakdown


def model_complexity(model: SolutionModel, n: int) -> float:
    """BIC-style structure penalty of a decoded model on n samples."""
    total = 0.0
    for i in range(model.dag.n_nodes):
        q = 1
        for p in model.dag.parents[i]:
            q *= model.bins[p]
        total += float(q) * (model.bins[i] - 1) * math.log(n / 2.0)
    return total


class FittedModel:
    """A solution model with conditional bin probabilities estimated from data.

    Gives exact log densities for arbitrary (normalized) samples and supports
    ancestral sampling, which is what the divergence metrics are built on.
    """

    def __init__(self, model: SolutionModel, data: NormalizedDataset, smoothing: bool = True):
        self.model = model
        self.meta = data.meta
        n_vars = len(data.meta)
        for v, m in enumerate(data.meta):
            if not m.is_continuous and model.bins[v] != m.cardinality:
                raise ValueError(f"variable {v}: model bins must equal the discrete cardinality")
        assignment = assign_bins(data, model)
        self.log_mass: list[np.ndarray] = []  # per node, (q, b) log p-hat
        self.log_width: list[np.ndarray] = []
        s = int(smoothing)
        for i in range(n_vars):
            parents = model.dag.parents[i]
            b = model.bins[i]
            q = 1
            for p in parents:
                q *= model.bins[p]
            if q * b > (1 << 24):
                raise MemoryError(f"node {i}: table of {q * b} cells is too large to fit")
            configs = np.zeros(data.n, dtype=np.int64)
            acc = 1
            for p in parents:
                configs += assignment.codes[p].astype(np.int64) * acc
                acc *= model.bins[p]
            counts = np.bincount(configs * b + assignment.codes[i], minlength=q * b).reshape(q, b)
            rows = counts.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                p_hat = (counts + s) / (rows + s * b)
            p_hat[np.isnan(p_hat)] = 1.0 / b  # unobserved parent configs fall back to uniform
            with np.errstate(divide="ignore"):
                self.log_mass.append(np.log(p_hat))
            self.log_width.append(
                np.log(assignment.widths[i]) if i in assignment.widths else np.zeros(b)
            )

    def _codes_for(self, columns) -> list[np.ndarray]:
        codes = []
        for v, m in enumerate(self.meta):
            if m.is_continuous:
                bnd = self.model.boundaries[v]
                c = np.clip(
                    np.searchsorted(bnd, columns[v], side="right"), 0, self.model.bins[v] - 1
                )
                codes.append(c.astype(np.int64))
            else:
                codes.append(np.asarray(columns[v], dtype=np.int64))
        return codes

    def logpdf(self, columns) -> np.ndarray:
        """Per-sample log density of normalized-space samples."""
        codes = self._codes_for(columns)
        n = codes[0].size
        out = np.zeros(n)
        for i in range(len(self.meta)):
            configs = np.zeros(n, dtype=np.int64)
            acc = 1
            for p in self.model.dag.parents[i]:
                configs += codes[p] * acc
                acc *= self.model.bins[p]
            out += self.log_mass[i][configs, codes[i]] - self.log_width[i][codes[i]]
        return out

    def sample(self, n: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Ancestral sampling; continuous values are uniform within their bin."""
        codes: dict[int, np.ndarray] = {}
        columns: list[np.ndarray | None] = [None] * len(self.meta)
        for i in self.model.dag.topological_order():
            b = self.model.bins[i]
            configs = np.zeros(n, dtype=np.int64)
            acc = 1
            for p in self.model.dag.parents[i]:
                configs += codes[p] * acc
                acc *= self.model.bins[p]
            cdf = np.cumsum(np.exp(self.log_mass[i]), axis=1)[configs]
            draws = (rng.random(n)[:, None] * cdf[:, -1:] > cdf).sum(axis=1)
            codes[i] = draws.astype(np.int64)
            if self.meta[i].is_continuous:
                edges = np.concatenate([[0.0], self.model.boundaries[i], [1.0]])
                lo = edges[draws]
                hi = edges[draws + 1]
                columns[i] = lo + rng.random(n) * (hi - lo)
            else:
                columns[i] = draws.astype(np.int32)
        return columns  # type: ignore[return-value]
