"""Dataset normalization and discretization policies.

Continuous columns are mapped affinely onto [0, 1] before any scoring, so all
boundary sets live in normalized space. Three boundary policies are provided:
equal-width, equal-frequency, and a dynamic-programming discretizer that
maximizes a gap-weighted boundary prior times the conditional data likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SolutionModel, VariableMeta, continuous_indices

DEFAULT_BIN_MIN = 2
DEFAULT_BIN_MAX = 15


class DegenerateColumnError(ValueError):
    """A continuous column is constant and cannot be normalized."""


class InsufficientDistinctValuesError(ValueError):
    """A policy asked for more bins than there are distinct values."""


class MemoryCapError(MemoryError):
    """The dynamic-programming discretizer would exceed its memory budget."""


@dataclass
class RawDataset:
    """Tabular samples straight from a generator or a file, one array per column."""

    columns: list[np.ndarray]
    meta: tuple[VariableMeta, ...]

    @property
    def n(self) -> int:
        return len(self.columns[0]) if self.columns else 0


@dataclass
class NormalizedDataset:
    """Samples with continuous columns in [0, 1] and the affine maps that got them there."""

    columns: list[np.ndarray]
    meta: tuple[VariableMeta, ...]
    normalization: dict[int, tuple[float, float]]  # continuous variable -> (min, max)

    @property
    def n(self) -> int:
        return len(self.columns[0]) if self.columns else 0


@dataclass
class BinAssignment:
    """Per-sample bin indices for every variable plus continuous bin widths."""

    codes: list[np.ndarray]  # int32 bin index per sample, per variable
    widths: dict[int, np.ndarray] = field(default_factory=dict)  # continuous only
    bins: tuple[int, ...] = ()


def normalize(raw: RawDataset) -> NormalizedDataset:
    """Map each continuous column so its min lands on 0 and its max on 1."""
    columns: list[np.ndarray] = []
    normalization: dict[int, tuple[float, float]] = {}
    for v, m in enumerate(raw.meta):
        col = np.asarray(raw.columns[v])
        if m.is_continuous:
            col = col.astype(np.float64)
            lo, hi = float(col.min()), float(col.max())
            if hi <= lo:
                raise DegenerateColumnError(f"degenerate column {m.name!r}: constant values")
            columns.append((col - lo) / (hi - lo))
            normalization[v] = (lo, hi)
        else:
            col = col.astype(np.int32)
            if col.min() < 0 or col.max() >= m.cardinality:
                raise ValueError(f"discrete column {m.name!r} out of [0, {m.cardinality})")
            columns.append(col)
    return NormalizedDataset(columns, raw.meta, normalization)


def equal_width(k: int, bin_min: int = DEFAULT_BIN_MIN, bin_max: int = DEFAULT_BIN_MAX) -> np.ndarray:
    """Boundaries at i/k for i = 1..k-1."""
    if not bin_min <= k <= bin_max:
        raise ValueError(f"bin count {k} outside [{bin_min}, {bin_max}]")
    return np.arange(1, k) / k


def equal_frequency(
    values: np.ndarray, k: int, bin_min: int = DEFAULT_BIN_MIN, bin_max: int = DEFAULT_BIN_MAX
) -> np.ndarray:
    """Boundaries at midpoints nearest rank positions floor(j*n/k), never splitting ties.

    Candidate cut positions are the places where consecutive sorted samples
    differ; each target rank snaps to the nearest candidate still compatible
    with strictly increasing boundaries.
    """
    if not bin_min <= k <= bin_max:
        raise ValueError(f"bin count {k} outside [{bin_min}, {bin_max}]")
    srt = np.sort(np.asarray(values, dtype=np.float64))
    n = srt.size
    cuts = np.nonzero(srt[1:] > srt[:-1])[0] + 1  # positions p with srt[p-1] < srt[p]
    if k > cuts.size + 1:
        raise InsufficientDistinctValuesError(
            f"equal-frequency needs k <= distinct values ({cuts.size + 1}), got k={k}"
        )
    chosen: list[int] = []
    prev_ci = -1
    for j in range(1, k):
        target = j * n // k
        lo_ci = prev_ci + 1
        hi_ci = cuts.size - (k - 1 - j)  # leave room for the remaining boundaries
        window = cuts[lo_ci:hi_ci]
        ci = lo_ci + int(np.argmin(np.abs(window - target)))
        chosen.append(int(cuts[ci]))
        prev_ci = ci
    bounds = np.array([(srt[p - 1] + srt[p]) / 2.0 for p in chosen])
    assert np.all(np.diff(bounds) > 0)
    return bounds


def assign_bins(data: NormalizedDataset, model: SolutionModel) -> BinAssignment:
    """Apply a model's boundaries to the data.

    Continuous value v falls in bin b iff boundary[b-1] <= v < boundary[b];
    bin 0 starts at 0 and the last bin is closed at 1.
    """
    codes: list[np.ndarray] = []
    widths: dict[int, np.ndarray] = {}
    for v, m in enumerate(data.meta):
        if m.is_continuous:
            bnd = model.boundaries[v]
            codes.append(np.searchsorted(bnd, data.columns[v], side="right").astype(np.int32))
            widths[v] = np.diff(np.concatenate([[0.0], bnd, [1.0]]))
        else:
            codes.append(data.columns[v].astype(np.int32))
    return BinAssignment(codes, widths, tuple(model.bins))


def _context_configs(context_columns) -> np.ndarray:
    """Joint configuration id per sample from already-discrete context columns."""
    if not context_columns:
        return None
    cfg = np.zeros(len(context_columns[0]), dtype=np.int64)
    stride = 1
    for col in context_columns:
        col = np.asarray(col, dtype=np.int64)
        cfg += col * stride
        stride *= int(col.max()) + 1
    return cfg


def bd_score(values, context_columns, cut_indices, prior_strength: float = 0.5) -> float:
    """Score of one boundary policy: gap-weighted cut prior plus conditional log density.

    ``cut_indices`` are positions c meaning a boundary between distinct values
    u[c] and u[c+1]. Exposed separately so small instances can be enumerated.
    """
    values = np.asarray(values, dtype=np.float64)
    u = np.unique(values)
    d = u.size
    gaps = np.diff(u)
    span = u[-1] - u[0]
    pi = np.clip(prior_strength * gaps / span, 1e-12, 1.0 - 1e-12)
    log_prior = float(np.sum(np.log1p(-pi)))
    for c in cut_indices:
        log_prior += math.log(pi[c]) - math.log1p(-pi[c])

    mids = (u[:-1] + u[1:]) / 2.0
    edges = np.concatenate([[0.0], mids[list(cut_indices)], [1.0]]) if len(cut_indices) else np.array([0.0, 1.0])
    codes = np.searchsorted(edges[1:-1], values, side="right")
    cfg = _context_configs(context_columns)
    if cfg is None:
        cfg = np.zeros(values.size, dtype=np.int64)
    n_bins = edges.size - 1
    ll = 0.0
    key = cfg * n_bins + codes
    cells, counts = np.unique(key, return_counts=True)
    cfg_ids, cfg_counts = np.unique(cfg, return_counts=True)
    cell_cfg_count = cfg_counts[np.searchsorted(cfg_ids, cells // n_bins)]
    ll += float(np.sum(counts * (np.log(counts) - np.log(cell_cfg_count))))
    ll -= float(np.sum(counts * np.log(np.diff(edges))[cells % n_bins]))
    return log_prior + ll


def bayesian_discretize(
    values,
    context_columns=(),
    bin_max: int = DEFAULT_BIN_MAX,
    prior_strength: float = 0.5,
    memory_cap_bytes: int = 2 << 30,
    return_score: bool = False,
):
    """Boundary set maximizing the gap-prior times conditional-likelihood score.

    Dynamic program over sorted distinct values; candidate boundaries are the
    midpoints between consecutive distinct values and at most bin_max - 1 of
    them are kept. Interval scores are precomputed into a dense table, which
    is the quadratic-memory part guarded by ``memory_cap_bytes``.
    """
    values = np.asarray(values, dtype=np.float64)
    u = np.unique(values)
    d = u.size
    if d < 2:
        raise InsufficientDistinctValuesError("need at least 2 distinct values")
    cfg = _context_configs(list(context_columns))
    if cfg is None:
        cfg = np.zeros(values.size, dtype=np.int64)
    cfg_ids, cfg_inverse = np.unique(cfg, return_inverse=True)
    n_cfg = cfg_ids.size

    est = 8 * (d * d + n_cfg * (d + 1) + bin_max * d)
    if est > memory_cap_bytes:
        raise MemoryCapError(f"BD memory exceeded: need ~{est} bytes, cap {memory_cap_bytes}")

    # cum[c, e]: samples with config c and value <= u[e]
    val_idx = np.searchsorted(u, values)
    cum = np.zeros((n_cfg, d + 1), dtype=np.int64)
    np.add.at(cum, (cfg_inverse, val_idx + 1), 1)
    cum = np.cumsum(cum, axis=1)
    totals = cum[:, -1].astype(np.float64)

    mids = (u[:-1] + u[1:]) / 2.0
    edges_left = np.concatenate([[0.0], mids])  # left edge of interval starting at distinct s
    edges_right = np.concatenate([mids, [1.0]])  # right edge of interval ending at distinct e

    # interval score f[s, e] for the block of distinct values s..e
    f = np.full((d, d), -np.inf)
    log_totals = np.log(totals)
    for s in range(d):
        block = cum[:, s + 1 : d + 1] - cum[:, s : s + 1]  # (n_cfg, d - s)
        blockf = block.astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = blockf * (np.log(blockf) - log_totals[:, None])
        term[block == 0] = 0.0
        widths = edges_right[s:] - edges_left[s]
        f[s, s:] = term.sum(axis=0) - blockf.sum(axis=0) * np.log(widths)

    gaps = np.diff(u)
    span = u[-1] - u[0]
    pi = np.clip(prior_strength * gaps / span, 1e-12, 1.0 - 1e-12)
    beta = np.log(pi) - np.log1p(-pi)  # marginal gain of switching cut c on
    prior_const = float(np.sum(np.log1p(-pi)))

    max_bins = min(bin_max, d)
    # dp[j, e]: best score of splitting distinct values 0..e into j+1 intervals
    dp = np.full((max_bins, d), -np.inf)
    arg = np.zeros((max_bins, d), dtype=np.int64)
    dp[0, :] = f[0, :]
    for j in range(1, max_bins):
        for e in range(j, d):
            cand = dp[j - 1, j - 1 : e] + beta[j - 1 : e] + f[j : e + 1, e]
            s_best = int(np.argmax(cand))
            dp[j, e] = cand[s_best]
            arg[j, e] = s_best + j  # start index of the last interval
    totals_by_bins = dp[:, d - 1]
    j_best = int(np.argmax(totals_by_bins))
    score = float(totals_by_bins[j_best]) + prior_const

    cuts = []
    e, j = d - 1, j_best
    while j > 0:
        s = int(arg[j, e])
        cuts.append(s - 1)  # boundary between distinct s-1 and s
        e, j = s - 1, j - 1
    cuts.reverse()
    boundaries = mids[cuts] if cuts else np.empty(0)
    if return_score:
        return boundaries, score
    return boundaries
