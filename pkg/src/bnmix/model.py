"""Core solution representation: genotypes, DAG utilities, and cycle repair.

A candidate network is a flat discrete string. The first ``n*(n-1)/2`` genes
are trits describing the state of every unordered variable pair (0 = no edge,
1 = edge from the lower to the higher index, 2 = the reverse). One extra gene
per continuous variable holds its bin count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DISCRETE = "discrete"
CONTINUOUS = "continuous"


class ContractViolation(ValueError):
    """An operation was called with arguments that break its preconditions."""


@dataclass(frozen=True)
class VariableMeta:
    """One column: discrete with a fixed cardinality, or continuous with a raw range."""

    name: str
    kind: str
    cardinality: int = 0
    raw_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == DISCRETE and self.cardinality < 2:
            raise ValueError(f"discrete variable {self.name!r} needs cardinality >= 2")
        if self.kind == CONTINUOUS and not self.raw_range[0] < self.raw_range[1]:
            raise ValueError(f"continuous variable {self.name!r} needs raw_range min < max")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS


def continuous_indices(meta) -> list[int]:
    return [i for i, m in enumerate(meta) if m.is_continuous]


def n_edge_genes(n_vars: int) -> int:
    return n_vars * (n_vars - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Gene index of the unordered pair (i, j), lexicographic in (i, j)."""
    if not 0 <= i < j < n:
        raise ContractViolation(f"pair ({i}, {j}) invalid for n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


@lru_cache(maxsize=64)
def pair_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (i, j) such that gene g describes pair (i[g], j[g])."""
    i_arr, j_arr = np.triu_indices(n, k=1)
    return i_arr.astype(np.int64), j_arr.astype(np.int64)


class Genotype:
    """Edge trits plus per-continuous-variable bin counts."""

    __slots__ = ("edge_genes", "bin_genes")

    def __init__(self, edge_genes, bin_genes=()):
        self.edge_genes = np.ascontiguousarray(edge_genes, dtype=np.int8)
        self.bin_genes = np.ascontiguousarray(bin_genes, dtype=np.int16)

    def copy(self) -> "Genotype":
        return Genotype(self.edge_genes.copy(), self.bin_genes.copy())

    @property
    def n_genes(self) -> int:
        return self.edge_genes.size + self.bin_genes.size

    def as_vector(self) -> np.ndarray:
        """Concatenated int32 view of all genes (edge genes first)."""
        return np.concatenate(
            [self.edge_genes.astype(np.int32), self.bin_genes.astype(np.int32)]
        )

    def values_at(self, indices) -> np.ndarray:
        le = self.edge_genes.size
        out = np.empty(len(indices), dtype=np.int32)
        for k, g in enumerate(indices):
            out[k] = self.edge_genes[g] if g < le else self.bin_genes[g - le]
        return out

    def set_values(self, indices, values) -> None:
        le = self.edge_genes.size
        for g, v in zip(indices, values):
            if g < le:
                self.edge_genes[g] = v
            else:
                self.bin_genes[g - le] = v

    def diff_indices(self, other: "Genotype") -> np.ndarray:
        """Flat indices (edge genes first) where the two genotypes differ."""
        d_edge = np.nonzero(self.edge_genes != other.edge_genes)[0]
        d_bin = np.nonzero(self.bin_genes != other.bin_genes)[0] + self.edge_genes.size
        return np.concatenate([d_edge, d_bin])

    def equal(self, other: "Genotype") -> bool:
        return np.array_equal(self.edge_genes, other.edge_genes) and np.array_equal(
            self.bin_genes, other.bin_genes
        )

    @staticmethod
    def random(meta, bin_min: int, bin_max: int, rng: np.random.Generator) -> "Genotype":
        n = len(meta)
        edges = rng.integers(0, 3, size=n_edge_genes(n), dtype=np.int8)
        n_c = len(continuous_indices(meta))
        bins = rng.integers(bin_min, bin_max + 1, size=n_c, dtype=np.int16)
        return Genotype(edges, bins)


def decode_children(genotype: Genotype, n: int) -> list[list[int]]:
    """Child adjacency lists of the decoded graph, possibly cyclic. Neighbors ascending."""
    if genotype.edge_genes.size != n_edge_genes(n):
        raise ContractViolation("genotype edge-gene length does not match variable count")
    i_arr, j_arr = pair_table(n)
    children: list[list[int]] = [[] for _ in range(n)]
    genes = genotype.edge_genes
    for g in np.nonzero(genes)[0]:
        i, j = int(i_arr[g]), int(j_arr[g])
        if genes[g] == 1:
            children[i].append(j)
        else:
            children[j].append(i)
    for c in children:
        c.sort()
    return children


def decode_edges(genotype: Genotype, n: int) -> list[tuple[int, int]]:
    """Directed edge list (parent, child) of the decoded graph."""
    return [(u, v) for u, cs in enumerate(decode_children(genotype, n)) for v in cs]


def edges_to_genes(edges, n: int) -> np.ndarray:
    """Inverse of decode_edges: edge trits from a directed edge list."""
    genes = np.zeros(n_edge_genes(n), dtype=np.int8)
    for u, v in edges:
        if u == v:
            raise ContractViolation(f"self edge {u}->{v}")
        if u < v:
            genes[pair_index(u, v, n)] = 1
        else:
            genes[pair_index(v, u, n)] = 2
    return genes


def is_acyclic(children: list[list[int]]) -> bool:
    """True iff a topological order exists (Kahn)."""
    n = len(children)
    indeg = [0] * n
    for cs in children:
        for v in cs:
            indeg[v] += 1
    stack = [u for u in range(n) if indeg[u] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen == n


def _find_back_edge(children: list[list[int]], n: int):
    """First edge closing a cycle in a DFS from node 0 upward, neighbors ascending."""
    color = [0] * n  # 0 white, 1 on stack, 2 done
    for root in range(n):
        if color[root]:
            continue
        stack = [(root, 0)]
        color[root] = 1
        while stack:
            u, k = stack[-1]
            if k < len(children[u]):
                stack[-1] = (u, k + 1)
                v = children[u][k]
                if color[v] == 1:
                    return (u, v)
                if color[v] == 0:
                    color[v] = 1
                    stack.append((v, 0))
            else:
                color[u] = 2
                stack.pop()
    return None


def repair_cycles(genotype: Genotype, meta) -> Genotype:
    """Remove cycles by zeroing, per DFS pass, the edge that closes the first cycle found.

    Edges are only ever removed, never added or reversed, so the result is an
    edge-subset of the input. Deterministic: DFS roots and neighbors ascending.
    """
    n = len(meta)
    children = decode_children(genotype, n)
    genes = genotype.edge_genes.copy()
    while True:
        back = _find_back_edge(children, n)
        if back is None:
            break
        u, v = back
        children[u].remove(v)
        genes[pair_index(min(u, v), max(u, v), n)] = 0
    return Genotype(genes, genotype.bin_genes.copy())


@dataclass(frozen=True)
class Dag:
    """Acyclic directed graph stored as per-node sorted parent tuples."""

    n_nodes: int
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.parents) != self.n_nodes:
            raise ContractViolation("parents length != n_nodes")
        for v, ps in enumerate(self.parents):
            if list(ps) != sorted(set(ps)):
                raise ContractViolation(f"parents of {v} must be sorted and unique")
            if any(p == v or not 0 <= p < self.n_nodes for p in ps):
                raise ContractViolation(f"invalid parent in {ps} for node {v}")
        children: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for v, ps in enumerate(self.parents):
            for p in ps:
                children[p].append(v)
        if not is_acyclic(children):
            raise ContractViolation("graph is cyclic")
        object.__setattr__(self, "_children", tuple(tuple(c) for c in children))

    @property
    def children(self) -> tuple[tuple[int, ...], ...]:
        return self._children  # type: ignore[attr-defined]

    def topological_order(self) -> list[int]:
        indeg = [len(ps) for ps in self.parents]
        order, stack = [], [u for u in range(self.n_nodes) if indeg[u] == 0]
        while stack:
            u = stack.pop()
            order.append(u)
            for v in self.children[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        return order

    def edge_set(self) -> set[tuple[int, int]]:
        return {(p, v) for v, ps in enumerate(self.parents) for p in ps}

    @property
    def n_edges(self) -> int:
        return sum(len(ps) for ps in self.parents)

    @staticmethod
    def from_edges(n: int, edges) -> "Dag":
        parents: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            parents[v].append(u)
        return Dag(n, tuple(tuple(sorted(ps)) for ps in parents))


def dag_from_genotype(genotype: Genotype, meta) -> Dag:
    """Decode an acyclic genotype into a Dag. Raises if the decoded graph has a cycle."""
    n = len(meta)
    return Dag.from_edges(n, decode_edges(genotype, n))


def bins_from_genotype(genotype: Genotype, meta) -> np.ndarray:
    """Per-variable bin counts: cardinality for discrete, bin gene for continuous."""
    bins = np.empty(len(meta), dtype=np.int64)
    cont = continuous_indices(meta)
    if len(cont) != genotype.bin_genes.size:
        raise ContractViolation("bin-gene length does not match continuous variable count")
    for i, m in enumerate(meta):
        bins[i] = m.cardinality if not m.is_continuous else 0
    for k, v in enumerate(cont):
        bins[v] = int(genotype.bin_genes[k])
    return bins


@dataclass
class SolutionModel:
    """A decoded network: structure, per-variable bin counts, and boundary placement."""

    dag: Dag
    bins: tuple[int, ...]
    boundaries: dict[int, np.ndarray]  # continuous variable -> sorted interior boundaries

    def __post_init__(self):
        for v, b in self.boundaries.items():
            b = np.asarray(b, dtype=np.float64)
            self.boundaries[v] = b
            if b.size != self.bins[v] - 1:
                raise ContractViolation(f"variable {v}: {b.size} boundaries for {self.bins[v]} bins")
            if b.size and not (np.all(np.diff(b) > 0) and b[0] > 0.0 and b[-1] < 1.0):
                raise ContractViolation(f"variable {v}: boundaries must be strictly increasing in (0,1)")
