"""Linkage trees: mutual-information-driven hierarchical gene grouping.

Built bottom-up from the population: start from singleton gene clusters and
repeatedly merge the pair with the highest average pairwise mutual
information. All clusters created along the way except the root form the
family of subsets used by the mixing operator.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .model import Genotype, continuous_indices, n_edge_genes


def gene_alphabet(meta, bin_min: int, bin_max: int) -> np.ndarray:
    """Alphabet size per gene position: 3 for edge trits, the bin range for bin genes."""
    n = len(meta)
    n_c = len(continuous_indices(meta))
    return np.concatenate(
        [np.full(n_edge_genes(n), 3), np.full(n_c, bin_max - bin_min + 1)]
    ).astype(np.int32)


def population_matrix(genotypes: list[Genotype], bin_min: int) -> np.ndarray:
    """Gene matrix with bin genes shifted to 0-based codes."""
    rows = []
    for g in genotypes:
        vec = g.as_vector()
        vec[g.edge_genes.size :] -= bin_min
        rows.append(vec)
    return np.ascontiguousarray(np.array(rows, dtype=np.int32))


class LinkageTree:
    """Ordered family of gene-index subsets (singletons plus merged clusters, no root)."""

    def __init__(self, elements: list[np.ndarray]):
        self.elements = elements

    def __len__(self) -> int:
        return len(self.elements)

    def shuffled(self, rng: np.random.Generator) -> list[np.ndarray]:
        order = rng.permutation(len(self.elements))
        return [self.elements[k] for k in order]


def learn_linkage_tree(pop_matrix: np.ndarray, alphabet: np.ndarray, rng: np.random.Generator) -> LinkageTree:
    """Average-linkage agglomeration over pairwise gene mutual information.

    Ties (including the all-zero matrix from a converged population) are
    broken randomly. For L genes the result has exactly 2L - 2 elements.
    """
    n_genes = pop_matrix.shape[1]
    if n_genes == 1:
        return LinkageTree([np.array([0])])
    sim = kernels.mi_matrix(pop_matrix, alphabet)
    clusters: list[np.ndarray] = [np.array([i]) for i in range(n_genes)]
    elements: list[np.ndarray] = list(clusters)
    active = np.arange(n_genes)
    # similarity between current clusters, updated under average linkage
    s = sim.copy()
    sizes = np.ones(n_genes)
    while active.size > 2:
        sub = s[np.ix_(active, active)]
        iu = np.triu_indices(active.size, k=1)
        vals = sub[iu]
        ties = np.nonzero(vals > vals.max() - 1e-14)[0]
        pick = int(ties[rng.integers(0, ties.size)])
        ai, bi = int(iu[0][pick]), int(iu[1][pick])
        a, b = int(active[ai]), int(active[bi])
        merged = np.concatenate([clusters[a], clusters[b]])
        elements.append(merged)
        wa, wb = sizes[a], sizes[b]
        others = active[(active != a) & (active != b)]
        s[a, others] = s[others, a] = (wa * s[a, others] + wb * s[b, others]) / (wa + wb)
        sizes[a] = wa + wb
        clusters[a] = merged
        active = active[active != b]
    # merging the final two would give the root (all genes), which is excluded
    return LinkageTree(elements)
