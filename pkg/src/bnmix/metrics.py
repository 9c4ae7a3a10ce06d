"""Structure and distribution metrics against a ground truth.

Edge bookkeeping ignores direction: a pair connected in both networks (either
way) is a true positive, a pair connected in neither is a true negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import GroundTruthNetwork
from .discretize import RawDataset
from .fitness import FittedModel
from .model import Dag, n_edge_genes


@dataclass
class StructureScore:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def l_total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.l_total

    @property
    def sensitivity(self) -> float:
        l_edges = self.tp + self.fn
        return self.tp / l_edges if l_edges else 1.0


def structure_score(candidate: Dag, truth: Dag) -> StructureScore:
    """Undirected confusion counts over all variable pairs."""
    if candidate.n_nodes != truth.n_nodes:
        raise ValueError("node counts differ")
    n = truth.n_nodes
    cand = {frozenset(e) for e in candidate.edge_set()}
    true = {frozenset(e) for e in truth.edge_set()}
    tp = tn = fp = fn = 0
    for i in range(n):
        for j in range(i + 1, n):
            pair = frozenset((i, j))
            in_c, in_t = pair in cand, pair in true
            if in_c and in_t:
                tp += 1
            elif not in_c and not in_t:
                tn += 1
            elif in_c:
                fp += 1
            else:
                fn += 1
    score = StructureScore(tp, tn, fp, fn)
    assert score.l_total == n_edge_genes(n)
    return score


def kl_to_truth(
    candidate: FittedModel,
    truth: GroundTruthNetwork,
    test_data: RawDataset,
    normalization: dict[int, tuple[float, float]],
) -> float:
    """Monte-Carlo divergence of the fitted candidate from the exact generative density.

    Test samples live in raw space; the candidate is evaluated in normalized
    space with the training normalization, so its density picks up one
    Jacobian factor per continuous variable.
    """
    if test_data.n == 0:
        raise ValueError("empty test set")
    log_p = truth.log_density(test_data.columns)
    cols_norm = []
    jacobian = 0.0
    for v, m in enumerate(test_data.meta):
        if m.is_continuous:
            lo, hi = normalization[v]
            cols_norm.append(np.clip((test_data.columns[v] - lo) / (hi - lo), 0.0, 1.0))
            jacobian += np.log(hi - lo)
        else:
            cols_norm.append(test_data.columns[v])
    log_q = candidate.logpdf(cols_norm)
    return max(0.0, float(np.mean(log_p - log_q) + jacobian))
