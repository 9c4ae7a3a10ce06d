import numpy as np
import pytest

from bnmix.discretize import RawDataset, normalize
from bnmix.model import CONTINUOUS, DISCRETE, VariableMeta


def cont_meta(n, names=None):
    return tuple(
        VariableMeta(names[i] if names else f"x{i}", CONTINUOUS, raw_range=(0.0, 1.0))
        for i in range(n)
    )


def disc_meta(cards):
    return tuple(VariableMeta(f"d{i}", DISCRETE, cardinality=c) for i, c in enumerate(cards))


def make_normalized(columns, meta):
    return normalize(RawDataset([np.asarray(c) for c in columns], meta))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
