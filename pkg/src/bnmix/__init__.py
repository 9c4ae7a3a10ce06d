"""Bayesian network structure learning on mixed data with joint discretization.

Candidate networks are fixed-length discrete strings (edge trits plus bin
counts) scored by a decomposable density fitness; search runs gene-pool
optimal mixing over linkage trees, single- or multi-objectively. The hot
counting kernels are compiled when the extension is available; see
``bnmix.kernels.backend_name()``.
"""

from .kernels import backend_name
from .model import (
    CONTINUOUS,
    DISCRETE,
    Dag,
    Genotype,
    SolutionModel,
    VariableMeta,
    repair_cycles,
)
from .discretize import (
    BinAssignment,
    NormalizedDataset,
    RawDataset,
    assign_bins,
    bayesian_discretize,
    equal_frequency,
    equal_width,
    normalize,
)
from .fitness import (
    Evaluator,
    FitnessBreakdown,
    FittedModel,
    build_model,
    evaluate,
    model_complexity,
    partial_evaluate,
)
from .so_search import run_so
from .mo_search import ElitistArchive, ObjectiveVector, kl_to_expert, run_mo
from .postopt import optimize_boundaries
from .datagen import GroundTruthNetwork, make_expert, random_network, sample
from .metrics import kl_to_truth, structure_score

__version__ = "0.1.0"

__all__ = [
    "CONTINUOUS",
    "DISCRETE",
    "BinAssignment",
    "Dag",
    "ElitistArchive",
    "Evaluator",
    "FitnessBreakdown",
    "FittedModel",
    "Genotype",
    "GroundTruthNetwork",
    "NormalizedDataset",
    "ObjectiveVector",
    "RawDataset",
    "SolutionModel",
    "VariableMeta",
    "assign_bins",
    "backend_name",
    "bayesian_discretize",
    "build_model",
    "equal_frequency",
    "equal_width",
    "evaluate",
    "kl_to_expert",
    "kl_to_truth",
    "make_expert",
    "model_complexity",
    "normalize",
    "optimize_boundaries",
    "partial_evaluate",
    "random_network",
    "repair_cycles",
    "run_mo",
    "run_so",
    "sample",
    "structure_score",
]
