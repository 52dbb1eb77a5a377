"""Weakly supervised temporal alignment under ordering constraints.

Each clip's intervals are assigned to its ordered annotation slots while a
shared linear classifier is learned, by Frank-Wolfe on a convex relaxation
of a square-loss discriminative clustering cost.
"""
from .cost import Classifier, CostOperator, build_cost_operator, hellinger_map, ncut_cost_operator, recover_classifier
from .errors import InfeasibleError, NumericalError, OrdalignError, ValidationError
from .frank_wolfe import SolveOptions, SolveResult, solve
from .model import AnnotationSequence, Clip, Dataset, LabelSet, Segment, build_annotation_sequence
from .oracle import brute_force_lmo, lmo, round_assignment

__version__ = "0.1.0"

__all__ = [
    "AnnotationSequence",
    "Classifier",
    "Clip",
    "CostOperator",
    "Dataset",
    "InfeasibleError",
    "LabelSet",
    "NumericalError",
    "OrdalignError",
    "Segment",
    "SolveOptions",
    "SolveResult",
    "ValidationError",
    "brute_force_lmo",
    "build_annotation_sequence",
    "build_cost_operator",
    "hellinger_map",
    "lmo",
    "ncut_cost_operator",
    "recover_classifier",
    "round_assignment",
    "solve",
]
