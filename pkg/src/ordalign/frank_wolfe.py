"""Conditional gradient over the product of per-clip assignment polytopes."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .cost import CostOperator
from .errors import InfeasibleError, NumericalError, ValidationError
from .model import Clip, matrix_to_path, path_to_matrix
from .oracle import lmo_path, round_path

log = logging.getLogger(__name__)

STEP_RULES = ("exact_line_search", "universal")
CURVATURE_FLOOR = 1e-15


@dataclass(frozen=True)
class SolveOptions:
    gap_tol: float = 1e-4
    max_iter: int = 500
    step_rule: str = "exact_line_search"
    record_history: bool = True

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise ValidationError("gap_tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.step_rule not in STEP_RULES:
            raise ValidationError(f"unknown step rule {self.step_rule!r}")


@dataclass
class SolveResult:
    Zbar: np.ndarray
    clip_ids: tuple[str, ...]
    clip_offsets: tuple[int, ...]
    paths: dict[str, np.ndarray]
    rounded: dict[str, np.ndarray]
    final_gap: float
    iterations: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)
    gap_history: list[float] = field(default_factory=list)
    step_history: list[float] = field(default_factory=list)

    def block(self, clip_id: str) -> np.ndarray:
        i = self.clip_ids.index(clip_id)
        return self.Zbar[self.clip_offsets[i]:self.clip_offsets[i + 1]]


def duality_gap(grad: np.ndarray, Z: np.ndarray, Zvertex: np.ndarray) -> float:
    """Linearization gap ``<grad, Z - Zvertex>``; bounds ``f(Z) - min f`` for convex f."""
    return float(np.sum(grad * (Z - Zvertex)))


def exact_line_search(
    op: CostOperator,
    Z: np.ndarray,
    Zvertex: np.ndarray,
    grad: np.ndarray | None = None,
    BS: np.ndarray | None = None,
) -> float:
    """Minimize the quadratic ``f(Z + g (Zvertex - Z))`` over ``g`` in [0, 1]."""
    S = Zvertex - Z
    if grad is None:
        grad = op.gradient(Z)
    if BS is None:
        BS = op.apply_B(S)
    slope = float(np.sum(grad * S))
    curvature = 2.0 * float(np.sum(S * BS * op.class_weights**2))
    if curvature <= CURVATURE_FLOOR:
        return 1.0 if slope < 0 else 0.0
    return float(np.clip(-slope / curvature, 0.0, 1.0))


def initial_point(op: CostOperator, clips: Sequence[Clip]) -> np.ndarray:
    """Supervised blocks at their fixed assignment, free ones at the all-stays-first vertex."""
    Z = np.zeros((op.T, op.A))
    for i, clip in enumerate(clips):
        rows = op.clip_slice(i)
        if clip.supervised_assignment is not None:
            Z[rows] = clip.supervised_assignment
        else:
            K = clip.annotation.K
            m = np.concatenate([np.zeros(clip.T - K + 1, dtype=np.intp), np.arange(1, K)])
            Z[rows] = path_to_matrix(m, clip.annotation, op.A)
    return Z


def solve(
    op: CostOperator,
    clips: Sequence[Clip],
    options: SolveOptions = SolveOptions(),
    trace: TextIO | None = None,
) -> SolveResult:
    """Frank-Wolfe on the relaxed problem, then per-clip rounding.

    ``clips`` must be in the stacking order used to build ``op``. Clips with a
    ``supervised_assignment`` keep their rows fixed throughout.
    """
    if len(clips) != len(op.clip_offsets) - 1:
        raise ValidationError("clip list does not match the cost operator's stacking")
    for i, clip in enumerate(clips):
        if clip.T != op.clip_offsets[i + 1] - op.clip_offsets[i]:
            raise ValidationError(f"clip {clip.id!r} length does not match the cost operator")
        if clip.T < clip.annotation.K:
            raise InfeasibleError(f"clip {clip.id!r} has fewer intervals than annotation slots")
    free = [i for i, c in enumerate(clips) if c.supervised_assignment is None]

    Z = initial_point(op, clips)
    BZ = op.apply_B(Z)
    obj_hist: list[float] = []
    gap_hist: list[float] = []
    step_hist: list[float] = []
    gap = 0.0
    converged = False
    k = 0
    while True:
        f = op.objective(Z, BZ)
        if not np.isfinite(f):
            raise NumericalError(f"non-finite objective {f} at iteration {k}")
        grad = op.gradient(Z, BZ)
        V = Z.copy()
        for i in free:
            rows = op.clip_slice(i)
            m, _ = lmo_path(grad[rows], clips[i].annotation)
            V[rows] = path_to_matrix(m, clips[i].annotation, op.A)
        gap = duality_gap(grad, Z, V)
        if not np.isfinite(gap):
            raise NumericalError(f"non-finite duality gap at iteration {k}")
        if gap < options.gap_tol or k >= options.max_iter:
            converged = gap < options.gap_tol
            if options.record_history:
                obj_hist.append(f)
                gap_hist.append(gap)
                _emit(trace, k, f, gap, None)
            break
        S = V - Z
        BS = op.apply_B(S)
        if options.step_rule == "exact_line_search":
            gamma = exact_line_search(op, Z, V, grad=grad, BS=BS)
        else:
            gamma = 2.0 / (k + 2.0)
        if options.record_history:
            obj_hist.append(f)
            gap_hist.append(gap)
            step_hist.append(gamma)
            _emit(trace, k, f, gap, gamma)
        Z += gamma * S
        BZ += gamma * BS
        k += 1

    log.debug("frank-wolfe stopped after %d iterations, gap %.3e", k, gap)
    paths: dict[str, np.ndarray] = {}
    rounded: dict[str, np.ndarray] = {}
    for i, clip in enumerate(clips):
        rows = op.clip_slice(i)
        if clip.supervised_assignment is not None:
            # Fixed blocks are returned bit-for-bit.
            Z[rows] = clip.supervised_assignment
            m = matrix_to_path(clip.supervised_assignment, clip.annotation)
        else:
            m = round_path(Z[rows], clip.annotation)
        paths[clip.id] = m
        rounded[clip.id] = path_to_matrix(m, clip.annotation, op.A)
    return SolveResult(
        Zbar=Z,
        clip_ids=tuple(c.id for c in clips),
        clip_offsets=op.clip_offsets,
        paths=paths,
        rounded=rounded,
        final_gap=gap,
        iterations=k,
        converged=converged,
        objective_history=obj_hist,
        gap_history=gap_hist,
        step_history=step_hist,
    )


def _emit(trace: TextIO | None, k: int, f: float, gap: float, gamma: float | None) -> None:
    if trace is None:
        return
    trace.write(json.dumps({"iteration": k, "objective": f, "gap": gap, "gamma": gamma}) + "\n")
