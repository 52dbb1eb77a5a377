"""Linear minimization over admissible assignment matrices.

The feasible set is the set of monotone paths through a ``T x K`` grid, so
minimizing ``<C, Z>`` reduces to a dynamic time warping recursion on the
slot costs ``D[t, k] = C[t, a(k)]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, ValidationError
from .model import AnnotationSequence, count_paths, enumerate_paths, path_to_matrix


@dataclass(frozen=True)
class DpTable:
    """Prefix-optimal costs and the move taken into each cell.

    ``advanced[t, k]`` is True when the best path into ``(t, k)`` came from
    ``(t - 1, k - 1)``. Cells that no admissible path visits hold ``+inf``.
    """

    P: np.ndarray
    advanced: np.ndarray


def slot_costs(C: np.ndarray, annotation: AnnotationSequence) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValidationError(f"cost matrix must be 2-d, got shape {C.shape}")
    if np.isnan(C).any():
        raise ValidationError("cost matrix contains NaN")
    if annotation.K > C.shape[0]:
        raise InfeasibleError(f"T={C.shape[0]} intervals cannot host K={annotation.K} slots")
    slots = annotation.as_array()
    if slots.max() >= C.shape[1]:
        raise ValidationError(f"annotation references label {slots.max()} but C has {C.shape[1]} columns")
    return C[:, slots]


def dp_table(D: np.ndarray) -> DpTable:
    T, K = D.shape
    P = np.full((T, K), np.inf)
    advanced = np.zeros((T, K), dtype=bool)
    P[0, 0] = D[0, 0]
    ks = np.arange(K)
    for t in range(1, T):
        stay = P[t - 1]
        adv = np.empty(K)
        adv[0] = np.inf
        adv[1:] = P[t - 1, :-1]
        # Ties go to the advance move, which places transitions as late as
        # possible, i.e. every stay is taken as early as possible.
        take_adv = adv <= stay
        best = np.where(take_adv, adv, stay)
        # Cells from which slot K-1 can no longer be reached by time T-1.
        best[ks < K - T + t] = np.inf
        P[t] = D[t] + best
        advanced[t] = take_adv
    return DpTable(P, advanced)


def backtrack(table: DpTable) -> np.ndarray:
    T, K = table.P.shape
    m = np.empty(T, dtype=np.intp)
    k = K - 1
    for t in range(T - 1, 0, -1):
        m[t] = k
        if table.advanced[t, k]:
            k -= 1
    m[0] = k
    assert k == 0, "backtracking must end in the first slot"
    return m


def lmo_path(C: np.ndarray, annotation: AnnotationSequence) -> tuple[np.ndarray, float]:
    """Minimizing path for ``<C, Z>`` and its cost, in O(TK)."""
    D = slot_costs(C, annotation)
    table = dp_table(D)
    return backtrack(table), float(table.P[-1, -1])


def lmo(C: np.ndarray, annotation: AnnotationSequence) -> tuple[np.ndarray, float]:
    """Vertex ``Z`` minimizing ``sum(Z * C)`` and the attained cost."""
    m, cost = lmo_path(C, annotation)
    return path_to_matrix(m, annotation, np.shape(C)[1]), cost


def brute_force_lmo(
    C: np.ndarray, annotation: AnnotationSequence, max_paths: int = 10**6
) -> tuple[np.ndarray, float]:
    """Exhaustive reference for :func:`lmo` on small instances."""
    D = slot_costs(C, annotation)
    T, K = D.shape
    n = count_paths(T, K)
    if n > max_paths:
        raise ValidationError(f"refusing to enumerate {n} paths (cap {max_paths})")
    paths = np.array(enumerate_paths(T, K, max_paths))
    costs = D[np.arange(T), paths].sum(axis=1)
    best = int(np.argmin(costs))
    return path_to_matrix(paths[best], annotation, C.shape[1]), float(costs[best])


def round_assignment(Zbar: np.ndarray, annotation: AnnotationSequence) -> np.ndarray:
    """Nearest vertex in Frobenius distance.

    Every vertex has squared norm ``T``, so the nearest one maximizes
    ``<Zbar, Z>``, which is one call to the oracle with ``C = -Zbar``.
    """
    Zbar = np.asarray(Zbar, dtype=float)
    rows = Zbar.sum(axis=1)
    if not np.allclose(rows, 1.0, atol=1e-6):
        raise ValidationError("relaxed assignment rows must sum to 1")
    Z, _ = lmo(-Zbar, annotation)
    return Z


def round_path(Zbar: np.ndarray, annotation: AnnotationSequence) -> np.ndarray:
    m, _ = lmo_path(-np.asarray(Zbar, dtype=float), annotation)
    return m
