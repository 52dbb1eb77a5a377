"""Quadratic costs over stacked assignment matrices.

The discriminative cost eliminates a ridge-regularized linear classifier in
closed form, leaving ``Tr(D Z^T B Z D) + <kappa, 1^T Z>`` with

    B = (1/T) Pi (I - X (X^T Pi X + T lam I)^{-1} X^T) Pi

where ``Pi`` centers the ``T`` stacked rows. ``B`` is never formed: products
``B Z`` go through the centered features and a cached ``d x d`` Cholesky
factor. The NCUT baseline reuses the same interface with a dense normalized
Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve

from .errors import NumericalError, ValidationError
from .model import Clip

CHI2_EPS = 1e-10


def hellinger_map(h: np.ndarray) -> np.ndarray:
    """Square root of the l1-normalized histogram (unit l2 norm)."""
    h = np.asarray(h, dtype=float)
    if (h < 0).any():
        raise ValidationError("histogram has negative entries")
    total = h.sum(axis=-1, keepdims=True)
    if (total == 0).any():
        raise ValidationError("histogram is all zeros")
    return np.sqrt(h / total)


def chi2_distances(X: np.ndarray, eps: float = CHI2_EPS) -> np.ndarray:
    """Pairwise ``0.5 * sum_i (x_i - y_i)^2 / (x_i + y_i + eps)`` between rows of X."""
    diff = X[:, None, :] - X[None, :, :]
    denom = X[:, None, :] + X[None, :, :] + eps
    return 0.5 * np.sum(diff * diff / denom, axis=-1)


@dataclass(frozen=True)
class Classifier:
    W: np.ndarray
    b: np.ndarray

    def scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.W + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.scores(X).argmax(axis=1)


@dataclass(frozen=True, eq=False)
class CostOperator:
    """Factored cost matrix plus linear penalty and per-class weights.

    Use :func:`build_cost_operator` or :func:`ncut_cost_operator` rather than
    constructing this directly.
    """

    kind: str
    kappa: np.ndarray
    class_weights: np.ndarray
    clip_offsets: tuple[int, ...]
    lam: float | None = None
    X: np.ndarray | None = None
    _Xc: np.ndarray | None = None
    _x_mean: np.ndarray | None = None
    _factor: tuple | None = None
    B: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.clip_offsets[-1]

    @property
    def A(self) -> int:
        return self.kappa.shape[0]

    def clip_slice(self, i: int) -> slice:
        return slice(self.clip_offsets[i], self.clip_offsets[i + 1])

    def _check(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.shape != (self.T, self.A):
            raise ValidationError(f"expected a {self.T} x {self.A} matrix, got {Z.shape}")
        return Z

    def apply_B(self, Z: np.ndarray) -> np.ndarray:
        Z = self._check(Z)
        if self.kind == "ncut":
            return self.B @ Z
        Zc = Z - Z.mean(axis=0)
        proj = self._Xc @ cho_solve(self._factor, self._Xc.T @ Zc)
        # Both terms are already centered, so the outer Pi is a no-op.
        return (Zc - proj) / self.T

    def objective(self, Z: np.ndarray, BZ: np.ndarray | None = None) -> float:
        Z = self._check(Z)
        if BZ is None:
            BZ = self.apply_B(Z)
        w2 = self.class_weights**2
        return float(np.sum(Z * BZ * w2) + self.kappa @ Z.sum(axis=0))

    def gradient(self, Z: np.ndarray, BZ: np.ndarray | None = None) -> np.ndarray:
        Z = self._check(Z)
        if BZ is None:
            BZ = self.apply_B(Z)
        return 2.0 * BZ * self.class_weights**2 + self.kappa

    def materialize(self) -> np.ndarray:
        """Dense ``B``; for tests and small instances only."""
        if self.kind == "ncut":
            return self.B.copy()
        T = self.T
        Pi = np.eye(T) - np.full((T, T), 1.0 / T)
        return (Pi - self._Xc @ cho_solve(self._factor, self._Xc.T)) / T


def _offsets(clips: Sequence[Clip]) -> tuple[int, ...]:
    return tuple(int(x) for x in np.concatenate([[0], np.cumsum([c.T for c in clips])]))


def _penalties(n_labels: int, class_weights, kappa) -> tuple[np.ndarray, np.ndarray]:
    w = np.ones(n_labels) if class_weights is None else np.asarray(class_weights, dtype=float)
    k = np.zeros(n_labels) if kappa is None else np.asarray(kappa, dtype=float)
    if w.shape != (n_labels,) or k.shape != (n_labels,):
        raise ValidationError(f"class weights and kappa must have length {n_labels}")
    if not (w > 0).all():
        raise ValidationError("class weights must be positive")
    if not (np.isfinite(w).all() and np.isfinite(k).all()):
        raise ValidationError("class weights and kappa must be finite")
    w.setflags(write=False)
    k.setflags(write=False)
    return w, k


def build_cost_operator(
    clips: Sequence[Clip],
    n_labels: int,
    lam: float = 1e-2,
    class_weights=None,
    kappa=None,
) -> CostOperator:
    """Stack every clip's features and factor ``X^T Pi X + T lam I``."""
    if not clips:
        raise ValidationError("no clips to build a cost from")
    if not lam > 0:
        raise ValidationError(f"ridge strength must be positive, got {lam}")
    dims = {c.d for c in clips}
    if len(dims) != 1:
        raise ValidationError(f"clips disagree on feature dimension: {sorted(dims)}")
    w, k = _penalties(n_labels, class_weights, kappa)
    X = np.vstack([c.features for c in clips])
    if not np.isfinite(X).all():
        raise ValidationError("features contain NaN or infinite values")
    T, d = X.shape
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    with np.errstate(over="ignore", invalid="ignore"):
        gram = Xc.T @ Xc + T * lam * np.eye(d)
    try:
        factor = cho_factor(gram)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"cannot factor the ridge system: {exc}") from None
    X.setflags(write=False)
    return CostOperator(
        kind="diffrac",
        kappa=k,
        class_weights=w,
        clip_offsets=_offsets(clips),
        lam=float(lam),
        X=X,
        _Xc=Xc,
        _x_mean=x_mean,
        _factor=factor,
    )


def ncut_laplacian(X: np.ndarray, alpha: float, beta: float, d_min: int) -> np.ndarray:
    """Symmetric normalized Laplacian of a temporal-appearance affinity."""
    T = X.shape[0]
    idx = np.arange(T)
    lag = np.abs(idx[:, None] - idx[None, :])
    E = np.exp(-alpha * lag - beta * chi2_distances(X)) * (lag < d_min)
    deg = E.sum(axis=1)
    assert (deg > 0).all(), "self-affinity keeps every degree positive"
    s = 1.0 / np.sqrt(deg)
    return np.eye(T) - s[:, None] * E * s[None, :]


def ncut_cost_operator(
    clips: Sequence[Clip],
    n_labels: int,
    alpha: float = 0.1,
    beta: float = 1.0,
    d_min: int = 10,
    class_weights=None,
    kappa=None,
) -> CostOperator:
    """Block-diagonal NCUT cost; no similarity is shared across clips."""
    if not clips:
        raise ValidationError("no clips to build a cost from")
    if alpha < 0 or beta < 0:
        raise ValidationError("alpha and beta must be non-negative")
    if d_min < 1:
        raise ValidationError("d_min must be at least 1")
    for c in clips:
        if not np.isfinite(c.features).all():
            raise ValidationError(f"clip {c.id!r}: features contain NaN or infinite values")
        if (c.features < 0).any():
            raise ValidationError(f"clip {c.id!r}: chi-squared affinity needs non-negative features")
    w, k = _penalties(n_labels, class_weights, kappa)
    B = block_diag(*[ncut_laplacian(c.features, alpha, beta, d_min) for c in clips])
    B.setflags(write=False)
    return CostOperator(kind="ncut", kappa=k, class_weights=w, clip_offsets=_offsets(clips), B=B)


def recover_classifier(op: CostOperator, Z: np.ndarray) -> Classifier:
    """Closed-form ridge classifier implied by an assignment.

    Label weights scale each output column independently, so they do not
    move the minimizer; the fit is the plain centered ridge solution.
    """
    if op.kind != "diffrac":
        raise ValidationError(f"cannot recover a classifier from a {op.kind!r} cost")
    Z = op._check(Z)
    Zc = Z - Z.mean(axis=0)
    W = cho_solve(op._factor, op._Xc.T @ Zc)
    b = Z.mean(axis=0) - op._x_mean @ W
    return Classifier(W, b)


def ridge_cost(X, Z, W, b, lam, class_weights=None) -> float:
    """``(1/T)||(Z - XW - 1b) D||^2 + lam ||W D||^2``."""
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    w = np.ones(Z.shape[1]) if class_weights is None else np.asarray(class_weights, dtype=float)
    R = (Z - X @ W - b) * w
    return float(np.sum(R * R) / X.shape[0] + lam * np.sum((W * w) ** 2))
