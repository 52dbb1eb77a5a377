"""Clips, ordered annotations and admissible assignments.

Paths are stored 0-based: a path ``m`` of length ``T`` satisfies ``m[0] == 0``,
``m[-1] == K - 1`` and ``m[t + 1] - m[t]`` in ``{0, 1}``. File formats and
user-facing output use 1-based slot numbers.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError

BACKGROUND = "∅"
PADDING_MODES = ("between_only", "between_and_ends")


@dataclass(frozen=True)
class LabelSet:
    actions: tuple[str, ...]
    background_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if len(set(self.actions)) != len(self.actions):
            raise ValidationError(f"duplicate label names in {self.actions!r}")
        if self.background_index is not None:
            if not 0 <= self.background_index < len(self.actions):
                raise ValidationError(
                    f"background_index {self.background_index} out of range for "
                    f"{len(self.actions)} labels"
                )
            if len(self.actions) < 2:
                raise ValidationError("a label set with background needs at least 2 labels")

    @classmethod
    def from_names(cls, names: Iterable[str], background: str = BACKGROUND) -> "LabelSet":
        names = tuple(names)
        bg = names.index(background) if background in names else None
        return cls(names, bg)

    @property
    def A(self) -> int:
        return len(self.actions)

    @property
    def background(self) -> str | None:
        if self.background_index is None:
            return None
        return self.actions[self.background_index]

    def index(self, name: str) -> int:
        try:
            return self.actions.index(name)
        except ValueError:
            raise ValidationError(f"unknown label {name!r}") from None


@dataclass(frozen=True)
class AnnotationSequence:
    """Ordered annotation slots; ``slots[k]`` is the label index of slot ``k``."""

    slots: tuple[int, ...]
    source_slots: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))
        object.__setattr__(self, "source_slots", tuple(int(s) for s in self.source_slots))
        if not self.slots:
            raise ValidationError("annotation sequence must have at least one slot")
        # Identical neighbouring slots would make the path <-> matrix map non-injective.
        for k in range(len(self.slots) - 1):
            if self.slots[k] == self.slots[k + 1]:
                raise ValidationError(
                    f"slots {k} and {k + 1} carry the same label; consecutive slots must differ"
                )

    @property
    def K(self) -> int:
        return len(self.slots)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.slots, dtype=np.intp)


def build_annotation_sequence(
    labels: Sequence[str],
    label_set: LabelSet,
    padding_mode: str = "between_only",
) -> AnnotationSequence:
    """Insert the background label between consecutive annotations.

    With ``between_and_ends`` a background slot is also placed before the first
    and after the last annotation.
    """
    if padding_mode not in PADDING_MODES:
        raise ValidationError(f"unknown padding mode {padding_mode!r}")
    if len(labels) == 0:
        raise ValidationError("annotation list is empty")
    source = [label_set.index(name) for name in labels]
    needs_bg = len(source) > 1 or padding_mode == "between_and_ends"
    if needs_bg and label_set.background_index is None:
        raise ValidationError("background padding requires a background label in the label set")
    bg = label_set.background_index
    slots: list[int] = []
    for i, s in enumerate(source):
        if i > 0:
            slots.append(bg)
        slots.append(s)
    if padding_mode == "between_and_ends":
        slots = [bg, *slots, bg]
    return AnnotationSequence(tuple(slots), tuple(source))


@dataclass(frozen=True)
class Segment:
    """Time-stamped action occurrence covering intervals ``start <= t < end``."""

    label: str
    start: int
    end: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Clip:
    id: str
    features: np.ndarray
    annotation: AnnotationSequence
    ground_truth: tuple[Segment, ...] | None = None
    supervised_assignment: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise ValidationError(f"clip {self.id!r}: features must be a T x d matrix")
        object.__setattr__(self, "features", _readonly(feats))
        if self.T < self.annotation.K:
            raise InfeasibleError(
                f"clip {self.id!r}: T={self.T} intervals cannot host K={self.annotation.K} slots"
            )
        if self.ground_truth is not None:
            gt = tuple(sorted(self.ground_truth, key=lambda s: (s.start, s.end)))
            object.__setattr__(self, "ground_truth", gt)
            prev_end = 0
            for seg in gt:
                if not 0 <= seg.start < seg.end <= self.T:
                    raise ValidationError(
                        f"clip {self.id!r}: ground-truth segment {seg} outside [0, {self.T})"
                    )
                if seg.start < prev_end:
                    raise ValidationError(f"clip {self.id!r}: overlapping ground-truth segment {seg}")
                prev_end = seg.end
        if self.supervised_assignment is not None:
            Z = _readonly(self.supervised_assignment)
            try:
                matrix_to_path(Z, self.annotation)
            except ValidationError as exc:
                raise ValidationError(f"clip {self.id!r}: invalid supervised assignment: {exc}") from None
            object.__setattr__(self, "supervised_assignment", Z)

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Dataset:
    label_set: LabelSet
    clips: tuple[Clip, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "clips", tuple(self.clips))
        ids = [c.id for c in self.clips]
        if len(set(ids)) != len(ids):
            raise ValidationError("clip ids must be unique")
        dims = {c.d for c in self.clips}
        if len(dims) > 1:
            raise ValidationError(f"clips disagree on feature dimension: {sorted(dims)}")

    def __len__(self):
        return len(self.clips)


def validate_path(m: Sequence[int], K: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.intp)
    if m.ndim != 1 or m.size == 0:
        raise ValidationError("path must be a non-empty 1-d sequence")
    if m[0] != 0:
        raise ValidationError(f"path must start at slot 0, got {m[0]}")
    if m[-1] != K - 1:
        raise ValidationError(f"path must end at slot {K - 1}, got {m[-1]}")
    steps = np.diff(m)
    bad = np.flatnonzero((steps != 0) & (steps != 1))
    if bad.size:
        raise ValidationError(f"path jumps from {m[bad[0]]} to {m[bad[0] + 1]} at t={bad[0] + 1}")
    return m


def path_to_matrix(m: Sequence[int], annotation: AnnotationSequence, A: int) -> np.ndarray:
    """Put a one at ``(t, a(m_t))`` for every interval ``t``."""
    m = validate_path(m, annotation.K)
    Z = np.zeros((m.size, A))
    Z[np.arange(m.size), annotation.as_array()[m]] = 1.0
    return Z


def matrix_to_path(Z: np.ndarray, annotation: AnnotationSequence) -> np.ndarray:
    """Recover the path of an assignment matrix, or raise naming the first bad row."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValidationError("assignment matrix must be a non-empty T x A array")
    T = Z.shape[0]
    one_hot = np.all((Z == 0) | (Z == 1), axis=1) & (Z.sum(axis=1) == 1)
    if not one_hot.all():
        t = int(np.flatnonzero(~one_hot)[0])
        raise ValidationError(f"row {t} is not one-hot")
    cols = Z.argmax(axis=1)
    slots = annotation.as_array()
    m = np.zeros(T, dtype=np.intp)
    for t in range(T):
        if t > 0:
            m[t] = m[t - 1] if cols[t] == cols[t - 1] else m[t - 1] + 1
        if m[t] >= annotation.K or slots[m[t]] != cols[t]:
            raise ValidationError(f"row {t} does not follow the annotation order")
    if m[-1] != annotation.K - 1:
        raise ValidationError(f"row {T - 1} ends at slot {m[-1]}, expected {annotation.K - 1}")
    return m


def count_paths(T: int, K: int) -> int:
    if K < 1 or K > T:
        return 0
    return math.comb(T - 1, K - 1)


def enumerate_paths(T: int, K: int, max_paths: int = 10**6) -> list[np.ndarray]:
    """All admissible paths of length ``T`` over ``K`` slots (testing oracle)."""
    n = count_paths(T, K)
    if n == 0:
        return []
    if n > max_paths:
        raise ValidationError(f"{n} paths exceed the enumeration cap of {max_paths}")
    paths = []
    for advances in itertools.combinations(range(1, T), K - 1):
        steps = np.zeros(T, dtype=np.intp)
        steps[list(advances)] = 1
        paths.append(np.cumsum(steps))
    return paths


def ground_truth_labels(clip: Clip, label_set: LabelSet) -> np.ndarray:
    """Per-interval label indices; intervals outside every segment are background."""
    if clip.ground_truth is None:
        raise ValidationError(f"clip {clip.id!r} has no ground truth")
    if label_set.background_index is None:
        raise ValidationError("background label required to fill ground-truth gaps")
    labels = np.full(clip.T, label_set.background_index, dtype=np.intp)
    for seg in clip.ground_truth:
        labels[seg.start:seg.end] = label_set.index(seg.label)
    return labels


def ground_truth_assignment(clip: Clip, label_set: LabelSet) -> np.ndarray:
    """Assignment matrix implied by a clip's time stamps, validated against its annotation."""
    labels = ground_truth_labels(clip, label_set)
    Z = np.zeros((clip.T, label_set.A))
    Z[np.arange(clip.T), labels] = 1.0
    try:
        matrix_to_path(Z, clip.annotation)
    except ValidationError as exc:
        raise ValidationError(
            f"clip {clip.id!r}: ground truth violates its annotation order ({exc})"
        ) from None
    return Z
