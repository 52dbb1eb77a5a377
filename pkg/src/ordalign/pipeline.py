"""Experiment orchestration: splits, alignment runs, baselines and scoring."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .cost import Classifier, build_cost_operator, ncut_cost_operator, recover_classifier
from .errors import ValidationError
from .frank_wolfe import SolveOptions, SolveResult, solve
from .model import Clip, Dataset, LabelSet, ground_truth_assignment, ground_truth_labels
from .oracle import round_path

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    sup_fraction: float = 0.0
    val_fraction: float = 0.05
    test_fraction: float = 0.10
    seed: int = 0
    n_repeats: int = 1

    def __post_init__(self):
        fracs = (self.sup_fraction, self.val_fraction, self.test_fraction)
        if any(not 0 <= f <= 1 for f in fracs):
            raise ValidationError("split fractions must lie in [0, 1]")
        if sum(fracs) > 1 + 1e-12:
            raise ValidationError(f"split fractions sum to {sum(fracs):g} > 1")
        if self.n_repeats < 1:
            raise ValidationError("n_repeats must be at least 1")


@dataclass(frozen=True)
class Split:
    sup: tuple[Clip, ...]
    eval: tuple[Clip, ...]
    val: tuple[Clip, ...]
    test: tuple[Clip, ...]

    def ids(self) -> dict[str, list[str]]:
        return {k: [c.id for c in getattr(self, k)] for k in ("sup", "eval", "val", "test")}


@dataclass(frozen=True)
class AlignConfig:
    lam: float = 1e-2
    kappa_bg: float = 0.0
    bg_weight: float = 1.0
    gap_tol: float = 1e-4
    max_iter: int = 500
    step_rule: str = "exact_line_search"

    def solve_options(self, record_history: bool = True) -> SolveOptions:
        return SolveOptions(self.gap_tol, self.max_iter, self.step_rule, record_history)

    def penalties(self, label_set: LabelSet) -> tuple[np.ndarray, np.ndarray]:
        weights = np.ones(label_set.A)
        kappa = np.zeros(label_set.A)
        if label_set.background_index is not None:
            weights[label_set.background_index] = self.bg_weight
            kappa[label_set.background_index] = self.kappa_bg
        return weights, kappa


@dataclass
class EvalReport:
    per_interval_scores: list[tuple[str, int, float]]
    mean_jaccard: float
    per_class_jaccard: dict[str, float]
    per_class_ap: dict[str, float] | None = None
    failed_clips: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_interval_scores": [
                {"clip": c, "slot": k + 1, "score": s} for c, k, s in self.per_interval_scores
            ],
            "mean_jaccard": self.mean_jaccard,
            "per_class_jaccard": dict(self.per_class_jaccard),
            "per_class_ap": None if self.per_class_ap is None else dict(self.per_class_ap),
            "failed_clips": list(self.failed_clips),
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "EvalReport":
        mean = raw["mean_jaccard"]
        return cls(
            per_interval_scores=[(r["clip"], int(r["slot"]) - 1, float(r["score"])) for r in raw["per_interval_scores"]],
            mean_jaccard=math.nan if mean is None else float(mean),
            per_class_jaccard={k: float(v) for k, v in raw["per_class_jaccard"].items()},
            per_class_ap=None if raw.get("per_class_ap") is None else {k: float(v) for k, v in raw["per_class_ap"].items()},
            failed_clips=list(raw.get("failed_clips", [])),
        )


# -- splits ---------------------------------------------------------------------------


def _count(fraction: float, n: int) -> int:
    c = math.floor(fraction * n + 0.5)
    return max(c, 1) if fraction > 0 and n > 0 else c


def split_dataset(dataset: Dataset, spec: SplitSpec, repeat: int = 0) -> Split:
    """Random disjoint Sup/Eval/Val/Test partition; Eval takes the remainder."""
    n = len(dataset.clips)
    n_sup = _count(spec.sup_fraction, n)
    n_val = _count(spec.val_fraction, n)
    n_test = _count(spec.test_fraction, n)
    if n_sup + n_val + n_test > n:
        raise ValidationError(f"cannot carve {n_sup}+{n_val}+{n_test} clips out of {n}")
    rng = np.random.default_rng([spec.seed, repeat])
    order = [dataset.clips[i] for i in rng.permutation(n)]
    a, b, c = n_sup, n_sup + n_val, n_sup + n_val + n_test
    return Split(sup=tuple(order[:a]), val=tuple(order[a:b]), test=tuple(order[b:c]), eval=tuple(order[c:]))


# -- evaluation -------------------------------------------------------------------------


def jaccard_interval(predicted: Iterable[int], truth: Iterable[int]) -> float:
    """``|I & I*| / |I|``: the share of the prediction that falls inside the truth."""
    I = set(predicted)
    if not I:
        raise ValidationError("predicted interval set is empty")
    return len(I & set(truth)) / len(I)


def _clip_scores(path: np.ndarray, clip: Clip, label_set: LabelSet) -> list[tuple[int, str, float]]:
    if clip.ground_truth is None:
        raise ValidationError(f"clip {clip.id!r} has no ground truth")
    path = np.asarray(path)
    if path.shape != (clip.T,):
        raise ValidationError(f"clip {clip.id!r}: alignment has {path.size} intervals, expected {clip.T}")
    bg = label_set.background_index
    action_slots = [k for k, s in enumerate(clip.annotation.slots) if s != bg]
    if len(action_slots) != len(clip.ground_truth):
        raise ValidationError(
            f"clip {clip.id!r}: {len(action_slots)} annotated actions vs "
            f"{len(clip.ground_truth)} ground-truth segments"
        )
    out = []
    for k, seg in zip(action_slots, clip.ground_truth):
        if label_set.index(seg.label) != clip.annotation.slots[k]:
            raise ValidationError(f"clip {clip.id!r}: ground-truth label {seg.label!r} does not match slot {k + 1}")
        predicted = np.flatnonzero(path == k)
        out.append((k, seg.label, jaccard_interval(predicted, range(seg.start, seg.end))))
    return out


def evaluate_alignment(
    paths: Mapping[str, np.ndarray], clips: Sequence[Clip], label_set: LabelSet
) -> EvalReport:
    """Score every non-background ground-truth interval of ``clips``.

    Clips whose ground truth cannot be matched to their annotation are left
    out and listed in ``failed_clips``.
    """
    scores: list[tuple[str, int, float]] = []
    by_class: dict[str, list[float]] = {}
    failed = []
    for clip in clips:
        try:
            clip_scores = _clip_scores(paths[clip.id], clip, label_set)
        except (ValidationError, KeyError) as exc:
            log.warning("skipping clip %s in evaluation: %s", clip.id, exc)
            failed.append(clip.id)
            continue
        for k, label, s in clip_scores:
            scores.append((clip.id, k, s))
            by_class.setdefault(label, []).append(s)
    mean = float(np.mean([s for _, _, s in scores])) if scores else math.nan
    per_class = {label: float(np.mean(v)) for label, v in sorted(by_class.items())}
    return EvalReport(scores, mean, per_class, failed_clips=failed)


def uniform_alignment(clips: Sequence[Clip]) -> dict[str, np.ndarray]:
    """Equal-length slots in annotation order (the no-learning baseline)."""
    out = {}
    for clip in clips:
        K = clip.annotation.K
        out[clip.id] = np.minimum((np.arange(clip.T) * K) // clip.T, K - 1).astype(np.intp)
    return out


# -- alignment runs ----------------------------------------------------------------------


def _optimization_clips(split: Split, label_set: LabelSet, semi: bool) -> list[Clip]:
    clips = []
    for c in split.sup:
        Z = ground_truth_assignment(c, label_set) if semi else None
        clips.append(replace(c, supervised_assignment=Z))
    clips += [replace(c, supervised_assignment=None) for c in (*split.eval, *split.val)]
    return clips


def _run(
    dataset: Dataset, split: Split, config: AlignConfig, semi: bool, trace: TextIO | None = None
) -> tuple[SolveResult, EvalReport]:
    clips = _optimization_clips(split, dataset.label_set, semi)
    weights, kappa = config.penalties(dataset.label_set)
    op = build_cost_operator(clips, dataset.label_set.A, config.lam, weights, kappa)
    result = solve(op, clips, config.solve_options(), trace=trace)
    report = evaluate_alignment(result.paths, split.eval, dataset.label_set)
    return result, report


def run_weak(
    dataset: Dataset, split: Split, config: AlignConfig = AlignConfig(), trace: TextIO | None = None
) -> tuple[SolveResult, EvalReport]:
    """Align Sup, Eval and Val from ordered annotations alone; score on Eval.

    Sup clips take part as ordinary weakly annotated clips.
    """
    return _run(dataset, split, config, semi=False, trace=trace)


def run_semi(
    dataset: Dataset, split: Split, config: AlignConfig = AlignConfig(), trace: TextIO | None = None
) -> tuple[SolveResult, EvalReport]:
    """As :func:`run_weak`, with Sup rows frozen at their time-stamped labels."""
    return _run(dataset, split, config, semi=True, trace=trace)


def classifier_for(dataset: Dataset, result: SolveResult, split: Split, config: AlignConfig) -> Classifier:
    """Classifier implied by the relaxed optimum of a weak or semi-supervised run."""
    by_id = {c.id: c for c in dataset.clips}
    clips = [by_id[i] for i in result.clip_ids]
    weights, kappa = config.penalties(dataset.label_set)
    op = build_cost_operator(clips, dataset.label_set.A, config.lam, weights, kappa)
    return recover_classifier(op, result.Zbar)


def train_sl_baseline(sup: Sequence[Clip], label_set: LabelSet, lam: float = 1e-2) -> Classifier:
    """Ridge regression of one-hot interval labels on features over Sup."""
    if not sup:
        raise ValidationError("the SL baseline needs a non-empty Sup set")
    op = build_cost_operator(sup, label_set.A, lam)
    Y = np.vstack([np.eye(label_set.A)[ground_truth_labels(c, label_set)] for c in sup])
    return recover_classifier(op, Y)


def align_with_classifier(classifier: Classifier, clips: Sequence[Clip]) -> dict[str, np.ndarray]:
    """Round per-interval class scores onto each clip's admissible paths."""
    return {c.id: round_path(classifier.scores(c.features), c.annotation) for c in clips}


def run_sl(dataset: Dataset, split: Split, lam: float = 1e-2) -> tuple[dict[str, np.ndarray], EvalReport, Classifier]:
    clf = train_sl_baseline(split.sup, dataset.label_set, lam)
    paths = align_with_classifier(clf, split.eval)
    return paths, evaluate_alignment(paths, split.eval, dataset.label_set), clf


def run_ncut(
    dataset: Dataset,
    split: Split,
    alpha: float = 0.1,
    beta: float = 1.0,
    d_min: int = 10,
    options: SolveOptions = SolveOptions(),
    trace: TextIO | None = None,
) -> tuple[SolveResult, EvalReport]:
    clips = _optimization_clips(split, dataset.label_set, semi=False)
    op = ncut_cost_operator(clips, dataset.label_set.A, alpha, beta, d_min)
    result = solve(op, clips, options, trace=trace)
    return result, evaluate_alignment(result.paths, split.eval, dataset.label_set)


# -- classification ------------------------------------------------------------------------


def average_precision(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mean of the precision at the rank of each positive, ranking by descending score."""
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise ValidationError("average precision is undefined without positives")
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    hits = positive[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, n_pos + 1) / ranks))


def classify_and_ap(classifier: Classifier, clips: Sequence[Clip], label_set: LabelSet) -> dict[str, float]:
    """Per-action average precision over every interval of ``clips``.

    Classes with no positive interval are absent from the result.
    """
    if not clips:
        raise ValidationError("no clips to classify")
    X = np.vstack([c.features for c in clips])
    y = np.concatenate([ground_truth_labels(c, label_set) for c in clips])
    S = classifier.scores(X)
    out = {}
    for a, name in enumerate(label_set.actions):
        if a == label_set.background_index or not (y == a).any():
            continue
        out[name] = average_precision(S[:, a], y == a)
    return out


# -- hyper-parameter search ---------------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    config: AlignConfig
    val_jaccard: float


def expand_grid(lams: Sequence[float], kappa_bgs: Sequence[float], bg_weights: Sequence[float], base: AlignConfig = AlignConfig()) -> list[AlignConfig]:
    return [
        replace(base, lam=float(l), kappa_bg=float(k), bg_weight=float(w))
        for l, k, w in itertools.product(lams, kappa_bgs, bg_weights)
    ]


def grid_search(
    dataset: Dataset, grid: Sequence[AlignConfig], split: Split, semi: bool = False
) -> tuple[AlignConfig, list[GridPoint]]:
    """Pick the config with the best mean Val Jaccard; earlier grid points win ties."""
    if not grid:
        raise ValidationError("empty hyper-parameter grid")
    if not split.val:
        raise ValidationError("grid search needs a non-empty Val split")
    table = []
    best = None
    for config in grid:
        result, _ = _run(dataset, split, config, semi)
        val = evaluate_alignment(result.paths, split.val, dataset.label_set).mean_jaccard
        table.append(GridPoint(config, val))
        if best is None or val > best.val_jaccard:
            best = table[-1]
    return best.config, table
