"""Manifests, feature tables, synthetic data and result files.

A manifest is JSON::

    {"labels": ["∅", "act1", ...],
     "padding_mode": "between_only",
     "feature_map": "identity",
     "clips": [{"id": "clip000", "features_path": "features/clip000.tsv",
                "annotations": ["act1", "act3"],
                "ground_truth": [{"label": "act1", "start": 0, "end": 4}, ...]}]}

Feature paths are relative to the manifest's directory. Feature tables are
tab-separated, one interval per row. Ground-truth segments are half-open
``[start, end)`` interval ranges; uncovered intervals are background.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .cost import Classifier, hellinger_map
from .errors import ValidationError
from .model import (
    BACKGROUND,
    PADDING_MODES,
    Clip,
    Dataset,
    LabelSet,
    Segment,
    build_annotation_sequence,
)

FEATURE_MAPS = ("identity", "hellinger")


@dataclass(frozen=True)
class ClipEntry:
    id: str
    features_path: str
    annotations: tuple[str, ...]
    ground_truth: tuple[Segment, ...] | None = None


@dataclass(frozen=True)
class DatasetManifest:
    labels: tuple[str, ...]
    clips: tuple[ClipEntry, ...]
    padding_mode: str = "between_only"
    feature_map: str = "identity"


@dataclass(frozen=True)
class SyntheticConfig:
    n_clips: int = 30
    A: int = 5
    d: int = 20
    seed: int = 0
    intervals_per_segment: tuple[int, int] = (1, 4)
    segments_per_clip: tuple[int, int] = (3, 5)
    class_mean_separation: float = 5.0
    background_fraction: float = 0.3
    noise_sigma: float = 1.0

    def __post_init__(self):
        for name in ("intervals_per_segment", "segments_per_clip"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            if not 1 <= lo <= hi:
                raise ValidationError(f"{name} must be a non-empty range of positive integers")
        if self.n_clips < 1:
            raise ValidationError("n_clips must be positive")
        if self.A < 2:
            raise ValidationError("need at least one action besides background (A >= 2)")
        if self.d < self.A:
            raise ValidationError("d must be at least A so that class means can be separated")
        if self.class_mean_separation < 0 or self.noise_sigma <= 0:
            raise ValidationError("separation must be >= 0 and noise_sigma > 0")
        if not 0 <= self.background_fraction < 1:
            raise ValidationError("background_fraction must lie in [0, 1)")


# -- synthetic data -----------------------------------------------------------


def synthesize(config: SyntheticConfig) -> tuple[DatasetManifest, dict[str, np.ndarray]]:
    """Draw clips of alternating action and background segments.

    Features are the class mean plus isotropic Gaussian noise, clipped at 0 so
    they stay valid inputs for the chi-squared affinity. Class means sit on
    scaled coordinate axes above a common offset, which puts every pair at
    distance ``class_mean_separation * noise_sigma``.
    """
    rng = np.random.default_rng(config.seed)
    sigma = config.noise_sigma
    labels = (BACKGROUND, *(f"act{i}" for i in range(1, config.A)))
    means = np.full((config.A, config.d), 4.0 * sigma)
    means[np.arange(config.A), np.arange(config.A)] += config.class_mean_separation * sigma / math.sqrt(2)
    seg_lo, seg_hi = config.intervals_per_segment
    bf = config.background_fraction
    entries = []
    features = {}
    for n in range(config.n_clips):
        clip_id = f"clip{n:03d}"
        n_actions = int(rng.integers(config.segments_per_clip[0], config.segments_per_clip[1] + 1))
        actions = rng.integers(1, config.A, size=n_actions)
        lengths = rng.integers(seg_lo, seg_hi + 1, size=n_actions)
        gap_mean = bf / (1 - bf) * lengths.mean() * n_actions / max(n_actions - 1, 1)
        gaps = rng.integers(
            1, max(1, math.ceil(2 * gap_mean - 1)) + 1, size=n_actions - 1
        )
        t = 0
        per_interval = []
        gt = []
        for i, (a, length) in enumerate(zip(actions, lengths)):
            if i > 0:
                per_interval += [0] * int(gaps[i - 1])
                t += int(gaps[i - 1])
            gt.append(Segment(labels[a], t, t + int(length)))
            per_interval += [int(a)] * int(length)
            t += int(length)
        y = np.asarray(per_interval)
        X = means[y] + sigma * rng.standard_normal((y.size, config.d))
        features[clip_id] = np.maximum(X, 0.0)
        entries.append(
            ClipEntry(
                id=clip_id,
                features_path=f"features/{clip_id}.tsv",
                annotations=tuple(labels[a] for a in actions),
                ground_truth=tuple(gt),
            )
        )
    return DatasetManifest(labels=labels, clips=tuple(entries)), features


def synthetic_dataset(config: SyntheticConfig) -> Dataset:
    manifest, features = synthesize(config)
    return manifest_to_dataset(manifest, features)


def generate_synthetic(config: SyntheticConfig, out_dir: str | os.PathLike) -> Path:
    """Write a synthetic dataset under ``out_dir``; returns the manifest path."""
    manifest, features = synthesize(config)
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    for entry in manifest.clips:
        write_features(features[entry.id], out / entry.features_path)
    path = out / "manifest.json"
    write_manifest(manifest, path)
    return path


def load_synthetic_config(path: str | os.PathLike) -> SyntheticConfig:
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: synthetic config must be a JSON object")
    known = set(SyntheticConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"{path}: unknown config field(s) {sorted(unknown)}")
    try:
        return SyntheticConfig(**raw)
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# -- feature tables -------------------------------------------------------------


def write_features(X: np.ndarray, path: str | os.PathLike) -> None:
    # %.17g round-trips every binary64 value.
    np.savetxt(path, np.asarray(X, dtype=float), fmt="%.17g", delimiter="\t")


def read_features(path: str | os.PathLike) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter="\t", ndmin=2, dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed feature table: {exc}") from None
    return X


# -- manifests --------------------------------------------------------------------


def _load_json(path: str | os.PathLike) -> Any:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _field(obj: Mapping, key: str, where: str, kind=None, default=...):
    if key not in obj:
        if default is not ...:
            return default
        raise ValidationError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ValidationError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def manifest_from_dict(raw: Any, source: str = "manifest") -> DatasetManifest:
    if not isinstance(raw, dict):
        raise ValidationError(f"{source}: top level must be an object")
    labels = _field(raw, "labels", source, list)
    if not all(isinstance(x, str) for x in labels):
        raise ValidationError(f"{source}.labels: label names must be strings")
    padding = _field(raw, "padding_mode", source, str, default="between_only")
    if padding not in PADDING_MODES:
        raise ValidationError(f"{source}.padding_mode: unknown mode {padding!r}")
    fmap = _field(raw, "feature_map", source, str, default="identity")
    if fmap not in FEATURE_MAPS:
        raise ValidationError(f"{source}.feature_map: unknown map {fmap!r}")
    clips = []
    for i, c in enumerate(_field(raw, "clips", source, list)):
        where = f"{source}.clips[{i}]"
        if not isinstance(c, dict):
            raise ValidationError(f"{where}: expected an object")
        annotations = _field(c, "annotations", where, list)
        for name in annotations:
            if name not in labels:
                raise ValidationError(f"{where}.annotations: unknown label {name!r}")
        gt = _field(c, "ground_truth", where, (list, type(None)), default=None)
        segments = None
        if gt is not None:
            segments = []
            for j, s in enumerate(gt):
                sw = f"{where}.ground_truth[{j}]"
                if not isinstance(s, dict):
                    raise ValidationError(f"{sw}: expected an object")
                label = _field(s, "label", sw, str)
                if label not in labels:
                    raise ValidationError(f"{sw}.label: unknown label {label!r}")
                start = _field(s, "start", sw, int)
                end = _field(s, "end", sw, int)
                segments.append(Segment(label, start, end))
            segments = tuple(segments)
        clips.append(
            ClipEntry(
                id=_field(c, "id", where, str),
                features_path=_field(c, "features_path", where, str),
                annotations=tuple(annotations),
                ground_truth=segments,
            )
        )
    return DatasetManifest(tuple(labels), tuple(clips), padding, fmap)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    clips = []
    for c in manifest.clips:
        entry: dict[str, Any] = {
            "id": c.id,
            "features_path": c.features_path,
            "annotations": list(c.annotations),
        }
        if c.ground_truth is not None:
            entry["ground_truth"] = [asdict(s) for s in c.ground_truth]
        clips.append(entry)
    return {
        "labels": list(manifest.labels),
        "padding_mode": manifest.padding_mode,
        "feature_map": manifest.feature_map,
        "clips": clips,
    }


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    return manifest_from_dict(_load_json(path), source=str(path))


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    _write_json(manifest_to_dict(manifest), path)


def manifest_to_dataset(manifest: DatasetManifest, features: Mapping[str, np.ndarray]) -> Dataset:
    label_set = LabelSet.from_names(manifest.labels)
    clips = []
    for entry in manifest.clips:
        X = np.asarray(features[entry.id], dtype=float)
        if manifest.feature_map == "hellinger":
            X = hellinger_map(X)
        if entry.ground_truth:
            last = max(s.end for s in entry.ground_truth)
            if last > X.shape[0]:
                raise ValidationError(
                    f"clip {entry.id!r}: ground truth reaches interval {last} "
                    f"but the feature table has {X.shape[0]} rows"
                )
        annotation = build_annotation_sequence(entry.annotations, label_set, manifest.padding_mode)
        clips.append(Clip(entry.id, X, annotation, entry.ground_truth))
    return Dataset(label_set, tuple(clips))


def load_dataset(path: str | os.PathLike) -> Dataset:
    """Read a manifest and every feature table it references."""
    path = Path(path)
    manifest = read_manifest(path)
    base = path.parent
    features = {}
    for entry in manifest.clips:
        fpath = base / entry.features_path
        if not fpath.is_file():
            raise FileNotFoundError(f"clip {entry.id!r}: feature file not found: {fpath}")
        features[entry.id] = read_features(fpath)
    return manifest_to_dataset(manifest, features)


# -- results ------------------------------------------------------------------------

ALIGNMENT_HEADER = ("clip", "interval", "slot", "label")


def write_alignment(paths: Mapping[str, np.ndarray], dataset: Dataset, path: str | os.PathLike) -> None:
    """One row per interval; slots are written 1-based."""
    by_id = {c.id: c for c in dataset.clips}
    names = dataset.label_set.actions
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(ALIGNMENT_HEADER)
        for clip_id in sorted(paths):
            slots = by_id[clip_id].annotation.slots
            for t, k in enumerate(paths[clip_id]):
                w.writerow((clip_id, t, int(k) + 1, names[slots[k]]))


def read_alignment(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Per-clip 0-based paths from an alignment file."""
    out: dict[str, list[int]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh, delimiter="\t")
        header = next(rows, None)
        if tuple(header or ()) != ALIGNMENT_HEADER:
            raise ValidationError(f"{path}:1: expected header {ALIGNMENT_HEADER!r}")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            clip_id, t, k = row[0], row[1], row[2]
            try:
                t, k = int(t), int(k)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: interval and slot must be integers") from None
            seq = out.setdefault(clip_id, [])
            if t != len(seq):
                raise ValidationError(f"{path}:{lineno}: intervals of {clip_id!r} out of order")
            seq.append(k - 1)
    return {cid: np.asarray(seq, dtype=np.intp) for cid, seq in out.items()}


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.floating):
        return _jsonable(float(x))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _write_json(obj: Any, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, ensure_ascii=False, allow_nan=False)
        fh.write("\n")


def write_report(report, path: str | os.PathLike, config: Mapping | None = None, seed: int | None = None) -> None:
    payload = report.to_dict()
    payload["config"] = dict(config or {})
    payload["seed"] = seed
    _write_json(payload, path)


def read_report(path: str | os.PathLike):
    from .pipeline import EvalReport

    raw = _load_json(path)
    try:
        return EvalReport.from_dict(raw), raw.get("config", {}), raw.get("seed")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed report: {exc}") from None


def write_json(obj: Any, path: str | os.PathLike) -> None:
    _write_json(obj, path)


def read_json(path: str | os.PathLike) -> Any:
    return _load_json(path)


def write_classifier(
    classifier: Classifier, labels: Sequence[str], path: str | os.PathLike, extra: Mapping | None = None
) -> None:
    payload = {"labels": list(labels), "W": classifier.W, "b": classifier.b}
    payload.update(extra or {})
    _write_json(payload, path)


def read_classifier(path: str | os.PathLike) -> tuple[Classifier, list[str], dict]:
    raw = _load_json(path)
    try:
        W = np.asarray(raw["W"], dtype=float)
        b = np.asarray(raw["b"], dtype=float)
        labels = list(raw["labels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed model file: {exc}") from None
    if W.ndim != 2 or b.shape != (W.shape[1],) or len(labels) != W.shape[1]:
        raise ValidationError(f"{path}: inconsistent model shapes")
    return Classifier(W, b), labels, raw
