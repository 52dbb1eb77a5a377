import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ordalign.cost import Classifier
from ordalign.data_io import (
    ClipEntry,
    DatasetManifest,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    load_synthetic_config,
    read_alignment,
    read_classifier,
    read_features,
    read_manifest,
    read_report,
    synthesize,
    synthetic_dataset,
    write_alignment,
    write_classifier,
    write_features,
    write_manifest,
    write_report,
)
from ordalign.errors import ValidationError
from ordalign.model import Segment
from ordalign.pipeline import (
    AlignConfig,
    EvalReport,
    SplitSpec,
    evaluate_alignment,
    run_weak,
    split_dataset,
    uniform_alignment,
)


def write_toy(tmp_path, **manifest_fields):
    X = np.array([[1.0, 2.0], [0.5, 0.25], [3.0, 1.0]])
    (tmp_path / "f").mkdir()
    write_features(X, tmp_path / "f" / "a.tsv")
    raw = {
        "labels": ["∅", "Walk", "Eat"],
        "clips": [
            {
                "id": "a",
                "features_path": "f/a.tsv",
                "annotations": ["Walk", "Eat"],
                "ground_truth": [{"label": "Walk", "start": 0, "end": 1}, {"label": "Eat", "start": 2, "end": 3}],
            }
        ],
        **manifest_fields,
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path, X


class TestManifest:
    def test_load(self, tmp_path):
        path, X = write_toy(tmp_path)
        ds = load_dataset(path)
        assert ds.label_set.background_index == 0
        clip = ds.clips[0]
        assert clip.annotation.slots == (1, 0, 2)
        np.testing.assert_array_equal(clip.features, X)
        assert clip.ground_truth == (Segment("Walk", 0, 1), Segment("Eat", 2, 3))

    def test_round_trip(self, tmp_path):
        manifest = DatasetManifest(
            ("∅", "a", "b"),
            (ClipEntry("x", "x.tsv", ("a", "b"), (Segment("a", 0, 2),)), ClipEntry("y", "y.tsv", ("b",))),
            padding_mode="between_and_ends",
            feature_map="hellinger",
        )
        write_manifest(manifest, tmp_path / "m.json")
        assert read_manifest(tmp_path / "m.json") == manifest

    def test_hellinger_map_applied(self, tmp_path):
        path, X = write_toy(tmp_path, feature_map="hellinger")
        F = load_dataset(path).clips[0].features
        np.testing.assert_allclose(np.linalg.norm(F, axis=1), 1.0)
        np.testing.assert_allclose(F[0], np.sqrt(X[0] / X[0].sum()))

    def test_between_and_ends(self, tmp_path):
        path, _ = write_toy(tmp_path, padding_mode="between_and_ends")
        with pytest.raises(ValidationError):
            load_dataset(path)  # 5 slots do not fit 3 intervals

    def test_missing_feature_file_named(self, tmp_path):
        path, _ = write_toy(tmp_path)
        (tmp_path / "f" / "a.tsv").unlink()
        with pytest.raises(FileNotFoundError, match="a.tsv"):
            load_dataset(path)

    def test_malformed_json_has_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"labels": ["a",\n  ]}', encoding="utf-8")
        with pytest.raises(ValidationError, match=r"bad.json:2:\d+"):
            read_manifest(path)

    @pytest.mark.parametrize(
        "mutate,locus",
        [
            (lambda r: r.pop("labels"), "missing field 'labels'"),
            (lambda r: r["clips"][0].update(annotations=["Walk", "Jump"]), r"clips\[0\].annotations: unknown label 'Jump'"),
            (lambda r: r["clips"][0]["ground_truth"][1].update(start="2"), r"clips\[0\].ground_truth\[1\].start"),
            (lambda r: r["clips"][0].pop("features_path"), r"clips\[0\]: missing field 'features_path'"),
            (lambda r: r.update(padding_mode="sometimes"), "padding_mode"),
        ],
    )
    def test_field_errors(self, tmp_path, mutate, locus):
        path, _ = write_toy(tmp_path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        mutate(raw)
        path.write_text(json.dumps(raw), encoding="utf-8")
        with pytest.raises(ValidationError, match=locus):
            load_dataset(path)

    def test_ground_truth_beyond_features(self, tmp_path):
        path, _ = write_toy(tmp_path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        raw["clips"][0]["ground_truth"][1]["end"] = 9
        path.write_text(json.dumps(raw), encoding="utf-8")
        with pytest.raises(ValidationError, match="'a'"):
            load_dataset(path)


class TestFeatures:
    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
    def test_binary64_round_trip(self, tmp_path_factory, X):
        path = tmp_path_factory.mktemp("feat") / "x.tsv"
        write_features(X, path)
        assert read_features(path).tobytes() == X.tobytes()

    def test_malformed(self, tmp_path):
        (tmp_path / "x.tsv").write_text("1\t2\nfoo\t3\n")
        with pytest.raises(ValidationError):
            read_features(tmp_path / "x.tsv")


class TestAlignmentFile:
    def test_toy(self, tmp_path):
        path, _ = write_toy(tmp_path)
        ds = load_dataset(path)
        write_alignment({"a": np.array([0, 1, 2])}, ds, tmp_path / "al.tsv")
        lines = (tmp_path / "al.tsv").read_text(encoding="utf-8").splitlines()
        assert lines == ["clip\tinterval\tslot\tlabel", "a\t0\t1\tWalk", "a\t1\t2\t∅", "a\t2\t3\tEat"]
        np.testing.assert_array_equal(read_alignment(tmp_path / "al.tsv")["a"], [0, 1, 2])

    def test_round_trip(self, tmp_path):
        ds = synthetic_dataset(SyntheticConfig(n_clips=5, A=3, d=3))
        paths = uniform_alignment(ds.clips)
        write_alignment(paths, ds, tmp_path / "al.tsv")
        back = read_alignment(tmp_path / "al.tsv")
        assert back.keys() == paths.keys()
        for k in paths:
            np.testing.assert_array_equal(back[k], paths[k])

    def test_errors_have_line_numbers(self, tmp_path):
        p = tmp_path / "al.tsv"
        p.write_text("clip\tinterval\tslot\tlabel\na\t0\t1\tWalk\na\t2\t1\tWalk\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=":3:"):
            read_alignment(p)
        p.write_text("clip\tinterval\tslot\tlabel\na\t0\tx\tWalk\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=":2:"):
            read_alignment(p)
        p.write_text("clip,interval\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=":1:"):
            read_alignment(p)


class TestReports:
    def test_round_trip(self, tmp_path):
        ds = synthetic_dataset(SyntheticConfig(n_clips=4, A=3, d=3))
        report = evaluate_alignment(uniform_alignment(ds.clips), ds.clips, ds.label_set)
        report.per_class_ap = {"act1": 0.25}
        write_report(report, tmp_path / "r.json", config={"lam": 0.01}, seed=3)
        back, config, seed = read_report(tmp_path / "r.json")
        assert back == report
        assert config == {"lam": 0.01} and seed == 3

    def test_nan_mean_written_as_null(self, tmp_path):
        report = EvalReport([], float("nan"), {})
        write_report(report, tmp_path / "r.json")
        assert json.loads((tmp_path / "r.json").read_text())["mean_jaccard"] is None
        assert np.isnan(read_report(tmp_path / "r.json")[0].mean_jaccard)

    def test_classifier_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        clf = Classifier(rng.normal(size=(4, 3)), rng.normal(size=3))
        write_classifier(clf, ["∅", "a", "b"], tmp_path / "m.json", extra={"test_clips": ["x"]})
        back, labels, raw = read_classifier(tmp_path / "m.json")
        assert back.W.tobytes() == clf.W.tobytes() and back.b.tobytes() == clf.b.tobytes()
        assert labels == ["∅", "a", "b"] and raw["test_clips"] == ["x"]


class TestSynthetic:
    def test_structure(self):
        config = SyntheticConfig(n_clips=20, A=4, d=8, seed=1)
        manifest, features = synthesize(config)
        assert manifest.labels == ("∅", "act1", "act2", "act3")
        for entry in manifest.clips:
            X = features[entry.id]
            gt = entry.ground_truth
            assert X.shape[1] == 8 and (X >= 0).all()
            assert 3 <= len(entry.annotations) <= 5
            assert [s.label for s in gt] == list(entry.annotations)
            assert gt[0].start == 0 and gt[-1].end == X.shape[0]
            assert all(a.end < b.start for a, b in zip(gt, gt[1:]))  # at least one background interval
            assert all(1 <= s.end - s.start <= 4 for s in gt)

    def test_background_fraction(self):
        manifest, features = synthesize(SyntheticConfig(n_clips=200, seed=2))
        total = sum(X.shape[0] for X in features.values())
        action = sum(s.end - s.start for c in manifest.clips for s in c.ground_truth)
        assert 1 - action / total == pytest.approx(0.3, abs=0.05)

    def test_generate_is_deterministic(self, tmp_path):
        config = SyntheticConfig(n_clips=4, seed=9)
        generate_synthetic(config, tmp_path / "a")
        generate_synthetic(config, tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert len(files) == 5
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        ds = load_dataset(tmp_path / "a" / "manifest.json")
        direct = synthetic_dataset(config)
        for c, d in zip(ds.clips, direct.clips):
            np.testing.assert_array_equal(c.features, d.features)

    def test_config_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"n_clips": 3, "intervals_per_segment": [2, 2]}))
        config = load_synthetic_config(tmp_path / "c.json")
        assert config.n_clips == 3 and config.intervals_per_segment == (2, 2)
        (tmp_path / "c.json").write_text(json.dumps({"n_clip": 3}))
        with pytest.raises(ValidationError, match="n_clip"):
            load_synthetic_config(tmp_path / "c.json")

    @pytest.mark.parametrize("kwargs", [dict(A=1), dict(d=2, A=3), dict(background_fraction=1.0), dict(intervals_per_segment=(3, 2))])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValidationError):
            SyntheticConfig(**kwargs)

    def test_no_separation_is_near_uniform(self):
        # without class signal the learned alignment cannot beat the uniform guess by much
        gaps = []
        for seed in range(3):
            ds = synthetic_dataset(SyntheticConfig(class_mean_separation=0.0, seed=seed))
            split = split_dataset(ds, SplitSpec(0.0, 0.05, 0.10, seed=seed))
            _, report = run_weak(ds, split, AlignConfig(max_iter=100))
            uniform = evaluate_alignment(uniform_alignment(split.eval), split.eval, ds.label_set).mean_jaccard
            gaps.append(report.mean_jaccard - uniform)
        assert np.mean(gaps) < 0.1
