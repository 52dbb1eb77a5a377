import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ordalign.errors import InfeasibleError, ValidationError
from ordalign.model import (
    AnnotationSequence,
    Clip,
    LabelSet,
    Segment,
    build_annotation_sequence,
    enumerate_paths,
    ground_truth_assignment,
    matrix_to_path,
    path_to_matrix,
)


@pytest.fixture
def labels():
    return LabelSet.from_names(["∅", "Walk", "SitDown", "Eat"])


def names(seq, label_set):
    return [label_set.actions[s] for s in seq.slots]


class TestBuildAnnotationSequence:
    def test_between_only(self, labels):
        seq = build_annotation_sequence(["Walk", "SitDown"], labels)
        assert names(seq, labels) == ["Walk", "∅", "SitDown"]
        assert seq.K == 3

    def test_single_label(self, labels):
        seq = build_annotation_sequence(["Walk"], labels)
        assert names(seq, labels) == ["Walk"]

    def test_between_and_ends(self, labels):
        seq = build_annotation_sequence(["Walk", "Eat"], labels, "between_and_ends")
        assert names(seq, labels) == ["∅", "Walk", "∅", "Eat", "∅"]
        assert seq.K == 5

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_slot_counts(self, labels, n):
        src = ["Walk", "Eat"] * n
        assert build_annotation_sequence(src, labels).K == 2 * len(src) - 1
        assert build_annotation_sequence(src, labels, "between_and_ends").K == 2 * len(src) + 1

    def test_source_slots_kept(self, labels):
        seq = build_annotation_sequence(["Eat", "Walk"], labels)
        assert seq.source_slots == (3, 1)

    def test_unknown_label_named(self, labels):
        with pytest.raises(ValidationError, match="Jump"):
            build_annotation_sequence(["Walk", "Jump"], labels)

    def test_empty(self, labels):
        with pytest.raises(ValidationError):
            build_annotation_sequence([], labels)

    def test_no_background_label(self):
        ls = LabelSet(("a", "b"))
        assert build_annotation_sequence(["a"], ls).K == 1
        with pytest.raises(ValidationError):
            build_annotation_sequence(["a", "b"], ls)


def test_label_set_validation():
    with pytest.raises(ValidationError):
        LabelSet(("a", "a"))
    with pytest.raises(ValidationError):
        LabelSet(("a",), background_index=0)
    with pytest.raises(ValidationError):
        LabelSet(("a", "b"), background_index=2)


def test_repeated_neighbouring_slots_rejected():
    with pytest.raises(ValidationError):
        AnnotationSequence((1, 1), (1, 1))


class TestPathMatrix:
    def test_identity(self):
        a = AnnotationSequence((0, 1), (0, 1))
        np.testing.assert_array_equal(path_to_matrix([0, 1], a, 2), [[1, 0], [0, 1]])

    def test_background_column(self):
        # L1 in column 0, background in column 1
        a = AnnotationSequence((0, 1), (0,))
        np.testing.assert_array_equal(path_to_matrix([0, 0, 1], a, 2), [[1, 0], [1, 0], [0, 1]])

    def test_repeated_label_shares_column(self):
        a = AnnotationSequence((0, 1, 0), (0, 0))
        Z = path_to_matrix([0, 1, 2], a, 2)
        np.testing.assert_array_equal(Z[:, 0], [1, 0, 1])

    def test_matrix_to_path_inverse(self):
        a = AnnotationSequence((0, 1), (0, 1))
        np.testing.assert_array_equal(matrix_to_path(np.eye(2), a), [0, 1])
        a = AnnotationSequence((0, 1), (0,))
        np.testing.assert_array_equal(matrix_to_path([[1, 0], [1, 0], [0, 1]], a), [0, 0, 1])

    def test_boundary_violation(self):
        a = AnnotationSequence((0, 1), (0, 1))
        with pytest.raises(ValidationError, match="row 0"):
            matrix_to_path([[0, 1], [1, 0]], a)

    def test_not_one_hot(self):
        a = AnnotationSequence((0, 1), (0, 1))
        with pytest.raises(ValidationError, match="row 1"):
            matrix_to_path([[1, 0], [0.5, 0.5]], a)

    def test_does_not_reach_last_slot(self):
        a = AnnotationSequence((0, 1), (0, 1))
        with pytest.raises(ValidationError):
            matrix_to_path([[1, 0], [1, 0]], a)

    def test_invalid_path(self):
        a = AnnotationSequence((0, 1, 2), (0, 1, 2))
        with pytest.raises(ValidationError):
            path_to_matrix([0, 2, 2], a, 3)
        with pytest.raises(ValidationError):
            path_to_matrix([1, 1, 2], a, 3)


class TestEnumeratePaths:
    def test_counts(self):
        assert len(enumerate_paths(5, 3)) == 6
        assert [p.tolist() for p in enumerate_paths(4, 1)] == [[0, 0, 0, 0]]
        assert [p.tolist() for p in enumerate_paths(4, 4)] == [[0, 1, 2, 3]]

    def test_too_many_slots(self):
        assert enumerate_paths(3, 4) == []

    def test_cap(self):
        with pytest.raises(ValidationError):
            enumerate_paths(30, 10, max_paths=1000)

    def test_paths_distinct_and_valid(self):
        paths = enumerate_paths(7, 4)
        assert len({tuple(p) for p in paths}) == len(paths)
        for p in paths:
            assert p[0] == 0 and p[-1] == 3
            assert set(np.diff(p)) <= {0, 1}


@pytest.mark.parametrize("T", range(1, 11))
def test_bijection_round_trip(T):
    for K in range(1, T + 1):
        # alternate action / background so neighbouring slots differ
        a = AnnotationSequence(tuple((k % 2) + 1 if k % 2 == 0 else 0 for k in range(K)), (1,))
        seen = set()
        for m in enumerate_paths(T, K):
            Z = path_to_matrix(m, a, 3)
            np.testing.assert_array_equal(matrix_to_path(Z, a), m)
            seen.add(Z.tobytes())
        assert len(seen) == math.comb(T - 1, K - 1)


@given(st.integers(1, 12), st.integers(1, 6))
def test_vertex_count_matches_binomial(T, K):
    expected = math.comb(T - 1, K - 1) if K <= T else 0
    assert len(enumerate_paths(T, K)) == expected


class TestClip:
    def test_infeasible(self, labels):
        a = build_annotation_sequence(["Walk", "Eat"], labels)
        with pytest.raises(InfeasibleError):
            Clip("c", np.zeros((2, 3)), a)

    def test_ground_truth_bounds(self, labels):
        a = build_annotation_sequence(["Walk"], labels)
        with pytest.raises(ValidationError):
            Clip("c", np.zeros((3, 2)), a, (Segment("Walk", 1, 4),))
        with pytest.raises(ValidationError):
            Clip("c", np.zeros((5, 2)), a, (Segment("Walk", 0, 3), Segment("Walk", 2, 4)))

    def test_features_read_only(self, labels):
        c = Clip("c", np.zeros((3, 2)), build_annotation_sequence(["Walk"], labels))
        with pytest.raises(ValueError):
            c.features[0, 0] = 1.0

    def test_ground_truth_assignment(self, labels):
        a = build_annotation_sequence(["Walk", "Eat"], labels)
        c = Clip("c", np.zeros((5, 2)), a, (Segment("Walk", 0, 2), Segment("Eat", 3, 5)))
        Z = ground_truth_assignment(c, labels)
        np.testing.assert_array_equal(matrix_to_path(Z, a), [0, 0, 1, 2, 2])

    def test_ground_truth_out_of_order(self, labels):
        a = build_annotation_sequence(["Walk", "Eat"], labels)
        c = Clip("c", np.zeros((5, 2)), a, (Segment("Eat", 0, 2), Segment("Walk", 3, 5)))
        with pytest.raises(ValidationError, match="annotation order"):
            ground_truth_assignment(c, labels)

    def test_supervised_assignment_checked(self, labels):
        a = build_annotation_sequence(["Walk", "Eat"], labels)
        bad = np.zeros((3, 4))
        bad[:, 1] = 1
        with pytest.raises(ValidationError):
            Clip("c", np.zeros((3, 2)), a, supervised_assignment=bad)
