"""Vector store loading, cosine/centroid primitives, and centroid selection."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telesum.embeddings import (
    EmbeddedItem,
    StoreError,
    centroid,
    cosine,
    load_face_records,
    load_store,
    nearest_to_centroid,
    serialize_face_records,
    serialize_items,
)


def vec_line(item_id, t, kind, vec, **extra):
    return json.dumps({"id": item_id, "t": t, "kind": kind, "vec": vec, **extra})


class TestLoadStore:
    def test_two_items_dim_4(self):
        text = "\n".join(
            [vec_line("a", 1, "tweet", [1, 2, 3, 4]), vec_line("b", 2, "tweet", [0, 0, 1, 0])]
        )
        store = load_store(text)
        assert store.dim == 4 and len(store) == 2

    def test_dimension_mismatch_names_both_ids(self):
        text = "\n".join(
            [vec_line("a", 1, "tweet", [1, 2, 3, 4]), vec_line("b", 2, "tweet", [1, 2, 3, 4, 5])]
        )
        with pytest.raises(StoreError) as err:
            load_store(text)
        assert "'a'" in str(err.value) and "'b'" in str(err.value)

    def test_empty_file(self):
        store = load_store("")
        assert len(store) == 0 and store.dim is None

    def test_non_finite_named(self):
        with pytest.raises(StoreError) as err:
            load_store(vec_line("bad", 1, "tweet", [1.0, float("nan")]))
        assert "'bad'" in str(err.value)

    def test_duplicate_id(self):
        text = "\n".join([vec_line("a", 1, "tweet", [1]), vec_line("a", 2, "tweet", [2])])
        with pytest.raises(StoreError):
            load_store(text)

    def test_window_query(self):
        text = "\n".join(
            vec_line(f"i{t}", t, "frame", [float(t)]) for t in (5, 10, 15, 20)
        )
        store = load_store(text)
        assert [it.id for it in store.in_window(10, 20)] == ["i10", "i15"]

    def test_item_round_trip(self):
        items = [
            EmbeddedItem(id="a", t=3, kind="face", vector=np.array([0.5, -1.25])),
            EmbeddedItem(id="b", t=1, kind="face", vector=np.array([2.0, 4.0])),
        ]
        again = load_store(serialize_items(items))
        assert [it.id for it in again.items] == ["b", "a"]
        assert np.array_equal(again.get("a").vector, items[0].vector)

    def test_face_records(self):
        text = "\n".join(
            [
                vec_line("f1", 1, "face", [1, 0], frame_id="fr1", labels=["Jon"], episode=2),
                vec_line("f2", 2, "face", [0, 1], frame_id="fr2"),
            ]
        )
        records = load_face_records(text)
        assert records[0].frame_id == "fr1"
        assert records[0].weak_labels == {"Jon"} and records[0].episode == 2
        assert records[1].weak_labels == frozenset()
        reloaded = load_face_records(serialize_face_records(records))
        for before, after in zip(records, reloaded):
            assert (before.id, before.t, before.frame_id) == (after.id, after.t, after.frame_id)
            assert before.weak_labels == after.weak_labels
            assert before.episode == after.episode
            assert np.array_equal(before.embedded.vector, after.embedded.vector)

    def test_face_record_requires_frame_id(self):
        with pytest.raises(StoreError):
            load_face_records(vec_line("f1", 1, "face", [1, 0]))


class TestCosine:
    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)

    def test_identical_direction(self):
        assert cosine(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(1.0, abs=1e-9)

    def test_hand_computed_value(self):
        # dot 32, norms sqrt(14) and sqrt(77)
        got = cosine(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
        assert got == pytest.approx(0.9746318461970762, abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(StoreError):
            cosine(np.zeros(3), np.ones(3))

    def test_range(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            u, v = rng.normal(size=4), rng.normal(size=4)
            assert -1.0 - 1e-12 <= cosine(u, v) <= 1.0 + 1e-12


def items_from(vectors, kind="tweet", t0=0):
    return [
        EmbeddedItem(id=f"it{i}", t=t0 + i, kind=kind, vector=np.asarray(v, dtype=float))
        for i, v in enumerate(vectors)
    ]


class TestCentroid:
    def test_singleton(self):
        items = items_from([[3.0, 4.0]])
        assert np.array_equal(centroid(items), np.array([3.0, 4.0]))

    def test_two_points(self):
        assert np.array_equal(centroid(items_from([[0, 0], [2, 2]])), np.array([1.0, 1.0]))

    def test_against_fsum_oracle(self):
        rng = np.random.default_rng(11)
        vectors = rng.normal(size=(5, 6))
        got = centroid(items_from(vectors))
        expected = [math.fsum(vectors[i][d] for i in range(5)) / 5 for d in range(6)]
        assert got == pytest.approx(expected, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(StoreError):
            centroid([])

    @given(st.permutations(list(range(6))))
    def test_permutation_invariance(self, order):
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(6, 4))
        base = centroid(items_from(vectors))
        shuffled = centroid(items_from([vectors[i] for i in order]))
        assert shuffled == pytest.approx(base, abs=1e-12)


def brute_force_nearest(items, accept):
    """Independent exhaustive scan used as the selection oracle."""
    center = np.mean([it.vector for it in items], axis=0)

    def sim(it):
        return float(
            np.dot(it.vector, center) / (np.linalg.norm(it.vector) * np.linalg.norm(center))
        )

    best = None
    for it in items:
        if not accept(it):
            continue
        if best is None or (-sim(it), it.t, it.id) < (-sim(best), best.t, best.id):
            best = it
    return best


class TestNearestToCentroid:
    def test_singleton(self):
        items = items_from([[1.0, 2.0]])
        assert nearest_to_centroid(items) is items[0]

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(23)
        items = items_from(rng.normal(size=(10, 5)))
        accept = lambda it: int(it.id[2:]) % 2 == 0
        assert nearest_to_centroid(items, accept).id == brute_force_nearest(items, accept).id

    def test_all_filtered_out(self):
        items = items_from([[1.0], [2.0]])
        assert nearest_to_centroid(items, lambda it: False) is None

    def test_centroid_over_all_items_not_candidates(self):
        # the filtered-out mass pulls the centroid toward +x, so among the
        # accepted items the one nearest +x must win
        items = [
            EmbeddedItem(id="bulk1", t=0, kind="tweet", vector=np.array([10.0, 0.0])),
            EmbeddedItem(id="bulk2", t=1, kind="tweet", vector=np.array([10.0, 0.1])),
            EmbeddedItem(id="bulk3", t=2, kind="tweet", vector=np.array([10.0, -0.1])),
            EmbeddedItem(id="diag", t=3, kind="tweet", vector=np.array([1.0, 1.0])),
            EmbeddedItem(id="vert", t=4, kind="tweet", vector=np.array([0.0, 1.0])),
        ]
        accepted_ids = {"diag", "vert"}
        chosen = nearest_to_centroid(items, lambda it: it.id in accepted_ids)
        assert chosen.id == "diag"

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=0.01, max_value=1000.0))
    def test_scale_invariance(self, scale):
        rng = np.random.default_rng(5)
        vectors = rng.normal(size=(12, 4))
        items = items_from(vectors)
        scaled = items_from(vectors * scale)
        accept = lambda it: int(it.id[2:]) >= 4
        assert nearest_to_centroid(items, accept).id == nearest_to_centroid(scaled, accept).id

    def test_zero_norm_items_rank_last_without_error(self):
        items = [
            EmbeddedItem(id="zero", t=0, kind="frame", vector=np.zeros(3)),
            EmbeddedItem(id="real", t=5, kind="frame", vector=np.array([1.0, 0.0, 0.0])),
        ]
        assert nearest_to_centroid(items).id == "real"
        only_zero = [EmbeddedItem(id="z", t=0, kind="frame", vector=np.zeros(3))]
        assert nearest_to_centroid(only_zero).id == "z"

    def test_tie_break_earliest_then_id(self):
        # two identical candidate vectors: earlier t wins
        items = [
            EmbeddedItem(id="late", t=9, kind="tweet", vector=np.array([1.0, 0.0])),
            EmbeddedItem(id="early", t=1, kind="tweet", vector=np.array([1.0, 0.0])),
            EmbeddedItem(id="other", t=0, kind="tweet", vector=np.array([0.9, 0.01])),
        ]
        assert nearest_to_centroid(items).id == "early"
