"""Acceptance suite: the binding exit criteria, one test per criterion.

Each criterion runs at its stated tolerance and runtime bound and prints one
PASS line (a failed assertion stops the line being printed, so the report
shows exactly which criteria hold). Run with `pytest tests/test_acceptance.py -s`
to see the per-criterion lines.
"""

import math
import time

import numpy as np
import pytest

from synthetic_data import partial_label_benchmark, write_event_fixture
from telesum.corpus import Message, parse_alias_table, bin_by_minute
from telesum.embeddings import EmbeddedItem, EmbeddingStore, FaceRecord
from telesum.frame_select import select_frames
from telesum.partial_label import (
    LabelSpace,
    PartialExample,
    TrainConfig,
    evaluate_accuracy,
    kmeans_baseline,
    loss_ave_ce,
    loss_gradients,
    loss_hard_em,
    naive_multilabel_baseline,
    new_model,
    prototype_relabel,
    train,
)
from telesum.scenes import (
    SceneDetectorConfig,
    baseline_mean_std,
    baseline_volume_peaks,
    detect_scenes,
    evaluate_scenes,
    f1_score,
)
from telesum.weak_labels import (
    SpeakingInterval,
    assign_weak_labels,
    parse_srt,
    serialize_srt,
    SubtitleCue,
)
from test_partial_label import (
    finite_difference_gradients,
    max_relative_error,
    random_gradcheck_instances,
)


def report(line):
    print(f"\nACCEPTANCE {line}: PASS")


def test_loss_correctness():
    started = time.monotonic()
    rng = np.random.default_rng(100)

    # uniform model: both losses equal ln|Y_tot| exactly
    for n_labels in (2, 4, 7):
        space = LabelSpace(tuple(f"L{i}" for i in range(n_labels)))
        model = new_model(space, dim=3)
        x = rng.normal(size=3)
        for size in range(1, n_labels + 1):
            ex = PartialExample(
                x=x, candidates=frozenset(f"L{i}" for i in range(size))
            )
            assert abs(loss_ave_ce(model, ex) - math.log(n_labels)) < 1e-9
            assert abs(loss_hard_em(model, ex) - math.log(n_labels)) < 1e-9

    # aveCE with a singleton equals standard cross-entropy
    for _ in range(50):
        space = LabelSpace(("a", "b", "c"))
        model = new_model(space, dim=4)
        model.weights = rng.normal(size=(3, 4))
        model.biases = rng.normal(size=3)
        x = rng.normal(size=4)
        target = int(rng.integers(3))
        logits = model.weights @ x + model.biases
        standard_ce = -(logits[target] - np.log(np.sum(np.exp(logits - logits.max()))) - logits.max())
        ex = PartialExample(x=x, candidates=frozenset({space.labels[target]}))
        assert abs(loss_ave_ce(model, ex) - standard_ce) < 1e-9

    # hardEM <= aveCE on 1,000 random (model, example) pairs
    for _ in range(1000):
        n_labels = int(rng.integers(2, 6))
        space = LabelSpace(tuple(f"L{i}" for i in range(n_labels)))
        model = new_model(space, dim=3)
        model.weights = rng.normal(size=(n_labels, 3)) * 2
        model.biases = rng.normal(size=n_labels)
        size = int(rng.integers(1, n_labels + 1))
        chosen = rng.choice(n_labels, size=size, replace=False)
        ex = PartialExample(
            x=rng.normal(size=3), candidates=frozenset(f"L{i}" for i in chosen)
        )
        assert loss_hard_em(model, ex) <= loss_ave_ce(model, ex) + 1e-12

    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"loss correctness took {elapsed:.2f}s"
    report("loss-correctness")


def test_gradient_checks():
    started = time.monotonic()
    for loss_name in ("aveCE", "hardEM"):
        worst = 0.0
        for model, ex in random_gradcheck_instances(loss_name, count=100, seed=4242):
            aW, ab = loss_gradients(model, ex, loss_name)
            nW, nb = finite_difference_gradients(model, ex, loss_name)
            worst = max(worst, max_relative_error(aW, nW), max_relative_error(ab, nb))
        assert worst < 1e-4, f"{loss_name}: max relative error {worst}"
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"gradient checks took {elapsed:.2f}s"
    report("gradient-checks")


def test_partial_label_benchmark():
    started = time.monotonic()
    train_ex, test_ex = partial_label_benchmark(seed=0)
    assert len(train_ex) == 800 and len(test_ex) == 200
    space = LabelSpace(("A", "B", "C", "D"))

    def accuracy(model):
        return evaluate_accuracy(model, test_ex).micro_accuracy

    def cfg(**kw):
        return TrainConfig(seed=0, **kw)

    inc_rel = accuracy(
        train(train_ex, cfg(loss="aveCE", schedule="incremental", relabel=True), label_space=space)
    )
    inc = accuracy(
        train(train_ex, cfg(loss="aveCE", schedule="incremental"), label_space=space)
    )
    all_at_once = accuracy(
        train(train_ex, cfg(loss="aveCE", schedule="all_at_once"), label_space=space)
    )
    naive = accuracy(naive_multilabel_baseline(train_ex, cfg(), label_space=space))
    kmeans = kmeans_baseline(train_ex, test_ex, k=4, seed=0)

    # the reported benchmark orderings hold as properties, not exact values
    assert inc_rel >= inc >= naive, (inc_rel, inc, naive)
    assert inc_rel >= all_at_once, (inc_rel, all_at_once)
    assert inc_rel >= kmeans, (inc_rel, kmeans)
    assert inc_rel >= 0.90, inc_rel

    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"benchmark took {elapsed:.2f}s"
    report(
        "partial-label-benchmark "
        f"(inc+rel={inc_rel:.3f} inc={inc:.3f} all={all_at_once:.3f} "
        f"naive={naive:.3f} kmeans={kmeans:.3f})"
    )


SPIKE_MINUTES = (5, 15, 25, 35, 45)


def planted_spike_stream():
    """60-minute message stream: five characters spike at fixed minutes.

    Minutes 5 and 15 also carry volume peaks; minute 25 is a low-volume scene
    (6 messages) that only the mention-fraction detector can see.
    """
    table = parse_alias_table(
        "\n".join(
            '{"name": "char%d", "aliases": ["hero%d"]}' % (i, i) for i in range(5)
        )
    )
    messages = []
    counter = 0
    for minute in range(60):
        if minute in SPIKE_MINUTES:
            scene = SPIKE_MINUTES.index(minute)
            count = {5: 30, 15: 30, 25: 6}.get(minute, 10)
            mention = {5: 8, 15: 8, 25: 3}.get(minute, 5)
        else:
            count, mention, scene = 10, 0, None
        for j in range(count):
            text = f"hero{scene} shines now" if j < mention else f"chatter {minute} {j}"
            messages.append(
                Message(id=f"m{counter}", t=1_000 + minute * 60 + j, author="u", text=text)
            )
            counter += 1
    return bin_by_minute(messages, table), [
        (1_000 + m * 60, 1_000 + m * 60 + 120) for m in SPIKE_MINUTES
    ]


def test_scene_detection_acceptance():
    started = time.monotonic()
    bins, gold = planted_spike_stream()
    detected = detect_scenes(bins, SceneDetectorConfig(k=0.2, m=0.05))
    ours = evaluate_scenes(detected, gold, margin_seconds=0)
    assert ours.precision == ours.recall == ours.f1 == 1.0, ours

    volume = evaluate_scenes(baseline_volume_peaks(bins), gold, margin_seconds=0)
    meanstd = evaluate_scenes(baseline_mean_std(bins, n_sigma=1.0), gold, margin_seconds=0)
    assert volume.f1 < ours.f1, volume
    assert meanstd.f1 < ours.f1, meanstd

    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"scene detection took {elapsed:.2f}s"
    report(
        f"scene-detection (ours={ours.f1:.2f} volume={volume.f1:.2f} "
        f"meanstd={meanstd.f1:.2f})"
    )


def test_evaluation_arithmetic():
    def scene(start):
        return detect_scenes(
            bin_by_minute(
                [Message(id=f"x{start}", t=start, author="u", text="hero wins")],
                parse_alias_table('{"name": "char", "aliases": ["hero"]}'),
            ),
            SceneDetectorConfig(k=0.5, m=0.05),
        )[0]

    # hand fixture: 3 predictions, 2 inside gold intervals, 4 gold scenes
    preds = [scene(50), scene(250), scene(10_000)]
    gold = [(0, 100), (200, 300), (400, 500), (600, 700)]
    rep = evaluate_scenes(preds, gold)
    assert rep.precision == 2 / 3
    assert rep.recall == 0.5
    assert rep.f1 == f1_score(2 / 3, 0.5) == 2 * (2 / 3) * 0.5 / (2 / 3 + 0.5)

    # exact empty-vs-empty convention
    both_empty = evaluate_scenes([], [])
    assert (both_empty.precision, both_empty.recall, both_empty.f1) == (1.0, 1.0, 1.0)

    # formula at full precision with two-decimal display rounding
    got = f1_score(0.80, 0.58)
    assert abs(got - 0.672463768115942) < 1e-12
    assert round(got, 2) == 0.67
    report("evaluation-arithmetic")


def brute_force_nearest(items, accept):
    center = np.mean([it.vector for it in items], axis=0)
    best, best_key = None, None
    for it in items:
        if not accept(it):
            continue
        sim = float(
            np.dot(it.vector, center)
            / (np.linalg.norm(it.vector) * np.linalg.norm(center))
        )
        key = (-sim, it.t, it.id)
        if best_key is None or key < best_key:
            best, best_key = it, key
    return best


def brute_force_frames(frames, faces, model, characters, threshold):
    """Independent exhaustive re-implementation of the frame-selection rule."""
    probs = {}
    for face in faces:
        p = model.predict(face.embedded.vector)
        bucket = probs.setdefault(face.frame_id, {})
        for c in characters:
            v = float(p[model.label_space.index(c)])
            bucket[c] = max(bucket.get(c, 0.0), v)
    picks = {}
    for c in sorted(characters):
        cands = [
            (f, probs.get(f.id, {}).get(c, 0.0))
            for f in frames
            if probs.get(f.id, {}).get(c, 0.0) > threshold
        ]
        if not cands:
            continue
        center = np.mean([f.vector for f, _ in cands], axis=0)
        best, best_key = None, None
        for f, conf in cands:
            sim = float(
                np.dot(f.vector, center)
                / (np.linalg.norm(f.vector) * np.linalg.norm(center))
            )
            key = (-sim, -conf, f.t, f.id)
            if best_key is None or key < best_key:
                best, best_key = f, key
        picks[c] = best.id
    return picks


def test_centroid_selection_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(777)
    space = LabelSpace(("P", "Q"))
    model = new_model(space, dim=3)
    model.weights = rng.normal(size=(2, 3)) * 2.0

    from telesum.scenes import Scene

    for trial in range(200):
        n = int(rng.integers(2, 101))
        dim = int(rng.integers(2, 6))
        items = [
            EmbeddedItem(
                id=f"t{trial}_{i}",
                t=int(rng.integers(0, 5000)),
                kind="tweet",
                vector=rng.normal(size=dim) + 0.1,
            )
            for i in range(n)
        ]
        accept = lambda it: (hash(it.id) & 1) == 0
        from telesum.embeddings import nearest_to_centroid

        got = nearest_to_centroid(items, accept)
        want = brute_force_nearest(items, accept)
        assert (got is None) == (want is None)
        if got is not None:
            assert got.id == want.id

        # frame selection against the same kind of exhaustive scan
        n_frames = int(rng.integers(1, 40))
        frames = [
            EmbeddedItem(
                id=f"fr{trial}_{i}",
                t=int(rng.integers(0, 600)),
                kind="frame",
                vector=rng.normal(size=4) + 0.05,
            )
            for i in range(n_frames)
        ]
        faces = [
            FaceRecord(
                embedded=EmbeddedItem(
                    id=f"fc{trial}_{i}",
                    t=frames[int(rng.integers(n_frames))].t,
                    kind="face",
                    vector=rng.normal(size=3),
                ),
                frame_id=frames[int(rng.integers(n_frames))].id,
            )
            for i in range(int(rng.integers(0, 60)))
        ]
        scene = Scene(start_t=0, end_t=600, trigger_characters=frozenset({"P"}))
        chosen, _ = select_frames(
            scene,
            {"P", "Q"},
            EmbeddingStore(frames),
            faces,
            model,
            confidence_threshold=0.5,
        )
        got_by_char = {fc.who: fc.frame_id for fc in chosen if fc.who in ("P", "Q")}
        want_by_char = brute_force_frames(frames, faces, model, ["P", "Q"], 0.5)
        assert got_by_char == want_by_char

    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"selection oracle took {elapsed:.2f}s"
    report("centroid-selection-oracle")


def test_weak_labeler_acceptance():
    # 50-cue SRT file round-trips byte-equivalently modulo CRLF normalization
    rng = np.random.default_rng(55)
    cues = []
    t = 0
    for i in range(1, 51):
        start = t + int(rng.integers(100, 2000))
        end = start + int(rng.integers(500, 4000))
        lines = " ".join(f"word{int(w)}" for w in rng.integers(0, 40, size=4))
        cues.append(SubtitleCue(index=i, start_t=start, end_t=end, text=lines))
        t = end
    original = serialize_srt(cues)
    crlf_file = original.replace("\n", "\r\n")
    assert serialize_srt(parse_srt(crlf_file)) == original

    # alternating speakers with silence gaps: exact hand-enumerated label sets
    intervals = [
        SpeakingInterval("A", 0, 18_000),
        SpeakingInterval("B", 22_000, 38_000),
        SpeakingInterval("C", 42_000, 58_000),
    ]
    faces = [
        FaceRecord(
            embedded=EmbeddedItem(id=f"f{t}", t=t, kind="face", vector=np.array([1.0])),
            frame_id=f"fr{t}",
        )
        for t in range(0, 60, 5)
    ]
    expected = {
        0: {"A"},
        5: {"A"},
        10: {"A", "B"},
        15: {"A", "B"},
        20: {"A", "B"},
        25: {"A", "B"},
        30: {"A", "B", "C"},
        35: {"B", "C"},
        40: {"B", "C"},
        45: {"B", "C"},
        50: {"B", "C"},
        55: {"C"},
    }
    result = assign_weak_labels(faces, intervals, window_seconds=15)
    got = {f.t: set(f.weak_labels) for f in result.faces}
    assert got == expected

    # widening the window never shrinks any face's label set
    previous = None
    for window in (5, 10, 15, 30):
        labels = {
            f.id: f.weak_labels
            for f in assign_weak_labels(faces, intervals, window_seconds=window).faces
        }
        if previous is not None:
            for face_id, lbls in previous.items():
                assert lbls <= labels.get(face_id, frozenset())
        previous = labels
    report("weak-labeler")


def test_determinism_full_pipeline(tmp_path):
    from telesum.pipeline import PipelineConfig, run_pipeline

    a = write_event_fixture(tmp_path / "a", seed=3)
    b = write_event_fixture(tmp_path / "b", seed=3)
    run_pipeline(PipelineConfig.from_file(a["config"]))
    run_pipeline(PipelineConfig.from_file(b["config"]))
    for name in ("scenes.jsonl", "model.ckpt", "summary.jsonl"):
        assert (a["out_dir"] / name).read_bytes() == (b["out_dir"] / name).read_bytes(), name
    report("determinism")


def test_prototype_relabel_acceptance():
    # 20-point two-cluster fixture against the brute-force computation
    from test_partial_label import TestPrototypeRelabel, two_cluster_examples

    ambiguous = [
        PartialExample(x=e.x, candidates=frozenset({"A", "B"}))
        for e in two_cluster_examples(n_per=10, seed=5)
    ]
    anchors = two_cluster_examples(n_per=2, seed=6)
    model = train(
        ambiguous + anchors,
        TrainConfig(loss="aveCE", schedule="all_at_once", epochs_per_stage=30),
        label_space=LabelSpace(("A", "B")),
    )
    result = prototype_relabel(model, ambiguous)
    expected = TestPrototypeRelabel().brute_force(model, ambiguous)
    assert [next(iter(e.candidates)) for e in result.examples] == expected

    # relabeling never leaves the original candidate set: 1,000 random fixtures
    rng = np.random.default_rng(31)
    space = LabelSpace(("A", "B", "C", "D", "E"))
    for _ in range(1000):
        m = new_model(space, dim=3)
        m.weights = rng.normal(size=(5, 3))
        m.biases = rng.normal(size=5)
        examples = []
        for _ in range(int(rng.integers(2, 10))):
            size = int(rng.integers(1, 6))
            chosen = rng.choice(5, size=size, replace=False)
            examples.append(
                PartialExample(
                    x=rng.normal(size=3),
                    candidates=frozenset(space.labels[i] for i in chosen),
                )
            )
        relabeled = prototype_relabel(m, examples).examples
        for before, after in zip(examples, relabeled):
            assert after.candidates <= before.candidates
    report("prototype-relabel")
