import numpy as np
import pytest

from renderwait.errors import FormatError, InvalidArgument
from renderwait.imaging import Frame, read_frame
from renderwait.nn import LrSchedule, ModelConfig
from renderwait.renderstate import (
    DatasetManifest,
    Predictor,
    assemble_dataset,
    assign_splits,
    build_dataset,
    drop_ambiguous,
    episodes,
    leakage,
    preprocess,
    sample_screencast,
    scores,
    split_counts,
    state_for,
    train_classifier,
)
from renderwait.states import FULL, LOADING, TRANSITING, Label
from renderwait.suites import export_screencast

TINY = ModelConfig(input_width=16, input_height=24)


def random_frame(rng, h=48, w=32, ts=0):
    return Frame(rng.integers(0, 256, (h, w), dtype=np.uint8), ts)


def test_split_counts_rounding():
    assert split_counts(1000) == (800, 100, 100)
    assert split_counts(15) == (11, 2, 2)  # 1.5 rounds half-up
    assert split_counts(3) == (3, 0, 0)
    for n in range(60):
        assert sum(split_counts(n)) == n


def test_stratified_split_is_deterministic_and_balanced():
    rng = np.random.default_rng(0)
    labels = [Label.PARTIAL if x else Label.FULLY_RENDERED for x in rng.random(1000) < 0.58]
    a = assign_splits(labels, seed=3)
    assert a == assign_splits(labels, seed=3)
    assert a != assign_splits(labels, seed=4)
    overall = np.mean([lab is Label.PARTIAL for lab in labels])
    for split in ("train", "val", "test"):
        sub = [lab for lab, s in zip(labels, a) if s == split]
        assert abs(np.mean([lab is Label.PARTIAL for lab in sub]) - overall) <= 0.05


def test_episodes_split_on_label_and_cap():
    rng = np.random.default_rng(1)
    seq = [(random_frame(rng, ts=i), FULL if i < 5 or i >= 8 else LOADING) for i in range(12)]
    runs = episodes(seq, max_len=3)
    assert [len(r) for r in runs] == [3, 2, 3, 3, 1]
    with pytest.raises(InvalidArgument):
        episodes(seq, 0)


def test_repeated_frames_collapse_before_clustering():
    f = Frame(np.full((32, 24), 120, dtype=np.uint8))
    seq = [(f.with_timestamp(i * 100), FULL) for i in range(100)]
    out = sample_screencast(seq)
    assert len(out) == 1 and out[0][1] is Label.FULLY_RENDERED


def test_partials_that_look_settled_are_dropped():
    rng = np.random.default_rng(4)
    base = rng.integers(0, 256, (96, 56), dtype=np.uint8)
    nudged = base.copy()
    nudged[10, 10] ^= 1
    shifted = np.roll(base, 12, axis=1)
    frames = [
        (Frame(base), Label.FULLY_RENDERED),
        (Frame(nudged, 100), Label.PARTIAL),
        (Frame(shifted, 200), Label.PARTIAL),
        (Frame(base[:80], 300), Label.PARTIAL),
    ]
    kept = drop_ambiguous(frames)
    assert [f.timestamp_ms for f, _ in kept] == [0, 200, 300]
    assert drop_ambiguous(frames[1:]) == frames[1:]  # nothing to contradict


def test_identical_screencast_yields_one_captured_entry(tmp_path):
    f = Frame(np.full((64, 40), 200, dtype=np.uint8))
    cast = tmp_path / "cast"
    export_screencast(cast, [(f.with_timestamp(i * 100), FULL) for i in range(100)])
    m = build_dataset([str(cast)], tmp_path / "ds", seed=2)
    captured = [e for e in m.entries if e.origin == "captured"]
    assert len(captured) == 1 and captured[0].label is Label.FULLY_RENDERED
    assert sum(e.label is Label.PARTIAL for e in m.entries) == 1  # round(1.38 * 1)
    with pytest.raises(InvalidArgument):
        build_dataset([], tmp_path / "x")
    with pytest.raises(InvalidArgument):
        build_dataset([str(cast)], tmp_path / "x", epsilon=0.0)


def _captured(seed, n_full=30, n_partial=10):
    rng = np.random.default_rng(seed)
    items = [(random_frame(rng, ts=i), Label.FULLY_RENDERED) for i in range(n_full)]
    items += [(random_frame(rng, ts=100 + i), Label.PARTIAL) for i in range(n_partial)]
    return items


def test_assemble_reaches_ratio_and_records_origins(tmp_path):
    m = assemble_dataset(_captured(0), tmp_path, ratio=1.38, seed=1)
    full = sum(e.label is Label.FULLY_RENDERED for e in m.entries)
    part = sum(e.label is Label.PARTIAL for e in m.entries)
    assert full == 30 and part == 41  # round(1.38 * 30)
    origins = {e.origin for e in m.entries}
    assert origins <= {"captured", "stitched", "blended", "injected"} and "captured" in origins
    assert all(e.label is Label.PARTIAL for e in m.entries if e.origin != "captured")
    assert leakage(m) == []
    # augmentation is deterministic per seed
    again = assemble_dataset(_captured(0), tmp_path / "again", ratio=1.38, seed=1)
    digests = [read_frame(m.resolve(e)).digest() for e in m.entries]
    assert digests == [read_frame(again.resolve(e)).digest() for e in again.entries]


def test_captured_partials_are_thinned(tmp_path):
    m = assemble_dataset(_captured(1, 20, 40), tmp_path, ratio=1.0, seed=0, captured_share=0.5)
    captured_partial = [e for e in m.entries if e.origin == "captured" and e.label is Label.PARTIAL]
    assert len(captured_partial) == 10
    assert sum(e.label is Label.PARTIAL for e in m.entries) == 20


def test_manifest_round_trip(tmp_path):
    m = assemble_dataset(_captured(2), tmp_path, seed=4)
    loaded = DatasetManifest.load(tmp_path / "manifest.json")
    assert loaded.entries == m.entries and loaded.ratios == m.ratios and loaded.seed == 4
    assert loaded.counts() == m.counts()
    (tmp_path / "bad.json").write_text('{"seed": 1}')
    with pytest.raises(FormatError):
        DatasetManifest.load(tmp_path / "bad.json")


def test_preprocess_shape_and_range():
    rng = np.random.default_rng(3)
    x = preprocess([random_frame(rng), Frame(rng.integers(0, 256, (48, 32, 3), dtype=np.uint8))], TINY)
    assert x.shape == (2, 1, 24, 16) and x.dtype == np.float32
    assert 0.0 <= x.min() and x.max() <= 1.0


def test_scores_hand_built_confusion():
    s = scores([True, True, True, False], [True, True, False, True])
    assert (s.tp, s.fp, s.fn, s.tn) == (2, 1, 1, 0)
    assert s.precision == pytest.approx(2 / 3) and s.recall == pytest.approx(2 / 3) and s.f1 == pytest.approx(2 / 3)
    perfect = scores([True, False], [True, False])
    assert (perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0)


def test_scores_without_predicted_positives():
    s = scores([False, False, False], [True, False, True])
    assert s.recall == 0.0 and s.precision == 0.0 and not s.precision_defined
    with pytest.raises(InvalidArgument):
        scores([], [])


def test_threshold_tie_goes_to_full():
    assert state_for(0.5) == FULL
    below = state_for(0.4999)
    assert below.label is Label.PARTIAL and below.kind is None
    assert below != LOADING and below != TRANSITING


def _tiny_dataset(tmp_path):
    rng = np.random.default_rng(5)
    bright = [(Frame(rng.integers(180, 256, (48, 32), dtype=np.uint8), i), Label.FULLY_RENDERED) for i in range(24)]
    dark = [(Frame(rng.integers(0, 60, (48, 32), dtype=np.uint8), 50 + i), Label.PARTIAL) for i in range(24)]
    return assemble_dataset(bright + dark, tmp_path, ratio=1.0, seed=0, captured_share=None)


def test_training_is_deterministic_and_keeps_best_epoch(tmp_path):
    m = _tiny_dataset(tmp_path)
    a = train_classifier(m, epochs=3, seed=1, batch_size=8, config=TINY)
    b = train_classifier(m, epochs=3, seed=1, batch_size=8, config=TINY)
    assert a.checkpoint == b.checkpoint
    losses = [h["val_loss"] for h in a.history]
    assert losses[a.best_epoch] == min(losses) <= losses[0]
    pred = Predictor(a.checkpoint)
    frame = read_frame(m.resolve(m.entries[0]))
    c1, c2 = pred.predict(frame)[1], pred.predict(frame)[1]
    assert c1 == c2


def test_training_rejects_single_class(tmp_path):
    rng = np.random.default_rng(6)
    only_full = [(random_frame(rng, ts=i), Label.FULLY_RENDERED) for i in range(10)]
    m = assemble_dataset(only_full, tmp_path, ratio=0.0, seed=0)
    with pytest.raises(InvalidArgument):
        train_classifier(m, epochs=1, config=TINY)


def test_weight_average_only_changes_what_is_saved(tmp_path):
    m = _tiny_dataset(tmp_path)
    plain = train_classifier(m, epochs=2, seed=1, batch_size=8, config=TINY, ema=None)
    averaged = train_classifier(m, epochs=2, seed=1, batch_size=8, config=TINY, ema=0.9)
    # same optimizer trajectory, different evaluated weights
    assert [h["train_loss"] for h in plain.history] == [h["train_loss"] for h in averaged.history]
    assert plain.checkpoint != averaged.checkpoint
    # decay 0 averages nothing: the copy always equals the live weights
    assert train_classifier(m, epochs=2, seed=1, batch_size=8, config=TINY, ema=0.0).history == plain.history
    for bad in (1.0, -0.1):
        with pytest.raises(InvalidArgument):
            train_classifier(m, epochs=1, config=TINY, ema=bad)


def test_schedule_is_applied_per_epoch(tmp_path):
    m = _tiny_dataset(tmp_path)
    r = train_classifier(m, epochs=3, seed=0, batch_size=16, config=TINY, schedule=LrSchedule(0.02, 1))
    assert [h["lr"] for h in r.history] == [0.02, 0.01, 0.005]


@pytest.mark.slow
def test_trained_model_flags_loading_frames(pipeline):
    from renderwait.devicesim import Action, Simulator
    from renderwait.suites import standard_app

    app = standard_app()
    frames = []
    for seed, (profile, wid) in enumerate([("phone-b", "tab_contacts"), ("phone-d", "chat_row_3")] * 10):
        sim = Simulator(app, profile, 1000 + seed)
        sim.dispatch(Action("tap", wid))
        sim.advance(37 * (seed % 4))
        assert sim.ground_truth_state() == LOADING
        frames.append(sim.screenshot())
    predicted_partial = sum(c < 0.5 for c in pipeline.predictor.confidence(frames))
    assert predicted_partial >= 18
