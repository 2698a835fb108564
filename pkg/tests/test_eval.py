from dataclasses import asdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sanas.audio import BG_NOISE_ID, LABEL_INDEX
from sanas.checkpoint import Checkpoint, restore
from sanas.controller import ModelConfig, SanasModel
from sanas.errors import FormatError, InputError
from sanas.eval import (
    Detection,
    GroundTruthWord,
    ParetoPoint,
    StreamingParams,
    dominates,
    evaluate_checkpoint,
    frame_metrics,
    pareto_front,
    read_points_csv,
    streaming_decode,
    streaming_metrics,
    write_points_csv,
)
from sanas.supernet import builtin_graph

YES, NO, UP, STOP = (LABEL_INDEX[w] for w in ("yes", "no", "up", "stop"))


# ----------------------------------------------------------------- frame metrics

def test_frame_metrics_all_correct():
    preds = np.eye(4)[[0, 1, 2, 3, 1]]
    assert frame_metrics(preds, [0, 1, 2, 3, 1], [7.0] * 5) == (1.0, 7.0)


def test_frame_metrics_rejects_empty_and_mismatch():
    with pytest.raises(InputError):
        frame_metrics(np.zeros((0, 3)), [], [])
    with pytest.raises(InputError):
        frame_metrics(np.zeros((3, 3)), [0, 1], [1, 2, 3])


def test_frame_metrics_recount():
    rng = np.random.default_rng(0)
    preds = rng.standard_normal((100, 12))
    labels = rng.integers(0, 12, 100)
    costs = rng.integers(1000, 5000, 100)
    hits = 0
    for row, lab in zip(preds.tolist(), labels.tolist()):
        hits += max(range(12), key=lambda k: row[k]) == lab
    acc, mean = frame_metrics(preds, labels, costs)
    assert acc == hits / 100
    assert mean == pytest.approx(sum(costs.tolist()) / 100, rel=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(0.01, 100), st.floats(-50, 50))
def test_accuracy_invariant_under_monotone_rescaling(seed, scale, shift):
    rng = np.random.default_rng(seed)
    preds = rng.standard_normal((30, 5))
    labels = rng.integers(0, 5, 30)
    costs = np.ones(30)
    base = frame_metrics(preds, labels, costs)[0]
    assert frame_metrics(scale * preds + shift, labels, costs)[0] == base
    assert frame_metrics(np.tanh(preds), labels, costs)[0] == base


# ----------------------------------------------------------------- pareto

def test_pareto_example():
    pts = [ParetoPoint(0.9, 10, "a"), ParetoPoint(0.8, 5, "b"), ParetoPoint(0.85, 12, "c")]
    assert [p.model_id for p in pareto_front(pts)] == ["b", "a"]


def test_pareto_single_and_duplicates():
    assert pareto_front([ParetoPoint(0.5, 3, "x")]) == [ParetoPoint(0.5, 3, "x")]
    assert pareto_front([ParetoPoint(0.5, 3, "z"), ParetoPoint(0.5, 3, "m")]) == [ParetoPoint(0.5, 3, "m")]


def test_pareto_rejects_nan():
    with pytest.raises(InputError):
        ParetoPoint(float("nan"), 1, "a")


def _brute_front(points):
    keep = [p for p in points if not any(dominates(q, p) for q in points)]
    first = {}
    for p in sorted(keep, key=lambda p: p.model_id):
        first.setdefault((p.accuracy, p.mean_flops), p)
    return sorted(first.values(), key=lambda p: p.mean_flops)


@pytest.mark.parametrize("seed", range(5))
def test_pareto_matches_brute_force_on_1000_points(seed):
    rng = np.random.default_rng(seed)
    # coarse grids force ties in both coordinates and exact duplicates
    acc = rng.integers(0, 60, 1000) / 60
    flops = rng.integers(0, 80, 1000) * 1000.0
    pts = [ParetoPoint(float(a), float(f), f"m{i:04d}") for i, (a, f) in enumerate(zip(acc, flops))]
    front = pareto_front(pts)
    assert front == _brute_front(pts)
    assert not any(dominates(q, p) for p in front for q in front)


def test_points_csv_roundtrip(tmp_path):
    pts = [ParetoPoint(0.1 + k / 3, 1e5 / 7 * k, f"r{k}") for k in range(5)]
    write_points_csv(tmp_path / "p.csv", pts)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "model_id,accuracy,mean_flops"
    assert read_points_csv(tmp_path / "p.csv") == pts


# ----------------------------------------------------------------- streaming decode

def _posteriors(n, spikes, score=0.9, classes=12):
    post = np.zeros((n, classes))
    post[:, BG_NOISE_ID] = 1.0
    for label, start, length in spikes:
        post[start:start + length] = 0.0
        post[start:start + length, label] = score
        post[start:start + length, BG_NOISE_ID] = 1 - score
    return post


def test_decode_background_only():
    assert streaming_decode(_posteriors(50, [])) == []


def test_decode_one_spike_one_detection():
    # trailing mean over 4 frames: 0.225, 0.45, 0.675 at frame 7 -> centre 7*0.2 + 0.5
    dets = streaming_decode(_posteriors(30, [(YES, 5, 5)]))
    assert dets == [Detection(1.9, YES, pytest.approx(0.675))]


def test_decode_two_spikes_three_seconds_apart():
    dets = streaming_decode(_posteriors(40, [(YES, 5, 5), (NO, 20, 5)]))
    assert [(d.time, d.label) for d in dets] == [(1.9, YES), (4.9, NO)]


def test_decode_spike_at_stream_start_uses_shorter_window():
    dets = streaming_decode(_posteriors(10, [(UP, 0, 2)]))
    assert [(d.time, d.label) for d in dets] == [(0.5, UP)]


def test_decode_offset_shifts_times():
    a = streaming_decode(_posteriors(30, [(YES, 5, 5)]))
    b = streaming_decode(_posteriors(30, [(YES, 5, 5)]), offset=10.0)
    assert [d.time for d in b] == [d.time + 10.0 for d in a]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_decode_respects_suppression(seed):
    post = np.random.default_rng(seed).dirichlet(np.full(12, 0.2), size=80)
    params = StreamingParams(threshold=0.2)
    times = [d.time for d in streaming_decode(post, params)]
    assert all(b - a >= params.suppression - 1e-9 for a, b in zip(times, times[1:]))


# ----------------------------------------------------------------- streaming metrics

def _w(label, centre, half=0.4):
    return GroundTruthWord(label, centre - half, centre + half)


def _d(t, label):
    return Detection(t, label, 1.0)


def _counts(r):
    return (r.matched, r.correct, r.wrong, r.false_alarms)


# Hand-aligned cases: (words, detections, (matched, correct, wrong, false alarms)).
HAND_CASES = [
    # one right, one wrong label, one far from any word
    ([_w(YES, 1.0), _w(NO, 4.0)], [_d(1.1, YES), _d(4.2, UP), _d(7.0, STOP)], (2, 1, 1, 1)),
    # nothing detected
    ([_w(YES, 1.0), _w(NO, 4.0)], [], (0, 0, 0, 0)),
    # perfect detections at the centres
    ([_w(YES, 1.0), _w(NO, 4.0)], [_d(1.0, YES), _d(4.0, NO)], (2, 2, 0, 0)),
    # a repeat on an already matched word is a false alarm
    ([_w(YES, 1.0)], [_d(1.0, YES), _d(1.3, YES)], (1, 1, 0, 1)),
    # equidistant from two centres: the earlier word wins; the second detection takes the later one
    ([_w(YES, 1.0, 0.3), _w(NO, 2.0, 0.3)], [_d(1.5, NO), _d(2.6, NO)], (2, 1, 1, 0)),
    # tolerance is inclusive
    ([_w(YES, 1.0)], [_d(1.75, YES)], (1, 1, 0, 0)),
    ([_w(YES, 1.0)], [_d(1.76, YES)], (0, 0, 0, 1)),
    # greedy: the first detection steals the nearer later word, the second finds nothing in range
    ([_w(YES, 1.0, 0.3), _w(NO, 2.0, 0.3)], [_d(1.6, NO), _d(2.3, NO)], (1, 1, 0, 1)),
    # detections are aligned in time order, whatever order they are given in
    ([_w(YES, 1.0), _w(NO, 4.0)], [_d(4.1, NO), _d(0.9, YES)], (2, 2, 0, 0)),
]


@pytest.mark.parametrize("words,dets,expect", HAND_CASES)
def test_streaming_metrics_hand_cases(words, dets, expect):
    r = streaming_metrics(dets, words, 0.75)
    assert _counts(r) == expect
    assert r.matched_pct == r.correct_pct + r.wrong_pct
    assert r.matched + r.false_alarms == r.detections == len(dets)


def test_streaming_metrics_percentages_example():
    words, dets, _ = HAND_CASES[0]
    r = streaming_metrics(dets, words, 0.75)
    assert (r.matched_pct, r.correct_pct, r.wrong_pct) == (100.0, 50.0, 50.0)
    assert r.fa_pct == pytest.approx(100 / 3)


def test_streaming_metrics_empty_is_zero():
    r = streaming_metrics([], [_w(YES, 1.0)], 0.75)
    assert (r.matched_pct, r.fa_pct) == (0.0, 0.0)
    r = streaming_metrics([], [], 0.75)
    assert (r.matched_pct, r.fa_pct) == (0.0, 0.0)


def test_streaming_metrics_rejects_overlap():
    with pytest.raises(InputError):
        streaming_metrics([], [GroundTruthWord(YES, 0.0, 1.0), GroundTruthWord(NO, 0.5, 1.5)], 0.75)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_streaming_metrics_conservation(seed):
    rng = np.random.default_rng(seed)
    centres = np.cumsum(rng.uniform(1.0, 3.0, rng.integers(0, 8)))
    words = [_w(int(rng.integers(0, 10)), float(c)) for c in centres]
    dets = [_d(float(t), int(rng.integers(0, 10))) for t in rng.uniform(0, 25, rng.integers(0, 10))]
    r = streaming_metrics(dets, words, 0.75)
    assert r.matched == r.correct + r.wrong <= min(len(words), len(dets))
    assert r.matched + r.false_alarms == len(dets)


def test_streaming_params_validation():
    with pytest.raises(InputError):
        StreamingParams(threshold=0.0)


# ----------------------------------------------------------------- checkpoint evaluation

def _restored(spec, store_fn):
    mc = ModelConfig(d_z=4, d_phi=4)
    model = SanasModel(spec, mc)
    store = store_fn(model.init_params(np.random.default_rng(0)))
    ck = Checkpoint(spec.to_json(), {"model": asdict(mc)}, store)
    return restore(ck, spec), model


def _zero(store):
    for n in store.names():
        store.params[n][...] = 0.0
    return store


def test_untrained_model_runs_full_graph(toy_data):
    spec = builtin_graph("toy")
    restored, model = _restored(spec, _zero)
    bundle = evaluate_checkpoint(restored, toy_data["val"][:5])
    assert bundle["frames"]["mean_flops"] == model.cost_model.full_cost
    assert set(bundle["frames"]["mean_flops_per_label"].values()) == {model.cost_model.full_cost}


def test_evaluation_is_deterministic(toy_data):
    spec = builtin_graph("toy")
    restored, _ = _restored(spec, lambda s: s)
    a = evaluate_checkpoint(restored, toy_data["val"][:5])
    b = evaluate_checkpoint(restored, toy_data["val"][:5])
    assert a == b
    s1 = evaluate_checkpoint(restored, toy_data["val"][:5], mode="sample", seed=3)
    s2 = evaluate_checkpoint(restored, toy_data["val"][:5], mode="sample", seed=3)
    assert s1 == s2


def test_stream_report_is_attached(toy_data):
    spec = builtin_graph("toy")
    restored, _ = _restored(spec, lambda s: s)
    frames = toy_data["val"][0]
    bundle = evaluate_checkpoint(restored, None, stream=(frames, [_w(YES, 1.5)]))
    rep = bundle["stream"]["report"]
    assert rep["words"] == 1 and rep["params"] == asdict(StreamingParams())


def test_checkpoint_graph_mismatch_is_an_error():
    spec = builtin_graph("toy")
    mc = ModelConfig(d_z=4, d_phi=4)
    ck = Checkpoint(spec.to_json(), {"model": asdict(mc)},
                    SanasModel(spec, mc).init_params(np.random.default_rng(0)))
    with pytest.raises(FormatError):
        restore(ck, builtin_graph("kws"))
