"""Frame metrics, Pareto selection and the streaming keyword-spotting test."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audio.labels import BG_NOISE_ID, LABELS, UNKNOWN_ID
from .errors import InputError

# --------------------------------------------------------------------- frames


@dataclass
class FrameStats:
    """Running totals over evaluated frames. Costs are summed as integers."""

    n: int = 0
    correct: int = 0
    cost_sum: int = 0
    delta_sum: float = 0.0
    n_delta: int = 0
    label_cost: dict[int, int] = field(default_factory=dict)
    label_count: dict[int, int] = field(default_factory=dict)

    def add_outputs(self, logits: Sequence[np.ndarray], labels: Sequence[int | None],
                    costs: Sequence[int], deltas: Sequence[float] = ()) -> None:
        for scores, label, cost in zip(logits, labels, costs):
            self.n += 1
            self.cost_sum += int(cost)
            if label is not None:
                self.correct += int(int(np.argmax(scores)) == label)
                self.label_cost[label] = self.label_cost.get(label, 0) + int(cost)
                self.label_count[label] = self.label_count.get(label, 0) + 1
        for d in deltas:
            self.delta_sum += float(d)
            self.n_delta += 1

    def merge(self, other: FrameStats) -> None:
        self.n += other.n
        self.correct += other.correct
        self.cost_sum += other.cost_sum
        self.delta_sum += other.delta_sum
        self.n_delta += other.n_delta
        for k, v in other.label_cost.items():
            self.label_cost[k] = self.label_cost.get(k, 0) + v
            self.label_count[k] = self.label_count.get(k, 0) + other.label_count[k]

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    @property
    def mean_flops(self) -> float:
        return self.cost_sum / self.n if self.n else 0.0

    @property
    def mean_loss(self) -> float:
        return self.delta_sum / self.n_delta if self.n_delta else 0.0

    def mean_flops_per_label(self) -> dict[str, float]:
        return {LABELS[k]: self.label_cost[k] / self.label_count[k] for k in sorted(self.label_cost)}


def frame_stats_record(stats: FrameStats, epoch: int, split: str, baseline: float) -> dict:
    return {
        "epoch": epoch,
        "split": split,
        "accuracy": stats.accuracy,
        "mean_flops": stats.mean_flops,
        "mean_flops_per_label": stats.mean_flops_per_label(),
        "loss": stats.mean_loss,
        "baseline": baseline,
    }


def frame_metrics(predictions, labels: Sequence[int], costs: Sequence[float]) -> tuple[float, float]:
    """(fraction of frames whose argmax equals the label, mean cost per frame)."""
    preds = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    costs = np.asarray(costs, dtype=np.float64)
    if preds.ndim != 2 or len(preds) != len(labels) or len(labels) != len(costs):
        raise InputError(f"predictions {preds.shape}, labels {labels.shape} and costs {costs.shape} disagree")
    if len(labels) == 0:
        raise InputError("no frames to score")
    acc = float(np.mean(np.argmax(preds, axis=1) == labels))
    return acc, float(np.mean(costs))


def evaluate_sequences(model, store, sequences: Sequence, mode: str = "argmax", arch=None,
                       seed: int = 0) -> FrameStats:
    """Frame statistics of ``model`` over labelled sequences, without gradients.

    ``mode`` is ``argmax`` (inference), ``sample`` (one seeded draw per
    sequence) or ``static`` (fixed ``arch`` without the controller).
    """
    from .controller import run_sequence
    from .training import evaluation_rng, run_static

    theta = model.theta(store, requires_grad=False)
    stats = FrameStats()
    for i, frames in enumerate(sequences):
        if mode == "static":
            logits, trace = run_static(model, frames, theta, arch)
            scores = [l.data for l in logits]
        else:
            rng = evaluation_rng(seed, i) if mode == "sample" else None
            outs, trace = run_sequence(model, frames, theta, mode, rng)
            scores = [o.logits.data for o in outs]
        stats.add_outputs(scores, trace.labels, trace.cost, trace.delta_values())
    return stats


# --------------------------------------------------------------------- pareto


@dataclass(frozen=True)
class ParetoPoint:
    accuracy: float
    mean_flops: float
    model_id: str

    def __post_init__(self):
        if not (math.isfinite(self.accuracy) and math.isfinite(self.mean_flops)):
            raise InputError(f"non-finite Pareto point {self}")


def dominates(q: ParetoPoint, p: ParetoPoint) -> bool:
    return (q.accuracy >= p.accuracy and q.mean_flops <= p.mean_flops
            and (q.accuracy > p.accuracy or q.mean_flops < p.mean_flops))


def pareto_front(points: Iterable[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points (max accuracy, min FLOPs), sorted by cost.

    Exact duplicates survive once, as the smallest model id.
    """
    ordered = sorted(points, key=lambda p: (p.mean_flops, -p.accuracy, p.model_id))
    front: list[ParetoPoint] = []
    best = -math.inf
    for p in ordered:
        if p.accuracy > best:
            front.append(p)
            best = p.accuracy
    return front


def write_points_csv(path: str | Path, points: Iterable[ParetoPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "accuracy", "mean_flops"])
        for p in points:
            w.writerow([p.model_id, repr(float(p.accuracy)), repr(float(p.mean_flops))])


def read_points_csv(path: str | Path) -> list[ParetoPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ParetoPoint(float(r["accuracy"]), float(r["mean_flops"]), r["model_id"]) for r in rows]


# ------------------------------------------------------------------ streaming


@dataclass(frozen=True)
class StreamingParams:
    smoothing_window: float = 0.8
    threshold: float = 0.5
    suppression: float = 1.5
    match_tolerance: float = 0.75

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise InputError(f"streaming parameter {k} must be positive, got {v}")


@dataclass(frozen=True)
class Detection:
    time: float
    label: int
    score: float


@dataclass(frozen=True)
class GroundTruthWord:
    label: int
    start: float
    end: float

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)


def streaming_decode(posteriors, params: StreamingParams = StreamingParams(), hop: float = 0.2,
                     window: float = 1.0, offset: float = 0.0) -> list[Detection]:
    """Smooth per-frame posteriors and emit de-duplicated keyword detections.

    Frame i covers ``[offset + i*hop, offset + i*hop + window]``. The smoothed
    score at frame i averages the frames whose start lies within the trailing
    ``smoothing_window`` seconds (fewer at the beginning of the stream). A
    detection of the best class other than bg-noise/unknown is emitted at the
    window centre when its smoothed score reaches ``threshold`` and nothing was
    emitted during the previous ``suppression`` seconds.
    """
    post = np.asarray(posteriors, dtype=np.float64)
    if post.ndim != 2:
        raise InputError(f"posteriors must be frames x classes, got {post.shape}")
    n_avg = max(1, int(math.ceil(params.smoothing_window / hop - 1e-9)))
    keyword = np.ones(post.shape[1], dtype=bool)
    keyword[[c for c in (BG_NOISE_ID, UNKNOWN_ID) if c < post.shape[1]]] = False
    kw_ids = np.flatnonzero(keyword)
    out: list[Detection] = []
    last = -math.inf
    csum = np.vstack([np.zeros(post.shape[1]), np.cumsum(post, axis=0)])
    for i in range(len(post)):
        lo = max(0, i - n_avg + 1)
        smooth = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
        j = kw_ids[int(np.argmax(smooth[kw_ids]))]
        t = offset + i * hop + window / 2.0
        if smooth[j] >= params.threshold and t - last >= params.suppression - 1e-9:
            out.append(Detection(round(t, 9), int(j), float(smooth[j])))
            last = t
    return out


@dataclass
class StreamingReport:
    words: int
    detections: int
    matched: int
    correct: int
    wrong: int
    false_alarms: int
    matched_pct: float
    correct_pct: float
    wrong_pct: float
    fa_pct: float
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def streaming_metrics(detections: Sequence[Detection], words: Sequence[GroundTruthWord],
                      t_tol: float = 0.75, params: StreamingParams | None = None) -> StreamingReport:
    """Greedy one-to-one alignment of detections to words, in time order.

    Each detection takes the nearest still-unmatched word whose centre is
    within ``t_tol`` seconds (the earlier word on ties). Matched/correct/wrong
    are percentages of the word count, FA a percentage of the detections;
    0/0 is reported as 0.
    """
    gt = sorted(words, key=lambda w: (w.start, w.end))
    for a, b in zip(gt, gt[1:]):
        if b.start < a.end:
            raise InputError(f"ground-truth spans overlap: {a} and {b}")
    taken = [False] * len(gt)
    correct = wrong = fa = 0
    for d in sorted(detections, key=lambda d: d.time):
        best, best_dist = None, math.inf
        for k, w in enumerate(gt):
            if taken[k]:
                continue
            dist = abs(d.time - w.center)
            if dist <= t_tol + 1e-9 and dist < best_dist:
                best, best_dist = k, dist
        if best is None:
            fa += 1
            continue
        taken[best] = True
        if gt[best].label == d.label:
            correct += 1
        else:
            wrong += 1
    n_words, n_det = len(gt), len(detections)
    c_pct, w_pct = _pct(correct, n_words), _pct(wrong, n_words)
    return StreamingReport(
        words=n_words, detections=n_det, matched=correct + wrong, correct=correct, wrong=wrong,
        false_alarms=fa, matched_pct=c_pct + w_pct, correct_pct=c_pct, wrong_pct=w_pct,
        fa_pct=_pct(fa, n_det), params=asdict(params) if params else {"match_tolerance": t_tol},
    )


# ----------------------------------------------------------------- checkpoint


def stream_posteriors(model, store, frames: Sequence, mode: str = "argmax", arch=None,
                      seed: int = 0) -> tuple[np.ndarray, FrameStats]:
    """Softmax posteriors for every frame of one continuous stream."""
    from .controller import run_sequence
    from .numcore import softmax
    from .training import evaluation_rng, run_static

    theta = model.theta(store, requires_grad=False)
    if mode == "static":
        logits, trace = run_static(model, frames, theta, arch)
        scores = [l.data for l in logits]
    else:
        outs, trace = run_sequence(model, frames, theta, mode, evaluation_rng(seed, 0) if mode == "sample" else None)
        scores = [o.logits.data for o in outs]
    stats = FrameStats()
    stats.add_outputs(scores, trace.labels, trace.cost, trace.delta_values())
    return np.stack([softmax(s) for s in scores]), stats


def evaluate_checkpoint(restored, sequences: Sequence | None, mode: str = "argmax",
                        stream: tuple[Sequence, Sequence[GroundTruthWord]] | None = None,
                        params: StreamingParams | None = None, seed: int = 0) -> dict:
    """Metrics bundle of a restored checkpoint.

    Statically trained checkpoints are always run on their fixed sub-graph.
    ``stream`` is ``(frames, words)`` of one continuous recording; it adds a
    streaming report on top of its frame metrics.
    """
    model, store, arch = restored.model, restored.store, restored.arch
    if arch is not None:
        mode = "static"
    params = params or StreamingParams()
    bundle: dict = {
        "graph": model.spec.name,
        "config_hash": restored.checkpoint.config_hash,
        "epoch": restored.checkpoint.epoch,
        "mode": mode,
    }
    if sequences:
        stats = evaluate_sequences(model, store, sequences, mode=mode, arch=arch, seed=seed)
        bundle["frames"] = frame_stats_record(stats, restored.checkpoint.epoch, "eval", restored.checkpoint.baseline)
        bundle["frames"]["count"] = stats.n
        del bundle["frames"]["epoch"], bundle["frames"]["split"], bundle["frames"]["baseline"]
    if stream is not None:
        frames, words = stream
        post, stats = stream_posteriors(model, store, frames, mode, arch, seed)
        offset = float(getattr(frames[0], "start", 0.0))
        dets = streaming_decode(post, params, offset=offset)
        report = streaming_metrics(dets, words, params.match_tolerance, params)
        bundle["stream"] = {
            "report": report.to_dict(),
            "detections": [{"time": d.time, "label": LABELS[d.label], "score": d.score} for d in dets],
            "frame_accuracy": stats.accuracy if stats.label_count else None,
            "mean_flops": stats.mean_flops,
            "mean_flops_per_label": stats.mean_flops_per_label(),
        }
    return bundle
