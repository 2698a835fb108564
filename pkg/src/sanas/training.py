"""Budgeted objective, score-function gradients and the training loops."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .controller import EpisodeTrace, SanasModel, run_sequence
from .errors import ConfigurationError, NonFiniteError, UsageError
from .eval import FrameStats, evaluate_sequences, frame_stats_record
from .numcore import Gradients, ParamStore, Tensor, adam_step, add, collect_grads, scale, softmax_xent
from .supernet import ArchSample, active_subgraph, evaluate

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    lam: float = 0.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 8
    seed: int = 0
    baseline_decay: float = 0.9
    grad_clip: float | None = None
    threads: int = 1

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ConfigurationError(f"λ must be a finite value >= 0, got {self.lam}")
        if not 1e-5 <= self.lr <= 1e-3:
            raise ConfigurationError(f"lr must lie in [1e-5, 1e-3], got {self.lr}")
        if not 0.0 < self.baseline_decay < 1.0:
            raise ConfigurationError(f"baseline decay must lie in (0, 1), got {self.baseline_decay}")
        if self.epochs < 0 or self.batch_size < 1 or self.threads < 1:
            raise ConfigurationError("epochs >= 0, batch_size >= 1 and threads >= 1 are required")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigurationError("grad_clip must be positive when set")

    @classmethod
    def from_dict(cls, d: Mapping) -> TrainingConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def lambda_grid(full_cost: float) -> list[float]:
    """[10^-(m+1), 10^-m, 10^-(m-1)] with m the order of magnitude of ``full_cost``."""
    m = int(np.floor(np.log10(full_cost)))
    return [10.0 ** -(m + 1), 10.0 ** -m, 10.0 ** -(m - 1)]


@dataclass
class Baseline:
    b: float = 0.0


def baseline_update(b: float, ret: float, rho: float) -> float:
    return rho * b + (1.0 - rho) * ret


def episode_return(trace: EpisodeTrace, lam: float) -> float:
    """Σ_t Δ_t + λ Σ_t C(A_t)."""
    return float(sum(d.item() for d in trace.delta)) + lam * float(sum(trace.cost))


def _sum(ts: Sequence[Tensor]) -> Tensor:
    return ts[0] if len(ts) == 1 else add(*ts)


def reinforce_backward(trace: EpisodeTrace, lam: float, baseline: float,
                       theta: Mapping[str, Tensor]) -> Gradients:
    """(Σ_t ∇log P_t)(L - b) + Σ_t ∇Δ_t, with L - b held constant."""
    if trace.mode == "argmax":
        raise UsageError("reinforce_backward needs a sampled (or fixed) trace, not an argmax one")
    if not trace.delta:
        raise UsageError("trace carries no labels, nothing to differentiate")
    for t in theta.values():
        t.zero_grad()
    advantage = episode_return(trace, lam) - baseline
    surrogate = add(_sum(trace.delta), scale(_sum(trace.logp), advantage))
    surrogate.backward()
    return collect_grads(theta)


def pathwise_backward(trace: EpisodeTrace, theta: Mapping[str, Tensor]) -> Gradients:
    """Σ_t ∇Δ_t alone; what a static network is trained with."""
    for t in theta.values():
        t.zero_grad()
    _sum(trace.delta).backward()
    return collect_grads(theta)


def run_static(model: SanasModel, frames: Sequence, theta: Mapping[str, Tensor],
               arch: ArchSample) -> tuple[list[Tensor], EpisodeTrace]:
    """A fixed sub-graph applied frame by frame, no controller involved.

    Cost per frame is the sum of the active edges' FLOPs only.
    """
    active = active_subgraph(model.spec, arch)
    cost = int(sum(c for c, on in zip(model.cost_model.edge_costs, active) if on))
    logits_all, deltas, labels = [], [], []
    for fr in frames:
        x = np.asarray(getattr(fr, "features", fr), dtype=np.float64).reshape(model.input_shape)
        logits, _ = evaluate(model.spec, active, Tensor(x), theta)
        logits_all.append(logits)
        label = getattr(fr, "label", None)
        labels.append(label)
        if label is not None:
            deltas.append(softmax_xent(logits, label))
    # a fixed architecture has probability one
    logp = [Tensor(np.zeros(())) for _ in logits_all]
    return logits_all, EpisodeTrace(logp, deltas, [cost] * len(logits_all), "static", labels)


class NumericAbort(NonFiniteError):
    """Training hit a non-finite loss or gradient; ``store`` is the last good state."""

    def __init__(self, msg: str, store: ParamStore, epoch: int):
        super().__init__(msg)
        self.store = store
        self.epoch = epoch


@dataclass
class TrainResult:
    store: ParamStore
    records: list[dict] = field(default_factory=list)
    baseline: float = 0.0
    rng_state: dict | None = None


def pairwise_merge(parts: list[Gradients]) -> Gradients:
    """Tree reduction over index-ordered parts; fixed order, fixed result."""
    if not parts:
        return Gradients()
    level = list(parts)
    while len(level) > 1:
        nxt = [Gradients.merge((level[i], level[i + 1])) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return Gradients(level[0])


def _clip(grads: Gradients, max_norm: float | None) -> Gradients:
    if max_norm is None:
        return grads
    norm = grads.global_norm()
    return grads.scaled(max_norm / norm) if norm > max_norm else grads


def _check_grads(grads: Gradients) -> None:
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {name}")


def sequence_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Generator of training sequence ``index`` in ``epoch``."""
    return np.random.default_rng([seed, 0, epoch, index])


def evaluation_rng(seed: int, index: int) -> np.random.Generator:
    """Generator of sequence ``index`` when evaluating in sample mode."""
    return np.random.default_rng([seed, 1, index])


@dataclass
class _SeqResult:
    grads: Gradients
    ret: float
    stats: FrameStats


def _sanas_sequence(model: SanasModel, store: ParamStore, frames, cfg: TrainingConfig, baseline: float,
                    rng: np.random.Generator) -> _SeqResult:
    theta = model.theta(store, requires_grad=True)
    outputs, trace = run_sequence(model, frames, theta, "sample", rng)
    grads = reinforce_backward(trace, cfg.lam, baseline, theta)
    stats = FrameStats()
    stats.add_outputs([o.logits.data for o in outputs], trace.labels, trace.cost, trace.delta_values())
    return _SeqResult(grads, episode_return(trace, cfg.lam), stats)


def _static_sequence(model: SanasModel, store: ParamStore, frames, arch: ArchSample) -> _SeqResult:
    theta = model.theta(store, requires_grad=True)
    logits, trace = run_static(model, frames, theta, arch)
    grads = pathwise_backward(trace, theta)
    stats = FrameStats()
    stats.add_outputs([l.data for l in logits], trace.labels, trace.cost, trace.delta_values())
    return _SeqResult(grads, episode_return(trace, 0.0), stats)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _write_records(path: Path | None, records: list[dict]) -> None:
    if path is None:
        return
    with open(path, "a") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _fit(model: SanasModel, train_set: Sequence, val_set: Sequence, cfg: TrainingConfig,
         per_sequence: Callable, val_mode: str, val_arch: ArchSample | None,
         store: ParamStore | None, log_path: str | Path | None,
         on_epoch: Callable[[int, TrainResult], None] | None, start_epoch: int = 0,
         baseline: float = 0.0, rng_state: dict | None = None) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    if store is None:
        store = model.init_params(np.random.default_rng([cfg.seed, 0x5EED]))
    if rng_state is not None:
        rng.bit_generator.state = rng_state
    result = TrainResult(store, [], baseline, rng.bit_generator.state)
    log_path = Path(log_path) if log_path is not None else None
    n = len(train_set)
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_stats = FrameStats()
        for start in range(0, n, cfg.batch_size):
            idx = [int(i) for i in order[start:start + cfg.batch_size]]
            b0 = result.baseline
            try:
                results = _map(lambda i: per_sequence(store, train_set[i], b0, epoch, i), idx, cfg.threads)
                grads = _clip(pairwise_merge([r.grads for r in results]).scaled(1.0 / len(idx)), cfg.grad_clip)
                if not all(math.isfinite(r.ret) for r in results):
                    raise NonFiniteError("non-finite episode return")
                _check_grads(grads)
            except NonFiniteError as err:
                raise NumericAbort(f"epoch {epoch}: {err}", store, epoch - 1) from err
            adam_step(store, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            for r in results:
                result.baseline = baseline_update(result.baseline, r.ret, cfg.baseline_decay)
                epoch_stats.merge(r.stats)
        result.rng_state = rng.bit_generator.state
        recs = [frame_stats_record(epoch_stats, epoch, "train", result.baseline)]
        if val_set:
            val = evaluate_sequences(model, store, val_set, mode=val_mode, arch=val_arch)
            recs.append(frame_stats_record(val, epoch, "val", result.baseline))
        result.records.extend(recs)
        _write_records(log_path, recs)
        log.info("epoch %d: %s", epoch, " | ".join(
            f"{r['split']} acc={r['accuracy']:.4f} flops={r['mean_flops']:.0f}" for r in recs))
        if on_epoch is not None:
            on_epoch(epoch, result)
    return result


def train(model: SanasModel, train_set: Sequence, val_set: Sequence, cfg: TrainingConfig,
          store: ParamStore | None = None, log_path: str | Path | None = None,
          on_epoch: Callable[[int, TrainResult], None] | None = None, **resume) -> TrainResult:
    """Adaptive training with the score-function estimator.

    Each batch: every sequence is run in sample mode with its own generator
    (derived from seed, epoch and dataset index), gradients are merged in
    index order, one ADAM step is taken, then the baseline absorbs the batch's
    returns in index order.
    """
    def per_sequence(store, frames, b0, epoch, i):
        return _sanas_sequence(model, store, frames, cfg, b0, sequence_rng(cfg.seed, epoch, i))

    return _fit(model, train_set, val_set, cfg, per_sequence, "argmax", None, store, log_path,
                on_epoch, **resume)


def train_static(model: SanasModel, train_set: Sequence, val_set: Sequence, cfg: TrainingConfig,
                 arch: ArchSample, store: ParamStore | None = None, log_path: str | Path | None = None,
                 on_epoch: Callable[[int, TrainResult], None] | None = None, **resume) -> TrainResult:
    """Plain backprop through the fixed sub-graph ``arch``; λ is never read."""
    def per_sequence(store, frames, b0, epoch, i):
        return _static_sequence(model, store, frames, arch)

    return _fit(model, train_set, val_set, cfg, per_sequence, "static", arch, store, log_path,
                on_epoch, **resume)
