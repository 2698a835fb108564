"""The recurrent cell that picks a sub-graph per timestep.

At step t the controller turns its state z_t into per-edge probabilities
Γ_t, picks H_t (sampled, most probable, or fixed), evaluates that sub-graph
on x_t and feeds the resulting Φ_t through a GRU to get z_{t+1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, InputError
from .numcore import GRU_PARAM_NAMES, ParamStore, Tensor, gru_cell, linear, sigmoid, softmax_xent
from .supernet import (
    ArchSample,
    CostModel,
    SuperNetworkSpec,
    active_subgraph,
    architecture_cost,
    evaluate,
    init_edge_params,
    log_prob,
    most_probable_architecture,
    sample_architecture,
)

MODES = ("sample", "argmax", "fixed")
CTRL_W, CTRL_B = "ctrl.W", "ctrl.b"


def gru_param_name(p: str) -> str:
    return f"gru.{p}"


@dataclass(frozen=True)
class ModelConfig:
    d_z: int = 64
    d_phi: int = 64
    gamma_bias_init: float = 0.0
    charge_inactive: bool = False
    fixed_phi_projection: bool = False

    def __post_init__(self):
        if self.d_z < 1 or self.d_phi < 1:
            raise ConfigurationError("d_z and d_phi must be >= 1")


@dataclass
class SanasModel:
    """A super-network plus the controller dimensions and its cost table."""

    spec: SuperNetworkSpec
    config: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        self.cost_model = CostModel.build(self.spec, self.config.d_z, self.config.d_phi,
                                          charge_inactive=self.config.charge_inactive)
        self.input_shape = self.spec.layer(self.spec.input).shape

    @property
    def n_edges(self) -> int:
        return self.spec.n_edges

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def init_params(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        init_edge_params(self.spec, store, rng, self.config.d_phi)
        d_z, d_phi, n_e = self.config.d_z, self.config.d_phi, self.n_edges
        lim = 1.0 / np.sqrt(d_z)
        store.add(CTRL_W, rng.uniform(-lim, lim, size=(n_e, d_z)))
        store.add(CTRL_B, np.full(n_e, float(self.config.gamma_bias_init)))
        for gate in "arc":
            store.add(gru_param_name("W_" + gate), rng.uniform(-lim, lim, size=(d_z, d_phi)))
            store.add(gru_param_name("U_" + gate), rng.uniform(-lim, lim, size=(d_z, d_z)))
            store.add(gru_param_name("b_" + gate), np.zeros(d_z))
        return store

    def frozen_params(self) -> set[str]:
        from .supernet import PHI_B, PHI_W
        return {PHI_W, PHI_B} if self.config.fixed_phi_projection else set()

    def theta(self, store: ParamStore, requires_grad: bool = True) -> dict[str, Tensor]:
        frozen = self.frozen_params()
        return {n: Tensor(p, requires_grad=requires_grad and n not in frozen, name=n)
                for n, p in store.params.items()}


@dataclass
class StepOutput:
    logits: Tensor
    gamma: Tensor
    arch: ArchSample
    active: np.ndarray
    logp: Tensor
    cost: int
    phi: Tensor
    z_next: Tensor


@dataclass
class EpisodeTrace:
    """Per-timestep (log P(A_t|z_t), Δ_t, C(A_t)) of one sequence."""

    logp: list[Tensor]
    delta: list[Tensor]
    cost: list[int]
    mode: str
    labels: list[int | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cost)

    def __post_init__(self):
        if self.delta and not (len(self.logp) == len(self.delta) == len(self.cost)):
            raise ConfigurationError("trace lists must share the sequence length")

    def delta_values(self) -> np.ndarray:
        return np.array([d.item() for d in self.delta])

    def logp_values(self) -> np.ndarray:
        return np.array([lp.item() for lp in self.logp])


def init_state(d_z: int) -> Tensor:
    if d_z < 1:
        raise ConfigurationError("d_z must be >= 1")
    return Tensor(np.zeros(d_z))


def gamma_from_state(z: Tensor, theta: Mapping[str, Tensor]) -> Tensor:
    """Γ = σ(W_h z + b_h), one probability per edge of E."""
    return sigmoid(linear(z, theta[CTRL_W], theta[CTRL_B]))


def _as_input(model: SanasModel, x) -> Tensor:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    shape = model.input_shape
    if arr.shape != shape:
        if arr.size != int(np.prod(shape)):
            raise InputError(f"input of shape {arr.shape} does not fit input layer {shape}")
        arr = arr.reshape(shape)
    return x if isinstance(x, Tensor) and x.shape == shape else Tensor(arr)


def sanas_step(model: SanasModel, z: Tensor, x, theta: Mapping[str, Tensor], mode: str = "argmax",
               rng: np.random.Generator | None = None, arch: ArchSample | None = None) -> StepOutput:
    """One timestep: Γ from z, pick H, evaluate, cost, log-prob, GRU update."""
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    x_t = _as_input(model, x)
    gamma = gamma_from_state(z, theta)
    if mode == "sample":
        if rng is None:
            raise ConfigurationError("sample mode needs a seeded generator")
        H = sample_architecture(gamma.data, rng)
    elif mode == "argmax":
        H = most_probable_architecture(gamma.data)
    else:
        if arch is None:
            raise ConfigurationError("fixed mode needs an architecture")
        H = arch
    active = active_subgraph(model.spec, H)
    logits, phi = evaluate(model.spec, active, x_t, theta)
    cost = architecture_cost(model.spec, H, model.cost_model, active)
    lp = log_prob(gamma, H)
    gru_p = {n: theta[gru_param_name(n)] for n in GRU_PARAM_NAMES}
    z_next = gru_cell(z, phi, gru_p)
    return StepOutput(logits, gamma, H, active, lp, cost, phi, z_next)


def run_sequence(model: SanasModel, frames: Sequence, theta: Mapping[str, Tensor], mode: str = "argmax",
                 rng: np.random.Generator | None = None,
                 arch: ArchSample | None = None) -> tuple[list[StepOutput], EpisodeTrace]:
    """Left-to-right recurrence from z_1 = 0 over ``frames``.

    Each frame is anything with ``features`` (and optionally ``label``), or a
    bare array. Δ_t is recorded for frames carrying a label.
    """
    if len(frames) == 0:
        raise InputError("run_sequence needs at least one frame")
    z = init_state(model.config.d_z)
    outputs: list[StepOutput] = []
    logps, deltas, costs, labels = [], [], [], []
    for fr in frames:
        x = getattr(fr, "features", fr)
        label = getattr(fr, "label", None)
        out = sanas_step(model, z, x, theta, mode, rng, arch)
        outputs.append(out)
        logps.append(out.logp)
        costs.append(out.cost)
        labels.append(label)
        if label is not None:
            deltas.append(softmax_xent(out.logits, label))
        z = out.z_next
    if deltas and len(deltas) != len(costs):
        raise InputError("either every frame or no frame must carry a label")
    return outputs, EpisodeTrace(logps, deltas, costs, mode, labels)
