"""Sub-graph selection: sampling, the mode, log-likelihood, pruning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InputError
from ..numcore import Tensor, bernoulli_log_prob
from .graph import SuperNetworkSpec

LOG_PROB_EPS = 1e-6


@dataclass(frozen=True)
class ArchSample:
    """H restricted to the support of E: one bool per edge of the graph."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 1:
            raise ConfigurationError(f"ArchSample mask must be a per-edge vector, got shape {m.shape}")
        object.__setattr__(self, "mask", m.astype(bool))

    def __len__(self) -> int:
        return len(self.mask)

    def __eq__(self, other) -> bool:
        return isinstance(other, ArchSample) and np.array_equal(self.mask, other.mask)

    def __hash__(self) -> int:
        return hash(self.mask.tobytes())

    @classmethod
    def from_matrix(cls, spec: SuperNetworkSpec, H: np.ndarray) -> ArchSample:
        vals = spec.from_matrix(H)
        if not np.all(np.isin(vals, (0, 1))):
            raise ConfigurationError("H must be binary")
        return cls(vals.astype(bool))

    def to_matrix(self, spec: SuperNetworkSpec) -> np.ndarray:
        return spec.to_matrix(self.mask.astype(np.int8))


def _check_gamma(gamma: np.ndarray) -> np.ndarray:
    g = np.asarray(gamma, dtype=np.float64)
    if g.ndim != 1:
        raise ConfigurationError(f"Γ must be a per-edge vector, got shape {g.shape}")
    if not np.all((g >= 0.0) & (g <= 1.0)):
        raise InputError(f"Γ entries must lie in [0, 1], got min {g.min()} max {g.max()}")
    return g


def sample_architecture(gamma: np.ndarray, rng: np.random.Generator) -> ArchSample:
    """Independent Bernoulli(Γ_e) draw per edge."""
    g = _check_gamma(gamma)
    return ArchSample(rng.random(g.shape[0]) < g)


def most_probable_architecture(gamma: np.ndarray) -> ArchSample:
    """Mode of the product of Bernoullis; Γ_e = 0.5 keeps the edge."""
    return ArchSample(_check_gamma(gamma) >= 0.5)


def log_prob(gamma: Tensor, arch: ArchSample, eps: float = LOG_PROB_EPS) -> Tensor:
    """log P(H | Γ) summed over the edges of E, differentiable in Γ."""
    if gamma.shape != arch.mask.shape:
        raise ConfigurationError(f"Γ{gamma.shape} and H{arch.mask.shape} disagree")
    return bernoulli_log_prob(gamma, arch.mask.astype(np.float64), eps)


def active_subgraph(spec: SuperNetworkSpec, arch: ArchSample) -> np.ndarray:
    """Edges of E∘H lying on some input -> output path (bool per edge)."""
    mask = arch.mask
    if mask.shape != (spec.n_edges,):
        raise ConfigurationError(f"H has {mask.shape[0]} entries, graph has {spec.n_edges} edges")
    fwd = {spec.input}
    for name in spec.topo_order:
        if name in fwd:
            continue
        if any(mask[i] and e.dst == name and e.src in fwd for i, e in enumerate(spec.edges)):
            fwd.add(name)
    bwd = {spec.output}
    for name in reversed(spec.topo_order):
        if name in bwd:
            continue
        if any(mask[i] and e.src == name and e.dst in bwd for i, e in enumerate(spec.edges)):
            bwd.add(name)
    return np.array([bool(mask[i]) and e.src in fwd and e.dst in bwd for i, e in enumerate(spec.edges)],
                    dtype=bool)
