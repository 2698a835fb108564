"""FLOPs accounting.

Convention: a multiply-accumulate is 2 FLOPs, each bias add is 1 FLOP,
activations and pooling are free. So ``linear(n_in -> n_out)`` costs
``2*n_in*n_out + n_out`` and a conv costs ``F'*T'*C_out*(2*kF*kT*C_in + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import ArchSample, active_subgraph
from .graph import EdgeModuleSpec, SuperNetworkSpec


def linear_flops(n_in: int, n_out: int) -> int:
    return 2 * n_in * n_out + n_out


def edge_cost(module: EdgeModuleSpec) -> int:
    if module.kind == "identity":
        return 0
    if module.kind in ("linear", "flatten-linear"):
        return linear_flops(int(np.prod(module.in_shape)), module.out_shape[0])
    C_in = module.in_shape[0]
    C_out, Fo, To = module.out_shape
    kF, kT = module.kernel
    return Fo * To * C_out * (2 * kF * kT * C_in) + Fo * To * C_out


def gru_flops(d_in: int, d: int) -> int:
    # three gates of W u + U z + b, plus r*z, 1-a, (1-a)*c, a*z and the final sum
    return 3 * (2 * d_in * d + 2 * d * d + 2 * d) + 5 * d


def controller_cost(spec: SuperNetworkSpec, d_z: int, d_phi: int) -> int:
    """Per-timestep cost of Γ = h(z), the Φ projection, the GRU and sampling."""
    n_e = spec.n_edges
    gamma = linear_flops(d_z, n_e)
    phi = linear_flops(spec.layer(spec.phi_layer).size, d_phi)
    sampling = n_e  # one comparison per edge
    return gamma + phi + gru_flops(d_phi, d_z) + sampling


@dataclass(frozen=True)
class CostModel:
    edge_costs: tuple[int, ...]
    c_ctrl: int
    charge_inactive: bool = False

    @classmethod
    def build(cls, spec: SuperNetworkSpec, d_z: int, d_phi: int, charge_inactive: bool = False,
              include_controller: bool = True) -> CostModel:
        c_ctrl = controller_cost(spec, d_z, d_phi) if include_controller else 0
        return cls(tuple(edge_cost(e) for e in spec.edges), c_ctrl, charge_inactive)

    @property
    def full_cost(self) -> int:
        return int(sum(self.edge_costs)) + self.c_ctrl

    def order_of_magnitude(self) -> int:
        """m such that 10**m <= full cost < 10**(m+1)."""
        return int(np.floor(np.log10(self.full_cost)))


def architecture_cost(spec: SuperNetworkSpec, arch: ArchSample, cost_model: CostModel,
                      active: np.ndarray | None = None) -> int:
    """C(A_t): edges that actually run, plus the controller's fixed share.

    With ``charge_inactive`` every sampled edge is billed, reachable or not.
    """
    if cost_model.charge_inactive:
        billed = arch.mask
    else:
        billed = active_subgraph(spec, arch) if active is None else active
    return int(sum(c for c, on in zip(cost_model.edge_costs, billed) if on)) + cost_model.c_ctrl
