"""Parameters of the edge modules and forward evaluation of a sub-graph."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import NonFiniteError
from ..numcore import ParamStore, Tensor, add, conv2d, flatten, linear, relu
from .graph import EdgeModuleSpec, SuperNetworkSpec

PHI_W, PHI_B = "phi.W", "phi.b"


def edge_param_name(edge: EdgeModuleSpec, p: str) -> str:
    return f"edge.{edge.name}.{p}"


def init_edge_params(spec: SuperNetworkSpec, store: ParamStore, rng: np.random.Generator,
                     d_phi: int) -> None:
    """He-uniform weights, zero biases, for every edge module and the Φ projection."""
    for e in spec.edges:
        shapes = e.param_shapes()
        for pname, shape in shapes.items():
            if pname == "b":
                store.add(edge_param_name(e, pname), np.zeros(shape))
                continue
            fan_in = int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / fan_in)
            store.add(edge_param_name(e, pname), rng.uniform(-limit, limit, size=shape))
    n_phi = spec.layer(spec.phi_layer).size
    limit = np.sqrt(3.0 / n_phi)
    store.add(PHI_W, rng.uniform(-limit, limit, size=(d_phi, n_phi)))
    store.add(PHI_B, np.zeros(d_phi))


def apply_edge(e: EdgeModuleSpec, x: Tensor, theta: Mapping[str, Tensor]) -> Tensor:
    if e.kind == "identity":
        return x
    if e.kind == "conv2d":
        return conv2d(x, theta[edge_param_name(e, "K")], theta[edge_param_name(e, "b")], e.stride)
    if e.kind == "flatten-linear":
        x = flatten(x)
    return linear(x, theta[edge_param_name(e, "W")], theta[edge_param_name(e, "b")])


def forward_layers(spec: SuperNetworkSpec, active: np.ndarray, x: Tensor,
                   theta: Mapping[str, Tensor]) -> tuple[dict[str, Tensor], dict[str, Tensor]]:
    """Run the active edges in topological order.

    Returns ``(pre, act)``: the summed incoming values of each reached layer
    and the value after the layer's activation. Unreached layers are absent.
    """
    pre: dict[str, Tensor] = {}
    act: dict[str, Tensor] = {spec.input: x}
    incoming: dict[str, list[int]] = {n: [] for n in spec.topo_order}
    for i, e in enumerate(spec.edges):
        if active[i]:
            incoming[e.dst].append(i)
    for name in spec.topo_order:
        if name == spec.input or not incoming[name]:
            continue
        outs = []
        for i in incoming[name]:
            e = spec.edges[i]
            try:
                outs.append(apply_edge(e, act[e.src], theta))
            except NonFiniteError as err:
                raise NonFiniteError(f"edge {e.name}: {err}") from err
        total = outs[0] if len(outs) == 1 else add(*outs)
        pre[name] = total
        act[name] = relu(total) if spec.layer(name).activation == "relu" else total
    return pre, act


def evaluate(spec: SuperNetworkSpec, active: np.ndarray, x: Tensor,
             theta: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    """(logits, Φ) of the sub-graph ``active`` on input ``x``.

    An unreached output yields the classifier bias alone; an unreached Φ
    layer yields Φ = 0.
    """
    _, act = forward_layers(spec, active, x, theta)
    if spec.output in act:
        logits = act[spec.output]
    else:
        biases = [theta[edge_param_name(e, "b")] for e in spec.edges
                  if e.dst == spec.output and e.kind != "identity"]
        logits = biases[0] if len(biases) == 1 else add(*biases)
    d_phi = theta[PHI_B].shape[0]
    if spec.phi_layer in act:
        phi = linear(flatten(act[spec.phi_layer]), theta[PHI_W], theta[PHI_B])
    else:
        phi = Tensor(np.zeros(d_phi))
    return logits, phi
