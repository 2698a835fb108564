"""Shared oracles for the test suite."""
from __future__ import annotations

import itertools

import numpy as np

from sanas.numcore import Tensor, grad_check


def op_grad_error(fn, arrays, rng, h=1e-5):
    """Worst finite-difference error of ``fn``'s gradient w.r.t. each input.

    The op output is contracted with a fixed random cotangent so that every
    output coordinate contributes to the scalar being differentiated.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*leaves)
    cot = rng.standard_normal(out.shape)
    out.backward(cot)
    worst = 0.0
    for k, leaf in enumerate(leaves):
        def f(theta, k=k):
            args = [Tensor(theta if j == k else a) for j, a in enumerate(arrays)]
            return float(np.sum(fn(*args).data * cot))
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(arrays[k])
        worst = max(worst, grad_check(f, analytic, arrays[k], h))
    return worst


def all_masks(n):
    for bits in itertools.product((0, 1), repeat=n):
        yield np.array(bits, dtype=bool)


def chain_graph(n_layers=3, width=4, kind="linear"):
    layers = [{"name": f"l{i}", "shape": [width]} for i in range(n_layers)]
    edges = [{"from": f"l{i}", "to": f"l{i + 1}", "kind": kind} for i in range(n_layers - 1)]
    return {"name": "chain", "layers": layers, "edges": edges, "input": "l0",
            "output": f"l{n_layers - 1}", "phi_layer": f"l{n_layers - 2}"}


def two_edge_graph(width=3, classes=3):
    """input -> hidden -> output with both edges switchable (4 architectures)."""
    return {
        "name": "two-edge",
        "layers": [{"name": "in", "shape": [width]}, {"name": "hid", "shape": [width]},
                   {"name": "out", "shape": [classes]}],
        "edges": [{"from": "in", "to": "hid", "kind": "linear"},
                  {"from": "hid", "to": "out", "kind": "linear"}],
        "input": "in", "output": "out", "phi_layer": "hid",
    }


def brute_force_active(n_layers, edges, mask, src, dst):
    """Edges on some src->dst path, by enumerating simple paths."""
    keep = set()

    def walk(node, path):
        if node == dst:
            keep.update(path)
            return
        for i, (a, b) in enumerate(edges):
            if mask[i] and a == node:
                walk(b, path + [i])

    walk(src, [])
    return np.array([i in keep for i in range(len(edges))])


# PASS/FAIL lines of the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def step_grad_error(seed, h=1e-5):
    """Worst finite-difference error of one composed sanas_step.

    The scalar mixes every output of the step (loss, log-prob and next state)
    so that all parameters, and the incoming state, receive gradient.
    """
    from sanas.controller import ModelConfig, SanasModel, sanas_step
    from sanas.numcore import add, linear, scale, softmax_xent, total
    from sanas.supernet import ArchSample, build_graph

    r = np.random.default_rng([77, seed])
    model = SanasModel(build_graph(two_edge_graph()), ModelConfig(d_z=3, d_phi=3))
    store = model.init_params(r)
    params = {n: p + 0.5 * r.standard_normal(p.shape) for n, p in store.params.items()}
    z0, x = r.standard_normal(3), r.standard_normal(3)
    label, c = int(r.integers(0, 3)), float(r.standard_normal())
    w = r.standard_normal((1, 3))
    arch = ArchSample(r.random(2) < 0.75)

    def scalar(values, z):
        theta = {n: Tensor(v, requires_grad=True) for n, v in values.items()}
        z = Tensor(z, requires_grad=True)
        out = sanas_step(model, z, x, theta, "fixed", arch=arch)
        mix = total(linear(out.z_next, Tensor(w), Tensor(np.zeros(1))))
        return add(add(softmax_xent(out.logits, label), scale(out.logp, c)), mix), theta, z

    s, theta, z = scalar(params, z0)
    s.backward()
    worst = 0.0
    for name, value in params.items():
        analytic = theta[name].grad if theta[name].grad is not None else np.zeros_like(value)
        f = lambda v, name=name: scalar({**params, name: v}, z0)[0].item()
        worst = max(worst, grad_check(f, analytic, value, h))
    analytic = z.grad if z.grad is not None else np.zeros(3)
    return max(worst, grad_check(lambda v: scalar(params, v)[0].item(), analytic, z0, h))
