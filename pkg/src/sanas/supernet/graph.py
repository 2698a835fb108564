"""Super-network description: layers, edge modules, validation.

A graph description is JSON of the form::

    {
      "name": "toy",
      "layers": [{"name": "input", "shape": [1, 40, 98]},
                 {"name": "conv1", "shape": [4, 9, 12]}, ...],
      "edges": [{"from": "input", "to": "conv1", "kind": "conv2d",
                 "kernel": [8, 10], "stride": [4, 8]}, ...],
      "input": "input", "output": "output", "phi_layer": "merge",
      "backbone": ["input->conv1", ...]
    }

``kind`` is one of ``conv2d``, ``linear``, ``flatten-linear``, ``identity``.
Conv shapes are ``[channels, freq, time]``; kernel and stride are given in
``[freq, time]`` order. Each edge is named ``"<from>-><to>"`` unless a
``"name"`` is supplied. Layers other than the input and output apply ReLU to
the sum of their incoming edges unless ``"activation": "none"`` is set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ConfigurationError
from ..numcore.ops import conv_output_size

EDGE_KINDS = ("conv2d", "linear", "flatten-linear", "identity")
ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class Layer:
    name: str
    shape: tuple[int, ...]
    activation: str = "relu"

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class EdgeModuleSpec:
    name: str
    src: str
    dst: str
    kind: str
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] = (1, 1)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "conv2d":
            C_in, C_out = self.in_shape[0], self.out_shape[0]
            return {"K": (C_out, C_in) + tuple(self.kernel), "b": (C_out,)}
        if self.kind in ("linear", "flatten-linear"):
            n_in = int(np.prod(self.in_shape))
            return {"W": (self.out_shape[0], n_in), "b": (self.out_shape[0],)}
        return {}

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "from": self.src, "to": self.dst, "kind": self.kind}
        if self.kind == "conv2d":
            d["kernel"] = list(self.kernel)
            d["stride"] = list(self.stride)
        return d


@dataclass(frozen=True)
class SuperNetworkSpec:
    """Validated DAG. ``edges`` order fixes the index order of Γ and H."""

    name: str
    layers: tuple[Layer, ...]
    edges: tuple[EdgeModuleSpec, ...]
    input: str
    output: str
    phi_layer: str
    topo_order: tuple[str, ...]
    backbone: tuple[str, ...] = ()
    _layer_index: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def layer(self, name: str) -> Layer:
        return self.layers[self._layer_index[name]]

    def edge_index(self, name: str) -> int:
        for i, e in enumerate(self.edges):
            if e.name == name:
                return i
        raise KeyError(name)

    @property
    def num_classes(self) -> int:
        return self.layer(self.output).size

    def edge_matrix(self) -> np.ndarray:
        """E as an n x n 0/1 matrix with rows/columns in topological order."""
        pos = {n: i for i, n in enumerate(self.topo_order)}
        E = np.zeros((self.n_layers, self.n_layers), dtype=np.int8)
        for e in self.edges:
            E[pos[e.src], pos[e.dst]] = 1
        return E

    def to_matrix(self, per_edge: np.ndarray) -> np.ndarray:
        """Scatter a per-edge vector (Γ or H) onto the n x n layout of ``edge_matrix``."""
        pos = {n: i for i, n in enumerate(self.topo_order)}
        out = np.zeros((self.n_layers, self.n_layers), dtype=np.asarray(per_edge).dtype)
        for v, e in zip(per_edge, self.edges):
            out[pos[e.src], pos[e.dst]] = v
        return out

    def from_matrix(self, M: np.ndarray) -> np.ndarray:
        """Gather a per-edge vector from an n x n matrix; rejects mass off E."""
        M = np.asarray(M)
        E = self.edge_matrix()
        if M.shape != E.shape:
            raise ConfigurationError(f"matrix shape {M.shape} != {E.shape}")
        if np.any((M != 0) & (E == 0)):
            raise ConfigurationError("matrix has non-zero entries outside the edge support E")
        pos = {n: i for i, n in enumerate(self.topo_order)}
        return np.array([M[pos[e.src], pos[e.dst]] for e in self.edges])

    def backbone_mask(self) -> np.ndarray:
        if not self.backbone:
            raise ConfigurationError(f"graph {self.name!r} declares no backbone")
        names = set(self.backbone)
        return np.array([e.name in names for e in self.edges], dtype=bool)

    def full_mask(self) -> np.ndarray:
        return np.ones(self.n_edges, dtype=bool)

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "name": self.name,
            "layers": [],
            "edges": [e.to_json() for e in self.edges],
            "input": self.input,
            "output": self.output,
            "phi_layer": self.phi_layer,
        }
        for layer in self.layers:
            entry: dict[str, Any] = {"name": layer.name, "shape": list(layer.shape)}
            if layer.name not in (self.input, self.output) and layer.activation != "relu":
                entry["activation"] = layer.activation
            d["layers"].append(entry)
        if self.backbone:
            d["backbone"] = list(self.backbone)
        return d


def _find_cycle(names: list[str], succ: dict[str, list[str]]) -> list[str] | None:
    color = {n: 0 for n in names}
    parent: dict[str, str] = {}
    for start in names:
        if color[start]:
            continue
        stack = [(start, iter(succ[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color[nxt] == 1:
                cycle = [nxt]
                cur = node
                while cur != nxt:
                    cycle.append(cur)
                    cur = parent[cur]
                cycle.append(nxt)
                return cycle[::-1]
            elif color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = node
                stack.append((nxt, iter(succ[nxt])))
    return None


def _pair(value, what: str, edge: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"edge {edge}: {what} must be a pair of integers, got {value!r}")
    return a, b


def _check_edge_dims(e: EdgeModuleSpec) -> None:
    src, dst = e.in_shape, e.out_shape
    if e.kind == "identity":
        if src != dst:
            raise ConfigurationError(f"edge {e.name}: identity needs equal shapes, got {src} -> {dst}")
    elif e.kind == "linear":
        if len(src) != 1 or len(dst) != 1:
            raise ConfigurationError(f"edge {e.name}: linear needs vector endpoints, got {src} -> {dst}")
    elif e.kind == "flatten-linear":
        if len(dst) != 1:
            raise ConfigurationError(f"edge {e.name}: flatten-linear needs a vector target, got {dst}")
    elif e.kind == "conv2d":
        if len(src) != 3 or len(dst) != 3:
            raise ConfigurationError(f"edge {e.name}: conv2d needs [C, F, T] endpoints, got {src} -> {dst}")
        (kF, kT), (sF, sT) = e.kernel, e.stride
        _, F, T = src
        if kF < 1 or kT < 1 or sF < 1 or sT < 1:
            raise ConfigurationError(f"edge {e.name}: kernel/stride must be positive")
        if kF > F or kT > T:
            raise ConfigurationError(f"edge {e.name}: kernel {(kF, kT)} larger than input {(F, T)}")
        expect = (dst[0], conv_output_size(F, kF, sF), conv_output_size(T, kT, sT))
        if tuple(dst) != expect:
            raise ConfigurationError(f"edge {e.name}: conv2d output is {expect}, layer {e.dst} declares {dst}")


def build_graph(desc: dict[str, Any]) -> SuperNetworkSpec:
    """Validate a graph description and compute its topological order."""
    if not isinstance(desc, dict):
        raise ConfigurationError("graph description must be a JSON object")
    known = {"name", "layers", "edges", "input", "output", "phi_layer", "backbone"}
    unknown = set(desc) - known
    if unknown:
        raise ConfigurationError(f"unknown graph keys: {sorted(unknown)}")
    raw_layers = desc.get("layers") or []
    if len(raw_layers) < 2:
        raise ConfigurationError("a graph needs at least an input and an output layer")
    names = [str(l["name"]) for l in raw_layers]
    if len(set(names)) != len(names):
        raise ConfigurationError("layer names must be unique")
    inp = desc.get("input", names[0])
    out = desc.get("output", names[-1])
    phi = desc.get("phi_layer")
    for label, n in (("input", inp), ("output", out)):
        if n not in names:
            raise ConfigurationError(f"{label} layer {n!r} is not declared")

    layers = []
    for l in raw_layers:
        shape = tuple(int(s) for s in l["shape"])
        if not shape or any(s < 1 for s in shape):
            raise ConfigurationError(f"layer {l['name']}: shape must be positive integers, got {l['shape']}")
        act = l.get("activation", "none" if l["name"] in (inp, out) else "relu")
        if act not in ACTIVATIONS:
            raise ConfigurationError(f"layer {l['name']}: unknown activation {act!r}")
        layers.append(Layer(str(l["name"]), shape, act))
    by_name = {l.name: l for l in layers}
    if len(by_name[out].shape) != 1:
        raise ConfigurationError(f"output layer {out!r} must be a vector of class scores")

    edges: list[EdgeModuleSpec] = []
    seen_pairs: set[tuple[str, str]] = set()
    for raw in desc.get("edges") or []:
        src, dst = str(raw["from"]), str(raw["to"])
        name = str(raw.get("name", f"{src}->{dst}"))
        for end in (src, dst):
            if end not in by_name:
                raise ConfigurationError(f"edge {name}: unknown layer {end!r}")
        if src == dst:
            raise ConfigurationError(f"edge {name}: self-loop on {src!r}")
        if (src, dst) in seen_pairs:
            raise ConfigurationError(f"edge {name}: duplicate edge {src}->{dst}")
        seen_pairs.add((src, dst))
        kind = raw.get("kind")
        if kind not in EDGE_KINDS:
            raise ConfigurationError(f"edge {name}: kind must be one of {EDGE_KINDS}, got {kind!r}")
        kernel = _pair(raw["kernel"], "kernel", name) if kind == "conv2d" else None
        stride = _pair(raw.get("stride", (1, 1)), "stride", name) if kind == "conv2d" else (1, 1)
        edges.append(EdgeModuleSpec(name, src, dst, kind, by_name[src].shape, by_name[dst].shape, kernel, stride))
    if len({e.name for e in edges}) != len(edges):
        raise ConfigurationError("edge names must be unique")

    succ: dict[str, list[str]] = {n: [] for n in names}
    for e in edges:
        succ[e.src].append(e.dst)
    cycle = _find_cycle(names, succ)
    if cycle:
        raise ConfigurationError("cycle detected: " + " -> ".join(cycle))
    for e in edges:
        _check_edge_dims(e)

    # Kahn's algorithm, ties broken by declaration order
    indeg = {n: 0 for n in names}
    for e in edges:
        indeg[e.dst] += 1
    ready = [n for n in names if indeg[n] == 0]
    order: list[str] = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
                ready.sort(key=names.index)
    if any(e.dst == inp for e in edges):
        raise ConfigurationError(f"input layer {inp!r} cannot have incoming edges")
    if any(e.src == out for e in edges):
        raise ConfigurationError(f"output layer {out!r} cannot have outgoing edges")

    if phi is None:
        into_out = [e.src for e in edges if e.dst == out]
        if len(into_out) != 1:
            raise ConfigurationError("phi_layer must be given when the output has several inputs")
        phi = into_out[0]
    if phi not in by_name:
        raise ConfigurationError(f"phi_layer {phi!r} is not declared")
    backbone = tuple(str(b) for b in desc.get("backbone", ()))
    edge_names = {e.name for e in edges}
    for b in backbone:
        if b not in edge_names:
            raise ConfigurationError(f"backbone names unknown edge {b!r}")

    spec = SuperNetworkSpec(
        name=str(desc.get("name", "graph")), layers=tuple(layers), edges=tuple(edges),
        input=inp, output=out, phi_layer=phi, topo_order=tuple(order), backbone=backbone,
        _layer_index={l.name: i for i, l in enumerate(layers)},
    )
    return spec


def load_graph(path: str | Path) -> SuperNetworkSpec:
    with open(path) as fh:
        return build_graph(json.load(fh))


def builtin_graph(name: str) -> SuperNetworkSpec:
    """``"kws"`` (the full keyword-spotting search space) or ``"toy"``."""
    res = resources.files("sanas.graphs").joinpath(f"{name}.json")
    if not res.is_file():
        raise ConfigurationError(f"no built-in graph named {name!r}")
    return build_graph(json.loads(res.read_text()))
