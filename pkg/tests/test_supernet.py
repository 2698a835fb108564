import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import all_masks, brute_force_active, chain_graph
from sanas.errors import ConfigurationError, InputError
from sanas.numcore import ParamStore, Tensor, linear
from sanas.supernet import (
    PHI_B,
    PHI_W,
    ArchSample,
    CostModel,
    EdgeModuleSpec,
    active_subgraph,
    architecture_cost,
    build_graph,
    builtin_graph,
    controller_cost,
    edge_cost,
    edge_param_name,
    evaluate,
    init_edge_params,
    log_prob,
    most_probable_architecture,
    sample_architecture,
)


def _dag(n_layers, pairs, width=2):
    return {
        "name": "dag",
        "layers": [{"name": f"l{i}", "shape": [width]} for i in range(n_layers)],
        "edges": [{"from": f"l{a}", "to": f"l{b}", "kind": "linear"} for a, b in pairs],
        "input": "l0", "output": f"l{n_layers - 1}", "phi_layer": "l0",
    }


@st.composite
def dags_with_masks(draw, max_edges=12):
    n = draw(st.integers(2, 7))
    candidates = [(a, b) for a in range(n - 1) for b in range(a + 1, n)]
    k = draw(st.integers(1, min(max_edges, len(candidates))))
    pairs = draw(st.lists(st.sampled_from(candidates), min_size=k, max_size=k, unique=True))
    mask = np.array(draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs))))
    return n, pairs, mask


# ---------------------------------------------------------------- build_graph

def test_two_layer_identity_chain():
    spec = build_graph(chain_graph(2, kind="identity"))
    assert spec.topo_order == ("l0", "l1")
    assert spec.edge_matrix().tolist() == [[0, 1], [0, 0]]


def test_cycle_is_rejected_by_name():
    desc = chain_graph(3)
    desc["edges"].append({"from": "l2", "to": "l1", "kind": "linear"})
    desc["output"] = "l2"
    with pytest.raises(ConfigurationError, match="cycle detected: l1 -> l2 -> l1"):
        build_graph(desc)


def test_back_edge_into_input_is_a_cycle():
    desc = chain_graph(2, kind="identity")
    desc["edges"].append({"from": "l1", "to": "l0", "kind": "identity"})
    with pytest.raises(ConfigurationError, match="cycle"):
        build_graph(desc)


def test_dimension_mismatch_names_the_edge():
    desc = chain_graph(3, kind="identity")
    desc["layers"][1]["shape"] = [5]
    with pytest.raises(ConfigurationError, match="l0->l1"):
        build_graph(desc)


def test_conv_dimension_mismatch():
    desc = {"layers": [{"name": "x", "shape": [1, 10, 10]}, {"name": "c", "shape": [2, 4, 4]},
                       {"name": "y", "shape": [3]}],
            "edges": [{"from": "x", "to": "c", "kind": "conv2d", "kernel": [2, 2], "stride": [2, 2]},
                      {"from": "c", "to": "y", "kind": "flatten-linear"}]}
    with pytest.raises(ConfigurationError, match="x->c"):
        build_graph(desc)
    desc["layers"][1]["shape"] = [2, 4, 4]
    desc["edges"][0]["stride"] = [2, 2]
    desc["edges"][0]["kernel"] = [4, 4]
    assert build_graph(desc).n_edges == 2


def test_unknown_kind_and_keys():
    desc = chain_graph(2)
    desc["edges"][0]["kind"] = "attention"
    with pytest.raises(ConfigurationError):
        build_graph(desc)
    with pytest.raises(ConfigurationError, match="unknown graph keys"):
        build_graph({**chain_graph(2), "extra": 1})


def test_kws_builtin_layout():
    spec = builtin_graph("kws")
    assert spec.n_layers == 7 and spec.n_edges == 10
    assert spec.layer("input").shape == (1, 40, 98)
    assert spec.layer("conv1").shape == (64, 11, 79)
    assert spec.layer("conv2").shape == (64, 8, 70)
    assert [spec.layer(n).shape[0] for n in ("lin1", "lin2", "output")] == [32, 128, 12]
    shortcuts = [e for e in spec.edges if e.dst == "merge" and e.name != "lin2->merge"]
    assert len(shortcuts) == 4 and all(e.out_shape == (128,) for e in shortcuts)
    assert spec.phi_layer == "merge"
    assert np.array_equal(np.triu(spec.edge_matrix(), 1), spec.edge_matrix())


def test_graph_json_roundtrip():
    for name in ("kws", "toy"):
        spec = builtin_graph(name)
        assert build_graph(spec.to_json()) == spec


def test_matrix_layout_rejects_mass_off_support():
    spec = builtin_graph("toy")
    H = spec.to_matrix(np.ones(spec.n_edges, dtype=np.int8))
    assert np.array_equal(H, spec.edge_matrix())
    H[0, 0] = 1
    with pytest.raises(ConfigurationError):
        ArchSample.from_matrix(spec, H)


# ---------------------------------------------------------------- costs

def _module(kind, in_shape, out_shape, kernel=None, stride=(1, 1)):
    return EdgeModuleSpec("e", "a", "b", kind, tuple(in_shape), tuple(out_shape), kernel, stride)


def test_edge_cost_examples():
    assert edge_cost(_module("linear", (32,), (128,))) == 8320
    assert edge_cost(_module("identity", (7,), (7,))) == 0
    conv1 = _module("conv2d", (1, 40, 98), (64, 7, 91), kernel=(20, 8), stride=(3, 1))
    # hand evaluation: 40,768 outputs x 320 FLOPs + 40,768 bias adds. The
    # widely quoted 26,168,576 is not reachable from the formula (it is not a
    # multiple of the 40,768 output count).
    assert edge_cost(conv1) == 40_768 * 320 + 40_768 == 13_086_528
    assert 26_168_576 % 40_768 != 0


def test_kws_costs():
    spec = builtin_graph("kws")
    costs = {e.name: edge_cost(e) for e in spec.edges}
    assert costs["input->conv1"] == 11 * 79 * 64 * (2 * 8 * 20 + 1)
    assert costs["conv1->conv2"] == 8 * 70 * 64 * (2 * 4 * 10 * 64 + 1)
    assert costs["conv2->lin1"] == 2 * 64 * 8 * 70 * 32 + 32
    assert costs["lin2->merge"] == 0
    cm = CostModel.build(spec, 64, 64)
    assert cm.c_ctrl == 67_604
    assert cm.full_cost == 228_187_136
    backbone = architecture_cost(spec, ArchSample(spec.backbone_mask()), cm)
    assert backbone == sum(costs[n] for n in spec.backbone) + cm.c_ctrl
    assert cm.order_of_magnitude() == 8


def test_controller_cost_by_hand():
    spec = builtin_graph("toy")
    d_z = d_phi = 8
    n_e = spec.n_edges
    n_phi = spec.layer(spec.phi_layer).size
    gru = 3 * (2 * d_phi * d_z + 2 * d_z * d_z + 2 * d_z) + 5 * d_z
    expect = (2 * d_z * n_e + n_e) + (2 * n_phi * d_phi + d_phi) + gru + n_e
    assert controller_cost(spec, d_z, d_phi) == expect


def test_architecture_cost_bounds():
    spec = builtin_graph("kws")
    cm = CostModel.build(spec, 64, 64)
    assert architecture_cost(spec, ArchSample(np.zeros(spec.n_edges, bool)), cm) == cm.c_ctrl
    assert architecture_cost(spec, ArchSample(np.ones(spec.n_edges, bool)), cm) == cm.full_cost


def test_cost_monotone_exhaustive_on_toy():
    spec = builtin_graph("toy")
    cm = CostModel.build(spec, 8, 8)
    cost = {m.tobytes(): architecture_cost(spec, ArchSample(m), cm) for m in all_masks(spec.n_edges)}
    for m in all_masks(spec.n_edges):
        base = cost[m.tobytes()]
        assert cm.c_ctrl <= base <= cm.full_cost
        for i in np.flatnonzero(~m):
            bigger = m.copy()
            bigger[i] = True
            assert cost[bigger.tobytes()] >= base


def test_charge_inactive_bills_every_sampled_edge():
    spec = builtin_graph("toy")
    cm = CostModel.build(spec, 8, 8, charge_inactive=True)
    only_probe = np.zeros(spec.n_edges, bool)
    only_probe[spec.edge_index("input->probe")] = True
    got = architecture_cost(spec, ArchSample(only_probe), cm)
    assert got == cm.edge_costs[spec.edge_index("input->probe")] + cm.c_ctrl
    assert architecture_cost(spec, ArchSample(only_probe), CostModel.build(spec, 8, 8)) == cm.c_ctrl


# ---------------------------------------------------------------- sampling and the mode

def test_sampling_extremes():
    rng = np.random.default_rng(0)
    assert sample_architecture(np.ones(5), rng).mask.all()
    assert not sample_architecture(np.zeros(5), rng).mask.any()


def test_sampling_frequency():
    rng = np.random.default_rng(1)
    draws = np.array([sample_architecture(np.array([0.3]), rng).mask[0] for _ in range(100_000)])
    assert abs(draws.mean() - 0.3) <= 0.005


def test_sampling_is_reproducible_and_validated():
    g = np.linspace(0, 1, 9)
    a = sample_architecture(g, np.random.default_rng(7))
    b = sample_architecture(g, np.random.default_rng(7))
    assert a == b
    with pytest.raises(InputError):
        sample_architecture(np.array([0.2, 1.2]), np.random.default_rng(0))


def test_mode_examples():
    assert most_probable_architecture(np.array([0.7, 0.2])).mask.tolist() == [True, False]
    assert most_probable_architecture(np.array([0.5])).mask.tolist() == [True]


def _likelihood(gamma, mask):
    return float(np.prod(np.where(mask, gamma, 1 - gamma)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_mode_maximises_likelihood_by_enumeration(gammas):
    g = np.array(gammas)
    best = max(_likelihood(g, m) for m in all_masks(len(g)))
    assert _likelihood(g, most_probable_architecture(g).mask) == best


# ---------------------------------------------------------------- log_prob

def test_log_prob_examples():
    assert log_prob(Tensor([0.7]), ArchSample(np.array([1]))).item() == pytest.approx(-0.35667, abs=1e-5)
    assert log_prob(Tensor([0.7]), ArchSample(np.array([0]))).item() == pytest.approx(-1.20397, abs=1e-5)


def test_log_prob_is_clamped():
    lp = log_prob(Tensor([0.0, 1.0]), ArchSample(np.array([1, 0]))).item()
    assert math.isfinite(lp) and lp == pytest.approx(2 * math.log(1e-6))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=10))
def test_log_prob_normalises(gammas):
    g = Tensor(np.array(gammas))
    mass = math.fsum(math.exp(log_prob(g, ArchSample(m)).item()) for m in all_masks(len(gammas)))
    assert mass == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- active_subgraph

def test_active_chain_and_dangling():
    spec = build_graph(chain_graph(4))
    assert active_subgraph(spec, ArchSample(np.ones(3, bool))).all()
    dangling = active_subgraph(spec, ArchSample(np.array([False, True, True])))
    assert not dangling.any()


@settings(max_examples=300, deadline=None)
@given(dags_with_masks())
def test_active_subgraph_matches_path_enumeration(case):
    n, pairs, mask = case
    spec = build_graph(_dag(n, pairs))
    got = active_subgraph(spec, ArchSample(mask))
    assert np.array_equal(got, brute_force_active(n, pairs, mask, 0, n - 1))


def test_active_subgraph_kws_random_masks():
    spec = builtin_graph("kws")
    idx = {n: i for i, n in enumerate(l.name for l in spec.layers)}
    pairs = [(idx[e.src], idx[e.dst]) for e in spec.edges]
    rng = np.random.default_rng(3)
    for _ in range(200):
        mask = rng.random(spec.n_edges) < 0.6
        expect = brute_force_active(spec.n_layers, pairs, mask, idx["input"], idx["output"])
        assert np.array_equal(active_subgraph(spec, ArchSample(mask)), expect)


# ---------------------------------------------------------------- evaluate

def _params(spec, seed=0, d_phi=3):
    store = ParamStore()
    init_edge_params(spec, store, np.random.default_rng(seed), d_phi)
    for n in store:
        store.params[n] += 0.1 * np.random.default_rng(seed + 1).standard_normal(store[n].shape)
    return store, store.tensors(requires_grad=False)


def test_empty_active_set_gives_bias_and_zero_phi():
    spec = builtin_graph("toy")
    store, theta = _params(spec)
    logits, phi = evaluate(spec, np.zeros(spec.n_edges, bool), Tensor(np.ones((1, 40, 98))), theta)
    assert np.array_equal(logits.data, store[edge_param_name(spec.edges[-1], "b")])
    assert np.array_equal(phi.data, np.zeros(3))


def test_chain_equals_direct_composition():
    desc = chain_graph(4, width=3)
    desc["edges"][1]["kind"] = "identity"
    spec = build_graph(desc)
    store, theta = _params(spec)
    x = np.array([0.5, -1.0, 2.0])
    logits, phi = evaluate(spec, np.ones(3, bool), Tensor(x), theta)
    e0, e2 = spec.edges[0], spec.edges[2]
    h = np.maximum(store[edge_param_name(e0, "W")] @ x + store[edge_param_name(e0, "b")], 0)
    h2 = np.maximum(h, 0)
    out = store[edge_param_name(e2, "W")] @ h2 + store[edge_param_name(e2, "b")]
    assert logits.data.tobytes() == out.tobytes()
    assert np.array_equal(phi.data, store[PHI_W] @ h2 + store[PHI_B])


def test_sum_merge_doubles_with_two_identity_paths():
    # duplicate edges between one pair are rejected, so the second path goes via a relay layer
    desc = {"layers": [{"name": "x", "shape": [3]}, {"name": "relay", "shape": [3], "activation": "none"},
                       {"name": "m", "shape": [3], "activation": "none"}, {"name": "y", "shape": [2]}],
            "edges": [{"from": "x", "to": "m", "kind": "identity"},
                      {"from": "x", "to": "relay", "kind": "identity"},
                      {"from": "relay", "to": "m", "kind": "identity"},
                      {"from": "m", "to": "y", "kind": "linear"}],
            "phi_layer": "m"}
    spec = build_graph(desc)
    store, theta = _params(spec)
    x = np.array([1.0, -2.0, 0.25])
    one = np.array([True, False, False, True])
    _, phi_one = evaluate(spec, active_subgraph(spec, ArchSample(one)), Tensor(x), theta)
    _, phi_two = evaluate(spec, np.ones(4, bool), Tensor(x), theta)
    pre_one = (phi_one.data - store[PHI_B])
    pre_two = (phi_two.data - store[PHI_B])
    assert np.allclose(pre_two, 2 * pre_one, atol=1e-14)


def test_duplicate_edge_rejected():
    desc = chain_graph(2, kind="identity")
    desc["edges"].append(dict(desc["edges"][0]))
    with pytest.raises(ConfigurationError, match="duplicate"):
        build_graph(desc)


def test_kws_full_forward_runs():
    spec = builtin_graph("kws")
    store, theta = _params(spec, d_phi=4)
    x = Tensor(np.random.default_rng(0).standard_normal((1, 40, 98)))
    logits, phi = evaluate(spec, np.ones(spec.n_edges, bool), x, theta)
    assert logits.shape == (12,) and phi.shape == (4,)
