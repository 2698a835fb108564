from .graph import (
    EDGE_KINDS,
    EdgeModuleSpec,
    Layer,
    SuperNetworkSpec,
    build_graph,
    builtin_graph,
    load_graph,
)
from .arch import (
    LOG_PROB_EPS,
    ArchSample,
    active_subgraph,
    log_prob,
    most_probable_architecture,
    sample_architecture,
)
from .cost import CostModel, architecture_cost, controller_cost, edge_cost, gru_flops, linear_flops
from .network import PHI_B, PHI_W, apply_edge, edge_param_name, evaluate, forward_layers, init_edge_params

__all__ = [
    "EDGE_KINDS", "EdgeModuleSpec", "Layer", "SuperNetworkSpec", "build_graph", "builtin_graph",
    "load_graph", "LOG_PROB_EPS", "ArchSample", "active_subgraph", "log_prob",
    "most_probable_architecture", "sample_architecture", "CostModel", "architecture_cost",
    "controller_cost", "edge_cost", "gru_flops", "linear_flops", "PHI_B", "PHI_W", "apply_edge",
    "edge_param_name", "evaluate", "forward_layers", "init_edge_params",
]
