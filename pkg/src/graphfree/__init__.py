"""Graph-free spatial learning: GFS layers, graph convolution baselines and benchmarks."""

__version__ = "0.1.0"

from .adjacency import (AdjacencyMatrix, add_self_loop, gen_distance_kernel, gen_identity,
                        gen_random, gen_uniform, ln_equivalent_matrix)
from .layers import (GfsParams, GraphConvParams, LayerNormSpec, Variant, backward,
                     gfs_forward, gfs_variant_forward, graph_conv_forward,
                     layer_norm_forward, linear_relu_forward)
from .metrics import MetricsRecord, evaluate, mae, mape, rmse

__all__ = [
    "AdjacencyMatrix", "add_self_loop", "gen_distance_kernel", "gen_identity", "gen_random",
    "gen_uniform", "ln_equivalent_matrix", "GfsParams", "GraphConvParams", "LayerNormSpec",
    "Variant", "backward", "gfs_forward", "gfs_variant_forward", "graph_conv_forward",
    "layer_norm_forward", "linear_relu_forward", "MetricsRecord", "evaluate", "mae", "mape",
    "rmse",
]
