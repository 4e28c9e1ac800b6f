"""Minimal float64 network kernel: layers, DAG graph, forward and block VJPs."""

from .graph import (
    INIT_METHODS,
    ForwardCache,
    GraphBuilder,
    InitSpec,
    NetworkGraph,
    Node,
    PrimaryBlock,
    block_vjp,
    forward,
    graph_macs,
    init_weights,
)
from .layers import (
    AvgPool,
    BatchNorm,
    Conv2d,
    GlobalAvgPool,
    Identity,
    LayerSpec,
    Linear,
    ReLU,
    Zeroize,
)
