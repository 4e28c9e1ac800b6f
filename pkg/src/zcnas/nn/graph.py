"""Network DAG, deterministic initialization, cached forward pass and block VJPs."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ..errors import ArgumentError, ConfigError, NumericError
from ..rng import stream
from .layers import BatchNorm, Identity, LayerSpec

INIT_METHODS = (
    "kaiming-normal-fan-in",
    "kaiming-normal-fan-out",
    "xavier-normal",
    "normal",
    "uniform",
)


@dataclass(frozen=True)
class InitSpec:
    method: str = "kaiming-normal-fan-in"
    seed: int = 0
    std: float = 0.1
    lo: float = -0.1
    hi: float = 0.1


@dataclass
class Node:
    layer: LayerSpec
    inputs: tuple
    shape: tuple  # per-sample (c, h, w) of the output
    key: str | None = None  # structural name used to key weight streams


@dataclass(frozen=True)
class PrimaryBlock:
    """One primary block.

    ``nodes`` are the block's own layers.  ``span`` is every node between the
    input slot and the output slot, which can additionally include fixed
    non-primary nodes (e.g. a downsampling block) that sit between two
    consecutive primary blocks.  Backpropagation for the block walks ``span``.
    """

    input_slot: int
    output_slot: int
    nodes: tuple
    span: tuple


@dataclass
class NetworkGraph:
    """Topologically ordered DAG.  Node 0 is the network input."""

    nodes: list
    blocks: list
    stem: tuple = ()
    head: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def input_shape(self):
        return self.nodes[0].shape

    @property
    def num_blocks(self):
        return len(self.blocks)

    def block_input_shape(self, l):
        return self.nodes[self.blocks[l].input_slot].shape

    def block_output_shape(self, l):
        return self.nodes[self.blocks[l].output_slot].shape


class GraphBuilder:
    """Incrementally assemble a :class:`NetworkGraph`.

    ``add`` sums its inputs before applying the layer, so a multi-input
    :class:`Identity` is a merge point.
    """

    def __init__(self, input_shape):
        self.nodes = [Node(Identity(), (), tuple(input_shape))]
        self.blocks = []
        self._block_start = None
        self._block_input = None
        self._pending_prefix_start = None
        self._last_block_output = None

    def add(self, layer, *inputs, key=None):
        if not inputs:
            raise ArgumentError("a node needs at least one input")
        shapes = {self.nodes[i].shape for i in inputs}
        if len(shapes) != 1:
            raise ArgumentError(f"merge of mismatched shapes {shapes}")
        shape = layer.out_shape(shapes.pop())
        self.nodes.append(Node(layer, tuple(inputs), shape, key))
        return len(self.nodes) - 1

    def chain(self, src, *layers, key=None):
        """Apply ``layers`` in sequence; node keys become ``key/0``, ``key/1``, ..."""
        for pos, layer in enumerate(layers):
            src = self.add(layer, src, key=None if key is None else f"{key}/{pos}")
        return src

    def begin_block(self, input_slot):
        """Start a primary block whose first layers read ``input_slot``.

        For every block after the first, the block input is the previous
        block's output and any fixed nodes added since then join the span.
        """
        if self._last_block_output is None:
            self._block_input = input_slot
            self._pending_prefix_start = len(self.nodes)
        else:
            self._block_input = self._last_block_output
        self._block_start = len(self.nodes)

    def end_block(self, output_slot):
        span_start = self._pending_prefix_start
        block = PrimaryBlock(
            input_slot=self._block_input,
            output_slot=output_slot,
            nodes=tuple(range(self._block_start, output_slot + 1)),
            span=tuple(range(span_start, output_slot + 1)),
        )
        allowed = set(block.span) | {block.input_slot}
        for i in block.span:
            if not set(self.nodes[i].inputs) <= allowed:
                raise ArgumentError(f"node {i} of block {len(self.blocks)} reads outside its span")
        self.blocks.append(block)
        self._last_block_output = output_slot
        self._pending_prefix_start = output_slot + 1

    def build(self, meta=None):
        if not self.blocks:
            raise ArgumentError("a network needs at least one primary block")
        first = self.blocks[0].span[0]
        last = self.blocks[-1].output_slot
        return NetworkGraph(
            nodes=self.nodes,
            blocks=self.blocks,
            stem=tuple(range(1, first)),
            head=tuple(range(last + 1, len(self.nodes))),
            meta=dict(meta or {}),
        )


def _draw(layer, shape, spec, rng):
    m = spec.method
    if m == "kaiming-normal-fan-in":
        return rng.normal(0.0, math.sqrt(2.0 / layer.fan_in()), shape)
    if m == "kaiming-normal-fan-out":
        return rng.normal(0.0, math.sqrt(2.0 / layer.fan_out()), shape)
    if m == "xavier-normal":
        return rng.normal(0.0, math.sqrt(2.0 / (layer.fan_in() + layer.fan_out())), shape)
    if m == "normal":
        return rng.normal(0.0, spec.std, shape)
    if m == "uniform":
        return rng.uniform(spec.lo, spec.hi, shape)
    raise ConfigError(f"unknown init method {m!r}; expected one of {INIT_METHODS}")


def init_weights(graph, spec):
    """Fill every trainable weight in place and return the graph.

    Each weight comes from its own stream keyed by (seed, node key, weight
    index).  Node keys name structural positions, so two networks that place
    the same op at the same position draw the same weights; unkeyed nodes
    fall back to their index.
    """
    if spec.method not in INIT_METHODS:
        raise ConfigError(f"unknown init method {spec.method!r}; expected one of {INIT_METHODS}")
    for idx, node in enumerate(graph.nodes):
        layer = node.layer
        for widx, (name, shape) in enumerate(layer.param_shapes()):
            rng = stream(spec.seed, "init", node.key if node.key else idx, widx)
            setattr(layer, name, _draw(layer, shape, spec, rng))
        if isinstance(layer, BatchNorm):
            layer.scale = np.ones(layer.ch)
            layer.shift = np.zeros(layer.ch)
    return graph


@dataclass
class ForwardCache:
    ctx: list
    values: dict  # retained node outputs (block slots only)
    batch: int
    logits: np.ndarray | None = None


def forward(graph, x):
    """Run the network on ``x``; return block outputs f_1..f_L and the cache."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or tuple(x.shape[1:]) != graph.input_shape:
        raise ArgumentError(f"input shape {x.shape} does not match network input {graph.input_shape}")
    keep = set()
    for b in graph.blocks:
        keep.add(b.input_slot)
        keep.add(b.output_slot)
    # free node values as soon as their last consumer ran
    last_use = {}
    for i, node in enumerate(graph.nodes):
        for j in node.inputs:
            last_use[j] = i
    values = {0: x}
    ctx = [None] * len(graph.nodes)
    retained = {0: x} if 0 in keep else {}
    for i in range(1, len(graph.nodes)):
        node = graph.nodes[i]
        ins = node.inputs
        if len(ins) == 1:
            inp = values[ins[0]]
        else:
            inp = values[ins[0]] + values[ins[1]]
            for j in ins[2:]:
                inp = inp + values[j]
        with np.errstate(over="ignore", invalid="ignore"):
            y, c = node.layer.forward(inp)
        if not np.isfinite(y).all():
            raise NumericError("non-finite activation", node=i)
        values[i] = y
        ctx[i] = c
        if i in keep:
            retained[i] = y
        for j in ins:
            if last_use.get(j) == i and j not in keep:
                values.pop(j, None)
    outputs = [retained[b.output_slot] for b in graph.blocks]
    cache = ForwardCache(ctx=ctx, values=retained, batch=x.shape[0],
                         logits=values.get(len(graph.nodes) - 1))
    return outputs, cache


def block_vjp(graph, cache, l, grad_out):
    """Gradient of <grad_out, f_l> with respect to block l's input f_{l-1}.

    ``l`` is 0-based.  Only the nodes in block l's span are traversed.
    """
    if not 0 <= l < graph.num_blocks:
        raise ArgumentError(f"block index {l} out of range [0, {graph.num_blocks})")
    block = graph.blocks[l]
    expected = (cache.batch,) + graph.nodes[block.output_slot].shape
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != expected:
        raise ArgumentError(f"grad_out shape {grad_out.shape} != block output shape {expected}")
    grads = {block.output_slot: grad_out}
    in_span = set(block.span)
    for i in reversed(block.span):
        g = grads.pop(i, None)
        if g is None:
            continue
        node = graph.nodes[i]
        with np.errstate(over="ignore", invalid="ignore"):
            dx = node.layer.backward(g, cache.ctx[i])
        if not np.isfinite(dx).all():
            raise NumericError("non-finite gradient", node=i)
        for j in node.inputs:
            if j in in_span or j == block.input_slot:
                grads[j] = grads[j] + dx if j in grads else dx
    g_in = grads.get(block.input_slot)
    if g_in is None:
        g_in = np.zeros((cache.batch,) + graph.nodes[block.input_slot].shape)
    return g_in


def graph_macs(graph):
    """Per-sample multiply-accumulate count by walking every node's shapes."""
    total = 0
    for node in graph.nodes[1:]:
        in_shape = graph.nodes[node.inputs[0]].shape
        total += node.layer.macs(in_shape)
    return total
