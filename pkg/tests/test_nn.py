import math

import numpy as np
import pytest

from oracles import block_fd_error, min_relu_margin, naive_conv, random_small_block
from zcnas.errors import ArgumentError, ConfigError, NumericError
from zcnas.nn import (AvgPool, BatchNorm, Conv2d, GlobalAvgPool, GraphBuilder, Identity, InitSpec,
                      Linear, ReLU, Zeroize, block_vjp, forward, graph_macs, init_weights)


def single_block(input_shape, *layers):
    builder = GraphBuilder(input_shape)
    builder.begin_block(0)
    out = builder.chain(0, *layers)
    builder.end_block(out)
    return builder.build()


def test_conv_hand_example():
    x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    conv = Conv2d(1, 1, 3)
    conv.weight = np.ones((1, 1, 3, 3))
    y, _ = conv.forward(x)
    expected = np.array([[12, 21, 16], [27, 45, 33], [24, 39, 28]], dtype=float)
    np.testing.assert_array_equal(y[0, 0], expected)


@pytest.mark.parametrize("cin,cout,k,s,p,g", [
    (3, 4, 3, 1, 1, 1), (4, 6, 3, 2, 1, 1), (4, 4, 5, 1, 2, 4), (6, 6, 3, 2, 1, 6),
    (4, 6, 1, 1, 0, 1), (4, 8, 3, 1, 1, 2), (2, 3, 7, 2, 3, 1),
])
def test_conv_matches_direct_loops(cin, cout, k, s, p, g):
    rng = np.random.default_rng(cin * 100 + cout)
    conv = Conv2d(cin, cout, k, s, p, groups=g)
    conv.weight = rng.normal(size=conv.param_shapes()[0][1])
    x = rng.normal(size=(2, cin, 9, 8))
    y, _ = conv.forward(x)
    np.testing.assert_allclose(y, naive_conv(x, conv.weight, s, p, g), atol=1e-12)
    assert y.shape[1:] == conv.out_shape(x.shape[1:])


def _adjoint_check(layer, x, rng, eps=1e-6):
    y, ctx = layer.forward(x)
    dy = rng.normal(size=y.shape)
    dx = layer.backward(dy, ctx)
    d = rng.normal(size=x.shape)
    fp = np.sum(dy * layer.forward(x + eps * d)[0])
    fm = np.sum(dy * layer.forward(x - eps * d)[0])
    fd = (fp - fm) / (2 * eps)
    an = np.sum(dx * d)
    return abs(fd - an) / max(abs(fd), abs(an), 1e-12)


@pytest.mark.parametrize("make", [
    lambda: Conv2d(3, 5, 3, 1, 1),
    lambda: Conv2d(4, 4, 3, 2, 1, groups=4),
    lambda: Conv2d(4, 6, 5, 2, 2, groups=2),
    lambda: BatchNorm(3),
    lambda: AvgPool(3, 1, 1),
    lambda: AvgPool(2, 2, 0),
    lambda: GlobalAvgPool(),
])
def test_layer_backward_is_adjoint(make):
    rng = np.random.default_rng(1)
    layer = make()
    shape = [("weight", s) for _, s in layer.param_shapes()]
    for name, s in shape:
        setattr(layer, name, rng.normal(size=s))
    cin = getattr(layer, "in_ch", getattr(layer, "ch", 3))
    if isinstance(layer, (AvgPool, GlobalAvgPool)):
        cin = 3
    x = rng.normal(size=(2, cin, 7, 7))
    assert _adjoint_check(layer, x, rng) <= 1e-6


def test_relu_backward_masks_and_zero_subgradient():
    relu = ReLU()
    x = np.array([-1.0, 0.0, 2.0]).reshape(1, 3, 1, 1)
    y, ctx = relu.forward(x)
    dx = relu.backward(np.ones_like(x), ctx)
    np.testing.assert_array_equal(dx.ravel(), [0.0, 0.0, 1.0])


def test_linear_backward_is_transpose():
    rng = np.random.default_rng(2)
    lin = Linear(5, 3)
    lin.weight = rng.normal(size=(3, 5))
    g = rng.normal(size=(4, 3, 1, 1))
    _, ctx = lin.forward(rng.normal(size=(4, 5, 1, 1)))
    np.testing.assert_array_equal(lin.backward(g, ctx)[:, :, 0, 0], g[:, :, 0, 0] @ lin.weight)


def test_batchnorm_normalizes_exactly_without_eps():
    rng = np.random.default_rng(3)
    x = 5.0 + 3.0 * rng.normal(size=(8, 4, 6, 6))
    y, _ = BatchNorm(4, eps=0.0).forward(x)
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-8)
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1.0, atol=1e-8)


def test_batchnorm_default_eps_is_close():
    rng = np.random.default_rng(3)
    y, _ = BatchNorm(4).forward(rng.normal(size=(8, 4, 6, 6)))
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1.0, atol=1e-4)


def test_macs_single_conv():
    assert Conv2d(16, 16, 3).macs((16, 32, 32)) == 9 * 16 * 16 * 1024 == 2_359_296


def test_grouped_macs_divide_by_groups():
    assert Conv2d(8, 8, 3, groups=8).macs((8, 4, 4)) == 9 * 8 * 16


def test_kaiming_fan_in_std():
    conv = Conv2d(64, 1792, 3)
    g = init_weights(single_block((64, 3, 3), conv), InitSpec(seed=7))
    w = g.nodes[1].layer.weight
    assert w.size >= 10 ** 6
    target = math.sqrt(2.0 / conv.fan_in())
    assert abs(w.std() / target - 1.0) < 0.01


def test_normal_init_mean():
    conv = Conv2d(64, 1792, 3)
    g = init_weights(single_block((64, 3, 3), conv), InitSpec("normal", seed=1, std=0.1))
    w = g.nodes[1].layer.weight
    assert abs(w.mean()) < 3 * 0.1 / math.sqrt(w.size)


@pytest.mark.parametrize("method", ["kaiming-normal-fan-out", "xavier-normal", "uniform"])
def test_other_init_methods_have_the_right_spread(method):
    conv = Conv2d(32, 256, 3)
    w = init_weights(single_block((32, 3, 3), conv), InitSpec(method, seed=2)).nodes[1].layer.weight
    if method == "uniform":
        assert w.min() >= -0.1 and w.max() <= 0.1
        target = 0.2 / math.sqrt(12)
    elif method == "xavier-normal":
        target = math.sqrt(2.0 / (conv.fan_in() + conv.fan_out()))
    else:
        target = math.sqrt(2.0 / conv.fan_out())
    assert abs(w.std() / target - 1.0) < 0.02


def test_init_is_deterministic_and_resets_batchnorm():
    def build():
        return single_block((3, 4, 4), Conv2d(3, 4, 3), BatchNorm(4), ReLU(), Conv2d(4, 2, 1))
    a = init_weights(build(), InitSpec(seed=7))
    b = init_weights(build(), InitSpec(seed=7))
    c = init_weights(build(), InitSpec(seed=8))
    assert a.nodes[1].layer.weight.tobytes() == b.nodes[1].layer.weight.tobytes()
    assert a.nodes[4].layer.weight.tobytes() == b.nodes[4].layer.weight.tobytes()
    assert not np.array_equal(a.nodes[1].layer.weight, c.nodes[1].layer.weight)
    a.nodes[2].layer.scale[:] = 3.0
    init_weights(a, InitSpec(seed=7))
    np.testing.assert_array_equal(a.nodes[2].layer.scale, 1.0)


def test_unknown_init_method():
    with pytest.raises(ConfigError):
        init_weights(single_block((3, 4, 4), Conv2d(3, 4, 3)), InitSpec("orthogonal", seed=0))


def test_keyed_nodes_share_weights_across_graphs():
    def build(extra):
        builder = GraphBuilder((3, 4, 4))
        builder.begin_block(0)
        x = builder.chain(0, Conv2d(3, 4, 3), key="a")
        if extra:
            x = builder.chain(x, Conv2d(4, 4, 1), key="b")
        builder.end_block(x)
        return init_weights(builder.build(), InitSpec(seed=3))
    np.testing.assert_array_equal(build(False).nodes[1].layer.weight,
                                  build(True).nodes[1].layer.weight)


def _two_block_graph(op):
    builder = GraphBuilder((2, 5, 5))
    x = builder.chain(0, Conv2d(2, 3, 3), BatchNorm(3))
    builder.begin_block(x)
    y = builder.chain(x, Conv2d(3, 3, 3))
    builder.end_block(y)
    builder.begin_block(y)
    z = builder.chain(y, op)
    builder.end_block(z)
    builder.chain(z, GlobalAvgPool(), Linear(3, 2))
    return init_weights(builder.build(), InitSpec(seed=0))


def test_zeroize_block_outputs_zero():
    g = _two_block_graph(Zeroize())
    outs, _ = forward(g, np.random.default_rng(0).normal(size=(2, 2, 5, 5)))
    assert not outs[1].any()


def test_identity_block_forward_and_vjp():
    g = _two_block_graph(Identity())
    outs, cache = forward(g, np.random.default_rng(0).normal(size=(2, 2, 5, 5)))
    np.testing.assert_array_equal(outs[1], outs[0])
    grad = np.random.default_rng(1).normal(size=outs[1].shape)
    np.testing.assert_array_equal(block_vjp(g, cache, 1, grad), grad)


def test_graph_structure():
    g = _two_block_graph(Identity())
    assert g.num_blocks == 2
    assert g.blocks[1].input_slot == g.blocks[0].output_slot
    assert set(g.blocks[0].nodes).isdisjoint(g.blocks[1].nodes)
    assert g.stem == (1, 2)
    assert len(g.head) == 2


def test_vjp_is_linear_in_grad_out():
    g = single_block((3, 6, 6), Conv2d(3, 4, 3), BatchNorm(4), ReLU(), AvgPool(3, 1, 1))
    init_weights(g, InitSpec(seed=1))
    rng = np.random.default_rng(4)
    outs, cache = forward(g, rng.normal(size=(2, 3, 6, 6)))
    g1, g2 = rng.normal(size=outs[0].shape), rng.normal(size=outs[0].shape)
    lhs = block_vjp(g, cache, 0, 2.0 * g1 - 0.5 * g2)
    rhs = 2.0 * block_vjp(g, cache, 0, g1) - 0.5 * block_vjp(g, cache, 0, g2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_relu_block_vjp_matches_finite_differences():
    g = single_block((3, 5, 5), ReLU())
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 3, 5, 5))
    x[np.abs(x) < 1e-3] = 0.5
    outs, cache = forward(g, x)
    grad = rng.normal(size=outs[0].shape)
    vjp = block_vjp(g, cache, 0, grad)
    np.testing.assert_array_equal(vjp, np.where(x > 0, grad, 0.0))
    eps = 1e-6
    d = rng.normal(size=x.shape)
    fd = (np.sum(grad * forward(g, x + eps * d)[0][0])
          - np.sum(grad * forward(g, x - eps * d)[0][0])) / (2 * eps)
    assert abs(fd - np.sum(vjp * d)) / abs(fd) <= 1e-5


def test_multi_path_merge_sums_gradients():
    builder = GraphBuilder((2, 4, 4))
    builder.begin_block(0)
    a = builder.add(Identity(), 0)
    b = builder.chain(0, Conv2d(2, 2, 1))
    out = builder.add(Identity(), a, b)
    builder.end_block(out)
    g = init_weights(builder.build(), InitSpec(seed=0))
    rng = np.random.default_rng(6)
    outs, cache = forward(g, rng.normal(size=(1, 2, 4, 4)))
    grad = rng.normal(size=outs[0].shape)
    W = g.nodes[b].layer.weight[:, :, 0, 0]
    expected = grad + np.einsum("oc,bohw->bchw", W, grad)
    np.testing.assert_allclose(block_vjp(g, cache, 0, grad), expected, atol=1e-12)


def test_vjp_shape_mismatch():
    g = single_block((3, 4, 4), Identity())
    outs, cache = forward(g, np.zeros((1, 3, 4, 4)))
    with pytest.raises(ArgumentError):
        block_vjp(g, cache, 0, np.zeros((1, 2, 4, 4)))
    with pytest.raises(ArgumentError):
        block_vjp(g, cache, 3, outs[0])


def test_nonfinite_activation_names_the_node():
    g = single_block((1, 2, 2), Conv2d(1, 1, 1), ReLU())
    g.nodes[1].layer.weight = np.full((1, 1, 1, 1), np.inf)
    with pytest.raises(NumericError) as info:
        forward(g, np.ones((1, 1, 2, 2)))
    assert info.value.node == 1


def test_input_shape_checked():
    g = single_block((3, 4, 4), Identity())
    with pytest.raises(ArgumentError):
        forward(g, np.zeros((1, 2, 4, 4)))


def test_graph_macs_sums_layers():
    g = single_block((3, 8, 8), Conv2d(3, 4, 3), BatchNorm(4), ReLU(), Conv2d(4, 8, 1, 2, 0))
    assert graph_macs(g) == 9 * 3 * 4 * 64 + 4 * 8 * 16


def test_random_blocks_vjp_vs_finite_differences():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 20:
        g = random_small_block(rng)
        x = rng.normal(size=(2,) + g.input_shape)
        if min_relu_margin(g, x) < 1e-3:
            continue
        assert block_fd_error(g, x, rng) <= 1e-4
        checked += 1
