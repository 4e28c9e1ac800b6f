"""Layer kinds with forward passes and input-gradient (VJP) backward passes.

Every layer maps a 4-D float64 array (batch, channels, height, width) to
another 4-D array.  ``forward`` returns ``(y, ctx)``; ``ctx`` holds only what
``backward`` needs, so a cached forward pass stays small.  No layer ever
computes weight gradients.
"""

from __future__ import annotations

import numpy as np

from ..errors import ArgumentError


class LayerSpec:
    kind = "abstract"

    def param_shapes(self):
        """Ordered ``(name, shape)`` pairs of trainable weights."""
        return []

    def out_shape(self, shape):
        return shape

    def macs(self, in_shape):
        return 0

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, ctx):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


def _window(n, k, s, p):
    return (n + 2 * p - k) // s + 1


class Conv2d(LayerSpec):
    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=None, groups=1):
        if padding is None:
            padding = kernel // 2
        if in_ch % groups or out_ch % groups:
            raise ArgumentError(f"channels {in_ch}->{out_ch} not divisible by groups {groups}")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding, self.groups = kernel, stride, padding, groups
        self.weight = None

    def param_shapes(self):
        return [("weight", (self.out_ch, self.in_ch // self.groups, self.kernel, self.kernel))]

    def fan_in(self):
        return (self.in_ch // self.groups) * self.kernel ** 2

    def fan_out(self):
        return self.out_ch * self.kernel ** 2

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.in_ch:
            raise ArgumentError(f"conv expects {self.in_ch} channels, got {c}")
        k, s, p = self.kernel, self.stride, self.padding
        return (self.out_ch, _window(h, k, s, p), _window(w, k, s, p))

    def macs(self, in_shape):
        _, ho, wo = self.out_shape(in_shape)
        return self.kernel ** 2 * self.in_ch * self.out_ch * ho * wo // self.groups

    def _offsets(self, ho, wo):
        k, s = self.kernel, self.stride
        for i in range(k):
            for j in range(k):
                yield i, j, (slice(None), slice(None), slice(i, i + s * (ho - 1) + 1, s),
                             slice(j, j + s * (wo - 1) + 1, s))

    def forward(self, x):
        b, c, h, w = x.shape
        _, ho, wo = self.out_shape((c, h, w))
        p, g = self.padding, self.groups
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        W = self.weight
        if g == 1:
            y = np.zeros((self.out_ch, b, ho, wo))
            for i, j, sl in self._offsets(ho, wo):
                y += np.tensordot(W[:, :, i, j], xp[sl], axes=([1], [1]))
            y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
        elif g == c and g == self.out_ch:
            y = np.zeros((b, c, ho, wo))
            for i, j, sl in self._offsets(ho, wo):
                y += xp[sl] * W[:, 0, i, j][None, :, None, None]
        else:
            cg, og = c // g, self.out_ch // g
            Wg = W.reshape(g, og, cg, self.kernel, self.kernel)
            y = np.zeros((b, g, og, ho, wo))
            for i, j, sl in self._offsets(ho, wo):
                xs = xp[sl].reshape(b, g, cg, ho, wo)
                y += np.einsum("goc,bgchw->bgohw", Wg[:, :, :, i, j], xs, optimize=True)
            y = y.reshape(b, self.out_ch, ho, wo)
        return y, (b, c, h, w)

    def backward(self, dy, ctx):
        b, c, h, w = ctx
        ho, wo = dy.shape[2:]
        p, g = self.padding, self.groups
        dxp = np.zeros((b, c, h + 2 * p, w + 2 * p))
        W = self.weight
        if g == 1:
            for i, j, sl in self._offsets(ho, wo):
                dxp[sl] += np.tensordot(dy, W[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
        elif g == c and g == self.out_ch:
            for i, j, sl in self._offsets(ho, wo):
                dxp[sl] += dy * W[:, 0, i, j][None, :, None, None]
        else:
            cg, og = c // g, self.out_ch // g
            Wg = W.reshape(g, og, cg, self.kernel, self.kernel)
            dyg = dy.reshape(b, g, og, ho, wo)
            for i, j, sl in self._offsets(ho, wo):
                d = np.einsum("goc,bgohw->bgchw", Wg[:, :, :, i, j], dyg, optimize=True)
                dxp[sl] += d.reshape(b, c, ho, wo)
        if p:
            return dxp[:, :, p:p + h, p:p + w]
        return dxp

    def __repr__(self):
        return (f"Conv2d({self.in_ch}, {self.out_ch}, k={self.kernel}, s={self.stride}, "
                f"p={self.padding}, g={self.groups})")


class BatchNorm(LayerSpec):
    """Train-mode batch norm: normalizes with the statistics of the current batch.

    ``eps`` defaults to 1e-5; with ``eps=0`` the normalized output has exactly
    zero mean and unit variance per channel.
    """

    kind = "batch-norm"

    def __init__(self, ch, eps=1e-5):
        self.ch, self.eps = ch, eps
        self.scale = np.ones(ch)
        self.shift = np.zeros(ch)

    def out_shape(self, shape):
        if shape[0] != self.ch:
            raise ArgumentError(f"batch-norm expects {self.ch} channels, got {shape[0]}")
        return shape

    def forward(self, x):
        mu = x.mean(axis=(0, 2, 3), keepdims=True)
        xc = x - mu
        var = np.mean(xc * xc, axis=(0, 2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        if np.all(self.scale == 1.0) and np.all(self.shift == 0.0):
            return xhat, (xhat, inv)
        y = xhat * self.scale[None, :, None, None] + self.shift[None, :, None, None]
        return y, (xhat, inv)

    def backward(self, dy, ctx):
        xhat, inv = ctx
        dxhat = dy * self.scale[None, :, None, None]
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (inv / m) * (m * dxhat - s1 - xhat * s2)

    def __repr__(self):
        return f"BatchNorm({self.ch})"


class ReLU(LayerSpec):
    kind = "relu"

    def forward(self, x):
        y = np.maximum(x, 0.0)
        return y, y

    def backward(self, dy, ctx):
        # subgradient at 0 is 0
        return np.where(ctx > 0.0, dy, 0.0)


class AvgPool(LayerSpec):
    """Average pooling; padded cells are excluded from the divisor."""

    kind = "avgpool"

    def __init__(self, kernel, stride=1, padding=0):
        self.kernel, self.stride, self.padding = kernel, stride, padding

    def out_shape(self, shape):
        c, h, w = shape
        k, s, p = self.kernel, self.stride, self.padding
        return (c, _window(h, k, s, p), _window(w, k, s, p))

    def _counts(self, h, w, ho, wo):
        k, s, p = self.kernel, self.stride, self.padding

        def axis_counts(n, no):
            start = np.arange(no) * s - p
            return np.minimum(start + k, n) - np.maximum(start, 0)

        return np.outer(axis_counts(h, ho), axis_counts(w, wo)).astype(np.float64)

    def forward(self, x):
        b, c, h, w = x.shape
        _, ho, wo = self.out_shape((c, h, w))
        k, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        y = np.zeros((b, c, ho, wo))
        for i in range(k):
            for j in range(k):
                y += xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]
        counts = self._counts(h, w, ho, wo)
        return y / counts, (x.shape, counts)

    def backward(self, dy, ctx):
        (b, c, h, w), counts = ctx
        k, s, p = self.kernel, self.stride, self.padding
        ho, wo = dy.shape[2:]
        g = dy / counts
        dxp = np.zeros((b, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += g
        return dxp[:, :, p:p + h, p:p + w] if p else dxp

    def __repr__(self):
        return f"AvgPool(k={self.kernel}, s={self.stride}, p={self.padding})"


class GlobalAvgPool(LayerSpec):
    kind = "global-avgpool"

    def out_shape(self, shape):
        return (shape[0], 1, 1)

    def forward(self, x):
        return x.mean(axis=(2, 3), keepdims=True), x.shape

    def backward(self, dy, ctx):
        b, c, h, w = ctx
        return np.broadcast_to(dy / (h * w), ctx).copy()


class Linear(LayerSpec):
    """Fully connected layer on (batch, in, 1, 1) arrays."""

    kind = "linear"

    def __init__(self, in_features, out_features):
        self.in_features, self.out_features = in_features, out_features
        self.weight = None
        self.bias = np.zeros(out_features)

    def param_shapes(self):
        return [("weight", (self.out_features, self.in_features))]

    def fan_in(self):
        return self.in_features

    def fan_out(self):
        return self.out_features

    def out_shape(self, shape):
        c, h, w = shape
        if (c, h, w) != (self.in_features, 1, 1):
            raise ArgumentError(f"linear expects ({self.in_features}, 1, 1), got {shape}")
        return (self.out_features, 1, 1)

    def macs(self, in_shape):
        return self.in_features * self.out_features

    def forward(self, x):
        y = x[:, :, 0, 0] @ self.weight.T + self.bias
        return y[:, :, None, None], None

    def backward(self, dy, ctx):
        return (dy[:, :, 0, 0] @ self.weight)[:, :, None, None]

    def __repr__(self):
        return f"Linear({self.in_features}, {self.out_features})"


class Zeroize(LayerSpec):
    """The ``none`` operation: output is identically zero."""

    kind = "zeroize"

    def forward(self, x):
        return np.zeros_like(x), None

    def backward(self, dy, ctx):
        return np.zeros_like(dy)


class Identity(LayerSpec):
    """Skip connection.  Also used as the summing merge node of a DAG."""

    kind = "identity"

    def forward(self, x):
        return x, None

    def backward(self, dy, ctx):
        return dy
