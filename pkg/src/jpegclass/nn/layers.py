"""Layers with explicit forward/backward passes over numpy arrays.

Feature maps are [H, W, Ch] (channel-fastest), token sequences are
[N, D].  Gradients accumulate into each layer's ``g`` dict so a batch
can sum per-sample gradients before an optimizer step.  All layers are
dtype-generic: parameters are created in the layer's dtype and the
backward pass assumes the cached forward activations.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeMismatch


def he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base: parameter/gradient bookkeeping shared by all layers."""

    def __init__(self):
        self.p = {}
        self.g = {}

    def _add_param(self, name, value):
        self.p[name] = value
        self.g[name] = np.zeros_like(value)

    def zero_grad(self):
        for v in self.g.values():
            v[...] = 0

    def named_params(self, prefix=""):
        for name, v in self.p.items():
            yield (prefix + name if prefix else name), v

    def named_grads(self, prefix=""):
        for name, v in self.g.items():
            yield (prefix + name if prefix else name), v

    def cast(self, dtype):
        for name in self.p:
            self.p[name] = self.p[name].astype(dtype)
            self.g[name] = self.g[name].astype(dtype)
        return self


class Conv2D(Layer):
    """k x k cross-correlation, zero-padded 'same', H' = ceil(H/stride)."""

    def __init__(self, kernel, c_in, c_out, stride=1, rng=None, dtype=np.float32):
        super().__init__()
        self.kernel = kernel
        self.c_in = c_in
        self.c_out = c_out
        self.stride = stride
        rng = rng or np.random.default_rng(0)
        fan_in = kernel * kernel * c_in
        self._add_param("W", he_uniform(rng, (kernel, kernel, c_in, c_out), fan_in, dtype))
        self._add_param("b", np.zeros(c_out, dtype=dtype))

    def out_shape(self, h, w):
        s = self.stride
        return (h + s - 1) // s, (w + s - 1) // s

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeMismatch(f"conv expects [H,W,{self.c_in}], got {x.shape}")
        h, w, _ = x.shape
        k, s = self.kernel, self.stride
        oh, ow = self.out_shape(h, w)
        pad_h = max((oh - 1) * s + k - h, 0)
        pad_w = max((ow - 1) * s + k - w, 0)
        pt, pl = pad_h // 2, pad_w // 2
        xp = np.pad(x, ((pt, pad_h - pt), (pl, pad_w - pl), (0, 0)))
        out = np.tile(self.p["b"], (oh, ow, 1)).astype(x.dtype)
        W = self.p["W"]
        for di in range(k):
            for dj in range(k):
                xs = xp[di:di + oh * s:s, dj:dj + ow * s:s, :]
                out += xs.reshape(oh * ow, self.c_in).dot(W[di, dj]).reshape(oh, ow, self.c_out)
        self._cache = (xp, x.shape, (pt, pl), (oh, ow))
        return out

    def backward(self, dy):
        xp, x_shape, (pt, pl), (oh, ow) = self._cache
        k, s = self.kernel, self.stride
        W = self.p["W"]
        dyf = dy.reshape(oh * ow, self.c_out)
        self.g["b"] += dy.sum(axis=(0, 1))
        dxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                xs = xp[di:di + oh * s:s, dj:dj + ow * s:s, :].reshape(oh * ow, self.c_in)
                self.g["W"][di, dj] += xs.T.dot(dyf)
                dxp[di:di + oh * s:s, dj:dj + ow * s:s, :] += dyf.dot(W[di, dj].T).reshape(oh, ow, self.c_in)
        h, w, _ = x_shape
        return dxp[pt:pt + h, pl:pl + w, :]


class PointwiseSeparableConv(Layer):
    """1x1 channel-mixing conv followed by a k x k spatial conv.

    Defined literally as the composition of two Conv2D stages so the
    separable layer is bit-identical to chaining them by hand.
    """

    def __init__(self, kernel, c_in, c_mid, c_out, stride=1, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.mix = Conv2D(1, c_in, c_mid, stride=1, rng=rng, dtype=dtype)
        self.spatial = Conv2D(kernel, c_mid, c_out, stride=stride, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.spatial.forward(self.mix.forward(x))

    def backward(self, dy):
        return self.mix.backward(self.spatial.backward(dy))

    def zero_grad(self):
        self.mix.zero_grad()
        self.spatial.zero_grad()

    def named_params(self, prefix=""):
        yield from self.mix.named_params(prefix + "mix.")
        yield from self.spatial.named_params(prefix + "spatial.")

    def named_grads(self, prefix=""):
        yield from self.mix.named_grads(prefix + "mix.")
        yield from self.spatial.named_grads(prefix + "spatial.")

    def cast(self, dtype):
        self.mix.cast(dtype)
        self.spatial.cast(dtype)
        return self


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, 0)     # unlike where(), propagates NaN

    def backward(self, dy):
        return np.where(self._mask, dy, 0)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        rng = rng or np.random.default_rng(0)
        self._add_param("W", he_uniform(rng, (n_in, n_out), n_in, dtype))
        self._add_param("b", np.zeros(n_out, dtype=dtype))

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"dense expects [..,{self.n_in}], got {x.shape}")
        self._x = x
        return x.dot(self.p["W"]) + self.p["b"]

    def backward(self, dy):
        x = self._x
        if x.ndim == 1:
            self.g["W"] += np.outer(x, dy)
            self.g["b"] += dy
        else:
            self.g["W"] += x.reshape(-1, self.n_in).T.dot(dy.reshape(-1, self.n_out))
            self.g["b"] += dy.reshape(-1, self.n_out).sum(axis=0)
        return dy.dot(self.p["W"].T)


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(-1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Concat(Layer):
    """Channel-axis concatenation of same-spatial-size maps."""

    def forward(self, xs):
        shapes = {x.shape[:2] for x in xs}
        if len(shapes) != 1:
            raise ShapeMismatch(f"concat inputs disagree spatially: {[x.shape for x in xs]}")
        self._channels = [x.shape[2] for x in xs]
        return np.concatenate(xs, axis=2)

    def backward(self, dy):
        out = []
        pos = 0
        for c in self._channels:
            out.append(dy[:, :, pos:pos + c])
            pos += c
        return out


class ResidualBlock(Layer):
    """ReLU( x + Conv3x3(ReLU(Conv3x3(x))) ), channel-preserving."""

    def __init__(self, channels, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.conv1 = Conv2D(3, channels, channels, stride=1, rng=rng, dtype=dtype)
        self.conv2 = Conv2D(3, channels, channels, stride=1, rng=rng, dtype=dtype)
        self.relu_mid = ReLU()
        self.relu_out = ReLU()

    def forward(self, x):
        h = self.relu_mid.forward(self.conv1.forward(x))
        return self.relu_out.forward(x + self.conv2.forward(h))

    def backward(self, dy):
        d = self.relu_out.backward(dy)
        dh = self.relu_mid.backward(self.conv2.backward(d))
        return d + self.conv1.backward(dh)

    def zero_grad(self):
        self.conv1.zero_grad()
        self.conv2.zero_grad()

    def named_params(self, prefix=""):
        yield from self.conv1.named_params(prefix + "conv1.")
        yield from self.conv2.named_params(prefix + "conv2.")

    def named_grads(self, prefix=""):
        yield from self.conv1.named_grads(prefix + "conv1.")
        yield from self.conv2.named_grads(prefix + "conv2.")

    def cast(self, dtype):
        self.conv1.cast(dtype)
        self.conv2.cast(dtype)
        return self


class PositionalEmbedding(Layer):
    """Learned additive embedding over a fixed-length token sequence."""

    def __init__(self, n_tokens, dim, dtype=np.float32):
        super().__init__()
        self._add_param("P", np.zeros((n_tokens, dim), dtype=dtype))

    def forward(self, x):
        if x.shape != self.p["P"].shape:
            raise ShapeMismatch(f"pos-embed expects {self.p['P'].shape}, got {x.shape}")
        return x + self.p["P"]

    def backward(self, dy):
        self.g["P"] += dy
        return dy


class MeanPool(Layer):
    """Mean over the token axis: [N, D] -> [D]."""

    def forward(self, x):
        self._n = x.shape[0]
        return x.mean(axis=0)

    def backward(self, dy):
        return np.tile(dy / self._n, (self._n, 1))


def _softmax_rows(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class MultiHeadAttention(Layer):
    """Scaled dot-product attention with residual: y = x + MHA(x).

    Projections Wq, Wk, Wv, Wo are [D, D]; heads are contiguous slices
    of width D/heads; per-head scale is 1/sqrt(D/heads).
    """

    def __init__(self, dim, heads, rng=None, dtype=np.float32):
        super().__init__()
        if dim % heads != 0:
            raise ShapeMismatch(f"dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        rng = rng or np.random.default_rng(0)
        for name in ("Wq", "Wk", "Wv", "Wo"):
            self._add_param(name, xavier_uniform(rng, (dim, dim), dim, dim, dtype))

    def _split(self, x):
        n = x.shape[0]
        return x.reshape(n, self.heads, self.head_dim).transpose(1, 0, 2)

    def _merge(self, x):
        return x.transpose(1, 0, 2).reshape(-1, self.dim)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeMismatch(f"attention expects [N,{self.dim}], got {x.shape}")
        q = self._split(x.dot(self.p["Wq"]))
        k = self._split(x.dot(self.p["Wk"]))
        v = self._split(x.dot(self.p["Wv"]))
        scores = np.matmul(q, k.transpose(0, 2, 1)) * self.scale
        att = _softmax_rows(scores)
        ctx = self._merge(np.matmul(att, v))
        self._cache = (x, q, k, v, att, ctx)
        return x + ctx.dot(self.p["Wo"])

    def backward(self, dy):
        x, q, k, v, att, ctx = self._cache
        self.g["Wo"] += ctx.T.dot(dy)
        dctx = self._split(dy.dot(self.p["Wo"].T))
        datt = np.matmul(dctx, v.transpose(0, 2, 1))
        dv = np.matmul(att.transpose(0, 2, 1), dctx)
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dq = np.matmul(ds, k) * self.scale
        dk = np.matmul(ds.transpose(0, 2, 1), q) * self.scale
        dq, dk, dv = self._merge(dq), self._merge(dk), self._merge(dv)
        self.g["Wq"] += x.T.dot(dq)
        self.g["Wk"] += x.T.dot(dk)
        self.g["Wv"] += x.T.dot(dv)
        dx = dq.dot(self.p["Wq"].T) + dk.dot(self.p["Wk"].T) + dv.dot(self.p["Wv"].T)
        return dx + dy
