"""The five classifier architectures.

All five share per-component stems whose strides equalize the Y branch
with the half-resolution chroma branches, followed by channel
concatenation.  Methods 1-3 continue through a residual conv trunk;
methods 4 and 5 flatten the concatenated cells into a token sequence
for multi-head attention.  Methods 3 and 5 swap the stem convolutions
for pointwise-separable ones (channel mixing along the bit axis first).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import GeometryMismatch
from .features import ImageGeometry
from .nn.layers import (
    Concat,
    Conv2D,
    Dense,
    Flatten,
    MeanPool,
    MultiHeadAttention,
    PointwiseSeparableConv,
    PositionalEmbedding,
    ReLU,
)
from .nn.layers import ResidualBlock
from .nn.loss import softmax


@dataclass(frozen=True)
class MethodSpec:
    method_id: int
    num_classes: int = 101
    luma_grid: tuple = (32, 32)         # (gridH, gridW) of the Y block grid
    chroma_grid: tuple = (16, 16)
    crop_width: int = 128               # bit channels, methods 2-5
    stem_channels: int = 64
    trunk_channels: int = 256
    residual_blocks: int = 4
    attention_heads: int = 4
    attention_layers: int = 2

    def __post_init__(self):
        if self.method_id not in (1, 2, 3, 4, 5):
            raise ValueError(f"method_id must be 1..5, got {self.method_id}")
        lh, lw = self.luma_grid
        ch, cw = self.chroma_grid
        if (lh, lw) != (2 * ch, 2 * cw):
            raise GeometryMismatch(
                f"luma grid {self.luma_grid} is not twice chroma grid "
                f"{self.chroma_grid} (4:2:0 expected)")

    @property
    def input_channels(self) -> int:
        return 64 if self.method_id == 1 else self.crop_width

    @property
    def input_scale(self) -> float:
        # dequantized 8x8 DCT coefficients of level-shifted 8-bit samples
        # are bounded by +-1024; dividing maps the cube into [-1, 1] so
        # the network sees unit-scale inputs (bit features already are)
        return 1024.0 if self.method_id == 1 else 1.0

    @classmethod
    def from_geometry(cls, method_id: int, geometry: ImageGeometry, **kwargs):
        return cls(method_id=method_id,
                   luma_grid=(geometry.d_h0 // 8, geometry.d_w0 // 8),
                   chroma_grid=(geometry.d_h1 // 8, geometry.d_w1 // 8),
                   **kwargs)

    def to_dict(self):
        d = asdict(self)
        d["luma_grid"] = list(self.luma_grid)
        d["chroma_grid"] = list(self.chroma_grid)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["luma_grid"] = tuple(d["luma_grid"])
        d["chroma_grid"] = tuple(d["chroma_grid"])
        return cls(**d)


def _build_stems(spec: MethodSpec, rng, dtype):
    """Y stem strides by 2 so all three branches land on the chroma grid."""
    cin, cout = spec.input_channels, spec.stem_channels
    separable = spec.method_id in (3, 5)
    stems = []
    for stride in (2, 1, 1):
        if separable:
            stems.append(PointwiseSeparableConv(3, cin, cout, cout,
                                                stride=stride, rng=rng, dtype=dtype))
        else:
            stems.append(Conv2D(3, cin, cout, stride=stride, rng=rng, dtype=dtype))
    return stems


class _MethodModel:
    """Shared plumbing: parameter iteration, casting, checkpoint state."""

    def __init__(self, spec: MethodSpec):
        self.spec = spec
        self._named_layers = []     # [(name, layer)]

    def _register(self, name, layer):
        self._named_layers.append((name, layer))
        return layer

    def zero_grad(self):
        for _, layer in self._named_layers:
            layer.zero_grad()

    def named_params(self):
        for name, layer in self._named_layers:
            yield from layer.named_params(name + ".")

    def named_grads(self):
        for name, layer in self._named_layers:
            yield from layer.named_grads(name + ".")

    def param_grad_pairs(self):
        grads = dict(self.named_grads())
        return [(p, grads[name]) for name, p in self.named_params()]

    def cast(self, dtype):
        for _, layer in self._named_layers:
            layer.cast(dtype)
        return self

    def state_dict(self):
        return {name: p.copy() for name, p in self.named_params()}

    def load_state(self, state: dict):
        for name, p in self.named_params():
            if name not in state:
                raise KeyError(f"checkpoint missing tensor {name}")
            if state[name].shape != p.shape:
                raise GeometryMismatch(
                    f"tensor {name}: checkpoint {state[name].shape} vs model {p.shape}")
            p[...] = state[name].astype(p.dtype)

    def _check_features(self, features):
        spec = self.spec
        expected = [spec.luma_grid, spec.chroma_grid, spec.chroma_grid]
        if len(features) != 3:
            raise GeometryMismatch(f"need 3 component tensors, got {len(features)}")
        out = []
        for i, (t, (gh, gw)) in enumerate(zip(features, expected)):
            if t.shape != (gh, gw, spec.input_channels):
                raise GeometryMismatch(
                    f"component {i}: expected {(gh, gw, spec.input_channels)}, "
                    f"got {t.shape}")
            if t.dtype != np.float64:
                t = np.asarray(t, dtype=np.float32)
            out.append(t / t.dtype.type(spec.input_scale)
                       if spec.input_scale != 1.0 else t)
        return out

    def _scale_input_grads(self, dxs):
        if self.spec.input_scale != 1.0:
            return [d / d.dtype.type(self.spec.input_scale) for d in dxs]
        return dxs

    def predict(self, features) -> int:
        return int(np.argmax(self.forward(features)))

    def predict_proba(self, features) -> np.ndarray:
        return softmax(self.forward(features))


class ConvMethodModel(_MethodModel):
    """Methods 1-3: stems, concat, conv trunk with residual blocks."""

    def __init__(self, spec: MethodSpec, rng=None, dtype=np.float32):
        super().__init__(spec)
        rng = rng or np.random.default_rng(0)
        stems = _build_stems(spec, rng, dtype)
        self.stems = [self._register(f"stem{i}", s) for i, s in enumerate(stems)]
        self.stem_relus = [ReLU() for _ in range(3)]
        self.concat = Concat()
        trunk = spec.trunk_channels
        self.conv_in = self._register(
            "conv_in", Conv2D(3, 3 * spec.stem_channels, trunk, rng=rng, dtype=dtype))
        self.relu_in = ReLU()
        self.res_blocks = [self._register(f"res{i}", ResidualBlock(trunk, rng=rng, dtype=dtype))
                           for i in range(spec.residual_blocks)]
        self.down = self._register(
            "down", Conv2D(3, trunk, trunk, stride=2, rng=rng, dtype=dtype))
        self.relu_down = ReLU()
        self.flatten = Flatten()
        ch, cw = spec.chroma_grid
        dh, dw = self.down.out_shape(ch, cw)
        self.dense = self._register(
            "dense", Dense(dh * dw * trunk, spec.num_classes, rng=rng, dtype=dtype))

    def forward(self, features) -> np.ndarray:
        ys = self._check_features(features)
        branches = [relu.forward(stem.forward(t))
                    for stem, relu, t in zip(self.stems, self.stem_relus, ys)]
        h = self.relu_in.forward(self.conv_in.forward(self.concat.forward(branches)))
        for block in self.res_blocks:
            h = block.forward(h)
        h = self.relu_down.forward(self.down.forward(h))
        return self.dense.forward(self.flatten.forward(h))

    def backward(self, dlogits):
        d = self.flatten.backward(self.dense.backward(dlogits))
        d = self.down.backward(self.relu_down.backward(d))
        for block in reversed(self.res_blocks):
            d = block.backward(d)
        d = self.conv_in.backward(self.relu_in.backward(d))
        dbranches = self.concat.backward(d)
        return self._scale_input_grads(
            [stem.backward(relu.backward(db))
             for stem, relu, db in zip(self.stems, self.stem_relus, dbranches)])


class AttentionMethodModel(_MethodModel):
    """Methods 4-5: stems, concat, token flattening, attention stack."""

    def __init__(self, spec: MethodSpec, rng=None, dtype=np.float32):
        super().__init__(spec)
        rng = rng or np.random.default_rng(0)
        stems = _build_stems(spec, rng, dtype)
        self.stems = [self._register(f"stem{i}", s) for i, s in enumerate(stems)]
        self.stem_relus = [ReLU() for _ in range(3)]
        self.concat = Concat()
        self.token_dim = 3 * spec.stem_channels
        ch, cw = spec.chroma_grid
        self.n_tokens = ch * cw
        self.pos = self._register(
            "pos", PositionalEmbedding(self.n_tokens, self.token_dim, dtype=dtype))
        self.attn = [self._register(
            f"attn{i}", MultiHeadAttention(self.token_dim, spec.attention_heads,
                                           rng=rng, dtype=dtype))
            for i in range(spec.attention_layers)]
        self.pool = MeanPool()
        self.dense = self._register(
            "dense", Dense(self.token_dim, spec.num_classes, rng=rng, dtype=dtype))

    def tokens_from_features(self, features) -> np.ndarray:
        ys = self._check_features(features)
        branches = [relu.forward(stem.forward(t))
                    for stem, relu, t in zip(self.stems, self.stem_relus, ys)]
        cat = self.concat.forward(branches)
        self._cat_shape = cat.shape
        return cat.reshape(self.n_tokens, self.token_dim)

    def forward_tokens(self, tokens) -> np.ndarray:
        h = self.pos.forward(tokens)
        for layer in self.attn:
            h = layer.forward(h)
        return self.dense.forward(self.pool.forward(h))

    def forward(self, features) -> np.ndarray:
        return self.forward_tokens(self.tokens_from_features(features))

    def backward(self, dlogits):
        d = self.pool.backward(self.dense.backward(dlogits))
        for layer in reversed(self.attn):
            d = layer.backward(d)
        d = self.pos.backward(d)
        dbranches = self.concat.backward(d.reshape(self._cat_shape))
        return self._scale_input_grads(
            [stem.backward(relu.backward(db))
             for stem, relu, db in zip(self.stems, self.stem_relus, dbranches)])


def build_model(spec: MethodSpec, seed: int = 0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    if spec.method_id in (1, 2, 3):
        return ConvMethodModel(spec, rng=rng, dtype=dtype)
    return AttentionMethodModel(spec, rng=rng, dtype=dtype)


def forward(model, features) -> np.ndarray:
    return model.forward(features)


def predict(model, features) -> int:
    return model.predict(features)
