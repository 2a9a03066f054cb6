import numpy as np
import pytest

from jpegclass.errors import ShapeMismatch
from jpegclass.nn import (
    Adam,
    Concat,
    Conv2D,
    Dense,
    MeanPool,
    MultiHeadAttention,
    PointwiseSeparableConv,
    ReLU,
    ResidualBlock,
    TrainConfig,
    adam_step,
    grad_check,
    softmax,
    softmax_cross_entropy,
)
from jpegclass.nn.checkpoint import load_checkpoint, save_checkpoint


def naive_conv2d(x, w, b, stride=1):
    """Six nested loops, 'same' padding, for cross-checking Conv2D."""
    h, wd, cin = x.shape
    k, _, _, cout = w.shape
    oh = -(-h // stride)
    ow = -(-wd // stride)
    pad_h = max((oh - 1) * stride + k - h, 0)
    pad_w = max((ow - 1) * stride + k - wd, 0)
    pt, pl = pad_h // 2, pad_w // 2
    out = np.zeros((oh, ow, cout))
    for i in range(oh):
        for j in range(ow):
            for co in range(cout):
                acc = b[co]
                for di in range(k):
                    for dj in range(k):
                        yi = i * stride + di - pt
                        xj = j * stride + dj - pl
                        if 0 <= yi < h and 0 <= xj < wd:
                            for ci in range(cin):
                                acc += x[yi, xj, ci] * w[di, dj, ci, co]
                out[i, j, co] = acc
    return out


class TestConv2D:
    def test_identity_1x1(self):
        conv = Conv2D(1, 3, 3)
        conv.p["W"][0, 0] = np.eye(3, dtype=np.float32)
        conv.p["b"][...] = 0
        x = np.random.default_rng(0).standard_normal((5, 5, 3)).astype(np.float32)
        assert np.allclose(conv.forward(x), x)

    def test_zero_input_gives_bias(self):
        conv = Conv2D(3, 2, 4)
        conv.p["b"][...] = np.arange(4)
        out = conv.forward(np.zeros((6, 6, 2), dtype=np.float32))
        assert np.allclose(out, np.broadcast_to(np.arange(4), out.shape))

    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_naive_oracle(self, stride):
        rng = np.random.default_rng(1)
        conv = Conv2D(3, 2, 3, stride=stride, rng=rng, dtype=np.float64)
        x = rng.standard_normal((5, 5, 2))
        expected = naive_conv2d(x, conv.p["W"], conv.p["b"], stride=stride)
        assert np.allclose(conv.forward(x), expected, atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            Conv2D(3, 2, 3).forward(np.zeros((5, 5, 4), dtype=np.float32))

    def test_gradients(self):
        rng = np.random.default_rng(2)
        for stride in (1, 2):
            conv = Conv2D(3, 2, 3, stride=stride, rng=rng)
            x = rng.standard_normal((5, 5, 2))
            assert grad_check(conv, x, dtype=np.float64)
            assert grad_check(conv, x, dtype=np.float32)


class TestPointwiseSeparable:
    def test_identity(self):
        sep = PointwiseSeparableConv(1, 3, 3, 3)
        sep.mix.p["W"][0, 0] = np.eye(3, dtype=np.float32)
        sep.mix.p["b"][...] = 0
        sep.spatial.p["W"][0, 0] = np.eye(3, dtype=np.float32)
        sep.spatial.p["b"][...] = 0
        x = np.random.default_rng(3).standard_normal((4, 4, 3)).astype(np.float32)
        assert np.allclose(sep.forward(x), x)

    def test_equals_conv_composition_bitwise(self):
        rng = np.random.default_rng(4)
        sep = PointwiseSeparableConv(3, 5, 4, 3, stride=2, rng=rng)
        x = rng.standard_normal((6, 6, 5)).astype(np.float32)
        expected = sep.spatial.forward(sep.mix.forward(x))
        assert np.array_equal(sep.forward(x), expected)

    def test_gradients(self):
        rng = np.random.default_rng(5)
        sep = PointwiseSeparableConv(3, 4, 3, 2, rng=rng)
        x = rng.standard_normal((4, 4, 4))
        assert grad_check(sep, x, dtype=np.float64)
        assert grad_check(sep, x, dtype=np.float32)


class TestResidualBlock:
    def test_zero_weights_pass_relu(self):
        block = ResidualBlock(2)
        for conv in (block.conv1, block.conv2):
            conv.p["W"][...] = 0
            conv.p["b"][...] = 0
        x = np.random.default_rng(6).standard_normal((4, 4, 2)).astype(np.float32)
        assert np.allclose(block.forward(x), np.maximum(x, 0))

    def test_zero_input_zero_bias(self):
        block = ResidualBlock(2)
        block.conv1.p["b"][...] = 0
        block.conv2.p["b"][...] = 0
        assert np.allclose(block.forward(np.zeros((4, 4, 2), dtype=np.float32)), 0)

    def test_gradients(self):
        rng = np.random.default_rng(7)
        block = ResidualBlock(3, rng=rng)
        x = rng.standard_normal((4, 4, 3)) + 0.3
        assert grad_check(block, x, dtype=np.float64)


class TestAttention:
    def _identity_mha(self, dim, heads=1):
        mha = MultiHeadAttention(dim, heads)
        for name in ("Wq", "Wk", "Wv", "Wo"):
            mha.p[name][...] = np.eye(dim, dtype=np.float32)
        return mha

    def test_single_token_doubles(self):
        mha = self._identity_mha(4)
        x = np.random.default_rng(8).standard_normal((1, 4)).astype(np.float32)
        assert np.allclose(mha.forward(x), 2 * x, atol=1e-6)

    def test_identical_tokens_uniform_attention(self):
        mha = self._identity_mha(4)
        token = np.random.default_rng(9).standard_normal(4).astype(np.float32)
        x = np.stack([token, token])
        mha.forward(x)
        att = mha._cache[4]
        assert np.allclose(att, 0.5)

    def test_dim_not_divisible(self):
        with pytest.raises(ShapeMismatch):
            MultiHeadAttention(6, 4)

    def test_gradients(self):
        rng = np.random.default_rng(10)
        mha = MultiHeadAttention(8, 2, rng=rng)
        x = rng.standard_normal((3, 8))
        assert grad_check(mha, x, dtype=np.float64)
        assert grad_check(mha, x, dtype=np.float32)


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        loss, grad = softmax_cross_entropy(np.zeros(4), 1)
        assert np.isclose(loss, np.log(4))
        expected = np.full(4, 0.25)
        expected[1] -= 1
        assert np.allclose(grad, expected)

    def test_shift_invariance(self):
        rng = np.random.default_rng(11)
        logits = rng.standard_normal(5)
        l1, g1 = softmax_cross_entropy(logits, 2)
        l2, g2 = softmax_cross_entropy(logits + 1234.5, 2)
        assert np.isclose(l1, l2) and np.allclose(g1, g2)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        logits = rng.standard_normal(6)
        _, grad = softmax_cross_entropy(logits, 3)
        step = 1e-5
        for i in range(6):
            bumped = logits.copy()
            bumped[i] += step
            up, _ = softmax_cross_entropy(bumped, 3)
            bumped[i] -= 2 * step
            down, _ = softmax_cross_entropy(bumped, 3)
            assert abs(grad[i] - (up - down) / (2 * step)) < 1e-5

    def test_softmax_is_distribution(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            p = softmax(rng.standard_normal(7) * 10)
            assert np.all(p >= 0) and np.isclose(p.sum(), 1.0, atol=1e-6)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        config = TrainConfig()
        p = np.ones(3)
        adam_step(p, np.zeros(3), np.zeros(3), np.zeros(3), t=1, config=config)
        assert np.allclose(p, 1.0)

    def test_zero_gradient_decays_moments(self):
        config = TrainConfig()
        m = np.full(3, 0.5)
        v = np.full(3, 0.25)
        adam_step(np.ones(3), np.zeros(3), m, v, t=5, config=config)
        assert np.all(m < 0.5) and np.all(v < 0.25)

    def test_first_step_is_minus_lr(self):
        config = TrainConfig(learning_rate=0.01)
        p = np.array([1.0])
        adam_step(p, np.array([3.7]), np.zeros(1), np.zeros(1), t=1, config=config)
        assert np.isclose(p[0], 1.0 - 0.01, atol=1e-6)

    def test_quadratic_descent(self):
        config = TrainConfig(learning_rate=0.1)
        x = np.array([1.0])
        m, v = np.zeros(1), np.zeros(1)
        for t in range(1, 101):
            adam_step(x, 2 * x, m, v, t=t, config=config)
        assert abs(x[0]) < 0.1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_step(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3),
                      t=1, config=TrainConfig())

    def test_optimizer_wrapper(self):
        rng = np.random.default_rng(14)
        dense = Dense(3, 2, rng=rng)
        before = dense.p["W"].copy()
        dense.zero_grad()
        x = rng.standard_normal(3).astype(np.float32)
        dense.backward(dense.forward(x) * 0 + 1)
        opt = Adam([(dense.p["W"], dense.g["W"])], TrainConfig(learning_rate=1e-2))
        opt.step()
        assert not np.allclose(dense.p["W"], before)


class TestMisc:
    def test_concat_split_round_trip(self):
        rng = np.random.default_rng(15)
        xs = [rng.standard_normal((3, 3, c)).astype(np.float32) for c in (2, 4, 1)]
        cat = Concat()
        y = cat.forward(xs)
        back = cat.backward(y)
        for a, b in zip(xs, back):
            assert np.array_equal(a, b)

    def test_relu_gradient_away_from_zero(self):
        relu = ReLU()
        x = np.array([0.5, -0.5, 2.0, -2.0])
        relu.forward(x)
        dy = np.ones(4)
        assert np.array_equal(relu.backward(dy), [1, 0, 1, 0])

    def test_meanpool_gradients(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal((5, 3))
        pool = MeanPool()
        pool.forward(x)
        dx = pool.backward(np.ones(3))
        assert np.allclose(dx, 1.0 / 5)

    def test_dense_gradients(self):
        rng = np.random.default_rng(17)
        dense = Dense(4, 3, rng=rng)
        assert grad_check(dense, rng.standard_normal(4), dtype=np.float64)
        assert grad_check(dense, rng.standard_normal(4), dtype=np.float32)

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(18)
        tensors = [("layer.W", rng.standard_normal((3, 4)).astype(np.float32)),
                   ("layer.b", rng.standard_normal(4).astype(np.float32))]
        path = tmp_path / "c.jckp"
        save_checkpoint(path, {"foo": 1}, tensors)
        config, back = load_checkpoint(path)
        assert config == {"foo": 1}
        for name, t in tensors:
            assert np.array_equal(back[name], t)
        assert path.read_bytes()[:4] == b"JCKP"
