import numpy as np
import pytest

from telmos.audio import AudioClip
from telmos.dsp import clip_to_segments, MelSegments
from telmos.nn.model import (
    DEFAULT_ARCH,
    ModelArch,
    ModelParams,
    forward_batch,
    forward_shapes,
    init_params,
    model_forward,
    mse_loss_and_grads,
    tensor_specs,
)
from telmos.errors import ShapeError


def random_segments(n_seg, seed=0):
    rng = np.random.default_rng(seed)
    return MelSegments(rng.standard_normal((n_seg, 1, 32, 33)).astype(np.float32), n_seg)


TABLE_ROWS = [
    ("input", (1, 32, 33)),
    ("conv1", (16, 32, 33)),
    ("pool1", (16, 16, 16)),
    ("conv2", (16, 16, 16)),
    ("pool2", (16, 8, 8)),
    ("conv3", (32, 8, 8)),
    ("conv4", (32, 8, 8)),
    ("pool3", (32, 4, 4)),
    ("conv5", (32, 4, 4)),
    ("conv6", (32, 1, 1)),
]


class TestForwardShapes:
    def test_41_segment_trace_matches_layer_table(self):
        params = init_params(seed=0)
        trace = forward_shapes(params, random_segments(41))
        named = dict(trace)
        for name, chw in TABLE_ROWS:
            assert named[name] == (41, *chw), name
        assert named["fc"] == (41, 10)

    @pytest.mark.parametrize("n_seg", [1, 5, 41])
    def test_shape_chain_for_any_segment_count(self, n_seg):
        params = init_params(seed=0)
        trace = dict(forward_shapes(params, random_segments(n_seg)))
        for name, chw in TABLE_ROWS:
            assert trace[name] == (n_seg, *chw)
        assert trace["fc"] == (n_seg, 10)

    def test_parameter_shapes(self):
        specs = tensor_specs(DEFAULT_ARCH)
        assert specs["conv1.kernel"] == (16, 1, 3, 3)
        assert specs["conv2.kernel"] == (16, 16, 3, 3)
        assert specs["conv3.kernel"] == (32, 16, 3, 3)
        assert specs["conv4.kernel"] == (32, 32, 3, 3)
        assert specs["conv5.kernel"] == (32, 32, 3, 3)
        assert specs["conv6.kernel"] == (32, 32, 3, 3)
        assert specs["seg_fc.weight"] == (10, 32)
        assert specs["lstm_fw.W"] == (200, 10)
        assert specs["lstm_fw.U"] == (200, 50)
        assert specs["lstm_fw.b"] == (200,)
        assert specs["head.weight"] == (1, 100)

    def test_tensor_set_is_closed(self):
        params = init_params(seed=3)
        with pytest.raises(ShapeError):
            ModelParams({**params.tensors, "extra": np.zeros(1, dtype=np.float32)}, DEFAULT_ARCH)
        bad = dict(params.tensors)
        bad["head.weight"] = np.zeros((1, 50), dtype=np.float32)
        with pytest.raises(ShapeError):
            ModelParams(bad, DEFAULT_ARCH)


class TestModelForward:
    def test_zero_network_returns_clamped_head_bias(self):
        params = init_params(seed=0)
        for name in params.trainable_names:
            params.tensors[name][:] = 0.0
        params.tensors["head.bias"][:] = 3.3
        assert model_forward(params, random_segments(41)) == pytest.approx(3.3, abs=1e-6)
        params.tensors["head.bias"][:] = 9.0
        assert model_forward(params, random_segments(41)) == 5.0
        params.tensors["head.bias"][:] = -2.0
        assert model_forward(params, random_segments(41)) == 1.0

    def test_eval_forward_is_deterministic(self):
        params = init_params(seed=1)
        segs = random_segments(7, seed=5)
        a = model_forward(params, segs)
        b = model_forward(params, segs)
        assert a == b  # bit identical

    def test_eval_clamps_to_scale(self):
        params = init_params(seed=2)
        out = model_forward(params, random_segments(3))
        assert 1.0 <= out <= 5.0

    def test_train_mode_dropout_seed_changes_output(self):
        params = init_params(seed=3)
        segs = random_segments(5, seed=9)
        a = model_forward(params, segs, mode="train", dropout_seed=1)
        b = model_forward(params, segs, mode="train", dropout_seed=2)
        c = model_forward(params, segs, mode="train", dropout_seed=1)
        assert a != b
        assert a == c

    def test_finite_on_random_input(self):
        params = init_params(seed=4)
        out = model_forward(params, random_segments(41, seed=11))
        assert np.isfinite(out)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            model_forward(init_params(seed=0), random_segments(3), mode="predict")

    def test_frontend_to_model_end_to_end_shapes(self):
        clip = AudioClip(np.random.default_rng(1).uniform(-0.4, 0.4, 80000))
        segs = clip_to_segments(clip)
        params = init_params(seed=0)
        out = model_forward(params, segs)
        assert 1.0 <= out <= 5.0


class TestGradients:
    def test_downsized_model_gradient_check(self):
        # every tensor, sampled entries, against central differences
        rng = np.random.default_rng(0)
        arch = ModelArch((8,) * 6, feature_dim=10, hidden=8)
        params = init_params(arch, seed=2, dtype=np.float64)
        x = rng.standard_normal((2, 3, 1, 32, 33))
        y = np.array([2.5, 3.7])
        _, _, grads = mse_loss_and_grads(params, x, y, bn_mode="eval")

        def loss():
            preds, _ = forward_batch(params, x)
            return float(np.mean((preds - y) ** 2))

        h = 1e-5
        worst = 0.0
        for name in params.trainable_names:
            flat = params.tensors[name].reshape(-1)
            g = grads[name].reshape(-1)
            for i in np.linspace(0, flat.size - 1, min(10, flat.size)).astype(int):
                orig = flat[i]
                flat[i] = orig + h
                lp = loss()
                flat[i] = orig - h
                lm = loss()
                flat[i] = orig
                fd = (lp - lm) / (2 * h)
                worst = max(worst, abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-6))
        assert worst < 1e-3

    def test_loss_gradient_direction(self):
        # one small gradient step along -grad must reduce the loss
        arch = ModelArch((8,) * 6, 10, 8)
        params = init_params(arch, seed=5, dtype=np.float64)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 1, 32, 33))
        y = np.array([1.5, 4.5])
        loss0, _, grads = mse_loss_and_grads(params, x, y, bn_mode="eval")
        lr = 1e-3
        for name, g in grads.items():
            params.tensors[name] -= lr * g
        preds, _ = forward_batch(params, x)
        loss1 = float(np.mean((preds - y) ** 2))
        assert loss1 < loss0
