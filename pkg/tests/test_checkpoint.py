import struct

import numpy as np
import pytest

from telmos.errors import CheckpointFormatError, IncompatibleCheckpointError
from telmos.nn.checkpoint import (
    MAGIC,
    VERSION,
    _pack_tensors,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    write_checkpoint,
)
from telmos.nn.model import DEFAULT_ARCH, ModelArch, init_params
from telmos.nn.optim import init_optimizer


class TestRoundTrip:
    def test_save_load_save_is_byte_identical(self):
        params = init_params(seed=7)
        blob1 = save_checkpoint(params)
        loaded, opt = load_checkpoint(blob1)
        assert opt is None
        blob2 = save_checkpoint(loaded)
        assert blob1 == blob2

    def test_float32_values_survive_exactly(self):
        params = init_params(seed=8)
        loaded, _ = load_checkpoint(save_checkpoint(params))
        for name in params.tensors:
            np.testing.assert_array_equal(params[name], loaded[name])

    def test_float64_params_round_to_float32_once(self):
        params = init_params(seed=9, dtype=np.float64)
        blob1 = save_checkpoint(params)
        loaded, _ = load_checkpoint(blob1)
        assert loaded.dtype == np.float32
        assert save_checkpoint(loaded) == blob1

    def test_optimizer_state_round_trips(self):
        params = init_params(seed=10)
        opt = init_optimizer(params, lr=0.002)
        opt.step = 17
        opt.m["head.bias"][:] = 0.25
        blob = save_checkpoint(params, opt)
        _, opt2 = load_checkpoint(blob)
        assert opt2 is not None
        assert opt2.step == 17
        assert opt2.lr == pytest.approx(0.002)
        np.testing.assert_array_equal(opt2.m["head.bias"], opt.m["head.bias"])

    def test_downsized_architecture_round_trips(self):
        params = init_params(ModelArch((8,) * 6, 10, 8), seed=1)
        loaded, _ = load_checkpoint(save_checkpoint(params))
        assert loaded.arch == params.arch

    def test_file_io(self, tmp_path):
        params = init_params(seed=11)
        path = tmp_path / "model.pqm"
        write_checkpoint(path, params)
        loaded, _ = read_checkpoint(path)
        np.testing.assert_array_equal(loaded["conv3.kernel"], params["conv3.kernel"])


class TestFormatValidation:
    def test_magic_and_version(self):
        blob = save_checkpoint(init_params(seed=0))
        assert blob[:4] == MAGIC == b"PSQM"
        assert struct.unpack("<I", blob[4:8])[0] == VERSION == 1

    def test_bad_magic(self):
        blob = save_checkpoint(init_params(seed=0))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(b"XXXX" + blob[4:])

    def test_bad_version(self):
        blob = save_checkpoint(init_params(seed=0))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(blob[:4] + struct.pack("<I", 99) + blob[8:])

    def test_truncated_stream(self):
        blob = save_checkpoint(init_params(seed=0))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(blob[: len(blob) // 2])

    def test_trailing_garbage(self):
        blob = save_checkpoint(init_params(seed=0))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(blob + b"\x00\x00\x00\x00")

    def test_wire_layout_of_one_tensor(self):
        # name length u16, name, ndim u8, dims u32, float32 LE data
        blob = _pack_tensors({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
        off = 12  # magic + version + count
        (name_len,) = struct.unpack_from("<H", blob, off)
        assert name_len == 2
        assert blob[off + 2 : off + 4] == b"ab"
        (ndim,) = struct.unpack_from("<B", blob, off + 4)
        assert ndim == 2
        dims = struct.unpack_from("<2I", blob, off + 5)
        assert dims == (1, 2)
        data = np.frombuffer(blob, dtype="<f4", count=2, offset=off + 13)
        np.testing.assert_array_equal(data, [1.0, 2.0])


class TestCompatibility:
    def test_missing_tensor_named(self):
        params = init_params(seed=0)
        tensors = dict(params.tensors)
        del tensors["lstm_bw.U"]
        with pytest.raises(IncompatibleCheckpointError) as exc:
            load_checkpoint(_pack_tensors(tensors))
        assert "lstm_bw.U" in str(exc.value)

    def test_mis_shaped_head_named(self):
        params = init_params(seed=0)
        tensors = dict(params.tensors)
        tensors["head.weight"] = np.zeros((1, 50), dtype=np.float32)
        with pytest.raises(IncompatibleCheckpointError) as exc:
            load_checkpoint(_pack_tensors(tensors))
        assert exc.value.tensor == "head.weight"

    def test_unexpected_tensor_named(self):
        params = init_params(seed=0)
        tensors = dict(params.tensors)
        tensors["conv7.kernel"] = np.zeros((1, 1, 3, 3), dtype=np.float32)
        with pytest.raises(IncompatibleCheckpointError) as exc:
            load_checkpoint(_pack_tensors(tensors))
        assert "conv7.kernel" in str(exc.value)

    def test_loaded_params_drive_the_model(self):
        from telmos.nn.model import model_forward
        from telmos.dsp import MelSegments

        params = init_params(seed=12)
        loaded, _ = load_checkpoint(save_checkpoint(params))
        segs = MelSegments(
            np.random.default_rng(0).standard_normal((5, 1, 32, 33)).astype(np.float32), 5
        )
        assert model_forward(params, segs) == pytest.approx(model_forward(loaded, segs), abs=1e-6)
