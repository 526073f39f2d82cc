import numpy as np
import pytest

from urban_acoustics.checkpoint import (
    CheckpointError,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from urban_acoustics.model import forward, init_params, tiny_config


def trained_ish_model():
    model = init_params(tiny_config(num_classes=3), seed=2)
    # push the running stats off their init values so restore is non-trivial
    x = np.random.default_rng(0).standard_normal((4, 2, 8, 12)).astype(np.float32)
    forward(model, x, training=True)
    return model


def test_save_load_save_is_byte_identical(tmp_path):
    model = trained_ish_model()
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    save_checkpoint(p1, model, metadata={"note": "x"})
    restored = restore_model(load_checkpoint(p1))
    save_checkpoint(p2, restored, metadata={"note": "x"})
    assert p1.read_bytes() == p2.read_bytes()


def test_restored_model_evaluates_identically(tmp_path):
    model = trained_ish_model()
    path = tmp_path / "m.bin"
    save_checkpoint(path, model)
    restored = restore_model(load_checkpoint(path))
    x = np.random.default_rng(1).standard_normal((3, 2, 8, 12)).astype(np.float32)
    np.testing.assert_array_equal(forward(model, x), forward(restored, x))
    assert restored.bn_updates == model.bn_updates


def test_header_starts_with_magic(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model())
    blob = path.read_bytes()
    assert blob[:4] == b"USND"
    assert int.from_bytes(blob[4:6], "little") == 1  # format version


def test_metadata_round_trip(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model(), metadata={"seed": 7, "tag": "hi"})
    ckpt = load_checkpoint(path)
    assert ckpt.metadata["seed"] == 7
    assert ckpt.metadata["tag"] == "hi"
    assert ckpt.num_classes == 3
    assert "model_config" in ckpt.metadata


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(b"JUNKJUNKJUNK")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model())
    blob = bytearray(path.read_bytes())
    blob[4:6] = (99).to_bytes(2, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncation_reported_with_offset(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model())
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="truncated at byte"):
        load_checkpoint(path)


def test_tensor_shape_mismatch_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model())
    ckpt = load_checkpoint(path)
    ckpt.tensors["conv1.weight"] = np.zeros((1, 1, 1, 1), dtype=np.float32)
    with pytest.raises(CheckpointError, match="conv1.weight"):
        restore_model(ckpt)


def test_missing_tensor_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model())
    ckpt = load_checkpoint(path)
    del ckpt.tensors["fc2.bias"]
    with pytest.raises(CheckpointError, match="fc2.bias"):
        restore_model(ckpt)


def test_missing_config_rejected(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, trained_ish_model())
    ckpt = load_checkpoint(path)
    del ckpt.metadata["model_config"]
    with pytest.raises(CheckpointError, match="config"):
        restore_model(ckpt)


def test_restore_preserves_exact_bits(tmp_path):
    model = trained_ish_model()
    path = tmp_path / "m.bin"
    save_checkpoint(path, model)
    restored = restore_model(load_checkpoint(path))
    for k in model.params:
        np.testing.assert_array_equal(restored.params[k], model.params[k])
    for k in model.running:
        np.testing.assert_array_equal(restored.running[k], model.running[k])
