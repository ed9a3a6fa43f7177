import numpy as np
import pytest

from fineflow.checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from fineflow.net import init_mlp
from fineflow.pde_net import PdeFlowMapModel, init_pde_model


def pde_model():
    return init_pde_model(8, 2, 3, (6,), (4,), seed=1,
                          grid={"kind": "periodic1d", "n": 8, "length": 1.0})


@pytest.mark.parametrize("make", [lambda: init_mlp((3, 20, 20, 3), 0, "relu"), pde_model])
def test_round_trip_byte_identical(tmp_path, make):
    model = make()
    meta = {"preset": "vdp", "epoch": 7, "nested": {"a": [1, 2.5]}}
    first, second = tmp_path / "1.ckpt", tmp_path / "2.ckpt"
    save_checkpoint(model, first, meta)
    loaded, loaded_meta = load_checkpoint(first)
    save_checkpoint(loaded, second, loaded_meta)
    assert first.read_bytes() == second.read_bytes()
    assert loaded_meta == meta
    assert type(loaded) is type(model)
    assert np.array_equal(loaded.flat, model.flat)
    assert loaded.activation == model.activation
    x = np.random.default_rng(0).normal(size=model.dim)
    assert np.array_equal(loaded.step(x[None]), model.step(x[None]))


def test_pde_header_fields(tmp_path):
    model = pde_model()
    save_checkpoint(model, tmp_path / "m.ckpt")
    loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
    assert isinstance(loaded, PdeFlowMapModel)
    assert (loaded.n_nodes, loaded.n_components, loaded.n_channels) == (8, 2, 3)
    assert loaded.channel_hidden == (6,) and loaded.assembly_hidden == (4,)
    assert loaded.grid == model.grid


def test_mlp_layout_is_little_endian_blobs_in_layer_order(tmp_path):
    model = init_mlp((2, 3, 2), 0)
    save_checkpoint(model, tmp_path / "m.ckpt")
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw.startswith(b"FSFM1\x00\x00")
    tail = np.frombuffer(raw[-8 * model.flat.size :], dtype="<f8")
    expected = np.concatenate([np.concatenate([w.ravel(), b])
                               for w, b in zip(model.weights, model.biases)])
    assert np.array_equal(tail, expected)


@pytest.mark.parametrize("cut", [2, 6, 20, -8, -1])
def test_truncated_checkpoint_rejected(tmp_path, cut):
    path = tmp_path / "m.ckpt"
    save_checkpoint(pde_model(), path)
    path.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_wrong_magic_and_kind_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(init_mlp((2, 3, 2), 0), path)
    raw = path.read_bytes()
    path.write_bytes(b"FSDS1" + raw[5:])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)
    path.write_bytes(raw[:5] + b"\x07" + raw[6:])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_unsupported_object():
    with pytest.raises(TypeError):
        save_checkpoint(object(), "unused")
