import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fineflow.net import ShapeError
from fineflow.pde_net import (
    PdeFlowMapModel,
    init_pde_model,
    pde_backward,
    pde_compose,
    pde_compose_with_tape,
    pde_forward,
)
from fineflow.training import TrainConfig, loss_and_gradient, recurrent_loss
from oracles import central_difference, max_rel_error


def toy(seed=0, n_nodes=8, n_components=2, n_channels=2, activation="tanh"):
    return init_pde_model(n_nodes, n_components, n_channels, (6,), (3,), seed, activation)


def test_zero_model_is_identity():
    model = toy().like()
    w = np.random.default_rng(0).normal(size=16)
    assert np.array_equal(pde_forward(model, w), w)
    assert np.array_equal(pde_compose(toy(), w, 0), w)


def test_identity_channel_and_assembly_doubles_field():
    n = 5
    model = init_pde_model(n, 1, 1, (n,), (1,), 0, activation="identity").like()
    ch = model.channels[0]
    ch.weights[0][:] = np.eye(n)
    ch.weights[1][:] = np.eye(n)
    model.assembly.weights[0][:] = 1.0
    model.assembly.weights[1][:] = 1.0
    w = np.arange(n, dtype=float) - 1.5
    assert np.array_equal(pde_forward(model, w), 2 * w)


@given(seed=st.integers(0, 10_000))
def test_assembly_commutes_with_node_permutation(seed):
    rng = np.random.default_rng(seed)
    model = toy(seed)
    feats = rng.normal(size=(16, model.n_channels))
    perm = rng.permutation(16)
    assert np.allclose(model.assemble(feats[perm]), model.assemble(feats)[perm], atol=1e-15)


def test_assembly_output_depends_only_on_own_node():
    model = toy(3)
    feats = np.random.default_rng(1).normal(size=(16, model.n_channels))
    base = model.assemble(feats)
    feats[4] += 1.0
    changed = model.assemble(feats)
    mask = np.ones(16, bool)
    mask[4] = False
    assert np.array_equal(base[mask], changed[mask])
    assert base[4] != changed[4]


def test_residual_equals_assembly_of_channels():
    model = toy(2)
    w = np.random.default_rng(2).normal(size=16)
    feats = np.stack([np.tanh(ch.weights[0] @ w + ch.biases[0]) @ ch.weights[1].T
                      + ch.biases[1] for ch in model.channels], axis=-1)
    assert np.allclose(pde_forward(model, w) - w, model.assemble(feats), atol=1e-14)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        pde_forward(toy(), np.zeros(15))


def test_parameter_views_share_storage():
    model = toy()
    model.channels[1].biases[0][0] = 42.0
    model.assembly.biases[-1][0] = -7.0
    assert 42.0 in model.flat and -7.0 in model.flat


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    model = toy(seed)
    w = rng.normal(size=(3, 16))
    g = rng.normal(size=(3, 16))
    k = 3
    _, tape = pde_compose_with_tape(model, w, k)
    grad = pde_backward(tape, model, g)
    fd = central_difference(lambda: float(np.sum(g * pde_compose(model, w, k))), model.flat)
    assert max_rel_error(grad.flat, fd) < 1e-6


def test_recurrent_loss_gradient_on_toy_grid():
    rng = np.random.default_rng(5)
    model = toy(5)
    cfg = TrainConfig(r_in=2, r_out=2)
    batch = rng.normal(size=(4, 3, 16)) * 0.5
    _, grad = loss_and_gradient(model, batch, cfg)
    fd = central_difference(lambda: recurrent_loss(model, batch, cfg), model.flat)
    assert max_rel_error(grad.flat, fd) < 1e-6


def test_self_generated_dataset_has_zero_loss():
    model = toy(7)
    cfg = TrainConfig(r_in=3, r_out=2)
    w0 = np.random.default_rng(7).normal(size=(5, 16))
    seq = np.stack([pde_compose(model, w0, r * cfg.r_in) for r in range(3)], axis=1)
    assert recurrent_loss(model, seq, cfg) < 1e-20


def test_like_preserves_layout():
    model = toy()
    clone = model.like(model.flat.copy())
    assert isinstance(clone, PdeFlowMapModel)
    w = np.ones(16)
    assert np.array_equal(pde_forward(clone, w), pde_forward(model, w))
