import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fineflow.evaluate import (
    DegenerateSeriesError,
    DivergenceError,
    RolloutResult,
    autocorrelation,
    evaluate_preset,
    histogram,
    histogram_intersection,
    mean_error,
    pointwise_error,
    rollout,
    two_seed_divergence_report,
    write_csv,
)
from fineflow.net import MlpParams, compose, init_mlp
from fineflow.presets import get_preset


def test_rollout_prefix_and_determinism():
    net = init_mlp((2, 6, 2), 0)
    x0 = np.array([0.4, -0.1])
    long = rollout(net, x0, 12)
    assert np.array_equal(rollout(net, x0, 5), long[:6])
    assert np.array_equal(long, rollout(net, x0, 12))
    assert np.array_equal(long[7], compose(net, x0, 7))
    assert np.array_equal(long[0], x0)


def test_rollout_batch_shape():
    net = init_mlp((3, 4, 3), 0)
    assert rollout(net, np.zeros((5, 3)), 4).shape == (5, 5, 3)


def test_rollout_divergence_reports_step():
    net = MlpParams((1, 1), np.array([1.0, 0.0]))  # x -> 2x
    with pytest.raises(DivergenceError) as info:
        rollout(net, [1e308], 5)
    assert info.value.step == 1


def test_pointwise_error_euclidean():
    assert pointwise_error([[3.0, 4.0]], [[0.0, 0.0]]).tolist() == [5.0]
    with pytest.raises(ValueError):
        pointwise_error(np.zeros((3, 2)), np.zeros((4, 2)))


def test_mean_error_hand_computed():
    # two trajectories, two steps
    a = RolloutResult(np.arange(2.0), np.array([[0.0, 0.0], [3.0, 4.0]]), np.zeros((2, 2)))
    b = RolloutResult(np.arange(2.0), np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2)))
    assert mean_error([a, b]).tolist() == [0.5, 3.0]


def test_mean_error_identity_cases():
    err = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(mean_error([err]), err)
    assert np.allclose(mean_error([err, err, err]), err)
    same = RolloutResult(np.arange(3.0), np.ones((3, 2)), np.ones((3, 2)))
    assert not np.any(mean_error([same]))
    with pytest.raises(ValueError):
        mean_error([np.zeros(3), np.zeros(4)])


def test_rollout_result_alignment():
    with pytest.raises(ValueError):
        RolloutResult(np.arange(3.0), np.zeros((3, 2)), np.zeros((2, 2)))


def test_histogram_normalized():
    series = np.random.default_rng(0).normal(size=5000)
    centers, density, edges = histogram(series, 50)
    assert len(centers) == 50
    assert np.sum(density * np.diff(edges)) == pytest.approx(1.0)


def test_histogram_intersection_bounds():
    rng = np.random.default_rng(1)
    _, d, edges = histogram(rng.normal(size=2000), 50)
    assert histogram_intersection(d, d, edges) == pytest.approx(1.0)
    assert histogram_intersection(d, np.zeros_like(d), edges) == 0.0


def test_autocorrelation_of_cosine():
    # the biased estimator shrinks lag tau by (n - tau) / n, so use many periods
    period = 100
    t = np.arange(200 * period)
    r = autocorrelation(np.cos(2 * np.pi * t / period), period)
    assert r[0] == pytest.approx(1.0)
    assert r[period] > 0.99
    assert r[period // 2] < -0.99


@given(seed=st.integers(0, 10_000), lag=st.integers(1, 30))
def test_autocorrelation_bounded(seed, lag):
    x = np.random.default_rng(seed).normal(size=64).cumsum()
    r = autocorrelation(x, lag)
    assert r[0] == pytest.approx(1.0)
    assert np.all(np.abs(r) <= 1 + 1e-12)


def test_autocorrelation_errors():
    with pytest.raises(DegenerateSeriesError):
        autocorrelation(np.ones(10), 3)
    with pytest.raises(ValueError):
        autocorrelation(np.arange(3.0), 3)


def test_write_csv_keeps_integers(tmp_path):
    write_csv(tmp_path / "x.csv", ["epoch", "loss"], [np.arange(1, 3), [0.5, 0.25]])
    assert (tmp_path / "x.csv").read_text().splitlines() == ["epoch,loss", "1,0.5", "2,0.25"]


def test_evaluate_preset_writes_plot_files(tmp_path):
    preset = get_preset("vdp")
    model = preset.init_model(0)
    summary = evaluate_preset(model, preset, n_test=3, n_steps=20, out_dir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"error.csv", "trajectory.csv", "phase.csv", "histogram_x1.csv",
            "autocorrelation_x1.csv", "summary.json"} <= names
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    assert (tmp_path / "error.csv").read_text().startswith("t,mean_err")
    assert (tmp_path / "histogram_x1.csv").read_text().startswith(
        "bin_center,density_pred,density_ref")


def test_evaluate_pde_preset_writes_field(tmp_path):
    preset = get_preset("fhn")
    summary = evaluate_preset(preset.init_model(0).like(), preset, n_test=2, n_steps=4,
                              out_dir=tmp_path)
    assert (tmp_path / "field_final.csv").exists()
    assert summary["n_steps"] == 4


def test_two_seed_report_identical_seeds_have_zero_distance(tmp_path):
    preset = get_preset("pendulum").override(n_sequences=40, epochs=2, predict_time=2.0)
    report = two_seed_divergence_report(preset, seeds=(3, 3), out_dir=tmp_path)
    assert report["max_distance"] == 0.0
    assert len(report["loss_curves"]) == 2 and len(report["loss_curves"][0]) == 2
    assert len(report["distance"]) == preset.predict_steps + 1
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["final_losses"] == report["final_losses"]
    assert (tmp_path / "distance.csv").exists() and (tmp_path / "loss.csv").exists()
