"""Fine-scale rollouts, error metrics and qualitative diagnostics."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .training import train

__all__ = [
    "DegenerateSeriesError",
    "DivergenceError",
    "RolloutResult",
    "autocorrelation",
    "evaluate_preset",
    "histogram",
    "histogram_intersection",
    "mean_error",
    "pointwise_error",
    "rollout",
    "two_seed_divergence_report",
    "write_csv",
]


class DivergenceError(FloatingPointError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"rollout produced a non-finite state at step {step}")


class DegenerateSeriesError(ValueError):
    """Autocorrelation of a series with zero variance is undefined."""


@dataclass
class RolloutResult:
    t: np.ndarray
    predicted: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        if self.predicted.shape != self.reference.shape or len(self.t) != len(self.predicted):
            raise ValueError("prediction, reference and times must align")

    @property
    def errors(self) -> np.ndarray:
        return self.predicted - self.reference

    @property
    def error_norms(self) -> np.ndarray:
        return pointwise_error(self.predicted, self.reference)


def rollout(model, x0, n_steps: int) -> np.ndarray:
    """States ``x_0 .. x_n`` of the learned fine-scale map, shape ``(n + 1,) + x0.shape``."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    x = model._check_input(x0)
    single = x.ndim == 1
    x = x[None, :] if single else x
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    for k in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = model.step(x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k)
        out[k] = x
    return out[:, 0] if single else out


def pointwise_error(pred, ref) -> np.ndarray:
    """Euclidean norm of ``pred - ref`` over the last axis."""
    pred, ref = np.asarray(pred), np.asarray(ref)
    if pred.shape != ref.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {ref.shape}")
    return np.linalg.norm(pred - ref, axis=-1)


def mean_error(errors) -> np.ndarray:
    """Per-step mean over trajectories of per-step error norms.

    Accepts a list of :class:`RolloutResult` or of equal-length error arrays.
    """
    rows = [e.error_norms if isinstance(e, RolloutResult) else np.asarray(e) for e in errors]
    if len({r.shape for r in rows}) > 1:
        raise ValueError("error series have different lengths")
    return np.mean(rows, axis=0)


def histogram(series, bins: int = 50, value_range=None):
    """Density-normalized histogram; returns ``(centers, density, edges)``."""
    series = np.asarray(series, dtype=np.float64).ravel()
    density, edges = np.histogram(series, bins=bins, range=value_range, density=True)
    return 0.5 * (edges[:-1] + edges[1:]), density, edges


def histogram_intersection(density_a, density_b, edges) -> float:
    """Shared probability mass of two densities on common bins (1 = identical)."""
    return float(np.sum(np.minimum(density_a, density_b) * np.diff(edges)))


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation ``r(0..max_lag)`` normalized by the lag-0 sum."""
    x = np.asarray(series, dtype=np.float64).ravel()
    if len(x) <= max_lag:
        raise ValueError("series must be longer than max_lag")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise DegenerateSeriesError("series has zero variance")
    n = len(x)
    return np.array([np.dot(x[: n - lag], x[lag:]) / denom for lag in range(max_lag + 1)])


def write_csv(path, header, columns) -> None:
    """Columns of equal length under ``header``; integer columns stay integral."""
    columns = [np.asarray(c).ravel() for c in columns]
    if len({len(c) for c in columns}) > 1:
        raise ValueError("columns have different lengths")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(zip(*(c.tolist() for c in columns)))


def _mkdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def evaluate_preset(model, preset, n_test: int | None = None, seed: int = 2024,
                    n_steps: int | None = None, out_dir=None, max_lag: int = 500):
    """Roll the model out from fresh initial conditions and compare with the truth.

    ``n_test`` test conditions are drawn from the preset's sampler, except
    when the preset has a single designated test condition (``n_test == 1``),
    which is then used. Returns a summary dict; with ``out_dir`` the
    plot-ready CSV files are written as well.
    """
    n_test = preset.n_test if n_test is None else n_test
    n_steps = preset.predict_steps if n_steps is None else n_steps
    if n_test == 1:
        x0 = preset.default_test_ic()[None, :]
    else:
        x0 = preset.sample_ics(np.random.default_rng(seed), n_test)
    pred = rollout(model, x0, n_steps)
    ref = preset.reference(x0, n_steps)
    t = np.arange(n_steps + 1) * preset.fine_step
    err = pointwise_error(pred, ref)
    mean_err = err.mean(axis=1)
    rel = err / np.maximum(np.linalg.norm(ref, axis=-1), 1e-300)
    summary = {
        "preset": preset.name,
        "n_test": int(n_test),
        "n_steps": int(n_steps),
        "fine_step": preset.fine_step,
        "final_mean_error": float(mean_err[-1]),
        "max_mean_error": float(mean_err.max()),
        "final_mean_relative_error": float(rel[-1].mean()),
        "max_abs_state": float(np.max(np.abs(pred))),
    }
    if out_dir is None:
        return summary
    _mkdir(out_dir)
    dim = pred.shape[-1]
    write_csv(os.path.join(out_dir, "error.csv"), ["t", "mean_err", "mean_rel_err"],
              [t, mean_err, rel.mean(axis=1)])
    if dim <= 8:
        names = [f"pred_x{i + 1}" for i in range(dim)] + [f"ref_x{i + 1}" for i in range(dim)]
        write_csv(os.path.join(out_dir, "trajectory.csv"), ["t", *names],
                  [t, *pred[:, 0].T, *ref[:, 0].T])
        phase = ["x", "y", "z"][: min(dim, 3)]
        write_csv(os.path.join(out_dir, "phase.csv"),
                  [f"pred_{c}" for c in phase] + [f"ref_{c}" for c in phase],
                  [*pred[:, 0, : len(phase)].T, *ref[:, 0, : len(phase)].T])
        lag = min(max_lag, n_steps - 1)
        hist_stats = []
        for i in range(dim):
            _, dref, edges = histogram(ref[:, :, i], 50)
            dpred, _ = np.histogram(pred[:, :, i], bins=edges, density=True)
            centers = 0.5 * (edges[:-1] + edges[1:])
            write_csv(os.path.join(out_dir, f"histogram_x{i + 1}.csv"),
                      ["bin_center", "density_pred", "density_ref"], [centers, dpred, dref])
            hist_stats.append(histogram_intersection(dpred, dref, edges))
            if lag > 0 and np.ptp(ref[:, 0, i]) > 0 and np.ptp(pred[:, 0, i]) > 0:
                write_csv(os.path.join(out_dir, f"autocorrelation_x{i + 1}.csv"),
                          ["lag", "r_pred", "r_ref"],
                          [np.arange(lag + 1), autocorrelation(pred[:, 0, i], lag),
                           autocorrelation(ref[:, 0, i], lag)])
        summary["histogram_intersection"] = hist_stats
    else:
        # nodal fields: final snapshot of the first test condition
        write_csv(os.path.join(out_dir, "field_final.csv"), ["index", "pred", "ref"],
                  [np.arange(dim), pred[-1, 0], ref[-1, 0]])
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def two_seed_divergence_report(preset, seeds=(0, 1), data_seed: int = 0, test_ic=None,
                               out_dir=None, log_every: int = 0):
    """Train two models that differ only in their seed and compare their rollouts.

    Reports both loss curves, both final coarse-grid losses and the distance
    between the two fine-scale trajectories from a shared test condition.
    It makes no claim about whether the two models should or should not
    agree; that depends on how well the coarse data pins down the dynamics.
    """
    dataset = preset.generate(seed=data_seed)
    x0 = preset.default_test_ic() if test_ic is None else np.asarray(test_ic, dtype=np.float64)
    n_steps = preset.predict_steps
    histories, trajectories = [], []
    for seed in seeds:
        model, history = train(preset.init_model(seed), dataset, preset.train_config(seed),
                               log_every=log_every)
        histories.append(history)
        trajectories.append(rollout(model, x0, n_steps))
    ref = preset.reference(x0, n_steps)
    t = np.arange(n_steps + 1) * preset.fine_step
    distance = pointwise_error(trajectories[0], trajectories[1])
    report = {
        "preset": preset.name,
        "delta": preset.delta,
        "fine_step": preset.fine_step,
        "seeds": list(seeds),
        "test_ic": x0.tolist(),
        "final_losses": [h[-1] if h else None for h in histories],
        "loss_curves": histories,
        "max_distance": float(distance.max()),
        "distance": distance.tolist(),
        "t": t.tolist(),
        "error_vs_reference": [pointwise_error(tr, ref).tolist() for tr in trajectories],
    }
    if out_dir is not None:
        _mkdir(out_dir)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2)
        write_csv(os.path.join(out_dir, "distance.csv"),
                  ["t", "distance", "err_seed_a", "err_seed_b"],
                  [t, distance, *report["error_vs_reference"]])
        n_epochs = max(len(h) for h in histories)
        if n_epochs:
            write_csv(os.path.join(out_dir, "loss.csv"),
                      ["epoch", "loss_seed_a", "loss_seed_b"],
                      [np.arange(n_epochs), *histories])
        dim = len(x0)
        write_csv(os.path.join(out_dir, "trajectories.csv"),
                  ["t"] + [f"seed_a_x{i + 1}" for i in range(dim)]
                  + [f"seed_b_x{i + 1}" for i in range(dim)]
                  + [f"ref_x{i + 1}" for i in range(dim)],
                  [t, *trajectories[0].T, *trajectories[1].T, *ref.T])
    return report
