"""Recurrent loss with inner recurrence, Adam, and the mini-batch training loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .net import ShapeError, compose_with_tape, backward

logger = logging.getLogger(__name__)

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainingDivergedError",
    "adam_step",
    "loss_and_gradient",
    "loss_gradient",
    "recurrent_loss",
    "train",
]


class TrainingDivergedError(FloatingPointError):
    """Raised when a batch loss stops being finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch, self.batch, self.loss = epoch, batch, loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")


@dataclass
class TrainConfig:
    """Optimizer and recurrence settings.

    ``r_in`` is the number of network steps between two observations
    (so the learned step is ``delta / r_in``); ``r_out`` the number of
    observed steps each training sequence contributes to the loss.
    """

    r_in: int = 1
    r_out: int = 1
    learning_rate: float = 1e-3
    epochs: int = 10_000
    batch_size: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.r_in < 1 or self.r_out < 1:
            raise ValueError("r_in and r_out must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not (self.learning_rate >= 0 and np.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be a non-negative number")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1) or self.adam_eps <= 0:
            raise ValueError("need 0 <= beta < 1 and eps > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, flat: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(flat), np.zeros_like(flat), 0)


def _as_batch(model, batch, cfg: TrainConfig) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[1] != cfg.r_out + 1 or batch.shape[2] != model.dim:
        raise ShapeError(
            f"expected sequences of shape (n, {cfg.r_out + 1}, {model.dim}), got {batch.shape}"
        )
    return batch


def recurrent_loss(model, batch, cfg: TrainConfig) -> float:
    """Mean over sequences of the summed squared misfit at every observation.

    The model is rolled out once from each sequence's first snapshot and
    compared to snapshot ``r`` after ``r * r_in`` steps.
    """
    batch = _as_batch(model, batch, cfg)
    x = batch[:, 0]
    total = 0.0
    for r in range(1, cfg.r_out + 1):
        for _ in range(cfg.r_in):
            x = model.step(x)
        total += float(np.sum((batch[:, r] - x) ** 2))
    return total / batch.shape[0]


def loss_and_gradient(model, batch, cfg: TrainConfig):
    """Loss and parameter gradient from one tape per batch."""
    batch = _as_batch(model, batch, cfg)
    n = batch.shape[0]
    k = cfg.r_in * cfg.r_out
    _, tape = compose_with_tape(model, batch[:, 0], k)
    total = 0.0
    injections = {}
    for r in range(1, cfg.r_out + 1):
        resid = tape.states[r * cfg.r_in] - batch[:, r]
        total += float(np.sum(resid * resid))
        injections[r * cfg.r_in] = (2.0 / n) * resid
    out_grad = injections.pop(k)
    grad = backward(tape, model, out_grad, injections)
    return total / n, grad


def loss_gradient(model, batch, cfg: TrainConfig):
    """Gradient of :func:`recurrent_loss`, shaped like the model."""
    return loss_and_gradient(model, batch, cfg)[1]


def adam_step(model, grads, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update of ``model.flat`` in place.

    Returns ``(model, state)``. The step counter is incremented before use.
    """
    g = np.asarray(grads) if isinstance(grads, np.ndarray) else grads.flat
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.t += 1
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    model.flat -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    model.version += 1
    return model, state


def train(model, dataset, cfg: TrainConfig, callbacks=(), log_every: int = 0):
    """Train a copy of ``model`` on ``dataset``; return ``(model, history)``.

    ``dataset`` is an :class:`~fineflow.dataset.ObservationDataset` or an
    array of shape ``(M, r_out + 1, dim)``. Each epoch reshuffles the samples
    with a generator seeded from ``cfg.seed`` and walks them in batches of
    ``cfg.batch_size`` (the last, possibly short, batch included). ``history``
    holds the sample-weighted mean batch loss of every epoch. Each callback is
    called as ``callback(epoch, mean_loss, model)`` after every epoch.
    """
    data = np.asarray(getattr(dataset, "data", dataset), dtype=np.float64)
    data = _as_batch(model, data, cfg)
    n_samples = data.shape[0]
    if n_samples == 0:
        raise ValueError("empty dataset")
    model = model.copy()
    state = AdamState.zeros_like(model.flat)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        running = 0.0
        for b, start in enumerate(range(0, n_samples, cfg.batch_size)):
            batch = data[order[start : start + cfg.batch_size]]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grad = loss_and_gradient(model, batch, cfg)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad.flat)):
                raise TrainingDivergedError(epoch, b, loss)
            running += loss * batch.shape[0]
            adam_step(model, grad, state, cfg)
        mean_loss = running / n_samples
        history.append(mean_loss)
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            logger.info("epoch %d loss %.6e", epoch, mean_loss)
        for cb in callbacks:
            cb(epoch, mean_loss, model)
    return model, history
