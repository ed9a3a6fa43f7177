"""scikit-learn style front end for fitting fine-scale flow maps."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import ObservationDataset
from .evaluate import rollout
from .net import compose, init_mlp
from .pde_net import init_pde_model
from .training import TrainConfig, train

__all__ = ["FlowMapRegressor", "PdeFlowMapRegressor"]


def _as_sequences(X, y=None) -> np.ndarray:
    """Accept ``(M, R_out + 1, d)`` sequences or ``(X, y)`` pairs one step apart."""
    if y is None:
        seq = check_array(X, allow_nd=True, ensure_min_samples=1)
        if seq.ndim != 3 or seq.shape[1] < 2:
            raise ValueError(
                f"expected sequences of shape (M, R_out + 1, d) or (X, y) pairs, got {seq.shape}"
            )
        return seq
    X = check_array(X)
    y = check_array(y)
    if X.shape != y.shape:
        raise ValueError(f"X and y must have the same shape, got {X.shape} and {y.shape}")
    return np.stack([X, y], axis=1)


class FlowMapRegressor(RegressorMixin, BaseEstimator):
    """Learn a residual step of size ``delta / r_in`` from coarse observations.

    ``fit`` takes either an array of observation sequences, shape
    ``(M, R_out + 1, d)``, or paired states ``X -> y`` one observation step
    apart. ``predict`` maps states forward by one observation step (``r_in``
    fine steps) and ``rollout`` marches the fine-scale map.
    """

    def __init__(self, hidden=(20, 20, 20), r_in=1, learning_rate=1e-3, epochs=1000,
                 batch_size=50, activation="tanh", init_output_scale=1.0, random_state=0):
        self.hidden = hidden
        self.r_in = r_in
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.activation = activation
        self.init_output_scale = init_output_scale
        self.random_state = random_state

    def _build_model(self, dim: int):
        rng = np.random.default_rng([self.random_state, 0])
        return init_mlp((dim, *self.hidden, dim), rng, self.activation, self.init_output_scale)

    def _check_features(self, dim: int) -> None:
        pass

    def fit(self, X, y=None, delta: float = 1.0):
        seq = _as_sequences(X, y)
        self._check_features(seq.shape[2])
        cfg = TrainConfig(r_in=self.r_in, r_out=seq.shape[1] - 1,
                          learning_rate=self.learning_rate, epochs=self.epochs,
                          batch_size=min(self.batch_size, len(seq)), seed=self.random_state)
        data = ObservationDataset(seq, delta)
        self.model_, self.loss_curve_ = train(self._build_model(seq.shape[2]), data, cfg)
        self.n_features_in_ = seq.shape[2]
        self.r_out_ = cfg.r_out
        self.delta_ = float(delta)
        return self

    def _validated(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model expects {self.n_features_in_}")
        return X

    def predict(self, X) -> np.ndarray:
        """States one observation step ahead."""
        X = self._validated(X)
        return compose(self.model_, X, self.r_in)

    def rollout(self, x0, n_steps: int) -> np.ndarray:
        """Fine-scale trajectory, shape ``(n_steps + 1, n, d)``."""
        x0 = self._validated(np.atleast_2d(x0))
        return rollout(self.model_, x0, n_steps)

    @property
    def fine_step_(self) -> float:
        check_is_fitted(self, "model_")
        return self.delta_ / self.r_in

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        meta = {"estimator": type(self).__name__, "params": self.get_params(),
                "delta": self.delta_, "r_out": self.r_out_}
        save_checkpoint(self.model_, path, _jsonable(meta))

    @classmethod
    def load(cls, path):
        model, meta = load_checkpoint(path)
        params = {k: tuple(v) if isinstance(v, list) else v
                  for k, v in meta.get("params", {}).items() if k in cls._get_param_names()}
        est = cls(**params)
        est.model_ = model
        est.loss_curve_ = []
        est.n_features_in_ = model.dim
        est.r_out_ = int(meta.get("r_out", 1))
        est.delta_ = float(meta.get("delta", 1.0))
        return est


class PdeFlowMapRegressor(FlowMapRegressor):
    """Nodal-field variant: dense disassembly channels plus a per-node assembly net."""

    def __init__(self, n_nodes=50, n_components=1, n_channels=3, channel_hidden=(100,),
                 assembly_hidden=(5,), r_in=1, learning_rate=1e-3, epochs=1000,
                 batch_size=50, activation="tanh", init_output_scale=1.0, random_state=0):
        self.n_nodes = n_nodes
        self.n_components = n_components
        self.n_channels = n_channels
        self.channel_hidden = channel_hidden
        self.assembly_hidden = assembly_hidden
        self.r_in = r_in
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.activation = activation
        self.init_output_scale = init_output_scale
        self.random_state = random_state

    def _check_features(self, dim: int) -> None:
        if dim != self.n_nodes * self.n_components:
            raise ValueError(
                f"fields of length {dim} do not match {self.n_nodes} nodes x "
                f"{self.n_components} components"
            )

    def _build_model(self, dim: int):
        rng = np.random.default_rng([self.random_state, 0])
        return init_pde_model(self.n_nodes, self.n_components, self.n_channels,
                              self.channel_hidden, self.assembly_hidden, rng,
                              self.activation, output_scale=self.init_output_scale)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
