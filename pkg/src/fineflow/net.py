"""Dense residual networks with exact reverse-mode gradients through compositions.

Parameters of a network live in a single contiguous float64 vector; the
per-layer weight matrices and bias vectors are views into it. This keeps the
optimizer update a handful of vector operations and makes gradients share the
exact same layout as the parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "GradientTape",
    "MlpParams",
    "ShapeError",
    "StaleTapeError",
    "backward",
    "compose",
    "compose_with_tape",
    "init_mlp",
    "mlp_forward",
    "resnet_step",
]

# Stable ids are part of the checkpoint format.
ACTIVATIONS = {"tanh": 0, "relu": 1, "identity": 2}


class ShapeError(ValueError):
    """Input array does not match the network's declared dimensions."""


class StaleTapeError(RuntimeError):
    """A tape was replayed or back-propagated after its parameters changed."""


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z, out=z)
    if kind == "relu":
        return np.maximum(z, 0.0, out=z)
    return z


def _activation_grad(a: np.ndarray, kind: str) -> np.ndarray:
    # derivative expressed through the activation value itself
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (a > 0.0).astype(a.dtype)
    return np.ones_like(a)


def n_params(layer_sizes) -> int:
    return sum(o * i + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


def _split(flat: np.ndarray, layer_sizes):
    weights, biases = [], []
    pos = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(flat[pos : pos + n_out * n_in].reshape(n_out, n_in))
        pos += n_out * n_in
        biases.append(flat[pos : pos + n_out])
        pos += n_out
    return weights, biases


@dataclass(eq=False)
class MlpParams:
    """Fully connected network ``R^n_in -> R^n_out`` plus its residual step.

    ``layer_sizes`` lists input width, hidden widths and output width. Hidden
    layers use ``activation``; the output layer is affine. Layer ``l`` has a
    weight matrix of shape ``(layer_sizes[l+1], layer_sizes[l])``.

    ``flat`` holds every parameter, layer by layer, weights (row-major) before
    biases. When ``flat`` is a view into a larger buffer the network shares
    that storage.
    """

    layer_sizes: tuple
    flat: np.ndarray
    activation: str = "tanh"
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"invalid layer_sizes {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (isinstance(self.flat, np.ndarray) and self.flat.dtype == np.float64):
            self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.ndim != 1 or self.flat.size != n_params(self.layer_sizes):
            raise ShapeError(
                f"expected {n_params(self.layer_sizes)} parameters, got {self.flat.shape}"
            )
        self.weights, self.biases = _split(self.flat, self.layer_sizes)

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def dim(self) -> int:
        return self.layer_sizes[0]

    def like(self, flat: np.ndarray | None = None) -> "MlpParams":
        """Same architecture over ``flat`` (zeros when omitted)."""
        if flat is None:
            flat = np.zeros_like(self.flat)
        return MlpParams(self.layer_sizes, flat, self.activation)

    def copy(self) -> "MlpParams":
        return self.like(self.flat.copy())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.n_in,) or x.ndim > 2:
            raise ShapeError(f"expected input of width {self.n_in}, got shape {x.shape}")
        return x

    # -- plain network ------------------------------------------------------

    def forward_cached(self, x: np.ndarray):
        """Evaluate ``N(x)`` for a 2-D batch; also return the layer inputs."""
        acts = [x]
        a = x
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T
            z += b
            if layer < last:
                a = _activate(z, self.activation)
                acts.append(a)
            else:
                a = z
        return a, acts

    def output_from_cache(self, acts) -> np.ndarray:
        z = acts[-1] @ self.weights[-1].T
        z += self.biases[-1]
        return z

    def backward_cached(self, acts, g_out: np.ndarray, grad: "MlpParams", need_input=True):
        """Accumulate parameter gradients into ``grad``; return the input gradient."""
        g = g_out
        for layer in range(len(self.weights) - 1, -1, -1):
            a_in = acts[layer]
            grad.weights[layer] += g.T @ a_in
            grad.biases[layer] += g.sum(axis=0)
            if layer == 0 and not need_input:
                return None
            g = g @ self.weights[layer]
            if layer > 0:
                g *= _activation_grad(a_in, self.activation)
        return g

    # -- residual step protocol (shared with PdeFlowMapModel) ----------------

    def step(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        out += x
        return out

    def step_forward(self, x: np.ndarray):
        out, acts = self.forward_cached(x)
        out += x
        return out, acts

    def step_replay(self, x: np.ndarray, cache) -> np.ndarray:
        out = self.output_from_cache(cache)
        out += x
        return out

    def step_backward(self, cache, g_out: np.ndarray, grad: "MlpParams") -> np.ndarray:
        g_in = self.backward_cached(cache, g_out, grad)
        g_in += g_out
        return g_in


def init_mlp(layer_sizes, seed=None, activation: str = "tanh",
             output_scale: float = 1.0) -> MlpParams:
    """Glorot-uniform weights and zero biases, drawn from ``seed``.

    ``output_scale`` multiplies the last weight matrix; values below one
    start the residual step close to the identity map.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = MlpParams(layer_sizes, np.zeros(n_params(layer_sizes)), activation)
    for w in params.weights:
        n_out, n_in = w.shape
        limit = np.sqrt(6.0 / (n_in + n_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    params.weights[-1][...] *= output_scale
    return params


def _as_batch(model, x):
    x = model._check_input(x)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """``N(x)`` for a single state or a batch of states (rows)."""
    xb, single = _as_batch(params, x)
    out, _ = params.forward_cached(xb)
    return out[0] if single else out


def resnet_step(model, x) -> np.ndarray:
    """One residual step ``x + N(x)``."""
    xb, single = _as_batch(model, x)
    out = model.step(xb)
    return out[0] if single else out


def compose(model, x, k: int) -> np.ndarray:
    """Apply the residual step ``k`` times; ``k == 0`` returns ``x`` itself."""
    if k < 0:
        raise ValueError("composition count must be non-negative")
    xb, single = _as_batch(model, x)
    for _ in range(k):
        xb = model.step(xb)
    return xb[0] if single else xb


@dataclass(eq=False)
class GradientTape:
    """Per-step caches of a ``k``-fold composition.

    ``states[i]`` is the input of step ``i`` and ``states[k]`` the output;
    ``caches[i]`` holds the layer activations of step ``i``.
    """

    states: list
    caches: list
    single: bool
    model_id: int
    model_version: int

    @property
    def depth(self) -> int:
        return len(self.caches)

    @property
    def output(self) -> np.ndarray:
        out = self.states[-1]
        return out[0] if self.single else out

    def check(self, model) -> None:
        if id(model) != self.model_id or model.version != self.model_version:
            raise StaleTapeError("tape was recorded with different parameters")

    def replay(self, model) -> np.ndarray:
        """Recompute the output from the cached activations alone."""
        self.check(model)
        x = self.states[0]
        for cache in self.caches:
            x = model.step_replay(x, cache)
        return x[0] if self.single else x


def compose_with_tape(model, x, k: int):
    """Like :func:`compose`, additionally recording a :class:`GradientTape`."""
    if k < 0:
        raise ValueError("composition count must be non-negative")
    xb, single = _as_batch(model, x)
    states, caches = [xb], []
    for _ in range(k):
        xb, cache = model.step_forward(xb)
        states.append(xb)
        caches.append(cache)
    tape = GradientTape(states, caches, single, id(model), model.version)
    return tape.output, tape


def backward(tape: GradientTape, model, out_grad, injections=None, return_input_grad=False):
    """Gradient of ``<out_grad, output>`` with respect to the model parameters.

    ``injections`` maps a step index ``i`` (1..depth) to an extra gradient on
    the state after step ``i``; this is how losses measured at intermediate
    compositions enter a single reverse sweep. Stale tapes (parameters updated
    through :func:`fineflow.training.adam_step` since recording) raise
    :class:`StaleTapeError`; in-place edits elsewhere are not detected.
    """
    tape.check(model)
    injections = injections or {}

    def _batched(g):
        g = np.asarray(g, dtype=np.float64)
        return g[None, :] if tape.single else g

    g = np.array(_batched(out_grad), dtype=np.float64)
    if g.shape != tape.states[-1].shape:
        raise ShapeError(f"output gradient shape {g.shape} != {tape.states[-1].shape}")
    grad = model.like()
    for i in range(tape.depth, 0, -1):
        if i in injections:
            g += _batched(injections[i])
        g = model.step_backward(tape.caches[i - 1], g, grad)
    if 0 in injections:
        g += _batched(injections[0])
    if return_input_grad:
        return grad, (g[0] if tape.single else g)
    return grad
