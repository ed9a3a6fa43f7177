"""Nodal-space PDE flow map: disassembly channels and a per-node assembly net.

One residual step maps a flattened grid field ``w`` (length ``N``) to

    w + A(F_1(w), ..., F_J(w))

where every channel ``F_j`` is a dense network ``R^N -> R^N`` and the assembly
network ``A: R^J -> R`` is applied with shared weights to each of the ``N``
entries. Multi-component fields are flattened component-major, i.e. all
nodes of component 0 first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .net import (
    MlpParams,
    ShapeError,
    backward,
    compose,
    compose_with_tape,
    init_mlp,
    n_params,
    resnet_step,
)

__all__ = [
    "PdeFlowMapModel",
    "init_pde_model",
    "pde_backward",
    "pde_compose",
    "pde_compose_with_tape",
    "pde_forward",
]


def _layout(n: int, n_channels: int, channel_hidden, assembly_hidden):
    channel_sizes = (n, *channel_hidden, n)
    assembly_sizes = (n_channels, *assembly_hidden, 1)
    return channel_sizes, assembly_sizes


@dataclass(eq=False)
class PdeFlowMapModel:
    """Residual PDE step built from ``n_channels`` disassembly networks.

    All channels share the hidden widths ``channel_hidden``. ``grid`` is a
    free-form descriptor (stored in checkpoints, not used numerically).
    """

    n_nodes: int
    n_components: int
    n_channels: int
    channel_hidden: tuple
    assembly_hidden: tuple
    flat: np.ndarray
    activation: str = "tanh"
    grid: dict = field(default_factory=dict)
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.channel_hidden = tuple(int(h) for h in self.channel_hidden)
        self.assembly_hidden = tuple(int(h) for h in self.assembly_hidden)
        if self.n_channels < 1:
            raise ValueError("need at least one disassembly channel")
        channel_sizes, assembly_sizes = _layout(
            self.size, self.n_channels, self.channel_hidden, self.assembly_hidden
        )
        per_channel = n_params(channel_sizes)
        total = self.n_channels * per_channel + n_params(assembly_sizes)
        if not (isinstance(self.flat, np.ndarray) and self.flat.dtype == np.float64):
            self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (total,):
            raise ShapeError(f"expected {total} parameters, got {self.flat.shape}")
        self.channels = [
            MlpParams(channel_sizes, self.flat[j * per_channel : (j + 1) * per_channel],
                      self.activation)
            for j in range(self.n_channels)
        ]
        self.assembly = MlpParams(
            assembly_sizes, self.flat[self.n_channels * per_channel :], self.activation
        )

    @property
    def size(self) -> int:
        return self.n_nodes * self.n_components

    @property
    def dim(self) -> int:
        return self.size

    def like(self, flat=None) -> "PdeFlowMapModel":
        if flat is None:
            flat = np.zeros_like(self.flat)
        return PdeFlowMapModel(
            self.n_nodes, self.n_components, self.n_channels, self.channel_hidden,
            self.assembly_hidden, flat, self.activation, dict(self.grid),
        )

    def copy(self) -> "PdeFlowMapModel":
        return self.like(self.flat.copy())

    def _check_input(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape[-1:] != (self.size,) or w.ndim > 2:
            raise ShapeError(f"expected field of length {self.size}, got shape {w.shape}")
        return w

    def assemble(self, features: np.ndarray) -> np.ndarray:
        """Assembly stage alone: ``(..., N, J)`` channel outputs to ``(..., N)``."""
        shape = features.shape[:-1]
        out, _ = self.assembly.forward_cached(features.reshape(-1, self.n_channels))
        return out.reshape(shape)

    def step_forward(self, w: np.ndarray):
        batch = w.shape[0]
        channel_caches = []
        features = np.empty((batch, self.size, self.n_channels))
        for j, channel in enumerate(self.channels):
            out, acts = channel.forward_cached(w)
            features[:, :, j] = out
            channel_caches.append(acts)
        a_out, a_acts = self.assembly.forward_cached(features.reshape(-1, self.n_channels))
        out = a_out.reshape(batch, self.size)
        out += w
        return out, (channel_caches, a_acts)

    def step(self, w: np.ndarray) -> np.ndarray:
        return self.step_forward(w)[0]

    def step_replay(self, w: np.ndarray, cache) -> np.ndarray:
        _, a_acts = cache
        out = self.assembly.output_from_cache(a_acts).reshape(w.shape)
        out += w
        return out

    def step_backward(self, cache, g_out: np.ndarray, grad: "PdeFlowMapModel") -> np.ndarray:
        channel_caches, a_acts = cache
        batch = g_out.shape[0]
        g_features = self.assembly.backward_cached(
            a_acts, g_out.reshape(-1, 1), grad.assembly
        ).reshape(batch, self.size, self.n_channels)
        g_in = g_out.copy()
        for j, channel in enumerate(self.channels):
            g_in += channel.backward_cached(
                channel_caches[j], np.ascontiguousarray(g_features[:, :, j]), grad.channels[j]
            )
        return g_in


def init_pde_model(
    n_nodes: int,
    n_components: int,
    n_channels: int,
    channel_hidden,
    assembly_hidden,
    seed=None,
    activation: str = "tanh",
    grid: dict | None = None,
    output_scale: float = 1.0,
) -> PdeFlowMapModel:
    """Glorot-uniform initialization of every channel and the assembly net.

    ``output_scale`` shrinks the assembly output layer, see :func:`init_mlp`.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = n_nodes * n_components
    channel_sizes, assembly_sizes = _layout(n, n_channels, channel_hidden, assembly_hidden)
    parts = [init_mlp(channel_sizes, rng, activation).flat for _ in range(n_channels)]
    parts.append(init_mlp(assembly_sizes, rng, activation, output_scale).flat)
    return PdeFlowMapModel(
        n_nodes, n_components, n_channels, channel_hidden, assembly_hidden,
        np.concatenate(parts), activation, dict(grid or {}),
    )


def pde_forward(model: PdeFlowMapModel, w) -> np.ndarray:
    """One residual step on a single field or a batch of fields (rows)."""
    return resnet_step(model, w)


def pde_compose(model: PdeFlowMapModel, w, k: int) -> np.ndarray:
    return compose(model, w, k)


def pde_compose_with_tape(model: PdeFlowMapModel, w, k: int):
    return compose_with_tape(model, w, k)


def pde_backward(tape, model: PdeFlowMapModel, out_grad, injections=None, return_input_grad=False):
    return backward(tape, model, out_grad, injections, return_input_grad)
