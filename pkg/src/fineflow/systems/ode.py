"""Reference ODE systems and the integrators used to synthesize data.

Every right-hand side is vectorized over leading axes: ``y[..., i]`` is
component ``i``. The integrators advance a whole batch of initial conditions
together, which is what makes generating thousands of trajectories cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels

__all__ = [
    "DAE_CIRCUIT",
    "IntegratorConfig",
    "LORENZ",
    "OdeSystem",
    "PENDULUM",
    "PENDULUM_BETA",
    "StiffnessError",
    "SYSTEMS",
    "Trajectory",
    "VAN_DER_POL",
    "dae_algebraic",
    "dae_circuit_rhs",
    "integrate",
    "lorenz_rhs",
    "pendulum_energy",
    "pendulum_rhs",
    "vdp_rhs",
]

PENDULUM_BETA = 9.80665
DAE_PARAMS = {"C": 1e-9, "L": 1e-6, "U0": 1.0, "G0": -0.1, "Ginf": 0.25}
LORENZ_PARAMS = {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}


class StiffnessError(RuntimeError):
    """Adaptive step size collapsed below floating-point resolution."""


def vdp_rhs(y):
    y = np.asarray(y, dtype=np.float64)
    y1, y2 = y[..., 0], y[..., 1]
    return np.stack([y2, (1.0 - y1 * y1) * y2 - y1], axis=-1)


def pendulum_rhs(y, beta=PENDULUM_BETA):
    y = np.asarray(y, dtype=np.float64)
    return np.stack([y[..., 1], -beta * np.sin(y[..., 0])], axis=-1)


def pendulum_energy(y, beta=PENDULUM_BETA):
    y = np.asarray(y, dtype=np.float64)
    return 0.5 * y[..., 1] ** 2 - beta * np.cos(y[..., 0])


def dae_algebraic(u, C=1e-9, L=1e-6, U0=1.0, G0=-0.1, Ginf=0.25):
    """Resolve the circuit's algebraic variables; returns ``(u1, u2, v1, v2)``."""
    u = np.asarray(u, dtype=np.float64)
    u1, u2 = u[..., 0], u[..., 1]
    v1 = (G0 - Ginf) * U0 * np.tanh(u1 / U0) + Ginf * u1
    v2 = -(u2 + v1)
    return np.stack([u1, u2, v1, v2], axis=-1)


def dae_circuit_rhs(u, C=1e-9, L=1e-6, U0=1.0, G0=-0.1, Ginf=0.25):
    full = dae_algebraic(u, C, L, U0, G0, Ginf)
    return np.stack([full[..., 3] / C, full[..., 0] / L], axis=-1)


def lorenz_rhs(x, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    x = np.asarray(x, dtype=np.float64)
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([sigma * (b - a), a * (rho - c) - b, a * b - beta * c], axis=-1)


@dataclass(frozen=True)
class OdeSystem:
    """A known vector field. ``kernel`` is an optional compiled twin of ``rhs``
    (signature ``kernel(y, params, out)``, params in ``params`` dict order)."""

    name: str
    dim: int
    rhs: Callable
    params: dict = field(default_factory=dict)
    kernel: Callable | None = None

    def __call__(self, y):
        return self.rhs(y, **self.params)


VAN_DER_POL = OdeSystem("vdp", 2, vdp_rhs, kernel=_kernels.vdp)
PENDULUM = OdeSystem("pendulum", 2, pendulum_rhs, {"beta": PENDULUM_BETA}, _kernels.pendulum)
DAE_CIRCUIT = OdeSystem("dae", 2, dae_circuit_rhs, dict(DAE_PARAMS), _kernels.dae_circuit)
LORENZ = OdeSystem("lorenz", 3, lorenz_rhs, dict(LORENZ_PARAMS), _kernels.lorenz)
SYSTEMS = {s.name: s for s in (VAN_DER_POL, PENDULUM, DAE_CIRCUIT, LORENZ)}


@dataclass(frozen=True)
class IntegratorConfig:
    """``method`` is ``"rk45"`` (adaptive Dormand-Prince) or ``"rk4"`` (fixed ``h``)."""

    method: str = "rk45"
    h: float | None = None
    atol: float = 1e-10
    rtol: float = 1e-10
    compiled: bool = True

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.method == "rk4" and (self.h is None or self.h <= 0):
            raise ValueError("rk4 needs a positive substep h")


@dataclass
class Trajectory:
    """States at ``t``; ``states`` has shape ``(len(t), d)`` or ``(len(t), batch, d)``."""

    t: np.ndarray
    states: np.ndarray

    def to_csv(self, path) -> None:
        if self.states.ndim != 2:
            raise ValueError("CSV export supports a single trajectory")
        d = self.states.shape[1]
        header = "t," + ",".join(f"x{i + 1}" for i in range(d))
        np.savetxt(path, np.column_stack([self.t, self.states]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def output_times(t_end: float, output_dt: float) -> np.ndarray:
    if output_dt <= 0:
        raise ValueError("output_dt must be positive")
    ratio = t_end / output_dt
    n = int(round(ratio))
    if n < 0 or abs(ratio - n) > 1e-12 * max(1.0, n):
        raise ValueError(f"output_dt={output_dt!r} does not divide t_end={t_end!r}")
    return np.arange(n + 1) * output_dt


def _rk4_substeps(output_dt: float, h: float) -> int:
    n = int(round(output_dt / h))
    if n < 1 or abs(n * h - output_dt) > 1e-12 * output_dt:
        raise ValueError(f"substep h={h!r} does not divide the output interval {output_dt!r}")
    return n


def rk4_advance(f, y, h: float, n: int):
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# fifth-order weights minus embedded fourth-order weights
_E = (
    35 / 384 - 5179 / 57600,
    0.0,
    500 / 1113 - 7571 / 16695,
    125 / 192 - 393 / 640,
    -2187 / 6784 + 92097 / 339200,
    11 / 84 - 187 / 2100,
    -1 / 40,
)


def _error_norm(err, y, y_new, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def _initial_step(f, y, k1, atol, rtol, span):
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h0 = 1e-6 * span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + h0 * k1
    d2 = np.sqrt(np.mean(((f(y1) - k1) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6 * span, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def _dopri5(f, y0, times, atol, rtol, name):
    y = y0
    out = np.empty((len(times),) + y0.shape)
    out[0] = y
    if len(times) == 1:
        return out
    k1 = f(y)
    t = 0.0
    h = _initial_step(f, y, k1, atol, rtol, times[-1])
    tiny = 16 * np.finfo(float).eps * abs(times[-1])
    for i in range(1, len(times)):
        target = times[i]
        while t < target:
            remaining = target - t
            last = h >= remaining
            step = remaining if last else h
            ks = [k1]
            for s in range(1, 7):
                incr = sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
                ks.append(f(y + step * incr))
            y_new = y + step * sum(a * k for a, k in zip(_A[6], ks[:6]) if a != 0.0)
            err = step * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            err_norm = _error_norm(err, y, y_new, atol, rtol)
            if err_norm <= 1.0:
                t = target if last else t + step
                y = y_new
                k1 = ks[6]
                factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm**-0.2))
                h = max(h, step * factor) if last else step * factor
            else:
                h = step * max(0.2, 0.9 * err_norm**-0.2)
            if h < tiny:
                raise StiffnessError(f"{name}: step size underflow at t={t!r}")
        out[i] = y
    return out


def integrate(system, x0, t_end: float, output_dt: float, cfg: IntegratorConfig | None = None):
    """States at ``0, output_dt, ..., t_end`` starting from ``x0``.

    ``x0`` may be one state ``(d,)`` or a batch ``(b, d)``. Systems with a
    compiled kernel are integrated one initial condition at a time, each with
    its own step control; plain callables advance the batch together with
    steps controlled by its worst member. Output times are hit exactly by
    shortening the step that would cross them.
    """
    cfg = cfg or IntegratorConfig()
    f = system if callable(system) else system.rhs
    name = getattr(system, "name", "system")
    x0 = np.asarray(x0, dtype=np.float64)
    times = output_times(t_end, output_dt)
    if cfg.method == "rk4":
        n_sub = _rk4_substeps(output_dt, cfg.h)
        h = output_dt / n_sub
        states = np.empty((len(times),) + x0.shape)
        states[0] = y = x0
        for i in range(1, len(times)):
            y = rk4_advance(f, y, h, n_sub)
            states[i] = y
    elif getattr(system, "kernel", None) is not None and cfg.compiled:
        batch = x0.reshape(-1, x0.shape[-1])
        params = np.array(list(system.params.values()), dtype=np.float64)
        states, failed, t_fail = _kernels.dopri5_batch(
            system.kernel, batch, params, times, cfg.atol, cfg.rtol
        )
        if failed >= 0:
            raise StiffnessError(
                f"{name}: step size underflow at t={t_fail!r} (initial condition {failed})"
            )
        states = states.reshape((len(times),) + x0.shape)
    else:
        states = _dopri5(f, x0, times, cfg.atol, cfg.rtol, name)
    return Trajectory(times, states)
