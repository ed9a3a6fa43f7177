"""Method-of-lines reference solvers for the two PDE benchmarks.

* FitzHugh-Nagumo with diffusion on a periodic 1-D grid; fields are stored
  component-major, ``[v_0..v_{n-1}, w_0..w_{n-1}]``.
* Advection-diffusion on a square with zero Dirichlet boundary; the nodal
  field ``u[i, j]`` at ``(x_i, y_j)`` is flattened row-major over ``(i, j)``.

Both right-hand sides use second-order central differences and accept any
number of leading batch axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FHN_PARAMS",
    "Grid1D",
    "Grid2D",
    "StabilityError",
    "advdiff_max_substep",
    "advdiff_rhs",
    "fhn_demo_ic",
    "fhn_ic_from_breakpoints",
    "fhn_max_substep",
    "fhn_rest_state",
    "fhn_rhs",
    "fourier_field_2d",
    "gaussian_ic_2d",
    "integrate_pde",
    "iter_pde",
    "periodic_laplacian",
    "sample_fhn_ic",
    "sample_fourier_ic_2d",
]

FHN_PARAMS = {"D": 0.01, "eps": 0.08, "b": 0.7, "c": 0.8}


class StabilityError(RuntimeError):
    """Explicit time stepping blew up; ``suggested_substep`` is worth a retry."""

    def __init__(self, message: str, suggested_substep: float):
        super().__init__(f"{message}; retry with substep <= {suggested_substep:.3g}")
        self.suggested_substep = suggested_substep


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid, ``x_i = i * length / n``."""

    n: int = 50
    length: float = 5.0

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def describe(self) -> dict:
        return {"kind": "periodic1d", "n": self.n, "length": self.length}


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``nx x ny`` node grid on ``[lo, hi]^2`` including the boundary ring."""

    nx: int = 16
    ny: int = 16
    lo: float = -1.0
    hi: float = 1.0

    @property
    def hx(self) -> float:
        return (self.hi - self.lo) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.hi - self.lo) / (self.ny - 1)

    @property
    def n(self) -> int:
        return self.nx * self.ny

    def mesh(self):
        x = np.linspace(self.lo, self.hi, self.nx)
        y = np.linspace(self.lo, self.hi, self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros((self.nx, self.ny), dtype=bool)
        mask[[0, -1], :] = True
        mask[:, [0, -1]] = True
        return mask.ravel()

    def describe(self) -> dict:
        return {"kind": "dirichlet2d", "nx": self.nx, "ny": self.ny, "lo": self.lo, "hi": self.hi}


def periodic_laplacian(v: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(v, 1, axis=-1) + np.roll(v, -1, axis=-1) - 2.0 * v) / (h * h)


def fhn_rhs(state, grid: Grid1D = Grid1D(), D=0.01, eps=0.08, b=0.7, c=0.8):
    """Time derivative of a stacked ``(v, w)`` field; diffusion acts on ``v``."""
    state = np.asarray(state, dtype=np.float64)
    n = grid.n
    v, w = state[..., :n], state[..., n:]
    dv = v - v**3 / 3.0 - w + D * periodic_laplacian(v, grid.h)
    dw = eps * (v + b - c * w)
    return np.concatenate([dv, dw], axis=-1)


def fhn_rest_state(b=0.7, c=0.8):
    """Spatially uniform equilibrium ``(v*, w*)`` of the reaction terms."""
    # v - v^3/3 - (v + b)/c = 0 has a single real root for these parameters
    roots = np.roots([-1.0 / 3.0, 0.0, 1.0 - 1.0 / c, -b / c])
    v = float(roots[np.argmin(np.abs(roots.imag))].real)
    return v, (v + b) / c


def advdiff_rhs(u, grid: Grid2D = Grid2D(), kappa=5e-3, advect: bool = True):
    """``-div(alpha u) + kappa lap(u)`` with ``alpha(x, y) = (y, -x)``.

    Boundary nodes get a zero derivative so they stay pinned at zero.
    ``advect=False`` drops the transport term.
    """
    u = np.asarray(u, dtype=np.float64)
    lead = u.shape[:-1]
    U = u.reshape(lead + (grid.nx, grid.ny))
    hx, hy = grid.hx, grid.hy
    out = np.zeros_like(U)
    inner = out[..., 1:-1, 1:-1]
    if kappa:
        inner += kappa * (
            (U[..., 2:, 1:-1] - 2.0 * U[..., 1:-1, 1:-1] + U[..., :-2, 1:-1]) / hx**2
            + (U[..., 1:-1, 2:] - 2.0 * U[..., 1:-1, 1:-1] + U[..., 1:-1, :-2]) / hy**2
        )
    if advect:
        X, Y = grid.mesh()
        fx = Y * U
        fy = -X * U
        inner -= (fx[..., 2:, 1:-1] - fx[..., :-2, 1:-1]) / (2.0 * hx)
        inner -= (fy[..., 1:-1, 2:] - fy[..., 1:-1, :-2]) / (2.0 * hy)
    return out.reshape(u.shape)


def advdiff_max_substep(grid: Grid2D = Grid2D(), kappa=5e-3) -> float:
    h = min(grid.hx, grid.hy)
    edge = max(abs(grid.lo), abs(grid.hi))
    bounds = [h / math.hypot(edge, edge)]
    if kappa:
        bounds.append(h * h / kappa / 4.0)
    return 0.2 * min(bounds)


def fhn_max_substep(grid: Grid1D = Grid1D(), D=0.01) -> float:
    return 0.2 * grid.h**2 / D / 4.0


def fourier_field_2d(coeffs: np.ndarray, grid: Grid2D = Grid2D()) -> np.ndarray:
    """``sum_{k,l} c[k-1, l-1] sin(k pi (x+1)/2) sin(l pi (y+1)/2)``, flattened.

    Leading axes of ``coeffs`` beyond the last two are batch axes.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    nk, nl = coeffs.shape[-2:]
    x = np.linspace(grid.lo, grid.hi, grid.nx)
    y = np.linspace(grid.lo, grid.hi, grid.ny)
    width = grid.hi - grid.lo
    sx = np.sin(np.outer(np.arange(1, nk + 1), np.pi * (x - grid.lo) / width))
    sy = np.sin(np.outer(np.arange(1, nl + 1), np.pi * (y - grid.lo) / width))
    field = np.einsum("...kl,ki,lj->...ij", coeffs, sx, sy)
    # sin(k*pi) is only zero up to rounding; pin the ring exactly
    field[..., [0, -1], :] = 0.0
    field[..., :, [0, -1]] = 0.0
    return field.reshape(coeffs.shape[:-2] + (grid.n,))


def sample_fourier_ic_2d(rng, grid: Grid2D = Grid2D(), n_modes: int = 7, size=None):
    """Random sine series with ``c_{k,l} ~ U[-1, 1] / (k + l)``."""
    shape = () if size is None else (size,)
    k = np.arange(1, n_modes + 1)
    scale = 1.0 / (k[:, None] + k[None, :])
    coeffs = rng.uniform(-1.0, 1.0, size=shape + (n_modes, n_modes)) * scale
    return fourier_field_2d(coeffs, grid)


def gaussian_ic_2d(grid: Grid2D = Grid2D(), C=0.2, mu=(0.2, 0.2), sigma=(0.18, 0.18)):
    X, Y = grid.mesh()
    u = C / (2 * np.pi * sigma[0] * sigma[1]) * np.exp(
        -0.5 * (X - mu[0]) ** 2 / sigma[0] ** 2 - 0.5 * (Y - mu[1]) ** 2 / sigma[1] ** 2
    )
    u = u.ravel()
    u[grid.boundary_mask()] = 0.0
    return u


def fhn_ic_from_breakpoints(m1: float, m2: float, rng, grid: Grid1D = Grid1D()):
    """Piecewise-uniform ``(v, w)`` field for given breakpoints ``m1 <= m2``."""
    x = grid.x
    inside = (x >= m1) & (x <= m2)
    v = np.where(inside, rng.uniform(0.9, 1.1, grid.n), rng.uniform(-1.2, -1.0, grid.n))
    w = np.where(x <= m1, rng.uniform(-0.1, 0.1, grid.n), rng.uniform(-0.6, -0.4, grid.n))
    return np.concatenate([v, w])


def sample_fhn_ic(rng, grid: Grid1D = Grid1D(), size=None):
    """Draw breakpoints ``m1 ~ U[0, 1.25]``, ``m2 = m1 + U[0.25, 1.5]`` and a field."""
    count = 1 if size is None else size
    fields = np.empty((count, 2 * grid.n))
    for i in range(count):
        m1 = rng.uniform(0.0, 1.25)
        m2 = m1 + rng.uniform(0.25, 1.5)
        fields[i] = fhn_ic_from_breakpoints(m1, m2, rng, grid)
    return fields[0] if size is None else fields


def fhn_demo_ic(grid: Grid1D = Grid1D()):
    x = grid.x
    v = np.where((x >= 0.75) & (x <= 1.0), 1.0, -1.1)
    w = np.where(x <= 0.75, 0.0, -0.5)
    return np.concatenate([v, w])


def iter_pde(rhs, ic, t_end: float, output_dt: float, max_substep: float):
    """Yield ``(k, field)`` at ``t = k * output_dt`` for ``k = 0 .. t_end/output_dt``.

    Classical RK4 with the largest substep ``<= max_substep`` that divides
    ``output_dt``. Raises :class:`StabilityError` when the field norm grows
    by more than ``1e6`` or stops being finite.
    """
    from .ode import output_times

    n_out = len(output_times(t_end, output_dt)) - 1
    n_sub = max(1, math.ceil(output_dt / max_substep - 1e-9))
    h = output_dt / n_sub
    u = np.array(ic, dtype=np.float64)
    limit = 1e6 * max(float(np.max(np.abs(u))) if u.size else 0.0, 1.0)
    yield 0, u.copy()
    for k in range(1, n_out + 1):
        for _ in range(n_sub):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        peak = float(np.max(np.abs(u)))
        if not np.isfinite(peak) or peak > limit:
            raise StabilityError(f"unstable at t={k * output_dt:g} with substep {h:.3g}", h / 2)
        yield k, u.copy()


def integrate_pde(rhs, ic, t_end: float, output_dt: float, max_substep: float) -> np.ndarray:
    """All snapshots from :func:`iter_pde`, shape ``(n_out + 1,) + ic.shape``."""
    return np.stack([u for _, u in iter_pde(rhs, ic, t_end, output_dt, max_substep)])
