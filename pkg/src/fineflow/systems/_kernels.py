"""Compiled right-hand sides and a per-trajectory Dormand-Prince loop.

These mirror the NumPy versions in :mod:`fineflow.systems.ode`; they exist
because long single trajectories (the Lorenz chunk source) are dominated by
interpreter overhead otherwise.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def vdp(y, p, out):
    out[0] = y[1]
    out[1] = (1.0 - y[0] * y[0]) * y[1] - y[0]


@njit(cache=True)
def pendulum(y, p, out):
    out[0] = y[1]
    out[1] = -p[0] * np.sin(y[0])


@njit(cache=True)
def dae_circuit(y, p, out):
    # p = (C, L, U0, G0, Ginf)
    v1 = (p[3] - p[4]) * p[2] * np.tanh(y[0] / p[2]) + p[4] * y[0]
    v2 = -(y[1] + v1)
    out[0] = v2 / p[0]
    out[1] = y[0] / p[1]


@njit(cache=True)
def lorenz(y, p, out):
    # p = (sigma, rho, beta)
    out[0] = p[0] * (y[1] - y[0])
    out[1] = y[0] * (p[1] - y[2]) - y[1]
    out[2] = y[0] * y[1] - p[2] * y[2]


_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_E = np.array([
    35 / 384 - 5179 / 57600,
    0.0,
    500 / 1113 - 7571 / 16695,
    125 / 192 - 393 / 640,
    -2187 / 6784 + 92097 / 339200,
    11 / 84 - 187 / 2100,
    -1 / 40,
])


@njit(cache=True)
def _initial_step(f, y, k1, p, atol, rtol, span):
    d = y.size
    d0 = 0.0
    d1 = 0.0
    for j in range(d):
        sc = atol + rtol * abs(y[j])
        d0 += (y[j] / sc) ** 2
        d1 += (k1[j] / sc) ** 2
    d0 = np.sqrt(d0 / d)
    d1 = np.sqrt(d1 / d)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6 * span
    else:
        h0 = 0.01 * d0 / d1
    y1 = y + h0 * k1
    k2 = np.empty(d)
    f(y1, p, k2)
    d2 = 0.0
    for j in range(d):
        sc = atol + rtol * abs(y[j])
        d2 += ((k2[j] - k1[j]) / sc) ** 2
    d2 = np.sqrt(d2 / d) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6 * span, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


@njit(cache=True)
def dopri5_batch(f, y0s, p, times, atol, rtol):
    """Integrate each row of ``y0s``; returns ``(states, failed_row, t_fail)``.

    ``failed_row`` is -1 on success, else the row whose step size underflowed.
    """
    n_ic, d = y0s.shape
    n_t = times.size
    out = np.empty((n_t, n_ic, d))
    ks = np.empty((7, d))
    y_stage = np.empty(d)
    y_new = np.empty(d)
    tiny = 16 * 2.220446049250313e-16 * abs(times[-1])
    for m in range(n_ic):
        y = y0s[m].copy()
        out[0, m] = y
        if n_t == 1:
            continue
        f(y, p, ks[0])
        t = 0.0
        h = _initial_step(f, y, ks[0], p, atol, rtol, times[-1])
        for i in range(1, n_t):
            target = times[i]
            while t < target:
                remaining = target - t
                last = h >= remaining
                step = remaining if last else h
                for s in range(1, 7):
                    for j in range(d):
                        acc = 0.0
                        for q in range(s):
                            acc += _A[s, q] * ks[q, j]
                        y_stage[j] = y[j] + step * acc
                    f(y_stage, p, ks[s])
                # stage 7 was evaluated at the fifth-order solution itself
                err_norm = 0.0
                for j in range(d):
                    y_new[j] = y_stage[j]
                    e = 0.0
                    for q in range(7):
                        e += _E[q] * ks[q, j]
                    sc = atol + rtol * max(abs(y[j]), abs(y_new[j]))
                    err_norm = max(err_norm, abs(step * e) / sc)
                if err_norm <= 1.0:
                    t = target if last else t + step
                    y[:] = y_new
                    ks[0] = ks[6]
                    if err_norm == 0.0:
                        factor = 5.0
                    else:
                        factor = min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
                    h = max(h, step * factor) if last else step * factor
                else:
                    h = step * max(0.2, 0.9 * err_norm ** -0.2)
                if h < tiny:
                    return out, m, t
            out[i, m] = y
    return out, -1, 0.0
