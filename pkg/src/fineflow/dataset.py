"""Observation datasets: generation from reference solvers and a binary format.

File layout (all integers and floats little-endian)::

    b"FSDS1"                       magic, includes the format version
    uint32   meta_len
    bytes    meta (UTF-8 JSON: system, descriptor)
    float64  delta
    uint64   dim, n_sequences, r_out
    int64    seed
    float64  payload[n_sequences, r_out + 1, dim]   (C order)
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .parallel import map_ordered
from .systems.ode import LORENZ, IntegratorConfig, StiffnessError, integrate
from .systems.pde import iter_pde

__all__ = [
    "BoxSampler",
    "DatasetFormatError",
    "ObservationDataset",
    "generate_lorenz_chunks",
    "generate_ode_dataset",
    "generate_pde_dataset",
    "load_dataset",
    "save_dataset",
]

MAGIC = b"FSDS1"
_FIXED = struct.Struct("<dQQQq")


class DatasetFormatError(ValueError):
    """File is not a dataset, has the wrong version, or is truncated."""


@dataclass(eq=False)
class ObservationDataset:
    """``data[m, r]`` is sequence ``m`` observed at time ``r * delta``."""

    data: np.ndarray
    delta: float
    system: str = ""
    seed: int = 0
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[1] < 2:
            raise ValueError(f"dataset must have shape (M, r_out + 1, d), got {self.data.shape}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def n_sequences(self) -> int:
        return self.data.shape[0]

    @property
    def r_out(self) -> int:
        return self.data.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return self.n_sequences

    def summary(self) -> dict:
        return {
            "system": self.system,
            "n_sequences": self.n_sequences,
            "r_out": self.r_out,
            "dim": self.dim,
            "delta": self.delta,
            "seed": self.seed,
        }

    def to_csv(self, path) -> None:
        """Long format ``sequence,r,t,x1..xd`` for inspection."""
        m, r, d = self.data.shape
        seq = np.repeat(np.arange(m), r)
        step = np.tile(np.arange(r), m)
        table = np.column_stack([seq, step, step * self.delta, self.data.reshape(m * r, d)])
        header = "sequence,r,t," + ",".join(f"x{i + 1}" for i in range(d))
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")


def save_dataset(ds: ObservationDataset, path) -> None:
    meta = json.dumps(
        {"system": ds.system, "descriptor": ds.descriptor}, sort_keys=True, separators=(",", ":")
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(_FIXED.pack(ds.delta, ds.dim, ds.n_sequences, ds.r_out, ds.seed))
        fh.write(ds.data.astype("<f8", copy=False).tobytes())


def load_dataset(path) -> ObservationDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError(f"{path}: not an FSDS1 dataset file")
    pos = len(MAGIC)
    try:
        (meta_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        meta_bytes = raw[pos : pos + meta_len]
        if len(meta_bytes) != meta_len:
            raise struct.error("metadata truncated")
        meta = json.loads(meta_bytes)
        pos += meta_len
        delta, dim, n_seq, r_out, seed = _FIXED.unpack_from(raw, pos)
        pos += _FIXED.size
    except (struct.error, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path}: truncated or corrupt header ({exc})") from None
    expected = n_seq * (r_out + 1) * dim * 8
    if len(raw) - pos != expected:
        raise DatasetFormatError(
            f"{path}: payload has {len(raw) - pos} bytes, header promises {expected}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=pos).reshape(n_seq, r_out + 1, dim)
    return ObservationDataset(
        data.astype(np.float64), delta, meta.get("system", ""), seed, meta.get("descriptor", {})
    )


@dataclass(frozen=True)
class BoxSampler:
    """Uniform initial conditions on an axis-aligned box."""

    low: tuple
    high: tuple

    def __call__(self, rng, size: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(size, len(self.low)))

    def describe(self) -> dict:
        return {"sampler": "box", "low": list(self.low), "high": list(self.high)}


def _ode_chunk(system, t_end, delta, integrator, job):
    lo, x0 = job
    try:
        return integrate(system, x0, t_end, delta, integrator).states
    except StiffnessError as exc:
        raise StiffnessError(f"{exc}; chunk starts at initial condition {lo}") from None


def generate_ode_dataset(system, ic_sampler, n_sequences: int, delta: float, r_out: int,
                         seed: int = 0, integrator: IntegratorConfig | None = None,
                         workers: int = 1, chunk: int = 1000):
    """Integrate ``n_sequences`` sampled initial conditions over ``r_out`` observation steps.

    Initial conditions are integrated in fixed chunks, so the result does not
    depend on ``workers``.
    """
    if n_sequences < 1:
        raise ValueError("need at least one sequence")
    rng = np.random.default_rng(seed)
    x0 = np.asarray(ic_sampler(rng, n_sequences), dtype=np.float64)
    jobs = [(lo, x0[lo : lo + chunk]) for lo in range(0, n_sequences, chunk)]
    work = partial(_ode_chunk, system, r_out * delta, delta, integrator)
    parts = map_ordered(work, jobs, workers)
    states = np.concatenate(parts, axis=1)
    descriptor = ic_sampler.describe() if hasattr(ic_sampler, "describe") else {}
    return ObservationDataset(np.swapaxes(states, 0, 1), delta, system.name, seed, descriptor)


def generate_lorenz_chunks(delta: float, t_total: float, n_chunks: int, r_out: int = 1,
                           seed: int = 0, x0=(1.0, 1.0, 1.0), system=None,
                           integrator: IntegratorConfig | None = None):
    """Windows of ``r_out + 1`` observations drawn from one long trajectory.

    Window start indices are uniform on ``0 .. t_total/delta - r_out``.
    """
    system = system or LORENZ
    if (r_out + 1) * delta > t_total:
        raise ValueError(f"t_total={t_total} too short for windows of {r_out + 1} observations")
    traj = integrate(system, np.asarray(x0, dtype=np.float64), t_total, delta, integrator)
    last_start = len(traj.t) - 1 - r_out
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, last_start, size=n_chunks, endpoint=True)
    windows = traj.states[starts[:, None] + np.arange(r_out + 1)[None, :]]
    descriptor = {"sampler": "chunks", "x0": list(map(float, x0)), "t_total": t_total,
                  "starts": starts.tolist()}
    return ObservationDataset(windows, delta, system.name, seed, descriptor)


def _pde_chunk(rhs, delta, r_out, max_substep, job):
    ics, starts = job
    out = np.empty((len(ics), r_out + 1, ics.shape[1]))
    rows = np.arange(len(ics))
    horizon = int(starts.max()) + r_out
    for k, u in iter_pde(rhs, ics, horizon * delta, delta, max_substep):
        slot = k - starts
        hit = (slot >= 0) & (slot <= r_out)
        out[rows[hit], slot[hit]] = u[hit]
    return out


def generate_pde_dataset(rhs, ic_sampler, n_sequences: int, delta: float, r_out: int,
                         t_total: float, max_substep: float, seed: int = 0, name: str = "",
                         chunk: int = 1000, descriptor: dict | None = None, workers: int = 1):
    """One window per initial condition at a random aligned offset.

    Window starts are uniform on ``0 .. t_total/delta - r_out``; each
    trajectory is integrated only as far as its window needs. Initial
    conditions are processed in fixed chunks so the result depends neither
    on memory settings nor on ``workers``.
    """
    n_steps = int(round(t_total / delta))
    if r_out > n_steps:
        raise ValueError("t_total too short for the requested window")
    rng = np.random.default_rng(seed)
    ics = np.asarray(ic_sampler(rng, n_sequences), dtype=np.float64)
    starts = rng.integers(0, n_steps - r_out, size=n_sequences, endpoint=True)
    jobs = [(ics[lo : lo + chunk], starts[lo : lo + chunk]) for lo in range(0, n_sequences, chunk)]
    parts = map_ordered(partial(_pde_chunk, rhs, delta, r_out, max_substep), jobs, workers)
    meta = dict(descriptor or {})
    meta["starts"] = starts.tolist()
    return ObservationDataset(np.concatenate(parts), delta, name, seed, meta)
