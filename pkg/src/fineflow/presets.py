"""Declarative experiment presets for the six benchmark problems.

A preset bundles the true system (used only for data and references), the
sampling protocol, the network shape and the optimizer settings. Values not
fixed by the benchmark description are marked ``# chosen`` below.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .dataset import BoxSampler, generate_lorenz_chunks, generate_ode_dataset, generate_pde_dataset
from .net import init_mlp
from .pde_net import init_pde_model
from .systems import ode, pde
from .training import TrainConfig

__all__ = ["ExperimentPreset", "PRESETS", "get_preset"]


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    kind: str  # "ode" or "pde"
    system: str
    params: dict
    delta: float
    r_in: int
    r_out: int
    n_sequences: int
    t_total: float
    epochs: int = 10_000
    learning_rate: float = 1e-3
    batch_size: int = 50
    hidden: tuple = (20, 20, 20)
    n_channels: int = 0
    channel_hidden: tuple = ()
    assembly_hidden: tuple = ()
    domain_low: tuple = ()
    domain_high: tuple = ()
    grid: dict = field(default_factory=dict)
    predict_time: float = 0.0
    test_ic: tuple | None = None
    n_test: int = 100
    init_output_scale: float = 1.0

    @property
    def fine_step(self) -> float:
        return self.delta / self.r_in

    @property
    def predict_steps(self) -> int:
        return int(round(self.predict_time / self.fine_step))

    @property
    def dim(self) -> int:
        if self.kind == "ode":
            return ode.SYSTEMS[self.system].dim
        return self._grid().n * (2 if self.system == "fhn" else 1)

    def scaled(self, scale: float) -> "ExperimentPreset":
        """Scale the number of sequences and epochs; everything else is kept."""
        if not 0 < scale <= 1:
            raise ValueError("scale must lie in (0, 1]")
        return dataclasses.replace(
            self,
            n_sequences=max(1, int(round(self.n_sequences * scale))),
            epochs=max(1, int(round(self.epochs * scale))),
        )

    def override(self, **changes) -> "ExperimentPreset":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise KeyError(f"unknown preset field(s): {', '.join(sorted(unknown))}")
        for key in ("hidden", "channel_hidden", "assembly_hidden", "domain_low",
                    "domain_high", "test_ic"):
            if changes.get(key) is not None:
                changes[key] = tuple(changes[key])
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def train_config(self, seed: int = 0, **changes) -> TrainConfig:
        cfg = dict(r_in=self.r_in, r_out=self.r_out, learning_rate=self.learning_rate,
                   epochs=self.epochs, batch_size=self.batch_size, seed=seed)
        cfg.update(changes)
        return TrainConfig(**cfg)

    # -- true system ---------------------------------------------------------

    def _grid(self):
        if self.system == "fhn":
            return pde.Grid1D(**self.grid)
        return pde.Grid2D(**self.grid)

    def ode_system(self) -> ode.OdeSystem:
        base = ode.SYSTEMS[self.system]
        return dataclasses.replace(base, params={**base.params, **self.params})

    def pde_rhs(self):
        if self.system == "fhn":
            return partial(pde.fhn_rhs, grid=self._grid(), **self.params)
        return partial(pde.advdiff_rhs, grid=self._grid(), **self.params)

    def max_substep(self) -> float:
        if self.system == "fhn":
            return pde.fhn_max_substep(self._grid(), self.params.get("D", 0.01))
        return pde.advdiff_max_substep(self._grid(), self.params.get("kappa", 5e-3))

    def sample_ics(self, rng, size: int) -> np.ndarray:
        if self.system == "fhn":
            return pde.sample_fhn_ic(rng, self._grid(), size=size)
        if self.system == "advdiff2d":
            return pde.sample_fourier_ic_2d(rng, self._grid(), size=size)
        if self.system == "lorenz":
            # states on the attractor, past a transient of 10 time units
            states = ode.integrate(self.ode_system(), np.ones(3), 110.0, self.delta).states
            return states[rng.integers(int(round(10.0 / self.delta)), len(states), size)]
        return BoxSampler(self.domain_low, self.domain_high)(rng, size)

    def default_test_ic(self) -> np.ndarray:
        if self.system == "fhn":
            return pde.fhn_demo_ic(self._grid())
        if self.system == "advdiff2d":
            return pde.gaussian_ic_2d(self._grid())
        return np.array(self.test_ic, dtype=np.float64)

    def generate(self, seed: int = 0, n_sequences: int | None = None, r_out: int | None = None,
                 workers: int = 1):
        n = self.n_sequences if n_sequences is None else n_sequences
        r_out = self.r_out if r_out is None else r_out
        if self.system == "lorenz":
            return generate_lorenz_chunks(self.delta, self.t_total, n, r_out, seed,
                                          system=self.ode_system())
        if self.kind == "ode":
            sampler = BoxSampler(self.domain_low, self.domain_high)
            return generate_ode_dataset(self.ode_system(), sampler, n, self.delta, r_out, seed,
                                        workers=workers)
        return generate_pde_dataset(
            self.pde_rhs(), self.sample_ics, n, self.delta, r_out, self.t_total,
            self.max_substep(), seed, self.system, descriptor={"grid": self._grid().describe()},
            workers=workers,
        )

    def reference(self, x0, n_steps: int) -> np.ndarray:
        """True solution sampled every fine step, shape ``(n_steps + 1,) + x0.shape``."""
        x0 = np.asarray(x0, dtype=np.float64)
        t_end = n_steps * self.fine_step
        if self.kind == "ode":
            return ode.integrate(self.ode_system(), x0, t_end, self.fine_step).states
        return pde.integrate_pde(self.pde_rhs(), x0, t_end, self.fine_step, self.max_substep())

    def init_model(self, seed: int = 0):
        rng = np.random.default_rng([seed, 0])
        if self.kind == "ode":
            d = self.dim
            return init_mlp((d, *self.hidden, d), rng, output_scale=self.init_output_scale)
        grid = self._grid()
        return init_pde_model(
            grid.n, 2 if self.system == "fhn" else 1, self.n_channels, self.channel_hidden,
            self.assembly_hidden, rng, grid=grid.describe(),
            output_scale=self.init_output_scale,
        )


PRESETS = {
    "vdp": ExperimentPreset(
        name="vdp", kind="ode", system="vdp", params={},
        delta=2.0, r_in=10, r_out=1, n_sequences=10_000, t_total=20.0,
        hidden=(20, 20, 20), domain_low=(-2.0, -1.5), domain_high=(2.0, 1.5),
        predict_time=200.0, test_ic=(1.0, 0.0),  # chosen
        init_output_scale=0.1,  # chosen: start near the identity map
    ),
    "pendulum": ExperimentPreset(
        name="pendulum", kind="ode", system="pendulum", params={"beta": 9.80665},
        delta=1.0, r_in=10, r_out=1, n_sequences=10_000, t_total=10.0,
        hidden=(20, 20, 20), domain_low=(-math.pi / 2, -math.pi),
        domain_high=(math.pi / 2, math.pi),
        predict_time=10.0, test_ic=(1.0, 0.0),  # chosen
    ),
    "dae": ExperimentPreset(
        name="dae", kind="ode", system="dae",
        params={"C": 1e-9, "L": 1e-6, "U0": 1.0, "G0": -0.1, "Ginf": 0.25},
        delta=5e-8, r_in=10, r_out=1, n_sequences=10_000, t_total=1e-6,
        hidden=(20, 20, 20), domain_low=(-2.0, -0.2), domain_high=(2.0, 0.2),
        predict_time=1e-6, test_ic=(1.0, 0.0),  # chosen
    ),
    "lorenz": ExperimentPreset(
        name="lorenz", kind="ode", system="lorenz", params={},
        delta=0.1, r_in=10, r_out=1, n_sequences=10_000, t_total=10_000.0,
        hidden=(20, 20, 20), predict_time=100.0, test_ic=(10.0, 10.0, 20.0), n_test=1,
    ),
    "fhn": ExperimentPreset(
        name="fhn", kind="pde", system="fhn",
        params={"D": 0.01, "eps": 0.08, "b": 0.7, "c": 0.8},
        delta=0.25, r_in=5, r_out=3, n_sequences=10_000, t_total=50.0,
        n_channels=5, channel_hidden=(100,), assembly_hidden=(5,),
        grid={"n": 50, "length": 5.0}, predict_time=50.0,
    ),
    "advdiff2d": ExperimentPreset(
        name="advdiff2d", kind="pde", system="advdiff2d", params={"kappa": 5e-3},
        delta=0.01, r_in=5, r_out=1, n_sequences=100_000, t_total=0.1,
        n_channels=3, channel_hidden=(256,), assembly_hidden=(3,),
        grid={"nx": 16, "ny": 16, "lo": -1.0, "hi": 1.0}, predict_time=4.0,
    ),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
