import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fineflow.systems.pde import (
    Grid1D,
    Grid2D,
    StabilityError,
    advdiff_max_substep,
    advdiff_rhs,
    fhn_demo_ic,
    fhn_ic_from_breakpoints,
    fhn_max_substep,
    fhn_rest_state,
    fhn_rhs,
    fourier_field_2d,
    gaussian_ic_2d,
    integrate_pde,
    iter_pde,
    periodic_laplacian,
    sample_fhn_ic,
    sample_fourier_ic_2d,
)

GRID1 = Grid1D()
GRID2 = Grid2D()


def test_periodic_laplacian_of_fourier_mode():
    x = GRID1.x
    k = 2 * np.pi * 3 / GRID1.length
    lap = periodic_laplacian(np.sin(k * x), GRID1.h)
    # exact symbol of the three-point stencil
    symbol = -4 * np.sin(k * GRID1.h / 2) ** 2 / GRID1.h**2
    assert np.allclose(lap, symbol * np.sin(k * x), atol=1e-12)


def test_fhn_rest_state_is_equilibrium():
    v, w = fhn_rest_state()
    field = np.concatenate([np.full(50, v), np.full(50, w)])
    assert np.max(np.abs(fhn_rhs(field))) < 1e-12


def test_fhn_layout_and_reaction_terms():
    v = np.linspace(-1, 1, 50)
    w = np.full(50, 0.2)
    out = fhn_rhs(np.concatenate([v, w]), D=0.0)
    assert np.allclose(out[:50], v - v**3 / 3 - w)
    assert np.allclose(out[50:], 0.08 * (v + 0.7 - 0.8 * w))


def test_fhn_diffusion_acts_on_v_only():
    state = np.concatenate([np.zeros(50), np.sin(2 * np.pi * GRID1.x / 5)])
    diff = fhn_rhs(state, D=0.01) - fhn_rhs(state, D=0.0)
    assert np.array_equal(diff, np.zeros(100))


def test_advdiff_zero_field_stays_zero():
    assert not np.any(integrate_pde(advdiff_rhs, np.zeros(GRID2.n), 0.05, 0.01,
                                    advdiff_max_substep()))


def test_advdiff_boundary_pinned():
    u = sample_fourier_ic_2d(np.random.default_rng(0), GRID2)
    traj = integrate_pde(advdiff_rhs, u, 0.1, 0.01, advdiff_max_substep())
    assert not np.any(traj[:, GRID2.boundary_mask()])


def test_diffusion_of_lowest_mode_decays_at_discrete_rate():
    coeffs = np.zeros((1, 1))
    coeffs[0, 0] = 1.0
    u0 = fourier_field_2d(coeffs, GRID2)
    rhs = advdiff_rhs(u0, GRID2, kappa=1.0, advect=False)
    inner = ~GRID2.boundary_mask()
    h = GRID2.hx
    rate = 2 * (-4 * np.sin(np.pi * h / 4) ** 2 / h**2)
    assert np.allclose(rhs[inner], rate * u0[inner], atol=1e-10)


def test_advection_of_radial_field_vanishes():
    # alpha = (y, -x) is tangent to circles, so a radial profile is invariant
    X, Y = GRID2.mesh()
    u = np.exp(-4 * (X**2 + Y**2)).ravel()
    u[GRID2.boundary_mask()] = 0.0
    rhs = advdiff_rhs(u, GRID2, kappa=0.0)
    inner = ~GRID2.boundary_mask()
    # central differences of a smooth field are second-order accurate
    assert np.max(np.abs(rhs[inner])) < 0.1 * np.max(np.abs(u))


def test_fourier_field_boundary_is_exactly_zero():
    field = sample_fourier_ic_2d(np.random.default_rng(4), GRID2, size=3)
    assert field.shape == (3, 256)
    assert not np.any(field[:, GRID2.boundary_mask()])


def test_gaussian_ic_peak_location():
    u = gaussian_ic_2d(GRID2).reshape(16, 16)
    X, Y = GRID2.mesh()
    i, j = np.unravel_index(np.argmax(u), u.shape)
    assert abs(X[i, j] - 0.2) <= GRID2.hx and abs(Y[i, j] - 0.2) <= GRID2.hy


@given(seed=st.integers(0, 10_000))
def test_fhn_sampler_ranges(seed):
    rng = np.random.default_rng(seed)
    field = sample_fhn_ic(rng, GRID1)
    v, w = field[:50], field[50:]
    assert np.all(((v >= 0.9) & (v <= 1.1)) | ((v >= -1.2) & (v <= -1.0)))
    assert np.all(((w >= -0.1) & (w <= 0.1)) | ((w >= -0.6) & (w <= -0.4)))


def test_fhn_breakpoints_define_regions():
    field = fhn_ic_from_breakpoints(1.0, 2.0, np.random.default_rng(0), GRID1)
    x = GRID1.x
    v = field[:50]
    assert np.all(v[(x >= 1.0) & (x <= 2.0)] >= 0.9)
    assert np.all(v[(x < 1.0) | (x > 2.0)] <= -1.0)


def test_fhn_demo_pulse_stays_bounded():
    traj = integrate_pde(fhn_rhs, fhn_demo_ic(), 12.5, 0.25, fhn_max_substep())
    assert 0.5 < np.max(traj[-1, :50]) < 2.5
    assert np.all(np.isfinite(traj))


def test_substep_refinement_converges():
    u0 = fhn_demo_ic()
    coarse = integrate_pde(fhn_rhs, u0, 1.0, 0.25, fhn_max_substep())[-1]
    fine = integrate_pde(fhn_rhs, u0, 1.0, 0.25, fhn_max_substep() / 2)[-1]
    assert np.max(np.abs(coarse - fine)) < 1e-6


def test_unstable_substep_raises_with_suggestion():
    u0 = sample_fourier_ic_2d(np.random.default_rng(0), GRID2)
    with pytest.raises(StabilityError) as info:
        integrate_pde(lambda u: advdiff_rhs(u, GRID2, kappa=5.0), u0, 1.0, 0.5, 0.5)
    assert info.value.suggested_substep < 0.5


def test_iter_pde_yields_every_output_step():
    ks = [k for k, _ in iter_pde(fhn_rhs, fhn_demo_ic(), 1.0, 0.25, fhn_max_substep())]
    assert ks == [0, 1, 2, 3, 4]


def test_batch_rows_integrate_independently():
    rng = np.random.default_rng(2)
    u0 = sample_fourier_ic_2d(rng, GRID2, size=3)
    batch = integrate_pde(advdiff_rhs, u0, 0.02, 0.01, advdiff_max_substep())
    single = integrate_pde(advdiff_rhs, u0[1], 0.02, 0.01, advdiff_max_substep())
    assert np.allclose(batch[:, 1], single, atol=1e-15)
