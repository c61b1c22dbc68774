import numpy as np
import pytest

from wkgsim.errors import ConfigurationError, NumericError
from wkgsim.evolver import HistorySource, evolve, rhs, solve_linear_wave, time_steps
from wkgsim.frame_geometry import CoefficientSet
from wkgsim.grid_fields import FieldState, RadialGrid, make_initial_data

from conftest import damped_coeffs, free_coeffs


def test_time_steps_hit_final_time():
    dt, m, n = time_steps(2.0, 5.0, 0.01, 0.4, 0.02)
    assert np.isclose(dt * m * n, 3.0)
    assert dt <= 0.4 * 0.01 + 1e-15


def test_cfl_violation_is_configuration_error():
    g = RadialGrid.from_spacing(0.05, 10.0)
    with pytest.raises(ConfigurationError):
        evolve(make_initial_data(g, 0.01), g, free_coeffs(), 3.0, cfl=1.2)


def test_zero_data_stays_zero():
    g = RadialGrid.from_spacing(0.05, 10.0)
    h = evolve(FieldState.zeros(g), g, damped_coeffs(), 4.0, store_dt=0.1)
    assert np.all(h.data == 0.0)


def test_free_wave_matches_exact_spherical_solution():
    # u = (F(t - r) - F(t + r)) / r is an exact free wave for any profile F
    F = lambda x: np.exp(-4.0 * (x - 3.0) ** 2)
    dF = lambda x: -8.0 * (x - 3.0) * F(x)
    d2F = lambda x: (-8.0 + 64.0 * (x - 3.0) ** 2) * F(x)
    errs = []
    for dr in (0.04, 0.02):
        g = RadialGrid.from_spacing(dr, 20.0)
        r = g.r
        rs = np.where(r > 0, r, 1.0)
        u0 = np.where(r > 0, (F(2 - r) - F(2 + r)) / rs, -2 * dF(2.0))
        p0 = np.where(r > 0, (dF(2 - r) - dF(2 + r)) / rs, -2 * d2F(2.0))
        st = FieldState(2.0, u0, p0, np.zeros(g.n), np.zeros(g.n))
        h = evolve(st, g, free_coeffs(), 6.0, store_dt=0.5)
        t = h.t_last
        exact = np.where(r > 0, (F(t - r) - F(t + r)) / rs, -2 * dF(t))
        errs.append(np.max(np.abs(h.field("u")[-1] - exact)) / np.max(np.abs(exact)))
    assert errs[1] < 1e-2
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_kg_energy_nearly_constant_on_flat_slices():
    g = RadialGrid.from_spacing(0.02, 20.0)
    h = evolve(make_initial_data(g, 0.01, "bump"), g, free_coeffs(), 10.0, store_dt=0.5)
    r = g.r
    vr = lambda v: np.gradient(v, g.dr)
    E = [np.trapezoid((q * q + vr(v) ** 2 + v * v) * r * r, r)
         for v, q in zip(h.field("v"), h.field("q"))]
    assert np.ptp(E) / E[0] < 1e-2


def test_rhs_source_terms():
    g = RadialGrid.from_spacing(0.05, 10.0)
    st = make_initial_data(g, 0.1, "polynomial")
    st.q = 0.3 * st.v
    co = CoefficientSet(B=2.0, c=1.5, p0=1.0)
    d = rhs(st, co, grid=g)
    # u equation source B v^2 at the centre, where the Laplacian of u and v are equal
    lap = d.p[0] - 2.0 * st.v[0] ** 2
    assert np.isclose(d.q[0], lap - 1.5 ** 2 * st.v[0] + st.u[0] * st.q[0])


def test_blowup_reported():
    g = RadialGrid.from_spacing(0.05, 12.0)
    st = make_initial_data(g, 40.0, "polynomial")
    with pytest.raises(NumericError):
        evolve(st, g, CoefficientSet(B=5.0, c=1.0), 9.0, store_dt=0.1)
    h = evolve(st, g, CoefficientSet(B=5.0, c=1.0), 9.0, store_dt=0.1, on_error="stop")
    assert h.meta["blowup_t"] < 9.0


def test_history_source_reproduces_run(small_damped_run):
    src = HistorySource(small_damped_run, lambda fl: fl["v"] ** 2)
    t = small_damped_run.times[40]
    assert np.allclose(src(t, small_damped_run.grid.r), small_damped_run.field("v")[40] ** 2)


def test_linear_wave_with_zero_source_is_free():
    g = RadialGrid.from_spacing(0.05, 10.0)
    st = make_initial_data(g, 0.01, "bump")
    a = solve_linear_wave(None, st, g, 5.0, store_dt=0.1)
    b = evolve(st, g, free_coeffs(), 5.0, store_dt=0.1)
    assert np.allclose(a.field("phi"), b.field("u"), atol=1e-14)
