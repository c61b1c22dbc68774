import numpy as np
import pytest

from wkgsim.errors import ArgumentError, CapabilityError, PreconditionError, RangeError
from wkgsim.evolver import evolve
from wkgsim.frame_geometry import CoefficientSet
from wkgsim.grid_fields import RadialGrid, make_initial_data
from wkgsim.wave_decomp import (decay_rates, decompose, kappa, linear_decay_probe, probe_source,
                                raw_sign_max, sign_certificate)

from conftest import damped_coeffs


def _run(dr, coeffs, t_final=7.0, eps=0.05):
    g = RadialGrid.from_spacing(dr, t_final + 3.0)
    return evolve(make_initial_data(g, eps, "polynomial"), g, coeffs, t_final, store_dt=0.05)


@pytest.fixture(scope="module")
def decs():
    return {dr: decompose(_run(dr, damped_coeffs()), damped_coeffs()) for dr in (1 / 25, 1 / 50)}


def test_kappa():
    assert kappa(CoefficientSet(B=-1.0, c=2.0)) == -0.125


def test_recombination_converges(decs):
    r1, r2 = decs[1 / 25].residual_sup(), decs[1 / 50].residual_sup()
    assert r2 < 1e-5
    assert np.log2(r1 / r2) >= 1.8


def test_sign_certificate_on_damped_benchmark(decs):
    cert = sign_certificate(decs[1 / 50])
    assert cert["holds"]
    assert cert["max"] <= cert["tol"]


def test_sign_certificate_rejects_violating_coefficients():
    co = CoefficientSet(B=1.0, c=1.0)
    dec = decompose(_run(1 / 25, co, 5.0), co)
    with pytest.raises(PreconditionError):
        sign_certificate(dec)
    # without the precondition the bad part takes positive values
    assert raw_sign_max(dec)["max"] > 0


def test_decay_rates_need_enough_slices(decs):
    with pytest.raises(RangeError):
        decay_rates(decs[1 / 50], s_values=[4.0, 4.5])
    out = decay_rates(decs[1 / 50], s_values=np.arange(4.0, 7.0, 0.25), min_slices=5)
    assert set(out) >= {"u_L", "u_g"}


def test_decomposition_guards():
    with pytest.raises(CapabilityError):
        decompose(_run(1 / 25, damped_coeffs(), 4.0), CoefficientSet(B=-1.0, Q=0.5))


def test_probe_source_support():
    f = probe_source(0.25, 0.25, 1.0)
    r = np.linspace(0, 10, 101)
    vals = f(8.0, r)
    assert np.all(vals[r >= 7.0] == 0.0)
    assert np.all(vals[r < 5.0] > 0.0)
    with pytest.raises(ArgumentError):
        linear_decay_probe(0.0, 0.25)


def test_probe_short_run_shapes():
    out = linear_decay_probe(0.25, -0.25, grid=RadialGrid.from_spacing(0.05, 11.0), t_final=8.0)
    assert out["sup"].shape == out["t"].shape
    assert np.isfinite(out["slope"])


def test_probe_axis_value_matches_kirchhoff_integral():
    # u(t, 0) = int_0^{t-2} rho f(t - rho, rho) d rho for zero data at t = 2
    from scipy.integrate import quad
    out = linear_decay_probe(0.25, 0.25, grid=RadialGrid.from_spacing(0.02, 13.0), t_final=10.0)
    f = probe_source(0.25, 0.25, 1.0)
    t = 10.0
    exact = quad(lambda rho: rho * float(f(t - rho, np.array(rho))), 0, t - 2, limit=400,
                 points=[(t - 1) / 2, (t - 2) / 2])[0]
    assert abs(out["sup"][-1] / t - exact) < 1e-4 * exact
