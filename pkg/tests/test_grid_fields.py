import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wkgsim.errors import ArgumentError, RangeError
from wkgsim.grid_fields import (History, RadialGrid, bump, make_initial_data, polynomial_bump)

# 4 pi int_0^1 exp(1 - 1/(1 - r^2)) r^2 dr, adaptive quadrature
BUMP_MASS = 1.199003907019214


def test_bump_values_and_mass():
    assert bump(0.0) == 1.0
    assert np.all(bump(np.array([1.0, 1.5, -2.0])) == 0.0)
    r = np.linspace(0.0, 1.0, 20001)
    mass = np.trapezoid(bump(r) * 4 * np.pi * r * r, r)
    assert abs(mass - BUMP_MASS) < 1e-7


def test_initial_data_layout():
    g = RadialGrid.from_spacing(0.01, 5.0)
    st0 = make_initial_data(g, 0.02, "polynomial")
    assert st0.t == 2.0
    assert np.allclose(st0.u, 0.02 * polynomial_bump(g.r))
    assert np.all(st0.p == 0) and np.all(st0.q == 0)
    with pytest.raises(ArgumentError):
        make_initial_data(g, 0.01, "square")


def _sincos_history(dr, dt, t0=2.0, t1=3.0, r_max=2.0):
    g = RadialGrid.from_spacing(dr, r_max)
    h = History(g, ("u", "p"), t0=t0, dt=dt, capacity=int(round((t1 - t0) / dt)) + 2)
    for k in range(int(round((t1 - t0) / dt)) + 1):
        t = t0 + k * dt
        h.append([np.sin(t) * np.cos(g.r), np.cos(t) * np.cos(g.r)], t)
    return h


def test_interpolation_closed_form_point():
    h = _sincos_history(0.01, 0.01)
    t, r = 2.37, 0.41
    assert abs(h.interp(t, r, "u") - np.sin(t) * np.cos(r)) < 1e-6
    assert abs(h.interp(t, r, "u", 1, 1) + np.cos(t) * np.sin(r)) < 1e-6
    assert abs(h.interp(t, r, "u", 0, 2) + np.sin(t) * np.cos(r)) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.floats(2.2, 2.8), st.floats(0.0, 1.5))
def test_interpolation_accuracy_anywhere(t, r):
    h = _sincos_history(0.02, 0.02)
    assert abs(h.interp(t, r, "u") - np.sin(t) * np.cos(r)) < 1e-9
    assert abs(h.interp(t, r, "u", 2, 0) + np.sin(t) * np.cos(r)) < 1e-6


def test_interpolation_converges():
    errs = []
    for d in (0.1, 0.05):
        h = _sincos_history(d, d)
        errs.append(abs(h.interp(2.537, 0.713, "u", 0, 2) + np.sin(2.537) * np.cos(0.713)))
    assert errs[0] / errs[1] > 2 ** 3.5


def test_history_ranges_and_roundtrip(tmp_path):
    h = _sincos_history(0.05, 0.05)
    with pytest.raises(RangeError):
        h.interp(3.5, 0.2, "u")
    with pytest.raises(RangeError):
        h.interp(2.5, 2.5, "u")
    with pytest.raises(ArgumentError):
        h.append([np.zeros(3), np.zeros(3)])
    for fmt in ("binary", "csv"):
        path = tmp_path / f"h.{fmt}"
        h.save(path, fmt=fmt)
        h2 = History.load(path)
        assert np.array_equal(h2.data, h.data)
        assert h2.t_first == h.t_first and h2.dt == h.dt


def test_free_support_stays_inside_cone(small_free_run):
    h = small_free_run
    r = h.grid.r
    for k in range(0, len(h), 25):
        outside = r >= h.times[k] + 1.0 - 1e-12
        assert np.max(np.abs(h.field("u")[k][outside]), initial=0.0) < 1e-10
