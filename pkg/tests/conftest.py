import numpy as np
import pytest

from wkgsim.evolver import evolve
from wkgsim.frame_geometry import CoefficientSet
from wkgsim.grid_fields import History, RadialGrid, make_initial_data
from wkgsim.ray_ode import char_roots

# one line per acceptance item, printed in the terminal summary
ACCEPTANCE = {}


def free_coeffs(c=1.0):
    return CoefficientSet(A00=0.0, A0r=0.0, Arr=0.0, B=0.0, c=c, p0=0.0)


def damped_coeffs():
    return CoefficientSet(A00=0.0, A0r=0.0, Arr=0.0, B=-1.0, c=1.0)


@pytest.fixture(scope="session")
def small_free_run():
    """Free evolution of bump data on a coarse grid, t in [2, 9]."""
    g = RadialGrid.from_spacing(1.0 / 50.0, 12.0)
    return evolve(make_initial_data(g, 0.01, "bump"), g, free_coeffs(), 9.0, store_dt=0.02)


@pytest.fixture(scope="session")
def small_damped_run():
    g = RadialGrid.from_spacing(1.0 / 50.0, 12.0)
    return evolve(make_initial_data(g, 0.01, "polynomial"), g, damped_coeffs(), 9.0,
                  store_dt=0.02)


def spherical_wave_history(dr=0.01, dt=0.01, t1=10.0, r_max=14.0):
    """Exact free wave u = (F(t - r) - F(t + r)) / r, F a polynomial bump centred at 2."""
    def F(x, d=0):
        y = x - 2.0
        a = np.abs(y) < 1
        ys = np.where(a, y, 0.0)
        if d == 0:
            return np.where(a, (1 - ys ** 2) ** 10, 0.0)
        if d == 1:
            return np.where(a, -20 * ys * (1 - ys ** 2) ** 9, 0.0)
        return np.where(a, -20 * (1 - ys ** 2) ** 9 + 360 * ys ** 2 * (1 - ys ** 2) ** 8, 0.0)

    g = RadialGrid.from_spacing(dr, r_max)
    r = g.r
    rs = np.where(r > 0, r, 1.0)
    h = History(g, ("u", "p"), t0=2.0, dt=dt, capacity=int(round((t1 - 2) / dt)) + 2)
    for k in range(int(round((t1 - 2.0) / dt)) + 1):
        t = 2.0 + k * dt
        u = np.where(r > 0, (F(t - r) - F(t + r)) / rs, -2.0 * F(t, 1))
        p = np.where(r > 0, (F(t - r, 1) - F(t + r, 1)) / rs, -2.0 * F(t, 2))
        h.append([u, p], t)
    return h


def ode_closed_form(D, c, f0, w0, w0p, lam0, lam):
    """w'' - D w' + c^2 w = f0 with constant D and f0."""
    pp, pm = char_roots(D, c)
    wp = f0 / c ** 2
    a = (w0p - pm * (w0 - wp)) / (pp - pm)
    b = (w0 - wp) - a
    x = lam - lam0
    w = a * np.exp(pp * x) + b * np.exp(pm * x) + wp
    dw = a * pp * np.exp(pp * x) + b * pm * np.exp(pm * x)
    return w.real, dw.real


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
