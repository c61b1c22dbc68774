"""Method-of-lines RK4 for the coupled radial wave / Klein-Gordon system.

Space: second-order centered differences for d_rr + (2/r) d_r, with the
regular limit 3 d_rr at the axis (even ghost point).  Time: classical RK4.
The outer boundary carries homogeneous Dirichlet data; the grid is chosen
large enough that it is never reached by the solution.
"""
from __future__ import annotations

import logging
from math import ceil

import numpy as np

from .errors import ArgumentError, ConfigurationError, NumericError, RangeError
from .frame_geometry import CoefficientSet
from .grid_fields import FieldState, History, RadialGrid, lagrange_weights

log = logging.getLogger(__name__)

MODES = ("coupled", "wave-only", "kg-only", "linear-with-source")
DEFAULT_CFL = 0.4
H00_LIMIT = 0.5


class _Ops:
    """Precomputed stencil factors for one grid."""

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        dr = grid.dr
        self.idr2 = 1.0 / dr ** 2
        self.i2dr = 0.5 / dr
        r = grid.r
        self.inv_rdr = np.zeros(grid.n)
        self.inv_rdr[1:] = 1.0 / (r[1:] * dr)

    def lap(self, f, out):
        # f_rr + (2/r) f_r
        out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) * self.idr2 \
            + (f[2:] - f[:-2]) * self.inv_rdr[1:-1]
        out[0] = 6.0 * (f[1] - f[0]) * self.idr2
        out[-1] = 0.0
        return out

    def d_r(self, f):
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - f[:-2]) * self.i2dr
        out[0] = 0.0
        out[-1] = (f[-1] - f[-2]) * 2.0 * self.i2dr
        return out


_OPS_CACHE: dict = {}


def _ops(grid: RadialGrid) -> _Ops:
    key = (grid.r_max, grid.n)
    if key not in _OPS_CACHE:
        _OPS_CACHE.clear()
        _OPS_CACHE[key] = _Ops(grid)
    return _OPS_CACHE[key]


def wave_source(coeffs: CoefficientSet, v, q, v_r):
    """Right side of the wave equation: A(dv, dv) + B v^2 in radial form."""
    return (coeffs.A00 * q * q + 2.0 * coeffs.A0r * q * v_r
            + coeffs.Arr * v_r * v_r + coeffs.B * v * v)


def _check_finite(arr, t, grid, names=("u", "p", "v", "q")):
    if not np.isfinite(arr).all():
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NumericError(f"non-finite {names[bad[0]]} at t={t:.6g}, "
                           f"r={bad[1] * grid.dr:.6g} (index {bad[1]})")


def rhs_arrays(y, t, coeffs: CoefficientSet, mode: str, grid: RadialGrid, source=None):
    """Time derivative of the stacked state y = (u, p, v, q).

    In ``linear-with-source`` mode only (u, p) are used and ``source(t, r)``
    gives the right side of the wave equation for u.
    """
    ops = _ops(grid)
    u, p, v, q = y
    dy = np.zeros_like(y)
    if mode == "coupled":
        dy[0] = p
        ops.lap(u, dy[1])
        dy[1] += wave_source(coeffs, v, q, ops.d_r(v))
        dy[2] = q
        ops.lap(v, dy[3])
        dy[3] -= coeffs.c ** 2 * v
        kg = coeffs.p0 * u * q
        if coeffs.Q != 0.0:
            kg = kg + coeffs.Q * u * v
        if coeffs.h00 != 0.0:
            hu = coeffs.h00 * u
            if np.max(np.abs(hu)) > H00_LIMIT:
                i = int(np.argmax(np.abs(hu)))
                raise NumericError(f"|h00*u| = {abs(hu[i]):.3g} > {H00_LIMIT} at t={t:.6g}, "
                                   f"r={i * grid.dr:.6g}: principal part degenerates")
            dy[3] = (dy[3] + kg) / (1.0 - hu)
        else:
            dy[3] += kg
    elif mode == "wave-only":
        dy[0] = p
        ops.lap(u, dy[1])
    elif mode == "kg-only":
        dy[2] = q
        ops.lap(v, dy[3])
        dy[3] -= coeffs.c ** 2 * v
    elif mode == "linear-with-source":
        dy[0] = p
        ops.lap(u, dy[1])
        if source is not None:
            dy[1] += source(t, grid.r)
    else:
        raise ArgumentError(f"unknown mode {mode!r}; choose from {MODES}")
    dy[:, -1] = 0.0
    return dy


def rhs(state: FieldState, coeffs: CoefficientSet, mode: str = "coupled", grid: RadialGrid = None,
        source=None) -> FieldState:
    """FieldState-valued wrapper around :func:`rhs_arrays`."""
    if grid is None:
        raise ArgumentError("rhs needs the grid")
    y = state.stack()
    _check_finite(y, state.t, grid)
    return FieldState.from_stack(state.t, rhs_arrays(y, state.t, coeffs, mode, grid, source))


def _rk4(y, t, dt, f):
    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[:, -1] = 0.0
    return out


def _check_cfl(dt, grid, cfl):
    if dt > cfl * grid.dr * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt:.6g} exceeds CFL limit {cfl}*dr={cfl * grid.dr:.6g}")


def step_rk4(state: FieldState, dt: float, coeffs: CoefficientSet, mode: str = "coupled",
             grid: RadialGrid = None, cfl: float = DEFAULT_CFL, source=None) -> FieldState:
    """One classical RK4 step."""
    if grid is None:
        raise ArgumentError("step_rk4 needs the grid")
    _check_cfl(dt, grid, cfl)
    y = state.stack()
    y[:, -1] = 0.0
    out = _rk4(y, state.t, dt, lambda yy, tt: rhs_arrays(yy, tt, coeffs, mode, grid, source))
    _check_finite(out, state.t + dt, grid)
    return FieldState.from_stack(state.t + dt, out)


def time_steps(t0: float, t_final: float, dr: float, cfl: float = DEFAULT_CFL,
               store_dt: float = 0.01):
    """Step size, steps per stored state and number of stored intervals.

    The stored spacing is adjusted so that t_final is hit exactly and the
    step size is at most cfl*dr.
    """
    if not t_final > t0:
        raise ConfigurationError(f"t_final={t_final} must exceed the initial time {t0}")
    n_store = max(1, int(ceil((t_final - t0) / store_dt - 1e-9)))
    store_eff = (t_final - t0) / n_store
    m = max(1, int(ceil(store_eff / (cfl * dr) - 1e-9)))
    return store_eff / m, m, n_store


def evolve(state0: FieldState, grid: RadialGrid, coeffs: CoefficientSet, t_final: float,
           mode: str = "coupled", cfl: float = DEFAULT_CFL, store_dt: float = 0.01,
           retain: str = "full", capacity: int = 256, source=None, callback=None,
           on_error: str = "raise") -> History:
    """Evolve from state0 to t_final and return the stored history.

    ``callback(t, y)`` is called on every stored state (e.g. for on-the-fly
    diagnostics in ring-buffer mode).  With ``on_error="stop"`` a numeric
    failure ends the run early: the states stored so far are returned and
    ``meta["blowup_t"]`` records the time of the failure.
    """
    if on_error not in ("raise", "stop"):
        raise ArgumentError(f"on_error must be 'raise' or 'stop', got {on_error!r}")
    if mode not in MODES:
        raise ArgumentError(f"unknown mode {mode!r}")
    if cfl > 0.8:
        raise ConfigurationError(f"cfl={cfl} is beyond the RK4 stability region")
    dt, m, n_store = time_steps(state0.t, t_final, grid.dr, cfl, store_dt)
    _check_cfl(dt, grid, cfl)
    cap = n_store + 1 if retain == "full" else capacity
    hist = History(grid, ("u", "p", "v", "q"), t0=state0.t, dt=dt * m, mode=retain, capacity=cap)
    y = state0.stack()
    y[:, -1] = 0.0
    _check_finite(y, state0.t, grid)
    hist.append(y)
    if callback:
        callback(state0.t, y)
    f = lambda yy, tt: rhs_arrays(yy, tt, coeffs, mode, grid, source)
    t = state0.t
    hist.meta.update(step=dt, steps_per_store=m, coeffs=coeffs.as_dict(), mode=mode, cfl=cfl)
    for k in range(n_store):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                for j in range(m):
                    y = _rk4(y, t, dt, f)
                    t = state0.t + (k * m + j + 1) * dt
            _check_finite(y, t, grid)
        except NumericError as exc:
            if on_error == "raise":
                raise
            log.warning("run stopped: %s", exc)
            hist.meta.update(blowup_t=t, error=str(exc))
            hist.trim()
            return hist
        hist.append(y)
        if callback:
            callback(t, y)
    return hist


def _rhs_linear(ops: _Ops, y, t, source, r):
    dy = np.empty_like(y)
    dy[0] = y[1]
    ops.lap(y[0], dy[1])
    if source is not None:
        dy[1] += source(t, r)
    dy[:, -1] = 0.0
    return dy


def solve_linear_wave(source, data, grid: RadialGrid, t_final: float, cfl: float = DEFAULT_CFL,
                      store_dt: float = 0.01, t0: float | None = None) -> History:
    """Solve phi_tt - (phi_rr + 2 phi_r / r) = source from given data.

    Parameters
    ----------
    source : callable ``source(t, r) -> array`` or None for the free wave.
        A :class:`HistorySource` samples a stored run at the stage times.
    data : FieldState (its u, p are used) or a pair (phi0, phi1).
    t0 : initial time; defaults to the FieldState time or 2.

    Returns
    -------
    History with fields ("phi", "phi_t").
    """
    if isinstance(data, FieldState):
        t_start = data.t if t0 is None else t0
        y = np.stack([data.u, data.p]).astype(float)
    else:
        t_start = 2.0 if t0 is None else t0
        y = np.stack([np.asarray(data[0], float), np.asarray(data[1], float)])
    if y.shape != (2, grid.n):
        raise ArgumentError("data does not match the grid")
    dt, m, n_store = time_steps(t_start, t_final, grid.dr, cfl, store_dt)
    hist = History(grid, ("phi", "phi_t"), t0=t_start, dt=dt * m, capacity=n_store + 1)
    ops = _ops(grid)
    r = grid.r
    y[:, -1] = 0.0
    _check_finite(y, t_start, grid, ("phi", "phi_t"))
    hist.append(y)
    f = lambda yy, tt: _rhs_linear(ops, yy, tt, source, r)
    t = t_start
    for k in range(n_store):
        for j in range(m):
            y = _rk4(y, t, dt, f)
            t = t_start + (k * m + j + 1) * dt
        _check_finite(y, t, grid, ("phi", "phi_t"))
        hist.append(y)
    hist.meta.update(step=dt, steps_per_store=m)
    return hist


class HistorySource:
    """Source for :func:`solve_linear_wave` computed from a stored run.

    ``fn(fields) -> array`` receives a dict of full radial rows (``u, p, v,
    q`` and ``v_r``) interpolated in time to the requested stage time, plus
    ``t`` and ``r``.
    """

    def __init__(self, history: History, fn, order: int = 6):
        self.history = history
        self.fn = fn
        self.order = order
        self.ops = _ops(history.grid)

    def rows(self, t):
        h = self.history
        K = len(h)
        w = self.order
        x = (t - h.t_first) / h.dt
        if x < -1e-9 or x > K - 1 + 1e-9:
            raise RangeError(f"source time t={t:.6g} outside stored run "
                             f"[{h.t_first:.6g}, {h.t_last:.6g}]")
        k0 = int(min(max(int(np.floor(x)) - w // 2 + 1, 0), K - w))
        wts = lagrange_weights(np.array([x - k0]), w, 0)[0]
        block = np.tensordot(wts, h.data[k0:k0 + w], axes=(0, 0))
        out = {name: block[i] for i, name in enumerate(h.names)}
        if "v" in out:
            out["v_r"] = self.ops.d_r(out["v"])
        out["t"] = t
        out["r"] = h.grid.r
        return out

    def __call__(self, t, r):
        return self.fn(self.rows(t))
