"""Splitting of the wave component u = u_L + u_g + u_b.

With kappa = B / (2 c^2):

* u_L solves the free wave equation with data (u0 + kappa v0^2, u1 + 2 kappa v0 v1);
* u_g solves the wave equation with the frame terms that carry at least one
  tangential derivative, plus (B/c^2) p0 u v d_t v, from zero data;
* W_b = u_b + kappa v^2 solves the wave equation with source
  (damping margin) * (d_t v)^2 from zero data, and u_b = W_b - kappa v^2.

In 3+1 dimensions the forward fundamental solution is a positive measure,
so a nonpositive margin forces W_b <= 0 (up to truncation error).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, CapabilityError, PreconditionError, RangeError
from .fits import loglog_slope
from .evolver import DEFAULT_CFL, HistorySource, solve_linear_wave
from .frame_geometry import (CoefficientSet, damping_margin_array, damping_sweep,
                             underline_components)
from .grid_fields import History, RadialGrid, smooth_step
from .slice_diag import extract_slice

log = logging.getLogger(__name__)

SIGN_TOL_FACTOR = 10.0
FIT_S_MIN = 4.0


def kappa(coeffs: CoefficientSet) -> float:
    return coeffs.B / (2.0 * coeffs.c ** 2)


# ---------------------------------------------------------------------------
# sources, as functions of full radial rows (see HistorySource)

def source_bad(coeffs: CoefficientSet):
    """(margin) (d_t v)^2, the source of W_b = u_b + kappa v^2."""
    def fn(x):
        m = damping_margin_array(coeffs, x["t"] + 0.0 * x["r"], x["r"])
        return m * x["q"] * x["q"]
    return fn


def source_good(coeffs: CoefficientSet):
    """Frame terms with a tangential derivative plus (B/c^2) p0 u v d_t v."""
    bc = coeffs.B / coeffs.c ** 2

    def fn(x):
        t, r, q = x["t"], x["r"], x["q"]
        _, a0r, arr = underline_components(coeffs, t + 0.0 * r, r)
        vbar = (r / t) * q + x["v_r"]
        # the Minkowski form has frame components (s/t)^2, r/t, -1
        return (2.0 * (a0r + bc * r / t) * q * vbar + (arr - bc) * vbar * vbar
                + bc * coeffs.p0 * x["u"] * x["v"] * q)
    return fn


def source_total(coeffs: CoefficientSet):
    """Source of w = (u - u_L) + kappa v^2 written without the frame split."""
    k = kappa(coeffs)

    def fn(x):
        q, vr, v = x["q"], x["v_r"], x["v"]
        wave = coeffs.A00 * q * q + 2.0 * coeffs.A0r * q * vr + coeffs.Arr * vr * vr
        return wave + 2.0 * k * (coeffs.p0 * x["u"] * v * q + q * q - vr * vr)
    return fn


# ---------------------------------------------------------------------------

@dataclass
class Decomposition:
    kappa: float
    u_L: History
    u_g: History
    W_b: History
    run: History
    coeffs: CoefficientSet
    residual: np.ndarray = field(default=None)  # sup_r |u - (u_L + u_g + u_b)| per stored time
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.run.times

    def u_b(self, k: int) -> np.ndarray:
        """u_b on stored row k."""
        v = self.run.field("v")[k]
        return self.W_b.field("phi")[k] - self.kappa * v * v

    def barrier(self, k: int) -> np.ndarray:
        """S = kappa v^2 on stored row k."""
        v = self.run.field("v")[k]
        return self.kappa * v * v

    def residual_sup(self) -> float:
        return float(np.max(self.residual)) if self.residual is not None else np.nan

    def summary_rows(self, s_values, margin_cells: int = 2):
        """Per s: sup|u_L|, sup|u_g|, signed max of W_b, residual (at the slice's top time)."""
        rows = []
        for s in s_values:
            out = [s]
            for h in (self.u_L, self.u_g):
                sl = extract_slice(h, s, ["phi"], margin_cells, truncate=True)
                out.append(float(np.max(np.abs(sl.values["phi"]["f"]))) if sl.r.size else 0.0)
            sl = extract_slice(self.W_b, s, ["phi"], margin_cells, truncate=True)
            out.append(float(np.max(sl.values["phi"]["f"])) if sl.r.size else 0.0)
            k = min(int(round((min(sl.t.max() if sl.r.size else s, self.run.t_last)
                               - self.run.t_first) / self.run.dt)), len(self.run) - 1)
            out.append(float(self.residual[k]))
            rows.append(out)
        return rows

    def write_csv(self, path, s_values):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "sup_u_L", "sup_u_g", "max_u_b_plus_kappa_v2", "residual"])
            for row in self.summary_rows(s_values):
                w.writerow([f"{x:.17g}" for x in row])


def _check_run(run: History, coeffs: CoefficientSet):
    for name in ("u", "p", "v", "q"):
        if not run.has(name):
            raise ArgumentError(f"decomposition needs field {name!r} in the run")
    if coeffs.h00 != 0.0 or coeffs.Q != 0.0:
        raise CapabilityError("decomposition is only set up for the system without h00 and Q")
    if len(run) < 6:
        raise RangeError(f"run has {len(run)} stored states, need at least 6")


def decompose(run: History, coeffs: CoefficientSet, cfl: float = DEFAULT_CFL,
              store_dt: float | None = None) -> Decomposition:
    """Solve the three auxiliary problems against a stored coupled run.

    Sources are sampled from the run at every RK stage (time interpolation
    of stored rows).  The auxiliary histories share the run's stored times.
    """
    _check_run(run, coeffs)
    grid = run.grid
    k = kappa(coeffs)
    t0, t1 = run.t_first, run.t_last
    store_dt = run.dt if store_dt is None else store_dt
    u0, p0, v0, q0 = run.data[0]
    zero = np.zeros(grid.n)

    u_L = solve_linear_wave(None, (u0 + k * v0 * v0, p0 + 2.0 * k * v0 * q0), grid, t1, cfl,
                            store_dt, t0)
    u_g = solve_linear_wave(HistorySource(run, source_good(coeffs)), (zero, zero), grid, t1, cfl,
                            store_dt, t0)
    W_b = solve_linear_wave(HistorySource(run, source_bad(coeffs)), (zero, zero), grid, t1, cfl,
                            store_dt, t0)
    if len(u_L) != len(run):
        raise ArgumentError("auxiliary solves must share the run's stored times")
    u = run.field("u")
    v = run.field("v")
    res = np.max(np.abs(u - (u_L.field("phi") + u_g.field("phi") + W_b.field("phi") - k * v * v)),
                 axis=1)
    dec = Decomposition(kappa=k, u_L=u_L, u_g=u_g, W_b=W_b, run=run, coeffs=coeffs, residual=res)
    dec.meta.update(dr=grid.dr, t0=t0, t1=t1)
    return dec


def cone_mask(times, r, margin: float = 0.0):
    """Stored points with r <= t - 1 - margin."""
    return np.asarray(r)[None, :] <= np.asarray(times)[:, None] - 1.0 - margin


def sign_certificate(dec: Decomposition, tol_factor: float = SIGN_TOL_FACTOR,
                     check_margin: bool = True) -> dict:
    """Largest value of u_b + kappa v^2 over the stored cone.

    The tolerance is ``tol_factor * dr^2 * scale`` with scale the largest
    |source| of the W_b problem over the run.  With ``check_margin`` the
    damping margin is swept over the cone first and a positive value is a
    precondition error.
    """
    run = dec.run
    if check_margin:
        sw = damping_sweep(dec.coeffs, max(run.t_last, 2.5))
        if not sw["holds"]:
            raise PreconditionError(
                f"damping margin {sw['max']:.3g} > 0 at t={sw['t']:.4g}, r={sw['r']:.4g}: "
                "the sign certificate does not apply")
    raw = raw_sign_max(dec)
    grid = run.grid
    q = run.field("q")
    m = damping_margin_array(dec.coeffs, run.times[:, None] + 0.0 * grid.r[None, :],
                             grid.r[None, :])
    mask = cone_mask(run.times, grid.r)
    scale = float(np.max(np.abs(m * q * q)[mask])) if mask.any() else 0.0
    tol = tol_factor * grid.dr ** 2 * scale
    raw.update(tol=tol, scale=scale, holds=bool(raw["max"] <= tol))
    return raw


def raw_sign_max(dec: Decomposition) -> dict:
    """Signed maximum of W_b over the stored cone and where it occurs."""
    W = dec.W_b.field("phi")
    grid = dec.run.grid
    mask = cone_mask(dec.W_b.times, grid.r)
    vals = np.where(mask, W, -np.inf)
    k, i = np.unravel_index(np.argmax(vals), vals.shape)
    mx = float(vals[k, i]) if np.isfinite(vals[k, i]) else 0.0
    return {"max": mx, "t": float(dec.W_b.times[k]), "r": float(grid.r[i]),
            "min": float(np.min(np.where(mask, W, np.inf)))}


# ---------------------------------------------------------------------------
# decay fits

def weighted_sup_table(hist: History, s_values, name: str = "phi", margin_cells: int = 2):
    """sup over H_s (below the last stored time) of (t/s)^{1/2} s^{3/2} |f|."""
    out = []
    for s in s_values:
        sl = extract_slice(hist, s, [name], margin_cells, truncate=True)
        if sl.r.size == 0:
            out.append(0.0)
            continue
        f = sl.values[name]["f"]
        out.append(float(np.max((sl.t / s) ** 0.5 * s ** 1.5 * np.abs(f))))
    return np.array(out)


def decay_rates(dec: Decomposition, s_values=None, slope_tol: float = 0.1,
                min_slices: int = 5) -> dict:
    """Fitted log-log slopes of the weighted sups of u_L and u_g over s >= 4."""
    if s_values is None:
        s_values = np.arange(FIT_S_MIN, dec.run.t_last + 1e-9, 0.5)
    s_values = np.asarray([s for s in s_values if s >= FIT_S_MIN and s <= dec.run.t_last])
    if s_values.size < min_slices:
        raise RangeError(f"only {s_values.size} slices with s >= {FIT_S_MIN}; need {min_slices}")
    out = {"s": s_values}
    for key, h in (("u_L", dec.u_L), ("u_g", dec.u_g)):
        tab = weighted_sup_table(h, s_values)
        degenerate = not np.any(tab > 0)
        slope = 0.0 if degenerate else loglog_slope(s_values, tab)
        # vanishing tails (Huygens) give no positive samples: bounded trivially
        if np.isnan(slope):
            slope = 0.0
        out[key] = {"sup": tab, "slope": slope, "degenerate": degenerate,
                    "bounded": bool(slope <= slope_tol)}
    return out


# ---------------------------------------------------------------------------
# linear decay probe: box u = f with f = C_f t^{-2-nu} (t-r)^{-1+mu} near the cone cut off

def probe_source(mu: float, nu: float, C_f: float, width: float = 1.0):
    """f(t, r) supported in r < t - 1, smoothly switched on over (t - r - 1) in [0, width]."""
    def f(t, r):
        r = np.asarray(r, float)
        x = t - r
        cut = smooth_step((x - 1.0) / width)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = C_f * t ** (-2.0 - nu) * np.where(x > 0, x, 1.0) ** (-1.0 + mu)
        return np.where(x > 1.0, val * cut, 0.0)
    return f


def linear_decay_probe(mu: float, nu: float, C_f: float = 1.0, grid: RadialGrid | None = None,
                       t_final: float = 25.0, t_fit=(4.0, None), cfl: float = DEFAULT_CFL,
                       store_dt: float = 0.05, slope_tol: float = 0.1) -> dict:
    """Solve box u = f from zero data at t = 2 and fit the weighted sup.

    nu > 0: sup_r |u| t (t - r)^{nu - mu};  nu < 0: sup_r |u| t^{1 + nu} (t - r)^{-mu}.
    The per-time sups are fitted against log t over ``t_fit``.
    """
    if not (0.0 < mu <= 0.5):
        raise ArgumentError(f"mu={mu} must lie in (0, 1/2]")
    if not (0.0 < abs(nu) <= 0.5):
        raise ArgumentError(f"nu={nu} must satisfy 0 < |nu| <= 1/2")
    if grid is None:
        grid = RadialGrid.from_spacing(1.0 / 100.0, t_final + 3.0)
    f = probe_source(mu, nu, C_f)
    hist = solve_linear_wave(f, (np.zeros(grid.n), np.zeros(grid.n)), grid, t_final, cfl,
                             store_dt, 2.0)
    t = hist.times
    r = grid.r
    u = hist.field("phi")
    x = t[:, None] - r[None, :]
    inside = x > 1.0
    xs = np.where(inside, x, 1.0)
    if nu > 0:
        weight = t[:, None] * xs ** (nu - mu)
    else:
        weight = t[:, None] ** (1.0 + nu) * xs ** (-mu)
    sup = np.max(np.where(inside, np.abs(u) * weight, 0.0), axis=1)
    lo, hi = t_fit
    hi = t[-1] if hi is None else hi
    sel = (t >= lo) & (t <= hi)
    slope = 0.0 if not np.any(sup[sel] > 0) else loglog_slope(t[sel], sup[sel])
    return {"mu": mu, "nu": nu, "C_f": C_f, "t": t, "sup": sup, "slope": slope,
            "constant": float(np.max(sup)), "bounded": bool(slope <= slope_tol)}
