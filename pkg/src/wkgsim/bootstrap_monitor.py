"""Numerical certifiers for the energy bootstrap and the sharp-decay recursion.

Tables are built from a stored run on a grid of hyperboloids H_s.  Slices
that leave the stored time range are truncated at the last stored time, so
large-s entries see only the part of H_s below t = T.

Sup quantities (p = n_eff, weights evaluated pointwise on each slice)::

    A_k(s) = sup_{s' <= s} sup_{H_s'} (s'/t)^{2 delta - 2} s'^{3/2} (|v|_{p,k} + (s'/t)|dv|_{p-1,k})
    B_k(s) = sup_{s' <= s} sup_{H_s'} t |u|_{k,k}

where |f|_{p,k} is the root-sum-square of d^I L^J f (Cartesian d_alpha and
L_a, every index choice) over |I| + |J| <= p, |J| <= k, and |u|_{k,k} uses
the all-boost words L^J, |J| <= k.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (ArgumentError, CapabilityError, ConfigurationError,
                     RangeError)
from .evolver import evolve
from .fits import local_peaks, power_fit, running_max
from .frame_geometry import CoefficientSet, damping_sweep
from .grid_fields import FieldState, History, RadialGrid
from .slice_diag import (MAX_WORD, SlicePartials, energy_pk, energy_standard, extract_slice,
                         pointwise_norm)

log = logging.getLogger(__name__)

FIT_S_MIN = 4.0
SLOPE_TOL = 0.1


@dataclass
class BootstrapConfig:
    """Orders, exponents and constants for the bootstrap checks.

    ``C0`` / ``C1`` left as None are fitted from the run (C0 from the first
    slice, C1 = c1_factor * C0).
    """
    n_eff: int = 3
    delta: float = 0.05
    eps: float = 0.01
    C0: float | None = None
    C1: float | None = None
    c1_factor: float = 4.0
    s_min_fit: float = FIT_S_MIN
    s_max: float | None = None
    slope_tol: float = SLOPE_TOL

    def __post_init__(self):
        if not 0 <= self.n_eff <= MAX_WORD:
            raise CapabilityError(f"n_eff={self.n_eff} outside 0..{MAX_WORD}")
        if not 0.0 < self.delta < 0.1:
            raise ConfigurationError(f"delta={self.delta} must lie in (0, 1/10)")
        if not self.eps >= 0:
            raise ConfigurationError("eps must be nonnegative")
        if self.C0 is not None and self.C1 is not None and not self.C1 > self.C0:
            raise ConfigurationError(f"C1={self.C1} must exceed C0={self.C0}")
        if self.c1_factor <= 1.0:
            raise ConfigurationError("c1_factor must exceed 1")


def default_s_values(history: History, ds: float = 0.25, s_min: float | None = None):
    s0 = history.t_first if s_min is None else s_min
    return np.arange(s0, history.t_last + 1e-9, ds)


# ---------------------------------------------------------------------------
# sup quantities

@dataclass
class SupQuantities:
    s: np.ndarray
    A: dict            # k -> running max
    B: dict
    A_raw: dict = field(default_factory=dict)  # k -> per-slice sup
    B_raw: dict = field(default_factory=dict)
    n_eff: int = 3
    delta: float = 0.05
    eps: float = 0.0

    @property
    def ks(self):
        return sorted(self.A)

    def as_rows(self):
        ks = self.ks
        head = ["s"] + [f"A_{k}" for k in ks] + [f"B_{k}" for k in ks]
        rows = [[s] + [self.A[k][i] for k in ks] + [self.B[k][i] for k in ks]
                for i, s in enumerate(self.s)]
        return head, rows


def slice_sups(history: History, s: float, n_eff: int, delta: float, margin_cells: int = 2):
    """Per-slice values of the A_k and B_k suprema for k = 0..n_eff."""
    sl = extract_slice(history, s, ["u", "v"], margin_cells, truncate=True)
    A = np.zeros(n_eff + 1)
    B = np.zeros(n_eff + 1)
    if sl.r.size == 0:
        return A, B
    spv = SlicePartials(history, sl, "v")
    spu = SlicePartials(history, sl, "u")
    st = s / sl.t
    for k in range(n_eff + 1):
        nv = pointwise_norm(spv, n_eff, k)
        nd = pointwise_norm(spv, max(n_eff - 1, 0), min(k, max(n_eff - 1, 0)), derivative=True)
        A[k] = np.max(st ** (2 * delta - 2) * s ** 1.5 * (nv + st * nd))
        B[k] = np.max(sl.t * pointwise_norm(spu, k, k, boosts_only=True))
    return A, B


def compute_sup_quantities(history: History, cfg: BootstrapConfig, s_values=None,
                           margin_cells: int = 2) -> SupQuantities:
    """A_k, B_k on a grid of slices, accumulated as running maxima in s."""
    if cfg.n_eff > MAX_WORD:
        raise CapabilityError(f"n_eff={cfg.n_eff} above the operator capability {MAX_WORD}")
    if s_values is None:
        s_values = default_s_values(history)
    s_values = np.asarray(s_values, float)
    if s_values.size and np.any(np.diff(s_values) <= 0):
        raise ArgumentError("s values must increase")
    rawA = np.zeros((s_values.size, cfg.n_eff + 1))
    rawB = np.zeros_like(rawA)
    for i, s in enumerate(s_values):
        rawA[i], rawB[i] = slice_sups(history, s, cfg.n_eff, cfg.delta, margin_cells)
    A = running_max(rawA) if s_values.size else rawA
    B = running_max(rawB) if s_values.size else rawB
    ks = range(cfg.n_eff + 1)
    return SupQuantities(s=s_values, A={k: A[:, k] for k in ks}, B={k: B[:, k] for k in ks},
                         A_raw={k: rawA[:, k] for k in ks}, B_raw={k: rawB[:, k] for k in ks},
                         n_eff=cfg.n_eff, delta=cfg.delta, eps=cfg.eps)


# ---------------------------------------------------------------------------
# energy bootstrap

def energy_table(history: History, s_values, c: float, n_eff: int = 3, margin_cells: int = 2):
    """Order-n_eff energies per slice: conformal energy of u, standard energy of v."""
    if n_eff > MAX_WORD:
        raise CapabilityError(f"energy order {n_eff} above {MAX_WORD}")
    s_values = np.asarray(s_values, float)
    Econ = np.zeros(s_values.size)
    Ec = np.zeros(s_values.size)
    trunc = np.zeros(s_values.size, bool)
    for i, s in enumerate(s_values):
        sl = extract_slice(history, s, ["u", "v"], margin_cells, truncate=True)
        trunc[i] = sl.truncated
        if sl.r.size == 0:
            continue
        Econ[i] = energy_pk(SlicePartials(history, sl, "u"), n_eff, n_eff, 0.0, conformal=True)
        Ec[i] = energy_pk(SlicePartials(history, sl, "v"), n_eff, n_eff, c)
    return {"s": s_values, "E_con_u": Econ, "E_c_v": Ec, "truncated": trunc, "n_eff": n_eff}


def _root(x):
    return np.sqrt(np.maximum(np.asarray(x, float), 0.0))


def minimal_delta(s, a_con, a_c, C1eps_half) -> float:
    """Smallest delta >= 0 with a_con <= C s^{1/2+delta} and a_c <= C s^delta."""
    s = np.asarray(s, float)
    if C1eps_half <= 0:
        return 0.0 if not (np.any(a_con > 0) or np.any(a_c > 0)) else np.inf
    ls = np.log(s)
    with np.errstate(divide="ignore"):
        d1 = np.log(np.where(a_con > 0, a_con, np.nan) / C1eps_half) / ls - 0.5
        d2 = np.log(np.where(a_c > 0, a_c, np.nan) / C1eps_half) / ls
    d = np.concatenate([d1[np.isfinite(d1)], d2[np.isfinite(d2)], [0.0]])
    return float(max(np.max(d), 0.0))


def bootstrap_check(table: dict, cfg: BootstrapConfig) -> dict:
    """Per-slice verdicts for the bootstrap bounds and their refined halves.

    With C1 eps = K:  sqrt(E_con) <= K s^{1/2+delta},  sqrt(E_c) <= K s^delta;
    the refined bounds use K/2.  Also fits the smallest delta for which the
    refined bounds hold with the chosen C1, and the smallest C1 at cfg.delta.
    """
    s = np.asarray(table["s"], float)
    a_con = _root(table["E_con_u"])
    a_c = _root(table["E_c_v"])
    eps = cfg.eps
    if cfg.C0 is not None:
        C0 = cfg.C0
    else:
        C0 = float(max(a_con[0], a_c[0]) / eps) if (eps > 0 and s.size) else 0.0
    C1 = cfg.C1 if cfg.C1 is not None else cfg.c1_factor * C0
    K = C1 * eps
    d = cfg.delta
    win = s >= cfg.s_min_fit
    if cfg.s_max is not None:
        win &= s <= cfg.s_max
    full = (a_con <= K * s ** (0.5 + d) * (1 + 1e-12)) & (a_c <= K * s ** d * (1 + 1e-12))
    half = (a_con <= 0.5 * K * s ** (0.5 + d) * (1 + 1e-12)) & \
        (a_c <= 0.5 * K * s ** d * (1 + 1e-12))
    fails = s[win & ~half]
    dmin = minimal_delta(s[win], a_con[win], a_c[win], 0.5 * K) if win.any() else 0.0
    if eps > 0 and win.any():
        c1_min = float(np.max(np.maximum(a_con[win] / s[win] ** (0.5 + d), a_c[win] / s[win] ** d))
                       / eps)
    else:
        c1_min = 0.0
    return {"s": s, "bootstrap": full, "refined": half, "C0": C0, "C1": C1,
            "delta": d, "delta_min": dmin, "C1_min": c1_min,
            "refined_hold": bool(np.all(half[win])), "bootstrap_hold": bool(np.all(full[win])),
            "first_fail_s": float(fails[0]) if fails.size else None,
            "holds": bool(np.all(half[win]) and dmin < 0.1)}


# ---------------------------------------------------------------------------
# sharp decay

def axis_decay_fit(history: History, c: float, t_min: float = FIT_S_MIN, field_name: str = "v",
                   origin: float | None = None) -> dict:
    """Power-law fit of the Klein-Gordon amplitude at r = 0.

    The envelope sqrt(v^2 + (d_t v / c)^2) is fitted against the elapsed time
    tau = t - origin (default: the initial time), and also against t itself.
    Local maxima of |v| are fitted the same way as a cross-check.
    """
    t = history.times
    v = history.field(field_name)[:, 0]
    dname = {"v": "q", "u": "p", "phi": "phi_t"}.get(field_name)
    vt = history.field(dname)[:, 0] if dname and history.has(dname) else np.gradient(v, t)
    env = np.sqrt(v * v + (vt / c) ** 2)
    t0 = history.t_first if origin is None else origin
    sel = t >= t_min
    if sel.sum() < 5:
        raise RangeError(f"only {sel.sum()} stored times with t >= {t_min}")
    b_env, k_env = power_fit(t[sel] - t0, env[sel])
    b_raw, _ = power_fit(t[sel], env[sel])
    pk = local_peaks(v)
    pk = pk[t[pk] >= t_min]
    b_pk = power_fit(t[pk] - t0, np.abs(v[pk]))[0] if pk.size >= 3 else np.nan
    return {"exponent": b_env, "constant": k_env, "exponent_raw_t": b_raw,
            "exponent_peaks": b_pk, "origin": t0, "n_peaks": int(pk.size)}


def weighted_sup_fit(history: History, s_values, cfg: BootstrapConfig, margin_cells: int = 2):
    """Fits of sup_{H_s} t|u| (slope) and sup_{H_s} (s/t)^{2 delta - 2} |v| (exponent in s)."""
    s_values = np.asarray([s for s in s_values if s >= cfg.s_min_fit])
    tu = np.zeros(s_values.size)
    wv = np.zeros(s_values.size)
    for i, s in enumerate(s_values):
        sl = extract_slice(history, s, ["u", "v"], margin_cells, truncate=True)
        if sl.r.size == 0:
            continue
        tu[i] = np.max(sl.t * np.abs(sl.values["u"]["f"]))
        wv[i] = np.max((s / sl.t) ** (2 * cfg.delta - 2) * np.abs(sl.values["v"]["f"]))
    b_u, _ = power_fit(s_values, tu)
    b_v, _ = power_fit(s_values, wv)
    return {"s": s_values, "t_u": tu, "weighted_v": wv,
            "slope_t_u": 0.0 if np.isnan(b_u) else b_u, "exponent_v_slices": b_v}


def sharp_decay_check(history: History, cfg: BootstrapConfig, c: float, s_values=None,
                      target: float = -1.5, tol: float = 0.15, min_s_max: float = 15.0) -> dict:
    """Boundedness of t|u| on slices and the axis decay exponent of v."""
    if history.t_last < min_s_max:
        raise RangeError(f"run reaches s_max={history.t_last:g} < {min_s_max:g}")
    if s_values is None:
        s_values = default_s_values(history, 0.5, cfg.s_min_fit)
    ws = weighted_sup_fit(history, s_values, cfg)
    ax = axis_decay_fit(history, c, cfg.s_min_fit)
    u_ok = ws["slope_t_u"] <= cfg.slope_tol
    v_ok = bool(np.isfinite(ax["exponent"]) and abs(ax["exponent"] - target) <= tol)
    return {"slope_t_u": ws["slope_t_u"], "u_bounded": bool(u_ok), "v_exponent": ax["exponent"],
            "v_exponent_raw_t": ax["exponent_raw_t"], "v_exponent_peaks": ax["exponent_peaks"],
            "v_exponent_slices": ws["exponent_v_slices"], "v_ok": v_ok, "target": target,
            "tol": tol, "holds": bool(u_ok and v_ok), "table": ws}


# ---------------------------------------------------------------------------
# recursion certification

def _cumtrapz(y, x):
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def recursion_terms(sup: SupQuantities, k: int):
    """Right-hand sides of the A_k and B_k inequalities without the common C.

    Returns (unitA, unitB, termsA, termsB): unit = eps + sum of the terms.
    The A_k terms are integrals of lam^{-1} B_0 A_{k-1} and of lam^{-1}
    B_{k1} A_{k-k1}, k1 = 1..k; they are absent for k = 0.  The B_k terms
    are the products A_{k1} A_{k-k1}, k1 = 0..k.
    """
    s = sup.s
    termsA = {}
    if k >= 1:
        termsA["B0*A%d" % (k - 1)] = _cumtrapz(sup.B[0] * sup.A[k - 1] / s, s)
        for k1 in range(1, k + 1):
            termsA[f"B{k1}*A{k - k1}"] = _cumtrapz(sup.B[k1] * sup.A[k - k1] / s, s)
    termsB = {f"A{k1}*A{k - k1}": sup.A[k1] * sup.A[k - k1] for k1 in range(k + 1)}
    unitA = sup.eps + sum(termsA.values(), np.zeros_like(s))
    unitB = sup.eps + sum(termsB.values(), np.zeros_like(s))
    return unitA, unitB, termsA, termsB


def _fit_C(sup: SupQuantities, mask):
    C = 0.0
    for k in sup.ks:
        uA, uB, _, _ = recursion_terms(sup, k)
        for lhs, unit in ((sup.A[k], uA), (sup.B[k], uB)):
            m = mask & (unit > 0)
            if np.any(m):
                C = max(C, float(np.max(lhs[m] / unit[m])))
            if np.any(mask & (unit == 0) & (lhs > 0)):
                return np.inf
    return C


def final_bound_replay(sup: SupQuantities, C: float, c1_factor: float = 4.0) -> dict:
    """Compare A_k + B_k with 2 C0 eps + C (C1 eps)^{3/2} s^{C sqrt(C1 eps)}.

    C0 = max_k (A_k + B_k)(s_first) / eps, C1 = c1_factor * C0, C the fitted
    inequality constant.  Evaluated in logs so a huge exponent saturates
    instead of overflowing.  ``perturbative`` reports whether the growth
    exponent C sqrt(C1 eps) is at most 1, i.e. whether the bound says more
    than the tables already do.
    """
    s = sup.s
    eps = sup.eps
    if eps <= 0 or not np.isfinite(C):
        return {"error": "needs eps > 0 and a finite C"}
    C0 = max(float(sup.A[k][0] + sup.B[k][0]) for k in sup.ks) / eps
    C1 = c1_factor * C0
    expo = C * np.sqrt(C1 * eps)
    with np.errstate(divide="ignore"):
        log_lin = np.log(2.0 * C0 * eps)
        log_nl = np.log(C) + 1.5 * np.log(C1 * eps) + expo * np.log(s)
    log_bound = np.logaddexp(log_lin, log_nl)
    per_k = {}
    ok = True
    for k in sup.ks:
        tot = sup.A[k] + sup.B[k]
        with np.errstate(divide="ignore"):
            margin = log_bound - np.log(tot)
        below = bool(np.all(margin >= -1e-12))
        per_k[k] = {"below": below, "min_log_margin": float(np.min(margin))}
        ok &= below
    return {"C0": C0, "C1": C1, "exponent": float(expo), "perturbative": bool(expo <= 1.0),
            "per_k": per_k, "holds": ok}


def recursion_certify(sup: SupQuantities, fit_fraction: float = 0.5, s_min: float = 2.0,
                      c1_factor: float = 4.0) -> dict:
    """Check the integral-inequality system on the tables.

    * C is fitted on the early part of the s-range (``fit_fraction`` of the
      samples) and the inequalities are verified with that C on the whole
      range (holdout).  ``C_full`` is the smallest C valid everywhere.
    * k = 0: the A_0 inequality carries no integral terms.
    * The induction's closing bound is replayed with the fitted constants
      (:func:`final_bound_replay`); it is reported, not part of ``holds``.
    """
    s = sup.s
    if s.size < 4:
        raise RangeError(f"{s.size} slices are too few for quadrature")
    mask_all = s >= s_min
    n_fit = max(2, int(np.ceil(fit_fraction * mask_all.sum())))
    idx = np.flatnonzero(mask_all)
    mask_fit = np.zeros_like(mask_all)
    mask_fit[idx[:n_fit]] = True
    C_fit = _fit_C(sup, mask_fit)
    C_full = _fit_C(sup, mask_all)
    per_k = {}
    all_hold = True
    for k in sup.ks:
        uA, uB, tA, tB = recursion_terms(sup, k)
        okA = sup.A[k][mask_all] <= C_fit * uA[mask_all] * (1 + 1e-12)
        okB = sup.B[k][mask_all] <= C_fit * uB[mask_all] * (1 + 1e-12)
        per_k[k] = {"A_holds": bool(okA.all()), "B_holds": bool(okB.all()),
                    "A_terms": sorted(tA), "B_terms": sorted(tB),
                    "first_fail_s": float(s[mask_all][~(okA & okB)][0]) if not (okA & okB).all()
                    else None}
        all_hold &= bool(okA.all() and okB.all())
    structural = len(recursion_terms(sup, 0)[2]) == 0
    replay = final_bound_replay(sup, C_fit, c1_factor) if C_fit > 0 else {"holds": True}
    return {"C": C_fit, "C_full": C_full, "per_k": per_k, "inequalities_hold": all_hold,
            "k0_structural": structural, "replay": replay,
            "holds": bool(all_hold and structural)}


# ---------------------------------------------------------------------------
# damping comparison

def energy_trajectory(history: History, s_values, c: float, name: str = "v",
                      margin_cells: int = 2):
    out = np.full(len(s_values), np.nan)
    for i, s in enumerate(s_values):
        if s > history.t_last:
            break
        sl = extract_slice(history, s, [name], margin_cells, truncate=True)
        out[i] = energy_standard(sl, c, name)
    return out


def damping_comparison(damped: CoefficientSet, violating: CoefficientSet, data: FieldState,
                       grid: RadialGrid, t_final: float, s_values=None, s_max: float = 20.0,
                       factor: float = 2.0, store_dt: float = 0.02, cfl: float = 0.4) -> dict:
    """Run both coefficient sets from the same data and compare E_c(s, v).

    A numeric blow-up of the violating run is reported as growth to
    overflow at the last s reached.
    """
    if s_values is None:
        s_values = np.arange(data.t, min(s_max, t_final) + 1e-9, 0.5)
    s_values = np.asarray(s_values, float)
    sweeps = {"damped": damping_sweep(damped, t_final), "violating": damping_sweep(violating, t_final)}
    if not sweeps["damped"]["holds"]:
        log.warning("the 'damped' coefficient set violates the damping condition")
    if sweeps["violating"]["holds"]:
        log.warning("the 'violating' coefficient set satisfies the damping condition")
    out = {"s": s_values, "sweeps": sweeps}
    for key, co in (("damped", damped), ("violating", violating)):
        h = evolve(data.copy(), grid, co, t_final, store_dt=store_dt, cfl=cfl, on_error="stop")
        blow = h.meta.get("blowup_t")
        out[key] = energy_trajectory(h, s_values, co.c)
        out[key + "_blowup_t"] = blow
        del h
    e_d, e_v = out["damped"], out["violating"]
    e0 = e_d[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(e_d > 0, e_v / e_d, np.where(e_v > 0, np.inf, 1.0))
    out["ratio"] = ratio
    sel = s_values <= s_max
    div = sel & ((ratio >= factor) | (ratio <= 1.0 / factor))
    out["diverge_s"] = float(s_values[div][0]) if div.any() else None
    if out["violating_blowup_t"] is not None and out["diverge_s"] is None:
        out["diverge_s"] = float(np.nanmax(np.where(np.isfinite(e_v), s_values, np.nan)))
        out["note"] = f"growth to overflow at s = {out['diverge_s']:.4g}"
    out["damped_bounded"] = bool(np.nanmax(e_d[sel]) <= factor * e0) if e0 > 0 else True
    out["violating_exceeds"] = bool(np.nanmax(e_v[sel]) > factor * e0) if e0 > 0 else False
    out["max_ratio"] = float(np.nanmax(ratio[sel])) if sel.any() else np.nan
    out["holds"] = bool(out["diverge_s"] is not None)
    return out
