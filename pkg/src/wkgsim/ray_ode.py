"""Rays through the origin, the second-order ODE satisfied by s^{3/2} v along
them, and the barrier-function bound for that ODE.

Along the ray gamma(lam) = (lam t/s, lam r/s) the operator
Lcal = (t/s) d_t + (r/s) d_r is d/dlam.  For a solution of
    box v - h d_t v + c^2 v = f
the weighted field w = lam^{3/2} v(gamma(lam)) obeys
    w'' - D w' + c^2 w = R1 + R2 + F,   D = (t/s) h,
with R1 the hyperbolic-Laplacian terms, R2 the lower-order coupling terms
and F = s^{3/2} f.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .errors import DomainError, PreconditionError, RangeError, ArgumentError
from .frame_geometry import SpacetimePoint, ray_lambda0, ray_points
from .grid_fields import STENCIL, History


# ---------------------------------------------------------------------------
# the Box identity in hyperbolic coordinates

def box_fd(v, t: float, r: float, h: float) -> float:
    """Centered-difference d_tt v - d_rr v - (2/r) d_r v (3 d_rr at r = 0)."""
    v0 = v(t, r)
    vtt = (v(t + h, r) - 2 * v0 + v(t - h, r)) / h ** 2
    if r == 0:
        return vtt - 3.0 * (2 * v(t, h) - 2 * v0) / h ** 2
    vp, vm = v(t, r + h), v(t, r - h)
    return vtt - (vp - 2 * v0 + vm) / h ** 2 - (vp - vm) / (r * h)


def box_hyperbolic_fd(v, t: float, r: float, h: float) -> float:
    """Right side of the hyperbolic form of box v, by finite differences.

    Uses s^{-3/2} Lcal^2 (s^{3/2} v) = Lcal^2 v + (3/s) Lcal v + 3/(4 s^2) v,
    with Lcal = d/dlam along the ray and the remaining terms from
    V(s, rho) = v(sqrt(s^2 + rho^2), rho) at fixed s.
    """
    s = np.sqrt((t - r) * (t + r))
    g = lambda lam: v(lam * t / s, lam * r / s)
    g0 = g(s)
    Lv = (g(s + h) - g(s - h)) / (2 * h)
    LLv = (g(s + h) - 2 * g0 + g(s - h)) / h ** 2
    V = lambda rho: v(np.sqrt(s * s + rho * rho), rho)
    if r == 0:
        Vrr = 2 * (V(h) - g0) / h ** 2
        Vr = 0.0
        lap = 3.0 * Vrr
    else:
        Vp, Vm = V(r + h), V(r - h)
        Vr = (Vp - Vm) / (2 * h)
        Vrr = (Vp - 2 * g0 + Vm) / h ** 2
        lap = Vrr + 2.0 * Vr / r
    return (LLv + 3.0 / s * Lv + 3.0 / (4 * s * s) * g0
            - (r * r / (s * s)) * Vrr - lap - 3.0 * r / (s * s) * Vr - 3.0 / (4 * s * s) * g0)


def box_identity_residual(v, p: SpacetimePoint, h: float) -> float:
    """|box v - (hyperbolic form)| with both sides by finite differences."""
    if not p.inside_cone():
        raise DomainError(f"point (t={p.t}, r={p.r}) outside the cone")
    return abs(box_fd(v, p.t, p.r, h) - box_hyperbolic_fd(v, p.t, p.r, h))


def closed_form_fields():
    """Smooth radial test fields (even in r) for the Box identity."""
    return {
        "gauss_cos": lambda t, r: np.exp(-0.2 * r * r) * np.cos(t),
        "sinc_wave": lambda t, r: np.cos(0.7 * t) * np.sinc(0.4 * r / np.pi),
        "rational": lambda t, r: 1.0 / (1.0 + 0.1 * t * t + 0.3 * r * r),
        "exp_sin": lambda t, r: np.exp(-0.05 * (t * t + r * r)) * np.sin(0.5 * t + 0.2 * r * r),
        "log_mix": lambda t, r: np.log(2.0 + 0.1 * r * r) * np.cos(0.3 * t) + 0.01 * t * r * r,
    }


# ---------------------------------------------------------------------------
# ODE with damping: w'' - D w' + c^2 w = f

def _as_callable(x, lam):
    if callable(x):
        return x
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        val = float(arr)
        return lambda l: val + 0.0 * np.asarray(l, dtype=float)
    if lam is None or arr.shape != np.shape(lam):
        raise ArgumentError("sampled coefficient needs a matching lam grid")
    spl = CubicSpline(lam, arr)
    return spl


@dataclass
class OdeProblem:
    """w'' - D w' + c^2 w = f on [lam0, lam1].

    D, f and S may be callables of lam, scalars, or arrays sampled on
    ``lam_grid``.
    """
    c: float
    lam0: float
    lam1: float
    D: object = 0.0
    f: object = 0.0
    w0: float = 0.0
    w0p: float = 0.0
    S: object = None
    C_S: float | None = None
    lam_grid: np.ndarray | None = None

    def funcs(self):
        D = _as_callable(self.D, self.lam_grid)
        f = _as_callable(self.f, self.lam_grid)
        S = None if self.S is None else _as_callable(self.S, self.lam_grid)
        return D, f, S


def char_roots(D, c):
    """p_pm = (D +- sqrt(D^2 - 4 c^2)) / 2, complex when D^2 < 4 c^2."""
    D = np.asarray(D, dtype=float)
    disc = D * D - 4.0 * c * c
    # fixed branch: +i sqrt(|disc|) below the threshold, avoids sign-of-zero flips
    root = np.where(disc >= 0, np.sqrt(np.abs(disc)) + 0j, 1j * np.sqrt(np.abs(disc)))
    return (D + root) / 2.0, (D - root) / 2.0


def ode_integrate(prob: OdeProblem, dt: float, channels: bool = True) -> dict:
    """RK4 on (w', w)' = [[D, -c^2], [1, 0]] (w', w) + (f, 0).

    Returns samples ``lam, w, wp`` and, unless the characteristic roots
    degenerate, the diagonal channels W = P^{-1} (w', w) together with
    their independent reconstruction by variation of constants
    (``w_channels, wp_channels``).
    """
    if not dt <= 1e-2 / prob.c * (1 + 1e-12):
        raise ArgumentError(f"dt={dt} too large (need dt <= 1e-2/c)")
    if not prob.lam1 > prob.lam0:
        raise ArgumentError("empty integration interval")
    D, f, _ = prob.funcs()
    c2 = prob.c ** 2
    n = int(np.ceil((prob.lam1 - prob.lam0) / dt - 1e-9))
    h = (prob.lam1 - prob.lam0) / n
    lam = prob.lam0 + h * np.arange(n + 1)
    lam_half = lam[:-1] + 0.5 * h
    Dn, Dh = D(lam), D(lam_half)
    fn, fh = f(lam), f(lam_half)
    y = np.empty((n + 1, 2))
    y[0] = prob.w0p, prob.w0
    a, b = float(prob.w0p), float(prob.w0)
    Dn_l, Dh_l, fn_l, fh_l = Dn.tolist(), Dh.tolist(), fn.tolist(), fh.tolist()
    h2, h6 = 0.5 * h, h / 6.0
    # scalar loop: y = (w', w), y' = (D w' - c^2 w + f, w')
    for i in range(n):
        d0, dm, d1 = Dn_l[i], Dh_l[i], Dn_l[i + 1]
        f0, fm, f1 = fn_l[i], fh_l[i], fn_l[i + 1]
        k1a, k1b = d0 * a - c2 * b + f0, a
        a2, b2 = a + h2 * k1a, b + h2 * k1b
        k2a, k2b = dm * a2 - c2 * b2 + fm, a2
        a3, b3 = a + h2 * k2a, b + h2 * k2b
        k3a, k3b = dm * a3 - c2 * b3 + fm, a3
        a4, b4 = a + h * k3a, b + h * k3b
        k4a, k4b = d1 * a4 - c2 * b4 + f1, a4
        a += h6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        b += h6 * (k1b + 2 * k2b + 2 * k3b + k4b)
        y[i + 1, 0], y[i + 1, 1] = a, b
    out = {"lam": lam, "w": y[:, 1].copy(), "wp": y[:, 0].copy(), "D": Dn, "f": fn,
           "warnings": []}
    if np.max(np.abs(Dn)) > prob.c:
        out["warnings"].append(f"|D| reaches {np.max(np.abs(Dn)):.3g} > c={prob.c}: "
                               "bounded regime not guaranteed")
    out["channels"] = None
    if channels:
        disc = Dn * Dn - 4.0 * c2
        if np.any(np.abs(disc) < 1e-12):
            out["warnings"].append("degenerate characteristic roots; diagonalization skipped")
        else:
            out.update(_channels(lam, Dn, fn, y[:, 0], y[:, 1], prob.c))
    return out


def _channels(lam, Dn, fn, wp, w, c):
    pp, pm = char_roots(Dn, c)
    inv_det = 1.0 / (pp - pm)
    # P = [[p+, p-], [1, 1]],  P^{-1} = (p+ - p-)^{-1} [[1, -p-], [-1, p+]]
    Wp = inv_det * (wp - pm * w)
    Wm = inv_det * (-wp + pp * w)
    # forcing of the diagonal system: P^{-1}(f, 0) + (P^{-1})' (w', w)
    a11, a12, a21, a22 = inv_det, -pm * inv_det, -inv_det, pp * inv_det
    d = lambda x: np.gradient(x, lam, edge_order=2)
    Fp = a11 * fn + d(a11) * wp + d(a12) * w
    Fm = a21 * fn + d(a21) * wp + d(a22) * w
    rec = []
    for W, pr, Fr in ((Wp, pp, Fp), (Wm, pm, Fm)):
        Pi = _cumint(pr, lam)
        inner = _cumint(Fr * np.exp(-Pi), lam)
        rec.append(np.exp(Pi) * (W[0] + inner))
    wp_rec = pp * rec[0] + pm * rec[1]
    w_rec = rec[0] + rec[1]
    return {"channels": (Wp, Wm), "roots": (pp, pm), "wp_channels": wp_rec.real,
            "w_channels": w_rec.real,
            "channel_mismatch": float(max(np.max(np.abs(wp_rec - wp)), np.max(np.abs(w_rec - w))))}


def _cumint(y, x):
    if np.iscomplexobj(y):
        return _cumint(y.real, x) + 1j * _cumint(y.imag, x)
    if len(x) >= 3:
        return np.concatenate([[0.0], cumulative_simpson(y, x=x)])
    return cumulative_trapezoid(y, x, initial=0.0)


def frame_constant(c: float) -> float:
    """Safety constant multiplying exp(C_S/2) in the barrier bound."""
    return 10.0 * max(1.0, c, 1.0 / c)


def barrier_bound_check(prob: OdeProblem, dt: float = 1e-3, kappa: float | None = None) -> dict:
    """Smallest K with |w| + |w'| <= K (|w(lam0)| + |w'(lam0)| + int |f|).

    Requires a barrier S with D + S <= 0 and int |S| <= C_S, and compares K
    with kappa * exp(C_S / 2).
    """
    if prob.S is None or prob.C_S is None:
        raise PreconditionError("barrier S and its bound C_S must be supplied")
    sol = ode_integrate(prob, dt, channels=False)
    lam = sol["lam"]
    D, f, S = prob.funcs()
    Sv = S(lam)
    viol = np.max(sol["D"] + Sv)
    if viol > 1e-12:
        raise PreconditionError(f"D + S reaches {viol:.3g} > 0")
    int_S = float(np.trapezoid(np.abs(Sv), lam))
    if int_S > prob.C_S * (1 + 1e-9) + 1e-12:
        raise PreconditionError(f"int |S| = {int_S:.6g} exceeds C_S = {prob.C_S:.6g}")
    lhs = np.abs(sol["w"]) + np.abs(sol["wp"])
    rhs = abs(prob.w0) + abs(prob.w0p) + cumulative_trapezoid(np.abs(sol["f"]), lam, initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    K = float(np.max(ratio))
    kappa = frame_constant(prob.c) if kappa is None else kappa
    bound = kappa * np.exp(prob.C_S / 2.0)
    return {"lam": lam, "lhs": lhs, "rhs": rhs, "K_measured": K, "bound": float(bound),
            "holds": bool(K <= bound), "int_S": int_S, "warnings": sol["warnings"]}


def _trig_sum(amp, om, ph, kind=np.sin):
    def g(lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for a, o, p in zip(amp, om, ph):
            out = out + a * kind(o * lam + p)
        return out
    return g


def random_admissible_problem(rng: np.random.Generator, c: float = 1.0) -> OdeProblem:
    """Random smooth D with |D| <= c/2, barrier S = -D, smooth f, random data."""
    lam0 = float(rng.uniform(1.0, 4.0))
    lam1 = lam0 + float(rng.uniform(4.0, 16.0))
    m = 4
    amp = rng.normal(size=m)
    om = rng.uniform(0.1, 2.0, size=m)
    ph = rng.uniform(0, 2 * np.pi, size=m)
    offset = float(rng.uniform(-1, 1))
    norm = float(np.sum(np.abs(amp))) + abs(offset)
    base = _trig_sum(amp, om, ph)
    D = lambda lam: 0.5 * c * (offset + base(lam)) / norm
    fsum = _trig_sum(rng.normal(size=m), rng.uniform(0.1, 3.0, size=m), rng.uniform(0, 2 * np.pi, size=m))
    f = lambda lam: fsum(lam) * np.exp(-0.1 * (np.asarray(lam) - lam0))
    S = lambda lam: -D(lam)
    grid = np.linspace(lam0, lam1, 4001)
    C_S = float(np.trapezoid(np.abs(D(grid)), grid)) * (1 + 1e-3) + 1e-12
    return OdeProblem(c=c, lam0=lam0, lam1=lam1, D=D, f=f, w0=float(rng.normal()),
                      w0p=float(rng.normal()), S=S, C_S=C_S)


# ---------------------------------------------------------------------------
# sampling along rays of a stored run

@dataclass
class RayTrace:
    base: tuple
    lam: np.ndarray
    t: np.ndarray
    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    D: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    F: np.ndarray
    residual: np.ndarray = field(default=None)
    extra: dict = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lam", "w", "wp", "D", "R1", "R2", "F", "residual"])
            res = self.residual if self.residual is not None else np.full_like(self.lam, np.nan)
            for row in zip(self.lam, self.w, self.wp, self.D, self.R1, self.R2, self.F, res):
                w.writerow([f"{x:.17g}" for x in row])


def _field_sampler(src, name):
    """Return g(t, r, a, b) evaluating d_t^a d_r^b of a field.

    ``src`` is a History (field by name) or a callable (t, r, a, b).
    """
    if src is None:
        return None
    if callable(src) and not hasattr(src, "partial"):
        return src
    return lambda t, r, a=0, b=0: src.partial(name, a, b, t, r)


def sample_ray(history, base, c: float, h=None, f=None, s0: float = 2.0, dlam: float | None = None,
               lam_start: float | None = None, v_name: str = "v") -> RayTrace:
    """Sample w, w', D, R1, R2, F on the ray through ``base = (t, r)``.

    Parameters
    ----------
    h : damping field, either a History holding field ``u`` or a callable
        ``h(t, r, a, b)``; None means h = 0.
    f : right side of the Klein-Gordon equation, callable ``f(t, r)`` or None.
    """
    tb, rb = map(float, base)
    if not tb > rb:
        raise DomainError(f"base point t={tb} <= r={rb}")
    sb = np.sqrt((tb - rb) * (tb + rb))
    lam0 = ray_lambda0(tb, rb, s0) if lam_start is None else lam_start
    if dlam is None:
        dlam = min(history.dt, history.grid.dr) * (sb / tb)
    n = max(8, int(np.ceil((sb - lam0) / dlam)))
    lam = np.linspace(lam0, sb, n + 1)
    T, R = ray_points(tb, rb, lam)
    if T[-1] > history.t_last + 1e-9 or T[0] < history.t_first - 1e-9:
        raise RangeError(f"ray through (t={tb}, r={rb}) leaves the stored run "
                         f"(needs t in [{T[0]:.4g}, {T[-1]:.4g}])")
    P = lambda a, b: history.partial(v_name, a, b, T, R)
    v, vt, vr = P(0, 0), P(1, 0), P(0, 1)
    vtt, vtr, vrr = P(2, 0), P(1, 1), P(0, 2)
    hv = np.zeros_like(lam) if h is None else (
        h(T, R) if callable(h) and not hasattr(h, "partial") else h.partial("u", 0, 0, T, R))
    fv = np.zeros_like(lam) if f is None else f(T, R)
    s = lam
    w = s ** 1.5 * v
    Lv = (T * vt + R * vr) / s
    wp = 1.5 * s ** 0.5 * v + s ** 1.5 * Lv
    Vr = (R / T) * vt + vr
    Vrr = (s * s / T ** 3) * vt + (R / T) ** 2 * vtt + 2.0 * (R / T) * vtr + vrr
    with np.errstate(divide="ignore", invalid="ignore"):
        two_over_r = np.where(R > 0, 2.0 * Vr / np.where(R > 0, R, 1.0), 2.0 * vt / T + 2.0 * vrr)
    R1 = s ** 1.5 * ((R * R / (s * s)) * Vrr + Vrr + two_over_r + 3.0 * R / (s * s) * Vr
                     + 3.0 / (4.0 * s * s) * v)
    Lr = R * vt + T * vr
    R2 = -(1.5 * T / np.sqrt(s)) * hv * v - hv * R * Lr / np.sqrt(s)
    D = (T / s) * hv
    F = s ** 1.5 * fv
    tr = RayTrace(base=(tb, rb), lam=lam, t=T, r=R, w=w, wp=wp, D=D, R1=R1, R2=R2, F=F)
    tr.extra.update(v=v, vt=vt, vr=vr, h=hv, f=fv, Lr=Lr, lam0=lam0, s=sb)
    return tr


def ray_consistency(history, base, c: float, h=None, f=None, s0: float = 2.0,
                    dlam: float | None = None) -> RayTrace:
    """Residual |w'' - D w' + c^2 w - (R1 + R2 + F)| along a ray.

    w'' uses a five-point stencil in lam; the two samples at each end of
    the ray carry no residual (nan), and neither do samples within half a
    time stencil of the ends of the stored run, where interpolation is
    one-sided.
    """
    tr = sample_ray(history, base, c, h, f, s0, dlam)
    d = tr.lam[1] - tr.lam[0]
    wpp = np.full_like(tr.w, np.nan)
    w = tr.w
    wpp[2:-2] = (-w[4:] + 16 * w[3:-1] - 30 * w[2:-2] + 16 * w[1:-3] - w[:-4]) / (12 * d * d)
    tr.residual = np.abs(wpp - tr.D * tr.wp + c * c * tr.w - (tr.R1 + tr.R2 + tr.F))
    if isinstance(history, History):
        edge = 0.5 * STENCIL * history.dt
        tr.residual[(tr.t < history.t_first + edge) | (tr.t > history.t_last - edge)] = np.nan
    return tr


def sample_rays(t_grid, y_grid):
    """Base points (t, y (t - 1)) from a tensor grid of times and cone fractions."""
    return [(float(t), float(y * (t - 1.0))) for t in t_grid for y in y_grid]


# ---------------------------------------------------------------------------
# sharp Klein-Gordon decay along rays

def _h_callable(h):
    if h is None:
        return None
    if callable(h) and not hasattr(h, "partial"):
        return h
    return lambda t, r: h.partial("u", 0, 0, t, r)


def initial_sup(history, s0: float = 2.0, v_name: str = "v") -> float:
    """sup over H_{s0} of |v| + |d_t v| + |d_r v|."""
    from .slice_diag import extract_slice
    sl = extract_slice(history, s0, [v_name], margin_cells=0)
    d = sl.values[v_name]
    return float(np.max(np.abs(d["f"]) + np.abs(d["ft"]) + np.abs(d["fr"]))) if sl.r.size else 0.0


def sharp_decay_estimate(history, base, c: float, eta: float = 0.0, s0: float = 2.0,
                         h=None, f=None, init_sup: float | None = None) -> dict:
    """Both sides of the weighted pointwise Klein-Gordon bound at one point.

    lhs = (s/t)^eta s^{3/2} (|v| + (s/t)|dv|) at the base point;
    V   = (s/t)^eta [ sup_{H_s0}(|v| + |dv|) (near region only)
                      + s^{1/2} |v|_1 + int_{lam0}^{s} |R1 + R2 + F| dlam ].
    The ratio lhs / V is the constant the estimate needs at this point.
    """
    tb, rb = map(float, base)
    hh = _h_callable(h)
    tr = sample_ray(history, (tb, rb), c, hh, f, s0)
    s = tr.extra["s"]
    ex = tr.extra
    near = rb / tb <= (s0 * s0 - 1.0) / (s0 * s0 + 1.0)
    vt, vr, v = ex["vt"][-1], ex["vr"][-1], ex["v"][-1]
    dv = max(abs(vt), abs(vr))
    lhs = (s / tb) ** eta * s ** 1.5 * (abs(v) + (s / tb) * dv)
    v1 = max(abs(v), abs(vt), abs(vr), abs(ex["Lr"][-1]))
    integral = float(np.trapezoid(np.abs(tr.R1 + tr.R2 + tr.F), tr.lam))
    if init_sup is None:
        init_sup = initial_sup(history, s0) if near else 0.0
    V = (s / tb) ** eta * ((init_sup if near else 0.0) + np.sqrt(s) * v1 + integral)
    return {"base": (tb, rb), "lhs": float(lhs), "V": float(V), "near": bool(near),
            "ratio": float(lhs / V) if V > 0 else (0.0 if lhs == 0 else np.inf),
            "lam0": float(tr.lam[0])}


def sharp_decay_check(history, bases, c: float, eta: float = 0.0, s0: float = 2.0, h=None,
                      f=None) -> dict:
    """Evaluate :func:`sharp_decay_estimate` on many points; K is the largest ratio."""
    isup = initial_sup(history, s0)
    rows = [sharp_decay_estimate(history, b, c, eta, s0, h, f, isup) for b in bases]
    ratios = np.array([r["ratio"] for r in rows])
    finite = ratios[np.isfinite(ratios) & (ratios > 0)]
    K = float(np.max(finite)) if finite.size else 0.0
    spread = float((np.max(finite) - np.min(finite)) / np.max(finite)) if finite.size else 0.0
    return {"rows": rows, "K": K, "spread": spread, "eta": eta,
            "holds": bool(np.all([r["lhs"] <= K * r["V"] * (1 + 1e-12) for r in rows]))}
