"""Hyperboloid slices, standard/conformal energies, Z-operators and
Klainerman-Sobolev ratios.

Slices H_s = {t^2 - r^2 = s^2} are sampled on the radial grid nodes that
lie inside the cone r < t - 1 - margin.  A stored run covers t <= T only;
large-s hyperboloids leave that range, so slices can be *truncated* at
t = T (an extra node is placed exactly at the cut).  The part of the
energy flux lost through the cut is accounted for by the flat energy on
{t = T}, see :func:`energy_balance`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, CapabilityError, RangeError
from .grid_fields import History
from . import zops
from .commuting import RayPartials, boost_words, family

MAX_WORD = 3
DEFAULT_MARGIN_CELLS = 2
FOUR_PI = 4.0 * np.pi


@dataclass
class SliceData:
    s: float
    r: np.ndarray
    t: np.ndarray
    values: dict = field(default_factory=dict)   # name -> {"f", "ft", "fr", "fbar"}
    truncated: bool = False
    r_cut: float = np.inf
    r_cone: float = np.inf
    history: History | None = None

    @property
    def empty(self) -> bool:
        return self.r.size < 2

    def integrate(self, density) -> float:
        if self.empty:
            return 0.0
        return float(np.trapezoid(density * FOUR_PI * self.r ** 2, self.r))

    def weight_st(self):
        return self.s / self.t


def cone_radius(s: float, margin: float) -> float:
    """Largest r on H_s with r <= t - 1 - margin."""
    m = 1.0 + margin
    return (s * s - m * m) / (2.0 * m)


def slice_nodes(history: History, s: float, margin_cells: int = DEFAULT_MARGIN_CELLS,
                truncate: bool = False):
    grid = history.grid
    if s < history.t_first - 1e-12:
        raise RangeError(f"H_s with s={s} starts at t={s} before the first stored time "
                         f"{history.t_first} (r=0)")
    margin = margin_cells * grid.dr
    r_cone = cone_radius(s, margin)
    r = grid.r[grid.r <= r_cone]
    T = history.t_last
    r_cut = np.sqrt(max(T * T - s * s, 0.0)) if T >= s else -1.0
    truncated = False
    if r.size and np.sqrt(s * s + r[-1] ** 2) > T * (1 + 1e-13):
        bad = r[np.sqrt(s * s + r * r) > T][0]
        if not truncate:
            raise RangeError(f"H_{s:g} leaves the stored run (t <= {T:g}) at r={bad:.6g}")
        truncated = True
        r = r[r < r_cut]
        if r_cut > 0:
            r = np.append(r, r_cut)
    if T < s:
        r = r[:0]
    return r, truncated, r_cut, r_cone


def extract_slice(history: History, s: float, fields=None, margin_cells: int = DEFAULT_MARGIN_CELLS,
                  truncate: bool = False) -> SliceData:
    """Fields and first derivatives interpolated onto H_s.

    Parameters
    ----------
    fields : names of stored base fields (default: u and v when present,
        else every field that is not a stored time derivative)
    truncate : cut the slice at the last stored time instead of raising
    """
    if fields is None:
        from .grid_fields import TIME_DERIVATIVE_OF
        fields = [n for n in history.names if n not in TIME_DERIVATIVE_OF]
    r, truncated, r_cut, r_cone = slice_nodes(history, s, margin_cells, truncate)
    t = np.sqrt(s * s + r * r)
    if truncated:
        t = np.minimum(t, history.t_last)
    sl = SliceData(s=float(s), r=r, t=t, truncated=truncated, r_cut=r_cut, r_cone=r_cone,
                   history=history)
    for name in fields:
        if r.size == 0:
            z = np.zeros(0)
            sl.values[name] = {"f": z, "ft": z, "fr": z, "fbar": z}
            continue
        f = history.partial(name, 0, 0, t, r)
        ft = history.partial(name, 1, 0, t, r)
        fr = history.partial(name, 0, 1, t, r)
        sl.values[name] = {"f": f, "ft": ft, "fr": fr, "fbar": (r / t) * ft + fr}
    return sl


# ---------------------------------------------------------------------------
# energies

def _vals(slice_: SliceData, name):
    if name not in slice_.values:
        raise ArgumentError(f"field {name!r} not on slice (have {list(slice_.values)})")
    return slice_.values[name]


def standard_density(f, ft, fr, t, r, c):
    return ft * ft + fr * fr + 2.0 * (r / t) * ft * fr + c * c * f * f


def frame_density(f, ft, fbar, s, t, c):
    return (s / t) ** 2 * ft * ft + fbar * fbar + c * c * f * f


def energy_standard(slice_: SliceData, c: float, name: str = "v") -> float:
    """Hyperboloidal energy with mass c (use c = 0 for the wave component)."""
    d = _vals(slice_, name)
    return slice_.integrate(standard_density(d["f"], d["ft"], d["fr"], slice_.t, slice_.r, c))


def energy_standard_frame(slice_: SliceData, c: float, name: str = "v") -> float:
    """Same energy written with the frame derivative dbar_r."""
    d = _vals(slice_, name)
    return slice_.integrate(frame_density(d["f"], d["ft"], d["fbar"], slice_.s, slice_.t, c))


def conformal_density(f, ft, fbar, s, t, r):
    Ku = s * (s / t) * ft + 2.0 * r * fbar
    return (Ku + 2.0 * f) ** 2 + (s * fbar) ** 2


def energy_conformal(slice_: SliceData, name: str = "u") -> float:
    """Conformal energy built from K = s d_s + 2 x.dbar with d_s = (s/t) d_t."""
    d = _vals(slice_, name)
    return slice_.integrate(conformal_density(d["f"], d["ft"], d["fbar"], slice_.s, slice_.t,
                                              slice_.r))


def conformal_lower_bound_ratio(slice_: SliceData, name: str = "u"):
    """Ratio (||s (s/t)^2 du|| + ||(s/t) u||) / E_con^{1/2} on one slice.

    |du| is the Euclidean norm of (d_t u, d_r u).  Returns nan when both
    sides vanish.
    """
    d = _vals(slice_, name)
    s, t = slice_.s, slice_.t
    grad = np.sqrt(d["ft"] ** 2 + d["fr"] ** 2)
    lhs = np.sqrt(slice_.integrate((s * (s / t) ** 2 * grad) ** 2)) \
        + np.sqrt(slice_.integrate(((s / t) * d["f"]) ** 2))
    rhs = np.sqrt(energy_conformal(slice_, name))
    if rhs == 0:
        return np.nan if lhs == 0 else np.inf
    return lhs / rhs


def plane_energy(history: History, t: float, r_lo: float, r_hi: float, c: float,
                 name: str = "v") -> float:
    """Flat energy of a field on {t} x [r_lo, r_hi] (nodes plus both endpoints)."""
    if r_hi <= r_lo:
        return 0.0
    g = history.grid.r
    r = np.concatenate([[r_lo], g[(g > r_lo) & (g < r_hi)], [r_hi]])
    tt = np.full_like(r, t)
    f = history.partial(name, 0, 0, tt, r)
    ft = history.partial(name, 1, 0, tt, r)
    fr = history.partial(name, 0, 1, tt, r)
    return float(np.trapezoid((ft * ft + fr * fr + c * c * f * f) * FOUR_PI * r * r, r))


def energy_balance(history: History, s: float, s_ref: float, c: float, name: str = "v",
                   margin_cells: int = DEFAULT_MARGIN_CELLS) -> dict:
    """Energy on H_s below t = T plus the flat energy that left through t = T.

    For a free field this sum equals the energy on H_{s_ref} (below T): the
    region between the two hyperboloids and under {t = T} has no other
    boundary carrying flux, because the field vanishes near the cone.
    """
    T = history.t_last
    margin = margin_cells * history.grid.dr
    r_plane_max = T - 1.0 - margin

    def part(sig):
        if sig > T:
            return 0.0, -1.0
        sl = extract_slice(history, sig, [name], margin_cells, truncate=True)
        cut = sl.r_cut if sl.truncated else min(np.sqrt(T * T - sig * sig), r_plane_max)
        return energy_standard(sl, c, name), min(cut, r_plane_max)

    e_ref, cut_ref = part(s_ref)
    e_s, cut_s = part(s)
    lo = max(cut_s, 0.0) if s <= T else 0.0
    flux = plane_energy(history, T, lo, cut_ref, c, name) if cut_ref > lo else 0.0
    total = e_s + flux
    return {"s": s, "slice": e_s, "flux": flux, "total": total, "reference": e_ref,
            "ratio": total / e_ref if e_ref > 0 else np.nan}


# ---------------------------------------------------------------------------
# Z-operators

def _check_word(word):
    for ch in word:
        if ch not in zops.LETTERS:
            raise ArgumentError(f"unknown letter {ch!r} in word {word!r}")


class ZField:
    """Virtual field Z f for a word Z over {t, r, L}.

    Z is expanded exactly into polynomial-coefficient combinations of
    partial derivatives, which are then interpolated from the history.
    """

    def __init__(self, history: History, base: str, word: str):
        _check_word(word)
        self.history = history
        self.base = base
        self.word = word

    def __call__(self, t, r):
        op = zops.word_operator(self.word)
        parts = {ab: self.history.partial(self.base, ab[0], ab[1], t, r) for ab in op}
        return zops.evaluate(self.word, parts, t, r)

    def then(self, letter: str) -> "ZField":
        """letter applied after this operator."""
        return ZField(self.history, self.base, letter + self.word)

    def on_slice(self, slice_: SliceData):
        return self(slice_.t, slice_.r)


def apply_Z(history: History, word: str, base: str = "u") -> ZField:
    """Word over {t, r, L} applied to a stored field; at most three letters."""
    if len(word) > MAX_WORD:
        raise CapabilityError(f"word {word!r} longer than {MAX_WORD} letters")
    return ZField(history, base, word)


class SlicePartials:
    """Interpolated partials and commuting-field words of one field on one slice."""

    def __init__(self, history: History, slice_: SliceData, base: str):
        self.history, self.slice, self.base = history, slice_, base
        self.ray = RayPartials(history, slice_.t, slice_.r, base)

    def get(self, ab):
        """Radial partial d_t^a d_r^b."""
        return self.ray.radial(ab[0], ab[1], 0)

    def word(self, word: str):
        """Word over t x y z X Y Z on the ray through (r, 0, 0)."""
        return self.ray.word(word)


def pointwise_norm(sp: SlicePartials, p: int, k: int, derivative: bool = False,
                   boosts_only: bool = False):
    """|f|_{p,k} (or |df|_{p,k}) at every slice node.

    Root of the sum of squares over all words d^I L^J (every index choice),
    which is rotation invariant.  ``boosts_only`` keeps the words L^J with
    |J| <= k.
    """
    out = np.zeros(sp.slice.r.size)
    for w in (boost_words(k) if boosts_only else family(p, k)):
        if derivative:
            for g in sp.ray.gradient(w):
                out += g * g
        else:
            out += sp.word(w) ** 2
    return np.sqrt(out)


def l2_norm(slice_: SliceData, values) -> float:
    return float(np.sqrt(max(slice_.integrate(values * values), 0.0)))


def z_energy(sp: SlicePartials, word: str, c: float) -> float:
    """Standard energy of Z f on the slice (summed over directions by symmetry)."""
    sl = sp.slice
    f = sp.word(word)
    ft, fx, fy, fz = sp.ray.gradient(word)
    dens = ft * ft + fx * fx + fy * fy + fz * fz + 2.0 * (sl.r / sl.t) * ft * fx + c * c * f * f
    return sl.integrate(dens)


def z_energy_conformal(sp: SlicePartials, word: str) -> float:
    sl = sp.slice
    f = sp.word(word)
    ft, fx, fy, fz = sp.ray.gradient(word)
    bar1 = (sl.r / sl.t) * ft + fx
    Ku = sl.s * (sl.s / sl.t) * ft + 2.0 * sl.r * bar1
    dens = (Ku + 2.0 * f) ** 2 + sl.s ** 2 * (bar1 * bar1 + fy * fy + fz * fz)
    return sl.integrate(dens)


def energy_pk(sp: SlicePartials, p: int, k: int, c: float, conformal: bool = False) -> float:
    """Sum of energies of d^I L^J f over |I| + |J| <= p, |J| <= k."""
    if p > MAX_WORD:
        raise CapabilityError(f"energy order {p} above {MAX_WORD}")
    tot = 0.0
    for w in family(p, k):
        tot += z_energy_conformal(sp, w) if conformal else z_energy(sp, w, c)
    return tot


def ks_ratio(history: History, s: float, field: str, p: int = 2, truncate: bool = True,
             margin_cells: int = DEFAULT_MARGIN_CELLS) -> dict:
    """sup t^{3/2}|f| over H_s divided by the root-sum-square of ||d^I L^J f||, |I|+|J| <= p.

    Returns a dict with ``ratio`` and a ``flag`` ("ok", "zero", "anomaly").
    """
    if p > 2:
        raise CapabilityError("Klainerman-Sobolev ratio uses at most two operators")
    sl = extract_slice(history, s, [field], margin_cells, truncate=truncate)
    sp = SlicePartials(history, sl, field)
    if sl.empty:
        return {"s": s, "ratio": 0.0, "num": 0.0, "den": 0.0, "flag": "zero",
                "truncated": sl.truncated}
    num = float(np.max(sl.t ** 1.5 * np.abs(sp.get((0, 0)))))
    den = float(np.sqrt(sum(l2_norm(sl, sp.word(w)) ** 2 for w in family(p))))
    if den == 0.0:
        flag = "zero" if num == 0.0 else "anomaly"
        return {"s": s, "ratio": 0.0 if num == 0.0 else np.inf, "num": num, "den": den,
                "flag": flag, "truncated": sl.truncated}
    return {"s": s, "ratio": num / den, "num": num, "den": den, "flag": "ok",
            "truncated": sl.truncated}


def pointwise_energy_ratio(history: History, s: float, field: str, c: float, p: int = 0,
                           k: int = 0) -> float:
    """sup t^{3/2} (s/t) |df|_{p,k} divided by sqrt(E^{p+2,k+2})."""
    sl = extract_slice(history, s, [field], truncate=True)
    if sl.empty:
        return np.nan
    sp = SlicePartials(history, sl, field)
    lhs = np.max(sl.t ** 1.5 * (sl.s / sl.t) * pointwise_norm(sp, p, k, derivative=True))
    e = energy_pk(sp, min(p + 2, MAX_WORD), min(k + 2, MAX_WORD), c)
    return float(lhs / np.sqrt(e)) if e > 0 else np.nan


# ---------------------------------------------------------------------------
# reports

@dataclass
class EnergyReport:
    s: float
    E_c_u: float
    E_c_v: float
    E_con_u: float
    per_order: dict = field(default_factory=dict)
    ks_ratio: float = np.nan
    sup_table: dict = field(default_factory=dict)
    truncated: bool = False

    def row(self, order_keys):
        return [self.s, self.E_c_u, self.E_c_v, self.E_con_u] + \
            [self.per_order.get(k, np.nan) for k in order_keys] + [self.ks_ratio]


def energy_report(history: History, s: float, c: float, orders=((1, 1), (2, 2)),
                  ks_field: str = "v") -> EnergyReport:
    sl = extract_slice(history, s, ["u", "v"], truncate=True)
    rep = EnergyReport(s=s, E_c_u=energy_standard(sl, 0.0, "u"), E_c_v=energy_standard(sl, c, "v"),
                       E_con_u=energy_conformal(sl, "u"), truncated=sl.truncated)
    spu = SlicePartials(history, sl, "u")
    spv = SlicePartials(history, sl, "v")
    for p, k in orders:
        rep.per_order[f"E_c_v_{p}{k}"] = energy_pk(spv, p, k, c)
        rep.per_order[f"E_con_u_{p}{k}"] = energy_pk(spu, p, k, 0.0, conformal=True)
    rep.ks_ratio = ks_ratio(history, s, ks_field)["ratio"]
    return rep


def write_energy_csv(path, reports):
    keys = list(reports[0].per_order) if reports else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "E_c_u", "E_c_v", "E_con_u"] + keys + ["ks_ratio"])
        for rep in reports:
            w.writerow([f"{x:.17g}" for x in rep.row(keys)])
