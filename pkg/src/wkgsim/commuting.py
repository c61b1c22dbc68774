"""Commuting fields d_t, d_a, L_a = x_a d_t + t d_a applied to radial functions in 3+1.

A radial f(t, |x|) is evaluated on the ray x = (r, 0, 0).  With R = r + h1 and
q = h2^2 + h3^2,

    f(t, |x + h|) = f(t, R) + q G1(t, R) + q^2 G2(t, R) + O(q^3),
    G1 = f_r / (2 r),   G2 = (f_rr - f_r / r) / (8 r^2),

so every Cartesian partial of total order <= 5 with at most four transverse
derivatives is a radial partial of f, G1 or G2.  G1 and G2 are smooth even
functions; they are precomputed on the stored grid with sixth-order
differences and interpolated like any stored field.

Words are strings over ``t x y z`` (d_t, d_1, d_2, d_3) and ``X Y Z``
(L_1, L_2, L_3), read as compositions: ``"tX"`` is d_t L_1.  Sums of squares
over all index choices are rotation invariant, so evaluating them on one ray
and integrating with 4 pi r^2 is exact.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import comb, factorial

import numpy as np

from .errors import ArgumentError, CapabilityError
from .grid_fields import BASE_TO_DERIVATIVE, History

PARTIALS = "txyz"
BOOSTS = "XYZ"
LETTERS = PARTIALS + BOOSTS


def _padd(p, q, scale=1):
    out = dict(p)
    for k, c in q.items():
        v = out.get(k, 0) + scale * c
        if v:
            out[k] = v
        else:
            out.pop(k, None)
    return out


def _pdiff(p, var):
    out = {}
    for k, c in p.items():
        if k[var]:
            kk = list(k)
            kk[var] -= 1
            out[tuple(kk)] = c * k[var]
    return out


def _pshift(p, var):
    out = {}
    for k, c in p.items():
        kk = list(k)
        kk[var] += 1
        out[tuple(kk)] = c
    return out


def _bump(key, var):
    kk = list(key)
    kk[var] += 1
    return tuple(kk)


def _apply(op, letter):
    """letter o op, with op = {partial (a, b1, b2, b3): poly {(i, j1, j2, j3): c}}."""
    out = {}

    def add(key, poly):
        if poly:
            merged = _padd(out.get(key, {}), poly)
            if merged:
                out[key] = merged
            else:
                out.pop(key, None)

    for key, poly in op.items():
        if letter in PARTIALS:
            var = PARTIALS.index(letter)
            add(key, _pdiff(poly, var))
            add(_bump(key, var), poly)
        elif letter in BOOSTS:
            a = 1 + BOOSTS.index(letter)
            # x_a d_t + t d_a
            add(key, _pshift(_pdiff(poly, 0), a))
            add(_bump(key, 0), _pshift(poly, a))
            add(key, _pshift(_pdiff(poly, a), 0))
            add(_bump(key, a), _pshift(poly, 0))
        else:
            raise ArgumentError(f"unknown letter {letter!r} (use {LETTERS})")
    return out


@lru_cache(maxsize=None)
def word_operator(word: str):
    op = {(0, 0, 0, 0): {(0, 0, 0, 0): 1}}
    for letter in reversed(word):
        op = _apply(op, letter)
    return op


@lru_cache(maxsize=None)
def reduced_operator(word: str):
    """Word on the ray (r, 0, 0): tuple of ((a, b, m), {(i, j): c}).

    A term stands for sum c t^i r^j * d_t^a d_r^b G_m (G_0 = f), with the
    transverse combinatorial factor folded into c.
    """
    terms = {}
    for (a, b1, b2, b3), poly in word_operator(word).items():
        if b2 % 2 or b3 % 2:
            continue
        m = (b2 + b3) // 2
        if m > 2:
            raise CapabilityError(f"word {word!r} needs more than four transverse derivatives")
        ray = {(i, j1): c for (i, j1, j2, j3), c in poly.items() if j2 == 0 and j3 == 0}
        if not ray:
            continue
        fac = factorial(b2) * factorial(b3) * comb(m, b2 // 2)
        key = (a, b1, m)
        terms[key] = _padd(terms.get(key, {}), ray, fac)
    return tuple((k, p) for k, p in terms.items() if p)


def family(p: int, k: int | None = None):
    """Words d^I L^J with |I| + |J| <= p and |J| <= k, all index choices."""
    k = p if k is None else min(k, p)
    out = []
    for n in range(p + 1):
        for j in range(min(n, k) + 1):
            for I in product(PARTIALS, repeat=n - j):
                for J in product(BOOSTS, repeat=j):
                    out.append("".join(I) + "".join(J))
    return out


def boost_words(k: int):
    """All-boost words L^J with |J| <= k."""
    return ["".join(J) for n in range(k + 1) for J in product(BOOSTS, repeat=n)]


# ---------------------------------------------------------------------------
# axis-regular auxiliary fields

def _d1_d2(F, dr):
    """Sixth-order d_r and d_rr of even rows F (K, n); zero padding at r_max."""
    K, n = F.shape
    P = np.zeros((K, n + 6))
    P[:, 3:n + 3] = F
    P[:, :3] = F[:, 3:0:-1]
    c1 = (-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0)
    c2 = (2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0)
    d1 = sum(c * P[:, j:j + n] for j, c in enumerate(c1) if c) / (60.0 * dr)
    d2 = sum(c * P[:, j:j + n] for j, c in enumerate(c2)) / (180.0 * dr * dr)
    d4_0 = (-F[:, 3] / 3.0 + 4.0 * F[:, 2] - 13.0 * F[:, 1] + 28.0 / 3.0 * F[:, 0]) / dr ** 4
    return d1, d2, d4_0


def axis_rows(F, dr):
    """(G1, G2) rows for even rows F."""
    F = np.atleast_2d(F)
    d1, d2, d4_0 = _d1_d2(F, dr)
    r = np.arange(F.shape[1]) * dr
    G1 = np.empty_like(F)
    G2 = np.empty_like(F)
    G1[:, 1:] = d1[:, 1:] / (2.0 * r[1:])
    G1[:, 0] = d2[:, 0] / 2.0
    G2[:, 1:] = (d2[:, 1:] - 2.0 * G1[:, 1:]) / (8.0 * r[1:] ** 2)
    G2[:, 0] = d4_0 / 24.0
    return G1, G2


def axis_history(history: History, base: str, chunk: int = 256) -> History:
    """Cached History holding g1_<base>, g2_<base> (and g1 of the stored d_t base)."""
    cache = history.__dict__.setdefault("_axis_cache", {})
    key = (len(history), history.t_first)
    if cache.get(base, (None,))[0] == key:
        return cache[base][1]
    dname = BASE_TO_DERIVATIVE.get(base)
    names = [f"g1_{base}", f"g2_{base}"]
    if dname and history.has(dname):
        names.append(f"g1_{dname}")
    aux = History(history.grid, names, t0=history.t_first, dt=history.dt,
                  capacity=max(len(history), 8))
    aux.derivative_names = {f"g1_{base}": f"g1_{dname}"} if len(names) == 3 else {}
    dr = history.grid.dr
    K = len(history)
    for lo in range(0, K, chunk):
        hi = min(lo + chunk, K)
        g1, g2 = axis_rows(history.field(base)[lo:hi], dr)
        aux._buf[lo:hi, 0] = g1
        aux._buf[lo:hi, 1] = g2
        if len(names) == 3:
            aux._buf[lo:hi, 2] = axis_rows(history.field(dname)[lo:hi], dr)[0]
    aux._count = K
    cache[base] = (key, aux)
    return aux


class RayPartials:
    """Words of commuting fields applied to ``base`` at points (t, r) of one ray."""

    def __init__(self, history: History, t, r, base: str):
        self.history, self.base = history, base
        self.t = np.asarray(t, float)
        self.r = np.asarray(r, float)
        self._aux = None
        self._radial = {}
        self._words = {}
        self._mono = {}

    @property
    def aux(self):
        if self._aux is None:
            self._aux = axis_history(self.history, self.base)
        return self._aux

    def radial(self, a, b, m):
        key = (a, b, m)
        if key not in self._radial:
            if self.r.size == 0:
                val = np.zeros(0)
            elif m == 0:
                val = self.history.partial(self.base, a, b, self.t, self.r)
            else:
                val = self.aux.partial(f"g{m}_{self.base}", a, b, self.t, self.r)
            self._radial[key] = val
        return self._radial[key]

    def _monomial(self, i, j):
        if (i, j) not in self._mono:
            self._mono[(i, j)] = self.t ** i * self.r ** j
        return self._mono[(i, j)]

    def word(self, w: str):
        if w not in self._words:
            out = np.zeros(self.r.shape)
            for (a, b, m), poly in reduced_operator(w):
                coef = sum(c * self._monomial(i, j) for (i, j), c in poly.items())
                out = out + coef * self.radial(a, b, m)
            self._words[w] = out
        return self._words[w]

    def gradient(self, w: str):
        """(d_t, d_1, d_2, d_3) of the word on the ray."""
        return tuple(self.word(a + w) for a in PARTIALS)
