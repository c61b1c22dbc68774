"""Hyperboloidal coordinates, frames, contracted coefficients and rays.

Everything here is a pure function of its arguments.  The radial reduction
uses the isotropic coefficient triple (A00, A0r, Arr); directions only enter
the 4x4 transition matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, fields

import numpy as np

from .errors import ArgumentError, DomainError


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    r: float

    @property
    def s(self) -> float:
        if not self.t > self.r:
            raise DomainError(f"s undefined at t={self.t}, r={self.r} (need t > r)")
        return float(np.sqrt((self.t - self.r) * (self.t + self.r)))

    def inside_cone(self) -> bool:
        return self.r < self.t - 1.0


def inside_cone(p: SpacetimePoint) -> bool:
    return p.inside_cone()


def _require_cone(p: SpacetimePoint):
    if not p.r >= 0.0:
        raise DomainError(f"negative radius r={p.r}")
    if not p.inside_cone():
        raise DomainError(f"point (t={p.t}, r={p.r}) is outside the cone r < t - 1")


@dataclass(frozen=True)
class CoefficientSet:
    """Constants of the coupled system.

    ``A00, A0r, Arr`` are the radial contractions of the quadratic form,
    ``B`` multiplies v**2 in the wave equation and ``c`` is the Klein-Gordon
    mass.  ``h00, p0, Q`` are the scalar coefficients of the extended
    Klein-Gordon source ``h00*u*v_tt + p0*u*v_t + Q*u*v``; the default
    ``p0 = 1`` gives the plain ``u * v_t`` coupling.
    """
    A00: float = 0.0
    A0r: float = 0.0
    Arr: float = 0.0
    B: float = 0.0
    c: float = 1.0
    h00: float = 0.0
    p0: float = 1.0
    Q: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ArgumentError(f"coefficient {f.name} is not finite: {v}")
        if not self.c > 0:
            raise ArgumentError(f"Klein-Gordon mass must be positive, got c={self.c}")

    @property
    def kappa(self) -> float:
        """Coefficient of v**2 that removes the B v**2 source."""
        return self.B / (2.0 * self.c ** 2)

    @property
    def extended(self) -> bool:
        return self.h00 != 0.0 or self.Q != 0.0 or self.p0 != 1.0

    def as_dict(self) -> dict:
        return asdict(self)


def minkowski_coeffs(scale: float = 1.0, **kw) -> CoefficientSet:
    """Coefficient set whose A part is ``scale`` times the Minkowski metric."""
    return CoefficientSet(A00=scale, A0r=0.0, Arr=-scale, **kw)


def _direction(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.shape != (3,):
        raise ArgumentError("direction must be a 3-vector")
    norm = np.linalg.norm(d)
    if not norm > 0:
        raise ArgumentError("direction must be nonzero")
    return d / norm


def transition_phi(p: SpacetimePoint, direction=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Matrix taking the Cartesian frame to the semi-hyperboloidal one.

    Row a (a = 1..3) is ``(x^a/t, e_a)``: the frame vector x^a/t d_t + d_a.
    """
    _require_cone(p)
    x = p.r * _direction(direction)
    phi = np.eye(4)
    phi[1:, 0] = x / p.t
    return phi


def transition_psi(p: SpacetimePoint, direction=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Inverse of :func:`transition_phi`."""
    _require_cone(p)
    x = p.r * _direction(direction)
    psi = np.eye(4)
    psi[1:, 0] = -x / p.t
    return psi


def underline_contract(coeffs: CoefficientSet, p: SpacetimePoint) -> float:
    """00-component of the quadratic form in the semi-hyperboloidal frame."""
    _require_cone(p)
    y = p.r / p.t
    return coeffs.A00 - 2.0 * y * coeffs.A0r + y * y * coeffs.Arr


def underline_components(coeffs: CoefficientSet, t, r):
    """Frame components (00, 0r, rr) on arrays; no domain checks.

    The 0r and rr components multiply d_t v * dbar_r v and (dbar_r v)**2,
    where dbar_r = (r/t) d_t + d_r.
    """
    y = np.asarray(r, dtype=float) / np.asarray(t, dtype=float)
    a00 = coeffs.A00 - 2.0 * y * coeffs.A0r + y * y * coeffs.Arr
    a0r = coeffs.A0r - y * coeffs.Arr
    arr = coeffs.Arr + 0.0 * y
    return a00, a0r, arr


def damping_margin_array(coeffs: CoefficientSet, t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    a00, _, _ = underline_components(coeffs, t, r)
    s2_t2 = (t - r) * (t + r) / (t * t)
    return a00 + coeffs.B / coeffs.c ** 2 * s2_t2


def damping_margin(coeffs: CoefficientSet, p: SpacetimePoint) -> float:
    """Value whose sign decides the damping condition at p (<= 0 means damped)."""
    _require_cone(p)
    return float(damping_margin_array(coeffs, p.t, p.r))


def damping_sweep(coeffs: CoefficientSet, t_max: float, n_t: int = 200, n_y: int = 200,
                  t_min: float = 2.0) -> dict:
    """Maximum of the damping margin over a sampled piece of the cone.

    Samples t in [t_min, t_max] and r = y (t - 1) for y in [0, 1).
    """
    t = np.linspace(t_min, t_max, n_t)[:, None]
    y = np.linspace(0.0, 1.0, n_y, endpoint=False)[None, :]
    r = y * (t - 1.0)
    m = damping_margin_array(coeffs, t + 0 * r, r)
    k = np.unravel_index(np.argmax(m), m.shape)
    return {"max": float(m[k]), "t": float(t[k[0], 0]), "r": float(r[k]),
            "holds": bool(m[k] <= 0.0)}


def ray_point(t: float, r: float, lam: float) -> SpacetimePoint:
    """Point at parameter lam on the ray through the origin and (t, r).

    The ray is normalized so that its parameter equals the hyperboloid
    parameter s of the point it passes through.
    """
    if not t > r:
        raise DomainError(f"ray undefined for t={t} <= r={r}")
    if not lam > 0:
        raise DomainError(f"ray parameter must be positive, got {lam}")
    s = np.sqrt((t - r) * (t + r))
    if lam == s:
        return SpacetimePoint(float(t), float(r))
    return SpacetimePoint(float(lam * t / s), float(lam * r / s))


def ray_points(t: float, r: float, lam) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`ray_point`; returns arrays (t, r)."""
    if not t > r:
        raise DomainError(f"ray undefined for t={t} <= r={r}")
    lam = np.asarray(lam, dtype=float)
    s = np.sqrt((t - r) * (t + r))
    return lam * t / s, lam * r / s


def ray_lambda0(t: float, r: float, s0: float = 2.0) -> float:
    """Starting parameter of the ray through (t, r).

    The ray is followed back until it meets either the initial hyperboloid
    s = s0 or the cone boundary r = t - 1, whichever comes first.
    """
    if not t > r:
        raise DomainError(f"ray undefined for t={t} <= r={r}")
    if r / t <= (s0 * s0 - 1.0) / (s0 * s0 + 1.0):
        return float(s0)
    return float(np.sqrt((t + r) / (t - r)))


def boost_radial(history, t, r, field: str = "u"):
    """(r d_t + t d_r) of a stored field, from interpolated derivatives."""
    ft = history.partial(field, 1, 0, t, r)
    fr = history.partial(field, 0, 1, t, r)
    out = np.asarray(r) * ft + np.asarray(t) * fr
    return float(out) if np.ndim(out) == 0 else out
