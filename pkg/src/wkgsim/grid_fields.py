"""Radial grid, field storage, initial data and space-time interpolation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ArgumentError, CapabilityError, RangeError

# stored field -> field it is the time derivative of
TIME_DERIVATIVE_OF = {"p": "u", "q": "v", "phi_t": "phi"}
BASE_TO_DERIVATIVE = {v: k for k, v in TIME_DERIVATIVE_OF.items()}
STATE_FIELDS = ("u", "p", "v", "q")
MAX_INTERP_ORDER = 4


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if self.n < 16:
            raise ArgumentError(f"grid needs at least 16 points, got n={self.n}")
        if not self.r_max > 0:
            raise ArgumentError(f"r_max must be positive, got {self.r_max}")

    @classmethod
    def from_spacing(cls, dr: float, r_max: float) -> "RadialGrid":
        n = int(round(r_max / dr)) + 1
        return cls(r_max=(n - 1) * dr, n=n)

    @property
    def dr(self) -> float:
        return self.r_max / (self.n - 1)

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n) * self.dr


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray

    def arrays(self):
        return (self.u, self.p, self.v, self.q)

    def stack(self) -> np.ndarray:
        return np.stack(self.arrays())

    @classmethod
    def from_stack(cls, t, arr) -> "FieldState":
        return cls(t, arr[0].copy(), arr[1].copy(), arr[2].copy(), arr[3].copy())

    @classmethod
    def zeros(cls, grid: RadialGrid, t: float = 2.0) -> "FieldState":
        z = np.zeros(grid.n)
        return cls(t, z.copy(), z.copy(), z.copy(), z.copy())

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.p.copy(), self.v.copy(), self.q.copy())

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def bump(r) -> np.ndarray:
    """exp(1 - 1/(1 - r^2)) on r < 1, zero outside; equals 1 at r = 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = np.abs(r) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - r[m] ** 2))
    return out


def _smooth_step(x):
    # C-infinity step: 0 for x <= 0, 1 for x >= 1
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def smooth_step(x):
    return _smooth_step(x)


def gaussian_truncated(r, sigma: float = 0.15, r_cut: float = 0.8) -> np.ndarray:
    """Gaussian of width sigma, smoothly cut off between r = r_cut and r = 1.

    With the defaults the Gaussian is below 1e-6 where the cutoff starts, so
    high derivatives stay those of the Gaussian itself (well resolved on
    desk-scale grids, unlike the compact bump near r = 1).
    """
    r = np.asarray(r, dtype=float)
    return np.exp(-r * r / (2 * sigma * sigma)) * (1.0 - _smooth_step((np.abs(r) - r_cut)
                                                                      / (1.0 - r_cut)))


def polynomial_bump(r, m: int = 8) -> np.ndarray:
    """(1 - r^2)^m on r < 1: C^{m-1}, with moderate derivatives up to that order."""
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, np.clip(1.0 - r * r, 0.0, None) ** m, 0.0)


PROFILES = {"bump": bump, "gaussian-truncated": gaussian_truncated, "polynomial": polynomial_bump}


def make_initial_data(grid: RadialGrid, eps: float, profile: str = "bump",
                      t0: float = 2.0, u_scale: float = 1.0, v_scale: float = 1.0) -> FieldState:
    """Data at t = 2: u = v = eps*chi(r), zero time derivatives.

    ``u_scale`` / ``v_scale`` switch either component off (or rescale it)
    for single-field experiments.
    """
    if not eps >= 0:
        raise ArgumentError(f"eps must be nonnegative, got {eps}")
    if profile not in PROFILES:
        raise ArgumentError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    chi = PROFILES[profile](grid.r)
    z = np.zeros(grid.n)
    return FieldState(t0, eps * u_scale * chi, z.copy(), eps * v_scale * chi, z.copy())


# ---------------------------------------------------------------------------
# Lagrange weights on equispaced nodes 0..w-1

_LAGRANGE = {}


def _lagrange_matrix(w: int) -> np.ndarray:
    if w not in _LAGRANGE:
        nodes = np.arange(w, dtype=float)
        V = nodes[:, None] ** np.arange(w)[None, :]
        _LAGRANGE[w] = np.linalg.inv(V)  # basis_j(x) = sum_m M[m, j] x^m
    return _LAGRANGE[w]


def lagrange_weights(x, w: int, order: int) -> np.ndarray:
    """Weights (len(x), w) giving the order-th derivative of the interpolant at x."""
    M = _lagrange_matrix(w)
    x = np.asarray(x, dtype=float)[:, None]
    m = np.arange(w)
    fall = np.array([factorial(k) // factorial(k - order) if k >= order else 0 for k in m],
                    dtype=float)
    powers = np.where(m >= order, x ** np.maximum(m - order, 0), 0.0) * fall
    return powers @ M


STENCIL = 8


class History:
    """Time-ordered stack of radial field arrays on a uniform time grid.

    Parameters
    ----------
    grid : RadialGrid
    names : field names stored per state, e.g. ("u", "p", "v", "q")
    t0 : time of the first state
    dt : spacing between stored states
    mode : "full" keeps everything, "ring" keeps the last ``capacity`` states
    """

    def __init__(self, grid: RadialGrid, names=STATE_FIELDS, t0: float = 2.0, dt: float = 0.01,
                 mode: str = "full", capacity: int = 256):
        if mode not in ("full", "ring"):
            raise ArgumentError(f"unknown retention mode {mode!r}")
        if not dt > 0:
            raise ArgumentError("history spacing must be positive")
        self.grid = grid
        self.names = tuple(names)
        self.index = {k: i for i, k in enumerate(self.names)}
        self.t0 = float(t0)
        self.dt = float(dt)
        self.mode = mode
        self._buf = np.empty((max(capacity, 8), len(self.names), grid.n))
        self._count = 0
        self._start = 0  # number of states dropped (ring mode)
        self.meta = {}
        self.derivative_names = dict(BASE_TO_DERIVATIVE)  # base -> stored d_t base

    # -- storage -------------------------------------------------------
    def append(self, arrays, t: float | None = None):
        arr = np.asarray(arrays, dtype=float)
        if arr.shape != (len(self.names), self.grid.n):
            raise ArgumentError(f"state shape {arr.shape} does not match history")
        expected = self.t0 + (self._start + self._count) * self.dt
        if t is not None and abs(t - expected) > 1e-9 * max(1.0, abs(t)):
            raise ArgumentError(f"non-uniform append: got t={t}, expected {expected}")
        if self._count == self._buf.shape[0]:
            if self.mode == "ring":
                self._buf[:-1] = self._buf[1:]
                self._count -= 1
                self._start += 1
            else:
                grown = np.empty((2 * self._buf.shape[0],) + self._buf.shape[1:])
                grown[: self._count] = self._buf[: self._count]
                self._buf = grown
        self._buf[self._count] = arr
        self._count += 1

    def trim(self):
        """Release unused preallocated storage."""
        if self._buf.shape[0] != self._count:
            self._buf = self._buf[: self._count].copy()

    @property
    def data(self) -> np.ndarray:
        return self._buf[: self._count]

    def __len__(self):
        return self._count

    @property
    def times(self) -> np.ndarray:
        return self.t0 + (self._start + np.arange(self._count)) * self.dt

    @property
    def t_first(self) -> float:
        return self.t0 + self._start * self.dt

    @property
    def t_last(self) -> float:
        return self.t0 + (self._start + self._count - 1) * self.dt

    def field(self, name: str) -> np.ndarray:
        return self.data[:, self.index[name], :]

    def state(self, k: int) -> FieldState:
        if self.names != STATE_FIELDS:
            raise ArgumentError("state() needs a (u, p, v, q) history")
        return FieldState.from_stack(self.times[k], self.data[k])

    def has(self, name: str) -> bool:
        return name in self.index

    # -- interpolation -------------------------------------------------
    def interp(self, t, r, field: str, dt_order: int = 0, dr_order: int = 0):
        """Piecewise Lagrange interpolation in t and r.

        Both directions use 8-point stencils (fewer in time on short
        histories); high-order words carry weights up to t^4, so the
        interpolation error has to sit well below the solver's.  The
        radial stencil is mirrored through r = 0 using even parity.
        """
        if field not in self.index:
            raise ArgumentError(f"field {field!r} not stored (have {self.names})")
        if max(dt_order, dr_order) > MAX_INTERP_ORDER or min(dt_order, dr_order) < 0:
            raise CapabilityError(f"derivative order ({dt_order}, {dr_order}) not supported")
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        t, r = np.broadcast_arrays(t, r)
        shape = t.shape
        tf = t.reshape(-1)
        rf = np.abs(r.reshape(-1))
        self._check_range(tf, rf)
        out = np.empty(tf.shape)
        chunk = 20000
        for a in range(0, tf.size, chunk):
            out[a:a + chunk] = self._interp_flat(tf[a:a + chunk], rf[a:a + chunk],
                                                 self.index[field], dt_order, dr_order)
        if dr_order % 2 == 1:
            out = out * np.sign(r.reshape(-1) + 0.0 * tf)  # odd derivative of even field
            out[r.reshape(-1) == 0] = 0.0
        return out.reshape(shape) if shape else float(out[0])

    def _check_range(self, t, r):
        tol = 1e-9 * max(1.0, abs(self.t_last))
        bad = (t < self.t_first - tol) | (t > self.t_last + tol)
        if bad.any():
            i = int(np.argmax(bad))
            raise RangeError(f"t={t[i]:.6g} (r={r[i]:.6g}) outside stored range "
                             f"[{self.t_first:.6g}, {self.t_last:.6g}]")
        bad = r > self.grid.r_max + 1e-12
        if bad.any():
            i = int(np.argmax(bad))
            raise RangeError(f"r={r[i]:.6g} beyond r_max={self.grid.r_max:.6g}")

    def _interp_flat(self, t, r, fi, a, b):
        K = self._count
        wt, wr = min(STENCIL, K), STENCIL
        if K < max(4, a + 1):
            raise RangeError(f"history has {K} states, stencil needs {max(4, a + 1)}")
        n = self.grid.n
        xt = (t - self.t_first) / self.dt
        kt = np.clip(np.floor(xt).astype(int) - wt // 2 + 1, 0, K - wt)
        Wt = lagrange_weights(xt - kt, wt, a) / self.dt ** a
        xr = r / self.grid.dr
        ir = np.minimum(np.floor(xr).astype(int) - wr // 2 + 1, n - wr)
        Wr = lagrange_weights(xr - ir, wr, b) / self.grid.dr ** b
        idx_r = np.abs(ir[:, None] + np.arange(wr)[None, :])  # mirror through the axis
        idx_t = kt[:, None] + np.arange(wt)[None, :]
        F = self._buf[idx_t[:, :, None], fi, idx_r[:, None, :]]
        return np.einsum("nij,ni,nj->n", F, Wt, Wr)

    def partial(self, base: str, a: int, b: int, t, r):
        """d_t^a d_r^b of ``base``, using a stored time derivative when there is one."""
        dname = self.derivative_names.get(base)
        if a >= 1 and dname is not None and self.has(dname):
            return self.interp(t, r, dname, a - 1, b)
        return self.interp(t, r, base, a, b)

    # -- checkpoints ---------------------------------------------------
    def header(self) -> dict:
        return {"n": self.grid.n, "dr": self.grid.dr, "dt": self.dt, "t0": self.t_first,
                "count": self._count, "r_max": self.grid.r_max, "fields": list(self.names)}

    def save(self, path, fmt: str = "binary"):
        """Write header (n, dr, dt, t0, count) then row-major arrays per state."""
        h = self.header()
        if fmt == "binary":
            with open(path, "wb") as fh:
                fh.write(b"WKGH1\n")
                fh.write((json.dumps(h) + "\n").encode())
                np.array([h["n"], h["dr"], h["dt"], h["t0"], h["count"]], dtype="<f8").tofile(fh)
                np.ascontiguousarray(self.data, dtype="<f8").tofile(fh)
        elif fmt == "csv":
            with open(path, "w") as fh:
                fh.write("n,dr,dt,t0,count,r_max\n")
                fh.write(",".join(repr(float(h[k])) if k not in ("n", "count") else str(h[k])
                                  for k in ("n", "dr", "dt", "t0", "count", "r_max")) + "\n")
                fh.write(",".join(self.names) + "\n")
                for k in range(self._count):
                    for j, name in enumerate(self.names):
                        fh.write(f"{k},{name}," + ",".join(f"{x:.17g}" for x in self.data[k, j]) + "\n")
        else:
            raise ArgumentError(f"unknown checkpoint format {fmt!r}")

    @classmethod
    def load(cls, path) -> "History":
        with open(path, "rb") as fh:
            magic = fh.read(6)
            if magic == b"WKGH1\n":
                h = json.loads(fh.readline().decode())
                np.fromfile(fh, dtype="<f8", count=5)
                raw = np.fromfile(fh, dtype="<f8")
                data = raw.reshape(h["count"], len(h["fields"]), h["n"])
                names = h["fields"]
                grid = RadialGrid(h["r_max"], h["n"])
                t0, dt = h["t0"], h["dt"]
            else:
                fh.seek(0)
                lines = fh.read().decode().splitlines()
                vals = lines[1].split(",")
                n, count = int(vals[0]), int(vals[4])
                dt, t0, r_max = float(vals[2]), float(vals[3]), float(vals[5])
                names = lines[2].split(",")
                data = np.empty((count, len(names), n))
                for line in lines[3:]:
                    parts = line.split(",")
                    data[int(parts[0]), names.index(parts[1])] = np.array(parts[2:], dtype=float)
                grid = RadialGrid(r_max, n)
        hist = cls(grid, names, t0=t0, dt=dt, capacity=max(len(data), 8))
        hist._buf[: len(data)] = data
        hist._count = len(data)
        return hist
