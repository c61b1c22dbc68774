"""Small fitting helpers shared by the diagnostics."""
from __future__ import annotations

import numpy as np


def power_fit(x, y):
    """Least-squares fit log y = a + b log x over positive finite samples.

    Returns (b, exp(a)); (nan, nan) with fewer than three usable samples.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 3:
        return np.nan, np.nan
    b, a = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(b), float(np.exp(a))


def loglog_slope(x, y) -> float:
    return power_fit(x, y)[0]


def running_max(a, axis=0):
    return np.maximum.accumulate(np.asarray(a, float), axis=axis)


def local_peaks(y):
    """Indices of strict interior local maxima of |y|."""
    a = np.abs(np.asarray(y, float))
    return np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:])) + 1
