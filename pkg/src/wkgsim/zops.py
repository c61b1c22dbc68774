"""Differential operators with polynomial coefficients in (t, r).

A word over the letters ``t`` (d_t), ``r`` (d_r) and ``L`` (the radial
boost r d_t + t d_r) is expanded into sum_{a,b} c_ab(t, r) d_t^a d_r^b.
Words are read as compositions: ``"tL"`` means d_t applied after L.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np

from .errors import ArgumentError

LETTERS = ("t", "r", "L")


def _padd(p, q):
    out = dict(p)
    for k, c in q.items():
        out[k] = out.get(k, 0) + c
        if out[k] == 0:
            del out[k]
    return out


def _pdt(p):
    return {(i - 1, j): c * i for (i, j), c in p.items() if i > 0}


def _pdr(p):
    return {(i, j - 1): c * j for (i, j), c in p.items() if j > 0}


def _pmul(p, di, dj):
    return {(i + di, j + dj): c for (i, j), c in p.items()}


def _apply(op, letter):
    out = {}

    def add(key, poly):
        if poly:
            out[key] = _padd(out.get(key, {}), poly)
            if not out[key]:
                del out[key]

    for (a, b), poly in op.items():
        if letter == "t":
            add((a, b), _pdt(poly))
            add((a + 1, b), poly)
        elif letter == "r":
            add((a, b), _pdr(poly))
            add((a, b + 1), poly)
        elif letter == "L":
            # r d_t + t d_r
            add((a, b), _pmul(_pdt(poly), 0, 1))
            add((a + 1, b), _pmul(poly, 0, 1))
            add((a, b), _pmul(_pdr(poly), 1, 0))
            add((a, b + 1), _pmul(poly, 1, 0))
        else:
            raise ArgumentError(f"unknown letter {letter!r} in word (use t, r, L)")
    return out


@lru_cache(maxsize=None)
def word_operator(word: str):
    """Expansion {(a, b): {(i, j): coeff}} of the operator named by ``word``."""
    op = {(0, 0): {(0, 0): 1}}
    for letter in reversed(word):
        op = _apply(op, letter)
    return op


def operator_order(word: str) -> int:
    return max((a + b for a, b in word_operator(word)), default=0)


def evaluate(word: str, partials: dict, t, r):
    """Apply a word given precomputed partials {(a, b): array} at points (t, r)."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.zeros(np.broadcast(t, r).shape)
    for (a, b), poly in word_operator(word).items():
        coef = sum(c * t ** i * r ** j for (i, j), c in poly.items())
        out = out + coef * partials[(a, b)]
    return out


def all_words(max_len: int, max_boosts: int | None = None):
    """All words of length <= max_len with at most max_boosts letters L."""
    words = []
    for n in range(max_len + 1):
        for w in product(LETTERS, repeat=n):
            if max_boosts is None or w.count("L") <= max_boosts:
                words.append("".join(w))
    return words


def canonical_words(max_order: int, max_boosts: int | None = None):
    """Words d_t^a d_r^b L^j with a + b + j <= max_order and j <= max_boosts."""
    out = []
    kmax = max_order if max_boosts is None else min(max_boosts, max_order)
    for total in range(max_order + 1):
        for j in range(min(total, kmax) + 1):
            for a in range(total - j + 1):
                b = total - j - a
                out.append("t" * a + "r" * b + "L" * j)
    return out


def partial_orders(words):
    """Set of (a, b) partials needed to evaluate the given words."""
    need = set()
    for w in words:
        need.update(word_operator(w).keys())
    return need
