"""Quadrature helpers: fixed-order Gauss-Legendre and adaptive refinement."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_legendre_segment(a: float, b: float, order: int = 16):
    """Nodes and weights for one Gauss-Legendre rule on ``[a, b]``."""
    x, w = _gl_nodes(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def fixed_quad(fn, a: float, b: float, order: int = 16) -> float:
    x, w = gauss_legendre_segment(a, b, order)
    return float(np.dot(w, fn(x)))


def adaptive_quad(fn, a: float, b: float, abs_tol: float = 1e-10, order: int = 16,
                  max_depth: int = 30) -> float:
    """Adaptive composite Gauss-Legendre by interval bisection.

    Refines until the two-half estimate changes by less than the
    tolerance share of the interval.
    """
    if b <= a:
        return 0.0

    def recurse(lo, hi, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        left = fixed_quad(fn, lo, mid, order)
        right = fixed_quad(fn, mid, hi, order)
        if depth >= max_depth or abs(left + right - whole) <= tol:
            return left + right
        return recurse(lo, mid, left, tol / 2, depth + 1) + recurse(
            mid, hi, right, tol / 2, depth + 1
        )

    return recurse(a, b, fixed_quad(fn, a, b, order), abs_tol, 0)
