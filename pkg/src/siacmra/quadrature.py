"""Gauss rules on the reference interval, square and triangle."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1] (exact to degree 2n-1)."""
    if n < 1:
        raise ValueError(f"need at least one node, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_on(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=None)
def square_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor rule on [-1, 1]^2; points ordered with x fastest."""
    x, w = gauss_legendre(n)
    xx, yy = np.meshgrid(x, x)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    wts = np.outer(w, w).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def triangle_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) rule on the unit right triangle.

    With n points per direction the rule integrates total degree 2n - 2 exactly.
    """
    x, w = gauss_legendre(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    wuu, wvv = np.meshgrid(wu, wu, indexing="ij")
    xi = uu * (1.0 - vv)
    eta = vv
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    wts = (wuu * wvv * (1.0 - vv)).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def reference_rule(kind: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    if kind == "interval":
        x, w = gauss_legendre(n)
        return x[:, None], w
    if kind == "quadrilateral":
        return square_rule(n)
    if kind == "triangle":
        return triangle_rule(n)
    raise ValueError(f"unknown element kind {kind!r}")
