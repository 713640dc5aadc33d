"""SIAC kernels built from central B-splines, and point filtering in 1D and along lines in 2D."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from siacmra.field import DGField
from siacmra.mesh import HierarchicalMesh
from siacmra.quadrature import gauss_legendre

DEFAULT_THETA = np.pi / 4
_CHUNK_ENTRIES = 2_000_000


def bspline(ell: int, t: np.ndarray) -> np.ndarray:
    """Central B-spline of order ``ell`` (degree ell - 1), supported on [-ell/2, ell/2]."""
    if ell < 1:
        raise ValueError(f"spline order must be >= 1, got {ell}")
    t = np.asarray(t, dtype=float)
    if ell == 1:
        return ((t >= -0.5) & (t < 0.5)).astype(float)
    m = ell - 1
    return (((m + 1) / 2 + t) * bspline(m, t + 0.5) + ((m + 1) / 2 - t) * bspline(m, t - 0.5)) / m


def _spline_moment(ell: int, shift: float, m: int) -> float:
    """Integral of t^m B^ell(t - shift), exact by Gauss quadrature on each knot span."""
    x, w = gauss_legendre((m + ell) // 2 + 1)
    total = 0.0
    for j in range(ell):
        a = shift - ell / 2 + j
        t = a + 0.5 * (x + 1.0)
        total += 0.5 * float(np.sum(w * t**m * bspline(ell, t - shift)))
    return total


@dataclass(frozen=True)
class SiacKernel:
    """K(t) = sum_g c_g B^ell(t - x_g) with r + 1 splines centred at x_g = g - r/2, in units of H."""

    ell: int
    r: int
    coeffs: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.r + 1, dtype=float) - self.r / 2

    @property
    def half_width(self) -> float:
        return (self.r + self.ell) / 2

    @property
    def knots(self) -> np.ndarray:
        """Breakpoints of the piecewise polynomial kernel, in units of H."""
        return -self.half_width + np.arange(self.r + self.ell + 1, dtype=float)

    def __call__(self, t: np.ndarray, h: float | np.ndarray = 1.0) -> np.ndarray:
        return kernel_eval(self, t, h)


@lru_cache(maxsize=None)
def _coefficients(r: int, ell: int) -> tuple[float, ...]:
    gammas = np.arange(r + 1) - r / 2
    a = np.array([[_spline_moment(ell, g, m) for g in gammas] for m in range(r + 1)])
    rhs = np.zeros(r + 1)
    rhs[0] = 1.0
    try:
        c = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular kernel moment system") from exc
    if np.max(np.abs(a @ c - rhs)) > 1e-12:
        raise ValueError("kernel moment system solved inaccurately")
    c = 0.5 * (c + c[::-1])
    return tuple(c)


def kernel_coefficients(r: int, ell: int = 1) -> np.ndarray:
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    if ell < 1:
        raise ValueError(f"spline order must be >= 1, got {ell}")
    return np.array(_coefficients(int(r), int(ell)))


def build_kernel(p: int, ell: int = 1, r: int | None = None) -> SiacKernel:
    """Default kernel: r + 1 = 2p + 1 splines of order ell."""
    r = 2 * p if r is None else r
    return SiacKernel(ell, r, kernel_coefficients(r, ell))


def kernel_eval(kernel: SiacKernel, t: np.ndarray, h: float | np.ndarray = 1.0) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("kernel scaling must be positive")
    u = np.asarray(t, dtype=float) / h
    out = np.zeros(np.broadcast(u, h).shape)
    for c, g in zip(kernel.coeffs, kernel.offsets):
        out = out + c * bspline(kernel.ell, u - g)
    return out / h


def kernel_moments(kernel: SiacKernel, m_max: int, h: float = 1.0) -> np.ndarray:
    """Numeric integrals of K_H(t) t^m for m = 0..m_max."""
    x, w = gauss_legendre((m_max + kernel.ell) // 2 + 2)
    kn = kernel.knots * h
    out = np.zeros(m_max + 1)
    for a, b in zip(kn[:-1], kn[1:]):
        t = a + 0.5 * (b - a) * (x + 1.0)
        k = kernel_eval(kernel, t, h)
        for m in range(m_max + 1):
            out[m] += 0.5 * (b - a) * np.sum(w * k * t**m)
    return out


# --- scaling strategies ------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    h: float

    def values(self, mesh: HierarchicalMesh, x: np.ndarray, periodic=None) -> np.ndarray:
        if self.h <= 0:
            raise ValueError("kernel scaling must be positive")
        return np.full(_n_points(mesh, x), float(self.h))


@dataclass(frozen=True)
class MaxEdge:
    factor: float = 1.0

    def values(self, mesh: HierarchicalMesh, x: np.ndarray, periodic=None) -> np.ndarray:
        return np.full(_n_points(mesh, x), self.factor * float(np.max(mesh.max_edge)))


@dataclass(frozen=True)
class MinEdge:
    factor: float = 1.0

    def values(self, mesh: HierarchicalMesh, x: np.ndarray, periodic=None) -> np.ndarray:
        return np.full(_n_points(mesh, x), self.factor * float(np.min(mesh.min_edge)))


@dataclass(frozen=True)
class Adaptive:
    factor: float = 1.0

    def values(self, mesh: HierarchicalMesh, x: np.ndarray, periodic=None) -> np.ndarray:
        pts, _ = mesh._as_points(x)
        return self.factor * np.atleast_1d(mesh.scaling_at_point(pts, periodic=periodic))


ScalingStrategy = Constant | MaxEdge | MinEdge | Adaptive


def _n_points(mesh: HierarchicalMesh, x: np.ndarray) -> int:
    return len(mesh._as_points(x)[0])


def scaling_value(strategy: ScalingStrategy, mesh: HierarchicalMesh, x: np.ndarray, periodic=None):
    pts, shape = mesh._as_points(x)
    h = strategy.values(mesh, pts, periodic)
    return float(h[0]) if shape == () else h.reshape(shape)


# --- 1D filtering ----------------------------------------------------------------------------


def _extended_breakpoints(mesh: HierarchicalMesh, periodic: bool):
    bp = mesh.breakpoints
    if not periodic:
        return bp, 0
    length = mesh.period[0]
    n = mesh.n_elements
    ext = np.concatenate([bp[:-1] - length, bp[:-1], bp[:-1] + length, [bp[-1] + length]])
    return ext, n


def filter_points_1d(
    field: DGField,
    kernel: SiacKernel,
    x: np.ndarray,
    h: float | np.ndarray,
    *,
    periodic: bool | None = None,
) -> np.ndarray:
    """u*(x) = int K_H(t) u_h(x + t) dt, exact for each point of ``x``."""
    mesh = field.mesh
    if mesh.dim != 1:
        raise ValueError("1D filtering needs an interval mesh")
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.ravel()
    h = np.broadcast_to(np.asarray(h, dtype=float), shape).ravel()
    if np.any(h <= 0):
        raise ValueError("kernel scaling must be positive")
    periodic = mesh.periodic[0] if periodic is None else bool(periodic)
    length = mesh.period[0]
    half = kernel.half_width * h
    if periodic:
        if np.any(2.0 * half >= length):
            raise ValueError("kernel support is wider than the periodic domain")
        x = mesh.wrap(x[:, None], (True,))[:, 0]
    else:
        from siacmra.errors import DomainExitError

        lo, hi = mesh.box[0]
        tol = 1e-12 * max(1.0, length)
        if np.any(x - half < lo - tol) or np.any(x + half > hi + tol):
            raise DomainExitError("kernel footprint leaves the non-periodic domain")
    ext, offset = _extended_breakpoints(mesh, periodic)
    n_gauss = (field.p + kernel.ell + 1) // 2 + 1
    gx, gw = gauss_legendre(n_gauss)
    knots = kernel.knots
    out = np.empty(len(x))
    i_lo = np.searchsorted(ext, x - half, side="right")
    i_hi = np.searchsorted(ext, x + half, side="left")
    width = int(np.max(i_hi - i_lo, initial=0))
    per_point = (len(knots) + width) * n_gauss
    chunk = max(1, _CHUNK_ENTRIES // max(1, per_point))
    n_el = mesh.n_elements
    for s in range(0, len(x), chunk):
        sl = slice(s, s + chunk)
        xs, hs, hw = x[sl], h[sl], half[sl]
        take = i_lo[sl, None] + np.arange(width)
        inner = np.where(take < i_hi[sl, None], ext[np.minimum(take, len(ext) - 1)] - xs[:, None], hw[:, None])
        brk = np.sort(np.concatenate([knots[None, :] * hs[:, None], inner], axis=1), axis=1)
        a, b = brk[:, :-1], brk[:, 1:]
        mid = xs[:, None] + 0.5 * (a + b)
        j = np.clip(np.searchsorted(ext, mid, side="right") - 1, 0, len(ext) - 2)
        elem = (j - offset) % n_el if periodic else j
        x0, x1 = ext[j], ext[j + 1]
        t = a[..., None] + 0.5 * (b - a)[..., None] * (gx + 1.0)
        pos = xs[:, None, None] + t
        xi = (2.0 * pos - (x0 + x1)[..., None]) / (x1 - x0)[..., None]
        vals = field.eval_ref(np.broadcast_to(elem[..., None], xi.shape), xi[..., None])
        kv = kernel_eval(kernel, t, hs[:, None, None])
        out[sl] = np.sum(0.5 * (b - a)[..., None] * gw * kv * vals, axis=(1, 2))
    return out.reshape(shape)


def filter_point_1d(field: DGField, kernel: SiacKernel, x: float, h: float, **kw) -> float:
    return float(filter_points_1d(field, kernel, np.array([x]), h, **kw)[0])


# --- 2D line filtering ------------------------------------------------------------------------


def filter_points_line(
    field: DGField,
    kernel: SiacKernel,
    x: np.ndarray,
    h: float | np.ndarray,
    theta: float = DEFAULT_THETA,
    *,
    periodic: Sequence[bool] | None = None,
    extra_points: int = 0,
) -> np.ndarray:
    """u*(x) = int K_H(t) u_h(x + t (cos theta, sin theta)) dt for points x of shape (..., 2)."""
    mesh = field.mesh
    if mesh.dim != 2:
        raise ValueError("line filtering needs a 2D mesh")
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    h = np.broadcast_to(np.asarray(h, dtype=float), shape).ravel()
    if np.any(h <= 0):
        raise ValueError("kernel scaling must be positive")
    axes = mesh.periodic if periodic is None else tuple(periodic)
    half = kernel.half_width * h
    d = np.array([np.cos(theta), np.sin(theta)])
    n_gauss = (field.p + kernel.ell + 1) // 2 + 2 + extra_points
    gx, gw = gauss_legendre(n_gauss)
    knots = kernel.knots
    out = np.empty(len(pts))
    chunk = max(1, _CHUNK_ENTRIES // (64 * n_gauss))
    for s in range(0, len(pts), chunk):
        sl = slice(s, s + chunk)
        xs, hs, hw = pts[sl], h[sl], half[sl]
        m = len(xs)
        tr = mesh.trace_lines(xs, theta, -hw, hw, periodic=axes)
        brk = np.sort(np.concatenate([knots[None, :] * hs[:, None], tr.t1[:, :-1]], axis=1), axis=1)
        a, b = brk[:, :-1], brk[:, 1:]
        mid = 0.5 * (a + b)
        # owning trace segment: first one ending after the midpoint (row-offset search)
        width = tr.t1.shape[1]
        stride = 2.0 * float(np.max(hw)) + 1.0
        base = np.arange(m)[:, None] * stride + hw[:, None]
        seg = np.searchsorted((tr.t1 + base).ravel(), (mid + base).ravel(), side="right").reshape(mid.shape)
        seg = np.clip(seg - np.arange(m)[:, None] * width, 0, tr.count[:, None] - 1)
        ridx = np.arange(m)[:, None]
        elem = tr.owner[ridx, seg]
        shift = tr.shift[ridx, seg]
        t = a[..., None] + 0.5 * (b - a)[..., None] * (gx + 1.0)
        pos = xs[:, None, None, :] + t[..., None] * d - shift[:, :, None, :]
        el = np.broadcast_to(elem[..., None], t.shape)
        xi = mesh.to_reference(el, pos)
        vals = field.eval_ref(el, xi)
        kv = kernel_eval(kernel, t, hs[:, None, None])
        out[sl] = np.sum(0.5 * (b - a)[..., None] * gw * kv * vals, axis=(1, 2))
    return out.reshape(shape)


def filter_point_line(field: DGField, kernel: SiacKernel, x, h: float, theta: float = DEFAULT_THETA, **kw) -> float:
    return float(filter_points_line(field, kernel, np.asarray(x, dtype=float)[None], h, theta, **kw)[0])


def filter_points(
    field: DGField,
    kernel: SiacKernel,
    x: np.ndarray,
    strategy: ScalingStrategy,
    theta: float = DEFAULT_THETA,
    *,
    periodic=None,
) -> np.ndarray:
    """Filter at points, with the kernel scaling sampled at each point."""
    mesh = field.mesh
    pts, shape = mesh._as_points(x)
    if mesh.dim == 1:
        per = mesh.periodic[0] if periodic is None else bool(np.all(periodic))
        h = strategy.values(mesh, pts, (per,))
        return filter_points_1d(field, kernel, pts[:, 0], h, periodic=per).reshape(shape)
    axes = mesh.periodic if periodic is None else tuple(periodic)
    h = strategy.values(mesh, pts, axes)
    return filter_points_line(field, kernel, pts, h, theta, periodic=axes).reshape(shape)
