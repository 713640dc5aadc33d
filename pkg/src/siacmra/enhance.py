"""Enhancement: filter a coarse field and project the result onto the uniformly refined mesh."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from siacmra.basis import build_basis, decompose_1d, decompose_2d
from siacmra.field import DGField, element_quadrature, gram_matrices, l2_error, linf_error, transfer_to_children
from siacmra.mesh import HierarchicalMesh, refine_all
from siacmra.quadrature import gauss_legendre
from siacmra.siac import DEFAULT_THETA, Adaptive, MaxEdge, ScalingStrategy, SiacKernel, build_kernel, filter_points

BOUNDARY_POLICIES = ("periodic", "skip-overlap")


@dataclass(frozen=True)
class EnhanceConfig:
    ell: int = 1
    r: int | None = None
    scaling: ScalingStrategy = dc_field(default_factory=MaxEdge)
    theta: float = DEFAULT_THETA
    boundary: str = "periodic"
    n_quad: int | None = None

    def __post_init__(self):
        if self.boundary not in BOUNDARY_POLICIES:
            raise ValueError(f"unknown boundary policy {self.boundary!r}")

    def kernel(self, p: int) -> SiacKernel:
        return build_kernel(p, self.ell, self.r)

    def filter_axes(self, mesh: HierarchicalMesh) -> tuple[bool, ...]:
        if self.boundary == "periodic":
            return (True,) * mesh.dim
        if any(mesh.periodic):
            raise ValueError("skip-overlap policy needs a non-periodic mesh")
        return (False,) * mesh.dim


def skipped_elements(field: DGField, config: EnhanceConfig) -> np.ndarray:
    """Elements whose kernel footprint would reach the boundary (skip-overlap policy only)."""
    mesh = field.mesh
    if config.boundary != "skip-overlap":
        return np.zeros(mesh.n_elements, dtype=bool)
    config.filter_axes(mesh)
    kernel = config.kernel(field.p)
    q = element_quadrature(refine_all(mesh), _projection_points(field.p, kernel, mesh.dim, config))
    child_nodes = q.x.reshape(mesh.n_elements, -1, mesh.dim)
    h = config.scaling.values(mesh, child_nodes.reshape(-1, mesh.dim), (False,) * mesh.dim)
    h_max = h.reshape(mesh.n_elements, -1).max(axis=1)
    reach = kernel.half_width * h_max
    if mesh.dim == 1:
        d = np.ones(1)
    else:
        d = np.abs([np.cos(config.theta), np.sin(config.theta)])
    ev = mesh.element_vertices
    lo = ev.min(axis=1) - reach[:, None] * d
    hi = ev.max(axis=1) + reach[:, None] * d
    tol = 1e-12 * float(np.max(mesh.period))
    return np.any(lo < mesh.box[:, 0] - tol, axis=1) | np.any(hi > mesh.box[:, 1] + tol, axis=1)


def _projection_points(p: int, kernel: SiacKernel, dim: int, config: EnhanceConfig) -> int:
    if config.n_quad is not None:
        return config.n_quad
    return p + 3 if dim == 2 else (2 * p + kernel.ell + 2) // 2 + 1


def _project_onto(fine: HierarchicalMesh, sel: np.ndarray, p: int, xi, w, vals) -> np.ndarray:
    """L2 projection onto elements ``sel`` of ``fine`` from values at given quadrature nodes."""
    basis = build_basis(fine.kind, p)
    scale = np.sqrt(basis.ref_measure / np.abs(fine.areas[sel]))
    coeffs = np.einsum("eq,eqk->ek", vals * w, basis.eval(xi)) * scale[:, None]
    gram = gram_matrices(fine, p)
    if gram is not None:
        coeffs = np.linalg.solve(gram[sel], coeffs[..., None])[..., 0]
    return coeffs


def _subdivided_nodes_1d(field: DGField, fine: HierarchicalMesh, kernel: SiacKernel, config: EnhanceConfig, axes):
    """Gauss nodes in each child, split where the filtered field has a breakpoint."""
    mesh = field.mesh
    ev = fine.element_vertices[:, :, 0]
    a, b = ev[:, 0], ev[:, 1]
    mid = 0.5 * (a + b)
    h = config.scaling.values(mesh, mid, axes)
    bp = mesh.breakpoints
    if axes[0]:
        length = mesh.period[0]
        ext = np.concatenate([bp[:-1] - 2 * length, bp[:-1] - length, bp[:-1], bp[:-1] + length, bp + 2 * length])
    else:
        ext = bp
    breaks = [a[:, None], b[:, None]]
    for kt in kernel.knots:
        # filtered field breaks where x + kt H meets an element boundary
        lo = np.searchsorted(ext, a + kt * h, side="right")
        hi = np.searchsorted(ext, b + kt * h, side="left")
        width = int(np.max(hi - lo, initial=0))
        if width == 0:
            continue
        take = lo[:, None] + np.arange(width)
        pts = ext[np.minimum(take, len(ext) - 1)] - kt * h[:, None]
        breaks.append(np.where(take < hi[:, None], pts, b[:, None]))
    brk = np.sort(np.clip(np.concatenate(breaks, axis=1), a[:, None], b[:, None]), axis=1)
    n = _projection_points(field.p, kernel, 1, config)
    if isinstance(config.scaling, Adaptive):
        n += 2
    gx, gw = gauss_legendre(n)
    s0, s1 = brk[:, :-1], brk[:, 1:]
    x = (s0[..., None] + 0.5 * (s1 - s0)[..., None] * (gx + 1.0)).reshape(len(a), -1)
    w = (0.5 * (s1 - s0)[..., None] * gw).reshape(len(a), -1)
    xi = ((2.0 * x - (a + b)[:, None]) / (b - a)[:, None])[..., None]
    return x[..., None], xi, w


def enhance(field: DGField, config: EnhanceConfig | None = None) -> DGField:
    """P^{n+1}(K_H * u_h) on refine_all(field.mesh)."""
    config = EnhanceConfig() if config is None else config
    mesh = field.mesh
    axes = config.filter_axes(mesh)
    kernel = config.kernel(field.p)
    fine = refine_all(mesh)
    skip = skipped_elements(field, config)
    keep_child = ~skip[fine.parent]
    if mesh.dim == 1:
        x, xi, w = _subdivided_nodes_1d(field, fine, kernel, config, axes)
    else:
        q = element_quadrature(fine, _projection_points(field.p, kernel, 2, config))
        x, w = q.x, q.w
        xi = np.broadcast_to(q.xi, x.shape)
    coeffs = transfer_to_children(field, fine).coeffs
    if np.any(keep_child):
        sel = np.flatnonzero(keep_child)
        pts = x[sel].reshape(-1, mesh.dim)
        vals = filter_points(field, kernel, pts, config.scaling, config.theta, periodic=axes)
        vals = vals.reshape(len(sel), -1)
        coeffs[sel] = _project_onto(fine, sel, field.p, xi[sel], w[sel], vals)
    return DGField(fine, field.p, coeffs)


def details_from_enhanced(children: np.ndarray) -> np.ndarray | tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Detail coefficients of enhanced children grouped per parent.

    ``children`` has shape (..., 2, p+1) for intervals or (..., 4, (p+1)^2) for quads.
    Returns d (1D) or (d_alpha, d_beta, d_gamma) (2D).
    """
    children = np.asarray(children, dtype=float)
    if children.shape[-2] == 2:
        return decompose_1d(children[..., 0, :], children[..., 1, :])[1]
    if children.shape[-2] == 4:
        return decompose_2d(children)[1:]
    raise ValueError("details need two (interval) or four (quadrilateral) children")


def detail_norms(enhanced: DGField) -> np.ndarray:
    """Per coarse element: Euclidean norm of all detail coefficients of the enhanced children."""
    fine = enhanced.mesh
    if fine.kind == "triangle":
        raise ValueError("multiwavelet details are not defined on triangles")
    nc = 2 if fine.dim == 1 else 4
    if np.any(fine.child_slot < 0):
        raise ValueError("enhanced field must live on a uniformly refined mesh")
    groups = enhanced.coeffs.reshape(-1, nc, enhanced.n_modes)
    d = details_from_enhanced(groups)
    if nc == 2:
        return np.linalg.norm(d, axis=-1)
    return np.sqrt(sum(np.sum(x * x, axis=-1) for x in d))


@dataclass
class StepRecord:
    step: int
    n_elements: int
    dof: int
    ppw: float
    l2: float
    linf: float
    field: DGField


def points_per_wavelength(field: DGField, k: float) -> float:
    return field.mesh.n_elements ** (1.0 / field.mesh.dim) * (field.p + 1) / k


def enhance_iterated(
    field: DGField,
    config: EnhanceConfig,
    n_steps: int,
    exact: Callable[[np.ndarray], np.ndarray],
    k: float = 1.0,
) -> list[StepRecord]:
    if n_steps < 0:
        raise ValueError("number of steps must be nonnegative")
    out = []
    for step in range(n_steps + 1):
        if step:
            field = enhance(field, config)
        out.append(
            StepRecord(
                step,
                field.mesh.n_elements,
                field.dof,
                points_per_wavelength(field, k),
                l2_error(field, exact),
                linf_error(field, exact),
                field,
            )
        )
    return out
