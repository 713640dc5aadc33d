"""Per-element error indicators, effectivity and the refine-only mesh adaptation loop."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Protocol

import numpy as np

from siacmra.basis import decompose_1d, decompose_2d
from siacmra.enhance import EnhanceConfig, _subdivided_nodes_1d, detail_norms, enhance, skipped_elements
from siacmra.errors import UnsupportedIndicatorError
from siacmra.field import ERROR_POINTS, DGField, element_quadrature, elementwise_l2_error, transfer_through, transfer_to_children
from siacmra.mesh import HierarchicalMesh, refine_marked
from siacmra.siac import filter_points

INDICATORS = ("star", "rec", "sd", "ssed", "w")
INDICATOR_NAMES = {
    "star": "filtered difference",
    "rec": "reconstruction difference",
    "sd": "spectral decay",
    "ssed": "small-scale energy density",
    "w": "multiwavelet detail",
}
NEEDS_ENHANCE = ("rec", "w")


def _check_kind(kind: str) -> None:
    if kind not in INDICATORS:
        raise ValueError(f"unknown indicator {kind!r}; expected one of {INDICATORS}")


def eta_star(field: DGField, config: EnhanceConfig) -> np.ndarray:
    """L2 norm over each element of the filtered field minus the field itself."""
    mesh = field.mesh
    axes = config.filter_axes(mesh)
    kernel = config.kernel(field.p)
    skip = skipped_elements(field, config)
    out = np.zeros(mesh.n_elements)
    sel = np.flatnonzero(~skip)
    if sel.size == 0:
        return out
    if mesh.dim == 1:
        # split each element where the filtered field has a breakpoint
        x, xi, w = _subdivided_nodes_1d(field, mesh, kernel, config, axes)
    else:
        q = element_quadrature(mesh, ERROR_POINTS)
        x, w = q.x, q.w
        xi = np.broadcast_to(q.xi, x.shape)
    x, xi, w = x[sel], xi[sel], w[sel]
    filtered = filter_points(field, kernel, x.reshape(-1, mesh.dim), config.scaling, config.theta, periodic=axes)
    idx = np.broadcast_to(sel[:, None], w.shape)
    diff = filtered.reshape(w.shape) - field.eval_ref(idx, xi)
    out[sel] = np.sqrt(np.sum(w * diff * diff, axis=1))
    return out


def _grouped(enhanced: DGField, parent: DGField) -> np.ndarray:
    fine = enhanced.mesh
    nc = len(fine.parent) // parent.mesh.n_elements
    if fine.source is not parent.mesh or nc * parent.mesh.n_elements != fine.n_elements:
        raise ValueError("enhanced field must live on the uniform refinement of the field's mesh")
    return nc


def eta_rec(field: DGField, enhanced: DGField) -> np.ndarray:
    """L2 norm over each parent of the enhanced children minus the parent field."""
    _grouped(enhanced, field)
    diff = enhanced.coeffs - transfer_to_children(field, enhanced.mesh).coeffs
    sq = enhanced.with_coeffs(diff).norms() ** 2
    return np.sqrt(np.bincount(enhanced.mesh.parent, weights=sq, minlength=field.mesh.n_elements))


def _highest(field: DGField) -> np.ndarray:
    return np.abs(field.coeffs[:, field.basis.highest_mode()])


def eta_sd(field: DGField) -> np.ndarray:
    """Highest-mode norm relative to the element norm (0 where the field vanishes)."""
    if field.p == 0:
        raise UnsupportedIndicatorError("spectral decay needs p > 0")
    norm = field.norms()
    hi = _highest(field)
    return np.divide(hi, norm, out=np.zeros_like(hi), where=norm > 0)


def eta_ssed(field: DGField) -> np.ndarray:
    """Highest-mode norm per square root of element measure."""
    if field.p == 0:
        raise UnsupportedIndicatorError("small-scale energy density needs p > 0")
    return _highest(field) / np.sqrt(np.abs(field.mesh.areas))


def eta_w(enhanced: DGField) -> np.ndarray:
    """Root-sum-square of the multiwavelet details of the enhanced children."""
    if enhanced.mesh.kind == "triangle":
        raise UnsupportedIndicatorError("multiwavelet details are not defined on triangles")
    return detail_norms(enhanced)


def pythagorean_terms(field: DGField, enhanced: DGField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per element (|P^{n+1}u* - u_h|^2, |P^n u* - u_h|^2, eta_W^2) on affine elements."""
    nc = _grouped(enhanced, field)
    groups = enhanced.coeffs.reshape(-1, nc, enhanced.n_modes)
    if nc == 2:
        s, d = decompose_1d(groups[:, 0], groups[:, 1])
        w2 = np.sum(d * d, axis=-1)
    else:
        s, *ds = decompose_2d(groups)
        w2 = sum(np.sum(x * x, axis=-1) for x in ds)
    coarse = np.sum((s - field.coeffs) ** 2, axis=-1)
    return eta_rec(field, enhanced) ** 2, coarse, w2


def compute_indicator(field: DGField, kind: str, config: EnhanceConfig, enhanced: DGField | None = None) -> np.ndarray:
    _check_kind(kind)
    if kind == "sd":
        return eta_sd(field)
    if kind == "ssed":
        return eta_ssed(field)
    if kind == "star":
        return eta_star(field, config)
    if kind == "w" and field.mesh.kind == "triangle":
        raise UnsupportedIndicatorError("multiwavelet details are not defined on triangles")
    if enhanced is None:
        enhanced = enhance(field, config)
    return eta_rec(field, enhanced) if kind == "rec" else eta_w(enhanced)


def global_eta(eta_tau: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.asarray(eta_tau) ** 2)))


def effectivity(eta: float, e_h: float) -> float | None:
    """eta / e_h, or None when the discrete solution is exact."""
    if e_h < 0:
        raise ValueError("error must be nonnegative")
    if e_h == 0:
        return None
    return eta / e_h


def mark(eta_tau: np.ndarray, eta_tol: float) -> np.ndarray:
    return np.asarray(eta_tau) >= eta_tol


class Problem(Protocol):
    exact: Callable[[np.ndarray], np.ndarray] | None

    def solve(self, mesh: HierarchicalMesh, p: int, initial: DGField | None = None) -> DGField: ...


@dataclass
class AdaptIteration:
    iteration: int
    mesh: HierarchicalMesh
    field: DGField
    eta_tau: np.ndarray
    eta: float
    e_h: float | None
    marked: int

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def dof(self) -> int:
        return self.field.dof

    @property
    def ieff(self) -> float | None:
        return None if self.e_h is None else effectivity(self.eta, self.e_h)


@dataclass
class AdaptReport:
    indicator: str
    eta_tol: float
    iterations: list[AdaptIteration] = dc_field(default_factory=list)
    truncated: bool = False

    @property
    def final(self) -> AdaptIteration:
        return self.iterations[-1]


class AdaptError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


def adapt(
    problem: Problem,
    mesh0: HierarchicalMesh,
    p: int,
    indicator: str,
    eta_tol: float,
    max_iters: int,
    config: EnhanceConfig | None = None,
    on_iteration: Callable[[AdaptIteration], None] | None = None,
) -> tuple[HierarchicalMesh, DGField, AdaptReport]:
    """Solve, mark eta_tau >= eta_tol, refine with 2:1 closure, repeat from the transferred solution."""
    _check_kind(indicator)
    if max_iters < 0:
        raise ValueError("max_iters must be nonnegative")
    config = EnhanceConfig() if config is None else config
    report = AdaptReport(indicator, eta_tol)
    mesh = mesh0
    field = _solve(problem, mesh, p, None, 0)
    for it in range(max_iters + 1):
        eta_tau = compute_indicator(field, indicator, config)
        marks = mark(eta_tau, eta_tol)
        e_h = None
        if problem.exact is not None:
            e_h = float(np.sqrt(np.sum(elementwise_l2_error(field, problem.exact) ** 2)))
        entry = AdaptIteration(it, mesh, field, eta_tau, global_eta(eta_tau), e_h, int(marks.sum()))
        report.iterations.append(entry)
        if on_iteration is not None:
            on_iteration(entry)
        if not marks.any():
            break
        if it == max_iters:
            report.truncated = True
            break
        new_mesh = refine_marked(mesh, marks)
        initial = transfer_through(field, new_mesh)
        mesh = new_mesh
        field = _solve(problem, mesh, p, initial, it + 1)
    return mesh, field, report


def _solve(problem: Problem, mesh: HierarchicalMesh, p: int, initial: DGField | None, it: int) -> DGField:
    try:
        return problem.solve(mesh, p, initial)
    except (ArithmeticError, RuntimeError) as exc:
        raise AdaptError(str(exc), it) from exc
