"""Piecewise-polynomial DG fields: projection, evaluation, nested transfer and error norms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from siacmra.basis import ModalBasis, build_basis, child_transfer_matrices
from siacmra.mesh import HierarchicalMesh
from siacmra.quadrature import reference_rule

ERROR_POINTS = 6
GAUSS_WIDTH = 0.058
TANH_WIDTH = 0.018

Function = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ElementQuadrature:
    """Reference rule mapped onto every element of a mesh."""

    xi: np.ndarray  # (nq, dim)
    x: np.ndarray  # (ne, nq, dim)
    w: np.ndarray  # (ne, nq) physical weights


def element_quadrature(mesh: HierarchicalMesh, n: int) -> ElementQuadrature:
    xi, wr = reference_rule(mesh.kind, n)
    ne = mesh.n_elements
    idx = np.repeat(np.arange(ne)[:, None], len(wr), axis=1)
    xib = np.broadcast_to(xi, (ne,) + xi.shape)
    x = mesh.to_physical(idx, xib)
    w = wr * np.abs(mesh.jacobian_det(idx, xib))
    return ElementQuadrature(xi, x, w)


def _scale(mesh: HierarchicalMesh, basis: ModalBasis) -> np.ndarray:
    return np.sqrt(basis.ref_measure / np.abs(mesh.areas))


@dataclass(eq=False)
class DGField:
    """Modal coefficients over the scaled basis phi_k(xi) * sqrt(|ref| / |tau|)."""

    mesh: HierarchicalMesh
    p: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.array(self.coeffs, dtype=float)
        expected = (self.mesh.n_elements, self.basis.n_modes)
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient array has shape {self.coeffs.shape}, expected {expected}")

    @property
    def basis(self) -> ModalBasis:
        return build_basis(self.mesh.kind, self.p)

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    @property
    def dof(self) -> int:
        return self.coeffs.size

    @cached_property
    def scale(self) -> np.ndarray:
        return _scale(self.mesh, self.basis)

    def with_coeffs(self, coeffs: np.ndarray) -> DGField:
        return DGField(self.mesh, self.p, coeffs)

    def eval_ref(self, idx: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Values at reference points ``xi`` (..., dim) of elements ``idx`` (...)."""
        idx = np.asarray(idx)
        phi = self.basis.eval(xi)
        return self.scale[idx] * np.einsum("...k,...k->...", phi, self.coeffs[idx])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return evaluate(self, x)

    def norms(self) -> np.ndarray:
        """Per-element L2 norms."""
        return np.sqrt(np.maximum(_quadratic(self, self.coeffs), 0.0))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.norms() ** 2)))

    def dump(self) -> str:
        lines = [f"{self.mesh.hash} {self.p} {self.mesh.n_elements}"]
        lines += [" ".join("%.17g" % c for c in row) for row in self.coeffs]
        return "\n".join(lines) + "\n"


def gram_matrices(mesh: HierarchicalMesh, p: int) -> np.ndarray | None:
    """Physical Gram matrices of the scaled basis, or None when every element is affine."""
    if np.all(mesh.affine):
        return None
    basis = build_basis(mesh.kind, p)
    q = element_quadrature(mesh, p + 2)
    phi = basis.eval(q.xi)
    s2 = _scale(mesh, basis) ** 2
    return np.einsum("qi,eq,qj->eij", phi, q.w, phi) * s2[:, None, None]


def _quadratic(field: DGField, c: np.ndarray) -> np.ndarray:
    gram = gram_matrices(field.mesh, field.p)
    if gram is None:
        return np.sum(c * c, axis=1)
    return np.einsum("ei,eij,ej->e", c, gram, c)


def project(f: Function, mesh: HierarchicalMesh, p: int, n_quad: int | None = None) -> DGField:
    """L2 projection of ``f`` (called with points of shape (..., dim))."""
    basis = build_basis(mesh.kind, p)
    q = element_quadrature(mesh, p + 4 if n_quad is None else n_quad)
    vals = np.asarray(f(q.x), dtype=float)
    if vals.shape != q.w.shape:
        vals = np.broadcast_to(vals, q.w.shape)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argwhere(~np.isfinite(vals))[0, 0])
        raise FloatingPointError(f"non-finite function value in element {bad}")
    phi = basis.eval(q.xi)
    rhs = np.einsum("eq,qk->ek", vals * q.w, phi) * _scale(mesh, basis)[:, None]
    gram = gram_matrices(mesh, p)
    if gram is not None:
        rhs = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return DGField(mesh, p, rhs)


def evaluate(field: DGField, x: np.ndarray) -> np.ndarray:
    """Point values; points on faces take the value of the lowest-index element."""
    mesh = field.mesh
    pts, shape = mesh._as_points(x)
    pts = mesh.wrap(pts)
    idx = np.atleast_1d(mesh.locate(pts))
    vals = field.eval_ref(idx, mesh.to_reference(idx, pts))
    return float(vals[0]) if shape == () else vals.reshape(shape)


def transfer_to_children(field: DGField, refined: HierarchicalMesh) -> DGField:
    """Exact representation of ``field`` on a mesh produced from it by refinement."""
    if refined.source is not field.mesh or refined.parent is None:
        raise ValueError("target mesh was not refined from the field's mesh")
    t = child_transfer_matrices(field.mesh.kind, field.p)
    parent = refined.parent
    slot = refined.child_slot
    a = field.coeffs[parent]
    ratio = np.sqrt(np.abs(refined.areas) / np.abs(field.mesh.areas[parent]))
    out = a.copy()
    split = slot >= 0
    out[split] = ratio[split, None] * np.einsum("eij,ej->ei", t[slot[split]], a[split])
    return DGField(refined, field.p, out)


def transfer_through(field: DGField, mesh: HierarchicalMesh) -> DGField:
    """Transfer across a chain of refinements ending at ``mesh``."""
    chain = []
    m = mesh
    while m is not field.mesh:
        if m.source is None:
            raise ValueError("mesh is not a refinement descendant of the field's mesh")
        chain.append(m)
        m = m.source
    for m in reversed(chain):
        field = transfer_to_children(field, m)
    return field


def _pointwise_error(field: DGField, f_exact: Function, n: int):
    q = element_quadrature(field.mesh, n)
    idx = np.repeat(np.arange(field.mesh.n_elements)[:, None], len(q.xi), axis=1)
    uh = field.eval_ref(idx, np.broadcast_to(q.xi, idx.shape + q.xi.shape[-1:]))
    ex = np.broadcast_to(np.asarray(f_exact(q.x), dtype=float), uh.shape)
    return uh - ex, q.w


def elementwise_l2_error(field: DGField, f_exact: Function, n: int = ERROR_POINTS) -> np.ndarray:
    err, w = _pointwise_error(field, f_exact, n)
    return np.sqrt(np.sum(w * err * err, axis=1))


def l2_error(field: DGField, f_exact: Function, n: int = ERROR_POINTS) -> float:
    return float(np.sqrt(np.sum(elementwise_l2_error(field, f_exact, n) ** 2)))


def linf_error(field: DGField, f_exact: Function, n: int = ERROR_POINTS) -> float:
    err, _ = _pointwise_error(field, f_exact, n)
    return float(np.max(np.abs(err)))


def steady_residual(prev: DGField, nxt: DGField) -> float:
    if prev.coeffs.shape != nxt.coeffs.shape:
        raise ValueError("fields have different shapes")
    return float(np.sum(np.abs(nxt.coeffs - prev.coeffs)))


def write_field(path: str | Path, field: DGField) -> None:
    Path(path).write_text(field.dump())


def read_field(path: str | Path, mesh: HierarchicalMesh) -> DGField:
    lines = Path(path).read_text().splitlines()
    mesh_hash, p, ne = lines[0].split()
    if mesh_hash != mesh.hash or int(ne) != mesh.n_elements:
        raise ValueError("field dump does not belong to this mesh")
    coeffs = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + int(ne)]])
    return DGField(mesh, int(p), coeffs)


# --- test functions on [0, 1]^d; 2D versions are tensor products -----------------------


def _tensor(g: Callable[[np.ndarray], np.ndarray]) -> Function:
    def f(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return g(x)
        return np.prod(g(x), axis=-1)

    return f


def sine(k: float = 1.0) -> Function:
    return _tensor(lambda x: np.sin(2.0 * np.pi * k * x))


def gaussian(k: float = 1.0, c: float = GAUSS_WIDTH) -> Function:
    return _tensor(lambda x: np.exp(-((x - 0.5) ** 2) / (2.0 * (k * c) ** 2)))


def double_tanh(k: float = 1.0, w: float = TANH_WIDTH) -> Function:
    return _tensor(lambda x: 0.5 * (np.tanh((x - 0.35) / (k * w)) - np.tanh((x - 0.65) / (k * w))))


TEST_FUNCTIONS = {"sine": sine, "gauss": gaussian, "tanh": double_tanh}
