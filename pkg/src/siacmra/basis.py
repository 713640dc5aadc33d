"""Orthonormal modal bases, Alpert multiwavelets and quadrature mirror filters.

Reference elements are [-1, 1], [-1, 1]^2 and the unit right triangle
(0, 0), (1, 0), (0, 1). Quadrilateral modes are stored with the x index
running fastest, ``k = ky * (p + 1) + kx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial import legendre as npleg

from siacmra.quadrature import gauss_legendre, reference_rule

MAX_DEGREE = 3
KINDS = ("interval", "quadrilateral", "triangle")
REFERENCE_MEASURE = {"interval": 2.0, "quadrilateral": 4.0, "triangle": 0.5}


def _check_degree(p: int) -> None:
    if not (isinstance(p, (int, np.integer)) and 0 <= p <= MAX_DEGREE):
        raise ValueError(f"polynomial degree must be in 0..{MAX_DEGREE}, got {p!r}")


def legendre_orthonormal(p: int, x: np.ndarray) -> np.ndarray:
    """phi_k(x) = sqrt((2k+1)/2) P_k(x) for k = 0..p; shape x.shape + (p+1,)."""
    x = np.asarray(x, dtype=float)
    v = npleg.legvander(x, p)
    return v * np.sqrt((2.0 * np.arange(p + 1) + 1.0) / 2.0)


def legendre_orthonormal_deriv(p: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape + (p + 1,))
    for k in range(1, p + 1):
        c = np.zeros(k + 1)
        c[k] = 1.0
        out[..., k] = npleg.legval(x, npleg.legder(c)) * np.sqrt((2 * k + 1) / 2.0)
    return out


def _triangle_monomials(p: int) -> list[tuple[int, int]]:
    return [(d - b, b) for d in range(p + 1) for b in range(d + 1)]


@lru_cache(maxsize=None)
def _triangle_coeffs(p: int) -> np.ndarray:
    # Gram-Schmidt on graded monomials == inverse transpose Cholesky factor.
    pts, wts = reference_rule("triangle", p + 2)
    mono = _triangle_monomials(p)
    v = np.stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in mono], axis=1)
    gram = v.T @ (wts[:, None] * v)
    lower = np.linalg.cholesky(gram)
    coeffs = np.linalg.inv(lower).T
    coeffs.setflags(write=False)
    return coeffs


@dataclass(frozen=True)
class ModalBasis:
    """Orthonormal polynomial basis on a reference element."""

    kind: str
    p: int
    n_modes: int = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown element kind {self.kind!r}")
        _check_degree(self.p)
        n = {
            "interval": self.p + 1,
            "quadrilateral": (self.p + 1) ** 2,
            "triangle": (self.p + 1) * (self.p + 2) // 2,
        }[self.kind]
        object.__setattr__(self, "n_modes", n)

    @property
    def ref_measure(self) -> float:
        return REFERENCE_MEASURE[self.kind]

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    def eval(self, xi: np.ndarray) -> np.ndarray:
        """Mode values at reference points ``xi`` of shape (..., dim)."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "interval":
            x = xi[..., 0] if xi.ndim and xi.shape[-1] == 1 else xi
            return legendre_orthonormal(self.p, x)
        if self.kind == "quadrilateral":
            px = legendre_orthonormal(self.p, xi[..., 0])
            py = legendre_orthonormal(self.p, xi[..., 1])
            return (py[..., :, None] * px[..., None, :]).reshape(xi.shape[:-1] + (self.n_modes,))
        mono = _triangle_monomials(self.p)
        v = np.stack([xi[..., 0] ** a * xi[..., 1] ** b for a, b in mono], axis=-1)
        return v @ _triangle_coeffs(self.p)

    def grad(self, xi: np.ndarray) -> np.ndarray:
        """Reference gradients, shape (..., n_modes, dim)."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "interval":
            x = xi[..., 0] if xi.ndim and xi.shape[-1] == 1 else xi
            return legendre_orthonormal_deriv(self.p, x)[..., None]
        if self.kind == "quadrilateral":
            px = legendre_orthonormal(self.p, xi[..., 0])
            py = legendre_orthonormal(self.p, xi[..., 1])
            dx = legendre_orthonormal_deriv(self.p, xi[..., 0])
            dy = legendre_orthonormal_deriv(self.p, xi[..., 1])
            shape = xi.shape[:-1] + (self.n_modes,)
            gx = (py[..., :, None] * dx[..., None, :]).reshape(shape)
            gy = (dy[..., :, None] * px[..., None, :]).reshape(shape)
            return np.stack([gx, gy], axis=-1)
        mono = _triangle_monomials(self.p)
        x, y = xi[..., 0], xi[..., 1]

        def power(base, e):
            return base**e if e > 0 else np.zeros_like(base)

        dx = np.stack([a * power(x, a - 1) * y**b for a, b in mono], axis=-1)
        dy = np.stack([b * x**a * power(y, b - 1) for a, b in mono], axis=-1)
        c = _triangle_coeffs(self.p)
        return np.stack([dx @ c, dy @ c], axis=-1)

    def highest_mode(self) -> int:
        """Index of the single maximal mode: (p, p) on quads, degree p otherwise."""
        return self.n_modes - 1

    def mode_degrees(self) -> np.ndarray:
        if self.kind == "interval":
            return np.arange(self.p + 1)
        if self.kind == "quadrilateral":
            k = np.arange(self.n_modes)
            return k % (self.p + 1) + k // (self.p + 1)
        return np.array([a + b for a, b in _triangle_monomials(self.p)])


@lru_cache(maxsize=None)
def build_basis(kind: str, p: int) -> ModalBasis:
    return ModalBasis(kind, p)


# --- refinement maps on reference elements -------------------------------------------

_TRI_CHILD_MAPS = (
    (np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([0.0, 0.0])),
    (np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([0.5, 0.0])),
    (np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([0.0, 0.5])),
    (np.array([[-0.5, 0.0], [0.0, -0.5]]), np.array([0.5, 0.5])),
)


def child_maps(kind: str) -> list[tuple[np.ndarray, np.ndarray]]:
    """Affine maps xi_parent = A @ xi_child + b for each child, canonical order."""
    if kind == "interval":
        return [(np.array([[0.5]]), np.array([-0.5])), (np.array([[0.5]]), np.array([0.5]))]
    if kind == "quadrilateral":
        half = 0.5 * np.eye(2)
        # SW, SE, NW, NE
        return [(half, np.array(b)) for b in ([-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5])]
    if kind == "triangle":
        return list(_TRI_CHILD_MAPS)
    raise ValueError(f"unknown element kind {kind!r}")


@lru_cache(maxsize=None)
def child_transfer_matrices(kind: str, p: int) -> np.ndarray:
    """T[c] maps reference-polynomial coefficients of a parent to those of child c.

    Shape (n_children, n_modes, n_modes). Physical child coefficients are
    ``sqrt(|child| / |parent|) * T[c] @ a`` for orthonormally scaled bases.
    """
    basis = build_basis(kind, p)
    pts, wts = reference_rule(kind, p + 2)
    phi_c = basis.eval(pts)
    mats = []
    for a_mat, b_vec in child_maps(kind):
        phi_p = basis.eval(pts @ a_mat.T + b_vec)
        mats.append(phi_c.T @ (wts[:, None] * phi_p))
    out = np.stack(mats)
    out.setflags(write=False)
    return out


# --- multiwavelets -------------------------------------------------------------------


def _fine_scaling(p: int, x: np.ndarray, side: int) -> np.ndarray:
    """phi^1_{r,side}(x) = sqrt(2) phi_r(2(x+1) - 2 side - 1), zero off its half."""
    x = np.asarray(x, dtype=float)
    vals = np.sqrt(2.0) * legendre_orthonormal(p, 2.0 * (x + 1.0) - 2 * side - 1.0)
    inside = (x < 0.0) if side == 0 else (x >= 0.0)
    return vals * inside[..., None]


def _half_rule(p: int, side: int, extra: int = 0):
    n = p + 2 + extra
    x, w = gauss_legendre(n)
    if side == 0:
        return 0.5 * (x - 1.0), 0.5 * w
    return 0.5 * (x + 1.0), 0.5 * w


def _null_space(a: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``a`` acting on R^dim."""
    if a.shape[0] == 0:
        return np.eye(dim)
    _, sv, vt = np.linalg.svd(a)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    return vt[rank:].T


def _leading_sign(p: int, g_right: np.ndarray) -> float:
    # monomial coefficients of the (0, 1] piece
    xs = np.linspace(0.1, 0.9, p + 1)
    vals = _fine_scaling(p, xs, 1) @ g_right
    mono = np.linalg.solve(np.vander(xs, p + 1, increasing=True), vals)
    scale = np.max(np.abs(mono))
    for c in mono[::-1]:
        if abs(c) > 1e-9 * scale:
            return 1.0 if c > 0 else -1.0
    return 1.0


@dataclass(frozen=True)
class MRATransform:
    """Quadrature mirror filters for degree p; each matrix is indexed (mode, child mode)."""

    p: int
    h0: np.ndarray
    h1: np.ndarray
    g0: np.ndarray
    g1: np.ndarray

    def block(self) -> np.ndarray:
        return np.block([[self.h0, self.h1], [self.g0, self.g1]])


@lru_cache(maxsize=None)
def build_qmf(p: int) -> MRATransform:
    """Scaling filters by Gauss quadrature, wavelet filters by Alpert's Gram-Schmidt.

    Each multiwavelet psi_k is the unit vector of W^p_0 orthogonal to
    psi_{k+1..p} with vanishing moments <x^m, psi_k> = 0 for m <= k + p.
    """
    _check_degree(p)
    n = p + 1
    h = np.zeros((n, 2 * n))
    for side in (0, 1):
        x, w = _half_rule(p, side)
        coarse = legendre_orthonormal(p, x)
        fine = _fine_scaling(p, x, side)
        h[:, side * n:(side + 1) * n] = coarse.T @ (w[:, None] * fine)

    complement = _null_space(h, 2 * n).T  # rows span W^p_0 in fine coordinates
    moments = np.zeros((p, 2 * n))
    for side in (0, 1):
        x, w = _half_rule(p, side, extra=p)
        fine = _fine_scaling(p, x, side)
        for j in range(p):
            moments[j, side * n:(side + 1) * n] = (w * x ** (p + 1 + j)) @ fine
    m_w = moments @ complement.T  # functionals in W coordinates

    psi = np.zeros((n, n))
    for k in range(p, -1, -1):
        space = _null_space(m_w[:k], n)
        done = psi[k + 1:]
        if done.shape[0]:
            space = space - done.T @ (done @ space)
        u, sv, _ = np.linalg.svd(space, full_matrices=False)
        psi[k] = u[:, 0]
    g = psi @ complement
    for k in range(n):
        g[k] *= _leading_sign(p, g[k, n:])
    qmf = MRATransform(p, h[:, :n].copy(), h[:, n:].copy(), g[:, :n].copy(), g[:, n:].copy())
    for mat in (qmf.h0, qmf.h1, qmf.g0, qmf.g1):
        mat.setflags(write=False)
    return qmf


@dataclass(frozen=True)
class MultiwaveletBasis:
    p: int

    def eval(self, x: np.ndarray) -> np.ndarray:
        """psi_k(x) on [-1, 1], shape x.shape + (p+1,); zero outside."""
        qmf = build_qmf(self.p)
        x = np.asarray(x, dtype=float)
        left = _fine_scaling(self.p, x, 0) @ qmf.g0.T
        right = _fine_scaling(self.p, x, 1) @ qmf.g1.T
        inside = (np.abs(x) <= 1.0)[..., None]
        return (left + right) * inside


def build_multiwavelets(p: int) -> MultiwaveletBasis:
    _check_degree(p)
    return MultiwaveletBasis(p)


# --- transforms ----------------------------------------------------------------------


def decompose_1d(s_left: np.ndarray, s_right: np.ndarray, p: int | None = None):
    """Two sibling coefficient vectors -> parent (scaling, detail). Batched on leading axes."""
    s_left = np.asarray(s_left, dtype=float)
    s_right = np.asarray(s_right, dtype=float)
    q = build_qmf(s_left.shape[-1] - 1 if p is None else p)
    s = s_left @ q.h0.T + s_right @ q.h1.T
    d = s_left @ q.g0.T + s_right @ q.g1.T
    return s, d


def reconstruct_1d(s: np.ndarray, d: np.ndarray, p: int | None = None):
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    q = build_qmf(s.shape[-1] - 1 if p is None else p)
    left = s @ q.h0 + d @ q.g0
    right = s @ q.h1 + d @ q.g1
    return left, right


_CHILD_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))  # (jx, jy) for SW, SE, NW, NE


def _degree_from_modes(n_modes: int) -> int:
    p = int(round(np.sqrt(n_modes))) - 1
    if (p + 1) ** 2 != n_modes:
        raise ValueError(f"{n_modes} is not a tensor mode count")
    return p


def decompose_2d(children: np.ndarray):
    """Children (..., 4, (p+1)^2) in SW, SE, NW, NE order -> (s, d_alpha, d_beta, d_gamma).

    alpha carries the wavelet in x, beta in y, gamma in both.
    """
    children = np.asarray(children, dtype=float)
    if children.shape[-2] != 4:
        raise ValueError("expected four children")
    p = _degree_from_modes(children.shape[-1])
    q = build_qmf(p)
    hs, gs = (q.h0, q.h1), (q.g0, q.g1)
    c = children.reshape(children.shape[:-1] + (p + 1, p + 1))
    s = np.zeros(children.shape[:-2] + (p + 1, p + 1))
    da, db, dg = np.zeros_like(s), np.zeros_like(s), np.zeros_like(s)
    for idx, (jx, jy) in enumerate(_CHILD_OFFSETS):
        blk = c[..., idx, :, :]
        s += hs[jy] @ blk @ hs[jx].T
        da += hs[jy] @ blk @ gs[jx].T
        db += gs[jy] @ blk @ hs[jx].T
        dg += gs[jy] @ blk @ gs[jx].T
    shape = children.shape[:-2] + ((p + 1) ** 2,)
    return s.reshape(shape), da.reshape(shape), db.reshape(shape), dg.reshape(shape)


def reconstruct_2d(s, d_alpha, d_beta, d_gamma) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    p = _degree_from_modes(s.shape[-1])
    q = build_qmf(p)
    hs, gs = (q.h0, q.h1), (q.g0, q.g1)
    sq = (p + 1, p + 1)
    s_, a_, b_, g_ = (np.asarray(v, dtype=float).reshape(s.shape[:-1] + sq) for v in (s, d_alpha, d_beta, d_gamma))
    out = []
    for jx, jy in _CHILD_OFFSETS:
        blk = (
            hs[jy].T @ s_ @ hs[jx]
            + hs[jy].T @ a_ @ gs[jx]
            + gs[jy].T @ b_ @ hs[jx]
            + gs[jy].T @ g_ @ gs[jx]
        )
        out.append(blk.reshape(s.shape[:-1] + ((p + 1) ** 2,)))
    return np.stack(out, axis=-2)


def write_qmf_csv(path: str | Path, qmf: MRATransform) -> None:
    """One line per matrix row: name,row,v0,v1,... in %.17g."""
    lines = []
    for name in ("h0", "h1", "g0", "g1"):
        mat = getattr(qmf, name)
        for i, row in enumerate(mat):
            lines.append(",".join([name.upper(), str(i)] + ["%.17g" % v for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")
