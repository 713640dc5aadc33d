"""Model problems: steady forced viscous Burgers (1D RKDG) and Poisson (2D SIP-DG)."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, fields
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from siacmra.basis import build_basis, legendre_orthonormal, legendre_orthonormal_deriv
from siacmra.errors import ConvergenceError
from siacmra.field import DGField, element_quadrature, project
from siacmra.mesh import HierarchicalMesh
from siacmra.quadrature import gauss_legendre

# Carpenter-Kennedy five-stage fourth-order 2N-storage coefficients
RK4A = np.array(
    [
        0.0,
        -567301805773.0 / 1357537059087.0,
        -2404267990393.0 / 2016746695238.0,
        -3550918686646.0 / 2091501179385.0,
        -1275806237668.0 / 842570457699.0,
    ]
)
RK4B = np.array(
    [
        1432997174477.0 / 9575080441755.0,
        5161836677717.0 / 13612068292357.0,
        1720146321549.0 / 2090206949498.0,
        3134564353537.0 / 4481467310338.0,
        2277821191437.0 / 14882151754819.0,
    ]
)


@dataclass
class SolverConfig:
    """Solver settings; gamma None keeps each problem's own viscosity."""

    gamma: float | None = None
    cpen: float = 10.0
    cfl: float = 0.1
    tol: float = 1e-12
    max_steps: int = 10_000_000

    @classmethod
    def from_file(cls, path: str | Path) -> SolverConfig:
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_text(cls, text: str) -> SolverConfig:
        known = {f.name for f in fields(cls)}
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {n}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {n}: unknown key {key!r}")
            values[key] = int(float(val)) if key == "max_steps" else float(val)
        return cls(**values)


# --- Burgers ---------------------------------------------------------------------------------


@dataclass
class BurgersProblem:
    gamma: float
    initial: Callable[[np.ndarray], np.ndarray]
    forcing: Callable[[np.ndarray], np.ndarray] | None = None
    periodic: bool = True
    left: float = 0.0
    right: float = 0.0
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    domain: tuple[float, float] = (-1.0, 1.0)
    cfl: float = 0.1
    tol: float = 1e-12
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("viscosity must be positive")

    def solve(self, mesh: HierarchicalMesh, p: int, initial: DGField | None = None) -> DGField:
        if initial is None:
            initial = project(self.initial, mesh, p)
        return burgers_steady(self, mesh, p, initial)


def tanh_problem(gamma: float = 0.02, **kw) -> BurgersProblem:
    u = lambda x: -np.tanh(np.asarray(x)[..., 0] / (2.0 * gamma))
    return BurgersProblem(gamma, u, None, periodic=False, left=1.0, right=-1.0, exact=u, **kw)


def sine_problem(gamma: float = 0.5, **kw) -> BurgersProblem:
    u = lambda x: np.sin(2.0 * np.pi * np.asarray(x)[..., 0])

    def f(x):
        x = np.asarray(x)[..., 0]
        s, c = np.sin(2.0 * np.pi * x), np.cos(2.0 * np.pi * x)
        return 2.0 * np.pi * s * c + 4.0 * np.pi**2 * gamma * s

    return BurgersProblem(gamma, u, f, periodic=True, exact=u, **kw)


@njit(cache=True)
def _burgers_rhs(u, h, gamma, ends_l, ends_r, dmat, vq, dvq, wq, force, periodic, left, right, out, q):
    ne, nm = u.shape
    nq = wq.shape[0]
    # traces of u: ul = value at the element's left end, ur at the right end
    ul = np.empty(ne)
    ur = np.empty(ne)
    for e in range(ne):
        s = np.sqrt(2.0 / h[e])
        a = 0.0
        b = 0.0
        for k in range(nm):
            a += u[e, k] * ends_l[k]
            b += u[e, k] * ends_r[k]
        ul[e] = s * a
        ur[e] = s * b
    nf = ne + 1
    uhat = np.empty(nf)
    for f in range(nf):
        if f == 0:
            uhat[f] = 0.5 * (ur[ne - 1] + ul[0]) if periodic else left
        elif f == ne:
            uhat[f] = uhat[0] if periodic else right
        else:
            uhat[f] = 0.5 * (ur[f - 1] + ul[f])
    # auxiliary q = u_x
    for e in range(ne):
        s = np.sqrt(2.0 / h[e])
        for k in range(nm):
            vol = 0.0
            for m in range(nm):
                vol += dmat[k, m] * u[e, m]
            q[e, k] = s * (uhat[e + 1] * ends_r[k] - uhat[e] * ends_l[k]) - (2.0 / h[e]) * vol
    ql = np.empty(ne)
    qr = np.empty(ne)
    for e in range(ne):
        s = np.sqrt(2.0 / h[e])
        a = 0.0
        b = 0.0
        for k in range(nm):
            a += q[e, k] * ends_l[k]
            b += q[e, k] * ends_r[k]
        ql[e] = s * a
        qr[e] = s * b
    qhat = np.empty(nf)
    fhat = np.empty(nf)
    for f in range(nf):
        if f == 0 or f == ne:
            if periodic:
                a_l, a_r = ur[ne - 1], ul[0]
                qhat[f] = 0.5 * (qr[ne - 1] + ql[0])
            elif f == 0:
                a_l, a_r = left, ul[0]
                qhat[f] = ql[0]
            else:
                a_l, a_r = ur[ne - 1], right
                qhat[f] = qr[ne - 1]
        else:
            a_l, a_r = ur[f - 1], ul[f]
            qhat[f] = 0.5 * (qr[f - 1] + ql[f])
        lam = max(abs(a_l), abs(a_r))
        fhat[f] = 0.25 * (a_l * a_l + a_r * a_r) - 0.5 * lam * (a_r - a_l)
    for e in range(ne):
        s = np.sqrt(2.0 / h[e])
        # nodal values of u for the flux volume integral
        for k in range(nm):
            out[e, k] = force[e, k]
        for iq in range(nq):
            uq = 0.0
            for m in range(nm):
                uq += u[e, m] * vq[iq, m]
            uq *= s
            fq = 0.5 * uq * uq
            for k in range(nm):
                out[e, k] += s * wq[iq] * fq * dvq[iq, k]
        for k in range(nm):
            vol = 0.0
            for m in range(nm):
                vol += dmat[k, m] * q[e, m]
            out[e, k] += -s * (fhat[e + 1] * ends_r[k] - fhat[e] * ends_l[k])
            out[e, k] += gamma * (s * (qhat[e + 1] * ends_r[k] - qhat[e] * ends_l[k]) - (2.0 / h[e]) * vol)


@njit(cache=True)
def _burgers_march(u, h, gamma, ends_l, ends_r, dmat, vq, dvq, wq, force, periodic, left, right, dt, tol, max_steps, rk_a, rk_b):
    ne, nm = u.shape
    res = np.zeros_like(u)
    rhs = np.zeros_like(u)
    q = np.zeros_like(u)
    prev = u.copy()
    change = np.inf
    step = 0
    while step < max_steps:
        for k in range(ne):
            for m in range(nm):
                prev[k, m] = u[k, m]
        for stage in range(5):
            _burgers_rhs(u, h, gamma, ends_l, ends_r, dmat, vq, dvq, wq, force, periodic, left, right, rhs, q)
            for k in range(ne):
                for m in range(nm):
                    res[k, m] = rk_a[stage] * res[k, m] + dt * rhs[k, m]
                    u[k, m] += rk_b[stage] * res[k, m]
        step += 1
        change = 0.0
        for k in range(ne):
            for m in range(nm):
                change += abs(u[k, m] - prev[k, m])
        if not np.isfinite(change):
            return step, change
        if change < tol:
            break
    return step, change


@dataclass
class SteadyStats:
    steps: int = 0
    residual: float = np.inf
    dt: float = 0.0


def burgers_time_step(problem: BurgersProblem, mesh: HierarchicalMesh, p: int, umax: float) -> float:
    h = np.min(mesh.areas)
    k = (p + 1) ** 2
    return problem.cfl * min(h * h / (problem.gamma * k * k), h / ((umax + 1e-12) * k))


def burgers_steady(problem: BurgersProblem, mesh: HierarchicalMesh, p: int, initial: DGField, stats: SteadyStats | None = None) -> DGField:
    """March the RKDG semi-discretisation until the l1 change per step falls below the tolerance."""
    if mesh.dim != 1:
        raise ValueError("Burgers solver needs an interval mesh")
    if initial.mesh is not mesh or initial.p != p:
        raise ValueError("initial field does not match mesh and degree")
    if problem.periodic != mesh.periodic[0]:
        raise ValueError("mesh periodicity does not match the problem")
    # march in left-to-right element order so neighbours are adjacent
    order = np.argsort(mesh.element_vertices[:, 0, 0])
    h = np.ascontiguousarray(np.abs(mesh.areas)[order])
    ends_l = legendre_orthonormal(p, np.array([-1.0]))[0]
    ends_r = legendre_orthonormal(p, np.array([1.0]))[0]
    xq, wq = gauss_legendre(p + 2)
    vq = legendre_orthonormal(p, xq)
    dvq = legendre_orthonormal_deriv(p, xq)
    dmat = dvq.T @ (wq[:, None] * vq)  # dmat[k, m] = int P_k' P_m
    force = np.zeros((mesh.n_elements, p + 1))
    if problem.forcing is not None:
        force = project(problem.forcing, mesh, p).coeffs[order]
    u = np.ascontiguousarray(initial.coeffs[order])
    nodal = np.sqrt(2.0 / h)[:, None] * (u @ vq.T)
    umax = max(float(np.max(np.abs(nodal))), abs(problem.left), abs(problem.right))
    dt = burgers_time_step(problem, mesh, p, umax)
    steps, change = _burgers_march(
        u, h, problem.gamma, ends_l, ends_r, dmat, vq, dvq, np.ascontiguousarray(wq), np.ascontiguousarray(force),
        problem.periodic, problem.left, problem.right, dt, problem.tol, problem.max_steps, RK4A, RK4B,
    )
    out = np.empty_like(u)
    out[order] = u
    u = out
    if stats is not None:
        stats.steps, stats.residual, stats.dt = steps, change, dt
    if not np.isfinite(change):
        bad = int(np.argwhere(~np.isfinite(u))[0, 0])
        raise ConvergenceError(f"non-finite solution in element {bad}", change)
    if change >= problem.tol:
        raise ConvergenceError(f"no steady state after {steps} steps", change)
    return DGField(mesh, p, u)


# --- Poisson ------------------------------------------------------------------------------------


@dataclass
class PoissonProblem:
    """div(grad u) = f on [0, 1]^2 with u = g on the boundary."""

    forcing: Callable[[np.ndarray], np.ndarray]
    boundary: Callable[[np.ndarray], np.ndarray]
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    cpen: float = 10.0
    rtol: float = 1e-12
    stats: dict = dc_field(default_factory=dict)

    def solve(self, mesh: HierarchicalMesh, p: int, initial: DGField | None = None) -> DGField:
        return poisson_sip(self, mesh, p)


def poisson_sine_problem(**kw) -> PoissonProblem:
    u = lambda x: np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])
    f = lambda x: -8.0 * np.pi**2 * u(x)
    return PoissonProblem(f, u, u, **kw)


def poisson_gauss_problem(**kw) -> PoissonProblem:
    def r(x):
        return np.hypot(x[..., 0] - 0.5, x[..., 1] - 0.5)

    u = lambda x: np.exp(-100.0 * r(x))

    def f(x):
        rr = r(x)
        with np.errstate(divide="ignore"):
            return (1.0e4 - 100.0 / rr) * np.exp(-100.0 * rr)

    return PoissonProblem(f, u, u, **kw)


def poisson_zero_problem(**kw) -> PoissonProblem:
    zero = lambda x: np.zeros(np.shape(x)[:-1])
    return PoissonProblem(zero, zero, zero, **kw)


def _physical_basis(mesh: HierarchicalMesh, p: int, idx: np.ndarray, x: np.ndarray):
    """Values (n, Np) and physical gradients (n, Np, 2) of elements idx at points x."""
    basis = build_basis(mesh.kind, p)
    xi = mesh.to_reference(idx, x)
    scale = np.sqrt(basis.ref_measure / np.abs(mesh.areas[idx]))
    phi = basis.eval(xi) * scale[:, None]
    jac = mesh.jacobian(idx, xi)
    jinv_t = np.linalg.inv(jac).swapaxes(-1, -2)
    grad = np.einsum("nij,nkj->nki", jinv_t, basis.grad(xi)) * scale[:, None, None]
    return phi, grad


def assemble_sip(problem: PoissonProblem, mesh: HierarchicalMesh, p: int):
    """Sparse SIP matrix and right-hand side for -div(grad u) = -f."""
    if mesh.kind != "quadrilateral":
        raise ValueError("SIP solver needs a quadrilateral mesh")
    basis = build_basis(mesh.kind, p)
    nm = basis.n_modes
    ne = mesh.n_elements
    rows, cols, vals = [], [], []
    rhs = np.zeros((ne, nm))

    q = element_quadrature(mesh, p + 2)
    nq = len(q.xi)
    idx = np.repeat(np.arange(ne), nq)
    phi, grad = _physical_basis(mesh, p, idx, q.x.reshape(-1, 2))
    phi = phi.reshape(ne, nq, nm)
    grad = grad.reshape(ne, nq, nm, 2)
    kvol = np.einsum("eq,eqid,eqjd->eij", q.w, grad, grad)
    qf = element_quadrature(mesh, p + 4)
    fq = np.asarray(problem.forcing(qf.x), dtype=float)
    phif = basis.eval(qf.xi) * np.sqrt(basis.ref_measure / np.abs(mesh.areas))[:, None, None]
    rhs -= np.einsum("eq,eqk->ek", qf.w * fq, phif)
    base = np.arange(ne)[:, None] * nm + np.arange(nm)
    rows.append(np.repeat(base, nm, axis=1).ravel())
    cols.append(np.tile(base, (1, nm)).ravel())
    vals.append(kvol.ravel())

    faces = mesh.faces
    gx, gw = gauss_legendre(p + 2)
    s = 0.5 * (gx + 1.0)
    p0, p1 = faces["p0"], faces["p1"]
    length = np.linalg.norm(p1 - p0, axis=1)
    tangent = (p1 - p0) / length[:, None]
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
    sigma = problem.cpen * (p + 1) ** 2 / length
    nfq = len(gx)
    pts = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    wts = 0.5 * length[:, None] * gw[None, :]
    fa, fb = faces["a"], faces["b"]
    flat_a = np.repeat(fa, nfq)
    phi_a, grad_a = _physical_basis(mesh, p, flat_a, pts.reshape(-1, 2))
    phi_a = phi_a.reshape(-1, nfq, nm)
    dn_a = np.einsum("fqkd,fd->fqk", grad_a.reshape(-1, nfq, nm, 2), normal)

    inner = fb >= 0
    if np.any(inner):
        ia = np.flatnonzero(inner)
        eb = fb[ia]
        pb = pts[ia] + faces["shift_b"][ia][:, None, :]
        phi_b, grad_b = _physical_basis(mesh, p, np.repeat(eb, nfq), pb.reshape(-1, 2))
        phi_b = phi_b.reshape(-1, nfq, nm)
        dn_b = np.einsum("fqkd,fd->fqk", grad_b.reshape(-1, nfq, nm, 2), normal[ia])
        w = wts[ia]
        sg = sigma[ia][:, None]
        pa, da = phi_a[ia], dn_a[ia]
        # jump [v] = v_a - v_b, average {dv/dn} = (dn_a + dn_b) / 2
        sides = ((pa, da, fa[ia], 1.0), (phi_b, dn_b, eb, -1.0))
        for pi, di, ei, si in sides:
            for pj, dj, ej, sj in sides:
                blk = (
                    -0.5 * np.einsum("fq,fqi,fqj->fij", w, si * pi, dj)
                    - 0.5 * np.einsum("fq,fqi,fqj->fij", w, di, sj * pj)
                    + np.einsum("fq,fqi,fqj->fij", w * sg, si * pi, sj * pj)
                )
                r_ = ei[:, None] * nm + np.arange(nm)
                c_ = ej[:, None] * nm + np.arange(nm)
                rows.append(np.repeat(r_, nm, axis=1).ravel())
                cols.append(np.tile(c_, (1, nm)).ravel())
                vals.append(blk.ravel())

    bnd = np.flatnonzero(~inner)
    if bnd.size:
        w = wts[bnd]
        pa, da = phi_a[bnd], dn_a[bnd]
        sg = sigma[bnd][:, None]
        blk = (
            -np.einsum("fq,fqi,fqj->fij", w, pa, da)
            - np.einsum("fq,fqi,fqj->fij", w, da, pa)
            + np.einsum("fq,fqi,fqj->fij", w * sg, pa, pa)
        )
        ea = fa[bnd]
        r_ = ea[:, None] * nm + np.arange(nm)
        rows.append(np.repeat(r_, nm, axis=1).ravel())
        cols.append(np.tile(r_, (1, nm)).ravel())
        vals.append(blk.ravel())
        g = np.asarray(problem.boundary(pts[bnd]), dtype=float)
        contrib = np.einsum("fq,fqk->fk", w * g, sg[:, :, None] * pa - da)
        np.add.at(rhs, ea, contrib)

    n = ne * nm
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    mat.sum_duplicates()
    return mat, rhs.ravel()


def _block_jacobi(mat: sp.csr_matrix, nm: int) -> spla.LinearOperator:
    n = mat.shape[0]
    ne = n // nm
    blocks = np.zeros((ne, nm, nm))
    coo = mat.tocoo()
    same = (coo.row // nm) == (coo.col // nm)
    blocks[coo.row[same] // nm, coo.row[same] % nm, coo.col[same] % nm] = coo.data[same]
    inv = np.linalg.inv(blocks)
    return spla.LinearOperator((n, n), matvec=lambda v: np.einsum("eij,ej->ei", inv, v.reshape(ne, nm)).ravel())


def poisson_sip(problem: PoissonProblem, mesh: HierarchicalMesh, p: int) -> DGField:
    mat, rhs = assemble_sip(problem, mesh, p)
    nm = build_basis(mesh.kind, p).n_modes
    if not np.any(rhs):
        return DGField(mesh, p, np.zeros((mesh.n_elements, nm)))
    maxiter = int(50 * np.sqrt(rhs.size)) + 50
    it = [0]

    def count(_):
        it[0] += 1

    sol, info = spla.cg(mat, rhs, rtol=problem.rtol, atol=0.0, maxiter=maxiter, M=_block_jacobi(mat, nm), callback=count)
    residual = float(np.linalg.norm(mat @ sol - rhs) / np.linalg.norm(rhs))
    problem.stats.update(iterations=it[0], residual=residual)
    if info != 0:
        raise ConvergenceError(f"CG did not converge in {maxiter} iterations", residual)
    return DGField(mesh, p, sol.reshape(mesh.n_elements, nm))
