"""Hierarchical 1D/2D meshes: construction, refinement, point location and line tracing.

Vertices of a quadrilateral are stored counterclockwise starting at the
corner mapped from reference (-1, -1); on axis-aligned meshes this is the
south-west corner. Refinement keeps parent vertices and orders children
SW, SE, NW, NE (quads), left/right (intervals) or corner 0, 1, 2 then centre
(triangles).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from siacmra.delaunay import bowyer_watson, signed_area
from siacmra.errors import DomainExitError, GeometryError, MeshFormatError

KIND_NVERT = {"interval": 2, "quadrilateral": 4, "triangle": 3}
GEOM_TOL = 1e-12
_KEY_SCALE = 1e9
_TRACE_EPS = 1e-11


def _solve2(col0: np.ndarray, col1: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve [col0 col1] z = rhs for batches of 2x2 systems."""
    det = col0[..., 0] * col1[..., 1] - col1[..., 0] * col0[..., 1]
    z0 = (rhs[..., 0] * col1[..., 1] - col1[..., 0] * rhs[..., 1]) / det
    z1 = (col0[..., 0] * rhs[..., 1] - rhs[..., 0] * col0[..., 1]) / det
    return np.stack([z0, z1], axis=-1)


def _key(coords: np.ndarray) -> tuple:
    return tuple(int(v) for v in np.rint(np.asarray(coords) * _KEY_SCALE))


@dataclass(eq=False)
class HierarchicalMesh:
    kind: str
    vertices: np.ndarray
    elements: np.ndarray
    box: np.ndarray
    periodic: tuple[bool, ...]
    level: np.ndarray | None = None
    parent: np.ndarray | None = None
    child_slot: np.ndarray | None = None
    source: HierarchicalMesh | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KIND_NVERT:
            raise ValueError(f"unknown element kind {self.kind!r}")
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim == 1:
            self.vertices = self.vertices[:, None]
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.box = np.asarray(self.box, dtype=float).reshape(self.dim, 2)
        self.periodic = tuple(bool(v) for v in np.broadcast_to(self.periodic, (self.dim,)))
        if self.elements.shape[1] != KIND_NVERT[self.kind]:
            raise ValueError("element arity does not match kind")
        if self.level is None:
            self.level = np.zeros(self.n_elements, dtype=np.int64)
        for arr in (self.vertices, self.elements, self.level):
            arr.setflags(write=False)

    # --- basic geometry ------------------------------------------------------------

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def period(self) -> np.ndarray:
        return self.box[:, 1] - self.box[:, 0]

    @cached_property
    def element_vertices(self) -> np.ndarray:
        """(ne, nvert, dim) coordinates."""
        return self.vertices[self.elements]

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """Sorted element boundaries of a 1D mesh."""
        if self.dim != 1:
            raise ValueError("breakpoints only exist for interval meshes")
        ev = self.element_vertices[:, :, 0]
        return np.concatenate([ev[:, 0], ev[-1:, 1]])

    @cached_property
    def areas(self) -> np.ndarray:
        ev = self.element_vertices
        if self.dim == 1:
            return ev[:, 1, 0] - ev[:, 0, 0]
        x, y = ev[..., 0], ev[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        ev = self.element_vertices
        if self.dim == 1:
            return self.areas[:, None]
        return np.linalg.norm(np.roll(ev, -1, axis=1) - ev, axis=2)

    @cached_property
    def max_edge(self) -> np.ndarray:
        return self.edge_lengths.max(axis=1)

    @cached_property
    def min_edge(self) -> np.ndarray:
        return self.edge_lengths.min(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        ref = {"interval": [0.0], "quadrilateral": [0.0, 0.0], "triangle": [1 / 3, 1 / 3]}[self.kind]
        idx = np.arange(self.n_elements)
        return self.to_physical(idx, np.broadcast_to(np.array(ref), (self.n_elements, self.dim)))

    @cached_property
    def _bilinear(self) -> np.ndarray:
        """Coefficients a0..a3 of F(xi, eta) = a0 + a1 xi + a2 eta + a3 xi eta; (ne, 4, 2)."""
        v = self.element_vertices
        return 0.25 * np.stack(
            [
                v[:, 0] + v[:, 1] + v[:, 2] + v[:, 3],
                -v[:, 0] + v[:, 1] + v[:, 2] - v[:, 3],
                -v[:, 0] - v[:, 1] + v[:, 2] + v[:, 3],
                v[:, 0] - v[:, 1] + v[:, 2] - v[:, 3],
            ],
            axis=1,
        )

    @cached_property
    def affine(self) -> np.ndarray:
        """True where the reference map has a constant Jacobian."""
        if self.kind != "quadrilateral":
            return np.ones(self.n_elements, dtype=bool)
        a = self._bilinear
        scale = np.linalg.norm(a[:, 1], axis=1) + np.linalg.norm(a[:, 2], axis=1)
        return np.linalg.norm(a[:, 3], axis=1) <= 1e-12 * scale

    def to_physical(self, idx: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Map reference points ``xi`` (..., dim) of elements ``idx`` (...) to physical space."""
        idx = np.asarray(idx)
        xi = np.asarray(xi, dtype=float)
        ev = self.element_vertices
        if self.kind == "interval":
            x0, x1 = ev[idx, 0, 0], ev[idx, 1, 0]
            return (0.5 * (x0 + x1) + 0.5 * (x1 - x0) * xi[..., 0])[..., None]
        if self.kind == "triangle":
            v0, v1, v2 = ev[idx, 0], ev[idx, 1], ev[idx, 2]
            return v0 + (v1 - v0) * xi[..., 0:1] + (v2 - v0) * xi[..., 1:2]
        a = self._bilinear[idx]
        s, t = xi[..., 0:1], xi[..., 1:2]
        return a[..., 0, :] + a[..., 1, :] * s + a[..., 2, :] * t + a[..., 3, :] * s * t

    def jacobian(self, idx: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """d x / d xi, shape (..., dim, dim)."""
        idx = np.asarray(idx)
        xi = np.asarray(xi, dtype=float)
        ev = self.element_vertices
        if self.kind == "interval":
            return (0.5 * (ev[idx, 1, 0] - ev[idx, 0, 0]))[..., None, None] * np.ones(xi.shape[:-1] + (1, 1))
        if self.kind == "triangle":
            v0, v1, v2 = ev[idx, 0], ev[idx, 1], ev[idx, 2]
            jac = np.stack([v1 - v0, v2 - v0], axis=-1)
            return jac * np.ones(xi.shape[:-1] + (1, 1))
        a = self._bilinear[idx]
        s, t = xi[..., 0:1], xi[..., 1:2]
        col0 = a[..., 1, :] + a[..., 3, :] * t
        col1 = a[..., 2, :] + a[..., 3, :] * s
        return np.stack([col0, col1], axis=-1)

    def jacobian_det(self, idx: np.ndarray, xi: np.ndarray) -> np.ndarray:
        jac = self.jacobian(idx, xi)
        if self.dim == 1:
            return jac[..., 0, 0]
        return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]

    def to_reference(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Inverse reference map (Newton on bilinear quads)."""
        idx = np.asarray(idx)
        x = np.asarray(x, dtype=float)
        ev = self.element_vertices
        if self.kind == "interval":
            x0, x1 = ev[idx, 0, 0], ev[idx, 1, 0]
            return ((2.0 * x[..., 0] - (x0 + x1)) / (x1 - x0))[..., None]
        if self.kind == "triangle":
            v0 = ev[idx, 0]
            return _solve2(ev[idx, 1] - v0, ev[idx, 2] - v0, x - v0)
        a = self._bilinear[idx]
        xi = _solve2(a[..., 1, :], a[..., 2, :], x - a[..., 0, :])
        bent = ~self.affine[idx]
        if not np.any(bent):
            return xi
        ab, xb, z = a[bent], x[bent], xi[bent]
        for _ in range(30):
            s, t = z[:, 0:1], z[:, 1:2]
            r = ab[:, 0] + ab[:, 1] * s + ab[:, 2] * t + ab[:, 3] * s * t - xb
            step = _solve2(ab[:, 1] + ab[:, 3] * t, ab[:, 2] + ab[:, 3] * s, r)
            z = z - step
            if np.max(np.abs(step), initial=0.0) < 1e-14:
                break
        xi[bent] = z
        return xi

    # --- periodic wrapping ----------------------------------------------------------

    def wrap(self, x: np.ndarray, axes: Sequence[bool] | None = None) -> np.ndarray:
        """Map points into the box along periodic axes (or the given axes)."""
        x = np.array(x, dtype=float)
        axes = self.periodic if axes is None else tuple(axes)
        for d in range(self.dim):
            if axes[d]:
                lo, length = self.box[d, 0], self.period[d]
                w = np.mod(x[..., d] - lo, length)
                w = np.where(w >= length, w - length, w)
                x[..., d] = lo + w
        return x

    def _check_inside(self, x: np.ndarray, axes) -> None:
        for d in range(self.dim):
            if axes[d]:
                continue
            tol = GEOM_TOL * max(1.0, float(self.period[d]))
            if np.any(x[..., d] < self.box[d, 0] - tol) or np.any(x[..., d] > self.box[d, 1] + tol):
                raise DomainExitError("point outside the non-periodic domain")

    # --- point location -------------------------------------------------------------

    @cached_property
    def _bins(self):
        """Uniform background grid in CSR form: (counts per axis, bin size, offsets, members)."""
        ev = self.element_vertices
        lo, hi = self.box[:, 0], self.box[:, 1]
        diam = float(np.mean(np.linalg.norm(ev.max(axis=1) - ev.min(axis=1), axis=1)))
        nb = np.clip(np.ceil((hi - lo) / max(diam, 1e-300)).astype(int), 1, 512)
        size = (hi - lo) / nb
        pad = 1e-9 * float(np.max(hi - lo))
        bmin = np.clip(np.floor((ev.min(axis=1) - pad - lo) / size).astype(int), 0, nb - 1)
        bmax = np.clip(np.floor((ev.max(axis=1) + pad - lo) / size).astype(int), 0, nb - 1)
        bins, elems = [], []
        for e in range(self.n_elements):
            ii, jj = np.meshgrid(np.arange(bmin[e, 0], bmax[e, 0] + 1), np.arange(bmin[e, 1], bmax[e, 1] + 1))
            b = (jj * nb[0] + ii).ravel()
            bins.append(b)
            elems.append(np.full(b.size, e))
        bins = np.concatenate(bins)
        elems = np.concatenate(elems)
        order = np.lexsort((elems, bins))
        counts = np.bincount(bins, minlength=int(nb[0] * nb[1]))
        start = np.concatenate([[0], np.cumsum(counts)])
        return nb, size, start, elems[order]

    def _as_points(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        """Flatten query points to (M, dim); also return the output shape."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim == 2:
                return x.reshape(-1, 1), x.shape[:-1]
            return x.reshape(-1, 1), x.shape
        return x.reshape(-1, 2), x.shape[:-1]

    def locate(self, x: np.ndarray, *, periodic: Sequence[bool] | None = None):
        """Index of an element containing each point; faces resolve to the lowest index."""
        pts, shape = self._as_points(x)
        axes = self.periodic if periodic is None else tuple(periodic)
        pts = self.wrap(pts, axes)
        self._check_inside(pts, axes)
        if self.dim == 1:
            idx = np.searchsorted(self.breakpoints, pts[:, 0], side="left") - 1
            idx = np.clip(idx, 0, self.n_elements - 1)
        else:
            idx = self._locate_2d(pts)
        return int(idx[0]) if shape == () else idx.reshape(shape)

    def _locate_2d(self, pts: np.ndarray) -> np.ndarray:
        from siacmra import _geometry_jit as _jit

        nb, size, start, members = self._bins
        v, normals, elens = self._edge_data
        tol = GEOM_TOL * max(1.0, float(np.max(self.period)))
        out = _jit.locate_in_bins(
            np.ascontiguousarray(pts), self.box[:, 0].copy(), size, int(nb[0]), int(nb[1]), start, members, v, normals, elens, tol
        )
        if np.any(out < 0):
            bad = pts[np.flatnonzero(out < 0)[0]]
            raise GeometryError(f"no element contains point {bad.tolist()}")
        return out

    # --- vertex identification, adjacency and faces --------------------------------

    def canonical_vertices(self, axes: Sequence[bool] | None = None) -> np.ndarray:
        """Vertex ids with periodic images along ``axes`` identified."""
        axes = self.periodic if axes is None else tuple(axes)
        wrapped = self.wrap(self.vertices, axes)
        table: dict[tuple, int] = {}
        out = np.empty(self.n_vertices, dtype=np.int64)
        for i, v in enumerate(wrapped):
            out[i] = table.setdefault(_key(v), len(table))
        return out

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Elements sharing a vertex (periodic images identified on every axis); padded with -1."""
        canon = self.canonical_vertices((True,) * self.dim)
        incident: dict[int, list[int]] = {}
        for e, verts in enumerate(self.elements):
            for v in verts:
                incident.setdefault(int(canon[v]), []).append(e)
        neigh = []
        for e, verts in enumerate(self.elements):
            s = set()
            for v in verts:
                s.update(incident[int(canon[v])])
            s.discard(e)
            neigh.append(sorted(s))
        width = max(1, max(len(n) for n in neigh))
        out = np.full((self.n_elements, width), -1, dtype=np.int64)
        for e, n in enumerate(neigh):
            out[e, : len(n)] = n
        return out

    @cached_property
    def faces(self) -> dict[str, np.ndarray]:
        """Face list honouring the mesh periodicity.

        Keys: ``a``, ``b`` (-1 on the boundary), ``p0``, ``p1`` (endpoints in a's
        coordinates), ``shift_b`` (add to a-coordinates to get b's), ``hanging``.
        """
        if self.dim == 1:
            return self._faces_1d()
        canon = self.canonical_vertices()

        def edge_key(u, v):
            mid = self.wrap(0.5 * (self.vertices[u] + self.vertices[v]))
            return (min(canon[u], canon[v]), max(canon[u], canon[v])) + _key(mid)

        wrapped_index = {}
        for i, w in enumerate(self.wrap(self.vertices)):
            wrapped_index.setdefault(_key(w), i)
        nv = self.elements.shape[1]
        edges: dict[tuple, list[tuple[int, int, int]]] = {}
        for e, verts in enumerate(self.elements):
            for j in range(nv):
                a, b = int(verts[j]), int(verts[(j + 1) % nv])
                edges.setdefault(edge_key(a, b), []).append((e, a, b))
        fa, fb, p0, p1, hang = [], [], [], [], []
        unmatched = {}
        for k, lst in edges.items():
            if len(lst) == 2:
                (ea, a0, a1), (eb, _, _) = lst
                fa.append(ea)
                fb.append(eb)
                p0.append(self.vertices[a0])
                p1.append(self.vertices[a1])
                hang.append(False)
            elif len(lst) == 1:
                unmatched[k] = lst[0]
            else:
                raise GeometryError("edge shared by more than two elements")
        consumed = set()
        for k, (e, a, b) in list(unmatched.items()):
            m = wrapped_index.get(_key(self.wrap(0.5 * (self.vertices[a] + self.vertices[b]))))
            if m is None:
                continue
            halves = [edge_key(a, m), edge_key(m, b)]
            if all(h in unmatched and h not in consumed for h in halves):
                for h in halves:
                    ef, f0, f1 = unmatched[h]
                    fa.append(ef)
                    fb.append(e)
                    p0.append(self.vertices[f0])
                    p1.append(self.vertices[f1])
                    hang.append(True)
                    consumed.add(h)
                consumed.add(k)
        for k, (e, a, b) in unmatched.items():
            if k in consumed:
                continue
            fa.append(e)
            fb.append(-1)
            p0.append(self.vertices[a])
            p1.append(self.vertices[b])
            hang.append(False)
        fa = np.array(fa, dtype=np.int64)
        fb = np.array(fb, dtype=np.int64)
        p0 = np.array(p0).reshape(-1, 2)
        p1 = np.array(p1).reshape(-1, 2)
        # periodic offset taking a's face coordinates into b's frame
        mid = 0.5 * (p0 + p1)
        rel = self.centroids[np.maximum(fb, 0)] - mid
        shift = np.zeros_like(mid)
        for d in range(2):
            if self.periodic[d]:
                shift[:, d] = self.period[d] * np.round(rel[:, d] / self.period[d])
        shift[fb < 0] = 0.0
        return {"a": fa, "b": fb, "p0": p0, "p1": p1, "shift_b": shift, "hanging": np.array(hang, dtype=bool)}

    def _faces_1d(self):
        n = self.n_elements
        bp = self.breakpoints
        a = list(range(n - 1))
        b = list(range(1, n))
        pts = list(bp[1:-1])
        shift = [0.0] * (n - 1)
        if self.periodic[0]:
            a.append(n - 1)
            b.append(0)
            pts.append(bp[-1])
            shift.append(-self.period[0])
        else:
            a = [0] + a + [n - 1]
            b = [-1] + b + [-1]
            pts = [bp[0]] + pts + [bp[-1]]
            shift = [0.0] + shift + [0.0]
        p = np.array(pts)[:, None]
        return {
            "a": np.array(a, dtype=np.int64),
            "b": np.array(b, dtype=np.int64),
            "p0": p,
            "p1": p,
            "shift_b": np.array(shift)[:, None],
            "hanging": np.zeros(len(a), dtype=bool),
        }

    def face_neighbors(self) -> np.ndarray:
        f = self.faces
        keep = f["b"] >= 0
        pairs = np.stack([f["a"][keep], f["b"][keep]], axis=1)
        return np.unique(np.sort(pairs, axis=1), axis=0) if len(pairs) else pairs.reshape(0, 2)

    def hanging_nodes(self) -> np.ndarray:
        f = self.faces
        if self.dim == 1 or not np.any(f["hanging"]):
            return np.zeros((0, self.dim))
        pts = np.concatenate([f["p0"][f["hanging"]], f["p1"][f["hanging"]]])
        counts: dict[tuple, int] = {}
        for pnt in pts:
            counts[_key(pnt)] = counts.get(_key(pnt), 0) + 1
        corners = {_key(v) for e in range(self.n_elements) for v in self.element_vertices[e]}
        out = []
        for pnt in pts:
            k = _key(pnt)
            if counts[k] >= 2 and k in corners and k not in {_key(o) for o in out}:
                # a hanging node is a shared endpoint of two fine half-faces
                out.append(pnt)
        return np.array(out).reshape(-1, self.dim)

    def max_level_jump(self) -> int:
        pairs = self.face_neighbors()
        if len(pairs) == 0:
            return 0
        return int(np.max(np.abs(self.level[pairs[:, 0]] - self.level[pairs[:, 1]])))

    # --- adaptive scaling ------------------------------------------------------------

    @cached_property
    def characteristic_lengths(self) -> np.ndarray:
        """Area-weighted mean of incident elements' maximum edge lengths, per vertex."""
        canon = self.canonical_vertices()
        nc = int(canon.max()) + 1
        area = np.abs(self.areas)
        weight = np.repeat(area, self.elements.shape[1])
        num = np.bincount(canon[self.elements.ravel()], weights=weight * np.repeat(self.max_edge, self.elements.shape[1]), minlength=nc)
        den = np.bincount(canon[self.elements.ravel()], weights=weight, minlength=nc)
        if np.any(den[np.unique(canon)] == 0):
            raise GeometryError("isolated vertex")
        out = num[canon] / den[canon]
        out.setflags(write=False)
        return out

    def vertex_weights(self, idx: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Barycentric (triangles), bilinear (quads) or linear (intervals) vertex weights."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "interval":
            s = 0.5 * (xi[..., 0] + 1.0)
            return np.stack([1.0 - s, s], axis=-1)
        if self.kind == "triangle":
            return np.stack([1.0 - xi[..., 0] - xi[..., 1], xi[..., 0], xi[..., 1]], axis=-1)
        s, t = xi[..., 0], xi[..., 1]
        return 0.25 * np.stack([(1 - s) * (1 - t), (1 + s) * (1 - t), (1 + s) * (1 + t), (1 - s) * (1 + t)], axis=-1)

    def scaling_at_point(self, x: np.ndarray, *, periodic: Sequence[bool] | None = None):
        """Adaptive kernel scaling H(x) interpolated from vertex characteristic lengths."""
        pts, shape = self._as_points(x)
        axes = self.periodic if periodic is None else tuple(periodic)
        pts = self.wrap(pts, axes)
        idx = np.atleast_1d(self.locate(pts, periodic=axes))
        xi = self.to_reference(idx, pts)
        w = self.vertex_weights(idx, xi)
        h = np.sum(w * self.characteristic_lengths[self.elements[idx]], axis=-1)
        return float(h[0]) if shape == () else h.reshape(shape)

    # --- line tracing -----------------------------------------------------------------

    def _cyrus_beck(self, cand: np.ndarray, origin: np.ndarray, direction: np.ndarray):
        """Parameter interval of origin + t d inside each (convex) candidate element."""
        safe = np.where(cand < 0, 0, cand)
        v = self.element_vertices[safe]  # (M, K, nv, 2)
        e = np.roll(v, -1, axis=2) - v
        normal = np.stack([e[..., 1], -e[..., 0]], axis=-1)  # outward for CCW
        num = np.sum(normal * (origin[:, None, None, :] - v), axis=-1)
        den = np.sum(normal * direction[None, None, None, :], axis=-1)
        elen = np.linalg.norm(e, axis=-1)
        parallel = np.abs(den) <= 1e-14 * elen
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = -num / den
        t_in = np.max(np.where(~parallel & (den < 0), bound, -np.inf), axis=2)
        t_out = np.min(np.where(~parallel & (den > 0), bound, np.inf), axis=2)
        outside = np.any(parallel & (num > GEOM_TOL * elen), axis=2)
        t_in = np.where(outside | (cand < 0), np.inf, t_in)
        t_out = np.where(outside | (cand < 0), -np.inf, t_out)
        return t_in, t_out

    @cached_property
    def _edge_data(self):
        v = np.ascontiguousarray(self.element_vertices)
        e = np.roll(v, -1, axis=1) - v
        normals = np.ascontiguousarray(np.stack([e[..., 1], -e[..., 0]], axis=-1))
        return v, normals, np.linalg.norm(e, axis=-1)

    def trace_lines(
        self,
        x0: np.ndarray,
        theta: float,
        t_min: np.ndarray,
        t_max: np.ndarray,
        *,
        periodic: Sequence[bool] | None = None,
    ) -> LineTrace:
        """Partition x0 + t (cos theta, sin theta), t in [t_min, t_max], at element crossings.

        A compiled walk handles the common case; lines it cannot follow are
        redone by the slower vectorised walk with global relocation.
        """
        from siacmra import _geometry_jit as _jit

        if self.dim != 2:
            raise ValueError("line tracing needs a 2D mesh")
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        m = len(x0)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=float), (m,)).copy()
        t_max = np.broadcast_to(np.asarray(t_max, dtype=float), (m,)).copy()
        axes = self.periodic if periodic is None else tuple(periodic)
        d = np.array([np.cos(theta), np.sin(theta)])
        d[np.abs(d) < 1e-15] = 0.0
        eta = 1e-9 * float(np.min(self.max_edge))
        ahead = x0 + (t_min + eta)[:, None] * d
        wrapped = self.wrap(ahead, axes)
        self._check_inside(wrapped, axes)
        start = np.atleast_1d(self.locate(wrapped, periodic=axes))
        v, normals, elens = self._edge_data
        tol = GEOM_TOL * max(1.0, float(np.max(self.period)))
        cap = 64
        while True:
            t0, t1, owner, shift, count, status = _jit.walk(
                x0, d[0], d[1], t_min, t_max, start, ahead - wrapped, v, normals, elens, self.adjacency,
                self.box[:, 0].copy(), self.period.copy(), np.array(axes), eta, _TRACE_EPS, tol, cap,
            )
            if np.any(status == _jit.EXITED):
                raise DomainExitError("line trace leaves the non-periodic domain")
            if not np.any(status == _jit.FULL):
                break
            cap *= 4
        trace = LineTrace.from_arrays(t0, t1, owner, shift, count)
        redo = np.flatnonzero(status == _jit.LOST)
        if redo.size:
            slow = self._trace_lines_numpy(x0[redo], theta, t_min[redo], t_max[redo], periodic=axes)
            trace = trace.replace_rows(redo, slow)
        return trace

    def _trace_lines_numpy(
        self,
        x0: np.ndarray,
        theta: float,
        t_min: np.ndarray,
        t_max: np.ndarray,
        *,
        periodic: Sequence[bool] | None = None,
    ) -> LineTrace:
        """Partition x0 + t (cos theta, sin theta), t in [t_min, t_max], at element crossings."""
        if self.dim != 2:
            raise ValueError("line tracing needs a 2D mesh")
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        m = len(x0)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=float), (m,)).copy()
        t_max = np.broadcast_to(np.asarray(t_max, dtype=float), (m,)).copy()
        axes = self.periodic if periodic is None else tuple(periodic)
        d = np.array([np.cos(theta), np.sin(theta)])
        d[np.abs(d) < 1e-15] = 0.0
        eta = 1e-9 * float(np.min(self.max_edge))

        def wrap_ahead(rows, t, shift):
            ahead = x0[rows] + (t + eta)[:, None] * d - shift
            wrapped = self.wrap(ahead, axes)
            self._check_inside(wrapped, axes)
            return shift + (ahead - wrapped)

        shift = np.zeros_like(x0)
        shift = wrap_ahead(slice(None), t_min, shift)
        start = self.locate(x0 + (t_min + eta)[:, None] * d - shift, periodic=axes)
        adj = self.adjacency
        current = start.copy()
        t_cur = t_min.copy()
        seg_t0, seg_t1, seg_own, seg_shift, seg_row = [], [], [], [], []
        active = np.arange(m)
        first = True
        for _ in range(1_000_000):
            if active.size == 0:
                break
            cur = current[active]
            cand = np.concatenate([cur[:, None], adj[cur]], axis=1)
            origin = x0[active] - shift[active]
            t_in, t_out = self._cyrus_beck(cand, origin, d)
            tc = t_cur[active]
            eps = _TRACE_EPS * np.maximum(1.0, np.abs(tc))
            ok = (t_in <= tc[:, None] + eps[:, None]) & (t_out > tc[:, None] + eps[:, None])
            if not first:
                ok[:, 0] = False
            score = np.where(ok, t_out, -np.inf)
            pick = np.argmax(score, axis=1)
            found = np.isfinite(score[np.arange(len(active)), pick])
            if not np.all(found):
                cand_fb, t_out_fb = self._fallback_candidates(active[~found], x0, shift, t_cur, d, axes)
                pick_el = cand[np.arange(len(active)), pick]
                pick_el[~found] = cand_fb
                t_end = t_out[np.arange(len(active)), pick]
                t_end[~found] = t_out_fb
            else:
                pick_el = cand[np.arange(len(active)), pick]
                t_end = t_out[np.arange(len(active)), pick]
            first = False
            stop = np.minimum(t_end, t_max[active])
            seg_t0.append(tc)
            seg_t1.append(stop)
            seg_own.append(pick_el)
            seg_shift.append(shift[active].copy())
            seg_row.append(active.copy())
            done = stop >= t_max[active] - _TRACE_EPS * np.maximum(1.0, np.abs(t_max[active]))
            current[active] = pick_el
            t_cur[active] = stop
            active = active[~done]
            if active.size:
                shift[active] = wrap_ahead(active, t_cur[active], shift[active])
        else:  # pragma: no cover
            raise GeometryError("line trace did not terminate")
        return LineTrace.from_steps(m, seg_row, seg_t0, seg_t1, seg_own, seg_shift)

    def _fallback_candidates(self, rows, x0, shift, t_cur, d, axes):
        # global relocation a little further along the line
        out_el = np.empty(len(rows), dtype=np.int64)
        out_t = np.empty(len(rows))
        for i, r in enumerate(rows):
            for step in (1e-8, 1e-6):
                pnt = x0[r] + (t_cur[r] + step) * d - shift[r]
                wrapped = self.wrap(pnt[None], axes)
                e = int(self.locate(wrapped, periodic=axes)[0])
                origin = (x0[r] - shift[r] - (pnt - wrapped[0]))[None]
                t_in, t_out = self._cyrus_beck(np.array([[e]]), origin, d)
                if t_out[0, 0] > t_cur[r] and t_in[0, 0] <= t_cur[r] + step:
                    if np.any(pnt != wrapped[0]):
                        raise GeometryError("fallback crossed a periodic seam")
                    out_el[i], out_t[i] = e, t_out[0, 0]
                    break
            else:
                raise GeometryError(f"line trace lost at t={t_cur[r]!r}")
        return out_el, out_t

    def trace_line(self, x0, theta: float, t_min: float, t_max: float, *, periodic=None) -> LineTrace:
        return self.trace_lines(np.asarray(x0, dtype=float)[None], theta, t_min, t_max, periodic=periodic)

    # --- hashing / dumps --------------------------------------------------------------

    def dump(self) -> str:
        lines = [f"{self.dim} {self.kind} {self.n_vertices} {self.n_elements}"]
        lines += [" ".join("%.17g" % c for c in v) for v in self.vertices]
        lines += [" ".join(str(int(i)) for i in e) for e in self.elements]
        return "\n".join(lines) + "\n"

    @cached_property
    def hash(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()[:16]


@dataclass
class LineTrace:
    """Ordered segments of one or more traced lines, padded to a common count.

    ``shift[i, s]`` maps the unwrapped line point to mesh coordinates:
    local = x0 + t d - shift.
    """

    t0: np.ndarray
    t1: np.ndarray
    owner: np.ndarray
    shift: np.ndarray
    count: np.ndarray

    @classmethod
    def from_steps(cls, m, rows, t0s, t1s, owners, shifts):
        count = np.zeros(m, dtype=np.int64)
        for r in rows:
            count[r] += 1
        width = int(count.max()) if m else 0
        t0 = np.zeros((m, width))
        t1 = np.zeros((m, width))
        owner = np.zeros((m, width), dtype=np.int64)
        shift = np.zeros((m, width, 2))
        fill = np.zeros(m, dtype=np.int64)
        for r, a, b, o, s in zip(rows, t0s, t1s, owners, shifts):
            k = fill[r]
            t0[r, k], t1[r, k], owner[r, k], shift[r, k] = a, b, o, s
            fill[r] += 1
        # pad with zero-length segments at the end of each line
        for i in range(m):
            c = count[i]
            if c < width:
                t0[i, c:] = t1[i, c - 1]
                t1[i, c:] = t1[i, c - 1]
                owner[i, c:] = owner[i, c - 1]
                shift[i, c:] = shift[i, c - 1]
        return cls(t0, t1, owner, shift, count)

    @classmethod
    def from_arrays(cls, t0, t1, owner, shift, count) -> LineTrace:
        width = max(1, int(count.max(initial=0)))
        t0, t1, owner, shift = t0[:, :width].copy(), t1[:, :width].copy(), owner[:, :width].copy(), shift[:, :width].copy()
        cols = np.arange(width)
        last = np.maximum(count - 1, 0)
        pad = cols[None, :] >= count[:, None]
        rows = np.arange(len(count))[:, None]
        t0 = np.where(pad, t1[rows, last[:, None]], t0)
        t1 = np.where(pad, t1[rows, last[:, None]], t1)
        owner = np.where(pad, owner[rows, last[:, None]], owner)
        shift = np.where(pad[..., None], shift[rows, last[:, None]], shift)
        return cls(t0, t1, owner, shift, count.copy())

    def replace_rows(self, rows: np.ndarray, other: LineTrace) -> LineTrace:
        """Copy with ``rows`` taken from ``other`` (one row of ``other`` per entry of ``rows``)."""
        width = max(self.t0.shape[1], other.t0.shape[1])

        def widen(tr):
            # pad with zero-length segments repeating each row's last one
            extra = width - tr.t0.shape[1]
            pad = lambda a: np.concatenate([a, np.repeat(a[:, -1:], extra, axis=1)], axis=1)
            t1 = pad(tr.t1)
            t0 = np.concatenate([tr.t0, t1[:, tr.t0.shape[1]:]], axis=1)
            return LineTrace(t0, t1, pad(tr.owner), pad(tr.shift), tr.count.copy())

        a, b = widen(self), widen(other)
        for name in ("t0", "t1", "owner", "shift", "count"):
            getattr(a, name)[rows] = getattr(b, name)
        return a

    def segments(self, i: int = 0) -> list[tuple[float, float, int, np.ndarray]]:
        return [(self.t0[i, s], self.t1[i, s], int(self.owner[i, s]), self.shift[i, s]) for s in range(self.count[i])]


# --- constructors --------------------------------------------------------------------


def interval_mesh(breakpoints: np.ndarray, periodic: bool = True) -> HierarchicalMesh:
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or len(bp) < 2 or np.any(np.diff(bp) <= 0):
        raise ValueError("breakpoints must be strictly increasing with at least two entries")
    n = len(bp) - 1
    elems = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return HierarchicalMesh("interval", bp[:, None], elems, [[bp[0], bp[-1]]], (periodic,))


def uniform_interval_mesh(n: int, domain: tuple[float, float] = (-1.0, 1.0), periodic: bool = True) -> HierarchicalMesh:
    if n < 1:
        raise ValueError(f"element count must be positive, got {n}")
    a, b = domain
    return interval_mesh(a + (b - a) * np.arange(n + 1) / n, periodic)


def _lattice(xb: np.ndarray, yb: np.ndarray):
    xx, yy = np.meshgrid(xb, yb)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _quad_connectivity(nx: int, ny: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n0 = j * (nx + 1) + i
    return np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])


def tensor_quad_mesh(xb, yb, periodic=(True, True)) -> HierarchicalMesh:
    xb = np.asarray(xb, dtype=float)
    yb = np.asarray(yb, dtype=float)
    nodes = _lattice(xb, yb)
    box = [[xb[0], xb[-1]], [yb[0], yb[-1]]]
    return HierarchicalMesh("quadrilateral", nodes, _quad_connectivity(len(xb) - 1, len(yb) - 1), box, periodic)


def uniform_quad_mesh(nx: int, ny: int | None = None, box=((0.0, 1.0), (0.0, 1.0)), periodic=(True, True)) -> HierarchicalMesh:
    ny = nx if ny is None else ny
    if nx < 1 or ny < 1:
        raise ValueError("element counts must be positive")
    (x0, x1), (y0, y1) = box
    return tensor_quad_mesh(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1), periodic)


def _perturbed_nodes(nx, ny, p_scale, seed, box):
    if not 0.0 <= p_scale < 1.0:
        raise ValueError(f"perturbation scale must lie in [0, 1), got {p_scale}")
    if nx < 1 or ny < 1:
        raise ValueError("element counts must be positive")
    (x0, x1), (y0, y1) = box
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    nodes = _lattice(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.uniform(-0.5, 0.5, size=(ny + 1, nx + 1, 2))
    u[:, 0, 0] = 0.0  # boundary nodes slide only along the boundary
    u[:, nx, 0] = 0.0
    u[0, :, 1] = 0.0
    u[ny, :, 1] = 0.0
    u[:, nx, 1] = u[:, 0, 1]  # periodic partners share the displacement
    u[ny, :, 0] = u[0, :, 0]
    disp = p_scale * u * np.array([hx, hy])
    nodes = nodes + disp.reshape(-1, 2)
    return nodes, [[x0, x1], [y0, y1]]


def perturbed_quad_mesh(nx: int, ny: int | None = None, p_scale: float = 0.0, seed: int = 0, box=((0.0, 1.0), (0.0, 1.0)), periodic=(True, True)) -> HierarchicalMesh:
    ny = nx if ny is None else ny
    nodes, bx = _perturbed_nodes(nx, ny, p_scale, seed, box)
    return HierarchicalMesh("quadrilateral", nodes, _quad_connectivity(nx, ny), bx, periodic)


def perturbed_delaunay_mesh(nx: int, ny: int | None = None, p_scale: float = 0.0, seed: int = 0, box=((0.0, 1.0), (0.0, 1.0)), periodic=(True, True)) -> HierarchicalMesh:
    ny = nx if ny is None else ny
    nodes, bx = _perturbed_nodes(nx, ny, p_scale, seed, box)
    tris = bowyer_watson(nodes)
    return HierarchicalMesh("triangle", nodes, tris, bx, periodic)


def graded_breakpoints(n: int, ratio: float, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Symmetric geometric grading, finest at the centre, largest/smallest width = ratio."""
    if ratio < 1.0:
        raise ValueError(f"grading ratio must be >= 1, got {ratio}")
    if n < 1:
        raise ValueError("element count must be positive")
    half = n // 2
    if half < 2 or ratio == 1.0:
        return np.linspace(lo, hi, n + 1)
    q = ratio ** (1.0 / (half - 1))
    w = q ** np.arange(half)  # centre outwards
    if n % 2:
        widths = np.concatenate([w[::-1], [1.0], w])
    else:
        widths = np.concatenate([w[::-1], w])
    widths = widths / widths.sum() * (hi - lo)
    bp = lo + np.concatenate([[0.0], np.cumsum(widths)])
    bp[-1] = hi
    return bp


def graded_quad_mesh(n: int, ratio: float, box=((0.0, 1.0), (0.0, 1.0)), periodic=(True, True)) -> HierarchicalMesh:
    (x0, x1), (y0, y1) = box
    return tensor_quad_mesh(graded_breakpoints(n, ratio, x0, x1), graded_breakpoints(n, ratio, y0, y1), periodic)


# --- refinement ----------------------------------------------------------------------


class _VertexPool:
    def __init__(self, vertices: np.ndarray):
        self.coords = [v for v in vertices]
        self.index = {_key(v): i for i, v in enumerate(vertices)}

    def add(self, v: np.ndarray) -> int:
        k = _key(v)
        i = self.index.get(k)
        if i is None:
            i = len(self.coords)
            self.coords.append(np.asarray(v, dtype=float))
            self.index[k] = i
        return i


def _split(kind: str, verts: np.ndarray, pool: _VertexPool, coords: np.ndarray) -> list[list[int]]:
    if kind == "interval":
        a, b = verts
        m = pool.add(0.5 * (coords[a] + coords[b]))
        return [[a, m], [m, b]]
    if kind == "triangle":
        a, b, c = verts
        ab = pool.add(0.5 * (coords[a] + coords[b]))
        bc = pool.add(0.5 * (coords[b] + coords[c]))
        ca = pool.add(0.5 * (coords[c] + coords[a]))
        return [[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]]
    v0, v1, v2, v3 = verts
    m01 = pool.add(0.5 * (coords[v0] + coords[v1]))
    m12 = pool.add(0.5 * (coords[v1] + coords[v2]))
    m23 = pool.add(0.5 * (coords[v2] + coords[v3]))
    m30 = pool.add(0.5 * (coords[v3] + coords[v0]))
    c = pool.add(0.25 * (coords[v0] + coords[v1] + coords[v2] + coords[v3]))
    return [[v0, m01, c, m30], [m01, v1, m12, c], [m30, c, m23, v3], [c, m12, v2, m23]]


def _refine(mesh: HierarchicalMesh, marked: np.ndarray) -> HierarchicalMesh:
    pool = _VertexPool(mesh.vertices)
    coords = mesh.vertices
    elems, level, parent, slot = [], [], [], []
    for e in range(mesh.n_elements):
        if marked[e]:
            for c, ch in enumerate(_split(mesh.kind, mesh.elements[e], pool, coords)):
                elems.append(ch)
                level.append(mesh.level[e] + 1)
                parent.append(e)
                slot.append(c)
        else:
            elems.append(list(mesh.elements[e]))
            level.append(mesh.level[e])
            parent.append(e)
            slot.append(-1)
    return HierarchicalMesh(
        mesh.kind,
        np.array(pool.coords),
        np.array(elems, dtype=np.int64),
        mesh.box,
        mesh.periodic,
        level=np.array(level, dtype=np.int64),
        parent=np.array(parent, dtype=np.int64),
        child_slot=np.array(slot, dtype=np.int64),
        source=mesh,
    )


def refine_all(mesh: HierarchicalMesh) -> HierarchicalMesh:
    return _refine(mesh, np.ones(mesh.n_elements, dtype=bool))


def balance_marks(mesh: HierarchicalMesh, marks) -> np.ndarray:
    """Close a mark set under the 2:1 face-level rule."""
    marked = np.zeros(mesh.n_elements, dtype=bool)
    idx = np.asarray(list(marks) if not isinstance(marks, np.ndarray) else marks)
    if idx.dtype == bool:
        if idx.shape != (mesh.n_elements,):
            raise ValueError("boolean mark mask has the wrong length")
        marked |= idx
    elif idx.size:
        idx = idx.astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= mesh.n_elements):
            raise ValueError("marks reference elements that are not in the mesh")
        marked[idx] = True
    pairs = mesh.face_neighbors()
    if len(pairs) == 0:
        return marked
    a, b = pairs[:, 0], pairs[:, 1]
    while True:
        new = mesh.level + marked
        need = np.zeros_like(marked)
        need[b[(new[a] - new[b]) > 1]] = True
        need[a[(new[b] - new[a]) > 1]] = True
        need &= ~marked
        if not need.any():
            return marked
        marked |= need


def refine_marked(mesh: HierarchicalMesh, marks) -> HierarchicalMesh:
    if mesh.kind == "triangle":
        raise ValueError("marked refinement needs interval or quadrilateral elements")
    marked = balance_marks(mesh, marks)
    if not marked.any():
        return mesh
    return _refine(mesh, marked)


# --- file formats --------------------------------------------------------------------


def read_gmsh(path: str | Path, periodic=(False, False)) -> HierarchicalMesh:
    """Read a 2D triangle or quad mesh from an MSH 2.2 ASCII file."""
    lines = Path(path).read_text().splitlines()
    pos = 0

    def expect(tag):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines) or lines[pos].strip() != tag:
            raise MeshFormatError(f"expected {tag}", pos + 1)
        pos += 1

    expect("$MeshFormat")
    try:
        parts = lines[pos].split()
        version = parts[0]
        filetype = int(parts[1])
    except (IndexError, ValueError):
        raise MeshFormatError("malformed format line", pos + 1) from None
    if version not in ("2.2", "2.2.0", "2"):
        raise MeshFormatError(f"unsupported MSH version {version}", pos + 1)
    if filetype != 0:
        raise MeshFormatError("binary MSH files are not supported", pos + 1)
    pos += 1
    expect("$EndMeshFormat")
    while pos < len(lines) and lines[pos].strip() != "$Nodes":
        pos += 1
    expect("$Nodes")
    try:
        nn = int(lines[pos])
    except (IndexError, ValueError):
        raise MeshFormatError("bad node count", pos + 1) from None
    pos += 1
    node_ids, coords = {}, []
    for k in range(nn):
        try:
            f = lines[pos].split()
            node_ids[int(f[0])] = k
            coords.append([float(f[1]), float(f[2])])
        except (IndexError, ValueError):
            raise MeshFormatError("bad node record", pos + 1) from None
        pos += 1
    expect("$EndNodes")
    while pos < len(lines) and lines[pos].strip() != "$Elements":
        pos += 1
    expect("$Elements")
    try:
        ne = int(lines[pos])
    except (IndexError, ValueError):
        raise MeshFormatError("bad element count", pos + 1) from None
    pos += 1
    tris, quads = [], []
    for _ in range(ne):
        try:
            f = [int(v) for v in lines[pos].split()]
            etype, ntags = f[1], f[2]
            nodes = [node_ids[v] for v in f[3 + ntags:]]
        except (IndexError, ValueError, KeyError):
            raise MeshFormatError("bad element record", pos + 1) from None
        if etype == 2:
            if len(nodes) != 3:
                raise MeshFormatError("triangle needs three nodes", pos + 1)
            tris.append(nodes)
        elif etype == 3:
            if len(nodes) != 4:
                raise MeshFormatError("quadrangle needs four nodes", pos + 1)
            quads.append(nodes)
        elif etype not in (1, 15):
            raise MeshFormatError(f"unsupported element type {etype}", pos + 1)
        pos += 1
    expect("$EndElements")
    if tris and quads:
        raise MeshFormatError("mixed triangle and quadrangle elements")
    if not tris and not quads:
        raise MeshFormatError("no 2D elements found")
    pts = np.array(coords)
    used = np.unique(np.array(tris or quads).ravel())
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    pts = pts[used]
    elems = remap[np.array(tris or quads)]
    kind = "triangle" if tris else "quadrilateral"
    if kind == "triangle":
        neg = signed_area(pts, elems) < 0
        elems[neg] = elems[neg][:, [0, 2, 1]]
    else:
        x, y = pts[elems][..., 0], pts[elems][..., 1]
        area = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
        elems[area < 0] = elems[area < 0][:, ::-1]
    box = np.column_stack([pts.min(axis=0), pts.max(axis=0)])
    return HierarchicalMesh(kind, pts, elems, box, periodic)


def write_mesh(path: str | Path, mesh: HierarchicalMesh) -> None:
    Path(path).write_text(mesh.dump())


def read_mesh(path: str | Path, periodic=None) -> HierarchicalMesh:
    lines = Path(path).read_text().splitlines()
    try:
        dim, kind, nv, ne = lines[0].split()
        dim, nv, ne = int(dim), int(nv), int(ne)
    except ValueError:
        raise MeshFormatError("bad header", 1) from None
    verts = np.array([[float(c) for c in lines[1 + i].split()] for i in range(nv)]).reshape(nv, dim)
    elems = np.array([[int(c) for c in lines[1 + nv + i].split()] for i in range(ne)], dtype=np.int64)
    box = np.column_stack([verts.min(axis=0), verts.max(axis=0)])
    return HierarchicalMesh(kind, verts, elems, box, (False,) * dim if periodic is None else periodic)


def vertex_characteristic_lengths(mesh: HierarchicalMesh) -> np.ndarray:
    return mesh.characteristic_lengths


def locate(mesh: HierarchicalMesh, x, **kw):
    return mesh.locate(x, **kw)


def trace_line(mesh: HierarchicalMesh, x0, theta, t_min, t_max, **kw) -> LineTrace:
    return mesh.trace_line(x0, theta, t_min, t_max, **kw)


def scaling_at_point(mesh: HierarchicalMesh, x, **kw):
    return mesh.scaling_at_point(x, **kw)
