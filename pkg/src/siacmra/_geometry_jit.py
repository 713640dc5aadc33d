"""Compiled point location and element walks for HierarchicalMesh."""

from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
LOST = 1
EXITED = 2
FULL = 3


@njit(cache=True)
def _clip(verts, normals, elens, e, ox, oy, dx, dy, tol):
    """Cyrus-Beck interval of the line inside convex element e; returns (t_in, t_out)."""
    t_in = -np.inf
    t_out = np.inf
    nv = verts.shape[1]
    for j in range(nv):
        nx = normals[e, j, 0]
        ny = normals[e, j, 1]
        num = nx * (ox - verts[e, j, 0]) + ny * (oy - verts[e, j, 1])
        den = nx * dx + ny * dy
        if abs(den) <= 1e-14 * elens[e, j]:
            if num > tol * elens[e, j]:
                return np.inf, -np.inf
            continue
        b = -num / den
        if den < 0.0:
            if b > t_in:
                t_in = b
        else:
            if b < t_out:
                t_out = b
    return t_in, t_out


@njit(cache=True)
def _wrap_shift(px, py, lo, length, axes, tol):
    """Offset (sx, sy) with p - s inside the box along periodic axes; flag if outside elsewhere."""
    s = np.zeros(2)
    p = (px, py)
    bad = False
    for k in range(2):
        if axes[k]:
            w = (p[k] - lo[k]) % length[k]
            if w >= length[k]:
                w -= length[k]
            s[k] = p[k] - (lo[k] + w)
        else:
            if p[k] < lo[k] - tol or p[k] > lo[k] + length[k] + tol:
                bad = True
    return s[0], s[1], bad


@njit(cache=True)
def walk(x0, dx, dy, t_min, t_max, start, shift0, verts, normals, elens, adj, lo, length, axes, eta, eps_rel, tol, cap):
    m = x0.shape[0]
    t0 = np.zeros((m, cap))
    t1 = np.zeros((m, cap))
    owner = np.zeros((m, cap), dtype=np.int64)
    shift = np.zeros((m, cap, 2))
    count = np.zeros(m, dtype=np.int64)
    status = np.zeros(m, dtype=np.int64)
    kmax = adj.shape[1]
    for i in range(m):
        cur = start[i]
        sx = shift0[i, 0]
        sy = shift0[i, 1]
        tc = t_min[i]
        first = True
        n = 0
        while True:
            ox = x0[i, 0] - sx
            oy = x0[i, 1] - sy
            eps = eps_rel * max(1.0, abs(tc))
            best = -1
            best_out = -np.inf
            for c in range(kmax + 1):
                if c == 0:
                    if not first:
                        continue
                    e = cur
                else:
                    e = adj[cur, c - 1]
                    if e < 0:
                        break
                ti, to = _clip(verts, normals, elens, e, ox, oy, dx, dy, tol)
                if ti <= tc + eps and to > tc + eps and to > best_out:
                    best_out = to
                    best = e
            if best < 0:
                status[i] = LOST
                break
            first = False
            stop = min(best_out, t_max[i])
            if n >= cap:
                status[i] = FULL
                break
            t0[i, n] = tc
            t1[i, n] = stop
            owner[i, n] = best
            shift[i, n, 0] = sx
            shift[i, n, 1] = sy
            n += 1
            cur = best
            tc = stop
            if stop >= t_max[i] - eps_rel * max(1.0, abs(t_max[i])):
                break
            ax = x0[i, 0] + (tc + eta) * dx - sx
            ay = x0[i, 1] + (tc + eta) * dy - sy
            wx, wy, bad = _wrap_shift(ax, ay, lo, length, axes, tol)
            if bad:
                status[i] = EXITED
                break
            sx += wx
            sy += wy
        count[i] = n
    return t0, t1, owner, shift, count, status


@njit(cache=True)
def locate_in_bins(pts, lo, size, nbx, nby, start, members, verts, normals, elens, tol):
    """Lowest-index element containing each point, or -1."""
    m = pts.shape[0]
    out = np.full(m, -1, dtype=np.int64)
    nv = verts.shape[1]
    for i in range(m):
        bx = min(max(int(np.floor((pts[i, 0] - lo[0]) / size[0])), 0), nbx - 1)
        by = min(max(int(np.floor((pts[i, 1] - lo[1]) / size[1])), 0), nby - 1)
        b = by * nbx + bx
        best = -1
        for k in range(start[b], start[b + 1]):
            e = members[k]
            if best >= 0 and e >= best:
                continue
            inside = True
            for j in range(nv):
                s = normals[e, j, 0] * (pts[i, 0] - verts[e, j, 0]) + normals[e, j, 1] * (pts[i, 1] - verts[e, j, 1])
                if s > tol * elens[e, j]:
                    inside = False
                    break
            if inside:
                best = e
        out[i] = best
    return out
