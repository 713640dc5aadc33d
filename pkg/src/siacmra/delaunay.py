"""Bowyer-Watson Delaunay triangulation of a planar point set."""

from __future__ import annotations

import numpy as np

from siacmra.errors import GeometryError


def _circumcircle(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return np.array([np.inf, np.inf]), np.inf
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.sum((center - a) ** 2))


def signed_area(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def bowyer_watson(points: np.ndarray, *, order: np.ndarray | None = None, rel_tol: float = 1e-12) -> np.ndarray:
    """Triangulate ``points`` (n, 2); returns counterclockwise triangles (m, 3).

    Points on a common circle are resolved by insertion order (strict
    in-circle test with relative tolerance ``rel_tol``).
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        raise GeometryError("need at least three points")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(np.max(hi - lo))
    if span == 0.0:
        raise GeometryError("degenerate point set")
    centered = pts - 0.5 * (lo + hi)
    if np.linalg.matrix_rank(centered - centered.mean(axis=0), tol=1e-12 * span) < 2:
        raise GeometryError("collinear point set")
    mid = 0.5 * (lo + hi)
    big = 1e3 * span
    supers = np.array([mid + [-big, -big], mid + [big, -big], mid + [0.0, big]])
    allpts = np.vstack([pts, supers])

    tris = [(n, n + 1, n + 2)]
    circ = [_circumcircle(*supers)]
    tol = rel_tol * span * span
    order = np.arange(n) if order is None else order
    for i in order:
        p = allpts[i]
        centers = np.array([c for c, _ in circ])
        radii2 = np.array([r for _, r in circ])
        bad = np.sum((centers - p) ** 2, axis=1) < radii2 - tol
        bad_idx = np.flatnonzero(bad)
        if bad_idx.size == 0:
            raise GeometryError(f"point {i} is not inside the triangulation")
        edge_count: dict[tuple[int, int], int] = {}
        edge_dir: dict[tuple[int, int], tuple[int, int]] = {}
        for t in bad_idx:
            a, b, c = tris[t]
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
                edge_dir[key] = e
        keep = [t for t in range(len(tris)) if not bad[t]]
        tris = [tris[t] for t in keep]
        circ = [circ[t] for t in keep]
        for key, cnt in edge_count.items():
            if cnt == 1:
                a, b = edge_dir[key]
                tris.append((a, b, i))
                circ.append(_circumcircle(allpts[a], allpts[b], p))

    out = np.array([t for t in tris if max(t) < n], dtype=np.int64)
    area = signed_area(pts, out)
    flip = area < 0
    out[flip] = out[flip][:, [0, 2, 1]]
    area = np.abs(area)
    if np.any(area <= 1e-14 * span * span):
        raise GeometryError("degenerate triangle produced")
    return out
