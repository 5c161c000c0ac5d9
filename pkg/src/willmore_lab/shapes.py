"""Test-surface generators: icospheres, tori of revolution, ellipsoids, flat rigs
and disk-type patches."""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriangulatedImmersion


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1)[:, None], f


def _subdivide(v, f):
    """Loop-style 1-to-4 split with midpoints (positions not smoothed)."""
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    n = len(v)
    m01, m12, m20 = (n + inv[i * len(f):(i + 1) * len(f)] for i in range(3))
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    nf = np.concatenate([np.stack([a, m01, m20], 1), np.stack([b, m12, m01], 1),
                         np.stack([c, m20, m12], 1), np.stack([m01, m12, m20], 1)])
    return np.vstack([v, mid]), nf


def icosphere_arrays(level: int, radius: float = 1.0):
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
        v /= np.linalg.norm(v, axis=1)[:, None]
    return radius * v, f


def icosphere(level: int = 4, radius: float = 1.0, center=None, m: int = 3) -> TriangulatedImmersion:
    v, f = icosphere_arrays(level, radius)
    if center is not None:
        v = v + np.asarray(center, dtype=float)
    return TriangulatedImmersion(_embed(v, m), f)


def ellipsoid(a: float = 1.0, b: float = 1.0, c: float = 0.5, level: int = 4) -> TriangulatedImmersion:
    v, f = icosphere_arrays(level)
    return TriangulatedImmersion(v * np.array([a, b, c]), f)


def prolate_spheroid(a: float = 100.0, b: float = 1.0, n_around: int = 32) -> TriangulatedImmersion:
    """Spheroid with semi-axes (a, b, b) around the x-axis, meshed by rings
    whose spacing follows the local circumference, so triangles stay
    near-isotropic at large aspect ratio.  Consecutive rings are staggered
    by half a step; the poles are closed by fans."""
    n = int(n_around)
    tip = b * b / max(a, b)                          # radius of curvature at the tips
    ds_min = 2 * np.pi * tip / n
    half = []
    t = ds_min / max(a, b)
    while t < np.pi / 2:
        half.append(t)
        speed = math.hypot(a * math.sin(t), b * math.cos(t))
        t += max(2 * np.pi * b * math.sin(t) / n, ds_min) / speed
    half = np.array(half)
    if len(half) > 1 and np.pi / 2 - half[-1] < 0.5 * (half[-1] - half[-2]):
        half = half[:-1]
    ts = np.r_[half, np.pi / 2, np.pi - half[::-1]]
    step = 2 * np.pi / n
    pts = [np.array([a, 0.0, 0.0])]
    rings = []
    for k, tk in enumerate(ts):
        ang = step * (np.arange(n) + 0.5 * (k % 2))
        rings.append(len(pts) + np.arange(n))
        r = b * math.sin(tk)
        pts.extend(np.stack([np.full(n, a * math.cos(tk)), r * np.cos(ang), r * np.sin(ang)], 1))
    south = len(pts)
    pts.append(np.array([-a, 0.0, 0.0]))
    i = np.arange(n)
    j = (i + 1) % n
    faces = [np.stack([np.zeros(n, dtype=np.int64), rings[0][j], rings[0][i]], 1)]
    for k in range(len(rings) - 1):
        A, B = rings[k], rings[k + 1]
        if k % 2 == 0:          # B[i] lies half a step after A[i]
            faces += [np.stack([A[i], A[j], B[i]], 1), np.stack([A[i], B[i], B[(i - 1) % n]], 1)]
        else:                   # A[i] lies half a step after B[i]
            faces += [np.stack([A[i], B[j], B[i]], 1), np.stack([A[i], A[j], B[j]], 1)]
    L = rings[-1]
    faces.append(np.stack([np.full(n, south), L[i], L[j]], 1))
    x = np.array(pts)
    f = np.concatenate(faces).astype(np.int64)
    vol = np.einsum("ij,ij->i", x[f[:, 0]], np.cross(x[f[:, 1]], x[f[:, 2]])).sum()
    if vol < 0:
        f = f[:, ::-1].copy()
    return TriangulatedImmersion(x, f)


def torus_grid(n_u: int, n_v: int, pattern: str = "diagonal"):
    """Triangulated periodic grid; returns faces over vertex index i*n_v + j.

    ``pattern='diagonal'`` splits every quad along the same diagonal;
    ``'unionjack'`` alternates diagonals so that the mesh is symmetric under
    reflection in both grid directions (requires even sizes).
    """
    if pattern == "unionjack" and (n_u % 2 or n_v % 2):
        raise ValueError("union-jack pattern requires even grid sizes")
    i, j = np.meshgrid(np.arange(n_u), np.arange(n_v), indexing="ij")
    i, j = i.ravel(), j.ravel()
    ip, jp = (i + 1) % n_u, (j + 1) % n_v
    v00, v10, v01, v11 = i * n_v + j, ip * n_v + j, i * n_v + jp, ip * n_v + jp
    if pattern == "diagonal":
        flip = np.zeros_like(i, dtype=bool)
    elif pattern == "unionjack":
        flip = ((i + j) % 2).astype(bool)
    else:
        raise ValueError(f"unknown grid pattern {pattern!r}")
    f1 = np.where(flip[:, None], np.stack([v00, v10, v01], 1), np.stack([v00, v10, v11], 1))
    f2 = np.where(flip[:, None], np.stack([v10, v11, v01], 1), np.stack([v00, v11, v01], 1))
    return np.concatenate([f1, f2]).astype(np.int64)


def torus_of_revolution_arrays(R: float, r: float, n_u: int, n_v: int, pattern: str = "diagonal"):
    """(u along the big circle, v around the tube)."""
    u = 2 * np.pi * np.arange(n_u) / n_u
    w = 2 * np.pi * np.arange(n_v) / n_v
    U, W = np.meshgrid(u, w, indexing="ij")
    rho = R + r * np.cos(W)
    x = np.stack([rho * np.cos(U), rho * np.sin(U), r * np.sin(W)], axis=-1).reshape(-1, 3)
    return x, torus_grid(n_u, n_v, pattern)


def torus(R: float = math.sqrt(2.0), r: float = 1.0, n_u: int = 128, n_v: int = 128,
          pattern: str = "diagonal", m: int = 3) -> TriangulatedImmersion:
    x, f = torus_of_revolution_arrays(R, r, n_u, n_v, pattern)
    return TriangulatedImmersion(_embed(x, m), f)


def flat_torus(a: float = 1.0, b: float = 1.0, n_u: int = 16, n_v: int = 16,
               pattern: str = "diagonal") -> TriangulatedImmersion:
    """Product of two circles in R^4 with circumferences a and b (intrinsically flat)."""
    u = 2 * np.pi * np.arange(n_u) / n_u
    w = 2 * np.pi * np.arange(n_v) / n_v
    U, W = np.meshgrid(u, w, indexing="ij")
    ra, rb = a / (2 * np.pi), b / (2 * np.pi)
    x = np.stack([ra * np.cos(U), ra * np.sin(U), rb * np.cos(W), rb * np.sin(W)],
                 axis=-1).reshape(-1, 4)
    return TriangulatedImmersion(x, torus_grid(n_u, n_v, pattern))


def _embed(x, m):
    if m == x.shape[1]:
        return x
    if m < x.shape[1]:
        raise ValueError("ambient dimension must be at least 3")
    return np.hstack([x, np.zeros((len(x), m - x.shape[1]))])


# -- disk-type patches (open meshes, returned as raw arrays) ------------------

def disk_mesh(n_rings: int, radius: float = 1.0, n_first: int = 6):
    """Concentric-ring triangulation of a disk; returns (points2d, faces)."""
    pts = [np.zeros(2)]
    rings = [[0]]
    for k in range(1, n_rings + 1):
        nk = n_first * k
        th = 2 * np.pi * np.arange(nk) / nk
        start = len(pts)
        pts.extend(np.stack([np.cos(th), np.sin(th)], 1) * radius * k / n_rings)
        rings.append(list(range(start, start + nk)))
    pts = np.array(pts)
    faces = []
    for k in range(1, n_rings + 1):
        inner, outer = rings[k - 1], rings[k]
        ni, no = len(inner), len(outer)
        if ni == 1:
            faces += [[inner[0], outer[o], outer[(o + 1) % no]] for o in range(no)]
            continue
        # merge the two rings by angle
        i = o = 0
        while i < ni or o < no:
            if o < no and (i >= ni or (o + 1) / no <= (i + 1) / ni):
                faces.append([inner[i % ni], outer[o], outer[(o + 1) % no]])
                o += 1
            else:
                faces.append([inner[i], outer[o % no], inner[(i + 1) % ni]])
                i += 1
    return pts, np.array(faces, dtype=np.int64)


def disk_grid(n: int, radius: float = 1.0):
    """Square grid clipped to a disk (union-jack split), useful for graph patches."""
    h = 2.0 * radius / n
    xs = -radius + h * np.arange(n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    inside = X ** 2 + Y ** 2 <= radius ** 2 * (1 + 1e-12)
    idx = -np.ones(X.shape, dtype=np.int64)
    idx[inside] = np.arange(inside.sum())
    faces = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i, j + 1], idx[i + 1, j + 1]
            if (i + j) % 2 == 0:
                tris = [(a, b, d), (a, d, c)]
            else:
                tris = [(a, b, c), (b, d, c)]
            for t in tris:
                if min(t) >= 0:
                    faces.append(t)
    pts = np.stack([X[inside], Y[inside]], 1)
    faces = np.array(faces, dtype=np.int64)
    return _largest_disk_component(pts, faces)


def _largest_disk_component(pts, faces):
    used = np.unique(faces)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return pts[used], remap[faces]


def spherical_cap(theta_max: float, n_rings: int = 24, radius: float = 1.0):
    """Cap of the sphere around the north pole, sampled by stereographic
    projection of a concentric disk mesh.  Returns (points3d, faces, uv)."""
    rho = math.tan(theta_max / 2.0)
    uv, faces = disk_mesh(n_rings, rho)
    s = (uv ** 2).sum(1)
    # inverse stereographic projection from the south pole
    x = np.column_stack([2 * uv[:, 0], 2 * uv[:, 1], 1 - s]) / (1 + s)[:, None]
    return radius * x, faces, uv


def cylinder_patch(height: float, angle: float, n_h: int, n_a: int, radius: float = 1.0):
    """Cylinder piece, returns (points3d, faces, uv) with uv=(arclength, height)."""
    t = np.linspace(-angle / 2, angle / 2, n_a + 1)
    z = np.linspace(-height / 2, height / 2, n_h + 1)
    T, Z = np.meshgrid(t, z, indexing="ij")
    x = np.stack([radius * np.cos(T), radius * np.sin(T), Z], -1).reshape(-1, 3)
    uv = np.stack([radius * T, Z], -1).reshape(-1, 2)
    faces = _grid_faces(n_a, n_h)
    return x, faces, uv


def _grid_faces(n_a, n_b):
    faces = []
    for i in range(n_a):
        for j in range(n_b):
            a = i * (n_b + 1) + j
            b = (i + 1) * (n_b + 1) + j
            c, d = a + 1, b + 1
            if (i + j) % 2 == 0:
                faces += [(a, b, d), (a, d, c)]
            else:
                faces += [(a, b, c), (b, d, c)]
    return np.array(faces, dtype=np.int64)


def graph_patch(func, n: int = 32, radius: float = 1.0):
    """Graph of ``func(x, y)`` over a concentric disk mesh with ``n`` rings;
    returns (points3d, faces, uv)."""
    uv, faces = disk_mesh(n, radius)
    z = func(uv[:, 0], uv[:, 1])
    return np.column_stack([uv, z]), faces, uv
