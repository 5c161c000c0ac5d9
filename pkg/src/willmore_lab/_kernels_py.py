"""Pure numpy implementation of the hot mesh kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature; :mod:`willmore_lab.kernels` picks one at import time.

Conventions: corner ``c`` of face ``f`` sits at ``faces[f, c]`` and is opposite
the edge ``(faces[f, c+1], faces[f, c+2])`` (indices mod 3).  For that corner
``u = x_a - x_c``, ``v = x_b - x_c``, ``d = u.v`` and ``s = |u ^ v|`` (twice the
face area), so ``cot = d / s`` in any ambient dimension.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

_NXT = np.array([1, 2, 0])
_PRV = np.array([2, 0, 1])


def _corner_vectors(x, faces):
    xc = x[faces]                        # (F, 3, m)
    u = xc[:, _NXT] - xc                 # x_a - x_c
    v = xc[:, _PRV] - xc                 # x_b - x_c
    return u, v


def corner_cotangents(x, faces):
    """Per-corner cotangents (F, 3) and doubled face areas (F,)."""
    x = np.asarray(x, dtype=float)
    u, v = _corner_vectors(x, faces)
    d = np.einsum("fck,fck->fc", u, v)
    uu = np.einsum("fck,fck->fc", u, u)
    vv = np.einsum("fck,fck->fc", v, v)
    s = np.sqrt(np.maximum(uu * vv - d * d, 0.0))
    dbl = s.mean(axis=1)
    return d / dbl[:, None], dbl


def mixed_vertex_areas(x, faces, cot, dblarea, n_vertices):
    """Mixed-Voronoi vertex areas and the number of vertices touched by an
    obtuse-face clamp."""
    x = np.asarray(x, dtype=float)
    xc = x[faces]
    e2 = np.einsum("fck,fck->fc", xc[:, _PRV] - xc[:, _NXT], xc[:, _PRV] - xc[:, _NXT])
    obtuse = (cot < 0).any(axis=1)
    contrib = np.zeros((len(faces), 3))
    # corner c adds |e_c|^2 cot_c / 8 to both endpoints of its opposite edge
    w = e2 * cot / 8.0
    contrib += w[:, _PRV] + w[:, _NXT]
    area = 0.5 * dblarea
    quarter = np.where(cot < 0, 0.5, 0.25) * area[:, None]
    contrib[obtuse] = quarter[obtuse]
    A = np.bincount(faces.ravel(), weights=contrib.ravel(), minlength=n_vertices)
    touched = np.zeros(n_vertices, dtype=bool)
    touched[faces[obtuse].ravel()] = True
    return A, int(touched.sum())


def cotan_laplacian_apply(x, faces, cot):
    """``Y_i = sum_j w_ij (x_j - x_i)`` with ``w_ij = (cot a + cot b)/2``."""
    x = np.asarray(x, dtype=float)
    a = faces[:, _NXT]
    b = faces[:, _PRV]
    diff = 0.5 * cot[..., None] * (x[b] - x[a])       # (F, 3, m)
    Y = np.zeros_like(x)
    m = x.shape[1]
    for k in range(m):
        Y[:, k] += np.bincount(a.ravel(), weights=diff[..., k].ravel(), minlength=len(x))
        Y[:, k] -= np.bincount(b.ravel(), weights=diff[..., k].ravel(), minlength=len(x))
    return Y


def _scatter(G, idx, vals):
    for k in range(G.shape[1]):
        G[:, k] += np.bincount(idx.ravel(), weights=vals[..., k].ravel(), minlength=len(G))


def willmore_energy_grad(x, faces):
    """Discrete Willmore energy ``sum |Y_i|^2 / (4 A_i)`` and its exact gradient."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    cot, dbl = corner_cotangents(x, faces)
    A, _ = mixed_vertex_areas(x, faces, cot, dbl, n)
    Y = cotan_laplacian_apply(x, faces, cot)
    H = Y / (2.0 * A[:, None])
    h2 = np.einsum("ij,ij->i", H, H)
    W = float(np.sum(h2 * A))
    Ybar = H
    Abar = -h2

    u, v = _corner_vectors(x, faces)
    ia, ib = faces[:, _NXT], faces[:, _PRV]
    xa, xb = x[ia], x[ib]
    dY = Ybar[ia] - Ybar[ib]                          # (F, 3, m)
    G = np.zeros_like(x)

    obtuse = (cot < 0).any(axis=1)
    eab = xa - xb
    e2 = np.einsum("fck,fck->fc", eab, eab)
    Asum = np.where(obtuse[:, None], 0.0, Abar[ia] + Abar[ib])

    # terms linear in cot (Laplacian weights and Voronoi areas)
    gb = 0.5 * cot[..., None] * dY
    ge = (Asum * cot / 4.0)[..., None] * eab
    _scatter(G, ib, gb - ge)
    _scatter(G, ia, -gb + ge)

    # terms through d(cot)
    sc = 0.5 * np.einsum("fck,fck->fc", xb - xa, dY) + Asum * e2 / 8.0
    d = np.einsum("fck,fck->fc", u, v)
    uu = np.einsum("fck,fck->fc", u, u)
    vv = np.einsum("fck,fck->fc", v, v)
    s = dbl[:, None]
    s3 = s ** 3
    dcu = v / s[..., None] - (d / s3)[..., None] * (vv[..., None] * u - d[..., None] * v)
    dcv = u / s[..., None] - (d / s3)[..., None] * (uu[..., None] * v - d[..., None] * u)
    _scatter(G, ia, sc[..., None] * dcu)
    _scatter(G, ib, sc[..., None] * dcv)
    _scatter(G, faces, -sc[..., None] * (dcu + dcv))

    # obtuse faces: areas are fixed fractions of the face area
    if obtuse.any():
        fo = np.flatnonzero(obtuse)
        frac = np.where(cot[fo] < 0, 0.5, 0.25)
        abar = np.sum(frac * Abar[faces[fo]], axis=1)
        uo, vo = u[fo, 0], v[fo, 0]
        do, uuo, vvo = d[fo, 0], uu[fo, 0], vv[fo, 0]
        so = dbl[fo]
        gu = (abar / (2 * so))[:, None] * (vvo[:, None] * uo - do[:, None] * vo)
        gv = (abar / (2 * so))[:, None] * (uuo[:, None] * vo - do[:, None] * uo)
        f = faces[fo]
        for k in range(x.shape[1]):
            G[:, k] += np.bincount(f[:, 1], weights=gu[:, k], minlength=n)
            G[:, k] += np.bincount(f[:, 2], weights=gv[:, k], minlength=n)
            G[:, k] -= np.bincount(f[:, 0], weights=gu[:, k] + gv[:, k], minlength=n)
    return W, G
