"""Curvature operators on triangulated immersions.

Mean curvature uses the cotangent Laplacian with mixed-Voronoi vertex areas.
The Gauss map is represented by the tangent-plane projector ``P`` (an m x m
matrix), which keeps everything codimension-agnostic: ``|dP|^2 = 2 |II|^2``.
Second-order quantities in a chart (Weingarten operator, Codazzi residual) are
obtained from per-vertex least-squares quadratic fits in chart coordinates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import kernels
from .errors import NonConformalChartError, ObtuseAreaWarning
from .mesh import TriangulatedImmersion, chart_distortions, chart_face_coords, face_areas, face_projectors

DEFAULT_CHART_TOL = 0.3


@dataclass(frozen=True, eq=False)
class CurvatureField:
    H: np.ndarray
    vertex_area: np.ndarray
    gauss_energy_density: np.ndarray

    @property
    def H_norm(self) -> np.ndarray:
        return np.linalg.norm(self.H, axis=1)


@dataclass(frozen=True, eq=False)
class WeingartenField:
    """Per-face ``H0`` (complex R^m vectors) plus the per-vertex values it was
    averaged from, in the coordinates of ``chart``."""

    H0: np.ndarray
    chart: np.ndarray | None
    vertex_H0: np.ndarray
    vertex_lambda: np.ndarray
    face_lambda: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt((np.abs(self.H0) ** 2).sum(axis=1))


# -- Laplacian and mean curvature -------------------------------------------

def cotan_weights(imm: TriangulatedImmersion):
    cot, dbl = kernels.corner_cotangents(imm.vertices, imm.faces)
    return cot, dbl


def cotan_laplacian(imm: TriangulatedImmersion, cot=None) -> sparse.csr_matrix:
    """Sparse ``L`` with ``(L x)_i = sum_j w_ij (x_j - x_i)`` (negative semidefinite)."""
    if cot is None:
        cot, _ = cotan_weights(imm)
    return cotan_matrix(imm.faces, cot, imm.n_vertices)


def cotan_matrix(faces, cot, n) -> sparse.csr_matrix:
    a = faces[:, [1, 2, 0]].ravel()
    b = faces[:, [2, 0, 1]].ravel()
    w = 0.5 * cot.ravel()
    L = sparse.coo_matrix((np.r_[w, w], (np.r_[a, b], np.r_[b, a])), shape=(n, n)).tocsr()
    L = L - sparse.diags(np.asarray(L.sum(axis=1)).ravel())
    return L.tocsr()


def vertex_areas(imm: TriangulatedImmersion, *, warn: bool = True) -> np.ndarray:
    cot, dbl = cotan_weights(imm)
    A, touched = kernels.mixed_vertex_areas(imm.vertices, imm.faces, cot, dbl, imm.n_vertices)
    if warn and touched > 0.1 * imm.n_vertices:
        warnings.warn(f"mixed-area clamping on {touched}/{imm.n_vertices} vertices",
                      ObtuseAreaWarning, stacklevel=2)
    return A


def mean_curvature(imm: TriangulatedImmersion) -> CurvatureField:
    cot, dbl = cotan_weights(imm)
    A, touched = kernels.mixed_vertex_areas(imm.vertices, imm.faces, cot, dbl, imm.n_vertices)
    if touched > 0.1 * imm.n_vertices:
        warnings.warn(f"mixed-area clamping on {touched}/{imm.n_vertices} vertices",
                      ObtuseAreaWarning, stacklevel=2)
    Y = kernels.cotan_laplacian_apply(imm.vertices, imm.faces, cot)
    H = Y / (2.0 * A[:, None])
    return CurvatureField(H=H, vertex_area=A, gauss_energy_density=gauss_energy_density(imm, cot))


def willmore_energy(imm: TriangulatedImmersion) -> float:
    """``sum_v |H_v|^2 A_v``."""
    W, _ = kernels.willmore_energy_grad(imm.vertices, imm.faces)
    return float(W)


# -- Gauss map ---------------------------------------------------------------

def vertex_projectors(imm: TriangulatedImmersion) -> np.ndarray:
    """Per-vertex tangent projectors: top-2 eigenspace of the area-weighted
    average of the incident face projectors, shape (V, m, m)."""
    Pf = face_projectors(imm) * face_areas(imm)[:, None, None]
    m = imm.ambient_dim
    S = np.zeros((imm.n_vertices, m, m))
    for c in range(3):
        np.add.at(S, imm.faces[:, c], Pf)
    _, vec = np.linalg.eigh(S)
    t = vec[:, :, -2:]
    return np.einsum("vik,vjk->vij", t, t)


def vertex_tangent_frames(imm: TriangulatedImmersion) -> np.ndarray:
    """Orthonormal (t1, t2) per vertex, oriented consistently with the faces,
    shape (V, 2, m)."""
    Pf = face_projectors(imm) * face_areas(imm)[:, None, None]
    m = imm.ambient_dim
    S = np.zeros((imm.n_vertices, m, m))
    for c in range(3):
        np.add.at(S, imm.faces[:, c], Pf)
    _, vec = np.linalg.eigh(S)
    t = np.transpose(vec[:, :, -2:], (0, 2, 1)).copy()
    # orient with the first incident face: (u, v) edge vectors must have a
    # positive determinant in the (t1, t2) coordinates
    x = imm.vertices
    first_face = np.full(imm.n_vertices, -1)
    for c in (2, 1, 0):
        first_face[imm.faces[::-1, c]] = np.arange(imm.n_faces)[::-1]
    f = imm.faces[first_face]
    corner = np.argmax(f == np.arange(imm.n_vertices)[:, None], axis=1)
    nxt = f[np.arange(len(f)), (corner + 1) % 3]
    prv = f[np.arange(len(f)), (corner + 2) % 3]
    u = x[nxt] - x
    v = x[prv] - x
    det = (np.einsum("vi,vi->v", u, t[:, 0]) * np.einsum("vi,vi->v", v, t[:, 1])
           - np.einsum("vi,vi->v", u, t[:, 1]) * np.einsum("vi,vi->v", v, t[:, 0]))
    flip = det < 0
    t[flip, 1] *= -1
    return t


def gauss_energy_density(imm: TriangulatedImmersion, cot=None) -> np.ndarray:
    """Per-face density of ``E`` (energy divided by face area)."""
    return _gauss_face_energy(imm, cot) / face_areas(imm)


def _gauss_face_energy(imm, cot=None):
    if cot is None:
        cot, _ = cotan_weights(imm)
    P = vertex_projectors(imm)
    f = imm.faces
    # corner c weighs the opposite edge (f[c+1], f[c+2])
    dP2 = np.stack([np.sum((P[f[:, (c + 1) % 3]] - P[f[:, (c + 2) % 3]]) ** 2, axis=(1, 2))
                    for c in range(3)], axis=1)
    return 0.25 * np.sum(cot * dP2, axis=1)


def gauss_map_energy(imm: TriangulatedImmersion) -> float:
    """Discrete ``int |II|^2``: half the cotan Dirichlet energy of the tangent
    projector field (``|P_a - P_b|^2 = 2 sum sin^2`` of the principal angles)."""
    return float(math.fsum(_gauss_face_energy(imm)))


def principal_angles(P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
    """Principal angles between two tangent 2-planes given by their projectors."""
    _, s1 = np.linalg.eigh(P1)
    _, s2 = np.linalg.eigh(P2)
    A = s1[:, -2:]
    B = s2[:, -2:]
    sv = np.linalg.svd(A.T @ B, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))


def gauss_bonnet_residual(imm: TriangulatedImmersion) -> float:
    """``E - (4 W - 4 pi chi)``; zero in the smooth limit."""
    E = gauss_map_energy(imm)
    W = willmore_energy(imm)
    return E - (4.0 * W - 4.0 * math.pi * imm.euler_characteristic)


def gauss_bonnet_report(imm: TriangulatedImmersion) -> dict:
    E = gauss_map_energy(imm)
    W = willmore_energy(imm)
    chi = imm.euler_characteristic
    res = E - (4.0 * W - 4.0 * math.pi * chi)
    return {"E": E, "W": W, "chi": chi, "residual": res, "relative": abs(res) / E if E else abs(res)}


# -- local chart stencils ------------------------------------------------------

def _half_edge_offsets(imm, zf):
    """Directed edge offsets ``z_head - z_tail`` read off face corners."""
    f = imm.faces
    tails = f.ravel()
    heads = f[:, [1, 2, 0]].ravel()
    offs = (zf[:, [1, 2, 0]] - zf).ravel()
    return tails, heads, offs


class VertexStencils:
    """Per-vertex neighbourhoods with complex offsets in chart coordinates.

    Each vertex gets its one-ring, extended by the two-ring when the one-ring
    has fewer than ``min_size`` vertices.  Offsets are accumulated along mesh
    edges, so periodic (multi-valued) charts given per face work as well.
    """

    def __init__(self, imm: TriangulatedImmersion, offsets_fn, min_size: int = 6, frames=None):
        n = imm.n_vertices
        tails, heads, offs = offsets_fn
        # include reversed half-edges so that open patches get full rings
        tails, heads, offs = np.r_[tails, heads], np.r_[heads, tails], np.r_[offs, -offs]
        order = np.lexsort((heads, tails))
        tails, heads, offs = tails[order], heads[order], offs[order]
        start = np.searchsorted(tails, np.arange(n + 1))
        self.index: list[np.ndarray] = []
        self.offset: list[np.ndarray] = []
        for i in range(n):
            nb = heads[start[i]:start[i + 1]]
            dz = offs[start[i]:start[i + 1]]
            ring = dict(zip(nb.tolist(), dz.tolist()))
            if len(ring) < min_size:
                for j, zj in list(ring.items()):
                    for k, zk in zip(heads[start[j]:start[j + 1]].tolist(),
                                     offs[start[j]:start[j + 1]].tolist()):
                        if k != i and k not in ring:
                            ring[k] = zj + zk
            idx = np.fromiter(ring.keys(), dtype=np.int64, count=len(ring))
            self.index.append(idx)
            if frames is None:
                self.offset.append(np.fromiter(ring.values(), dtype=complex, count=len(ring)))
            else:
                d = imm.vertices[idx] - imm.vertices[i]
                self.offset.append(d @ frames[i, 0] + 1j * (d @ frames[i, 1]))


def chart_stencils(imm: TriangulatedImmersion, chart=None) -> VertexStencils:
    if chart is None:
        t = vertex_tangent_frames(imm)
        x = imm.vertices
        f = imm.faces
        tails = f.ravel()
        heads = f[:, [1, 2, 0]].ravel()
        d = x[heads] - x[tails]
        offs = np.einsum("ek,ek->e", d, t[tails, 0]) + 1j * np.einsum("ek,ek->e", d, t[tails, 1])
        return VertexStencils(imm, (tails, heads, offs), frames=t)
    zf = chart_face_coords(imm, chart)
    return VertexStencils(imm, _half_edge_offsets(imm, zf))


def _quadratic_fits(imm, stencils: VertexStencils):
    """Per vertex: first derivatives (2, m) and second derivatives (3, m) of
    the immersion in chart coordinates (xx, xy, yy)."""
    x = imm.vertices
    n, m = x.shape
    D1 = np.zeros((n, 2, m))
    D2 = np.zeros((n, 3, m))
    sizes = np.array([len(s) for s in stencils.index])
    for k in np.unique(sizes):
        vs = np.flatnonzero(sizes == k)
        dz = np.stack([stencils.offset[v] for v in vs])
        nb = np.stack([stencils.index[v] for v in vs])
        dx, dy = dz.real, dz.imag
        M = np.stack([dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy], axis=2)   # (b, k, 5)
        rhs = x[nb] - x[vs][:, None, :]                                          # (b, k, m)
        coef = np.linalg.pinv(M) @ rhs                                           # (b, 5, m)
        D1[vs] = coef[:, :2]
        D2[vs] = coef[:, 2:]
    return D1, D2


def _linear_fits(values, stencils: VertexStencils):
    """Per vertex (d/dx, d/dy) of a (V, k) complex or real field."""
    vals = np.asarray(values)
    if vals.ndim == 1:
        vals = vals[:, None]
    n = len(vals)
    out = np.zeros((n, 2) + vals.shape[1:], dtype=np.result_type(vals, float))
    sizes = np.array([len(s) for s in stencils.index])
    for k in np.unique(sizes):
        vs = np.flatnonzero(sizes == k)
        dz = np.stack([stencils.offset[v] for v in vs])
        nb = np.stack([stencils.index[v] for v in vs])
        M = np.stack([dz.real, dz.imag], axis=2)
        rhs = vals[nb] - vals[vs][:, None]
        out[vs] = np.linalg.pinv(M) @ rhs
    return out


def complex_derivatives(values, stencils: VertexStencils):
    """Least-squares ``(d/dz, d/dzbar)`` per vertex."""
    g = _linear_fits(values, stencils)
    dz = 0.5 * (g[:, 0] - 1j * g[:, 1])
    dzb = 0.5 * (g[:, 0] + 1j * g[:, 1])
    return dz, dzb


# -- Weingarten operator ---------------------------------------------------------

def _check_chart(imm, chart, tol):
    dis = np.abs(chart_distortions(imm, chart))
    worst = float(dis.max())
    if worst > tol:
        raise NonConformalChartError(
            f"chart is not conformal: max |Dis| = {worst:.3e} exceeds {tol:.1e} "
            f"(face {int(np.argmax(dis))})")
    zf = chart_face_coords(imm, chart)
    area = ((zf[:, 1] - zf[:, 0]).conjugate() * (zf[:, 2] - zf[:, 0])).imag
    if np.any(area <= 0):
        raise NonConformalChartError(f"chart reverses orientation on face {int(np.argmin(area))}")


def vertex_weingarten(imm: TriangulatedImmersion, stencils: VertexStencils):
    """Per-vertex ``H0 = e^{-2 lambda} (II_xx - II_yy + 2i II_xy) / 2`` and lambda."""
    D1, D2 = _quadratic_fits(imm, stencils)
    a, b = D1[:, 0], D1[:, 1]
    # projector onto the fitted tangent plane
    e1 = a / np.linalg.norm(a, axis=1)[:, None]
    w = b - np.einsum("ij,ij->i", b, e1)[:, None] * e1
    e2 = w / np.linalg.norm(w, axis=1)[:, None]

    def normal(y):
        return y - np.einsum("ij,ij->i", y, e1)[:, None] * e1 - np.einsum("ij,ij->i", y, e2)[:, None] * e2

    Ixx, Ixy, Iyy = normal(D2[:, 0]), normal(D2[:, 1]), normal(D2[:, 2])
    e2l = 0.5 * (np.einsum("ij,ij->i", a, a) + np.einsum("ij,ij->i", b, b))
    H0 = 0.5 * (Ixx - Iyy + 2j * Ixy) / e2l[:, None]
    return H0, 0.5 * np.log(e2l)


def face_conformal_factors(imm: TriangulatedImmersion, chart) -> np.ndarray:
    """Per-face lambda with ``e^{2 lambda} = tr g / 2`` in chart coordinates."""
    from .mesh import chart_jacobians
    px, py = chart_jacobians(imm, chart)
    tr = np.einsum("ij,ij->i", px, px) + np.einsum("ij,ij->i", py, py)
    return 0.5 * np.log(0.5 * tr)


def weingarten(imm: TriangulatedImmersion, chart=None, tol: float = DEFAULT_CHART_TOL,
               stencils: VertexStencils | None = None) -> WeingartenField:
    """Weingarten operator ``H0`` per face.

    ``chart`` gives conformal coordinates per vertex (V,) / (V, 2) or per face
    corner (F, 3) / (F, 3, 2).  Without a chart, each vertex uses its own
    tangent-plane coordinates, which are conformal at the vertex; magnitudes
    ``|H0|`` are then meaningful but phases are not globally coherent.
    """
    if chart is not None:
        _check_chart(imm, chart, tol)
    st = stencils if stencils is not None else chart_stencils(imm, chart)
    H0v, lam_v = vertex_weingarten(imm, st)
    Hf = H0v[imm.faces].mean(axis=1)
    # enforce normality with respect to the face plane
    from .mesh import face_frames
    e1, e2 = face_frames(imm)
    Hf = Hf - np.einsum("fk,fk->f", Hf, e1)[:, None] * e1 - np.einsum("fk,fk->f", Hf, e2)[:, None] * e2
    lam_f = face_conformal_factors(imm, chart) if chart is not None else lam_v[imm.faces].mean(axis=1)
    return WeingartenField(H0=Hf, chart=None if chart is None else np.asarray(chart),
                           vertex_H0=H0v, vertex_lambda=lam_v, face_lambda=lam_f)


def umbilic_detect(wf: WeingartenField, tol: float, imm: TriangulatedImmersion | None = None) -> set:
    """Faces with ``|H0| * (local length scale) < tol``.  The length scale is
    the square root of the face area when the immersion is supplied, else 1."""
    mag = wf.magnitude
    scale = np.sqrt(face_areas(imm)) if imm is not None else 1.0
    return set(np.flatnonzero(mag * scale < tol).tolist())


# -- Codazzi-Mainardi ------------------------------------------------------------

def codazzi_residual_field(imm: TriangulatedImmersion, chart=None, H=None, tol: float = DEFAULT_CHART_TOL):
    """Per-vertex ``e^{-2l} dzbar(e^{2l} conj(H0).H) - (H.dz H + conj(H0).dzbar H)``."""
    if chart is not None:
        _check_chart(imm, chart, tol)
    st = chart_stencils(imm, chart)
    H0v, lam = vertex_weingarten(imm, st)
    if H is None:
        H = mean_curvature(imm).H
    K0 = np.conj(H0v)
    F = np.exp(2 * lam) * np.einsum("vk,vk->v", K0, H)
    _, dzb_F = complex_derivatives(F, st)
    dzH, dzbH = complex_derivatives(H, st)
    lhs = np.exp(-2 * lam) * dzb_F[:, 0]
    rhs = np.einsum("vk,vk->v", H, dzH) + np.einsum("vk,vk->v", K0, dzbH)
    return lhs - rhs


def codazzi_residual(imm: TriangulatedImmersion, chart=None, H=None, tol: float = DEFAULT_CHART_TOL) -> float:
    """L2 norm (vertex-area weighted) of :func:`codazzi_residual_field`."""
    r = codazzi_residual_field(imm, chart, H, tol)
    A = vertex_areas(imm, warn=False)
    return float(math.sqrt(np.sum(np.abs(r) ** 2 * A)))


def vertex_normals(imm: TriangulatedImmersion) -> np.ndarray:
    """Area-weighted oriented unit normals (m = 3 only)."""
    if imm.ambient_dim != 3:
        raise ValueError("oriented vertex normals need m = 3")
    u, v = imm.edge_vectors
    fn = np.cross(u, v)
    n = np.zeros_like(imm.vertices)
    for c in range(3):
        np.add.at(n, imm.faces[:, c], fn)
    return n / np.linalg.norm(n, axis=1)[:, None]
