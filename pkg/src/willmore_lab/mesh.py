"""Discrete immersions: triangle meshes of closed oriented surfaces in R^m.

A :class:`TriangulatedImmersion` is a piecewise-linear map from a closed
oriented triangulated surface into R^m.  Per-face quantities are evaluated
through the affine map from the reference triangle (0,0), (1,0), (0,1), so
that for a face ``(a, b, c)`` the coordinate derivatives are the edge vectors
``x_b - x_a`` and ``x_c - x_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateFaceError, PreconditionError, TopologyError

DEFAULT_EPS_DET = 1e-24


class Topology:
    """Connectivity of a closed oriented triangle mesh.

    Edges are stored as sorted vertex pairs.  ``face_edges[f, c]`` is the edge
    opposite corner ``c`` of face ``f`` and ``edge_faces[e]`` lists the two
    incident faces (the first one traverses the edge from low to high index).
    """

    def __init__(self, faces, n_vertices: int, *, require_closed: bool = True):
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise TopologyError("faces must be an (F, 3) array of vertex indices")
        if faces.size and (faces.min() < 0 or faces.max() >= n_vertices):
            raise TopologyError("face references a vertex index out of range")
        self.faces = faces
        self.n_vertices = int(n_vertices)
        self.n_faces = len(faces)

        bad = np.flatnonzero((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                             | (faces[:, 0] == faces[:, 2]))
        if bad.size:
            raise TopologyError(f"face {int(bad[0])} repeats a vertex")

        # half-edge (corner c) runs from faces[f, c+1] to faces[f, c+2]
        tail = faces[:, [1, 2, 0]].ravel()
        head = faces[:, [2, 0, 1]].ravel()
        key = tail * self.n_vertices + head
        order = np.argsort(key, kind="stable")
        sk = key[order]
        dup = np.flatnonzero(sk[1:] == sk[:-1])
        if dup.size:
            h = order[dup[0]]
            raise TopologyError(
                f"half-edge ({int(tail[h])}, {int(head[h])}) used twice "
                f"(non-manifold or inconsistently oriented near face {int(h // 3)})")

        lo = np.minimum(tail, head)
        hi = np.maximum(tail, head)
        ukey = lo * self.n_vertices + hi
        uniq, inv, counts = np.unique(ukey, return_inverse=True, return_counts=True)
        self.edges = np.stack([uniq // self.n_vertices, uniq % self.n_vertices], axis=1)
        self.n_edges = len(self.edges)
        self.face_edges = inv.reshape(-1, 3)
        self.boundary_edges = np.flatnonzero(counts == 1)
        if require_closed and self.boundary_edges.size:
            a, b = self.edges[self.boundary_edges[0]]
            raise TopologyError(f"open boundary at edge ({int(a)}, {int(b)})")
        if np.any(counts > 2):
            a, b = self.edges[np.flatnonzero(counts > 2)[0]]
            raise TopologyError(f"non-manifold edge ({int(a)}, {int(b)})")

        ef = -np.ones((self.n_edges, 2), dtype=np.int64)
        he_face = np.repeat(np.arange(self.n_faces), 3)
        forward = tail < head
        ef[inv[forward], 0] = he_face[forward]
        ef[inv[~forward], 1] = he_face[~forward]
        self.edge_faces = ef

        used = np.zeros(self.n_vertices, dtype=bool)
        used[faces.ravel()] = True
        if not used.all():
            raise TopologyError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any face")

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @cached_property
    def vertex_adjacency(self):
        from scipy import sparse
        a, b = self.edges[:, 0], self.edges[:, 1]
        n = self.n_vertices
        data = np.ones(2 * self.n_edges)
        return sparse.csr_matrix((data, (np.r_[a, b], np.r_[b, a])), shape=(n, n))

    @cached_property
    def n_components(self) -> int:
        from scipy.sparse.csgraph import connected_components
        return int(connected_components(self.vertex_adjacency, directed=False)[0])

    @cached_property
    def vertex_faces(self) -> list[np.ndarray]:
        order = np.argsort(self.faces.ravel(), kind="stable")
        counts = np.bincount(self.faces.ravel(), minlength=self.n_vertices)
        splits = np.cumsum(counts)[:-1]
        return np.split(order // 3, splits)

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        adj = self.vertex_adjacency
        return [adj.indices[adj.indptr[i]:adj.indptr[i + 1]] for i in range(self.n_vertices)]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges].ravel())

    def boundary_loops(self) -> list[np.ndarray]:
        """Boundary loops following the face orientation."""
        faces = self.faces
        nxt = {}
        for e in self.boundary_edges:
            f = self.edge_faces[e, 0] if self.edge_faces[e, 0] >= 0 else self.edge_faces[e, 1]
            c = int(np.flatnonzero(self.face_edges[f] == e)[0])
            nxt[int(faces[f, (c + 1) % 3])] = int(faces[f, (c + 2) % 3])
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            v = nxt[start]
            while v != start:
                loop.append(v)
                seen.add(v)
                v = nxt[v]
            loops.append(np.array(loop, dtype=np.int64))
        return loops


@dataclass(frozen=True)
class FaceMetric:
    g11: float
    g12: float
    g22: float

    def __post_init__(self):
        if not (self.g11 > 0 and self.g22 > 0 and self.det > 0):
            raise PreconditionError(
                f"metric ({self.g11}, {self.g12}, {self.g22}) is not positive definite")

    @property
    def det(self) -> float:
        return self.g11 * self.g22 - self.g12 * self.g12

    @property
    def trace(self) -> float:
        return self.g11 + self.g22

    @property
    def area_element(self) -> float:
        return math.sqrt(self.det)

    def matrix(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g12, self.g22]])


@dataclass(frozen=True)
class TangentFrame:
    e1: np.ndarray
    e2: np.ndarray
    conformal_factor: float


@dataclass(frozen=True, eq=False)
class TriangulatedImmersion:
    """Piecewise-linear immersion of a closed oriented surface into R^m."""

    vertices: np.ndarray
    faces: np.ndarray
    marked_points: tuple[int, ...] | None = None
    eps_det: float = DEFAULT_EPS_DET
    topology: Topology | None = field(default=None, repr=False)
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] < 3:
            raise TopologyError("vertices must be a (V, m) array with m >= 3")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.topology is None:
            object.__setattr__(self, "topology", Topology(self.faces, len(v)))
        object.__setattr__(self, "faces", self.topology.faces)
        if self.marked_points is not None:
            mp = tuple(int(i) for i in self.marked_points)
            if len(mp) < 3 or len(set(mp)) != len(mp):
                raise PreconditionError("marked_points needs at least 3 distinct vertices")
            if min(mp) < 0 or max(mp) >= len(v):
                raise PreconditionError("marked point index out of range")
            object.__setattr__(self, "marked_points", mp)
        if self.validate:
            self.check()

    # -- structure -------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def euler_characteristic(self) -> int:
        return self.topology.euler_characteristic

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    def check(self) -> None:
        topo = self.topology
        if topo.boundary_edges.size:
            a, b = topo.edges[topo.boundary_edges[0]]
            raise TopologyError(f"open boundary at edge ({int(a)}, {int(b)})")
        if topo.n_components != 1:
            raise TopologyError(f"mesh has {topo.n_components} connected components")
        if topo.euler_characteristic % 2:
            raise TopologyError(f"odd Euler characteristic {topo.euler_characteristic}")
        det = gram_determinants(self)
        bad = np.flatnonzero(~(det > self.eps_det))
        if bad.size:
            raise DegenerateFaceError(
                f"face {int(bad[0])} is degenerate (Gram determinant {det[bad[0]]:.3e})",
                face=int(bad[0]))

    def with_vertices(self, vertices, *, validate: bool = True) -> "TriangulatedImmersion":
        return TriangulatedImmersion(vertices, self.faces, marked_points=self.marked_points,
                                     eps_det=self.eps_det, topology=self.topology,
                                     validate=validate)

    def with_marked_points(self, marked) -> "TriangulatedImmersion":
        return TriangulatedImmersion(self.vertices, self.faces, marked_points=tuple(marked),
                                     eps_det=self.eps_det, topology=self.topology,
                                     validate=False)

    def resolved_marked_points(self) -> tuple[int, int, int]:
        if self.marked_points is not None:
            return tuple(self.marked_points[:3])
        return farthest_point_triple(self.vertices)

    @cached_property
    def edge_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.vertices
        f = self.faces
        return x[f[:, 1]] - x[f[:, 0]], x[f[:, 2]] - x[f[:, 0]]

    @cached_property
    def diameter(self) -> float:
        x = self.vertices
        lo, hi = x.min(axis=0), x.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def mean_edge_length(self) -> float:
        e = self.topology.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    @cached_property
    def max_edge_length(self) -> float:
        e = self.topology.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).max())


def farthest_point_triple(points: np.ndarray) -> tuple[int, int, int]:
    """Three mutually far vertices by a farthest-point sweep from vertex 0."""
    p = np.asarray(points, dtype=float)
    d0 = np.linalg.norm(p - p[0], axis=1)
    a = int(np.argmax(d0))
    da = np.linalg.norm(p - p[a], axis=1)
    b = int(np.argmax(da))
    db = np.linalg.norm(p - p[b], axis=1)
    c = int(np.argmax(np.minimum(da, db)))
    if len({a, b, c}) < 3:
        rest = [i for i in range(len(p)) if i not in (a, b)]
        c = rest[0]
    return a, b, c


# -- first fundamental form --------------------------------------------------

def face_metrics(imm: TriangulatedImmersion) -> np.ndarray:
    """Per-face (g11, g12, g22) in reference-triangle coordinates, shape (F, 3)."""
    u, v = imm.edge_vectors
    return np.stack([np.einsum("ij,ij->i", u, u), np.einsum("ij,ij->i", u, v),
                     np.einsum("ij,ij->i", v, v)], axis=1)


def gram_determinants(imm: TriangulatedImmersion) -> np.ndarray:
    """``|u ^ v|^2`` summed over the wedge components (Lagrange identity), which
    avoids the cancellation of ``g11 g22 - g12^2`` on nearly flat faces."""
    u, v = imm.edge_vectors
    i, j = np.triu_indices(u.shape[1], 1)
    w = u[:, i] * v[:, j] - u[:, j] * v[:, i]
    return np.einsum("ij,ij->i", w, w)


def face_metric(imm: TriangulatedImmersion, face: int, eps_det: float | None = None) -> FaceMetric:
    if not 0 <= face < imm.n_faces:
        raise IndexError(f"face index {face} out of range")
    u, v = imm.edge_vectors
    return metric_from_edges(u[face], v[face], imm.eps_det if eps_det is None else eps_det,
                             face=face)


def metric_from_edges(u, v, eps_det: float = DEFAULT_EPS_DET, face: int | None = None) -> FaceMetric:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    g11, g12, g22 = float(u @ u), float(u @ v), float(v @ v)
    i, j = np.triu_indices(len(u), 1)
    det = float(np.sum((u[i] * v[j] - u[j] * v[i]) ** 2))
    if not det > eps_det:
        where = "" if face is None else f"face {face}: "
        raise DegenerateFaceError(f"{where}Gram determinant {det:.3e} <= {eps_det:.1e}", face=face)
    return FaceMetric(g11, g12, g22)


def face_areas(imm: TriangulatedImmersion) -> np.ndarray:
    return 0.5 * np.sqrt(np.maximum(gram_determinants(imm), 0.0))


def total_area(imm: TriangulatedImmersion) -> float:
    return float(math.fsum(face_areas(imm)))


def min_gram_determinant(imm: TriangulatedImmersion) -> float:
    return float(gram_determinants(imm).min())


def face_frames(imm: TriangulatedImmersion) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent pair per face (Gram-Schmidt on the edge vectors)."""
    u, v = imm.edge_vectors
    e1 = u / np.linalg.norm(u, axis=1)[:, None]
    w = v - np.einsum("ij,ij->i", v, e1)[:, None] * e1
    e2 = w / np.linalg.norm(w, axis=1)[:, None]
    return e1, e2


def tangent_frame(imm: TriangulatedImmersion, face: int) -> TangentFrame:
    e1, e2 = face_frames(imm)
    g = face_metric(imm, face)
    return TangentFrame(e1[face], e2[face], 0.25 * math.log(g.det))


def face_projectors(imm: TriangulatedImmersion) -> np.ndarray:
    e1, e2 = face_frames(imm)
    return np.einsum("fi,fj->fij", e1, e1) + np.einsum("fi,fj->fij", e2, e2)


# -- Hopf differential and distortion -----------------------------------------

def chart_face_coords(imm: TriangulatedImmersion, chart) -> np.ndarray:
    """Normalize a chart to per-face complex corner coordinates, shape (F, 3)."""
    c = np.asarray(chart)
    if np.iscomplexobj(c):
        if c.shape == (imm.n_vertices,):
            return c[imm.faces]
        if c.shape == (imm.n_faces, 3):
            return c
    else:
        if c.shape == (imm.n_vertices, 2):
            z = c[:, 0] + 1j * c[:, 1]
            return z[imm.faces]
        if c.shape == (imm.n_faces, 3, 2):
            return c[..., 0] + 1j * c[..., 1]
    raise ValueError(f"chart of shape {c.shape} matches neither vertices nor faces")


def chart_jacobians(imm: TriangulatedImmersion, chart) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives (d/dx, d/dy) of the immersion in chart coordinates per face."""
    z = chart_face_coords(imm, chart)
    dz1 = z[:, 1] - z[:, 0]
    dz2 = z[:, 2] - z[:, 0]
    a, b = dz1.real, dz1.imag
    c, d = dz2.real, dz2.imag
    det = a * d - b * c
    u, v = imm.edge_vectors
    # [u v] = [Phi_x Phi_y] [[a c], [b d]]
    phi_x = (u * d[:, None] - v * b[:, None]) / det[:, None]
    phi_y = (v * a[:, None] - u * c[:, None]) / det[:, None]
    return phi_x, phi_y


def hopf_differentials(imm: TriangulatedImmersion, chart) -> np.ndarray:
    px, py = chart_jacobians(imm, chart)
    g11 = np.einsum("ij,ij->i", px, px)
    g22 = np.einsum("ij,ij->i", py, py)
    g12 = np.einsum("ij,ij->i", px, py)
    det = g11 * g22 - g12 ** 2
    bad = np.flatnonzero(~(det > 0.0))
    if bad.size:
        raise DegenerateFaceError(f"face {int(bad[0])} is degenerate in the chart",
                                  face=int(bad[0]))
    return (g11 - g22) - 2j * g12


def hopf_differential(imm: TriangulatedImmersion, chart, face: int) -> complex:
    return complex(hopf_differentials(imm, chart)[face])


def chart_distortions(imm: TriangulatedImmersion, chart) -> np.ndarray:
    px, py = chart_jacobians(imm, chart)
    tr = np.einsum("ij,ij->i", px, px) + np.einsum("ij,ij->i", py, py)
    return hopf_differentials(imm, chart) / tr


def distortion(g: FaceMetric) -> complex:
    """Complex distortion ``(g11 - g22 - 2i g12) / tr g``."""
    return complex(g.g11 - g.g22, -2.0 * g.g12) / g.trace


def distortion_identity_defect(g: FaceMetric) -> float:
    """``|Dis|^2 + 4 det/tr^2 - 1``; zero for every metric."""
    return abs(distortion(g)) ** 2 + 4.0 * g.det / g.trace ** 2 - 1.0


def pencil_extremes(g: FaceMetric, h: FaceMetric) -> tuple[float, float]:
    """inf and sup over directions X of |X|_g^2 / |X|_h^2."""
    from scipy.linalg import eigh
    w = eigh(g.matrix(), h.matrix(), eigvals_only=True)
    return float(w[0]), float(w[-1])


def distortion_trace_bounds(g: FaceMetric, h: FaceMetric, k: int) -> dict:
    """Check ``inf/2 <= tr g / tr h <= 2^k sup`` under ``|Dis(g)| < 1 - 2^-k``."""
    if not abs(distortion(g)) < 1.0 - 2.0 ** (-k):
        raise PreconditionError(f"|Dis(g)| = {abs(distortion(g)):.6g} >= 1 - 2^-{k}")
    lo, hi = pencil_extremes(g, h)
    ratio = g.trace / h.trace
    lower, upper = 0.5 * lo, 2.0 ** k * hi
    return {"holds": bool(lower <= ratio <= upper),
            "ratios": {"lower": lower, "trace_ratio": ratio, "upper": upper,
                       "inf": lo, "sup": hi}}


def validation_report(imm: TriangulatedImmersion) -> dict:
    return {"genus": imm.genus, "chi": imm.euler_characteristic,
            "min_gram_det": min_gram_determinant(imm), "area": total_area(imm)}
