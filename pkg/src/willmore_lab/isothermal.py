"""Isothermal charts on disk-type patches.

Pipeline for one patch:

1. ``coulomb_frame``: per-face orthonormal tangent frames minimising the
   discrete connection energy; the optimality condition makes the primal
   1-form ``*(e1, de2)`` closed, so it integrates to a potential ``f``.
2. ``build_isothermal_chart``: the closed coframe ``e^{-f} (eps1 + i eps2)``
   is integrated (least squares) to a first chart ``sigma``; a conformal disk
   map (harmonic initialisation with arclength-proportional circular boundary)
   is then corrected by Gauss-Newton on the area-weighted Beltrami coefficient.

Plus the conformal-factor estimates and a dyadic branch-order estimator.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .curvature import _gauss_face_energy, cotan_matrix
from .errors import (BeltramiDivergenceError, CoverFailureError, HolonomyError,
                     InsufficientAnnuliError, PreconditionError, SolverDivergenceError,
                     TopologyError)
from .kernels import corner_cotangents
from .mesh import Topology, TriangulatedImmersion, chart_distortions, face_areas, face_frames

PATCH_BUDGET = 8.0 * math.pi / 3.0
DEFAULT_HOPF_TOL = 1e-6
HOLONOMY_TOL = 1e-8
FRAME_ENERGY_TOL = 0.05


# -- patches ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Patch:
    """Disk-type sub-mesh with its parent maps and Gauss-map energy."""

    vertices: np.ndarray
    faces: np.ndarray
    face_energy: np.ndarray
    parent_vertices: np.ndarray | None = None
    parent_faces: np.ndarray | None = None

    @property
    def gauss_energy(self) -> float:
        return float(math.fsum(self.face_energy))

    @cached_property
    def topology(self) -> Topology:
        return Topology(self.faces, len(self.vertices), require_closed=False)

    @cached_property
    def immersion(self) -> TriangulatedImmersion:
        return TriangulatedImmersion(self.vertices, self.faces, topology=self.topology,
                                     validate=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_disk(self) -> bool:
        t = self.topology
        return t.n_components == 1 and t.euler_characteristic == 1 and len(t.boundary_loops()) == 1

    @cached_property
    def boundary_loop(self) -> np.ndarray:
        loops = self.topology.boundary_loops()
        if not loops:
            raise TopologyError("patch has no boundary")
        return max(loops, key=len)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.topology.boundary_vertices] = False
        return np.flatnonzero(mask)

    @classmethod
    def from_arrays(cls, vertices, faces, *, budget: float | None = PATCH_BUDGET,
                    require_disk: bool = True) -> "Patch":
        """Standalone patch; Gauss energy from its own (one-sided at the boundary) normals."""
        x = np.asarray(vertices, dtype=float)
        f = np.asarray(faces, dtype=np.int64)
        topo = Topology(f, len(x), require_closed=False)
        imm = TriangulatedImmersion(x, f, topology=topo, validate=False)
        p = cls(x, topo.faces, _gauss_face_energy(imm))
        object.__setattr__(p, "topology", topo)
        p._validate(budget, require_disk)
        return p

    @classmethod
    def from_faces(cls, imm: TriangulatedImmersion, face_ids, face_energy=None, *,
                   budget: float | None = PATCH_BUDGET, require_disk: bool = True) -> "Patch":
        """Sub-patch of ``imm`` made of ``face_ids``; energies from the parent's normals."""
        fid = np.asarray(face_ids, dtype=np.int64)
        if face_energy is None:
            face_energy = _gauss_face_energy(imm)
        sub = imm.faces[fid]
        pv, local = np.unique(sub, return_inverse=True)
        p = cls(imm.vertices[pv], local.reshape(-1, 3), np.asarray(face_energy)[fid],
                parent_vertices=pv, parent_faces=fid)
        p._validate(budget, require_disk)
        return p

    def _validate(self, budget, require_disk):
        if require_disk and not self.is_disk:
            raise TopologyError("patch is not homeomorphic to a disk")
        if budget is not None and not self.gauss_energy < budget:
            raise PreconditionError(
                f"patch Gauss energy {self.gauss_energy:.6g} exceeds the budget {budget:.6g}")


def patch_cover(imm: TriangulatedImmersion, budget: float = PATCH_BUDGET,
                max_faces: int | None = None) -> list[Patch]:
    """Cover all faces by disk patches of Gauss energy below ``budget``.

    Each patch grows breadth-first from the lowest-index uncovered face; a
    face is admitted when the energy stays below the budget and the patch
    stays a disk (it shares two edges with the patch, or one edge and its
    opposite vertex is new).  Patches may overlap.
    """
    fe = _gauss_face_energy(imm)
    big = np.flatnonzero(fe >= budget)
    if big.size:
        raise CoverFailureError(
            f"face {int(big[0])} alone carries Gauss energy {fe[big[0]]:.6g} >= {budget:.6g}; "
            "refine the mesh")
    topo = imm.topology
    fedges = topo.face_edges
    ef = topo.edge_faces
    faces = imm.faces
    covered = np.zeros(imm.n_faces, dtype=bool)
    patches = []
    for seed in range(imm.n_faces):
        if covered[seed]:
            continue
        in_patch = np.zeros(imm.n_faces, dtype=bool)
        ecount = np.zeros(topo.n_edges, dtype=np.int64)
        vin = np.zeros(imm.n_vertices, dtype=bool)
        members = []
        energy = 0.0
        queue = deque([seed])
        while queue:
            g = queue.popleft()
            if in_patch[g] or energy + fe[g] >= budget:
                continue
            if max_faces is not None and len(members) >= max_faces:
                break
            if members:
                shared = ecount[fedges[g]] > 0
                k = int(shared.sum())
                if k == 0 or k == 3:
                    continue
                if k == 1:
                    c = int(np.flatnonzero(shared)[0])   # opposite corner of the shared edge
                    if vin[faces[g, c]]:
                        continue
            in_patch[g] = True
            members.append(g)
            energy += fe[g]
            ecount[fedges[g]] += 1
            vin[faces[g]] = True
            for e in fedges[g]:
                for h in ef[e]:
                    if h >= 0 and not in_patch[h]:
                        queue.append(int(h))
        covered[members] = True
        patches.append(Patch.from_faces(imm, np.array(members), fe, budget=None))
    return patches


# -- Coulomb frame -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoulombFrame:
    """Per-face frames ``(e1, e2)`` = reference frames rotated by ``theta``.

    ``connection`` holds the frame jump across each interior edge (the
    integral of ``(e1, de2)`` along the dual edge), ``weights`` the dual Hodge
    weights ``|e| / |e*|``; ``potential`` the vertex function ``f`` with
    ``df = *(e1, de2)``.
    """

    theta: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    edges: np.ndarray
    connection: np.ndarray
    weights: np.ndarray
    potential: np.ndarray
    connection_energy: float
    gauss_energy: float
    coulomb_residual: float
    holonomy_residual: float

    @property
    def frame_energy(self) -> float:
        """``int |grad e1|^2 + |grad e2|^2 = 2 int |(e1, de2)|^2 + int |grad n|^2``."""
        return 2.0 * self.connection_energy + self.gauss_energy

    def energy_bound_ok(self, tol: float = FRAME_ENERGY_TOL) -> bool:
        return self.frame_energy <= 2.0 * self.gauss_energy * (1.0 + tol) + 1e-14

    def connection_energy_at(self, theta) -> float:
        """Connection energy of an arbitrary rotation field (for optimality checks)."""
        j = self._jumps(np.asarray(theta, dtype=float))
        return float(np.sum(self.weights * j * j))

    def _jumps(self, theta):
        ef = self._edge_faces
        return theta[ef[:, 1]] - theta[ef[:, 0]] - self._rho

    _edge_faces: np.ndarray = field(default=None, repr=False)
    _rho: np.ndarray = field(default=None, repr=False)


def _edge_transport(imm: TriangulatedImmersion, e1, e2, edges):
    """Rotation angle from the reference frame of ``ef[:,0]`` to ``ef[:,1]``
    across each edge (both frames measured against the shared edge)."""
    topo = imm.topology
    ef = topo.edge_faces[edges]
    a, b = topo.edges[edges, 0], topo.edges[edges, 1]
    d = imm.vertices[b] - imm.vertices[a]
    arg0 = np.arctan2(np.einsum("ij,ij->i", d, e2[ef[:, 0]]), np.einsum("ij,ij->i", d, e1[ef[:, 0]]))
    arg1 = np.arctan2(np.einsum("ij,ij->i", d, e2[ef[:, 1]]), np.einsum("ij,ij->i", d, e1[ef[:, 1]]))
    rho = np.angle(np.exp(1j * (arg1 - arg0)))
    return ef, rho


def _lift_transport(topo: Topology, edges, rho, interior_vertices):
    """Add multiples of 2*pi to the edge transports so that their circulation
    around every interior vertex is the (small) holonomy rather than that
    plus a full turn.  Boundary vertices are merged into the root of a BFS
    spanning tree whose edges absorb the integer corrections."""
    n = topo.n_vertices
    a, b = topo.edges[edges, 0], topo.edges[edges, 1]
    circ = np.zeros(n)
    np.add.at(circ, b, rho)
    np.add.at(circ, a, -rho)
    k = np.zeros(n)
    k[interior_vertices] = np.round(circ[interior_vertices] / (2 * np.pi))
    if not np.any(k):
        return rho
    constrained = np.zeros(n, dtype=bool)
    constrained[interior_vertices] = True
    adj = sparse.csr_matrix((np.arange(1, len(a) + 1), (a, b)), shape=(n, n))
    adj = (adj + adj.T).tocsr()
    parent_edge = -np.ones(n, dtype=np.int64)
    seen = ~constrained
    order = []
    queue = deque(np.flatnonzero(~constrained).tolist())
    while queue:
        i = queue.popleft()
        for j, e in zip(adj.indices[adj.indptr[i]:adj.indptr[i + 1]],
                        adj.data[adj.indptr[i]:adj.indptr[i + 1]]):
            if not seen[j]:
                seen[j] = True
                parent_edge[j] = e - 1
                order.append(j)
                queue.append(j)
    if not seen.all():
        raise TopologyError("interior vertex not connected to the patch boundary")
    c = np.zeros(len(edges))
    bal = k.copy()
    for v in reversed(order):
        e = parent_edge[v]
        sv = 1.0 if b[e] == v else -1.0
        c[e] = -bal[v] / sv
        p = a[e] if b[e] == v else b[e]
        bal[p] += -sv * c[e]
        bal[v] = 0.0
    return rho + 2 * np.pi * c


def _dual_weights(imm: TriangulatedImmersion, edges, ef):
    x = imm.vertices
    topo = imm.topology
    c = x[imm.faces].mean(axis=1)
    a, b = topo.edges[edges, 0], topo.edges[edges, 1]
    m = 0.5 * (x[a] + x[b])
    dual = np.linalg.norm(c[ef[:, 0]] - m, axis=1) + np.linalg.norm(c[ef[:, 1]] - m, axis=1)
    return np.linalg.norm(x[b] - x[a], axis=1) / dual


def _integrate_on_tree(n, edges, values, root, scale):
    """Integrate an edge 1-form (``values[k] = u[b] - u[a]``) over a BFS tree;
    return the potential and the largest mismatch on non-tree edges."""
    a, b = edges[:, 0], edges[:, 1]
    adj = sparse.csr_matrix((np.arange(1, len(a) + 1), (a, b)), shape=(n, n))
    adj = adj + adj.T
    u = np.full(n, np.nan)
    u[root] = 0.0
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j, k in zip(adj.indices[adj.indptr[i]:adj.indptr[i + 1]],
                        adj.data[adj.indptr[i]:adj.indptr[i + 1]]):
            if np.isnan(u[j]):
                k -= 1
                u[j] = u[i] + (values[k] if b[k] == j else -values[k])
                queue.append(j)
    ok = ~(np.isnan(u[a]) | np.isnan(u[b]))
    mismatch = np.abs(u[b][ok] - u[a][ok] - values[ok])
    hol = float(mismatch.max()) / scale if mismatch.size else 0.0
    return u, hol


def coulomb_frame(patch: Patch, *, holonomy_tol: float = HOLONOMY_TOL) -> CoulombFrame:
    """Frame minimising ``sum_e |e|/|e*| * jump_e^2`` over per-face rotations.

    Raises HolonomyError when the closed 1-form ``*(e1, de2)`` has periods
    (non-simply-connected patch), SolverDivergenceError on a failed solve.
    """
    imm = patch.immersion
    topo = patch.topology
    E1, E2 = face_frames(imm)
    interior = np.flatnonzero((topo.edge_faces >= 0).all(axis=1))
    ef, rho = _edge_transport(imm, E1, E2, interior)
    rho = _lift_transport(topo, interior, rho, patch.interior_vertices)
    w = _dual_weights(imm, interior, ef)
    F = imm.n_faces
    n_e = len(interior)
    D = sparse.csr_matrix((np.r_[-np.ones(n_e), np.ones(n_e)],
                           (np.r_[np.arange(n_e), np.arange(n_e)], np.r_[ef[:, 0], ef[:, 1]])),
                          shape=(n_e, F))
    DtW = D.T @ sparse.diags(w)
    L = (DtW @ D).tocsc()
    rhs = DtW @ rho
    theta = np.zeros(F)
    if F > 1:
        try:
            theta[1:] = splu(L[1:, 1:].tocsc()).solve(rhs[1:])
        except RuntimeError as exc:
            raise SolverDivergenceError(f"Coulomb gauge solve failed: {exc}") from exc
    if not np.all(np.isfinite(theta)):
        raise SolverDivergenceError("Coulomb gauge solve produced non-finite angles")
    jump = D @ theta - rho
    div = DtW @ jump
    coulomb_res = float(np.abs(div).max() / max(1.0, np.abs(rhs).max())) if F > 1 else 0.0

    # df = *(e1, de2): closed on every face because of the Coulomb condition
    # (boundary edges carry no flux), so it integrates on a simply connected patch.
    alpha = np.zeros(topo.n_edges)
    alpha[interior] = -w * jump
    root = int(patch.interior_vertices[0]) if patch.interior_vertices.size else 0
    scale = max(1.0, float(np.abs(alpha).max()))
    f, hol = _integrate_on_tree(patch.n_vertices, topo.edges, alpha, root, scale)
    if hol > holonomy_tol:
        raise HolonomyError(
            f"connection potential is path dependent (mismatch {hol:.3g}); patch not simply connected")
    if len(topo.boundary_loops()) > 1:
        raise HolonomyError("patch has more than one boundary loop")
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    return CoulombFrame(theta=theta, e1=c * E1 + s * E2, e2=-s * E1 + c * E2,
                        edges=interior, connection=jump, weights=w, potential=f,
                        connection_energy=float(np.sum(w * jump * jump)),
                        gauss_energy=patch.gauss_energy, coulomb_residual=coulomb_res,
                        holonomy_residual=hol, _edge_faces=ef, _rho=rho)


# -- charts ---------------------------------------------------------------------

def _local_coords(imm: TriangulatedImmersion):
    """Corner coordinates of each face in its reference frame (corner 0 at 0)."""
    e1, e2 = face_frames(imm)
    u, v = imm.edge_vectors
    p = np.zeros((imm.n_faces, 3), dtype=complex)
    p[:, 1] = np.einsum("ij,ij->i", u, e1) + 1j * np.einsum("ij,ij->i", u, e2)
    p[:, 2] = np.einsum("ij,ij->i", v, e1) + 1j * np.einsum("ij,ij->i", v, e2)
    return p


def _wirtinger_operators(p, faces, n):
    """Sparse maps from vertex values to the per-face affine coefficients
    ``a = d/dp`` and ``b = d/dp-bar`` (``z = a p + b conj(p) + const``)."""
    F = len(faces)
    p1, p2 = p[:, 1], p[:, 2]
    det = p1 * np.conj(p2) - p2 * np.conj(p1)
    ca1, ca2 = np.conj(p2) / det, -np.conj(p1) / det
    cb1, cb2 = -p2 / det, p1 / det
    rows = np.repeat(np.arange(F), 3)
    cols = faces.ravel()
    A = sparse.csr_matrix((np.stack([-(ca1 + ca2), ca1, ca2], 1).ravel(), (rows, cols)), shape=(F, n))
    B = sparse.csr_matrix((np.stack([-(cb1 + cb2), cb1, cb2], 1).ravel(), (rows, cols)), shape=(F, n))
    return A, B


def _complex_columns(J):
    """Real Jacobian blocks (d/dRe, d/dIm) of a complex-linear map."""
    return sparse.vstack([J.real, J.imag]), sparse.vstack([-J.imag, J.real])


@dataclass(frozen=True, eq=False)
class ChartMap:
    """Per-vertex chart ``zeta`` on the unit disk and its diagnostics."""

    patch: Patch
    zeta: np.ndarray
    face_lambda: np.ndarray
    distortion: np.ndarray
    sigma: np.ndarray | None = None
    nu_max: float = float("nan")
    center: int = 0
    tolerance: float = DEFAULT_HOPF_TOL
    iterations: int = 0
    frame: CoulombFrame | None = field(default=None, repr=False)

    @property
    def hopf_max(self) -> float:
        return float(np.abs(self.distortion).max())

    @property
    def certified(self) -> bool:
        return self.hopf_max < self.tolerance

    @property
    def lambda_range(self) -> tuple[float, float]:
        return float(self.face_lambda.min()), float(self.face_lambda.max())

    @property
    def uv(self) -> np.ndarray:
        return np.stack([self.zeta.real, self.zeta.imag], axis=1)

    def to_dict(self) -> dict:
        return {"gauss_energy": self.patch.gauss_energy, "hopf_max": self.hopf_max,
                "nu_max": self.nu_max, "lambda_range": list(self.lambda_range),
                "certified": self.certified, "tolerance": self.tolerance,
                "n_faces": self.patch.n_faces, "iterations": self.iterations}

    @classmethod
    def from_coordinates(cls, patch: Patch, zeta, center: int | None = None,
                         tolerance: float = DEFAULT_HOPF_TOL) -> "ChartMap":
        """Wrap externally supplied chart coordinates (e.g. a known parametrisation)."""
        z = np.asarray(zeta)
        if z.ndim == 2:
            z = z[:, 0] + 1j * z[:, 1]
        z = z.astype(complex)
        if center is None:
            center = int(np.argmin(np.abs(z)))
        return cls(patch, z, face_log_factors(patch.immersion, z),
                   chart_distortions(patch.immersion, z), center=center, tolerance=tolerance)


def face_log_factors(imm: TriangulatedImmersion, zeta) -> np.ndarray:
    """``lambda`` per face from ``e^{2 lambda} = area_3d / area_chart``."""
    zf = np.asarray(zeta)[imm.faces]
    a2 = 0.5 * np.imag(np.conj(zf[:, 1] - zf[:, 0]) * (zf[:, 2] - zf[:, 0]))
    if np.any(a2 <= 0):
        raise BeltramiDivergenceError("chart reverses orientation on some face")
    return 0.5 * np.log(face_areas(imm) / a2)


def _integrate_coframe(imm, frame: CoulombFrame, A, B, root):
    """Least-squares primitive of ``e^{-f} (eps1 + i eps2)`` (zero at ``root``)."""
    f_face = frame.potential[imm.faces].mean(axis=1)
    target = np.exp(-f_face - 1j * frame.theta)
    w = np.sqrt(face_areas(imm))
    M = sparse.vstack([sparse.diags(w) @ A, sparse.diags(w) @ B]).tocsc()
    rhs = np.r_[w * target, np.zeros(len(w))]
    keep = np.setdiff1d(np.arange(imm.n_vertices), [root])
    Mk = M[:, keep]
    H = (Mk.conj().T @ Mk).tocsc()
    sol = splu(H).solve(Mk.conj().T @ rhs)
    sigma = np.zeros(imm.n_vertices, dtype=complex)
    sigma[keep] = sol
    return sigma


def _harmonic_disk(imm, boundary, angles):
    cot, _ = corner_cotangents(imm.vertices, imm.faces)
    L = cotan_matrix(imm.faces, cot, imm.n_vertices)
    n = imm.n_vertices
    inner = np.setdiff1d(np.arange(n), boundary)
    z = np.zeros(n, dtype=complex)
    z[boundary] = np.exp(1j * angles)
    if inner.size:
        lu = splu(L[inner][:, inner].tocsc())
        rhs = -(L[inner][:, boundary] @ z[boundary])
        z[inner] = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    return z


def _place_ears(z, ears, faces, p):
    """Put each ear tip where the similarity fixed by the ear's other two
    corners sends it."""
    for k in ears:
        f, c = np.argwhere(faces == k)[0]
        i, j = faces[f, (c + 1) % 3], faces[f, (c + 2) % 3]
        pk, pi, pj = p[f, c], p[f, (c + 1) % 3], p[f, (c + 2) % 3]
        z[k] = z[i] + (z[j] - z[i]) * (pk - pi) / (pj - pi)


def _boundary_angles(imm, boundary, sigma, center):
    """Initial boundary angles: arguments of ``sigma`` around the centre when
    they wind once monotonically, else arclength-proportional."""
    if sigma is not None:
        ang = np.unwrap(np.angle(sigma[boundary] - sigma[center]))
        step = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
        if np.all(step > 0) and abs(ang[-1] - ang[0] + step[-1] - 2 * np.pi) < 1e-9:
            return ang - ang[0]
    x = imm.vertices
    seg = np.linalg.norm(x[np.roll(boundary, -1)] - x[boundary], axis=1)
    return 2 * np.pi * np.r_[0.0, np.cumsum(seg)[:-1]] / seg.sum()


def _gauss_newton(z, A, B, w, free_idx, bnd_idx, phi, max_iter, rtol):
    """Minimise ``sum_f w_f^2 |mu_f|^2`` over free vertex positions and
    boundary angles (boundary points ``e^{i phi}``)."""

    def state(z):
        a, b = A @ z, B @ z
        return a, b, b / a

    def objective(mu):
        return float(np.sum((w * np.abs(mu)) ** 2))

    a, b, mu = state(z)
    obj = objective(mu)
    damping = 1e-12
    it = 0
    for it in range(1, max_iter + 1):
        J = (sparse.diags(w / a) @ (B - sparse.diags(mu) @ A)).tocsc()
        cols = list(_complex_columns(J[:, free_idx]))
        if bnd_idx.size:
            Jb = J[:, bnd_idx] @ sparse.diags(1j * z[bnd_idx])
            cols.append(sparse.vstack([Jb.real, Jb.imag]))
        Jr = sparse.hstack(cols).tocsc()
        r = np.r_[(w * mu).real, (w * mu).imag]
        N = (Jr.T @ Jr).tocsc()
        g = Jr.T @ r
        diag = N.diagonal()
        accepted = False
        for _ in range(20):
            try:
                step = splu((N + sparse.diags(damping * (diag + 1e-30))).tocsc()).solve(-g)
            except RuntimeError:
                damping *= 10
                continue
            nf = len(free_idx)
            zt = z.copy()
            zt[free_idx] += step[:nf] + 1j * step[nf:2 * nf]
            pt = phi + step[2 * nf:] if bnd_idx.size else phi
            if bnd_idx.size:
                zt[bnd_idx] = np.exp(1j * pt)
            at, bt, mut = state(zt)
            ot = objective(mut) if np.all(np.isfinite(mut)) else np.inf
            if ot < obj and np.all(np.abs(mut) < 1):
                accepted = True
                break
            damping *= 10
        if not accepted:
            break
        decrease = obj - ot
        z, phi, a, b, mu, obj_old, obj = zt, pt, at, bt, mut, obj, ot
        damping = max(damping / 10, 1e-12)
        if decrease <= rtol * obj_old:
            break
    if not np.all(np.isfinite(z)) or np.any(np.abs(mu) >= 1):
        raise BeltramiDivergenceError("Beltrami correction lost orientation")
    return z, it


def boundary_turning(patch: Patch) -> np.ndarray:
    """Interior angle sum at each boundary-loop vertex (pi for a smooth boundary)."""
    x = patch.vertices
    f = patch.faces
    ang = np.zeros(patch.n_vertices)
    for c in range(3):
        u = x[f[:, (c + 1) % 3]] - x[f[:, c]]
        v = x[f[:, (c + 2) % 3]] - x[f[:, c]]
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        np.add.at(ang, f[:, c], np.arccos(np.clip(cosang, -1.0, 1.0)))
    return ang[patch.boundary_loop]


def build_isothermal_chart(patch: Patch, *, boundary: str = "auto", center: int | None = None,
                           tolerance: float = DEFAULT_HOPF_TOL, max_iter: int = 30,
                           rtol: float = 1e-12) -> ChartMap:
    """Conformal chart of a disk patch onto the unit disk.

    ``boundary="circle"``: boundary constrained to the unit circle (discrete
    Riemann map; ``center`` goes to 0 and one boundary angle is pinned).
    ``boundary="free"``: free boundary, result normalised by a similarity into
    the unit disk (planar patches are reproduced up to similarity).
    ``boundary="auto"``: circle when every boundary angle is within ``pi/4``
    of ``pi`` (a smooth boundary), free otherwise -- pinning the corners of a
    jagged boundary to a circle forces large distortion on the faces there.
    """
    if boundary not in ("circle", "free", "auto"):
        raise PreconditionError(f"unknown boundary mode {boundary!r}")
    if boundary == "auto":
        smooth = np.all(np.abs(boundary_turning(patch) - np.pi) < np.pi / 4)
        boundary = "circle" if smooth else "free"
    imm = patch.immersion
    frame = coulomb_frame(patch)
    p = _local_coords(imm)
    A, B = _wirtinger_operators(p, imm.faces, imm.n_vertices)
    interior = patch.interior_vertices
    if interior.size == 0:
        raise PreconditionError("patch has no interior vertex")
    root = int(interior[0])
    sigma = _integrate_coframe(imm, frame, A, B, root)
    nu = np.abs((B @ sigma) / (A @ sigma))
    nu_max = float(nu.max())
    if center is None:
        centroid = np.average(sigma[imm.faces].mean(axis=1), weights=face_areas(imm))
        center = int(interior[np.argmin(np.abs(sigma[interior] - centroid))])
    w = np.sqrt(face_areas(imm))
    if boundary == "circle":
        # ear tips (boundary vertices of a single face) stay free: pinning
        # all three corners of a face to the circle would flatten it
        loop = patch.boundary_loop
        valence = np.bincount(imm.faces.ravel(), minlength=imm.n_vertices)
        bnd = loop[valence[loop] > 1]
        phi = _boundary_angles(imm, bnd, sigma, center)
        z = _harmonic_disk(imm, bnd, phi)
        z = (z - z[center]) / (1.0 - np.conj(z[center]) * z)   # disk automorphism: centre -> 0
        _place_ears(z, loop[valence[loop] == 1], imm.faces, p)
        phi = np.unwrap(np.angle(z[bnd]))
        free_idx = np.setdiff1d(np.arange(imm.n_vertices), np.r_[bnd, center])
        z, it = _gauss_newton(z, A, B, w, free_idx, bnd[1:], phi[1:], max_iter, rtol)
    else:
        far = int(np.argmax(np.abs(sigma - sigma[center])))
        z = sigma - sigma[center]
        z = z / z[far]
        free_idx = np.setdiff1d(np.arange(imm.n_vertices), [center, far])
        z, it = _gauss_newton(z, A, B, w, free_idx, np.zeros(0, dtype=np.int64), np.zeros(0),
                              max_iter, rtol)
        z = z / np.abs(z).max()
    return ChartMap(patch=patch, zeta=z, face_lambda=face_log_factors(imm, z),
                    distortion=chart_distortions(imm, z), sigma=sigma, nu_max=nu_max,
                    center=center, tolerance=tolerance, iterations=it, frame=frame)


# -- estimates --------------------------------------------------------------------

DEFAULT_C_RHO = 1.0


def conformal_factor_control(chart: ChartMap, p1: int, p2: int, *, rho: float = 0.5,
                             C_rho: float = DEFAULT_C_RHO) -> dict:
    """Evaluate both sides of the sup- and oscillation bounds on the disk of
    radius ``rho``.

    The oscillation bound is evaluated after rescaling the patch to unit area
    (under ``Phi -> s Phi`` its left side moves by ``|log s|`` and its right side
    by ``C log s``, so it can only be meaningful at a fixed scale).
    """
    patch = chart.patch
    x = patch.vertices
    d = float(np.linalg.norm(x[p1] - x[p2]))
    if not d > 0:
        raise PreconditionError("p1 and p2 must have distinct images")
    mass = float(math.fsum(face_areas(patch.immersion)))
    energy = patch.gauss_energy
    zc = chart.zeta[patch.faces].mean(axis=1)
    inside = np.abs(zc) < rho
    if not inside.any():
        inside = np.abs(zc) <= np.abs(zc).min()
    lam = chart.face_lambda[inside]
    sup_lhs = float(np.exp(lam.max()))
    sup_rhs = C_rho * math.sqrt(mass) * math.exp(energy)
    lam_unit = lam - 0.5 * math.log(mass)
    osc_lhs = float(np.abs(lam_unit).max())
    osc_rhs = C_rho * (energy + math.log(math.sqrt(mass) / d))
    return {"sup_bound_ok": bool(sup_lhs <= sup_rhs), "osc_bound_ok": bool(osc_lhs <= osc_rhs),
            "sup_lhs": sup_lhs, "sup_rhs": sup_rhs, "osc_lhs": osc_lhs, "osc_rhs": osc_rhs,
            "mass": mass, "gauss_energy": energy, "distance": d}


def branch_order_estimate(chart: ChartMap, center: int | None = None, *,
                          min_faces: int = 6) -> int:
    """Branch order ``m`` from the growth ``|d Phi/dz| ~ |z|^{m-1}``.

    Least-squares slope of ``log |Phi_z|`` against ``log |z|`` over dyadic
    annuli around ``center``, rounded, plus one.
    """
    from .mesh import chart_jacobians
    if center is None:
        center = chart.center
    imm = chart.patch.immersion
    px, py = chart_jacobians(imm, chart.zeta)
    dz = 0.5 * np.sqrt(np.einsum("ij,ij->i", px, px) + np.einsum("ij,ij->i", py, py))
    r = np.abs(chart.zeta[imm.faces].mean(axis=1) - chart.zeta[center])
    R = float(r.max())
    logs_r, logs_d = [], []
    k = 0
    while True:
        lo, hi = R * 2.0 ** (-k - 1), R * 2.0 ** (-k)
        sel = (r >= lo) & (r < hi)
        if sel.sum() < min_faces:
            break
        logs_r.append(float(np.mean(np.log(r[sel]))))
        logs_d.append(float(np.mean(np.log(dz[sel]))))
        k += 1
    if len(logs_r) < 3:
        raise InsufficientAnnuliError(f"only {len(logs_r)} dyadic annuli resolved (need 3)")
    slope = np.polyfit(logs_r, logs_d, 1)[0]
    return max(1, int(round(slope)) + 1)
