"""Conformal structure of genus-0/1 surfaces and the isothermic diagnostics.

For a torus the conformal class is read off discrete harmonic 1-forms.  A
tree-cotree cut graph yields two closed forms dual to a homology basis
``(a, b)``; their harmonic representatives ``h_a, h_b`` have cotan Gram
matrix ``G`` and the marked modulus is ``tau = (-G12 + i sqrt(det G)) / G22``.
The complex 1-form ``h_a + tau h_b`` integrates to a flat chart in which the
period lattice is ``(1, tau)``.

Because each ``h_i`` minimises the Dirichlet energy in its cohomology class,
``dG_ij`` only sees the explicit metric dependence: per face this is the
stress tensor of the 1-forms paired with the metric variation
``dPhi.dnu + dnu.dPhi``.  That gives the exact derivative of the discrete
modulus, which is what the constraint projector uses.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .curvature import WeingartenField, weingarten
from .errors import (ChartMismatchError, HomologyError, RankDeficiencyError,
                     UmbilicPatchError, UnsupportedGenusError)
from .mesh import TriangulatedImmersion, chart_face_coords, chart_jacobians, face_metrics


@dataclass(frozen=True)
class TorusModulus:
    """``tau`` reduced to the fundamental domain plus the marked value with
    respect to the cut-graph homology basis (a point of Teichmueller space)."""

    tau: complex
    tau_marked: complex
    reduction: tuple[int, int, int, int] = (1, 0, 0, 1)

    def __post_init__(self):
        if not self.tau.imag > 0:
            raise HomologyError(f"modulus {self.tau} is not in the upper half-plane")


@dataclass(frozen=True, eq=False)
class QuadDifferential:
    coefficients: np.ndarray
    chart_samples: np.ndarray | None = None

    def scaled(self, c: complex) -> "QuadDifferential":
        cs = None if self.chart_samples is None else c * self.chart_samples
        return QuadDifferential(c * np.asarray(self.coefficients), cs)

    def holomorphy_residual(self, imm: TriangulatedImmersion) -> float:
        """Relative jump of the per-face coefficient across interior edges."""
        if self.chart_samples is None:
            return 0.0
        f = np.asarray(self.chart_samples)
        ef = imm.topology.edge_faces
        ok = (ef >= 0).all(axis=1)
        jump = np.abs(f[ef[ok, 0]] - f[ef[ok, 1]])
        return float(jump.max() / max(np.abs(f).max(), 1e-300))


@dataclass(frozen=True, eq=False)
class IsothermicCertificate:
    residual: float
    witness_q: QuadDifferential | None
    tau: complex | None = None
    flags: tuple[str, ...] = ()
    local_L_fields: list | None = None

    def to_dict(self) -> dict:
        wc = [] if self.witness_q is None else [[float(c.real), float(c.imag)]
                                                 for c in np.atleast_1d(self.witness_q.coefficients)]
        return {"residual": float(self.residual),
                "tau": None if self.tau is None else [self.tau.real, self.tau.imag],
                "witness_coefficients": wc, "flags": list(self.flags)}


# -- cut graph and harmonic forms ----------------------------------------------

@dataclass(eq=False)
class HarmonicBasis:
    """Harmonic 1-forms (per undirected edge, oriented low -> high index)."""

    forms: np.ndarray                 # (2g, E)
    gram: np.ndarray                  # (2g, 2g)
    generators: np.ndarray            # edge ids of the homology generators
    edge_weights: np.ndarray          # cotan weights per edge
    extras: dict = field(default_factory=dict)


def _edge_sign_table(imm):
    """For each face corner c, the edge from f[c] to f[c+1] and its sign
    relative to the stored (low, high) orientation."""
    topo = imm.topology
    f = imm.faces
    # face_edges[f, c] is opposite corner c, i.e. the edge (f[c+1], f[c+2]);
    # the edge from f[c] to f[c+1] is opposite corner c+2.
    eid = topo.face_edges[:, [2, 0, 1]]
    sign = np.where(f < f[:, [1, 2, 0]], 1.0, -1.0)
    return eid, sign


def cut_graph(imm: TriangulatedImmersion):
    """Tree-cotree decomposition with index-ordered breadth-first searches.

    Returns (tree_edges mask, cotree parent edge per face, face BFS order,
    generator edge ids)."""
    topo = imm.topology
    nv, ne, nf = imm.n_vertices, topo.n_edges, imm.n_faces
    edges = topo.edges
    # primal spanning tree
    adj = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(edges):
        adj[a].append((b, e))
        adj[b].append((a, e))
    in_tree = np.zeros(ne, dtype=bool)
    seen = np.zeros(nv, dtype=bool)
    seen[0] = True
    dq = deque([0])
    while dq:
        v = dq.popleft()
        for w, e in adj[v]:
            if not seen[w]:
                seen[w] = True
                in_tree[e] = True
                dq.append(w)
    # dual spanning tree avoiding primal tree edges
    ef = topo.edge_faces
    fadj = [[] for _ in range(nf)]
    for e in range(ne):
        if in_tree[e]:
            continue
        f0, f1 = ef[e]
        if f0 < 0 or f1 < 0:
            continue
        fadj[f0].append((f1, e))
        fadj[f1].append((f0, e))
    parent_edge = -np.ones(nf, dtype=np.int64)
    fseen = np.zeros(nf, dtype=bool)
    fseen[0] = True
    order = [0]
    dq = deque([0])
    while dq:
        f = dq.popleft()
        for g, e in sorted(fadj[f]):
            if not fseen[g]:
                fseen[g] = True
                parent_edge[g] = e
                order.append(g)
                dq.append(g)
    if not fseen.all():
        raise HomologyError("dual graph is disconnected after removing the spanning tree")
    in_cotree = np.zeros(ne, dtype=bool)
    in_cotree[parent_edge[parent_edge >= 0]] = True
    gens = np.flatnonzero(~in_tree & ~in_cotree)
    expected = 2 - imm.euler_characteristic
    if len(gens) != expected:
        raise HomologyError(f"cut graph produced {len(gens)} generators, expected {expected}")
    return in_tree, parent_edge, np.array(order), gens


def closed_forms(imm: TriangulatedImmersion, cut=None) -> np.ndarray:
    """Closed 1-forms dual to the cut-graph generators, shape (2g, E)."""
    in_tree, parent_edge, order, gens = cut if cut is not None else cut_graph(imm)
    eid, sign = _edge_sign_table(imm)
    forms = np.zeros((len(gens), imm.topology.n_edges))
    for k, g in enumerate(gens):
        z = forms[k]
        z[g] = 1.0
        for f in order[::-1]:
            pe = parent_edge[f]
            if pe < 0:
                continue
            # closure: sum of signed edge values around the face is zero
            tot = 0.0
            sp = 0.0
            for c in range(3):
                if eid[f, c] == pe:
                    sp = sign[f, c]
                else:
                    tot += sign[f, c] * z[eid[f, c]]
            z[pe] = -tot / sp
    return forms


def _d0(imm):
    topo = imm.topology
    ne, nv = topo.n_edges, imm.n_vertices
    rows = np.repeat(np.arange(ne), 2)
    cols = topo.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(ne, nv))


def edge_cotan_weights(imm: TriangulatedImmersion) -> np.ndarray:
    from . import kernels
    cot, _ = kernels.corner_cotangents(imm.vertices, imm.faces)
    w = np.zeros(imm.topology.n_edges)
    np.add.at(w, imm.topology.face_edges.ravel(), 0.5 * cot.ravel())
    return w


def harmonic_basis(imm: TriangulatedImmersion) -> HarmonicBasis:
    if imm.genus != 1:
        raise UnsupportedGenusError(f"harmonic basis is implemented for genus 1, got {imm.genus}")
    cut = cut_graph(imm)
    Z = closed_forms(imm, cut)
    w = edge_cotan_weights(imm)
    d = _d0(imm)
    K = (d.T @ sparse.diags(w) @ d).tocsc()
    # pin vertex 0
    keep = np.arange(1, imm.n_vertices)
    lu = splu(K[keep][:, keep].tocsc())
    H = np.empty_like(Z)
    for k in range(len(Z)):
        rhs = -(d.T @ (w * Z[k]))
        u = np.zeros(imm.n_vertices)
        u[keep] = lu.solve(rhs[keep])
        H[k] = Z[k] + d @ u
    # orientation: the basis must have intersection number +1
    if _intersection(imm, H[0], H[1]) < 0:
        H = H[::-1].copy()
        gens = cut[3][::-1].copy()
    else:
        gens = cut[3]
    G = (H * w) @ H.T
    return HarmonicBasis(forms=H, gram=G, generators=gens, edge_weights=w)


def _face_form_coeffs(imm, form):
    """Values of a 1-form on the reference edges (a->b, a->c) of each face."""
    eid, sign = _edge_sign_table(imm)
    ab = sign[:, 0] * form[eid[:, 0]]
    ca = sign[:, 2] * form[eid[:, 2]]
    return ab, -ca


def _intersection(imm, alpha, beta) -> float:
    a1, a2 = _face_form_coeffs(imm, alpha)
    b1, b2 = _face_form_coeffs(imm, beta)
    return float(0.5 * np.sum(a1 * b2 - a2 * b1))


def _tau_from_gram(G) -> complex:
    D = G[0, 0] * G[1, 1] - G[0, 1] ** 2
    return complex(-G[0, 1] / G[1, 1], math.sqrt(max(D, 0.0)) / G[1, 1])


def reduce_modulus(tau: complex):
    """Reduce to ``|Re tau| <= 1/2, |tau| >= 1``; returns (tau', (a, b, c, d))
    with ``tau' = (a tau + b) / (c tau + d)``."""
    a, b, c, d = 1, 0, 0, 1
    t = tau
    for _ in range(100):
        n = math.floor(t.real + 0.5)
        if n:
            t -= n
            a, b = a - n * c, b - n * d
        if abs(t) < 1.0 - 1e-14:
            t = -1.0 / t
            a, b, c, d = -c, -d, a, b
        else:
            break
    return t, (a, b, c, d)


def torus_modulus(imm: TriangulatedImmersion, basis: HarmonicBasis | None = None) -> TorusModulus:
    if imm.genus != 1:
        raise UnsupportedGenusError(f"torus modulus needs genus 1, got {imm.genus}")
    hb = basis if basis is not None else harmonic_basis(imm)
    tm = _tau_from_gram(hb.gram)
    t, red = reduce_modulus(tm)
    return TorusModulus(tau=t, tau_marked=tm, reduction=red)


def flat_chart(imm: TriangulatedImmersion, basis: HarmonicBasis | None = None, tau: complex | None = None):
    """Per-face corner coordinates (F, 3) of the flat chart with lattice (1, tau_marked)."""
    hb = basis if basis is not None else harmonic_basis(imm)
    if tau is None:
        tau = _tau_from_gram(hb.gram)
    omega = hb.forms[0] + tau * hb.forms[1]
    ab, ac = _face_form_coeffs(imm, omega)
    z = np.zeros((imm.n_faces, 3), dtype=complex)
    z[:, 1] = ab
    z[:, 2] = ac
    return z


# -- exact modulus derivative ----------------------------------------------------

def _gram_gradients(imm: TriangulatedImmersion, hb: HarmonicBasis):
    """d G_ij / d x for (i, j) in (0,0), (0,1), (1,1); each (V, m)."""
    g = face_metrics(imm)
    det = g[:, 0] * g[:, 2] - g[:, 1] ** 2
    ginv = np.stack([np.stack([g[:, 2], -g[:, 1]], -1), np.stack([-g[:, 1], g[:, 0]], -1)], 1) / det[:, None, None]
    sq = np.sqrt(det)
    om = [np.stack(_face_form_coeffs(imm, hb.forms[k]), axis=1) for k in range(2)]   # (F, 2)
    u, v = imm.edge_vectors
    J = np.stack([u, v], axis=2)                                                     # (F, m, 2)
    out = {}
    for (i, j) in ((0, 0), (0, 1), (1, 1)):
        gi = np.einsum("fab,fb->fa", ginv, om[i])
        gj = np.einsum("fab,fb->fa", ginv, om[j])
        inner = np.einsum("fa,fa->f", om[i], gj)
        outer = 0.5 * (np.einsum("fa,fb->fab", gi, gj) + np.einsum("fa,fb->fab", gj, gi))
        # E_f = (1/2) sqrt(det g) om_i^T g^-1 om_j ; S = dE/dg
        S = 0.5 * sq[:, None, None] * (0.5 * ginv * inner[:, None, None] - outer)
        dJ = 2.0 * np.einsum("fmb,fba->fma", J, S)                                   # dE/dJ
        grad = np.zeros_like(imm.vertices)
        f = imm.faces
        for k in range(imm.ambient_dim):
            grad[:, k] += np.bincount(f[:, 1], dJ[:, k, 0], imm.n_vertices)
            grad[:, k] += np.bincount(f[:, 2], dJ[:, k, 1], imm.n_vertices)
            grad[:, k] -= np.bincount(f[:, 0], dJ[:, k, 0] + dJ[:, k, 1], imm.n_vertices)
        out[(i, j)] = grad
    return out


def modulus_gradient(imm: TriangulatedImmersion, basis: HarmonicBasis | None = None) -> np.ndarray:
    """Exact derivative of the marked discrete modulus: complex (V, m) array
    with ``d tau = sum(grad * dx)``."""
    hb = basis if basis is not None else harmonic_basis(imm)
    G = hb.gram
    dG = _gram_gradients(imm, hb)
    D = G[0, 0] * G[1, 1] - G[0, 1] ** 2
    sD = math.sqrt(D)
    g11, g12, g22 = G[0, 0], G[0, 1], G[1, 1]
    d1 = {(0, 0): 0.0, (0, 1): -1.0 / g22, (1, 1): g12 / g22 ** 2}
    d2 = {(0, 0): 1.0 / (2 * sD), (0, 1): -g12 / (sD * g22),
          (1, 1): g11 / (2 * sD * g22) - sD / g22 ** 2}
    return sum((d1[k] + 1j * d2[k]) * dG[k] for k in dG)


def conformal_class_differential(imm: TriangulatedImmersion, nu, method: str = "exact",
                                 basis: HarmonicBasis | None = None) -> np.ndarray:
    """Coefficient vector of ``dC(0) nu`` in the quadratic-differential basis,
    expressed as the first-order change of the marked modulus ``tau``.

    ``method='exact'``: per-face pairing of the metric variation with the
    stress tensor of the harmonic forms (exact derivative of the discrete
    modulus).  ``method='wp'``: the smooth Weil-Petersson formula
    ``d tau = -4i int e^{-2 lambda} conj(dz Phi . dz nu) dx dy`` evaluated per
    face in the flat chart.
    """
    if imm.genus == 0:
        return np.zeros(0, dtype=complex)
    if imm.genus != 1:
        raise UnsupportedGenusError(f"genus {imm.genus} is not supported")
    nu = np.asarray(nu, dtype=float)
    if nu.shape != imm.vertices.shape:
        raise ValueError(f"perturbation has shape {nu.shape}, expected {imm.vertices.shape}")
    hb = basis if basis is not None else harmonic_basis(imm)
    if method == "exact":
        return np.array([np.sum(modulus_gradient(imm, hb) * nu)])
    if method == "wp":
        z = flat_chart(imm, hb)
        px, py = chart_jacobians(imm, z)
        nx, ny = _field_jacobians(imm, z, nu)
        phi_z = 0.5 * (px - 1j * py)
        nu_z = 0.5 * (nx - 1j * ny)
        e2l = 0.5 * (np.einsum("ij,ij->i", px, px) + np.einsum("ij,ij->i", py, py))
        area = 0.5 * ((z[:, 1] - z[:, 0]).conjugate() * (z[:, 2] - z[:, 0])).imag
        val = -4j * np.sum(np.conj(np.einsum("ij,ij->i", phi_z, nu_z)) / e2l * area)
        return np.array([val])
    raise ValueError(f"unknown method {method!r}")


def _field_jacobians(imm, chart, field_values):
    """Chart derivatives of a PL vertex field per face."""
    zf = chart_face_coords(imm, chart)
    dz1 = zf[:, 1] - zf[:, 0]
    dz2 = zf[:, 2] - zf[:, 0]
    a, b, c, d = dz1.real, dz1.imag, dz2.real, dz2.imag
    det = a * d - b * c
    f = imm.faces
    u = field_values[f[:, 1]] - field_values[f[:, 0]]
    v = field_values[f[:, 2]] - field_values[f[:, 0]]
    fx = (u * d[:, None] - v * b[:, None]) / det[:, None]
    fy = (v * a[:, None] - u * c[:, None]) / det[:, None]
    return fx, fy


# -- quadratic differentials and the WP pairing -------------------------------------

def holomorphic_quadratic_dimension(imm: TriangulatedImmersion) -> int:
    """Complex dimension of discrete holomorphic quadratic differentials.

    On a torus, a quadratic differential in the flat chart is ``f dz^2`` and
    holomorphy of a per-face coefficient means ``f`` is constant across every
    interior edge: the nullspace of the dual-graph difference operator.
    Genus 0 has no flat chart and no nonzero holomorphic quadratic
    differential.
    """
    if imm.genus == 0:
        return 0
    if imm.genus != 1:
        raise UnsupportedGenusError(f"genus {imm.genus} is not supported")
    ef = imm.topology.edge_faces
    D = sparse.csr_matrix((np.r_[np.ones(len(ef)), -np.ones(len(ef))],
                           (np.r_[np.arange(len(ef)), np.arange(len(ef))], np.r_[ef[:, 0], ef[:, 1]])),
                          shape=(len(ef), imm.n_faces))
    from scipy.sparse.csgraph import connected_components
    A = (D.T @ D).tocsr()
    ncomp, _ = connected_components(abs(A) > 0, directed=False)
    return int(ncomp)


def _chart_measure(imm, chart):
    zf = chart_face_coords(imm, chart)
    area = 0.5 * ((zf[:, 1] - zf[:, 0]).conjugate() * (zf[:, 2] - zf[:, 0])).imag
    px, py = chart_jacobians(imm, chart)
    e2l = 0.5 * (np.einsum("ij,ij->i", px, px) + np.einsum("ij,ij->i", py, py))
    return area, e2l


def quad_diff_basis(genus: int, tau: complex | None = None, imm: TriangulatedImmersion | None = None,
                    chart=None) -> list[QuadDifferential]:
    """Unit-WP-norm basis: empty at genus 0, ``c dz^2`` at genus 1.

    Without a surface the flat metric of the lattice (1, tau) is used
    (``||dz^2||^2 = Im tau``); with ``imm`` and ``chart`` the norm is
    ``int e^{-2 lambda} dx dy`` for the induced conformal factor.
    """
    if genus == 0:
        return []
    if genus != 1:
        raise UnsupportedGenusError(f"genus {genus} needs hyperbolic uniformisation (not supported)")
    if imm is not None and chart is not None:
        area, e2l = _chart_measure(imm, chart)
        norm2 = float(np.sum(area / e2l))
        c = 1.0 / math.sqrt(norm2)
        return [QuadDifferential(np.array([c + 0j]), np.full(imm.n_faces, c + 0j))]
    if tau is None:
        raise ValueError("tau or (imm, chart) is required")
    c = 1.0 / math.sqrt(complex(tau).imag)
    return [QuadDifferential(np.array([c + 0j]), None)]


def wp_norm(q: QuadDifferential, imm: TriangulatedImmersion, chart) -> float:
    area, e2l = _chart_measure(imm, chart)
    f = _samples(q, imm)
    return float(math.sqrt(np.sum(np.abs(f) ** 2 * area / e2l)))


def _samples(q, imm):
    if q.chart_samples is not None:
        if len(q.chart_samples) != imm.n_faces:
            raise ChartMismatchError("quadratic differential sampled on a different mesh")
        return np.asarray(q.chart_samples)
    return np.full(imm.n_faces, complex(q.coefficients[0]))


def wp_pairing(q: QuadDifferential, wf: WeingartenField, imm: TriangulatedImmersion) -> np.ndarray:
    """``sum_f conj(f) H0 e^{2 lambda} dxdy`` as an R^m (x) C vector.

    ``H0`` already carries the ``e^{-2 lambda}`` of the pointwise Hermitian
    product, so the measure is the induced area.  Sesquilinear: scaling ``q``
    by ``c`` scales the pairing by ``conj(c)``.
    """
    if wf.chart is None:
        raise ChartMismatchError("Weingarten field has no shared chart")
    if wf.H0.shape[0] != imm.n_faces:
        raise ChartMismatchError("Weingarten field and surface differ in face count")
    f = _samples(q, imm)
    area, e2l = _chart_measure(imm, wf.chart)
    return np.sum((np.conj(f) * area * e2l)[:, None] * wf.H0, axis=0)


def isothermic_residual(imm: TriangulatedImmersion, chart=None, wf: WeingartenField | None = None,
                        basis: HarmonicBasis | None = None) -> IsothermicCertificate:
    """``min_{|c|=1} ||Im(c e^{-2 lambda} f H0)|| / ||e^{-2 lambda} f H0||`` over the
    unit circle of the (one-dimensional) space of quadratic differentials,
    with the induced area as measure."""
    if imm.genus == 0:
        return IsothermicCertificate(residual=math.inf, witness_q=None, flags=("no_quadratic_differential",))
    if imm.genus != 1:
        raise UnsupportedGenusError(f"genus {imm.genus} is not supported")
    hb = basis if basis is not None else harmonic_basis(imm)
    tm = torus_modulus(imm, hb)
    if chart is None:
        chart = flat_chart(imm, hb, tm.tau_marked)
    if wf is None:
        wf = weingarten(imm, chart)
    q = quad_diff_basis(1, imm=imm, chart=chart)[0]
    f = _samples(q, imm)
    area, e2l = _chart_measure(imm, chart)
    F = (f / e2l)[:, None] * wf.H0
    w = area * e2l
    R, I = F.real, F.imag
    # ||Im(e^{i t} F)||^2 = [cos t, sin t] M [cos t, sin t]^T
    M = np.array([[np.sum(w[:, None] * I * I), np.sum(w[:, None] * I * R)],
                  [np.sum(w[:, None] * I * R), np.sum(w[:, None] * R * R)]])
    tr = float(np.trace(M))
    scale = float(np.sum(w * (np.abs(wf.H0) ** 2).sum(1)))
    if tr <= 1e-24 * max(scale, 1e-300) or tr == 0.0:
        return IsothermicCertificate(residual=0.0, witness_q=q, tau=tm.tau, flags=("totally_umbilic",))
    evals, evecs = np.linalg.eigh(M)
    t = math.atan2(evecs[1, 0], evecs[0, 0])
    c = complex(math.cos(t), math.sin(t))
    res = math.sqrt(max(evals[0], 0.0) / tr)
    return IsothermicCertificate(residual=res, witness_q=q.scaled(c), tau=tm.tau)


# -- local isothermic solve ----------------------------------------------------------

def local_isothermic_solve(vertices, faces, chart, umbilic_tol: float = 1e-6, degree: int = 0) -> dict:
    """Least-squares real field ``L`` with ``dzbar L = conj(f) e^{-2 lambda} dz Phi``.

    ``f`` is a holomorphic polynomial of the given degree (degree 0: a unit
    constant, i.e. the chart is a curvature-line chart up to rotation),
    chosen to minimise the residual subject to unit coefficient norm.
    Returns ``{"L_field", "residual", "f_coefficients", "cross_check"}``.
    """
    x = np.asarray(vertices, dtype=float)
    F = np.asarray(faces, dtype=np.int64)
    z = np.asarray(chart)
    if not np.iscomplexobj(z):
        z = z[:, 0] + 1j * z[:, 1]
    zf = z[F]
    dz1, dz2 = zf[:, 1] - zf[:, 0], zf[:, 2] - zf[:, 0]
    a, b, c, d = dz1.real, dz1.imag, dz2.real, dz2.imag
    det = a * d - b * c
    area = 0.5 * det
    if np.any(area <= 0):
        raise ChartMismatchError("chart is not orientation preserving on the patch")
    u = x[F[:, 1]] - x[F[:, 0]]
    v = x[F[:, 2]] - x[F[:, 0]]
    px = (u * d[:, None] - v * b[:, None]) / det[:, None]
    py = (v * a[:, None] - u * c[:, None]) / det[:, None]
    e2l = 0.5 * ((px ** 2).sum(1) + (py ** 2).sum(1))
    phi_z = 0.5 * (px - 1j * py)
    target = phi_z / e2l[:, None]                                  # (F, m)

    # umbilic exclusion: second fundamental form of the patch via a mesh imm
    from .curvature import VertexStencils, _half_edge_offsets, vertex_weingarten
    from .mesh import Topology

    topo = Topology(F, len(x), require_closed=False)

    class _P:
        pass
    pimm = _P()
    pimm.vertices, pimm.faces, pimm.n_vertices, pimm.topology = x, F, len(x), topo
    st = VertexStencils(pimm, _half_edge_offsets(pimm, zf))
    H0v, _ = vertex_weingarten(pimm, st)
    hf = np.sqrt((np.abs(H0v[F].mean(1)) ** 2).sum(1))
    h = float(np.mean(np.linalg.norm(x[topo.edges[:, 0]] - x[topo.edges[:, 1]], axis=1)))
    umb = hf < umbilic_tol / h
    if umb.mean() > 0.5:
        raise UmbilicPatchError(f"{int(umb.sum())}/{len(F)} faces are umbilic")
    keep = np.flatnonzero(~umb)

    # dzbar of a PL scalar on face f: coefficients on its three vertices
    # dzbar = (d/dx + i d/dy)/2
    cx = np.stack([-(d - b), d, -b], 1) / det[:, None]
    cy = np.stack([-(a - c), -c, a], 1) / det[:, None]
    cz = 0.5 * (cx + 1j * cy)[keep]
    Fk = F[keep]
    wk = np.sqrt(area[keep])
    nk = len(keep)
    rows = np.repeat(np.arange(nk), 3)
    Dz = sparse.csr_matrix(((cz * wk[:, None]).ravel(), (rows, Fk.ravel())), shape=(nk, len(x)))
    A = sparse.vstack([Dz.real, Dz.imag]).tocsr()                   # real system, (2nk, V)
    # the holomorphic factor: basis z^k, k = 0..degree, evaluated at face centroids
    zc = zf[keep].mean(1)
    pows = np.stack([zc ** k for k in range(degree + 1)], 1)      # (nk, K)
    from scipy.sparse.linalg import lsqr
    m = x.shape[1]
    K = degree + 1
    # columns: for each real/imag part of each coefficient, the RHS field
    # conj(f) target, split into real rows; eliminate L by projection
    cols = []
    for k in range(K):
        for part in (1.0, 1j):
            g = np.conj(part * pows[:, k])[:, None] * target[keep] * wk[:, None]    # (nk, m)
            cols.append(np.concatenate([g.real, g.imag], axis=0))                   # (2nk, m)
    # residual(c) = || (I - P_A) sum_j c_j cols_j ||^2 ; P_A via a factorisation
    AtA = (A.T @ A).tocsc() + 1e-12 * sparse.eye(len(x), format="csc")
    lu = splu(AtA)
    resid_cols = []
    for col in cols:
        Lc = lu.solve(np.asarray(A.T @ col))
        resid_cols.append(col - A @ Lc)
    R = np.stack([rc.ravel() for rc in resid_cols], 1)             # (2nk*m, 2K)
    C = np.stack([col.ravel() for col in cols], 1)
    Mr = R.T @ R
    Mc = C.T @ C
    from scipy.linalg import eigh
    evals, evecs = eigh(Mr, Mc)
    coef = evecs[:, 0]
    coef = coef / math.sqrt(coef @ Mc @ coef)
    fc = coef[0::2] + 1j * coef[1::2]
    rhs = sum(coef[j] * cols[j] for j in range(len(cols)))
    L = lu.solve(np.asarray(A.T @ rhs))
    residual = float(math.sqrt(max(evals[0], 0.0)))
    # cross-check: grad-perp L . grad Phi = 0 per face (real system of the local form)
    Lu = L[F[:, 1]] - L[F[:, 0]]
    Lv = L[F[:, 2]] - L[F[:, 0]]
    Lx = (Lu * d[:, None] - Lv * b[:, None]) / det[:, None]
    Ly = (Lv * a[:, None] - Lu * c[:, None]) / det[:, None]
    cc = (-(Ly * px).sum(1) + (Lx * py).sum(1))[keep]
    scale = np.sqrt(((Lx ** 2).sum(1) + (Ly ** 2).sum(1)) * 2 * e2l)[keep]
    cross = float(np.sqrt(np.sum(cc ** 2 * area[keep]) / max(np.sum(scale ** 2 * area[keep]), 1e-300)))
    return {"L_field": L, "residual": residual, "f_coefficients": fc, "cross_check": cross,
            "umbilic_faces": np.flatnonzero(umb)}


# -- constraint projection ---------------------------------------------------------

def constraint_rows(imm: TriangulatedImmersion, basis: HarmonicBasis | None = None) -> np.ndarray:
    """Real constraint rows (Re tau, Im tau gradients), shape (2, V*m)."""
    g = modulus_gradient(imm, basis)
    return np.stack([g.real.ravel(), g.imag.ravel()])


def normal_rank_ratio(imm: TriangulatedImmersion, rows: np.ndarray) -> tuple[float, np.ndarray]:
    """sigma_min / sigma_max of the rows restricted to normal variations."""
    from .curvature import vertex_projectors
    P = vertex_projectors(imm)
    m = imm.ambient_dim
    N = np.eye(m)[None] - P
    R = rows.reshape(len(rows), imm.n_vertices, m)
    Rn = np.einsum("vij,rvj->rvi", N, R).reshape(len(rows), -1)
    sv = np.linalg.svd(Rn, compute_uv=False)
    return float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0, sv


def constraint_project(imm: TriangulatedImmersion, grad, rank_tol: float = 1e-3,
                       basis: HarmonicBasis | None = None, check_rank: bool = True,
                       rows: np.ndarray | None = None) -> np.ndarray:
    """Remove from ``grad`` its components along the modulus gradients.

    Raises :class:`RankDeficiencyError` when the normal parts of the two rows
    are numerically dependent (isothermic degeneracy); the error carries the
    isothermic residual.
    """
    if imm.genus == 0:
        return np.array(grad, dtype=float, copy=True)
    if imm.genus != 1:
        raise UnsupportedGenusError(f"genus {imm.genus} is not supported")
    hb = basis if basis is not None else harmonic_basis(imm)
    R = rows if rows is not None else constraint_rows(imm, hb)
    if check_rank:
        ratio, sv = normal_rank_ratio(imm, R)
        if ratio < rank_tol:
            cert = isothermic_residual(imm, basis=hb)
            raise RankDeficiencyError(
                f"constraint rows are rank deficient (normal sigma ratio {ratio:.3e} < {rank_tol:.1e}); "
                f"isothermic residual {cert.residual:.3e}",
                isothermic_residual=cert.residual, singular_values=sv)
    return project_out(R, grad)


def project_out(R: np.ndarray, grad, rcond: float = 0.0) -> np.ndarray:
    g = np.asarray(grad, dtype=float)
    flat = g.ravel()
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    V = Vt[keep]
    out = flat - V.T @ (V @ flat)
    return out.reshape(g.shape)
