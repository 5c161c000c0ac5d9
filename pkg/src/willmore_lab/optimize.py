"""Willmore gradient, conservation-law residual, descent and convergence metrics.

The gradient used for descent is the exact derivative of the discrete energy
``sum_v |H_v|^2 A_v`` (so finite differences and similarity invariance hold to
round-off).  The pointwise Euler-Lagrange operator
``Delta^perp H + A~(H) - 2|H|^2 H`` is assembled separately by
:func:`willmore_operator` and agrees with the gradient density up to
discretization error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import kernels
from .conformal_class import (_field_jacobians, constraint_rows, harmonic_basis,
                              isothermic_residual, normal_rank_ratio, torus_modulus)
from .curvature import (_check_chart, cotan_laplacian, cotan_weights, gauss_map_energy,
                        mean_curvature, vertex_normals, vertex_projectors)
from .errors import (ConnectivityMismatchError, LineSearchFailureError, PreconditionError,
                     UnsupportedGenusError)
from .mesh import TriangulatedImmersion, face_frames, face_metrics, gram_determinants

ARMIJO_SHRINK = 0.5
ARMIJO_C = 1e-4
STALL_REL = 1e-8          # a failed line search with |slope| below this * W is a stall
DRIFT_EVERY = 10
DEFAULT_GTOL = 1e-6
DEFAULT_MAX_ITERS = 2000
RANK_TOL = 1e-3
EQUILATERAL_COT = 1.0 / math.sqrt(3.0)


# -- gradient ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WillmoreGradient:
    """``vector`` is ``dW/dx`` per vertex (the L2 density times vertex area)."""

    vector: np.ndarray
    vertex_area: np.ndarray
    energy: float

    @property
    def density(self) -> np.ndarray:
        return self.vector / self.vertex_area[:, None]

    @property
    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.density, axis=1).max())

    def directional(self, direction) -> float:
        return float(np.sum(self.vector * np.asarray(direction, dtype=float)))


def _areas(imm: TriangulatedImmersion) -> np.ndarray:
    cot, dbl = cotan_weights(imm)
    A, _ = kernels.mixed_vertex_areas(imm.vertices, imm.faces, cot, dbl, imm.n_vertices)
    return A


def willmore_gradient(imm: TriangulatedImmersion) -> WillmoreGradient:
    W, G = kernels.willmore_energy_grad(imm.vertices, imm.faces)
    return WillmoreGradient(vector=np.asarray(G), vertex_area=_areas(imm), energy=float(W))


def similarity_fields(imm: TriangulatedImmersion) -> np.ndarray:
    """Translations, infinitesimal rotations and the dilation, rows of shape (k, V*m)."""
    x = imm.vertices - imm.vertices.mean(axis=0)
    V, m = x.shape
    rows = []
    for i in range(m):
        t = np.zeros((V, m))
        t[:, i] = 1.0
        rows.append(t.ravel())
    for i in range(m):
        for j in range(i + 1, m):
            r = np.zeros((V, m))
            r[:, i] = -x[:, j]
            r[:, j] = x[:, i]
            rows.append(r.ravel())
    rows.append(x.ravel())
    return np.array(rows)


def angle_defects(imm: TriangulatedImmersion) -> np.ndarray:
    u, v = imm.edge_vectors
    x = imm.vertices
    f = imm.faces
    w = x[f[:, 2]] - x[f[:, 1]]
    def ang(a, b):
        return np.arctan2(np.linalg.norm(_wedge(a, b), axis=1), np.einsum("ij,ij->i", a, b))
    out = np.full(imm.n_vertices, 2.0 * math.pi)
    np.subtract.at(out, f[:, 0], ang(u, v))
    np.subtract.at(out, f[:, 1], ang(-u, w))
    np.subtract.at(out, f[:, 2], ang(-v, -w))
    return out


def _wedge(a, b):
    """Components of ``a ^ b`` (any dimension); its norm is the parallelogram area."""
    m = a.shape[1]
    i, j = np.triu_indices(m, 1)
    return a[:, i] * b[:, j] - a[:, j] * b[:, i]


def willmore_operator(imm: TriangulatedImmersion) -> np.ndarray:
    """Pointwise ``Delta^perp H + A~(H) - 2|H|^2 H`` per vertex (m = 3).

    In codimension one ``A~(H) = |A|^2 H = (4 H^2 - 2 K) H``, so the operator
    is ``(Delta h + 2 h (h^2 - K)) n`` for the scalar mean curvature ``h``.
    ``K`` is the angle defect over the mixed area.
    """
    if imm.ambient_dim != 3:
        raise PreconditionError("the pointwise Willmore operator is assembled for m = 3")
    cf = mean_curvature(imm)
    n = vertex_normals(imm)
    h = -np.einsum("ij,ij->i", cf.H, n)          # positive on outward-oriented spheres
    A = cf.vertex_area
    K = angle_defects(imm) / A
    lap = (cotan_laplacian(imm) @ h) / A
    return (lap + 2.0 * h * (h * h - K))[:, None] * n


# -- conservation-law residual -------------------------------------------------------

def _face_local_chart(imm: TriangulatedImmersion) -> np.ndarray:
    e1, e2 = face_frames(imm)
    u, v = imm.edge_vectors
    z = np.zeros((imm.n_faces, 3), dtype=complex)
    z[:, 1] = np.einsum("ij,ij->i", u, e1) + 1j * np.einsum("ij,ij->i", u, e2)
    z[:, 2] = np.einsum("ij,ij->i", v, e1) + 1j * np.einsum("ij,ij->i", v, e2)
    return z


def conservative_flux(imm: TriangulatedImmersion, chart=None, tol: float = 0.3) -> np.ndarray:
    """Weak divergence ``R_i = int grad w_i . V dx dy`` of the conserved field
    ``V = grad H - 3 pi_n grad H + *(grad^perp n ^ H)`` against the hat
    function of every vertex, shape (V, 3).

    The integrand is a pairing of first derivatives, hence invariant under
    conformal changes of coordinates: without a chart each face uses its own
    isometric coordinates.
    """
    if imm.ambient_dim != 3:
        raise PreconditionError("the conservative residual is assembled for m = 3")
    if chart is None:
        z = _face_local_chart(imm)
    else:
        _check_chart(imm, chart, tol)
        from .mesh import chart_face_coords
        z = chart_face_coords(imm, chart)
    H = mean_curvature(imm).H
    n = vertex_normals(imm)
    Hx, Hy = _field_jacobians(imm, z, H)
    nx, ny = _field_jacobians(imm, z, n)
    f = imm.faces
    Hf = H[f].mean(axis=1)
    u, v = imm.edge_vectors
    nf = np.cross(u, v)
    nf /= np.linalg.norm(nf, axis=1)[:, None]
    def pin(a):
        return np.einsum("ij,ij->i", a, nf)[:, None] * nf
    Vx = Hx - 3.0 * pin(Hx) - np.cross(ny, Hf)
    Vy = Hy - 3.0 * pin(Hy) + np.cross(nx, Hf)
    dz1 = z[:, 1] - z[:, 0]
    dz2 = z[:, 2] - z[:, 0]
    area = 0.5 * (dz1.conjugate() * dz2).imag
    # gradients of the three hat functions in chart coordinates: i (z_k - z_j) / (2 area)
    R = np.zeros((imm.n_vertices, 3))
    for c in range(3):
        zj, zk = z[:, (c + 1) % 3], z[:, (c + 2) % 3]
        g = 1j * (zk - zj) / (2.0 * area) * -1.0
        gx, gy = g.real, g.imag
        contrib = area[:, None] * (gx[:, None] * Vx + gy[:, None] * Vy)
        for k in range(3):
            R[:, k] += np.bincount(f[:, c], contrib[:, k], imm.n_vertices)
    return R


def _test_function_norms(imm: TriangulatedImmersion) -> np.ndarray:
    """Discrete ``||w_i||_{W^{2,2}} + ||w_i||_{W^{1,inf}}`` of every hat function:
    ``||w||_L2 + ||grad w||_L2 + ||M^-1 L w||_L2 + 1 + max |grad w|``."""
    cot, dbl = cotan_weights(imm)
    L = cotan_laplacian(imm, cot)
    A = _areas(imm)
    f = imm.faces
    u, v = imm.edge_vectors
    fa = 0.5 * np.linalg.norm(_wedge(u, v), axis=1)
    l2 = np.sqrt(A / 3.0)
    dir2 = -np.asarray(L.diagonal())
    lap2 = np.asarray(L.multiply(L).T @ (1.0 / A)).ravel()      # sum_j L_ji^2 / A_j
    # max |grad w_i| over incident faces: |opposite edge| / (2 area)
    x = imm.vertices
    gmax = np.zeros(imm.n_vertices)
    for c in range(3):
        opp = np.linalg.norm(x[f[:, (c + 2) % 3]] - x[f[:, (c + 1) % 3]], axis=1) / (2.0 * fa)
        np.maximum.at(gmax, f[:, c], opp)
    return l2 + np.sqrt(np.maximum(dir2, 0.0)) + np.sqrt(lap2) + 1.0 + gmax


def conservative_residual(imm: TriangulatedImmersion, chart=None, tol: float = 0.3) -> float:
    """``max_i |int grad w_i . V| / N(w_i)`` over the hat-function basis."""
    R = conservative_flux(imm, chart, tol)
    return float((np.linalg.norm(R, axis=1) / _test_function_norms(imm)).max())


def conservative_consistency(imm: TriangulatedImmersion, chart=None) -> dict:
    """Compare the weak divergence with ``c * dW/dx``.  The continuum identity
    gives ``c = -2`` in this sign convention (``dW/dx = -A (Delta^perp H + ...)``)."""
    R = conservative_flux(imm, chart)
    G = willmore_gradient(imm).vector
    c = float(np.sum(R * G) / np.sum(G * G))
    rel = float(np.linalg.norm(R - c * G) / np.linalg.norm(R))
    return {"fitted_scale": c, "scale_error": abs(c / -2.0 - 1.0), "fit_relative_error": rel,
            "norm_ratio": float(np.linalg.norm(R) / (2.0 * np.linalg.norm(G))),
            "flux_norm": float(np.linalg.norm(R)), "gradient_norm": float(np.linalg.norm(G))}


# -- descent -------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplierEstimate:
    coefficients: np.ndarray
    residual_before: float
    residual_after: float
    rank_ratio: float = 1.0
    degenerate: bool = False
    isothermic_residual: float | None = None

    def to_dict(self) -> dict:
        return {"coefficients": [[float(c.real), float(c.imag)] for c in self.coefficients],
                "residual_before": self.residual_before, "residual_after": self.residual_after,
                "rank_ratio": self.rank_ratio, "degenerate": self.degenerate,
                "isothermic_residual": self.isothermic_residual}


@dataclass
class MinimizeOptions:
    max_iters: int = DEFAULT_MAX_ITERS
    gtol: float = DEFAULT_GTOL
    armijo_shrink: float = ARMIJO_SHRINK
    armijo_c: float = ARMIJO_C
    max_backtracks: int = 40
    refactor_every: int = 20
    drift_every: int = DRIFT_EVERY
    drift_tol: float = 1e-2
    rank_tol: float = RANK_TOL
    normal_projection: str = "pre"
    checkpoint_every: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "MinimizeOptions":
        if d is None:
            return cls()
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise PreconditionError(f"unknown minimize options: {sorted(unknown)}")
        return cls(**known)


@dataclass(eq=False)
class OptState:
    immersion: TriangulatedImmersion
    mode: str
    iterations: int = 0
    energy_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    step_size: float = 1.0
    multiplier: MultiplierEstimate | None = None
    trace: list = field(default_factory=list)
    status: str = "running"
    tau0: complex | None = None
    max_drift: float = 0.0
    isothermic_encounters: int = 0
    checkpoints: list = field(default_factory=list)

    TRACE_COLUMNS = ("iter", "W", "E", "grad_norm", "tau_re", "tau_im", "step", "isothermic_flag")

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.TRACE_COLUMNS)
        for row in self.trace:
            w.writerow([_fmt(row[c]) for c in self.TRACE_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"mode": self.mode, "iterations": self.iterations, "status": self.status,
                "W_initial": self.energy_history[0], "W_final": self.energy_history[-1],
                "max_tau_drift": self.max_drift, "isothermic_encounters": self.isothermic_encounters,
                "tau0": None if self.tau0 is None else [self.tau0.real, self.tau0.imag],
                "multiplier": None if self.multiplier is None else self.multiplier.to_dict()}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return format(float(v), ".17g")


class _Preconditioner:
    """``P = L M^-1 L + alpha M`` (per coordinate), ``alpha = (4 pi / area)^2``."""

    def __init__(self, imm: TriangulatedImmersion):
        L = cotan_laplacian(imm)
        A = _areas(imm)
        alpha = (4.0 * math.pi / A.sum()) ** 2
        P = L @ sparse.diags(1.0 / A) @ L + alpha * sparse.diags(A)
        self.lu = splu(P.tocsc())

    def solve(self, G: np.ndarray) -> np.ndarray:
        return self.lu.solve(np.ascontiguousarray(G))


def _normal_projector(imm):
    P = vertex_projectors(imm)
    return np.eye(imm.ambient_dim)[None] - P


def _valid(imm: TriangulatedImmersion, x) -> bool:
    trial = imm.with_vertices(x, validate=False)
    return bool(np.all(np.isfinite(x)) and np.all(gram_determinants(trial) > imm.eps_det))


def minimize(imm0: TriangulatedImmersion, mode: str = "free", opts=None,
             callback: Callable | None = None) -> OptState:
    """Preconditioned (projected) gradient descent with Armijo backtracking.

    ``mode='conformal'`` keeps the marked torus modulus fixed: every
    direction is projected onto the tangent space of the constraint in the
    preconditioner metric, and every ``drift_every`` steps (or whenever the
    drift exceeds half of ``drift_tol``) one Newton step on ``tau`` pulls the
    iterate back.  Constraint rows whose normal parts are dependent
    (isothermic degeneracy) are recorded and the raw direction is used.
    """
    o = opts if isinstance(opts, MinimizeOptions) else MinimizeOptions.from_dict(opts)
    if mode not in ("free", "conformal"):
        raise PreconditionError(f"unknown mode {mode!r}")
    if mode == "conformal" and imm0.genus != 1:
        raise UnsupportedGenusError(f"conformal mode needs genus 1, got {imm0.genus}")
    imm = imm0
    state = OptState(immersion=imm, mode=mode)
    if mode == "conformal":
        state.tau0 = torus_modulus(imm).tau_marked
    gtol = o.gtol * imm.mean_edge_length ** -3

    def record(imm, grad, step, flag, tau):
        E = gauss_map_energy(imm)
        state.trace.append({"iter": state.iterations, "W": grad.energy, "E": E,
                            "grad_norm": grad.sup_norm,
                            "tau_re": float("nan") if tau is None else tau.real,
                            "tau_im": float("nan") if tau is None else tau.imag,
                            "step": step, "isothermic_flag": bool(flag)})

    grad = willmore_gradient(imm)
    state.energy_history.append(grad.energy)
    tau = state.tau0
    record(imm, grad, 0.0, False, tau)
    if o.max_iters <= 0:
        state.status = "max_iters"
        return state
    pre = None
    t = 1.0
    while True:
        if grad.sup_norm < gtol:
            state.status = "converged"
            break
        if state.iterations >= o.max_iters:
            state.status = "max_iters"
            break
        if pre is None or state.iterations % o.refactor_every == 0:
            pre = _Preconditioner(imm)
        G = grad.vector
        Nproj = _normal_projector(imm) if o.normal_projection != "none" else None
        R = None
        flag = False
        if mode == "conformal":
            R = constraint_rows(imm, harmonic_basis(imm))
            ratio, _ = normal_rank_ratio(imm, R)
            if ratio < o.rank_tol:
                flag = True
                state.isothermic_encounters += 1
                R = None
        d = _direction(pre, G, Nproj, o.normal_projection, R)
        slope = float(np.sum(G * d))
        if not slope < 0 and o.normal_projection == "pre":
            # the tangential part of G dominates: fall back to N P^-1 N G,
            # which is a descent direction whenever N G != 0
            d = _direction(pre, G, Nproj, "both", R)
            slope = float(np.sum(G * d))
        if not slope < 0:
            state.status = "stationary"
            break
        W0 = grad.energy
        t = min(1.0, 2.0 * t)
        correct = mode == "conformal" and (state.iterations + 1) % o.drift_every == 0
        accepted = None
        for _ in range(o.max_backtracks):
            x = imm.vertices + t * d
            if _valid(imm, x):
                candidates = [(x, None)]
                if mode == "conformal":
                    trial = imm.with_vertices(x, validate=False)
                    candidates = [(x, torus_modulus(trial).tau_marked)]
                    if correct or abs(candidates[0][1] - state.tau0) > 0.5 * o.drift_tol:
                        # the pulled-back point is preferred; when restoring
                        # tau0 costs more energy than the step gains, holding
                        # the current tau (an O(t^2) correction) keeps the
                        # drift from growing; the plain step comes last
                        candidates[:0] = [_correct_drift(trial, state.tau0, pre),
                                          _correct_drift(trial, tau, pre)]
                for xc, tc in candidates:
                    if not _valid(imm, xc):
                        continue
                    Wt, _ = kernels.willmore_energy_grad(xc, imm.faces)
                    if Wt <= W0 + o.armijo_c * t * slope and Wt < W0 and (
                            tc is None or abs(tc - state.tau0) <= o.drift_tol):
                        accepted = (xc, tc)
                        break
                if accepted is not None:
                    break
            t *= o.armijo_shrink
        if accepted is None:
            if abs(slope) <= STALL_REL * max(W0, 1.0):
                state.status = "stalled"
                break
            raise LineSearchFailureError(
                f"no Armijo step after {o.max_backtracks} halvings at iteration {state.iterations} "
                f"(W = {W0:.12g}, slope = {slope:.3e})")
        x, tau = accepted
        imm = imm.with_vertices(x, validate=False)
        grad = willmore_gradient(imm)
        state.iterations += 1
        state.energy_history.append(grad.energy)
        state.step_history.append(t)
        state.step_size = t
        if tau is not None:
            state.max_drift = max(state.max_drift, abs(tau - state.tau0))
        record(imm, grad, t, flag, tau)
        if o.checkpoint_every and state.iterations % o.checkpoint_every == 0:
            state.checkpoints.append((state.iterations, imm.vertices.copy()))
        if callback is not None:
            callback(state, imm)
    state.immersion = imm
    imm.check()
    if mode == "conformal":
        state.multiplier = multiplier_recover(imm)
    return state


def _direction(pre: _Preconditioner, G, Nproj, projection: str, R=None):
    """Preconditioned descent direction ``-S (G - F^T nu)`` with
    ``S = [N] P^-1 [N]`` (normal projections per ``projection``) and, when
    constraint rows ``R`` are given, ``nu`` chosen so that ``R d = 0``
    exactly; the multiplier fields ``F`` are the rows restricted like ``G``."""
    pre_n = projection in ("pre", "both")
    post_n = projection in ("post", "both")

    def nproj(a):
        return np.einsum("vij,vj->vi", Nproj, a)

    def S(a):
        out = pre.solve(nproj(a) if pre_n else a)
        return nproj(out) if post_n else out

    d = -S(G)
    if R is None:
        return d
    rows = R.reshape(len(R), *G.shape)
    SF = np.stack([S(r) for r in rows])
    M = np.einsum("rvi,svi->rs", rows, SF)
    nu = np.linalg.solve(M, np.einsum("rvi,vi->r", rows, d))
    return d - np.einsum("r,rvi->vi", nu, SF)


def _correct_drift(imm: TriangulatedImmersion, tau0: complex, pre: _Preconditioner, steps: int = 2):
    """Newton steps on ``tau(x) = tau0`` along ``P^-1 R^T``."""
    x = imm.vertices
    trial = imm
    tau = torus_modulus(trial).tau_marked
    for _ in range(steps):
        hb = harmonic_basis(trial)
        R = constraint_rows(trial, hb).reshape(2, *x.shape)
        PiR = np.stack([pre.solve(r) for r in R])
        S = np.einsum("rvi,svi->rs", R, PiR)
        r = np.array([tau0.real - tau.real, tau0.imag - tau.imag])
        x = x + np.einsum("r,rvi->vi", np.linalg.solve(S, r), PiR)
        trial = imm.with_vertices(x, validate=False)
        tau = torus_modulus(trial).tau_marked
    return x, tau


# -- multipliers ---------------------------------------------------------------------

def multiplier_recover(imm: TriangulatedImmersion, rank_tol: float = RANK_TOL) -> MultiplierEstimate:
    """Least-squares ``mu`` with ``dW/dx ~ Re(mu) dRe(tau) + Im(mu) dIm(tau)``.

    The constraint gradients span exactly the fields ``Im[f H0]`` of the
    quadratic differentials paired against the Weingarten operator, so this is
    the discrete fit of the conformal-Willmore residual.  Residuals are the
    area-weighted L2 norms of the gradient density.
    """
    grad = willmore_gradient(imm)
    A = grad.vertex_area
    w = 1.0 / np.sqrt(np.repeat(A, imm.ambient_dim))
    g = grad.vector.ravel() * w
    before = float(np.linalg.norm(g))
    if imm.genus == 0:
        return MultiplierEstimate(np.zeros(0, dtype=complex), before, before)
    if imm.genus != 1:
        raise UnsupportedGenusError(f"multiplier fit needs genus 0 or 1, got {imm.genus}")
    hb = harmonic_basis(imm)
    R = constraint_rows(imm, hb)
    ratio, _ = normal_rank_ratio(imm, R)
    Rw = R * w[None]
    c, *_ = np.linalg.lstsq(Rw.T, g, rcond=None)
    after = float(np.linalg.norm(g - Rw.T @ c))
    degenerate = ratio < rank_tol
    iso = isothermic_residual(imm, basis=hb).residual if degenerate else None
    return MultiplierEstimate(np.array([complex(c[0], c[1])]), before, after,
                              rank_ratio=ratio, degenerate=bool(degenerate), isothermic_residual=iso)


# -- convergence metrics -------------------------------------------------------------

def _check_pair(imm1: TriangulatedImmersion, imm2: TriangulatedImmersion):
    if imm1.faces.shape != imm2.faces.shape or not np.array_equal(imm1.faces, imm2.faces):
        raise ConnectivityMismatchError("immersions do not share connectivity")
    if imm1.ambient_dim != imm2.ambient_dim:
        raise ConnectivityMismatchError("immersions live in different ambient dimensions")


def _check_psi(faces: np.ndarray, psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.int64)
    n = int(faces.max()) + 1
    if psi.shape != (n,) or not np.array_equal(np.sort(psi), np.arange(n)):
        raise PreconditionError("psi must be a permutation of the vertices")
    key = lambda F: {tuple(sorted(t)) for t in F.tolist()}
    if key(psi[faces]) != key(faces):
        raise PreconditionError("psi does not map faces to faces")
    return psi


def _reference_dirichlet(faces: np.ndarray, values: np.ndarray) -> float:
    """Dirichlet energy of a PL field on the equilateral reference structure."""
    total = 0.0
    for a, b in ((1, 2), (2, 0), (0, 1)):
        d = values[faces[:, a]] - values[faces[:, b]]
        total += float(np.sum(d * d))
    return 0.5 * EQUILATERAL_COT * total


def _gauss_samples(imm: TriangulatedImmersion) -> np.ndarray:
    if imm.ambient_dim == 3:
        return vertex_normals(imm)
    return vertex_projectors(imm).reshape(imm.n_vertices, -1) / math.sqrt(2.0)


def _log_gradient(imm: TriangulatedImmersion) -> np.ndarray:
    """``log |grad Phi|`` per face on the unit equilateral reference triangle."""
    g = face_metrics(imm)
    u, v = imm.edge_vectors
    w = v - u
    s = g[:, 0] + g[:, 2] + np.einsum("ij,ij->i", w, w)
    return 0.5 * np.log(2.0 / 3.0 * s)


def lambda_terms(imm1: TriangulatedImmersion, imm2: TriangulatedImmersion, psi=None) -> dict:
    _check_pair(imm1, imm2)
    faces = imm1.faces
    if psi is not None:
        p = _check_psi(faces, psi)
        imm1 = imm1.with_vertices(imm1.vertices[p], validate=False)
        imm2 = imm2.with_vertices(imm2.vertices[p], validate=False)
    gauss = math.sqrt(_reference_dirichlet(faces, _gauss_samples(imm1) - _gauss_samples(imm2)))
    logt = float(np.abs(_log_gradient(imm1) - _log_gradient(imm2)).max())
    dirich = math.sqrt(_reference_dirichlet(faces, imm1.vertices - imm2.vertices))
    return {"gauss": gauss, "log_gradient": logt, "dirichlet": dirich}


def lambda_functional(imm1: TriangulatedImmersion, imm2: TriangulatedImmersion, psi=None) -> float:
    """Sum of the Gauss-map, log-gradient and position terms (see :func:`lambda_terms`)."""
    return float(sum(lambda_terms(imm1, imm2, psi).values()))


def metric_log_ratio(imm1: TriangulatedImmersion, imm2: TriangulatedImmersion) -> float:
    """``sup_faces sup_X |log |X|_g1 - log |X|_g2|`` from the generalized
    eigenvalues of the per-face metric pencil."""
    _check_pair(imm1, imm2)
    g1 = face_metrics(imm1)
    g2 = face_metrics(imm2)
    M1 = np.stack([np.stack([g1[:, 0], g1[:, 1]], -1), np.stack([g1[:, 1], g1[:, 2]], -1)], 1)
    M2 = np.stack([np.stack([g2[:, 0], g2[:, 1]], -1), np.stack([g2[:, 1], g2[:, 2]], -1)], 1)
    C = np.linalg.cholesky(M1)
    Ci = np.linalg.inv(C)
    S = Ci @ M2 @ np.swapaxes(Ci, 1, 2)
    ev = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, 1, 2)))
    return float(0.5 * np.abs(np.log(ev)).max())


def pseudo_distance(imm1: TriangulatedImmersion, imm2: TriangulatedImmersion) -> float:
    return lambda_functional(imm1, imm2) + metric_log_ratio(imm1, imm2)
