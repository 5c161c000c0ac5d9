"""Poisson problems with Jacobian right-hand side on the unit disk.

Fields live on a Cartesian grid over ``[-1, 1]^2`` (``n + 1`` nodes per
side, spacing ``h = 2/n``) masked to the open unit disk.  The Dirichlet
Laplacian uses the 5-point stencil with Shortley-Weller legs at nodes whose
neighbour lies outside the disk (exact for quadratics), so boundary values
are imposed on the true circle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, splu

from .errors import PreconditionError, SolverDivergenceError

DEFAULT_RESOLUTION = 256
DIRECT_LIMIT = 1_000_000
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiskField:
    """Samples on the full ``(n+1) x (n+1)`` square grid; ``mask`` marks the
    nodes strictly inside the unit disk.  ``func`` (optional) evaluates the
    field exactly, used for boundary values on the circle."""

    n: int
    values: np.ndarray
    func: Callable | None = None

    @staticmethod
    def axis(n: int) -> np.ndarray:
        return np.linspace(-1.0, 1.0, n + 1)

    @property
    def h(self) -> float:
        return 2.0 / self.n

    @property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        t = self.axis(self.n)
        return np.meshgrid(t, t, indexing="ij")

    @property
    def mask(self) -> np.ndarray:
        return _grid(self.n).mask

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Interior nodes with at least one neighbour outside the disk."""
        return _grid(self.n).irregular

    @classmethod
    def from_function(cls, func, n: int = DEFAULT_RESOLUTION) -> "DiskField":
        t = cls.axis(n)
        X, Y = np.meshgrid(t, t, indexing="ij")
        return cls(n, np.asarray(func(X, Y), dtype=float) * np.ones_like(X), func)

    @classmethod
    def zeros(cls, n: int = DEFAULT_RESOLUTION) -> "DiskField":
        return cls(n, np.zeros((n + 1, n + 1)), lambda x, y: np.zeros_like(x))

    def at(self, x, y) -> np.ndarray:
        """Exact values when ``func`` is known, else bilinear interpolation."""
        if self.func is not None:
            return np.asarray(self.func(x, y), dtype=float) * np.ones_like(x)
        s = (np.asarray(x) + 1.0) / self.h
        t = (np.asarray(y) + 1.0) / self.h
        i = np.clip(np.floor(s).astype(int), 0, self.n - 1)
        j = np.clip(np.floor(t).astype(int), 0, self.n - 1)
        fs, ft = s - i, t - j
        v = self.values
        return ((1 - fs) * (1 - ft) * v[i, j] + fs * (1 - ft) * v[i + 1, j]
                + (1 - fs) * ft * v[i, j + 1] + fs * ft * v[i + 1, j + 1])

    def save(self, path) -> None:
        """Flat little-endian float64 array plus a JSON header next to it."""
        path = Path(path)
        header = {"n": self.n, "layout": "row-major (x index, y index), float64 little-endian",
                  "shape": list(self.values.shape), "mask": "x^2 + y^2 < 1 on linspace(-1, 1, n + 1)"}
        path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=2))
        self.values.astype("<f8").tofile(path.with_suffix(".bin"))

    @classmethod
    def load(cls, path) -> "DiskField":
        path = Path(path)
        header = json.loads(path.with_suffix(".json").read_text())
        vals = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(header["shape"])
        return cls(int(header["n"]), vals)


@dataclass(frozen=True, eq=False)
class _Grid:
    n: int
    mask: np.ndarray
    index: np.ndarray
    irregular: np.ndarray
    L: sparse.csr_matrix          # Shortley-Weller Laplacian on interior unknowns
    legs: tuple                   # (row, x, y, weight) of boundary contributions
    lu: object


@lru_cache(maxsize=8)
def _grid(n: int) -> _Grid:
    t = DiskField.axis(n)
    h = 2.0 / n
    X, Y = np.meshgrid(t, t, indexing="ij")
    mask = X ** 2 + Y ** 2 < 1.0 - 1e-14
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    I, J = np.nonzero(mask)
    rows, cols, vals = [], [], []
    b_rows, b_x, b_y, b_w = [], [], [], []
    diag = np.zeros(len(I))
    irregular = np.zeros(mask.shape, dtype=bool)
    k = index[I, J]
    for axis in (0, 1):
        hl = np.full(len(I), h)
        hr = np.full(len(I), h)
        if axis == 0:
            nl, nr = (I - 1, J), (I + 1, J)
            along, across = X[I, J], Y[I, J]
        else:
            nl, nr = (I, J - 1), (I, J + 1)
            along, across = Y[I, J], X[I, J]
        inl = mask[nl]
        inr = mask[nr]
        reach = np.sqrt(np.maximum(1.0 - across ** 2, 0.0))
        hl[~inl] = (along + reach)[~inl]
        hr[~inr] = (reach - along)[~inr]
        cl = 2.0 / (hl * (hl + hr))
        cr = 2.0 / (hr * (hl + hr))
        diag -= cl + cr
        rows += [k[inl], k[inr]]
        cols += [index[nl][inl], index[nr][inr]]
        vals += [cl[inl], cr[inr]]
        for side, inside, c, sgn in ((0, inl, cl, -1.0), (1, inr, cr, 1.0)):
            out = ~inside
            pos = along[out] + sgn * (hl[out] if side == 0 else hr[out])
            bx, by = (pos, across[out]) if axis == 0 else (across[out], pos)
            b_rows.append(k[out])
            b_x.append(bx)
            b_y.append(by)
            b_w.append(c[out])
            irregular[I[out], J[out]] = True
    N = len(I)
    L = sparse.csr_matrix((np.concatenate(vals + [diag]),
                           (np.concatenate(rows + [k]), np.concatenate(cols + [k]))), shape=(N, N))
    legs = tuple(np.concatenate(a) for a in (b_rows, b_x, b_y, b_w))
    lu = splu((-L).tocsc()) if N <= DIRECT_LIMIT else None
    return _Grid(n, mask, index, irregular, L, legs, lu)


def _solve_dirichlet(n: int, rhs_interior: np.ndarray, boundary: DiskField | None = None) -> np.ndarray:
    """Solve ``-Delta u = rhs`` in the disk with ``u = boundary`` on the circle;
    returns the full-square array (zero outside the disk)."""
    g = _grid(n)
    b = np.array(rhs_interior, dtype=float)
    if boundary is not None:
        r, bx, by, w = g.legs
        np.add.at(b, r, w * boundary.at(bx, by))
    A = (-g.L).tocsr()
    if g.lu is not None:
        u = g.lu.solve(b)
    else:
        u, info = cg(A, b, rtol=1e-12, maxiter=20 * len(b))
        if info != 0:
            raise SolverDivergenceError(f"conjugate gradient stalled (info={info})")
    scale = max(float(np.linalg.norm(b)), 1e-300)
    res = float(np.linalg.norm(A @ u - b)) / scale
    if not np.all(np.isfinite(u)) or (np.linalg.norm(b) > 0 and res > RESIDUAL_TOL):
        raise SolverDivergenceError(f"Poisson solve residual {res:.3g} above {RESIDUAL_TOL}")
    out = np.zeros((n + 1, n + 1))
    out[g.mask] = u
    return out


def jacobian(a: DiskField, b: DiskField) -> np.ndarray:
    """Centred-difference ``a_x b_y - a_y b_x`` at the interior nodes."""
    _same_grid(a, b)
    h = a.h
    ax, ay = np.gradient(a.values, h, h, edge_order=2)
    bx, by = np.gradient(b.values, h, h, edge_order=2)
    return (ax * by - ay * bx)[a.mask]


def _same_grid(*fields):
    if len({f.n for f in fields}) != 1:
        raise PreconditionError("fields live on different grids")


def solve_wente(a: DiskField, b: DiskField) -> DiskField:
    """``-Delta phi = a_x b_y - a_y b_x`` in the disk, ``phi = 0`` on the circle."""
    phi = _solve_dirichlet(a.n, jacobian(a, b))
    return DiskField(a.n, phi)


def dirichlet_norm(f: DiskField) -> float:
    """``||grad f||_L2`` over the disk (cell-centred differences on cells
    whose four corners lie inside)."""
    v, h, m = f.values, f.h, f.mask
    cell = m[:-1, :-1] & m[1:, :-1] & m[:-1, 1:] & m[1:, 1:]
    gx = 0.5 * ((v[1:, :-1] - v[:-1, :-1]) + (v[1:, 1:] - v[:-1, 1:])) / h
    gy = 0.5 * ((v[:-1, 1:] - v[:-1, :-1]) + (v[1:, 1:] - v[1:, :-1])) / h
    return math.sqrt(float(np.sum((gx ** 2 + gy ** 2)[cell])) * h * h)


def sup_norm(f: DiskField) -> float:
    return float(np.abs(f.values[f.mask]).max())


def wente_ratio(a: DiskField, b: DiskField) -> float:
    """``(||phi||_inf + ||grad phi||_2) / (||grad a||_2 ||grad b||_2)``."""
    denom = dirichlet_norm(a) * dirichlet_norm(b)
    if not denom > 0:
        raise PreconditionError("wente_ratio needs ||grad a|| ||grad b|| > 0")
    phi = solve_wente(a, b)
    return (sup_norm(phi) + dirichlet_norm(phi)) / denom


def harmonic_residual(u: DiskField, boundary: DiskField | None = None) -> float:
    """Max discrete Laplacian residual of ``u`` at interior nodes (relative to
    ``max |u| / h^2``)."""
    g = _grid(u.n)
    r = g.L @ u.values[g.mask]
    if boundary is not None:
        rr, bx, by, w = g.legs
        np.add.at(r, rr, w * boundary.at(bx, by))
    scale = max(sup_norm(u), 1e-300) / u.h ** 2
    return float(np.abs(r).max()) / scale


def conformal_factor_split(frame_energy_density: DiskField, boundary_lambda: DiskField) -> dict:
    """Split ``lambda = mu + nu``: ``-Delta mu = rho`` with ``mu = 0`` on the
    circle and ``nu`` harmonic with ``nu = lambda`` there.

    ``rho`` is the Jacobian density ``(grad^perp e1, grad e2)`` of a frame,
    which equals ``K e^{2 lambda}``.  Also reports ``||mu||_inf / int |rho|``.
    """
    _same_grid(frame_energy_density, boundary_lambda)
    n = frame_energy_density.n
    rho = frame_energy_density.values[frame_energy_density.mask]
    mu = DiskField(n, _solve_dirichlet(n, rho))
    nu = DiskField(n, _solve_dirichlet(n, np.zeros_like(rho), boundary_lambda))
    mass = float(np.sum(np.abs(rho))) * frame_energy_density.h ** 2
    return {"mu": mu, "nu": nu,
            "lambda": DiskField(n, mu.values + nu.values),
            "nu_harmonic_residual": harmonic_residual(nu, boundary_lambda),
            "mu_sup": sup_norm(mu), "density_mass": mass,
            "mu_ratio": sup_norm(mu) / mass if mass > 0 else 0.0}
