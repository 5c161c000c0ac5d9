"""Moebius maps of R^m acting on immersions, the 3-point normalisation, and
area-density diagnostics (monotonicity, Li-Yau density)."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .curvature import gauss_map_energy, mean_curvature, willmore_energy
from .errors import (InversionCenterOnSurfaceError, NoEmptyBallError, PreconditionError)
from .mesh import TriangulatedImmersion, face_areas, face_frames, total_area

DELTA_SAFE_REL = 1e-6
# calibrated once on the unit-sphere sweep (max observed ratio 1.0 times 2),
# see ``calibrate_monotonicity_constant``
MONOTONICITY_C = 2.0
AREA_C = 1.0
CONFORMAL_TOL = 0.01


# -- primitives -------------------------------------------------------------------

@dataclass(frozen=True)
class Translate:
    vector: tuple

    def __call__(self, x):
        return x + np.asarray(self.vector, dtype=float)

    def inverse(self):
        return Translate(tuple(-np.asarray(self.vector, dtype=float)))

    def to_dict(self):
        return {"type": "translate", "vector": [float(v) for v in self.vector]}


@dataclass(frozen=True)
class Dilate:
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise PreconditionError("dilation factor must be positive")

    def __call__(self, x):
        return self.factor * x

    def inverse(self):
        return Dilate(1.0 / self.factor)

    def to_dict(self):
        return {"type": "dilate", "factor": float(self.factor)}


@dataclass(frozen=True)
class Invert:
    """Unit inversion in the sphere of radius 1 about ``center`` (an involution)."""

    center: tuple

    def __call__(self, x):
        c = np.asarray(self.center, dtype=float)
        d = x - c
        return c + d / np.einsum("...i,...i->...", d, d)[..., None]

    def inverse(self):
        return self

    def to_dict(self):
        return {"type": "invert", "center": [float(v) for v in self.center]}


_PRIMS = {"translate": lambda d: Translate(tuple(d["vector"])),
          "dilate": lambda d: Dilate(float(d["factor"])),
          "invert": lambda d: Invert(tuple(d["center"]))}


@dataclass(frozen=True)
class MoebiusMap:
    """Composition of primitives, applied left to right."""

    primitives: tuple = ()

    def __call__(self, x):
        y = np.asarray(x, dtype=float)
        for p in self.primitives:
            y = p(y)
        return y

    def then(self, other: "MoebiusMap | Translate | Dilate | Invert") -> "MoebiusMap":
        more = other.primitives if isinstance(other, MoebiusMap) else (other,)
        return MoebiusMap(self.primitives + tuple(more))

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(tuple(p.inverse() for p in reversed(self.primitives)))

    def to_list(self) -> list:
        return [p.to_dict() for p in self.primitives]

    def to_json(self) -> str:
        return json.dumps(self.to_list(), sort_keys=True)

    @classmethod
    def from_list(cls, items) -> "MoebiusMap":
        return cls(tuple(_PRIMS[d["type"]](d) for d in items))

    @classmethod
    def from_json(cls, text: str) -> "MoebiusMap":
        return cls.from_list(json.loads(text))


def apply(map: MoebiusMap, imm: TriangulatedImmersion, *, delta_safe: float | None = None,
          validate: bool = True) -> TriangulatedImmersion:
    """Map the vertices; connectivity is kept.

    Every inversion centre must stay at least ``delta_safe`` (default
    ``1e-6`` times the current diameter) from every vertex.
    """
    x = np.array(imm.vertices, dtype=float)
    for p in map.primitives:
        if isinstance(p, Invert):
            lo, hi = x.min(axis=0), x.max(axis=0)
            delta = delta_safe if delta_safe is not None else DELTA_SAFE_REL * float(np.linalg.norm(hi - lo))
            d = float(np.sqrt(np.min(np.sum((x - np.asarray(p.center)) ** 2, axis=1))))
            if d < delta:
                raise InversionCenterOnSurfaceError(
                    f"inversion centre within {d:.3g} of the surface (margin {delta:.3g})")
        x = p(x)
    return imm.with_vertices(x, validate=validate)


# -- distances ----------------------------------------------------------------------

def point_triangle_distance(p, a, b, c) -> np.ndarray:
    """Distance from ``p`` to each triangle ``(a, b, c)`` (rows), any dimension."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = vb / denom
        w = vc / denom
        q = a + ab * v[:, None] + ac * w[:, None]               # interior
        t_ab = np.clip(d1 / (d1 - d3), 0, 1)
        t_ac = np.clip(d2 / (d2 - d6), 0, 1)
        t_bc = np.clip((d4 - d3) / ((d4 - d3) + (d5 - d6)), 0, 1)
    q = np.where(((vc <= 0) & (d1 >= 0) & (d3 <= 0))[:, None], a + ab * t_ab[:, None], q)
    q = np.where(((vb <= 0) & (d2 >= 0) & (d6 <= 0))[:, None], a + ac * t_ac[:, None], q)
    q = np.where(((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0))[:, None],
                 b + (c - b) * t_bc[:, None], q)
    q = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, q)
    q = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, q)
    q = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, q)
    return np.linalg.norm(p - q, axis=1)


def distance_to_surface(imm: TriangulatedImmersion, point) -> float:
    x = imm.vertices
    f = imm.faces
    p = np.broadcast_to(np.asarray(point, dtype=float), (len(f), x.shape[1]))
    return float(point_triangle_distance(p, x[f[:, 0]], x[f[:, 1]], x[f[:, 2]]).min())


# -- ball areas -----------------------------------------------------------------------

def _disk_triangle_area(a, b, r):
    """Signed area of (disk of radius r at 0) intersected with triangle (0, a, b)."""
    d = b - a
    A = d @ d
    B = 2.0 * (a @ d)
    C = a @ a - r * r
    ts = [0.0]
    disc = B * B - 4 * A * C
    if disc > 0 and A > 0:
        s = math.sqrt(disc)
        for t in sorted(((-B - s) / (2 * A), (-B + s) / (2 * A))):
            if 0.0 < t < 1.0:
                ts.append(t)
    ts.append(1.0)
    area = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        p, q = a + t0 * d, a + t1 * d
        m = a + 0.5 * (t0 + t1) * d
        cross = p[0] * q[1] - p[1] * q[0]
        if m @ m <= r * r:
            area += 0.5 * cross
        else:
            area += 0.5 * r * r * math.atan2(cross, p @ q)
    return area


def ball_area(imm: TriangulatedImmersion, x0, sigma: float) -> float:
    """Area of the part of the surface inside ``B_sigma(x0)``; faces cut by
    the sphere are clipped exactly (triangle / disk intersection in the
    face plane)."""
    if not sigma > 0:
        raise PreconditionError("sigma must be positive")
    x = imm.vertices
    f = imm.faces
    x0 = np.asarray(x0, dtype=float)
    dv = np.linalg.norm(x - x0, axis=1)
    inside = dv[f] < sigma
    areas = face_areas(imm)
    total = math.fsum(areas[inside.all(axis=1)])
    cand = np.flatnonzero(~inside.all(axis=1))
    if cand.size == 0:
        return total
    cen = x[f[cand]].mean(axis=1)
    rad = np.linalg.norm(x[f[cand]] - cen[:, None, :], axis=2).max(axis=1)
    near = np.linalg.norm(cen - x0, axis=1) < sigma + rad
    cand = cand[near]
    if cand.size == 0:
        return total
    e1, e2 = face_frames(imm)
    parts = []
    for k in cand:
        o = x[f[k, 0]]
        rel = x0 - o
        c2 = np.array([rel @ e1[k], rel @ e2[k]])
        off2 = rel @ rel - c2 @ c2
        if off2 >= sigma * sigma:
            continue
        rho = math.sqrt(sigma * sigma - off2)
        pts = [np.array([(x[v] - o) @ e1[k], (x[v] - o) @ e2[k]]) - c2 for v in f[k]]
        s = sum(_disk_triangle_area(pts[i], pts[(i + 1) % 3], rho) for i in range(3))
        parts.append(abs(s))
    return math.fsum([total] + parts)


def _local_willmore(imm: TriangulatedImmersion, x0, rho):
    cf = mean_curvature(imm)
    H2 = np.einsum("ij,ij->i", cf.H, cf.H) * cf.vertex_area
    sel = np.linalg.norm(imm.vertices - np.asarray(x0, dtype=float), axis=1) < rho
    return float(math.fsum(H2[sel]))


def monotonicity_check(imm: TriangulatedImmersion, x0, sigma: float, rho: float,
                       C: float = MONOTONICITY_C) -> dict:
    """Both sides of ``sigma^-2 |B_sigma| <= C [rho^-2 |B_rho| + W(B_rho)]``."""
    if not 0 < sigma <= rho:
        raise PreconditionError("need 0 < sigma <= rho")
    lhs = ball_area(imm, x0, sigma) / sigma ** 2
    rhs = C * (ball_area(imm, x0, rho) / rho ** 2 + _local_willmore(imm, x0, rho))
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs * (1 + 1e-12))}


def calibrate_monotonicity_constant(imm: TriangulatedImmersion, centers, radii,
                                    safety: float = 2.0) -> float:
    """``safety`` times the largest observed ratio ``lhs / (rhs / C)`` over a
    sweep of centres and admissible radius pairs."""
    worst = 0.0
    for x0 in centers:
        for s, r in itertools.combinations_with_replacement(sorted(radii), 2):
            m = monotonicity_check(imm, x0, s, r, C=1.0)
            if m["rhs"] > 0:
                worst = max(worst, m["lhs"] / m["rhs"])
    return safety * worst


# -- empty ball and normalisation ------------------------------------------------------

def empty_ball_search(imm: TriangulatedImmersion, *, max_candidates: int = 200_000,
                      n_verify: int = 16) -> dict:
    """Largest surface-free ball centred at a grid point of ``B_1(0)``.

    Grids of spacing 1/4, 1/8, ... are scanned in row-major order (first
    found wins ties) while the candidate count stays below
    ``max_candidates``.  On each grid the ``n_verify`` candidates farthest
    from the vertices get their exact point-to-mesh distance; the best
    verified radius over all grids is returned.
    """
    x = imm.vertices
    m = x.shape[1]
    tree = cKDTree(x)
    best_c, best_r = None, 0.0
    step = 0.25
    while True:
        t = np.arange(-1.0 + step, 1.0, step)
        if len(t) ** m > max_candidates and best_c is not None:
            break
        grid = np.stack(np.meshgrid(*([t] * m), indexing="ij"), axis=-1).reshape(-1, m)
        grid = grid[np.einsum("ij,ij->i", grid, grid) < 1.0]
        dist, _ = tree.query(grid)
        order = np.argsort(-dist, kind="stable")[:n_verify]
        for k in order:
            if dist[k] <= best_r:
                break       # the vertex distance bounds the surface distance from above
            r = distance_to_surface(imm, grid[k])
            if r > best_r:
                best_c, best_r = grid[k], r
        if len(t) ** m > max_candidates:
            break
        step /= 2
    if best_c is None:
        raise NoEmptyBallError("no surface-free ball found on the candidate grids")
    return {"center": best_c, "radius": best_r}


def three_point_normalize(imm: TriangulatedImmersion, P1: int, P2: int, P3: int,
                          Lambda: float, *, area_C: float = AREA_C,
                          tol: float = CONFORMAL_TOL) -> dict:
    """Moebius normalisation: the closest marked pair goes to distance 1
    with one of them at the origin, then invert about the centre of an empty
    ball of ``B_1(0)``.  Returns the map, the image and the checked
    postconditions."""
    P = [int(P1), int(P2), int(P3)]
    if len(set(P)) != 3:
        raise PreconditionError("marked points must be distinct")
    E = gauss_map_energy(imm)
    if not E < Lambda:
        raise PreconditionError(f"Gauss-map energy {E:.6g} not below Lambda = {Lambda:.6g}")
    y = imm.vertices[P]
    pairs = [(0, 1), (0, 2), (1, 2)]
    dists = [float(np.linalg.norm(y[i] - y[j])) for i, j in pairs]
    i, j = pairs[int(np.argmin(dists))]
    dmin = min(dists)
    if not dmin > 0:
        raise PreconditionError("marked points have coincident images")
    pre = MoebiusMap((Translate(tuple(-y[i])), Dilate(1.0 / dmin)))
    normed = apply(pre, imm, validate=False)
    ball = empty_ball_search(normed)
    c = ball["center"]
    rho0 = ball["radius"]
    xi = pre.then(MoebiusMap((Invert(tuple(c)), Translate(tuple(-c)))))
    out = apply(xi, imm, validate=False)
    z = out.vertices
    R = float(np.linalg.norm(z, axis=1).max())
    zp = z[P]
    r = min(float(np.linalg.norm(zp[a] - zp[b])) for a, b in pairs)
    area = total_area(out)
    W0, W1 = willmore_energy(imm), willmore_energy(out)
    dW = abs(W1 - W0) / W0 if W0 > 0 else abs(W1 - W0)
    return {"map": xi, "imm": out, "R": R, "r": r, "rho0": rho0, "center": c,
            "R_bound": 1.0 / rho0, "area": area, "area_bound": area_C * R * R * Lambda,
            "W_before": W0, "W_after": W1, "W_rel_change": dW,
            "contained": bool(R <= 1.0 / rho0 * (1 + 1e-12)),
            "separated": bool(r > 0), "area_ok": bool(area <= area_C * R * R * Lambda),
            "energy_ok": bool(dW < tol)}


def normalization_report(result: dict) -> dict:
    """JSON-ready subset of ``three_point_normalize``'s output."""
    return {"R": result["R"], "r": result["r"], "rho0": result["rho0"],
            "center": [float(v) for v in result["center"]], "W_before": result["W_before"],
            "W_after": result["W_after"], "map": result["map"].to_list()}


# -- density ---------------------------------------------------------------------------

def density_li_yau(imm: TriangulatedImmersion, x0, *, sigma0: float | None = None,
                   tol: float = 0.05) -> dict:
    """Area density ``theta = lim |B_sigma(x0)| / (pi sigma^2)`` extrapolated
    from three dyadic radii (fit ``a + b sigma^2``), compared with ``W/4pi``."""
    if sigma0 is None:
        sigma0 = 8.0 * imm.mean_edge_length
    s = sigma0 * np.array([1.0, 0.5, 0.25])
    ratios = np.array([ball_area(imm, x0, si) / (math.pi * si * si) for si in s])
    coef = np.polyfit(s ** 2, ratios, 1)
    theta = float(coef[-1])
    bound = willmore_energy(imm) / (4 * math.pi)
    return {"theta": theta, "bound": bound, "holds": bool(theta <= bound + tol),
            "ratios": ratios.tolist(), "radii": s.tolist()}
