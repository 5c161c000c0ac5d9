from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from willmore_lab import isothermal as iso
from willmore_lab import shapes
from willmore_lab.conformal_class import (conformal_class_differential, constraint_project,
                                          constraint_rows, flat_chart, holomorphic_quadratic_dimension,
                                          isothermic_residual, local_isothermic_solve, quad_diff_basis,
                                          reduce_modulus, torus_modulus, wp_norm, wp_pairing)
from willmore_lab.curvature import WeingartenField, vertex_normals, weingarten
from willmore_lab.errors import (ChartMismatchError, RankDeficiencyError, UmbilicPatchError,
                                 UnsupportedGenusError)

from .conftest import SQRT2
from .helpers import smooth_torus_field


def _revolution_modulus(R, r):
    # conformal coordinates (u, w) with dw = r dv / (R + r cos v): the lattice
    # is spanned by 2 pi and i * int_0^{2 pi} r / (R + r cos v) dv
    period = quad(lambda v: r / (R + r * math.cos(v)), 0, 2 * math.pi)[0]
    a = period / (2 * math.pi)
    return max(a, 1 / a)


def _scale(imm):
    x = imm.vertices
    return float(np.sqrt(np.mean(np.sum((x - x.mean(0)) ** 2, axis=1))))


@pytest.fixture(scope="module")
def torus_r2():
    return shapes.torus(2.0, 1.0, 48, 32, pattern="unionjack")


@pytest.fixture(scope="module")
def bumped(torus_r2):
    # a normal bump on the outer side of the handle: not isothermic
    x = torus_r2.vertices
    w = np.exp(-np.sum((x - [3.0, 0.0, 0.0]) ** 2, axis=1))
    return torus_r2.with_vertices(x + 0.1 * w[:, None] * vertex_normals(torus_r2))


# -- torus modulus ---------------------------------------------------------------------

def test_modulus_flat_rigs():
    assert abs(torus_modulus(shapes.flat_torus(1, 1, 16, 16)).tau - 1j) < 1e-3
    for t in (shapes.flat_torus(1, 2, 16, 32), shapes.flat_torus(2, 1, 32, 16)):
        assert abs(torus_modulus(t).tau - 2j) < 1e-2


@pytest.mark.parametrize("R", [SQRT2, 2.0, 3.0])
@pytest.mark.parametrize("pattern", ["diagonal", "unionjack"])
def test_modulus_revolution_torus(R, pattern):
    tm = torus_modulus(shapes.torus(R, 1.0, 32, 32, pattern=pattern))
    assert abs(tm.tau.imag / _revolution_modulus(R, 1.0) - 1) < 0.02
    assert abs(tm.tau.real) < 1e-12


def test_modulus_reduction_and_marking():
    tm = torus_modulus(shapes.flat_torus(1, 2, 16, 32))
    a, b, c, d = tm.reduction
    assert a * d - b * c == 1
    assert abs((a * tm.tau_marked + b) / (c * tm.tau_marked + d) - tm.tau) < 1e-12
    t, _ = reduce_modulus(0.7 + 0.2j)
    assert abs(t.real) <= 0.5 and abs(t) >= 1


# -- quadratic differentials / WP pairing ------------------------------------------------

def test_quad_diff_basis_dimensions(torus_r2):
    assert quad_diff_basis(0) == []
    assert holomorphic_quadratic_dimension(shapes.icosphere(2)) == 0
    assert holomorphic_quadratic_dimension(torus_r2) == 1
    with pytest.raises(UnsupportedGenusError):
        quad_diff_basis(2)
    ch = flat_chart(torus_r2)
    (q,) = quad_diff_basis(1, imm=torus_r2, chart=ch)
    assert wp_norm(q, torus_r2, ch) == pytest.approx(1.0, abs=1e-10)
    assert q.holomorphy_residual(torus_r2) < 1e-6
    (q0,) = quad_diff_basis(1, tau=2j)
    assert abs(q0.coefficients[0]) == pytest.approx(1 / math.sqrt(2))


def test_wp_pairing_real_on_revolution_torus(torus_r2):
    ch = flat_chart(torus_r2)
    wf = weingarten(torus_r2, ch)
    (q,) = quad_diff_basis(1, imm=torus_r2, chart=ch)
    p = wp_pairing(q, wf, torus_r2)
    scale = float(np.sum(wf.magnitude * np.exp(2 * wf.face_lambda)))
    assert np.abs(p.imag).max() < 1e-6 * scale


def test_wp_pairing_sesquilinear(bumped):
    ch = flat_chart(bumped)
    wf = weingarten(bumped, ch)
    (q,) = quad_diff_basis(1, imm=bumped, chart=ch)
    p = wp_pairing(q, wf, bumped)
    assert np.abs(p).max() > 1e-4
    for c in (0.3 - 1.2j, 2.0, 1j):
        assert np.abs(wp_pairing(q.scaled(c), wf, bumped) - np.conj(c) * p).max() < 1e-12 * np.abs(p).max()


def test_wp_pairing_needs_shared_chart(torus_r2):
    wf = weingarten(torus_r2)
    (q,) = quad_diff_basis(1, tau=2j)
    with pytest.raises(ChartMismatchError):
        wp_pairing(q, wf, torus_r2)


# -- isothermic residual ---------------------------------------------------------------------

def test_isothermic_revolution_torus(torus_uj64, torus_r2):
    for t in (torus_uj64, torus_r2):
        cert = isothermic_residual(t)
        assert cert.residual < 1e-4
        assert cert.witness_q is not None and np.abs(cert.witness_q.coefficients).max() > 0
        assert not cert.flags


def test_isothermic_perturbed_ensemble(torus_uj64):
    base = isothermic_residual(torus_uj64).residual
    N = vertex_normals(torus_uj64)
    for seed in range(10):
        f = smooth_torus_field(torus_uj64, np.random.default_rng(seed), SQRT2)
        pert = torus_uj64.with_vertices(torus_uj64.vertices + 0.05 * f[:, None] * N)
        r = isothermic_residual(pert).residual
        assert r > 10 * base and r > 1e-3


def test_isothermic_flat_rig_and_degenerate_branch():
    ft = shapes.flat_torus(1, 1, 16, 16)
    # the product torus in R^4 is isothermic (it is not totally umbilic)
    assert isothermic_residual(ft).residual < 1e-10
    ch = flat_chart(ft)
    wf = weingarten(ft, ch)
    zero = WeingartenField(np.zeros_like(wf.H0), ch, np.zeros_like(wf.vertex_H0),
                           wf.vertex_lambda, wf.face_lambda)
    cert = isothermic_residual(ft, chart=ch, wf=zero)
    assert cert.residual == 0.0 and cert.flags == ("totally_umbilic",)


def test_isothermic_genus_zero():
    cert = isothermic_residual(shapes.icosphere(2))
    assert cert.residual == math.inf and "no_quadratic_differential" in cert.flags
    d = cert.to_dict()
    assert set(d) == {"residual", "tau", "witness_coefficients", "flags"}


# -- local solve ----------------------------------------------------------------------------

def test_local_solve_cylinder():
    x, f, uv = shapes.cylinder_patch(1.0, 1.0, 24, 24)
    r = local_isothermic_solve(x, f, uv)
    assert r["residual"] < 1e-5
    assert r["cross_check"] < 10 * 1e-5
    assert len(r["L_field"]) == len(x)


def test_local_solve_graph_negative_control():
    cyl = local_isothermic_solve(*shapes.cylinder_patch(1.0, 1.0, 16, 16))["residual"]
    res = []
    for n in (16, 32):
        x, f, uv = shapes.graph_patch(lambda a, b: 0.1 * (a * a - b * b) + 0.05 * a * b ** 3, n)
        res.append(local_isothermic_solve(x, f, uv)["residual"])
    assert abs(res[1] / res[0] - 1) < 0.1           # a resolution-independent obstruction
    assert res[1] > 1e4 * cyl
    # the same surface in its built isothermal chart
    x, f, _ = shapes.graph_patch(lambda a, b: 0.1 * (a * a - b * b) + 0.05 * a * b ** 3, 16)
    P = iso.Patch.from_arrays(x, f)
    ch = iso.build_isothermal_chart(P)
    assert local_isothermic_solve(P.vertices, P.faces, ch.zeta)["residual"] > 1e4 * cyl


def test_local_solve_planar_patch_is_umbilic():
    uv, f = shapes.disk_mesh(8, 1.0)
    with pytest.raises(UmbilicPatchError):
        local_isothermic_solve(np.c_[uv, np.zeros(len(uv))], f, uv)


# -- dC(0) --------------------------------------------------------------------------------

def _similarity_fields(x):
    zero = np.zeros(len(x))
    fields = [np.tile(e, (len(x), 1)) for e in np.eye(3)]
    fields += [np.c_[zero, -x[:, 2], x[:, 1]], np.c_[x[:, 2], zero, -x[:, 0]], np.c_[-x[:, 1], x[:, 0], zero]]
    fields.append(x.copy())
    return fields


@pytest.mark.parametrize("which", ["torus_r2", "bumped"])
def test_dC_vanishes_on_similarities(which, request):
    imm = request.getfixturevalue(which)
    for nu in _similarity_fields(imm.vertices):
        assert abs(conformal_class_differential(imm, nu)[0]) < 1e-8


@pytest.mark.parametrize("method,tol", [("exact", 1e-6), ("wp", 1e-2)])
def test_dC_matches_finite_difference(torus_r2, method, tol):
    x = torus_r2.vertices
    w = np.exp(-np.sum((x - [3.0, 0.0, 0.0]) ** 2, axis=1))
    nu = w[:, None] * vertex_normals(torus_r2)
    h = 1e-4 * _scale(torus_r2)
    fd = (torus_modulus(torus_r2.with_vertices(x + h * nu)).tau_marked
          - torus_modulus(torus_r2.with_vertices(x - h * nu)).tau_marked) / (2 * h)
    d = conformal_class_differential(torus_r2, nu, method=method)[0]
    assert abs(fd) > 1e-3
    assert abs(d - fd) / abs(fd) < tol


def test_dC_genus_zero_and_shape(sphere3):
    assert conformal_class_differential(sphere3, sphere3.vertices).shape == (0,)
    with pytest.raises(ValueError):
        conformal_class_differential(shapes.torus(2.0, 1.0, 12, 12), np.zeros((3, 3)))


# -- constraint projection ----------------------------------------------------------------

def test_projection_kills_class_derivative(bumped):
    x = bumped.vertices
    h = 1e-4 * _scale(bumped)
    rng = np.random.default_rng(1)
    for _ in range(3):
        g = rng.standard_normal(x.shape)
        p = constraint_project(bumped, g)
        p /= np.abs(p).max()
        assert abs(conformal_class_differential(bumped, p)[0]) < 1e-8 * abs(conformal_class_differential(bumped, g)[0])
        fd = (torus_modulus(bumped.with_vertices(x + h * p)).tau_marked
              - torus_modulus(bumped.with_vertices(x - h * p)).tau_marked) / (2 * h)
        assert abs(fd) < 1e-6 * _scale(bumped)


def test_projection_idempotent(bumped):
    g = np.random.default_rng(2).standard_normal(bumped.vertices.shape)
    p1 = constraint_project(bumped, g)
    p2 = constraint_project(bumped, p1)
    assert np.abs(p2 - p1).max() <= 1e-10 * np.abs(p1).max()
    assert np.abs(constraint_rows(bumped) @ p1.ravel()).max() < 1e-10 * np.abs(g).max()


def test_projection_isothermic_torus_is_rank_deficient(torus_r2):
    g = np.random.default_rng(3).standard_normal(torus_r2.vertices.shape)
    with pytest.raises(RankDeficiencyError) as ei:
        constraint_project(torus_r2, g)
    assert ei.value.isothermic_residual < 1e-4
    assert ei.value.singular_values[-1] < 1e-8 * ei.value.singular_values[0]


def test_projection_genus_zero_is_identity(sphere3):
    g = np.random.default_rng(4).standard_normal(sphere3.vertices.shape)
    assert np.array_equal(constraint_project(sphere3, g), g)
