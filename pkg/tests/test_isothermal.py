from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from willmore_lab import isothermal as iso
from willmore_lab import shapes
from willmore_lab.errors import CoverFailureError, InsufficientAnnuliError, PreconditionError, TopologyError
from willmore_lab.mesh import chart_distortions


def _cap(theta=math.pi / 4, n=24):
    x, f, uv = shapes.spherical_cap(theta, n)
    return iso.Patch.from_arrays(x, f), uv


def _planar(n=8, shift=(0.3, 0.1, 0.0)):
    uv, f = shapes.disk_mesh(n, 1.0)
    return iso.Patch.from_arrays(np.c_[uv, np.zeros(len(uv))] + np.array(shift), f), uv


def _bump(level, A=20.0, s=0.3):
    s0 = shapes.icosphere(level)
    x = s0.vertices
    r = 1 + A * np.exp(-np.sum((x - [0, 0, 1.0]) ** 2, axis=1) / s ** 2)
    return s0.with_vertices(x * r[:, None])


# -- patch cover ----------------------------------------------------------------------

def test_cover_sphere(sphere4):
    patches = iso.patch_cover(sphere4)
    assert len(patches) >= 4
    covered = np.zeros(sphere4.n_faces, dtype=bool)
    for p in patches:
        assert p.is_disk and p.gauss_energy < iso.PATCH_BUDGET
        covered[p.parent_faces] = True
    assert covered.all()
    # deterministic
    again = iso.patch_cover(sphere4)
    assert [p.parent_faces.tolist() for p in again] == [p.parent_faces.tolist() for p in patches]


def test_cover_flat_torus_rig():
    ft = shapes.flat_torus(1.0, 1.0, 16, 16)
    patches = iso.patch_cover(ft)
    assert all(p.is_disk and p.gauss_energy < iso.PATCH_BUDGET for p in patches)
    assert len({p.n_faces for p in patches}) == 1          # translation-symmetric rig


def test_cover_spike_fails_coarse_succeeds_refined():
    with pytest.raises(CoverFailureError):
        iso.patch_cover(_bump(1))
    patches = iso.patch_cover(_bump(3))
    assert all(p.gauss_energy < iso.PATCH_BUDGET for p in patches)


def test_patch_validation():
    x, f, _ = shapes.spherical_cap(math.pi / 4, 8)
    with pytest.raises(PreconditionError):
        iso.Patch.from_arrays(x, f, budget=1e-3)
    ann_uv, ann_f = shapes.disk_mesh(6, 1.0)
    keep = ~np.isin(ann_f, [0]).any(axis=1)          # drop the centre fan: an annulus
    with pytest.raises(TopologyError):
        iso.Patch.from_arrays(np.c_[ann_uv, np.zeros(len(ann_uv))], ann_f[keep])


# -- Coulomb frame ----------------------------------------------------------------------

def test_coulomb_frame_flat_patch():
    P, _ = _planar()
    fr = iso.coulomb_frame(P)
    assert fr.connection_energy < 1e-20
    assert np.abs(fr.e1 - fr.e1[0]).max() < 1e-10


def test_coulomb_frame_cap_bound_and_gauge():
    P, _ = _cap()
    fr = iso.coulomb_frame(P)
    assert fr.coulomb_residual < 1e-8
    assert fr.holonomy_residual < 1e-8
    assert fr.energy_bound_ok()
    assert fr.frame_energy <= 2 * P.gauss_energy * 1.05
    for e, g in ((fr.e1, fr.e2), (fr.e2, fr.e1)):
        assert np.allclose(np.einsum("ij,ij->i", e, e), 1.0)
        assert np.abs(np.einsum("ij,ij->i", e, g)).max() < 1e-12


def test_coulomb_frame_local_minimality():
    P, _ = _cap(n=12)
    fr = iso.coulomb_frame(P)
    base = fr.connection_energy_at(fr.theta)
    rng = np.random.default_rng(5)
    for face in rng.choice(P.n_faces, 10, replace=False):
        for eps in (1e-3, -1e-3):
            th = fr.theta.copy()
            th[face] += eps
            assert fr.connection_energy_at(th) > base


def test_coulomb_frame_on_cover_patches(torus32):
    for p in iso.patch_cover(torus32)[:4]:
        assert iso.coulomb_frame(p).energy_bound_ok()


# -- charts ------------------------------------------------------------------------------

def test_planar_patch_chart_is_similarity():
    P, uv = _planar()
    ch = iso.build_isothermal_chart(P, boundary="free")
    assert ch.hopf_max < 1e-12
    z0 = uv[:, 0] + 1j * uv[:, 1]
    # zeta = a z0 + b for some complex a, b
    A = np.c_[z0, np.ones_like(z0)]
    coef = np.linalg.lstsq(A, ch.zeta, rcond=None)[0]
    assert np.abs(A @ coef - ch.zeta).max() < 1e-10
    assert np.all(np.abs(ch.zeta) <= 1 + 1e-12)


def test_cap_chart_conformal_factor():
    theta = math.pi / 4
    P, _ = _cap(theta, 48)
    ch = iso.build_isothermal_chart(P)
    rho = math.tan(theta / 2)
    zc = ch.zeta[P.faces].mean(axis=1)
    stereo = 2 * rho / (1 + rho ** 2 * np.abs(zc) ** 2)
    assert np.abs(np.exp(ch.face_lambda) / stereo - 1).max() < 1e-3
    assert np.abs(ch.zeta[P.boundary_loop]) == pytest.approx(1.0, abs=1e-12)


def test_cap_chart_distortion_floor_decreases():
    # a piecewise-linear chart of a curved patch cannot be conformal on every
    # face (angle defects); the distortion is first order in the mesh size
    h = [iso.build_isothermal_chart(_cap(n=n)[0]).hopf_max for n in (12, 24)]
    assert h[1] < 0.6 * h[0]
    assert h[1] < 0.01


def test_graph_patch_improves_on_identity_chart():
    x, f, uv = shapes.graph_patch(lambda a, b: 0.1 * a * b, 16)
    P = iso.Patch.from_arrays(x, f)
    before = np.abs(chart_distortions(P.immersion, uv[:, 0] + 1j * uv[:, 1])).max()
    after = iso.build_isothermal_chart(P).hopf_max
    assert before > 1e-3
    assert after < before / 5


def test_beltrami_coefficient_bound():
    for n in (12, 24):
        P, uv = _cap(n=n)
        eps0 = np.abs(chart_distortions(P.immersion, uv[:, 0] + 1j * uv[:, 1])).max()
        assert iso.build_isothermal_chart(P).nu_max <= 2 * eps0


def test_chart_orientation_and_report():
    P, _ = _cap(n=12)
    ch = iso.build_isothermal_chart(P)
    zf = ch.zeta[P.faces]
    area = np.imag(np.conj(zf[:, 1] - zf[:, 0]) * (zf[:, 2] - zf[:, 0]))
    assert np.all(area > 0)
    d = ch.to_dict()
    assert {"gauss_energy", "hopf_max", "nu_max", "lambda_range"} <= set(d)
    with pytest.raises(PreconditionError):
        iso.build_isothermal_chart(P, boundary="square")


# -- conformal factor control ------------------------------------------------------------

def _far_pair(P, ch):
    inner = P.interior_vertices
    d = np.linalg.norm(P.vertices - P.vertices[ch.center], axis=1)
    return ch.center, int(inner[np.argmax(d[inner])])


def test_control_cap_family():
    for th in (1.0, 0.5, 0.25, 0.125):
        P, _ = _cap(th, 16)
        ch = iso.build_isothermal_chart(P)
        r = iso.conformal_factor_control(ch, *_far_pair(P, ch))
        assert r["sup_bound_ok"] and r["osc_bound_ok"]


def test_control_collapsing_points():
    P, _ = _cap(1.0, 24)
    ch = iso.build_isothermal_chart(P)
    d = np.linalg.norm(P.vertices - P.vertices[ch.center], axis=1)
    order = np.argsort(d)
    rhs, dist = [], []
    for k in (200, 50, 10, 1):
        r = iso.conformal_factor_control(ch, ch.center, int(order[k]))
        assert r["osc_bound_ok"] and r["osc_rhs"] > r["osc_lhs"]
        rhs.append(r["osc_rhs"])
        dist.append(r["distance"])
    # the right side grows like log(1/|p1 - p2|)
    slope = np.polyfit(np.log(1 / np.array(dist)), rhs, 1)[0]
    assert slope == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(PreconditionError):
        iso.conformal_factor_control(ch, ch.center, ch.center)


def test_control_flat_patch():
    P, _ = _planar(shift=(0, 0, 0))
    ch = iso.build_isothermal_chart(P)
    r = iso.conformal_factor_control(ch, ch.center, 5)
    assert r["sup_bound_ok"] and r["osc_bound_ok"]


# -- branch order ------------------------------------------------------------------------

def _power_patch(m):
    uv, f = shapes.disk_mesh(32, 1.0, n_first=8)
    z = (uv[:, 0] + 1j * uv[:, 1]) ** m
    P = iso.Patch(np.c_[z.real, z.imag, np.zeros(len(z))], f, np.zeros(len(f)))
    return P, uv


@pytest.mark.parametrize("m", [1, 2, 3])
def test_branch_order(m):
    P, uv = _power_patch(m)
    assert iso.branch_order_estimate(iso.ChartMap.from_coordinates(P, uv)) == m


def test_branch_order_built_chart_unbranched():
    P, _ = _power_patch(1)
    assert iso.branch_order_estimate(iso.build_isothermal_chart(P)) == 1


def test_branch_order_rigid_and_dilation_invariant():
    P, uv = _power_patch(2)
    Q = Rotation.from_euler("xyz", [0.4, 0.2, -0.7]).as_matrix()
    moved = iso.Patch(3.5 * P.vertices @ Q.T + 1.0, P.faces, P.face_energy)
    assert iso.branch_order_estimate(iso.ChartMap.from_coordinates(moved, uv)) == 2


def test_branch_order_needs_annuli():
    uv, f = shapes.disk_mesh(2, 1.0)
    P = iso.Patch(np.c_[uv, np.zeros(len(uv))], f, np.zeros(len(f)))
    with pytest.raises(InsufficientAnnuliError):
        iso.branch_order_estimate(iso.ChartMap.from_coordinates(P, uv))
