from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from willmore_lab import shapes
from willmore_lab.errors import DegenerateFaceError, PreconditionError, TopologyError
from willmore_lab.mesh import (FaceMetric, TriangulatedImmersion, distortion,
                               distortion_identity_defect, distortion_trace_bounds,
                               face_metric, face_metrics, farthest_point_triple,
                               hopf_differential, metric_from_edges, pencil_extremes,
                               tangent_frame, total_area, validation_report)

from .conftest import SQRT2


def _icosahedron():
    from willmore_lab.shapes import _icosahedron
    return _icosahedron()


def _random_rotation(rng, m=3):
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def test_icosahedron_counts():
    v, f = _icosahedron()
    imm = TriangulatedImmersion(v, f)
    assert (imm.n_vertices, imm.topology.n_edges, imm.n_faces) == (12, 30, 20)
    assert imm.genus == 0 and imm.euler_characteristic == 2


def test_torus_grid_counts():
    imm = shapes.torus(SQRT2, 1.0, 16, 16)
    assert imm.euler_characteristic == 0 and imm.genus == 1
    assert (imm.n_vertices, imm.topology.n_edges, imm.n_faces) == (256, 768, 512)


def test_open_boundary_rejected():
    v, f = _icosahedron()
    with pytest.raises(TopologyError, match="boundary"):
        TriangulatedImmersion(v, f[1:])


def test_inconsistent_orientation_rejected():
    v, f = _icosahedron()
    f = f.copy()
    f[0] = f[0, ::-1]
    with pytest.raises(TopologyError):
        TriangulatedImmersion(v, f)


def test_degenerate_face_named():
    v, f = _icosahedron()
    v = v.copy()
    a, b, c = f[3]
    v[c] = 0.5 * (v[a] + v[b])
    with pytest.raises(DegenerateFaceError) as exc:
        TriangulatedImmersion(v, f)
    assert "face" in str(exc.value)


def test_face_metric_examples():
    g = metric_from_edges(np.array([2.0, 0, 0]), np.array([0, 1.0, 0]))
    assert (g.g11, g.g12, g.g22) == (4.0, 0.0, 1.0)
    with pytest.raises(DegenerateFaceError):
        metric_from_edges(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))
    imm = TriangulatedImmersion(*_icosahedron())
    fm = face_metric(imm, 0)
    assert fm.det > 0 and fm.area_element == pytest.approx(math.sqrt(fm.det))


def test_unit_right_triangle_identity_metric():
    g = metric_from_edges(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    assert (g.g11, g.g12, g.g22) == (1.0, 0.0, 1.0)


def test_tangent_frame_orthonormal(sphere3):
    fr = tangent_frame(sphere3, 5)
    assert np.linalg.norm(fr.e1) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(fr.e2) == pytest.approx(1.0, abs=1e-12)
    assert abs(np.dot(fr.e1, fr.e2)) < 1e-12


def test_hopf_examples():
    # chart and immersion sharing one right triangle: a single-face computation
    class One:
        pass
    x = np.array([[0, 0, 0], [2.0, 0, 0], [0, 1.0, 0]])
    chart = np.array([[0, 0], [1.0, 0], [0, 1.0]])
    from willmore_lab.mesh import hopf_differentials
    imm = _single_face(x)
    assert hopf_differentials(imm, chart)[0] == pytest.approx(3 + 0j)
    # g11 = g22 = 2, g12 = 1: edges (1,1,0) and (1,-1, sqrt 2)... use explicit vectors
    u = np.array([1.0, 1.0, 0.0])
    v = np.array([1.0, 0.0, 1.0])
    imm = _single_face(np.array([[0, 0, 0], u, v]))
    assert hopf_differentials(imm, chart)[0] == pytest.approx(0 - 2j)
    # conformal chart of any face: the isometric one
    imm = _single_face(np.array([[0, 0, 0], [1.0, 0, 0], [0.3, 0.7, 0]]))
    iso = np.array([[0, 0], [1.0, 0], [0.3, 0.7]])
    assert abs(hopf_differentials(imm, iso)[0]) < 1e-14


def _single_face(x):
    from willmore_lab.mesh import Topology
    topo = Topology(np.array([[0, 1, 2]]), 3, require_closed=False)
    return TriangulatedImmersion(x, topo.faces, topology=topo, validate=False)


def test_distortion_examples():
    assert distortion(FaceMetric(1.0, 0.0, 1.0)) == 0
    assert distortion(FaceMetric(4.0, 0.0, 1.0)) == pytest.approx(0.6)
    d = distortion(FaceMetric(1.0, 0.5, 1.0))
    assert d == pytest.approx(-0.5j)
    assert abs(d) ** 2 == pytest.approx(0.25) and 4 * 0.75 / 4 == pytest.approx(0.75)


spd = st.tuples(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(-0.999, 0.999)).map(
    lambda t: FaceMetric(t[0], t[2] * math.sqrt(t[0] * t[1]), t[1]))


@given(spd)
def test_distortion_identity_property(g):
    assert abs(distortion_identity_defect(g)) < 1e-12
    assert abs(distortion(g)) < 1


@given(spd, spd, st.integers(1, 6))
def test_trace_bounds_property(g, h, k):
    if not abs(distortion(g)) < 1 - 2.0 ** -k:
        with pytest.raises(PreconditionError):
            distortion_trace_bounds(g, h, k)
        return
    assert distortion_trace_bounds(g, h, k)["holds"]


def test_trace_bounds_equal_and_boundary_case():
    I = FaceMetric(1.0, 0.0, 1.0)
    r = distortion_trace_bounds(I, I, 1)
    assert r["holds"] and r["ratios"]["lower"] == 0.5 and r["ratios"]["upper"] == 2.0
    for k in (1, 2, 5):
        g = FaceMetric(1.0, 0.0, 1.0 + 2.0 ** (1 - k) - 1e-9)
        assert distortion_trace_bounds(g, I, k)["holds"]


def test_pencil_extremes_match_angular_grid(rng):
    for _ in range(20):
        a, b = rng.uniform(0.1, 3, 2)
        c = rng.uniform(-0.9, 0.9) * math.sqrt(a * b)
        g = FaceMetric(a, c, b)
        h = FaceMetric(*rng.uniform(0.5, 2, 1), 0.0, *rng.uniform(0.5, 2, 1))
        t = np.linspace(0, math.pi, 3600)
        X = np.stack([np.cos(t), np.sin(t)])
        q = np.einsum("in,ij,jn->n", X, g.matrix(), X) / np.einsum("in,ij,jn->n", X, h.matrix(), X)
        lo, hi = pencil_extremes(g, h)
        assert lo == pytest.approx(q.min(), rel=1e-5) and hi == pytest.approx(q.max(), rel=1e-5)


def test_total_area_examples(sphere4):
    assert total_area(sphere4) == pytest.approx(4 * math.pi, rel=0.01)
    assert total_area(sphere4.with_vertices(2 * sphere4.vertices)) == pytest.approx(
        4 * total_area(sphere4), rel=1e-14)
    T = shapes.torus(SQRT2, 1.0, 128, 128)
    assert total_area(T) == pytest.approx(4 * math.pi ** 2 * SQRT2, rel=0.01)


def test_rigid_motion_invariance(sphere3, rng):
    Q = _random_rotation(rng)
    moved = sphere3.with_vertices(sphere3.vertices @ Q.T + rng.standard_normal(3))
    g0, g1 = face_metrics(sphere3), face_metrics(moved)
    assert np.max(np.abs(g1 - g0) / np.abs(g0).max()) < 1e-12


def test_marked_points_default_and_validation(sphere3):
    a, b, c = sphere3.resolved_marked_points()
    assert len({a, b, c}) == 3
    assert (a, b, c) == farthest_point_triple(sphere3.vertices)
    with pytest.raises(PreconditionError):
        sphere3.with_marked_points((1, 1, 2))


def test_validation_report_fields(sphere3):
    rep = validation_report(sphere3)
    assert set(rep) == {"genus", "chi", "min_gram_det", "area"}
    assert rep["genus"] == 0 and rep["min_gram_det"] > 0


def test_higher_codimension_torus():
    T = shapes.flat_torus(1.0, 1.0, 12, 12)
    assert T.ambient_dim == 4 and T.genus == 1
