from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from willmore_lab import _kernels_py, kernels, shapes

from .conftest import SQRT2

BACKENDS = kernels.backends()


def _meshes():
    rng = np.random.default_rng(11)
    e = shapes.ellipsoid(1.0, 0.7, 0.4, level=3)
    noisy = e.with_vertices(e.vertices + 0.02 * rng.standard_normal(e.vertices.shape))
    t4 = shapes.flat_torus(1.0, 1.5, 12, 10)
    sheared = shapes.torus(SQRT2, 1.0, 24, 8)       # contains obtuse faces
    return {"sphere": shapes.icosphere(3), "noisy_ellipsoid": noisy, "flat_torus_r4": t4,
            "sheared_torus": sheared}


MESHES = _meshes()


def _angle_cotangents(x, faces):
    # independent oracle: cot of the interior angle from arccos
    out = np.empty(faces.shape)
    for c in range(3):
        p, a, b = x[faces[:, c]], x[faces[:, (c + 1) % 3]], x[faces[:, (c + 2) % 3]]
        u, v = a - p, b - p
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out[:, c] = 1.0 / np.tan(np.arccos(np.clip(cosang, -1, 1)))
    return out


@pytest.mark.parametrize("name", sorted(MESHES))
def test_cotangents_against_angles(name):
    imm = MESHES[name]
    cot, dbl = _kernels_py.corner_cotangents(imm.vertices, imm.faces)
    assert np.allclose(cot, _angle_cotangents(imm.vertices, imm.faces), rtol=1e-9, atol=1e-9)
    assert np.all(dbl > 0)


@pytest.mark.parametrize("name", sorted(MESHES))
def test_laplacian_against_sparse_assembly(name):
    imm = MESHES[name]
    x, F = imm.vertices, imm.faces
    cot, _ = _kernels_py.corner_cotangents(x, F)
    i = np.concatenate([F[:, 1], F[:, 2], F[:, 2], F[:, 0], F[:, 0], F[:, 1]])
    j = np.concatenate([F[:, 2], F[:, 1], F[:, 0], F[:, 2], F[:, 1], F[:, 0]])
    w = 0.5 * np.concatenate([cot[:, 0], cot[:, 0], cot[:, 1], cot[:, 1], cot[:, 2], cot[:, 2]])
    W = sp.csr_matrix((w, (i, j)), shape=(len(x), len(x)))
    L = W - sp.diags(np.asarray(W.sum(axis=1)).ravel())
    assert np.allclose(_kernels_py.cotan_laplacian_apply(x, F, cot), L @ x, atol=1e-12)


@pytest.mark.parametrize("name", sorted(MESHES))
def test_backends_agree(name):
    imm = MESHES[name]
    x, F = imm.vertices, imm.faces
    ref = _kernels_py
    for impl in BACKENDS.values():
        cot, dbl = impl.corner_cotangents(x, F)
        rc, rd = ref.corner_cotangents(x, F)
        assert np.allclose(cot, rc, rtol=1e-12, atol=1e-12) and np.allclose(dbl, rd, rtol=1e-12)
        A, k = impl.mixed_vertex_areas(x, F, cot, dbl, len(x))
        rA, rk = ref.mixed_vertex_areas(x, F, rc, rd, len(x))
        assert np.allclose(A, rA, rtol=1e-12) and k == rk
        assert np.allclose(impl.cotan_laplacian_apply(x, F, cot), ref.cotan_laplacian_apply(x, F, rc),
                           atol=1e-11)
        W, G = impl.willmore_energy_grad(x, F)
        rW, rG = ref.willmore_energy_grad(x, F)
        assert W == pytest.approx(rW, rel=1e-12)
        assert np.allclose(G, rG, rtol=1e-10, atol=1e-10 * np.abs(rG).max())


def test_mixed_areas_partition_total_area():
    for imm in MESHES.values():
        cot, dbl = _kernels_py.corner_cotangents(imm.vertices, imm.faces)
        A, _ = _kernels_py.mixed_vertex_areas(imm.vertices, imm.faces, cot, dbl, imm.n_vertices)
        assert A.sum() == pytest.approx(0.5 * dbl.sum(), rel=1e-12)
    assert _kernels_py.mixed_vertex_areas(*(lambda m: (m.vertices, m.faces, *_kernels_py.corner_cotangents(
        m.vertices, m.faces), m.n_vertices))(MESHES["sheared_torus"]))[1] > 0


@pytest.mark.parametrize("name", sorted(MESHES))
def test_gradient_finite_difference(name):
    # grid tori have exact right angles, where the obtuse clamp switches and
    # the energy has a kink; jitter so the difference quotient sees one branch
    imm = MESHES[name]
    rng = np.random.default_rng(5)
    x, F = imm.vertices + 1e-3 * rng.standard_normal(imm.vertices.shape), imm.faces
    _, G = _kernels_py.willmore_energy_grad(x, F)
    for _ in range(3):
        d = rng.standard_normal(x.shape)
        d /= np.linalg.norm(d)
        h = 1e-5
        fd = (_kernels_py.willmore_energy_grad(x + h * d, F)[0]
              - _kernels_py.willmore_energy_grad(x - h * d, F)[0]) / (2 * h)
        assert abs(fd - np.sum(G * d)) <= 1e-6 * max(abs(fd), np.abs(G).max())


def test_backend_env_override():
    code = "from willmore_lab import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, WILLMORE_LAB_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    assert set(BACKENDS) <= {"numpy", "cython"} and "numpy" in BACKENDS
