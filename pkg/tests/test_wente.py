from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from willmore_lab.errors import PreconditionError
from willmore_lab.wente import (DiskField, conformal_factor_split, dirichlet_norm, harmonic_residual,
                                jacobian, solve_wente, sup_norm, wente_ratio)

from .helpers import band_limited_ensemble

X = lambda x, y: x        # noqa: E731
Y = lambda x, y: y        # noqa: E731


def test_analytic_radial_case():
    n = 256
    phi = solve_wente(DiskField.from_function(X, n), DiskField.from_function(Y, n))
    assert abs(phi.values[n // 2, n // 2] - 0.25) < 1e-3
    xx, yy = phi.xy
    exact = (1 - xx ** 2 - yy ** 2) / 4
    # the 5-point / Shortley-Weller scheme is exact for quadratics
    assert np.abs(phi.values[phi.mask] - exact[phi.mask]).max() < 1e-10
    assert np.all(phi.values[~phi.mask] == 0)


def test_trivial_jacobians_give_zero():
    n = 64
    a = DiskField.from_function(lambda x, y: np.sin(2 * x) + y ** 3, n)
    c = DiskField.from_function(lambda x, y: 0 * x + 3.0, n)
    assert sup_norm(solve_wente(a, c)) == 0.0
    assert sup_norm(solve_wente(a, a)) < 1e-14


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_bilinear_and_antisymmetric(s, t):
    n = 48
    a1 = DiskField.from_function(lambda x, y: np.sin(x + 2 * y), n)
    a2 = DiskField.from_function(lambda x, y: x * y, n)
    b = DiskField.from_function(lambda x, y: np.cos(3 * x) - y, n)
    lin = DiskField(n, s * a1.values + t * a2.values)
    lhs = solve_wente(lin, b).values
    rhs = s * solve_wente(a1, b).values + t * solve_wente(a2, b).values
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())
    assert np.allclose(solve_wente(b, a1).values, -solve_wente(a1, b).values, atol=1e-14)


def test_jacobian_of_coordinates_is_one():
    J = jacobian(DiskField.from_function(X, 32), DiskField.from_function(Y, 32))
    assert np.allclose(J, 1.0)


def test_ratio_analytic():
    exact = (0.25 + math.sqrt(math.pi / 8)) / math.pi
    for n, tol in ((128, 0.01), (512, 0.002)):
        r = wente_ratio(DiskField.from_function(X, n), DiskField.from_function(Y, n))
        assert abs(r / exact - 1) < tol


def test_ratio_needs_nonzero_gradients():
    with pytest.raises(PreconditionError):
        wente_ratio(DiskField.zeros(16), DiskField.from_function(X, 16))
    with pytest.raises(PreconditionError):
        solve_wente(DiskField.zeros(16), DiskField.zeros(32))


def test_random_ensemble_bounded_and_stable():
    pairs = band_limited_ensemble(seed=1, size=12)
    ratios = {n: np.array([wente_ratio(DiskField.from_function(f, n), DiskField.from_function(g, n))
                           for f, g in pairs]) for n in (64, 128)}
    assert ratios[128].max() < 0.5
    assert np.abs(ratios[128] / ratios[64] - 1).max() < 0.05
    assert ratios[128].max() <= ratios[64].max() * 1.05


def test_oscillatory_pairs_do_not_grow():
    r = [wente_ratio(DiskField.from_function(lambda x, y: np.cos(k * x), 128),
                     DiskField.from_function(lambda x, y: np.cos(k * y), 128)) for k in range(1, 9)]
    assert max(r) < 2 * r[0]
    assert r[-1] <= r[0]


def test_conformal_factor_split_stereographic():
    n = 256
    rho = DiskField.from_function(lambda x, y: 4 / (1 + x * x + y * y) ** 2, n)
    s = conformal_factor_split(rho, DiskField.zeros(n))
    xx, yy = rho.xy
    lam = -np.log((1 + xx ** 2 + yy ** 2) / 2)
    m = rho.mask
    assert np.abs(s["lambda"].values[m] - lam[m]).max() < 1e-3
    assert s["nu_harmonic_residual"] < 1e-8
    assert s["mu_ratio"] < 1.0


def test_conformal_factor_split_flat_and_max_principle():
    n = 128
    g = lambda x, y: x * x - y * y + 0.3 * x     # noqa: E731
    s = conformal_factor_split(DiskField.zeros(n), DiskField.from_function(g, n))
    assert sup_norm(s["mu"]) == 0.0
    assert s["nu_harmonic_residual"] < 1e-8
    assert harmonic_residual(s["nu"], DiskField.from_function(g, n)) < 1e-8
    th = np.linspace(0, 2 * np.pi, 20001)
    gb = g(np.cos(th), np.sin(th))
    nu = s["nu"].values[s["nu"].mask]
    assert nu.max() <= gb.max() + 1e-12 and nu.min() >= gb.min() - 1e-12


def test_dirichlet_norm_of_coordinate():
    assert dirichlet_norm(DiskField.from_function(X, 512)) == pytest.approx(math.sqrt(math.pi), rel=5e-3)


def test_save_load_roundtrip(tmp_path):
    f = DiskField.from_function(lambda x, y: np.exp(x) * y, 32)
    f.save(tmp_path / "field")
    g = DiskField.load(tmp_path / "field")
    assert g.n == 32 and np.array_equal(g.values, f.values)
