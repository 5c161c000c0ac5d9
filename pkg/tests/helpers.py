"""Shared test oracles and generators."""

from __future__ import annotations

import math

import numpy as np


def band_limited_pair(rng: np.random.Generator, K: int = 3):
    """Two random trigonometric polynomials of degree <= K on the plane, with
    coefficients decaying like 1/(1+i+j); returned as callables (x, y)."""
    c = rng.standard_normal((2, 2, K + 1, K + 1)) / (1 + np.add.outer(np.arange(K + 1), np.arange(K + 1)))

    def make(C):
        def f(x, y):
            return sum(C[0, i, j] * np.cos(math.pi * (i * x + j * y) / 2)
                       + C[1, i, j] * np.sin(math.pi * (i * x - j * y) / 2)
                       for i in range(K + 1) for j in range(K + 1))
        return f

    return make(c[0]), make(c[1])


def band_limited_ensemble(seed: int, size: int, K: int = 3):
    rng = np.random.default_rng(seed)
    return [band_limited_pair(rng, K) for _ in range(size)]


def smooth_torus_field(imm, rng: np.random.Generator, R: float, K: int = 3) -> np.ndarray:
    """Random band-limited scalar on a torus of revolution (angles u, v),
    normalised to max |f| = 1."""
    x = imm.vertices
    u = np.arctan2(x[:, 1], x[:, 0])
    v = np.arctan2(x[:, 2], np.hypot(x[:, 0], x[:, 1]) - R)
    f = np.zeros(len(x))
    for i in range(K + 1):
        for j in range(K + 1):
            a, b, c, d = rng.standard_normal(4) / (1 + i + j)
            f += (a * np.cos(i * u) * np.cos(j * v) + b * np.sin(i * u) * np.cos(j * v)
                  + c * np.cos(i * u) * np.sin(j * v) + d * np.sin(i * u) * np.sin(j * v))
    return f / np.abs(f).max()
