"""Discrete Willmore-energy toolkit for triangulated immersed surfaces.

Submodules: :mod:`mesh` (immersions and metrics), :mod:`curvature`,
:mod:`moebius`, :mod:`wente`, :mod:`isothermal`, :mod:`conformal_class`,
:mod:`optimize`, :mod:`io`, :mod:`config`, :mod:`report`, :mod:`cli`.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .curvature import gauss_map_energy, mean_curvature, willmore_energy
from .errors import (ConfigError, InputError, IoError, NumericalError,
                     WillmoreLabError)
from .io import load_immersion
from .kernels import BACKEND
from .mesh import TriangulatedImmersion

__all__ = ["__version__", "BACKEND", "TriangulatedImmersion", "load_immersion",
           "willmore_energy", "gauss_map_energy", "mean_curvature",
           "WillmoreLabError", "ConfigError", "InputError", "NumericalError", "IoError"]
