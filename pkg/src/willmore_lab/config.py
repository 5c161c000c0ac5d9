"""Flat key-value experiment configuration.

The file is TOML restricted to top-level ``key = value`` pairs (no tables),
so experiment records stay diff-friendly.  Example::

    input = "meshes/torus.obj"      # or: shape = "torus R=1.4142135623730951 r=1 n_u=64 n_v=64"
    seed = 7
    max_iters = 300
    noise = 0.02
    drift_tol = 0.01
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

try:                                   # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:            # pragma: no cover - exercised on 3.10
    import tomli as _toml

from .errors import ConfigError

MODES = ("analyze", "normalize", "chart", "minimize-free", "minimize-conformal", "isothermic")

# keys whose values must be strictly positive
_POSITIVE = ("eps_det", "chart_tol", "hopf_tol", "rank_tol", "gtol", "drift_tol",
             "lambda_max", "patch_budget", "conformal_tol", "area_c", "threads")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    input: str | None = None
    shape: str | None = None
    out: str = "out"
    seed: int = 0
    threads: int = 1
    # immersion core
    eps_det: float = 1e-24
    # curvature / charts
    chart_tol: float = 0.3
    hopf_tol: float = 1e-6
    patch_budget: float = 8.0 * math.pi / 3.0
    chart_boundary: str = "auto"
    chart_max_iter: int = 30
    # normalization
    marked_points: tuple = ()
    lambda_max: float = 8.0 * math.pi * 100.0
    area_c: float = 1.0
    conformal_tol: float = 0.01
    # minimization
    max_iters: int = 2000
    gtol: float = 1e-6
    drift_tol: float = 1e-2
    rank_tol: float = 1e-3
    noise: float = 0.0
    checkpoint_every: int = 0
    normal_projection: str = "pre"
    # residual normalisation choice (reported in the summary)
    residual_norm: str = "hat-W22+W1inf"
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        d["marked_points"] = list(self.marked_points)
        return d


def _coerce(name: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"key {name!r} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {name!r} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {name!r} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
            raise ConfigError(f"key {name!r} must be a list of integers")
        return tuple(value)
    if not isinstance(value, str):
        raise ConfigError(f"key {name!r} must be a string, got {value!r}")
    return value


def parse_config(text: str, mode: str | None = None, *, base_dir: Path | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid key = value TOML: {exc}") from None
    for k, v in raw.items():
        if isinstance(v, dict):
            raise ConfigError(f"nested table [{k}] not allowed; the config is flat")
    raw.update(overrides or {})
    if mode is not None:
        if "mode" in raw and raw["mode"] != mode:
            raise ConfigError(f"config mode {raw['mode']!r} conflicts with command-line mode {mode!r}")
        raw["mode"] = mode
    if raw.get("mode") not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {raw.get('mode')!r}")
    defaults = {f.name: f.default for f in fields(ExperimentConfig)
                if f.name not in ("mode", "extra")}
    defaults["input"] = ""
    defaults["shape"] = ""
    values = {"mode": raw.pop("mode")}
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in raw.items():
        values[k] = _coerce(k, v, defaults[k])
    for k in _POSITIVE:
        if k in values and not values[k] > 0:
            raise ConfigError(f"key {k!r} must be positive, got {values[k]!r}")
    if values.get("noise", 0.0) < 0:
        raise ConfigError("key 'noise' must be non-negative")
    for k in ("max_iters", "checkpoint_every", "chart_max_iter"):
        if values.get(k, 0) < 0:
            raise ConfigError(f"key {k!r} must be non-negative")
    if bool(values.get("input")) == bool(values.get("shape")):
        raise ConfigError("exactly one of 'input' (mesh path) or 'shape' (generator) is required")
    if values.get("input") and base_dir is not None and not Path(values["input"]).is_absolute():
        values["input"] = str(base_dir / values["input"])
    if values.get("marked_points") and len(values["marked_points"]) != 3:
        raise ConfigError("marked_points needs exactly 3 vertex indices")
    if values.get("chart_boundary", "auto") not in ("auto", "circle", "free"):
        raise ConfigError("chart_boundary must be 'auto', 'circle' or 'free'")
    if values.get("normal_projection", "pre") not in ("none", "pre", "post", "both"):
        raise ConfigError("normal_projection must be one of none, pre, post, both")
    return ExperimentConfig(**{k: (v if v != "" else None) for k, v in values.items()})


def load_config(path, mode: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, mode, base_dir=path.parent, overrides=overrides)


# -- shape generators ---------------------------------------------------------------

def build_shape(spec: str):
    """``"<name> key=value ..."`` for the generators in :mod:`willmore_lab.shapes`."""
    from . import shapes
    parts = spec.split()
    if not parts:
        raise ConfigError("empty shape specification")
    name, args = parts[0], {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ConfigError(f"shape argument {tok!r} is not key=value")
        k, v = tok.split("=", 1)
        try:
            args[k] = int(v)
        except ValueError:
            try:
                args[k] = float(v)
            except ValueError:
                args[k] = v
    gens = {"icosphere": shapes.icosphere, "ellipsoid": shapes.ellipsoid, "torus": shapes.torus,
            "flat_torus": shapes.flat_torus, "prolate_spheroid": shapes.prolate_spheroid}
    if name not in gens:
        raise ConfigError(f"unknown shape {name!r}; choose from {', '.join(sorted(gens))}")
    try:
        return gens[name](**args)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for shape {name!r}: {exc}") from None
