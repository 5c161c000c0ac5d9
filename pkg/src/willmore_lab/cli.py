"""Command-line driver: ``willmore-lab <mode> --config <path> [--out <dir>] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 numerical
error, 5 output error.  Failures print one JSON line
``{"code": .., "error": .., "reason": ..}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, ExperimentConfig, build_shape, load_config
from .errors import ConfigError, IoError, ObtuseAreaWarning, WillmoreLabError
from .report import Results, emit_report


def _load(cfg: ExperimentConfig):
    from .io import load_immersion
    if cfg.shape:
        imm = build_shape(cfg.shape)
    else:
        imm = load_immersion(cfg.input, eps_det=cfg.eps_det)
    if cfg.marked_points:
        imm = imm.with_marked_points(cfg.marked_points)
    return imm


def _perturb(imm, cfg: ExperimentConfig):
    """Seeded normal noise of amplitude ``noise`` times the RMS radius."""
    if cfg.noise <= 0:
        return imm
    from .curvature import vertex_projectors
    rng = np.random.default_rng(cfg.seed)
    x = imm.vertices
    scale = float(np.sqrt(np.mean(np.sum((x - x.mean(axis=0)) ** 2, axis=1))))
    N = np.eye(imm.ambient_dim)[None] - vertex_projectors(imm)
    d = np.einsum("vij,vj->vi", N, rng.standard_normal(x.shape))
    d /= np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
    amp = cfg.noise * scale * rng.uniform(-1.0, 1.0, len(x))
    return imm.with_vertices(x + amp[:, None] * d)


def _base_summary(cfg: ExperimentConfig, imm) -> dict:
    from .mesh import validation_report
    return {"mode": cfg.mode, "config": cfg.to_dict(), "version": __version__,
            "mesh": {"n_vertices": imm.n_vertices, "n_faces": imm.n_faces,
                     "ambient_dim": imm.ambient_dim, **validation_report(imm)}}


# -- pipelines ----------------------------------------------------------------------

def run_analyze(cfg, imm) -> Results:
    from .curvature import gauss_bonnet_report, mean_curvature
    from .io import curvature_csv_rows
    from .optimize import conservative_residual, willmore_gradient
    s = _base_summary(cfg, imm)
    gb = gauss_bonnet_report(imm)
    s["W"] = gb["W"]
    s["E"] = gb["E"]
    s["gauss_bonnet"] = gb
    s["W_over_4pi"] = gb["W"] / (4.0 * math.pi)
    s["gradient_sup"] = willmore_gradient(imm).sup_norm
    if imm.ambient_dim == 3:
        s["conservative_residual"] = conservative_residual(imm)
        s["residual_norm"] = cfg.residual_norm
    if imm.genus == 1:
        from .conformal_class import torus_modulus
        tm = torus_modulus(imm)
        s["tau"] = tm.tau
        s["tau_marked"] = tm.tau_marked
    H = mean_curvature(imm).H
    header = ["vertex_id"] + [f"H{k + 1}" for k in range(imm.ambient_dim)] + ["H_norm"]
    return Results(s, csv_files={"curvature.csv": (header, curvature_csv_rows(H))})


def run_normalize(cfg, imm) -> Results:
    from .moebius import normalization_report, three_point_normalize
    P = imm.resolved_marked_points()
    res = three_point_normalize(imm, *P, cfg.lambda_max, area_C=cfg.area_c, tol=cfg.conformal_tol)
    s = _base_summary(cfg, imm)
    rep = normalization_report(res)
    s["normalization"] = rep
    s["marked_points"] = list(P)
    s["checks"] = {k: res[k] for k in ("contained", "separated", "area_ok", "energy_ok")}
    s["W_rel_change"] = res["W_rel_change"]
    out = res["imm"]
    return Results(s, json_files={"normalization.json": rep, "moebius_map.json": {"map": rep["map"]}},
                   meshes={"normalized.obj": (out.vertices, out.faces, None)})


def run_chart(cfg, imm) -> Results:
    from .isothermal import build_isothermal_chart, patch_cover
    patches = patch_cover(imm, cfg.patch_budget)
    s = _base_summary(cfg, imm)
    entries, meshes = [], {}
    for k, p in enumerate(patches):
        ch = build_isothermal_chart(p, boundary=cfg.chart_boundary, tolerance=cfg.hopf_tol,
                                    max_iter=cfg.chart_max_iter)
        entries.append({"patch": k, **ch.to_dict()})
        meshes[f"patch_{k:03d}.obj"] = (p.vertices, p.faces, ch.uv)
    s["patch_count"] = len(patches)
    s["patches"] = entries
    return Results(s, json_files={"patches.json": {"patches": entries}}, meshes=meshes)


def run_minimize(cfg, imm, mode: str) -> Results:
    from .optimize import MinimizeOptions, minimize
    start = _perturb(imm, cfg)
    opts = MinimizeOptions(max_iters=cfg.max_iters, gtol=cfg.gtol, drift_tol=cfg.drift_tol,
                           rank_tol=cfg.rank_tol, checkpoint_every=cfg.checkpoint_every,
                           normal_projection=cfg.normal_projection)
    st = minimize(start, mode, opts)
    s = _base_summary(cfg, imm)
    s["optimization"] = st.summary()
    s["accepted_iterations"] = st.iterations
    res = Results(s, text_files={"trajectory.csv": st.trajectory_csv()},
                  meshes={"start.obj": (start.vertices, start.faces, None),
                          "final.obj": (st.immersion.vertices, st.immersion.faces, None)})
    for it, x in st.checkpoints:
        res.meshes[f"checkpoint_{it:06d}.obj"] = (x, imm.faces, None)
    return res


def run_isothermic(cfg, imm) -> Results:
    from .conformal_class import isothermic_residual
    cert = isothermic_residual(imm)
    s = _base_summary(cfg, imm)
    s["certificate"] = cert.to_dict()
    return Results(s, json_files={"certificate.json": cert.to_dict()})


def run(cfg: ExperimentConfig, out_dir=None) -> list[Path]:
    imm = _load(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ObtuseAreaWarning)
        if cfg.mode == "analyze":
            res = run_analyze(cfg, imm)
        elif cfg.mode == "normalize":
            res = run_normalize(cfg, imm)
        elif cfg.mode == "chart":
            res = run_chart(cfg, imm)
        elif cfg.mode == "minimize-free":
            res = run_minimize(cfg, imm, "free")
        elif cfg.mode == "minimize-conformal":
            res = run_minimize(cfg, imm, "conformal")
        elif cfg.mode == "isothermic":
            res = run_isothermic(cfg, imm)
        else:  # pragma: no cover - validated by the config parser
            raise ConfigError(f"unknown mode {cfg.mode!r}")
    return emit_report(res, out_dir if out_dir is not None else cfg.out)


# -- entry point ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"command line: {message}")


def _fail(exc: WillmoreLabError) -> int:
    code = exc.exit_code
    sys.stderr.write(json.dumps({"code": code, "error": type(exc).__name__, "reason": exc.reason},
                                sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = _Parser(prog="willmore-lab", description="Discrete Willmore energy experiments.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for numerics")
    try:
        args = parser.parse_args(argv)
        overrides = {}
        if args.threads is not None:
            overrides["threads"] = args.threads
        cfg = load_config(args.config, args.mode, overrides=overrides)
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=cfg.threads):
            paths = run(cfg, args.out)
    except WillmoreLabError as exc:
        return _fail(exc)
    except MemoryError:
        return _fail(IoError("out of memory"))
    sys.stdout.write(json.dumps({"code": 0, "written": [str(p) for p in paths]}) + "\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
