"""Deterministic report emission: JSON summaries, CSV traces and OBJ meshes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import io as wio
from .errors import IoError


@dataclass
class Results:
    """Everything a pipeline produces; file names are relative to the output directory."""

    summary: dict
    json_files: dict = field(default_factory=dict)     # name -> dict
    csv_files: dict = field(default_factory=dict)      # name -> (header, rows)
    text_files: dict = field(default_factory=dict)     # name -> str
    meshes: dict = field(default_factory=dict)         # name -> (vertices, faces, uv or None)
    face_uv_meshes: dict = field(default_factory=dict)  # name -> (vertices, faces, corner uv)


def emit_report(results: Results, out_dir) -> list[Path]:
    """Write every artifact (summary as ``summary.json``); returns the paths in order."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from None
    written = []
    path = out / "summary.json"
    wio.write_json(path, results.summary)
    written.append(path)
    for name in sorted(results.json_files):
        path = out / name
        wio.write_json(path, results.json_files[name])
        written.append(path)
    for name in sorted(results.csv_files):
        header, rows = results.csv_files[name]
        path = out / name
        wio.write_csv(path, header, rows)
        written.append(path)
    for name in sorted(results.text_files):
        path = out / name
        wio._write_text(path, results.text_files[name])
        written.append(path)
    for name in sorted(results.meshes):
        v, f, uv = results.meshes[name]
        path = out / name
        wio.write_obj(path, v, f, uv=uv)
        written.append(path)
    for name in sorted(results.face_uv_meshes):
        v, f, z = results.face_uv_meshes[name]
        path = out / name
        wio.write_face_uv_obj(path, v, f, z)
        written.append(path)
    return written
