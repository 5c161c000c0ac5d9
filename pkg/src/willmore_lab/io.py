"""Mesh and report file formats.

* OBJ (ASCII): ``v x y z`` records, optional ``vm x4 .. xm`` extension lines
  carrying the coordinates beyond the third (one per vertex, in order),
  ``vt u v`` texture coordinates and triangular ``f`` records (``i``,
  ``i/t`` or ``i/t/n`` forms, 1-based, negative indices allowed).
* PLY: binary little-endian for m = 3 via :mod:`plyfile`, with optional
  per-vertex and per-face scalar attributes.
* JSON reports: sorted keys, floats with 17 significant digits, ``schema: 1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError, IoError, ParseError
from .mesh import TriangulatedImmersion

SCHEMA_VERSION = 1


# -- OBJ -------------------------------------------------------------------------------

def _parse_index(tok: str, n: int, lineno: int) -> int:
    head = tok.split("/")[0]
    try:
        i = int(head)
    except ValueError:
        raise ParseError(f"line {lineno}: bad face index {tok!r}") from None
    if i == 0:
        raise ParseError(f"line {lineno}: face index 0 is invalid in OBJ")
    return i - 1 if i > 0 else n + i


def read_obj(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Return ``(vertices (V, m), faces (F, 3), uv (V, 2) or None)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    verts, extra, uv, faces = [], [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].split()
        if not s:
            continue
        tag, args = s[0], s[1:]
        try:
            if tag == "v":
                if len(args) < 3:
                    raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
                verts.append([float(a) for a in args[:3]])
            elif tag == "vm":
                extra.append([float(a) for a in args])
            elif tag == "vt":
                uv.append([float(a) for a in args[:2]])
            elif tag == "f":
                if len(args) != 3:
                    raise ParseError(f"line {lineno}: face with {len(args)} vertices (triangles only)")
                faces.append([_parse_index(a, len(verts), lineno) for a in args])
            elif tag in ("vn", "o", "g", "s", "usemtl", "mtllib", "l"):
                continue
            else:
                raise ParseError(f"line {lineno}: unknown record {tag!r}")
        except ValueError:
            raise ParseError(f"line {lineno}: malformed number in {line.strip()!r}") from None
    if not verts or not faces:
        raise ParseError(f"{path}: no vertices or no faces")
    x = np.array(verts)
    if extra:
        if len(extra) != len(verts) or len({len(e) for e in extra}) != 1:
            raise ParseError(f"{path}: need one 'vm' line of equal length per vertex "
                             f"({len(extra)} for {len(verts)} vertices)")
        x = np.hstack([x, np.array(extra)])
    f = np.array(faces, dtype=np.int64)
    if f.min() < 0 or f.max() >= len(x):
        bad = int(np.flatnonzero((f < 0) | (f >= len(x)))[0] // 3)
        raise ParseError(f"{path}: face {bad} references a missing vertex")
    t = np.array(uv) if uv and len(uv) == len(verts) else None
    return x, f, t


def write_obj(path, vertices, faces, uv=None, comment: str | None = None) -> None:
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    for p in vertices:
        buf.write("v " + " ".join(_num(c) for c in p[:3]) + "\n")
    if vertices.shape[1] > 3:
        for p in vertices:
            buf.write("vm " + " ".join(_num(c) for c in p[3:]) + "\n")
    if uv is not None:
        for t in np.asarray(uv, dtype=float):
            buf.write(f"vt {_num(t[0])} {_num(t[1])}\n")
        for a, b, c in faces + 1:
            buf.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")
    else:
        for a, b, c in faces + 1:
            buf.write(f"f {a} {b} {c}\n")
    _write_text(path, buf.getvalue())


def write_face_uv_obj(path, vertices, faces, face_uv) -> None:
    """OBJ whose texture coordinates are given per face corner (F, 3) complex,
    as produced by per-face charts."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    z = np.asarray(face_uv).reshape(-1)
    buf = io.StringIO()
    for p in vertices:
        buf.write("v " + " ".join(_num(c) for c in p[:3]) + "\n")
    for w in z:
        buf.write(f"vt {_num(w.real)} {_num(w.imag)}\n")
    for k, (a, b, c) in enumerate(faces + 1):
        t = 3 * k + 1
        buf.write(f"f {a}/{t} {b}/{t + 1} {c}/{t + 2}\n")
    _write_text(path, buf.getvalue())


# -- PLY -------------------------------------------------------------------------------

def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    from plyfile import PlyData
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    try:
        ply = PlyData.read(str(path))
        v = ply["vertex"]
        x = np.stack([np.asarray(v[c], dtype=float) for c in ("x", "y", "z")], axis=1)
        idx = ply["face"]["vertex_indices"]
    except Exception as exc:   # plyfile raises a variety of errors on malformed input
        raise ParseError(f"{path}: malformed PLY ({exc})") from None
    lengths = {len(t) for t in idx}
    if lengths != {3}:
        raise ParseError(f"{path}: non-triangular faces (sizes {sorted(lengths)})")
    return x, np.array([list(t) for t in idx], dtype=np.int64)


def write_ply(path, vertices, faces, vertex_attrs: dict | None = None,
              face_attrs: dict | None = None) -> None:
    """Binary little-endian PLY (m = 3) with optional float attributes."""
    from plyfile import PlyData, PlyElement
    vertices = np.asarray(vertices, dtype=float)
    if vertices.shape[1] != 3:
        raise IoError("PLY output supports m = 3 only; use OBJ with 'vm' lines")
    vdt = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    vertex_attrs = vertex_attrs or {}
    vdt += [(k, "<f8") for k in sorted(vertex_attrs)]
    va = np.empty(len(vertices), dtype=vdt)
    va["x"], va["y"], va["z"] = vertices.T
    for k in vertex_attrs:
        va[k] = np.asarray(vertex_attrs[k], dtype=float)
    faces = np.asarray(faces, dtype=np.int32)
    face_attrs = face_attrs or {}
    fdt = [("vertex_indices", "<i4", (3,))] + [(k, "<f8") for k in sorted(face_attrs)]
    fa = np.empty(len(faces), dtype=fdt)
    fa["vertex_indices"] = faces
    for k in face_attrs:
        fa[k] = np.asarray(face_attrs[k], dtype=float)
    data = PlyData([PlyElement.describe(va, "vertex"), PlyElement.describe(fa, "face")],
                   text=False, byte_order="<")
    try:
        data.write(str(path))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


# -- immersions ------------------------------------------------------------------------

def load_immersion(path, format: str | None = None, *, eps_det: float | None = None,
                   marked_points=None) -> TriangulatedImmersion:
    """Read an OBJ or PLY file and validate it as a closed immersed surface."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        x, f, _ = read_obj(path)
    elif fmt == "ply":
        x, f = read_ply(path)
    else:
        raise InputError(f"unsupported mesh format {fmt!r} for {path}")
    kw = {} if eps_det is None else {"eps_det": eps_det}
    return TriangulatedImmersion(x, f, marked_points=marked_points, **kw)


def save_immersion(path, imm: TriangulatedImmersion, uv=None) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        write_ply(path, imm.vertices, imm.faces)
    else:
        write_obj(path, imm.vertices, imm.faces, uv=uv)


# -- reports ---------------------------------------------------------------------------

def _num(v) -> str:
    """17 significant digits; integers stay integers."""
    v = float(v)
    if not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return format(v, ".17g")


class _Float17:
    """Marker so the JSON encoder emits a preformatted number token."""

    __slots__ = ("text",)

    def __init__(self, text: str):
        self.text = text


def to_jsonable(obj):
    """Convert numpy scalars/arrays, complex numbers, tuples and paths to plain
    JSON values (complex -> [re, im]; non-finite floats -> strings)."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else _num(v)
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise IoError(f"cannot serialize object of type {type(obj).__name__}")


def _encode(obj, indent: int, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        return _num(obj)
    return json.dumps(obj)


def dumps_report(report: dict) -> str:
    """Deterministic JSON text: sorted keys, 17-digit floats, ``schema`` set."""
    data = to_jsonable(report)
    data.setdefault("schema", SCHEMA_VERSION)
    return _encode(data, 2) + "\n"


def write_json(path, report: dict) -> None:
    _write_text(path, dumps_report(report))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
    _write_text(path, buf.getvalue())


def curvature_csv_rows(H: np.ndarray):
    """Rows ``(vertex_id, H_1..H_m, |H|)``."""
    mag = np.linalg.norm(H, axis=1)
    return [[i, *map(float, H[i]), float(mag[i])] for i in range(len(H))]


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
