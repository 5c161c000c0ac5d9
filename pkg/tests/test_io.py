from __future__ import annotations

import json

import numpy as np
import pytest

from willmore_lab import shapes
from willmore_lab.errors import DegenerateFaceError, InputError, ParseError, TopologyError
from willmore_lab.io import (dumps_report, load_immersion, read_obj, write_obj,
                             write_ply)


def test_obj_roundtrip_exact(tmp_path, sphere3):
    p = tmp_path / "s.obj"
    write_obj(p, sphere3.vertices, sphere3.faces)
    imm = load_immersion(p)
    assert np.array_equal(imm.vertices, sphere3.vertices)
    assert np.array_equal(imm.faces, sphere3.faces)


def test_obj_extension_channels(tmp_path):
    T = shapes.flat_torus(1.0, 2.0, 10, 12)
    p = tmp_path / "t4.obj"
    write_obj(p, T.vertices, T.faces)
    assert "vm " in p.read_text()
    back = load_immersion(p)
    assert back.ambient_dim == 4 and np.array_equal(back.vertices, T.vertices)


def test_obj_uv_and_slash_faces(tmp_path, sphere3):
    uv = sphere3.vertices[:, :2]
    p = tmp_path / "uv.obj"
    write_obj(p, sphere3.vertices, sphere3.faces, uv=uv)
    x, f, t = read_obj(p)
    assert np.array_equal(t, uv) and np.array_equal(f, sphere3.faces)


def test_ply_roundtrip(tmp_path, sphere3):
    p = tmp_path / "s.ply"
    write_ply(p, sphere3.vertices, sphere3.faces, vertex_attrs={"H": np.arange(sphere3.n_vertices)})
    assert p.read_bytes().startswith(b"ply\nformat binary_little_endian")
    imm = load_immersion(p)
    assert np.array_equal(imm.vertices, sphere3.vertices)


@pytest.mark.parametrize("text,match", [
    ("v 0 0\nf 1 2 3\n", "3 coordinates"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3 4\n", "triangles only"),
    ("v 0 0 x\n", "malformed"),
    ("v 0 0 0\nf 1 2 9\n", "missing vertex"),
    ("q 1\n", "unknown record"),
])
def test_obj_parse_errors(tmp_path, text, match):
    p = tmp_path / "bad.obj"
    p.write_text(text)
    with pytest.raises(ParseError, match=match):
        load_immersion(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(InputError, match="nope.obj"):
        load_immersion(tmp_path / "nope.obj")


def test_boundary_and_degenerate_from_file(tmp_path, sphere3):
    p = tmp_path / "open.obj"
    write_obj(p, sphere3.vertices, sphere3.faces[1:])
    with pytest.raises(TopologyError):
        load_immersion(p)
    x = sphere3.vertices.copy()
    a, b, c = sphere3.faces[0]
    x[c] = 0.5 * (x[a] + x[b])
    write_obj(p, x, sphere3.faces)
    with pytest.raises(DegenerateFaceError):
        load_immersion(p)


def test_json_report_format():
    txt = dumps_report({"b": 0.1, "a": [1, 2.5], "c": complex(1, -2), "z": float("nan")})
    data = json.loads(txt)
    assert data["schema"] == 1
    assert list(data) == sorted(data)
    assert "0.10000000000000001" in txt
    assert data["c"] == [1.0, -2.0] and data["z"] == "nan"
    assert dumps_report({"b": 0.1, "a": [1, 2.5]}) == dumps_report({"a": [1, 2.5], "b": 0.1})
