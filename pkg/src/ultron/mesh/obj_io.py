"""Wavefront OBJ reading and writing.

Supported records: v (with optional per-vertex RGB extension), vt, vn, f.
Faces may be triangles or larger convex polygons (fan-triangulated, count
logged). Polylines and points are rejected. Indices are 1-based; relative
(negative) indices are not supported.

Float output uses shortest round-trip decimal (repr), so parse(serialize(m))
reproduces arrays bit-exactly.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import IndexOutOfRangeError, MeshParseError, UnsupportedElementError
from .model import Mesh

logger = logging.getLogger(__name__)


def _floats(parts, count, lineno, record):
    if len(parts) < count:
        raise MeshParseError(
            f"'{record}' record needs {count} values, got {len(parts)}", line=lineno
        )
    try:
        return [float(p) for p in parts[:count]]
    except ValueError as exc:
        raise MeshParseError(f"bad number in '{record}' record: {exc}", line=lineno)


def _parse_corner(token, lineno):
    """Split a face corner 'v', 'v/vt', 'v//vn' or 'v/vt/vn' into indices."""
    fields = token.split("/")
    if len(fields) > 3:
        raise MeshParseError(f"bad face corner {token!r}", line=lineno)
    out = []
    for f in fields:
        if f == "":
            out.append(None)
            continue
        try:
            idx = int(f)
        except ValueError:
            raise MeshParseError(f"bad face corner {token!r}", line=lineno)
        if idx < 0:
            raise UnsupportedElementError(
                "relative (negative) OBJ indices are not supported", line=lineno
            )
        if idx == 0:
            raise MeshParseError("OBJ indices are 1-based; 0 is invalid", line=lineno)
        out.append(idx - 1)
    out += [None] * (3 - len(out))
    return out[0], out[1], out[2]


def parse_obj(data: bytes) -> Mesh:
    text = data.decode("utf-8", errors="replace")
    positions = []
    vertex_colors = []
    texcoords = []
    raw_normals = []
    faces = []  # (lineno, [(v, vt, vn), ...])
    fan_count = 0

    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        key = parts[0]
        args = parts[1:]
        if key == "v":
            if len(args) not in (3, 6):
                raise MeshParseError(
                    f"'v' record needs 3 or 6 values, got {len(args)}", line=lineno
                )
            positions.append(_floats(args, 3, lineno, "v"))
            if len(args) == 6:
                vertex_colors.append(_floats(args[3:], 3, lineno, "v"))
            elif vertex_colors:
                raise MeshParseError(
                    "mixed presence of per-vertex colors on 'v' records", line=lineno
                )
        elif key == "vt":
            texcoords.append(_floats(args, 2, lineno, "vt"))
        elif key == "vn":
            raw_normals.append(_floats(args, 3, lineno, "vn"))
        elif key == "f":
            if len(args) < 3:
                raise MeshParseError("face with fewer than 3 corners", line=lineno)
            corners = [_parse_corner(tok, lineno) for tok in args]
            if len(corners) > 3:
                fan_count += 1
            for i in range(1, len(corners) - 1):
                faces.append((lineno, (corners[0], corners[i], corners[i + 1])))
        elif key in ("l", "p", "curv", "curv2", "surf"):
            raise UnsupportedElementError(
                f"'{key}' records (non-triangle geometry) are not supported",
                line=lineno,
            )
        # anything else (o, g, s, usemtl, mtllib, ...) is ignored

    if vertex_colors and len(vertex_colors) != len(positions):
        raise MeshParseError("some 'v' records carry colors and some do not")
    if fan_count:
        logger.warning("fan-triangulated %d polygonal faces", fan_count)

    nv = len(positions)
    triangles = np.zeros((len(faces), 3), dtype=np.int32)
    uv_of_vertex = np.full(nv, -1, dtype=np.int64)
    normal_of_vertex = np.full(nv, -1, dtype=np.int64)
    uses_uv = False
    uses_normal = False

    for row, (lineno, tri) in enumerate(faces):
        for col, (v, vt, vn) in enumerate(tri):
            if v >= nv:
                raise IndexOutOfRangeError(
                    f"vertex index {v + 1} exceeds vertex count {nv}", line=lineno
                )
            triangles[row, col] = v
            if vt is not None:
                uses_uv = True
                if vt >= len(texcoords):
                    raise IndexOutOfRangeError(
                        f"uv index {vt + 1} exceeds vt count {len(texcoords)}",
                        line=lineno,
                    )
                if uv_of_vertex[v] == -1:
                    uv_of_vertex[v] = vt
                elif uv_of_vertex[v] != vt:
                    raise UnsupportedElementError(
                        f"vertex {v + 1} referenced with conflicting uv indices; "
                        "only per-vertex attributes are representable",
                        line=lineno,
                    )
            if vn is not None:
                uses_normal = True
                if vn >= len(raw_normals):
                    raise IndexOutOfRangeError(
                        f"normal index {vn + 1} exceeds vn count {len(raw_normals)}",
                        line=lineno,
                    )
                if normal_of_vertex[v] == -1:
                    normal_of_vertex[v] = vn
                elif normal_of_vertex[v] != vn:
                    raise UnsupportedElementError(
                        f"vertex {v + 1} referenced with conflicting normal indices; "
                        "only per-vertex attributes are representable",
                        line=lineno,
                    )

    def gather(table, mapping, width):
        src = np.asarray(table, dtype=np.float64).reshape(-1, width)
        out = np.zeros((nv, width), dtype=np.float64)
        assigned = mapping >= 0
        out[assigned] = src[mapping[assigned]]
        return out

    def aligned(table, mapping):
        # one record per vertex with only identity face references: take the
        # table positionally, covering vertices no face mentions
        if len(table) != nv:
            return False
        assigned = mapping >= 0
        return bool(np.all(mapping[assigned] == np.flatnonzero(assigned)))

    uvs = None
    if texcoords:
        if aligned(texcoords, uv_of_vertex):
            uvs = np.asarray(texcoords, dtype=np.float64)
        elif uses_uv:
            uvs = gather(texcoords, uv_of_vertex, 2)
    normals = None
    if raw_normals:
        if aligned(raw_normals, normal_of_vertex):
            normals = np.asarray(raw_normals, dtype=np.float64)
        elif uses_normal:
            normals = gather(raw_normals, normal_of_vertex, 3)

    return Mesh(
        vertices=np.asarray(positions, dtype=np.float64).reshape(nv, 3),
        triangles=triangles,
        normals=normals,
        uvs=uvs,
        colors=np.asarray(vertex_colors, dtype=np.float64) if vertex_colors else None,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_obj(mesh: Mesh) -> bytes:
    lines = []
    if mesh.colors is not None:
        for p, c in zip(mesh.vertices, mesh.colors):
            lines.append(
                f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}"
                f" {_fmt(c[0])} {_fmt(c[1])} {_fmt(c[2])}"
            )
    else:
        for p in mesh.vertices:
            lines.append(f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    if mesh.uvs is not None:
        for t in mesh.uvs:
            lines.append(f"vt {_fmt(t[0])} {_fmt(t[1])}")
    if mesh.normals is not None:
        for n in mesh.normals:
            lines.append(f"vn {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")

    has_uv = mesh.uvs is not None
    has_n = mesh.normals is not None
    for tri in mesh.triangles:
        a, b, c = (int(i) + 1 for i in tri)
        if has_uv and has_n:
            lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
        elif has_uv:
            lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
        elif has_n:
            lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
        else:
            lines.append(f"f {a} {b} {c}")
    return ("\n".join(lines) + "\n").encode("utf-8")
