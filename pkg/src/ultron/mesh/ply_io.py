"""PLY reading and writing (ascii and binary little-endian).

Vertex properties understood: x y z, nx ny nz, u v (or s t), red green blue
(uchar scaled to [0,1] or float kept as-is). Unknown scalar properties are
skipped. Faces come from a 'vertex_indices' (or 'vertex_index') list
property; polygons with more than 3 corners are fan-triangulated.

The writer emits double-precision properties so binary round-trips are
bit-exact and ascii round-trips (shortest round-trip decimals) are too.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import IndexOutOfRangeError, MeshParseError, UnsupportedElementError
from .model import Mesh

logger = logging.getLogger(__name__)

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_UV_ALIASES = {"u": "u", "v": "v", "s": "u", "t": "v",
               "texture_u": "u", "texture_v": "v"}


class _Element:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, np_type) or ("__list__", name, count_t, idx_t)


def _parse_header(data: bytes):
    end = data.find(b"end_header\n")
    if end < 0:
        raise MeshParseError("missing end_header", offset=len(data))
    body_start = end + len(b"end_header\n")
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()
    if not header_lines or header_lines[0].strip() != "ply":
        raise MeshParseError("not a PLY file (missing 'ply' magic)", line=1)

    fmt = None
    elements = []
    for lineno, line in enumerate(header_lines[1:], start=2):
        parts = line.split()
        if not parts or parts[0] == "comment" or parts[0] == "obj_info":
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise MeshParseError("bad format line", line=lineno)
            fmt = parts[1]
            if fmt == "binary_big_endian":
                raise UnsupportedElementError(
                    "big-endian PLY is not supported", line=lineno
                )
            if fmt not in ("ascii", "binary_little_endian"):
                raise MeshParseError(f"unknown PLY format {fmt!r}", line=lineno)
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MeshParseError("bad element line", line=lineno)
            try:
                count = int(parts[2])
            except ValueError:
                raise MeshParseError("bad element count", line=lineno)
            elements.append(_Element(parts[1], count))
        elif parts[0] == "property":
            if not elements:
                raise MeshParseError("property before any element", line=lineno)
            if parts[1] == "list":
                if len(parts) != 5:
                    raise MeshParseError("bad list property", line=lineno)
                for t in (parts[2], parts[3]):
                    if t not in _SCALAR_TYPES:
                        raise MeshParseError(f"unknown type {t!r}", line=lineno)
                elements[-1].properties.append(
                    ("__list__", parts[4], _SCALAR_TYPES[parts[2]],
                     _SCALAR_TYPES[parts[3]])
                )
            else:
                if len(parts) != 3:
                    raise MeshParseError("bad property line", line=lineno)
                if parts[1] not in _SCALAR_TYPES:
                    raise MeshParseError(f"unknown type {parts[1]!r}", line=lineno)
                elements[-1].properties.append((parts[2], _SCALAR_TYPES[parts[1]]))
        else:
            raise MeshParseError(f"unknown header keyword {parts[0]!r}", line=lineno)
    if fmt is None:
        raise MeshParseError("PLY header missing format line")
    return fmt, elements, body_start


def _assemble(vertex_table, face_rows, fan_count):
    if fan_count:
        logger.warning("fan-triangulated %d polygonal faces", fan_count)
    nv = len(next(iter(vertex_table.values()))) if vertex_table else 0

    def cols(names):
        return np.stack([vertex_table[n] for n in names], axis=1)

    if not all(k in vertex_table for k in ("x", "y", "z")):
        raise MeshParseError("vertex element lacks x/y/z properties")
    vertices = cols(["x", "y", "z"]).astype(np.float64)

    normals = None
    if all(k in vertex_table for k in ("nx", "ny", "nz")):
        normals = cols(["nx", "ny", "nz"]).astype(np.float64)
    uvs = None
    if "u" in vertex_table and "v" in vertex_table:
        uvs = cols(["u", "v"]).astype(np.float64)
    colors = None
    if all(k in vertex_table for k in ("red", "green", "blue")):
        rgb = cols(["red", "green", "blue"])
        if rgb.dtype == np.uint8:
            colors = rgb.astype(np.float64) / 255.0
        else:
            colors = rgb.astype(np.float64)

    triangles = np.asarray(face_rows, dtype=np.int64).reshape(-1, 3)
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        bad = triangles[(triangles < 0) | (triangles >= nv)][0]
        raise IndexOutOfRangeError(
            f"face index {int(bad)} out of range for {nv} vertices"
        )
    return Mesh(
        vertices=vertices,
        triangles=triangles.astype(np.int32),
        normals=normals,
        uvs=uvs,
        colors=colors,
    )


def _vertex_key(name):
    if name in ("x", "y", "z", "nx", "ny", "nz", "red", "green", "blue"):
        return name
    return _UV_ALIASES.get(name)


def parse_ply(data: bytes, *, expect_format: str | None = None) -> Mesh:
    fmt, elements, body_start = _parse_header(data)
    if expect_format is not None and fmt != expect_format:
        raise MeshParseError(
            f"PLY declares format {fmt!r}, expected {expect_format!r}"
        )
    if fmt == "ascii":
        return _parse_body_ascii(data, elements, body_start)
    return _parse_body_binary(data, elements, body_start)


def _parse_body_ascii(data, elements, body_start):
    text = data[body_start:].decode("ascii", errors="replace")
    tokens = text.split()
    pos = 0
    header_line_count = data[:body_start].count(b"\n")

    def take(n, what):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshParseError(
                f"truncated ascii body while reading {what}",
                line=header_line_count + 1,
            )
        out = tokens[pos:pos + n]
        pos += n
        return out

    vertex_table = {}
    face_rows = []
    fan_count = 0
    for elem in elements:
        if elem.name == "vertex":
            names = []
            for prop in elem.properties:
                if prop[0] == "__list__":
                    raise UnsupportedElementError(
                        "list property on vertex element is not supported"
                    )
                names.append(prop[0])
            raw = take(len(names) * elem.count, "vertex element")
            try:
                grid = np.asarray(raw, dtype=np.float64).reshape(elem.count, len(names))
            except ValueError as exc:
                raise MeshParseError(f"bad vertex number: {exc}")
            for j, (name, typ) in enumerate(elem.properties):
                key = _vertex_key(name)
                if key is None:
                    continue
                col = grid[:, j]
                vertex_table[key] = (
                    col.astype(np.uint8) if typ == "u1" else col
                )
        elif elem.name == "face":
            list_props = [p for p in elem.properties if p[0] == "__list__"]
            if len(list_props) != 1 or list_props[0][1] not in (
                "vertex_indices", "vertex_index",
            ):
                raise UnsupportedElementError(
                    "face element must have a single vertex_indices list"
                )
            if len(elem.properties) != 1:
                raise UnsupportedElementError(
                    "extra face properties are not supported"
                )
            for _ in range(elem.count):
                (cnt,) = take(1, "face size")
                try:
                    k = int(cnt)
                except ValueError:
                    raise MeshParseError(f"bad face size {cnt!r}")
                if k < 3:
                    raise MeshParseError(f"face with {k} corners")
                idx = take(k, "face indices")
                try:
                    idx = [int(i) for i in idx]
                except ValueError as exc:
                    raise MeshParseError(f"bad face index: {exc}")
                if k > 3:
                    fan_count += 1
                for i in range(1, k - 1):
                    face_rows.append((idx[0], idx[i], idx[i + 1]))
        else:
            # skip unknown element payload entirely
            width = 0
            for prop in elem.properties:
                if prop[0] == "__list__":
                    raise UnsupportedElementError(
                        f"cannot skip list property in element {elem.name!r}"
                    )
                width += 1
            take(width * elem.count, f"element {elem.name}")
    return _assemble(vertex_table, face_rows, fan_count)


def _parse_body_binary(data, elements, body_start):
    offset = body_start
    vertex_table = {}
    face_rows = []
    fan_count = 0
    for elem in elements:
        if elem.name == "vertex":
            fields = []
            for prop in elem.properties:
                if prop[0] == "__list__":
                    raise UnsupportedElementError(
                        "list property on vertex element is not supported"
                    )
                fields.append((prop[0], "<" + prop[1]))
            dtype = np.dtype(fields)
            nbytes = dtype.itemsize * elem.count
            if offset + nbytes > len(data):
                raise MeshParseError("truncated vertex element", offset=offset)
            block = np.frombuffer(data, dtype=dtype, count=elem.count, offset=offset)
            offset += nbytes
            for name, _typ in fields:
                key = _vertex_key(name)
                if key is None:
                    continue
                col = block[name]
                vertex_table[key] = (
                    col if col.dtype == np.uint8 else col.astype(np.float64)
                )
        elif elem.name == "face":
            if len(elem.properties) != 1 or elem.properties[0][0] != "__list__":
                raise UnsupportedElementError(
                    "face element must have a single vertex_indices list"
                )
            _, name, count_t, index_t = elem.properties[0]
            if name not in ("vertex_indices", "vertex_index"):
                raise UnsupportedElementError(
                    f"unknown face list property {name!r}"
                )
            count_dt = np.dtype("<" + count_t)
            index_dt = np.dtype("<" + index_t)
            # fast path: all-triangle face block read in one shot
            tri_dt = np.dtype([("n", count_dt), ("idx", index_dt, (3,))])
            fast = False
            if offset + tri_dt.itemsize * elem.count <= len(data):
                block = np.frombuffer(
                    data, dtype=tri_dt, count=elem.count, offset=offset
                )
                if elem.count == 0 or np.all(block["n"] == 3):
                    face_rows = block["idx"].astype(np.int64).reshape(-1, 3)
                    offset += tri_dt.itemsize * elem.count
                    fast = True
            if not fast:
                face_rows = []
                for _ in range(elem.count):
                    if offset + count_dt.itemsize > len(data):
                        raise MeshParseError("truncated face element", offset=offset)
                    k = int(
                        np.frombuffer(data, dtype=count_dt, count=1, offset=offset)[0]
                    )
                    offset += count_dt.itemsize
                    if k < 3:
                        raise MeshParseError(f"face with {k} corners", offset=offset)
                    nbytes = index_dt.itemsize * k
                    if offset + nbytes > len(data):
                        raise MeshParseError("truncated face element", offset=offset)
                    idx = np.frombuffer(data, dtype=index_dt, count=k, offset=offset)
                    offset += nbytes
                    if k > 3:
                        fan_count += 1
                    for i in range(1, k - 1):
                        face_rows.append(
                            (int(idx[0]), int(idx[i]), int(idx[i + 1]))
                        )
        else:
            fields = []
            for prop in elem.properties:
                if prop[0] == "__list__":
                    raise UnsupportedElementError(
                        f"cannot skip list property in element {elem.name!r}"
                    )
                fields.append((prop[0], "<" + prop[1]))
            dtype = np.dtype(fields)
            nbytes = dtype.itemsize * elem.count
            if offset + nbytes > len(data):
                raise MeshParseError(f"truncated element {elem.name!r}", offset=offset)
            offset += nbytes
    if offset != len(data):
        # trailing newline tolerated, anything else is suspicious
        tail = data[offset:]
        if tail.strip(b"\r\n"):
            raise MeshParseError(
                f"{len(tail)} unexpected trailing bytes", offset=offset
            )
    return _assemble(vertex_table, face_rows, fan_count)


def _fmt(x: float) -> str:
    return repr(float(x))


def _vertex_layout(mesh: Mesh):
    names = ["x", "y", "z"]
    arrays = [mesh.vertices]
    if mesh.normals is not None:
        names += ["nx", "ny", "nz"]
        arrays.append(mesh.normals)
    if mesh.uvs is not None:
        names += ["u", "v"]
        arrays.append(mesh.uvs)
    if mesh.colors is not None:
        names += ["red", "green", "blue"]
        arrays.append(mesh.colors)
    return names, np.concatenate(arrays, axis=1) if arrays else None


def serialize_ply(mesh: Mesh, binary: bool) -> bytes:
    names, table = _vertex_layout(mesh)
    header = ["ply"]
    header.append(
        "format binary_little_endian 1.0" if binary else "format ascii 1.0"
    )
    header.append(f"element vertex {mesh.vertex_count}")
    header += [f"property double {n}" for n in names]
    header.append(f"element face {mesh.triangle_count}")
    header.append("property list uchar int vertex_indices")
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    if binary:
        body = table.astype("<f8").tobytes()
        tri_dt = np.dtype([("n", "<u1"), ("idx", "<i4", (3,))])
        faces = np.empty(mesh.triangle_count, dtype=tri_dt)
        faces["n"] = 3
        faces["idx"] = mesh.triangles
        return head + body + faces.tobytes()

    lines = []
    for row in table:
        lines.append(" ".join(_fmt(x) for x in row))
    for tri in mesh.triangles:
        lines.append(f"3 {int(tri[0])} {int(tri[1])} {int(tri[2])}")
    return head + ("\n".join(lines) + "\n").encode("ascii")
