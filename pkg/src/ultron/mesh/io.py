"""Format dispatch for mesh parsing and serialization."""

from __future__ import annotations

from pathlib import Path

from ..errors import MeshParseError
from .model import Mesh
from .obj_io import parse_obj, serialize_obj
from .ply_io import parse_ply, serialize_ply

FORMATS = ("obj", "ply-ascii", "ply-binary")


def parse_mesh(data: bytes, format: str) -> Mesh:
    """Parse a mesh file held in memory. format is one of FORMATS."""
    if format == "obj":
        return parse_obj(data)
    if format == "ply-ascii":
        return parse_ply(data, expect_format="ascii")
    if format == "ply-binary":
        return parse_ply(data, expect_format="binary_little_endian")
    raise ValueError(f"unknown mesh format {format!r}")


def serialize_mesh(mesh: Mesh, format: str) -> bytes:
    if format == "obj":
        return serialize_obj(mesh)
    if format == "ply-ascii":
        return serialize_ply(mesh, binary=False)
    if format == "ply-binary":
        return serialize_ply(mesh, binary=True)
    raise ValueError(f"unknown mesh format {format!r}")


def detect_format(path: str | Path, data: bytes | None = None) -> str:
    """Infer the format from the file extension (PLY subtype from the header)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return "obj"
    if suffix == ".ply":
        if data is None:
            with open(path, "rb") as fh:
                data = fh.read(512)
        return "ply-ascii" if b"format ascii" in data[:512] else "ply-binary"
    raise MeshParseError(f"cannot infer mesh format from {path!r}")


def load_mesh(path: str | Path) -> Mesh:
    data = Path(path).read_bytes()
    return parse_mesh(data, detect_format(path, data))


def save_mesh(mesh: Mesh, path: str | Path, format: str | None = None) -> None:
    if format is None:
        suffix = Path(path).suffix.lower()
        if suffix == ".obj":
            format = "obj"
        elif suffix == ".ply":
            format = "ply-binary"
        else:
            raise ValueError(f"cannot infer output format from {path!r}")
    Path(path).write_bytes(serialize_mesh(mesh, format))
