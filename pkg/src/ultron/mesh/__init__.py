from .model import Aabb, Mesh, vertex_normals
from .io import FORMATS, detect_format, load_mesh, parse_mesh, save_mesh, serialize_mesh
from .corner_table import (
    BOUNDARY,
    CornerTable,
    NonManifoldReport,
    build_corner_table,
    next_corner,
    prev_corner,
)
from .closest import (
    TriangleBvh,
    closest_point_on_mesh,
    closest_point_on_triangles,
    closest_points,
)

__all__ = [
    "Aabb",
    "Mesh",
    "vertex_normals",
    "FORMATS",
    "detect_format",
    "load_mesh",
    "parse_mesh",
    "save_mesh",
    "serialize_mesh",
    "BOUNDARY",
    "CornerTable",
    "NonManifoldReport",
    "build_corner_table",
    "next_corner",
    "prev_corner",
    "TriangleBvh",
    "closest_point_on_mesh",
    "closest_point_on_triangles",
    "closest_points",
]
