"""Corner-table connectivity and manifold validation.

Corner c belongs to triangle c // 3; V[c] is its vertex; O[c] is the corner
opposite the same edge in the adjacent triangle, or BOUNDARY for edges with
a single incident triangle. Construction fails softly: meshes that are not
orientable 2-manifolds (with boundary) yield a NonManifoldReport instead of
a table, so callers can fall back to raw connectivity coding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Mesh

BOUNDARY = -1


@dataclass(frozen=True)
class CornerTable:
    V: np.ndarray  # (3m,) corner -> vertex
    O: np.ndarray  # (3m,) corner -> opposite corner or BOUNDARY
    vertex_count: int

    @property
    def corner_count(self) -> int:
        return len(self.V)

    @property
    def triangle_count(self) -> int:
        return len(self.V) // 3

    def triangles(self) -> np.ndarray:
        return self.V.reshape(-1, 3)

    def boundary_corner_count(self) -> int:
        return int(np.count_nonzero(self.O == BOUNDARY))

    def edge_count(self) -> int:
        """Distinct undirected edges: interior edges pair two corners,
        boundary edges have one."""
        interior = (self.corner_count - self.boundary_corner_count()) // 2
        return interior + self.boundary_corner_count()


@dataclass(frozen=True)
class NonManifoldReport:
    """Why a mesh cannot be represented as an oriented corner table."""

    edges: list = field(default_factory=list)  # [((u, v), reason), ...]
    vertices: list = field(default_factory=list)  # pinched vertex ids

    def __str__(self):
        parts = [f"edge ({u},{v}): {why}" for (u, v), why in self.edges[:8]]
        parts += [f"pinched vertex {v}" for v in self.vertices[:8]]
        more = len(self.edges) + len(self.vertices) - len(parts)
        if more > 0:
            parts.append(f"... and {more} more")
        return "non-manifold mesh: " + "; ".join(parts)


def next_corner(c: int) -> int:
    return c - 2 if c % 3 == 2 else c + 1


def prev_corner(c: int) -> int:
    return c + 2 if c % 3 == 0 else c - 1


def build_corner_table(mesh: Mesh) -> CornerTable | NonManifoldReport:
    return corner_table_from_triangles(mesh.triangles, mesh.vertex_count)


def corner_table_from_triangles(
    triangles, vertex_count: int
) -> CornerTable | NonManifoldReport:
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    m = len(tris)
    V = tris.reshape(-1).astype(np.int32)
    nc = 3 * m

    corners = np.arange(nc)
    nxt = corners + 1 - 3 * (corners % 3 == 2)
    prv = corners - 1 + 3 * (corners % 3 == 0)
    # directed edge opposite corner c, as traversed by its triangle
    ea = V[nxt].astype(np.int64)
    eb = V[prv].astype(np.int64)

    bad_edges = {}
    directed = {}
    for c in range(nc):
        key = (int(ea[c]), int(eb[c]))
        if key in directed:
            und = (min(key), max(key))
            bad_edges.setdefault(und, "inconsistent-orientation")
        else:
            directed[key] = c

    # undirected multiplicity check catches >2 incident triangles
    und_keys = np.stack([np.minimum(ea, eb), np.maximum(ea, eb)], axis=1)
    uniq, counts = np.unique(und_keys, axis=0, return_counts=True)
    for (u, v), cnt in zip(uniq[counts > 2], counts[counts > 2]):
        bad_edges[(int(u), int(v))] = f"{cnt} incident triangles"

    if bad_edges:
        return NonManifoldReport(
            edges=sorted((edge, why) for edge, why in bad_edges.items())
        )

    O = np.full(nc, BOUNDARY, dtype=np.int32)
    for c in range(nc):
        d = directed.get((int(eb[c]), int(ea[c])))
        if d is not None:
            O[c] = d

    pinched = _pinched_vertices(V, O, nxt, prv, vertex_count)
    if pinched:
        return NonManifoldReport(vertices=pinched)

    V.setflags(write=False)
    O.setflags(write=False)
    return CornerTable(V=V, O=O, vertex_count=vertex_count)


def _pinched_vertices(V, O, nxt, prv, vertex_count):
    """Vertices whose incident triangles do not form a single fan."""
    order = np.argsort(V, kind="stable")
    starts = np.searchsorted(V[order], np.arange(vertex_count + 1))
    pinched = []
    for v in range(vertex_count):
        cs = order[starts[v]:starts[v + 1]]
        if len(cs) <= 1:
            continue
        seen = {int(cs[0])}
        # swing both ways around v: across the edge (v, V[prv]) then (v, V[nxt])
        c = int(cs[0])
        while True:
            d = O[nxt[c]]
            if d == BOUNDARY:
                break
            c = int(nxt[d])
            if c in seen:
                break
            seen.add(c)
        c = int(cs[0])
        while True:
            d = O[prv[c]]
            if d == BOUNDARY:
                break
            c = int(prv[d])
            if c in seen:
                break
            seen.add(c)
        if len(seen) != len(cs):
            pinched.append(v)
    return pinched
