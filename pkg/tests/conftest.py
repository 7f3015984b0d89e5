import numpy as np
import pytest

from ultron.mesh import Mesh
from ultron.synth import make_cylinder, make_icosphere, make_slab


@pytest.fixture(scope="session")
def sphere_642() -> Mesh:
    return make_icosphere(3)


@pytest.fixture(scope="session")
def sphere_162() -> Mesh:
    return make_icosphere(2)


@pytest.fixture(scope="session")
def cylinder_mesh() -> Mesh:
    return make_cylinder(24, 16)


@pytest.fixture(scope="session")
def slab_mesh() -> Mesh:
    return make_slab(12, 8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def canonical_triangles(tris) -> np.ndarray:
    """Rotation-normalized, row-sorted triangle array.

    Two triangle lists are the same oriented mesh over the same vertex ids
    iff their canonical forms are equal.
    """
    t = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if len(t) == 0:
        return t
    k = np.argmin(t, axis=1)
    rolled = np.stack(
        [t[np.arange(len(t)), (k + i) % 3] for i in range(3)], axis=1
    )
    order = np.lexsort((rolled[:, 2], rolled[:, 1], rolled[:, 0]))
    return rolled[order]


def closest_point_oracle(mesh: Mesh, query: np.ndarray):
    """Independent exhaustive closest-point: plane projection with
    point-in-triangle test, else best of the three edge segments."""
    best_d2 = np.inf
    best_point = None
    q = np.asarray(query, dtype=np.float64)
    v = mesh.vertices
    for tri in mesh.triangles:
        a, b, c = v[tri[0]], v[tri[1]], v[tri[2]]
        n = np.cross(b - a, c - a)
        nn = float(n @ n)
        candidates = []
        if nn > 0:
            proj = q - ((q - a) @ n / nn) * n
            # barycentric point-in-triangle
            v0, v1, v2 = c - a, b - a, proj - a
            d00, d01, d02 = v0 @ v0, v0 @ v1, v0 @ v2
            d11, d12 = v1 @ v1, v1 @ v2
            denom = d00 * d11 - d01 * d01
            if denom != 0:
                u = (d11 * d02 - d01 * d12) / denom
                w = (d00 * d12 - d01 * d02) / denom
                if u >= 0 and w >= 0 and u + w <= 1:
                    candidates.append(proj)
        for s, e in ((a, b), (b, c), (c, a)):
            seg = e - s
            denom = float(seg @ seg)
            t = 0.0 if denom == 0 else float((q - s) @ seg) / denom
            candidates.append(s + np.clip(t, 0.0, 1.0) * seg)
        for cand in candidates:
            d2 = float((q - cand) @ (q - cand))
            if d2 < best_d2:
                best_d2 = d2
                best_point = cand
    return best_point, np.sqrt(best_d2)
