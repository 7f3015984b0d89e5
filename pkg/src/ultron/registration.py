"""Non-rigid registration with one 3x4 affine transform per source vertex.

The cost is a weighted sum of a closest-point data term, a transform
smoothness term over the source mesh's edges, and a correspondence term
seeded by tracking. Given fixed closest points all terms are quadratic in
the transform entries, so each outer iteration refreshes the closest
points, solves the sparse normal equations by preconditioned conjugate
gradient, and decays the correspondence weight.

Inputs are rescaled internally to a unit bounding-box diagonal so the
default weights are portable; reported energies live in those normalized
coordinates, while the returned field and mesh are in input coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .errors import InvalidMeshError, SolverError
from .mesh import Mesh, closest_points
from .tracking import CorrespondenceSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineField:
    """One 3x4 transform per source vertex; column 3 is the translation."""

    transforms: np.ndarray  # (n, 3, 4)

    def __post_init__(self):
        arr = np.array(self.transforms, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[1:] != (3, 4):
            raise InvalidMeshError("transforms must be (n, 3, 4)")
        if not np.all(np.isfinite(arr)):
            raise InvalidMeshError("transforms contain non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "transforms", arr)

    def __len__(self):
        return len(self.transforms)

    @classmethod
    def identity(cls, n: int) -> "AffineField":
        t = np.zeros((n, 3, 4))
        t[:, :, :3] = np.eye(3)
        return cls(t)

    def apply(self, vertices) -> np.ndarray:
        v = np.asarray(vertices, dtype=np.float64)
        A = self.transforms
        return np.einsum("nij,nj->ni", A[:, :, :3], v) + A[:, :, 3]


@dataclass(frozen=True)
class RegistrationConfig:
    alpha: float = 10.0          # smoothness weight
    beta: float = 1.0            # correspondence weight (decayed per iteration)
    gamma: float = 1.0           # translation weight inside the smoothness norm
    outer_iterations: int = 30
    beta_decay: float = 0.7
    convergence_tol: float = 1e-5
    cg_tol: float = 1e-8
    cg_max_iters: int = 2000

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma <= 0:
            raise ValueError("alpha, beta must be >= 0 and gamma > 0")
        if not 0.0 < self.beta_decay <= 1.0:
            raise ValueError("beta_decay must be in (0, 1]")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")


@dataclass(frozen=True)
class RegistrationReport:
    E_d: float
    E_s: float
    E_m: float
    total: float
    iterations_used: int
    converged: bool
    diverged: bool = False
    beta_final: float = 0.0  # beta in effect for the reported total


def energy_data(deformed_vertices, target: Mesh) -> float:
    """Sum of squared distances from points to the target surface."""
    _, dists, _ = closest_points(target, deformed_vertices)
    return float(np.dot(dists, dists))


def energy_smooth(field, edges, gamma: float) -> float:
    """Sum over edges of the weighted squared Frobenius difference of the
    endpoint transforms; the translation column is weighted by gamma."""
    A = field.transforms if isinstance(field, AffineField) else np.asarray(field)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return 0.0
    diff = A[e[:, 0]] - A[e[:, 1]]
    rot = diff[:, :, :3]
    tr = diff[:, :, 3]
    return float(np.sum(rot * rot) + gamma * gamma * np.sum(tr * tr))


def energy_match(field, matches: CorrespondenceSet, key_vertices, target_vertices) -> float:
    """Sum of squared distances between transformed matched source vertices
    and their target positions."""
    if len(matches) == 0:
        return 0.0
    A = field.transforms if isinstance(field, AffineField) else np.asarray(field)
    si = matches.source_indices
    ti = matches.target_indices
    kv = np.asarray(key_vertices, dtype=np.float64)[si]
    tv = np.asarray(target_vertices, dtype=np.float64)[ti]
    moved = np.einsum("nij,nj->ni", A[si, :, :3], kv) + A[si, :, 3]
    diff = moved - tv
    return float(np.sum(diff * diff))


class Quadratic:
    """x^T H x - 2 b^T x + c; the fixed-correspondence objective."""

    def __init__(self, H, b, constant):
        self.H = H.tocsr()
        self.b = b
        self.constant = constant

    @property
    def size(self):
        return len(self.b)

    def value(self, x) -> float:
        return float(x @ (self.H @ x) - 2.0 * (self.b @ x) + self.constant)

    def gradient(self, x) -> np.ndarray:
        return 2.0 * (self.H @ x - self.b)


_ROW_OFFSETS = np.arange(12).reshape(3, 4)  # var l of residual row k at 4k + l


def _point_system(vertex_ids, u4, q, n):
    """Σ ||A_i u_i - q_i||^2 over the given vertices, as (H, b, const).

    u4 rows are homogeneous source vertices (4,), q rows the 3D targets.
    """
    k = len(vertex_ids)
    b = np.zeros(12 * n)
    if k == 0:
        return sp.csr_matrix((12 * n, 12 * n)), b, 0.0
    P = np.einsum("ni,nj->nij", u4, u4)  # (k, 4, 4)
    base = 12 * vertex_ids  # (k,)
    idx = base[:, None, None] + _ROW_OFFSETS[None, :, :]  # (k, 3, 4)
    rows = np.broadcast_to(idx[:, :, :, None], (k, 3, 4, 4)).reshape(-1)
    cols = np.broadcast_to(idx[:, :, None, :], (k, 3, 4, 4)).reshape(-1)
    vals = np.broadcast_to(P[:, None, :, :], (k, 3, 4, 4)).reshape(-1)
    H = sp.coo_matrix((vals, (rows, cols)), shape=(12 * n, 12 * n)).tocsr()
    np.add.at(b, idx.reshape(-1), (q[:, :, None] * u4[:, None, :]).reshape(-1))
    const = float(np.sum(q * q))
    return H, b, const


def _smooth_system(edges, gamma, n):
    """Σ_(i,j) ||(A_i - A_j) diag(1,1,1,gamma)||_F^2 as a sparse H."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return sp.csr_matrix((12 * n, 12 * n))
    w = np.ones(12)
    w[3::4] = gamma * gamma  # translation entries of each residual row
    offs = np.arange(12)
    vi = (12 * e[:, 0])[:, None] + offs[None, :]
    vj = (12 * e[:, 1])[:, None] + offs[None, :]
    wv = np.broadcast_to(w, vi.shape)
    rows = np.concatenate([vi, vj, vi, vj]).reshape(-1)
    cols = np.concatenate([vi, vj, vj, vi]).reshape(-1)
    vals = np.concatenate([wv, wv, -wv, -wv]).reshape(-1)
    return sp.coo_matrix((vals, (rows, cols)), shape=(12 * n, 12 * n)).tocsr()


def fixed_correspondence_quadratic(
    key_vertices,
    edges,
    data_targets,
    data_weights,
    matches: CorrespondenceSet | None,
    target_vertices,
    alpha: float,
    beta: float,
    gamma: float,
    regularization: float = 0.0,
) -> Quadratic:
    """Assemble the quadratic objective for fixed closest points.

    data_targets holds one closest point per source vertex and data_weights
    a 0/1 keep mask; matches may be None or empty.
    """
    kv = np.asarray(key_vertices, dtype=np.float64)
    n = len(kv)
    u4 = np.concatenate([kv, np.ones((n, 1))], axis=1)

    keep = np.flatnonzero(np.asarray(data_weights, dtype=bool))
    H, b, const = _point_system(
        keep, u4[keep], np.asarray(data_targets, dtype=np.float64)[keep], n
    )
    if matches is not None and len(matches):
        tv = np.asarray(target_vertices, dtype=np.float64)
        Hm, bm, cm = _point_system(
            matches.source_indices, u4[matches.source_indices],
            tv[matches.target_indices], n,
        )
        H = H + beta * Hm
        b = b + beta * bm
        const = const + beta * cm
    if alpha > 0:
        H = H + alpha * _smooth_system(edges, gamma, n)
    if regularization > 0:
        H = H + regularization * sp.identity(12 * n, format="csr")
        # keep value/gradient consistent with the solved system
    return Quadratic(H, b, const)


def _solve(quad: Quadratic, x0, cfg: RegistrationConfig):
    d = quad.H.diagonal()
    inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    M = LinearOperator(quad.H.shape, matvec=lambda r: inv * r)
    x, info = cg(
        quad.H, quad.b, x0=x0, rtol=cfg.cg_tol, atol=0.0,
        maxiter=cfg.cg_max_iters, M=M,
    )
    if info < 0:
        raise SolverError(f"conjugate gradient failed (info={info})")
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution from conjugate gradient")
    return x


def _normalization(key: Mesh, target: Mesh):
    box = key.bounds().union(target.bounds())
    scale = box.diagonal
    if scale <= 0:
        scale = 1.0
    return box.min + 0.5 * box.extent, 1.0 / scale


def register(
    key: Mesh,
    target: Mesh,
    matches: CorrespondenceSet | None = None,
    cfg: RegistrationConfig = RegistrationConfig(),
) -> tuple[Mesh, AffineField, RegistrationReport]:
    """Deform the key mesh onto the target frame.

    Returns the deformed mesh (key connectivity, untouched triangle array),
    the per-vertex affine field in input coordinates, and the final energy
    breakdown (normalized coordinates).
    """
    if key.vertex_count == 0 or target.triangle_count == 0:
        raise InvalidMeshError("key and target must be nonempty")
    n = key.vertex_count

    # provable fixed point: identical geometry and self-consistent matches
    # make the identity field a global optimum (all three energies zero)
    if (
        np.array_equal(key.vertices, target.vertices)
        and np.array_equal(key.triangles, target.triangles)
        and (
            matches is None
            or len(matches) == 0
            or np.array_equal(
                key.vertices[matches.source_indices],
                target.vertices[matches.target_indices],
            )
        )
    ):
        field = AffineField.identity(n)
        report = RegistrationReport(
            E_d=0.0, E_s=0.0, E_m=0.0, total=0.0,
            iterations_used=0, converged=True, beta_final=cfg.beta,
        )
        return key.with_vertices(key.vertices), field, report

    center, scale = _normalization(key, target)
    kv = (key.vertices - center) * scale
    target_n = Mesh(
        vertices=(target.vertices - center) * scale, triangles=target.triangles
    )
    u4 = np.concatenate([kv, np.ones((n, 1))], axis=1)
    edges = key.edges()
    tv_n = target_n.vertices

    Hs = _smooth_system(edges, cfg.gamma, n) if cfg.alpha > 0 else None
    if matches is not None and len(matches):
        Hm, bm, cm = _point_system(
            matches.source_indices, u4[matches.source_indices],
            tv_n[matches.target_indices], n,
        )
    else:
        Hm = None

    x = AffineField.identity(n).transforms.reshape(-1)
    beta = cfg.beta
    best = None  # (total, x, energies, beta, iteration)
    prev_total = None
    rise = 0
    iterations = 0
    converged = False
    diverged = False

    for it in range(1, cfg.outer_iterations + 1):
        iterations = it
        if it > 1:
            beta *= cfg.beta_decay
        field_now = x.reshape(n, 3, 4)
        p = np.einsum("nij,nj->ni", field_now[:, :, :3], kv) + field_now[:, :, 3]
        cpts, dists, _ = closest_points(target_n, p)
        # gross-outlier rejection; a mean-based cut keeps the far-but-valid
        # correspondences that carry the alignment signal on clean data
        mu = float(dists.mean())
        weights = dists <= 3.0 * mu if mu > 0 else np.ones(n, dtype=bool)

        keep = np.flatnonzero(weights)
        H, b, const = _point_system(keep, u4[keep], cpts[keep], n)
        if Hm is not None:
            H = H + beta * Hm
            b = b + beta * bm
            const = const + beta * cm
        if Hs is not None:
            H = H + cfg.alpha * Hs
        dmax = H.diagonal().max()
        if dmax <= 0:
            raise SolverError("registration system has an empty diagonal")
        lam = 1e-10 * dmax
        zero_diag = int(np.count_nonzero(H.diagonal() == 0.0))
        if zero_diag:
            logger.warning(
                "degenerate registration system: %d unconstrained parameters; "
                "regularized", zero_diag,
            )
        quad = Quadratic(H + lam * sp.identity(12 * n, format="csr"), b, const)
        x = _solve(quad, x, cfg)

        field_now = x.reshape(n, 3, 4)
        p = np.einsum("nij,nj->ni", field_now[:, :, :3], kv) + field_now[:, :, 3]
        E_d = energy_data(p, target_n)
        E_s = energy_smooth(field_now, edges, cfg.gamma)
        E_m = energy_match(
            AffineField(field_now), matches, kv, tv_n
        ) if matches is not None and len(matches) else 0.0
        total = E_d + cfg.alpha * E_s + beta * E_m
        if not np.isfinite(total):
            raise SolverError("non-finite registration energy")

        if best is None or total < best[0]:
            best = (total, x.copy(), (E_d, E_s, E_m), beta, it)
        if prev_total is not None:
            rel = abs(total - prev_total) / max(prev_total, 1e-30)
            if rel < cfg.convergence_tol:
                converged = True
                break
            # count only clear increases: sub-0.1% wiggle near the fixed
            # point is correspondence noise, not solver blowup
            rise = rise + 1 if total > prev_total * 1.001 else 0
            if rise >= 2:
                diverged = True
                break
        prev_total = total

    if diverged:
        total, x, (E_d, E_s, E_m), beta, _ = best
        converged = False

    # back to input coordinates: p = B v + (center - B center + t / scale)
    B = x.reshape(n, 3, 4)[:, :, :3]
    t = x.reshape(n, 3, 4)[:, :, 3]
    t_orig = center - np.einsum("nij,j->ni", B, center) + t / scale
    field = AffineField(np.concatenate([B, t_orig[:, :, None]], axis=2))
    deformed = key.with_vertices(field.apply(key.vertices))
    report = RegistrationReport(
        E_d=E_d, E_s=E_s, E_m=E_m, total=total,
        iterations_used=iterations, converged=converged, diverged=diverged,
        beta_final=beta,
    )
    return deformed, field, report
