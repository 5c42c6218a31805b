"""Per-point label costs from ray observations and their mesh integration.

Label convention: labels are 1-based (1 = free space); cost arrays are
0-based with column ``i`` holding label ``i+1``.  The free-space column is
identically zero.

The depth term uses the signed offset ``d = dist(x, camera) - observed
depth``: within the truncation band the cost of every occupied label is
``+beta`` in front of the observed surface (carving free space) and
``-beta`` behind it (filling the solid), so the band attracts the
reconstructed interface to the observed depth.  Class evidence applies in
the sub-band just behind the surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import GeometryCache, SimplexLocator, SimplexMesh


@dataclass
class DataCostParams:
    epsilon: float = 0.01     # band half-step (length units)
    k: int = 3                # band multiplier
    beta: float = 0.5         # free-space / occupancy weight
    freespace_label: int = 1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass
class Camera:
    """A point camera with a uniform fan of rays.

    Rays are indexed by angle: ray ``r`` points along ``angle0 + r *
    dangle``.  Query points associate to the angularly nearest ray and
    contribute nothing when the gap exceeds half the ray spacing.
    """

    center: np.ndarray
    angle0: float
    dangle: float
    n_rays: int
    depths: np.ndarray        # (R,) observed depth, NaN where the ray missed
    sigmas: np.ndarray        # (R, m) per-label negative log likelihoods

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.depths = np.asarray(self.depths, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)

    def ray_angle(self, r):
        return self.angle0 + np.asarray(r) * self.dangle

    def ray_point(self, r: int, depth: float) -> np.ndarray:
        a = self.angle0 + r * self.dangle
        return self.center + depth * np.array([np.cos(a), np.sin(a)])


@dataclass
class Observations:
    m: int
    cameras: list = field(default_factory=list)
    perturbation_log: list = field(default_factory=list)
    sigma_hit: float = 0.1
    sigma_miss: float = 2.0
    boundary_length: float = 0.0

    def n_observations(self) -> int:
        return int(sum(np.sum(np.isfinite(c.depths)) for c in self.cameras))

    def copy(self) -> "Observations":
        cams = []
        for c in self.cameras:
            cam = Camera(
                c.center.copy(),
                c.angle0,
                c.dangle,
                c.n_rays,
                c.depths.copy(),
                c.sigmas.copy(),
            )
            for extra in ("hit_segment", "hit_u", "arclength"):
                if hasattr(c, extra):
                    setattr(cam, extra, getattr(c, extra).copy())
            cams.append(cam)
        return Observations(
            self.m,
            cams,
            list(self.perturbation_log),
            self.sigma_hit,
            self.sigma_miss,
            self.boundary_length,
        )


def rho_point(points, obs: Observations, params: DataCostParams) -> np.ndarray:
    """Per-label costs at query points, accumulated over all cameras."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    single = np.asarray(points).ndim == 1
    n = len(pts)
    rho = np.zeros((n, obs.m))
    keps = params.k * params.epsilon
    lo_band = (params.k - 1) * params.epsilon
    free_col = params.freespace_label - 1

    for cam in obs.cameras:
        rel = pts - cam.center
        dist = np.linalg.norm(rel, axis=1)
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        offs = (ang - cam.angle0) / cam.dangle
        offs = offs - np.round(offs / (2 * np.pi / abs(cam.dangle))) * (
            2 * np.pi / abs(cam.dangle)
        )
        idx = np.round(offs).astype(np.int64)
        gap = np.abs(offs - idx)
        ok = (gap <= 0.5 + 1e-12) & (idx >= 0) & (idx < cam.n_rays)
        idx = np.clip(idx, 0, cam.n_rays - 1)
        dhat = cam.depths[idx]
        ok &= np.isfinite(dhat)
        if not np.any(ok):
            continue
        d = np.where(ok, dist - dhat, np.inf)
        class_band = (d >= lo_band) & (d <= keps)
        beta_band = np.abs(d) <= keps
        contrib = cam.sigmas[idx] * class_band[:, None]
        contrib -= params.beta * (np.sign(d) * beta_band)[:, None]
        contrib[:, free_col] = 0.0
        rho += np.where(ok[:, None], contrib, 0.0)

    rho[:, free_col] = 0.0
    return rho[0] if single else rho


def _sample_grid(mesh: SimplexMesh, spacing: float) -> np.ndarray:
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    axes = [np.arange(lo[k] + spacing / 2, hi[k], spacing) for k in range(mesh.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def integrate_vertex_costs(
    mesh: SimplexMesh,
    cache: GeometryCache,
    rho_fn,
    m: int,
    spacing: float,
    locator: SimplexLocator | None = None,
    vertex_subset=None,
):
    """Per-vertex costs by sampling ``rho_fn`` on a regular grid.

    Each sample adds its barycentric weight times its cost to the vertices of
    its simplex; a vertex cost is the weighted sample mean scaled by the
    lumped volume ``sum_{s in N(v)} |s| / d``.  Returns ``(costs, report)``
    where the report lists vertices that received no samples (their cost is
    zero).

    With ``vertex_subset`` only those vertices are integrated (sampling is
    restricted to their simplex stars), which refinement uses to refresh the
    neighborhood of an inserted point.
    """
    locator = locator or SimplexLocator(mesh)
    pts = _sample_grid(mesh, spacing)
    simplex_of = locator.locate(pts)

    keep = simplex_of >= 0
    if vertex_subset is not None:
        subset = np.zeros(mesh.n_vertices, dtype=bool)
        subset[np.asarray(list(vertex_subset), dtype=np.int64)] = True
        star = np.zeros(mesh.n_simplices, dtype=bool)
        star[np.any(subset[mesh.simplices], axis=1)] = True
        keep &= star[np.clip(simplex_of, 0, None)]
    pts = pts[keep]
    simplex_of = simplex_of[keep]

    d = mesh.dim
    weight_acc = np.zeros(mesh.n_vertices)
    cost_acc = np.zeros((mesh.n_vertices, m))
    if len(pts):
        rho = np.asarray(rho_fn(pts), dtype=float).reshape(len(pts), m)
        centroids = mesh.vertices[mesh.simplices[simplex_of]].mean(axis=1)
        alpha = 1.0 / (d + 1) + np.einsum(
            "nd,nvd->nv", pts - centroids, cache.grads[simplex_of]
        )
        verts = mesh.simplices[simplex_of]  # (N, d+1)
        np.add.at(weight_acc, verts.ravel(), alpha.ravel())
        np.add.at(
            cost_acc,
            verts.ravel(),
            (alpha[:, :, None] * rho[:, None, :]).reshape(-1, m),
        )

    lumped = np.zeros(mesh.n_vertices)
    np.add.at(
        lumped,
        mesh.simplices.ravel(),
        np.repeat(cache.volumes / d, d + 1),
    )

    costs = np.zeros((mesh.n_vertices, m))
    nonzero = weight_acc > 0
    costs[nonzero] = (
        cost_acc[nonzero] / weight_acc[nonzero, None] * lumped[nonzero, None]
    )
    empty = np.nonzero(~nonzero)[0]
    if vertex_subset is not None:
        subset_idx = np.asarray(sorted(vertex_subset), dtype=np.int64)
        empty = np.intersect1d(empty, subset_idx)
    report = {"empty_vertices": empty.tolist(), "n_samples": int(len(pts))}
    return costs, report


def integrate_vertex_costs_affine(
    mesh: SimplexMesh, cache: GeometryCache, coeffs, offsets
) -> np.ndarray:
    """Exact per-vertex costs for affine densities ``rho_i(z) = a_i . z + c_i``.

    Uses the closed form of the hat-weighted moments, scaled by the same
    lumped-volume convention as the sampled integrator, so the two agree in
    the dense-sampling limit.
    """
    a = np.atleast_2d(np.asarray(coeffs, dtype=float))   # (m, d)
    c = np.atleast_1d(np.asarray(offsets, dtype=float))  # (m,)
    d = mesh.dim
    m = len(c)
    costs = np.zeros((mesh.n_vertices, m))
    verts = mesh.vertices[mesh.simplices]                # (S, d+1, d)
    vsum = verts.sum(axis=1)                             # (S, d)
    for local in range(d + 1):
        moment = (vsum + verts[:, local, :]) / ((d + 1) * (d + 2))  # (S, d)
        integral = (
            cache.volumes[:, None] * (moment @ a.T)
            + cache.volumes[:, None] * c[None, :] / (d + 1)
        )
        np.add.at(costs, mesh.simplices[:, local], integral)
    return costs * (d + 1) / d


def integrate_simplex_costs(
    mesh: SimplexMesh,
    cache: GeometryCache,
    rho_fn,
    m: int,
    spacing: float,
    locator: SimplexLocator | None = None,
):
    """Per-simplex costs: mean of in-simplex samples times the volume."""
    locator = locator or SimplexLocator(mesh)
    pts = _sample_grid(mesh, spacing)
    simplex_of = locator.locate(pts)
    keep = simplex_of >= 0
    pts = pts[keep]
    simplex_of = simplex_of[keep]

    count = np.zeros(mesh.n_simplices)
    acc = np.zeros((mesh.n_simplices, m))
    if len(pts):
        rho = np.asarray(rho_fn(pts), dtype=float).reshape(len(pts), m)
        np.add.at(count, simplex_of, 1.0)
        np.add.at(acc, simplex_of, rho)
    costs = np.zeros((mesh.n_simplices, m))
    nonzero = count > 0
    costs[nonzero] = (
        acc[nonzero] / count[nonzero, None] * cache.volumes[nonzero, None]
    )
    report = {
        "empty_simplices": np.nonzero(~nonzero)[0].tolist(),
        "n_samples": int(len(pts)),
    }
    return costs, report


def costs_to_json(costs: np.ndarray) -> dict:
    """Cost field as a JSON-ready dict keyed by vertex/simplex index."""
    return {str(i): row.tolist() for i, row in enumerate(np.asarray(costs))}
