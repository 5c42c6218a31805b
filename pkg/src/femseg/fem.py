"""Evaluation and operator pieces for the two trial spaces.

Lagrange P1 fields carry one coefficient per vertex and are piecewise linear;
their gradient is constant per simplex.  RT0 flux fields carry one scalar per
face and reconstruct to a per-simplex affine vector field whose normal
component is continuous across interior faces (boundary coefficients are
pinned to zero).
"""

from __future__ import annotations

import numpy as np

from .errors import BoundaryNode, OutsideMesh, OutsideSimplex
from .mesh import GeometryCache, SimplexLocator, SimplexMesh, barycentric_coords


def p1_gradient(cache: GeometryCache, s: int, coeffs) -> np.ndarray:
    """Constant gradient of the P1 field with the given vertex coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    return coeffs @ cache.grads[s]


def p1_gradients_all(cache: GeometryCache, mesh: SimplexMesh, vertex_values) -> np.ndarray:
    """Per-simplex gradients for vertex data of shape (V,) or (V, m)."""
    vals = np.asarray(vertex_values, dtype=float)
    local = vals[mesh.simplices]  # (S, d+1) or (S, d+1, m)
    if local.ndim == 2:
        return np.einsum("sv,svd->sd", local, cache.grads)
    return np.einsum("svm,svd->smd", local, cache.grads)


def p1_evaluate(
    mesh: SimplexMesh,
    field: np.ndarray,
    p,
    locator: SimplexLocator | None = None,
) -> np.ndarray:
    """Barycentric interpolation of per-vertex data at point ``p``."""
    locator = locator or SimplexLocator(mesh)
    s = int(locator.locate(np.asarray(p, dtype=float)[None, :])[0])
    if s < 0:
        raise OutsideMesh(f"point {p} outside the mesh")
    alpha = barycentric_coords(mesh, s, p, locator.tau_bary)
    return alpha @ np.asarray(field, dtype=float)[mesh.simplices[s]]


def forward_difference_gradient(grid_field: np.ndarray, x) -> np.ndarray:
    """Forward differences (f_{x+e_1}-f_x, ..., f_{x+e_d}-f_x) on a unit lattice."""
    f = np.asarray(grid_field, dtype=float)
    idx = tuple(int(i) for i in x)
    d = f.ndim
    for axis, i in enumerate(idx):
        if i + 1 >= f.shape[axis]:
            raise BoundaryNode(f"node {idx} has no forward neighbor on axis {axis}")
    base = f[idx]
    out = np.empty(d)
    for axis in range(d):
        nxt = list(idx)
        nxt[axis] += 1
        out[axis] = f[tuple(nxt)] - base
    return out


def gradient_split(cache: GeometryCache) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise positive parts ([J_v]_+, [-J_v]_+), each (S, d+1, d)."""
    pos = np.maximum(cache.grads, 0.0)
    neg = np.maximum(-cache.grads, 0.0)
    return pos, neg


# ---------------------------------------------------------------------------
# RT0
# ---------------------------------------------------------------------------


def rt_basis_eval(
    cache: GeometryCache,
    mesh: SimplexMesh,
    s: int,
    local_v: int,
    p,
    tau_bary: float = 1e-9,
) -> np.ndarray:
    """Global RT0 basis vector of face f_v (opposite local vertex v) at ``p``."""
    alpha = barycentric_coords(mesh, s, p, tau_bary)  # containment check
    del alpha
    d = mesh.dim
    v = mesh.vertices[mesh.simplices[s, local_v]]
    f = mesh.simplex_faces[s, local_v]
    si = cache.orientation_signs[s, local_v]
    scale = cache.face_areas[f] / (cache.volumes[s] * d)
    return si * (np.asarray(p, dtype=float) - v) * scale


def rt_field_eval(
    cache: GeometryCache, mesh: SimplexMesh, s: int, face_coeffs, p
) -> np.ndarray:
    """Affine RT0 field in simplex ``s`` from its d+1 face coefficients."""
    d = mesh.dim
    p = np.asarray(p, dtype=float)
    out = np.zeros(d)
    for local in range(d + 1):
        v = mesh.vertices[mesh.simplices[s, local]]
        f = mesh.simplex_faces[s, local]
        si = cache.orientation_signs[s, local]
        scale = cache.face_areas[f] / (cache.volumes[s] * d)
        out += face_coeffs[local] * si * (p - v) * scale
    return out


def rt_midpoint_values(
    cache: GeometryCache, mesh: SimplexMesh, s: int, face_coeffs
) -> np.ndarray:
    """RT0 field values at the d+1 face midpoints of simplex ``s``.

    Any point of the midpoint convex hull reproduces as the combination with
    weights 1 - d*alpha_v.
    """
    d = mesh.dim
    out = np.empty((d + 1, d))
    for local in range(d + 1):
        z = cache.face_midpoints[mesh.simplex_faces[s, local]]
        out[local] = rt_field_eval(cache, mesh, s, face_coeffs, z)
    return out


def rt_divergence_pairing(
    cache: GeometryCache, mesh: SimplexMesh, x_s, face_coeffs
) -> float:
    """Discrete pairing of a per-simplex scalar with an RT0 flux field.

    Equals sum over simplices and local faces of
    ``x_s * lambda_f * |f| * si(f, s)``, the divergence-theorem form of
    the volume integral of ``x * div(lambda)``.
    """
    x_s = np.asarray(x_s, dtype=float)
    lam = np.asarray(face_coeffs, dtype=float)
    areas = cache.face_areas[mesh.simplex_faces]          # (S, d+1)
    coeffs = lam[mesh.simplex_faces]                      # (S, d+1)
    per_simplex = np.sum(coeffs * areas * cache.orientation_signs, axis=1)
    return float(np.dot(x_s, per_simplex))
