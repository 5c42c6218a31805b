"""Synthetic 2D benchmark: layered scene, virtual cameras, ray observations.

The scene is a unit-box world with a ground slab, one building with a gabled
roof, and free space around them (labels: 1 free space, 2 building, 3 ground,
4 roof).  Cameras on a surrounding circle cast ray fans; each ray records the
depth of its first hit on the exterior solid boundary plus per-label
negative-log-likelihoods.  Five perturbation families degrade the
observations for robustness studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .datacost import Camera, Observations
from .errors import InvalidSpec
from .mesh import SimplexMesh, build_delaunay_2d

FREE, BUILDING, GROUND, ROOF = 1, 2, 3, 4

PERTURBATION_KINDS = (
    "depth_noise",
    "wrong_class",
    "ambiguous_class",
    "missing_data",
    "sparsify",
)


@dataclass
class SceneSpec:
    ground_y: float = 0.3
    building_x0: float = 0.32
    building_x1: float = 0.68
    wall_top: float = 0.55
    gable_height: float = 0.18
    n_cameras: int = 17
    rays_per_camera: int = 160
    camera_radius_factor: float = 1.5
    fan_margin: float = 1.05          # widen each fan beyond the box extent
    sigma_hit: float = 0.1
    sigma_miss: float = 2.0
    gt_resolution: int = 256
    observe_domain_edges: bool = True
    m: int = 4

    def validate(self):
        if not (0 < self.ground_y < self.wall_top < 1):
            raise InvalidSpec("need 0 < ground_y < wall_top < 1")
        if not (0 <= self.building_x0 < self.building_x1 <= 1):
            raise InvalidSpec("building extent outside the domain")
        if self.wall_top + self.gable_height >= 1:
            raise InvalidSpec("roof apex outside the domain")
        if self.n_cameras < 1 or self.rays_per_camera < 2:
            raise InvalidSpec("need at least one camera and two rays")
        if self.camera_radius_factor <= 1.0:
            raise InvalidSpec("cameras must sit outside the domain")


@dataclass
class Perturbation:
    kind: str
    magnitude: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise InvalidSpec(f"unknown perturbation kind {self.kind!r}")
        if self.kind != "depth_noise" and not (0.0 <= self.magnitude <= 1.0):
            raise InvalidSpec("fractions must lie in [0, 1]")


@dataclass
class Scene:
    spec: SceneSpec
    seed: int
    segments: np.ndarray        # (K, 2, 2) boundary segments (exterior surface)
    segment_labels: np.ndarray  # (K,) owning solid label
    gt_raster: np.ndarray       # (res, res) labels, row 0 at y ~ 0
    camera_centers: np.ndarray  # (C, 2)
    has_building: bool = True

    def label_at(self, points) -> np.ndarray:
        return label_at(self.spec, points)

    def boundary_length(self) -> float:
        d = self.segments[:, 1] - self.segments[:, 0]
        return float(np.linalg.norm(d, axis=1).sum())


def label_at(spec: SceneSpec, points) -> np.ndarray:
    """Ground-truth label per query point (1-based)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    out = np.full(len(pts), FREE, dtype=np.int64)
    out[y < spec.ground_y] = GROUND
    has_building = spec.building_x1 > spec.building_x0
    if has_building:
        inb = (
            (x >= spec.building_x0)
            & (x <= spec.building_x1)
            & (y >= spec.ground_y)
            & (y <= spec.wall_top)
        )
        out[inb] = BUILDING
        if spec.gable_height > 0:
            apex_x = 0.5 * (spec.building_x0 + spec.building_x1)
            half = apex_x - spec.building_x0
            # inside the gable triangle above the wall top
            rel = np.abs(x - apex_x)
            ymax = spec.wall_top + spec.gable_height * np.clip(
                1.0 - rel / max(half, 1e-12), 0.0, 1.0
            )
            inroof = (
                (x >= spec.building_x0)
                & (x <= spec.building_x1)
                & (y > spec.wall_top)
                & (y <= ymax)
            )
            out[inroof] = ROOF
    return out


def _boundary_segments(spec: SceneSpec):
    segs = []
    labels = []
    g = spec.ground_y
    b0, b1, wt = spec.building_x0, spec.building_x1, spec.wall_top
    has_building = b1 > b0

    def add(p, q, lab):
        segs.append([p, q])
        labels.append(lab)

    if has_building:
        add((0.0, g), (b0, g), GROUND)
        add((b1, g), (1.0, g), GROUND)
        add((b0, g), (b0, wt), BUILDING)
        add((b1, g), (b1, wt), BUILDING)
        if spec.gable_height > 0:
            apex = (0.5 * (b0 + b1), wt + spec.gable_height)
            add((b0, wt), apex, ROOF)
            add(apex, (b1, wt), ROOF)
        else:
            add((b0, wt), (b1, wt), BUILDING)
    else:
        add((0.0, g), (1.0, g), GROUND)
    if spec.observe_domain_edges:
        add((0.0, 0.0), (1.0, 0.0), GROUND)
        add((0.0, 0.0), (0.0, g), GROUND)
        add((1.0, 0.0), (1.0, g), GROUND)
    return np.asarray(segs, dtype=float), np.asarray(labels, dtype=np.int64)


def generate(spec: SceneSpec, seed: int = 0) -> Scene:
    """Deterministic scene with ground-truth raster and camera ring."""
    spec.validate()
    segs, labels = _boundary_segments(spec)

    res = spec.gt_resolution
    axis = (np.arange(res) + 0.5) / res
    xx, yy = np.meshgrid(axis, axis, indexing="xy")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    gt = label_at(spec, pts).reshape(res, res)

    center = np.array([0.5, 0.5])
    radius = spec.camera_radius_factor * math.sqrt(0.5)
    angles = 2 * np.pi * np.arange(spec.n_cameras) / spec.n_cameras
    cams = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    return Scene(
        spec=spec,
        seed=seed,
        segments=segs,
        segment_labels=labels,
        gt_raster=gt,
        camera_centers=cams,
        has_building=spec.building_x1 > spec.building_x0,
    )


def _ray_segment_hits(origin, direction, segments):
    """First-hit parameter along the ray for each segment (inf if missed)."""
    p = segments[:, 0]
    q = segments[:, 1]
    e = q - p
    denom = direction[0] * e[:, 1] - direction[1] * e[:, 0]
    rel = p - origin
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom
        u = (rel[:, 0] * direction[1] - rel[:, 1] * direction[0]) / denom
    ok = (np.abs(denom) > 1e-300) & (u >= -1e-12) & (u <= 1 + 1e-12) & (t > 1e-9)
    t = np.where(ok, t, np.inf)
    return t, u


def observe(scene: Scene) -> Observations:
    """Ray observations of the exterior boundary from every camera."""
    spec = scene.spec
    m = spec.m
    cameras = []
    box_corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    for center in scene.camera_centers:
        rel = box_corners - center
        angs = np.arctan2(rel[:, 1], rel[:, 0])
        mid = math.atan2(0.5 - center[1], 0.5 - center[0])
        spread = np.max(np.abs(((angs - mid + np.pi) % (2 * np.pi)) - np.pi))
        span = 2 * spread * spec.fan_margin
        n = spec.rays_per_camera
        angle0 = mid - span / 2
        dangle = span / (n - 1)
        depths = np.full(n, np.nan)
        sigmas = np.full((n, m), spec.sigma_miss)
        hit_seg = np.full(n, -1, dtype=np.int64)
        hit_u = np.full(n, np.nan)
        for r in range(n):
            a = angle0 + r * dangle
            d = np.array([math.cos(a), math.sin(a)])
            t, u = _ray_segment_hits(center, d, scene.segments)
            k = int(np.argmin(t))
            if np.isfinite(t[k]):
                depths[r] = t[k]
                sigmas[r, scene.segment_labels[k] - 1] = spec.sigma_hit
                hit_seg[r] = k
                hit_u[r] = u[k]
        cam = Camera(center, angle0, dangle, n, depths, sigmas)
        cam.hit_segment = hit_seg
        cam.hit_u = hit_u
        cameras.append(cam)
    result = Observations(
        m=m, cameras=cameras, sigma_hit=spec.sigma_hit, sigma_miss=spec.sigma_miss
    )
    return attach_arclengths(result, scene)


def perturb(obs: Observations, pert: Perturbation) -> Observations:
    """Apply one perturbation family; returns a modified copy."""
    out = obs.copy()
    rng = np.random.default_rng([pert.seed, PERTURBATION_KINDS.index(pert.kind)])
    mag = pert.magnitude

    if pert.kind == "depth_noise":
        for cam in out.cameras:
            seen = np.isfinite(cam.depths)
            cam.depths[seen] += mag * rng.standard_normal(int(seen.sum()))
    elif pert.kind == "wrong_class":
        m = out.m
        for cam in out.cameras:
            seen = np.nonzero(np.isfinite(cam.depths))[0]
            chosen = seen[rng.random(len(seen)) < mag]
            for r in chosen:
                current = int(np.argmin(cam.sigmas[r]))
                wrong = [i for i in range(m) if i != current]
                new = int(rng.choice(wrong))
                cam.sigmas[r] = out.sigma_miss
                cam.sigmas[r, new] = out.sigma_hit
    elif pert.kind == "ambiguous_class":
        for cam in out.cameras:
            seen = np.nonzero(np.isfinite(cam.depths))[0]
            chosen = seen[rng.random(len(seen)) < mag]
            cam.sigmas[chosen] = out.sigma_miss
    elif pert.kind == "missing_data":
        # Drop observations whose hit lies in a contiguous boundary window.
        total = out.boundary_length or 1.0
        start = rng.random() * total
        win = mag * total
        for cam in out.cameras:
            arc = getattr(cam, "arclength", None)
            if arc is None:
                continue
            pos = (arc - start) % total
            drop = np.isfinite(cam.depths) & np.nan_to_num(pos <= win, nan=False)
            cam.depths[drop] = np.nan
    elif pert.kind == "sparsify":
        for cam in out.cameras:
            seen = np.nonzero(np.isfinite(cam.depths))[0]
            dropmask = rng.random(len(seen)) >= mag
            cam.depths[seen[dropmask]] = np.nan

    out.perturbation_log.append(asdict(pert))
    return out


def attach_arclengths(obs: Observations, scene: Scene) -> Observations:
    """Annotate observations with boundary arclength of each hit.

    Needed by the missing_data perturbation; called by observe pipelines that
    keep the scene at hand.
    """
    seglen = np.linalg.norm(scene.segments[:, 1] - scene.segments[:, 0], axis=1)
    cumul = np.concatenate([[0.0], np.cumsum(seglen)])
    for cam in obs.cameras:
        seg = getattr(cam, "hit_segment", None)
        if seg is None:
            continue
        u = np.nan_to_num(getattr(cam, "hit_u"), nan=0.0)
        arc = np.where(seg >= 0, cumul[np.clip(seg, 0, None)] + u * seglen[np.clip(seg, 0, None)], np.nan)
        cam.arclength = arc
    obs.boundary_length = float(cumul[-1])
    return obs


def build_control_mesh(
    obs: Observations,
    n_c: int = 8,
    eps_c: float = 0.01,
    background_grid: int = 16,
    ell_min: float = 2.5e-4,
    box=((0.0, 0.0), (1.0, 1.0)),
) -> SimplexMesh:
    """Control mesh: points along each sight line around the observed depth,
    plus a sparse background grid, triangulated by Delaunay.

    Each observed ray contributes ``n_c`` points at ``d_hat + j * eps_c`` for
    ``j`` in ``-floor(n_c/2) .. ceil(n_c/2)-1`` (so ``j = 0`` sits exactly on
    the putative surface).  Background grid corners pin the full box.
    """
    pts = []
    j0 = -(n_c // 2)
    offsets = np.arange(j0, j0 + n_c) * eps_c
    for cam in obs.cameras:
        seen = np.nonzero(np.isfinite(cam.depths))[0]
        if len(seen) == 0:
            continue
        angs = cam.ray_angle(seen)
        dirs = np.stack([np.cos(angs), np.sin(angs)], axis=1)
        depths = cam.depths[seen]
        p = (
            cam.center[None, None, :]
            + (depths[:, None] + offsets[None, :])[:, :, None] * dirs[:, None, :]
        )
        pts.append(p.reshape(-1, 2))

    (x0, y0), (x1, y1) = box
    gx = np.linspace(x0, x1, background_grid)
    gy = np.linspace(y0, y1, background_grid)
    bg = np.stack(np.meshgrid(gx, gy, indexing="xy"), axis=-1).reshape(-1, 2)
    pts.append(bg)

    allpts = np.concatenate(pts, axis=0)
    # keep points within a small margin of the box so stray rays cannot blow
    # up the hull
    margin = 8 * eps_c
    inside = (
        (allpts[:, 0] >= x0 - margin)
        & (allpts[:, 0] <= x1 + margin)
        & (allpts[:, 1] >= y0 - margin)
        & (allpts[:, 1] <= y1 + margin)
    )
    return build_delaunay_2d(allpts[inside], ell_min)
