"""Simplicial meshes in 2D/3D with the geometric quantities both trial spaces need.

A mesh is a set of vertices plus (d+1)-vertex simplices that partition a convex
domain.  Faces (edges in 2D, triangles in 3D) are derived, each interior face
adjacent to exactly two simplices.  The geometry cache holds per-simplex
volumes, the per-vertex gradient vectors of the piecewise-linear hat functions,
and per-face areas/normals/orientation signs used by the flux basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInput,
    DegenerateSimplex,
    OutsideMesh,
    OutsideSimplex,
    TooFewPoints,
)


@dataclass
class MeshConfig:
    """Tolerances and quality floors, in units of a unit-box-scaled mesh."""

    ell_min: float = 1e-4          # minimum edge length
    min_angle_deg: float = 1.0     # interior (2D) / dihedral (3D) angle floor
    volume_floor: float = 1e-12    # |s| below this counts as degenerate
    tau_bary: float = 1e-9         # barycentric containment tolerance


@dataclass
class SimplexMesh:
    """Vertices, simplices and derived face connectivity.

    Treat instances as immutable after construction; every derived array is
    consistent with ``vertices``/``simplices`` at build time.
    """

    dim: int
    vertices: np.ndarray        # (V, d) float
    simplices: np.ndarray       # (S, d+1) int, positively oriented
    faces: np.ndarray           # (F, d) int, sorted vertex tuples
    face_simplices: np.ndarray  # (F, 2) int, second entry -1 on the boundary
    simplex_faces: np.ndarray   # (S, d+1) int, global face opposite local vertex
    boundary_flags: np.ndarray  # (F,) bool

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique vertex pairs that share a simplex, as an (E, 2) int array."""
        d1 = self.dim + 1
        pairs = []
        for i in range(d1):
            for j in range(i + 1, d1):
                pairs.append(self.simplices[:, [i, j]])
        e = np.sort(np.concatenate(pairs, axis=0), axis=1)
        return np.unique(e, axis=0)


@dataclass
class GeometryCache:
    """Per-simplex and per-face geometry used by both discretizations."""

    volumes: np.ndarray        # (S,) strictly positive
    grads: np.ndarray          # (S, d+1, d) hat-function gradients J_v
    face_areas: np.ndarray     # (F,)
    face_normals: np.ndarray   # (F, d) unit, fixed global orientation
    face_midpoints: np.ndarray  # (F, d)
    orientation_signs: np.ndarray  # (S, d+1) si(f, s) in {-1, +1}


@dataclass
class ValidationReport:
    ok: bool
    min_edge_length: float
    min_angle_deg: float
    n_flipped: int
    n_orphan_faces: int
    orientation_consistent: bool
    lipschitz_grad_min: float   # min_v ||J_v||, reported, not asserted
    lipschitz_grad_max: float   # max_v ||J_v||, reported, not asserted
    messages: list = field(default_factory=list)


def _face_key(vertices_of_face) -> tuple:
    return tuple(sorted(int(v) for v in vertices_of_face))


def build_mesh(vertices, simplices, *, fix_orientation: bool = True) -> SimplexMesh:
    """Assemble a SimplexMesh from raw arrays, deriving face connectivity.

    With ``fix_orientation`` every simplex is reordered to positive volume.
    """
    vertices = np.asarray(vertices, dtype=float)
    simplices = np.asarray(simplices, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
        raise DegenerateInput("vertices must be an (n, 2) or (n, 3) array")
    d = vertices.shape[1]
    if simplices.ndim != 2 or simplices.shape[1] != d + 1:
        raise DegenerateInput(f"simplices must have {d + 1} vertices each")

    if fix_orientation and len(simplices):
        simplices = simplices.copy()
        vols = _signed_volumes(vertices, simplices)
        flipped = vols < 0
        if np.any(flipped):
            simplices[np.ix_(flipped, [d - 1, d])] = simplices[
                np.ix_(flipped, [d, d - 1])
            ]

    face_index: dict = {}
    faces = []
    face_simplices = []
    simplex_faces = np.full((len(simplices), d + 1), -1, dtype=np.int64)
    for s, simplex in enumerate(simplices):
        for local in range(d + 1):
            fverts = np.delete(simplex, local)
            key = _face_key(fverts)
            fi = face_index.get(key)
            if fi is None:
                fi = len(faces)
                face_index[key] = fi
                faces.append(key)
                face_simplices.append([s, -1])
            else:
                if face_simplices[fi][1] != -1:
                    raise DegenerateInput(f"face {key} shared by >2 simplices")
                face_simplices[fi][1] = s
            simplex_faces[s, local] = fi

    faces_arr = np.asarray(faces, dtype=np.int64).reshape(len(faces), d)
    fs_arr = np.asarray(face_simplices, dtype=np.int64)
    boundary = fs_arr[:, 1] == -1
    return SimplexMesh(
        dim=d,
        vertices=vertices,
        simplices=simplices,
        faces=faces_arr,
        face_simplices=fs_arr,
        simplex_faces=simplex_faces,
        boundary_flags=boundary,
    )


def _signed_volumes(vertices, simplices) -> np.ndarray:
    d = vertices.shape[1]
    v0 = vertices[simplices[:, 0]]
    edges = vertices[simplices[:, 1:]] - v0[:, None, :]
    det = np.linalg.det(edges)
    return det / math.factorial(d)


# ---------------------------------------------------------------------------
# Delaunay triangulation (2D, incremental insertion)
# ---------------------------------------------------------------------------


def _dedup_points(points: np.ndarray, ell_min: float) -> np.ndarray:
    """Greedy merge: drop any point within ell_min of an already kept one."""
    cell = max(ell_min, 1e-300)
    grid: dict = {}
    kept: list = []
    r2 = ell_min * ell_min
    for p in points:
        cx, cy = int(math.floor(p[0] / cell)), int(math.floor(p[1] / cell))
        close = False
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for idx in grid.get((gx, gy), ()):
                    q = kept[idx]
                    dx, dy = p[0] - q[0], p[1] - q[1]
                    if dx * dx + dy * dy < r2:
                        close = True
                        break
                if close:
                    break
            if close:
                break
        if not close:
            grid.setdefault((cx, cy), []).append(len(kept))
            kept.append((float(p[0]), float(p[1])))
    return np.asarray(kept, dtype=float)


def _circumcircle(ax, ay, bx, by, cx, cy):
    """Circumcenter and squared radius of a CCW triangle."""
    dx, dy = bx - ax, by - ay
    ex, ey = cx - ax, cy - ay
    bl = dx * dx + dy * dy
    cl = ex * ex + ey * ey
    det = dx * ey - dy * ex
    if det == 0.0:
        return ax, ay, math.inf
    s = 0.5 / det
    ux = (ey * bl - dy * cl) * s
    uy = (dx * cl - ex * bl) * s
    return ax + ux, ay + uy, ux * ux + uy * uy


def build_delaunay_2d(points, ell_min: float) -> SimplexMesh:
    """Delaunay triangulation of a 2D point cloud by incremental insertion.

    Points closer than ``ell_min`` are merged before triangulating.  The
    result covers the convex hull of the kept points, with boundary faces
    flagged.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("points contain non-finite coordinates")
    if ell_min <= 0:
        raise DegenerateInput("ell_min must be positive")
    pts = _dedup_points(pts, ell_min)
    if len(pts) < 3:
        raise TooFewPoints(f"need >= 3 points after merging, got {len(pts)}")

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], ell_min))
    centered = pts - (lo + hi) / 2.0

    # Collinearity check: largest cross product against the longest baseline.
    base = centered[np.argmax(np.einsum("ij,ij->i", centered, centered))]
    cross = np.abs(centered[:, 0] * base[1] - centered[:, 1] * base[0])
    if np.max(cross) < 1e-12 * span * span:
        raise DegenerateInput("all points are collinear")

    # Insertion order with spatial locality keeps the walk short.
    cell = span / max(1.0, math.sqrt(len(pts)))
    gx = np.floor(centered[:, 0] / cell).astype(np.int64)
    gy = np.floor(centered[:, 1] / cell).astype(np.int64)
    snake_x = np.where(gy % 2 == 0, gx, -gx)
    order = np.lexsort((snake_x, gy))

    n = len(pts)
    coords = np.concatenate(
        [
            centered,
            np.array(
                [
                    [0.0, 64.0 * span],
                    [-64.0 * span, -64.0 * span],
                    [64.0 * span, -64.0 * span],
                ]
            ),
        ],
        axis=0,
    )
    xs, ys = coords[:, 0], coords[:, 1]

    tris: list = [[n, n + 1, n + 2]]
    nbrs: list = [[-1, -1, -1]]
    alive: list = [True]
    circ: list = [_circumcircle(xs[n], ys[n], xs[n + 1], ys[n + 1], xs[n + 2], ys[n + 2])]

    def orient(a, b, px, py):
        return (xs[b] - xs[a]) * (py - ys[a]) - (ys[b] - ys[a]) * (px - xs[a])

    def in_circle(t, px, py):
        cx, cy, r2 = circ[t]
        dx, dy = px - cx, py - cy
        return dx * dx + dy * dy <= r2 * (1.0 + 1e-12)

    last = 0
    for pi in order:
        px, py = xs[pi], ys[pi]

        # Walk towards the containing triangle.
        t = last if alive[last] else next(i for i, a in enumerate(alive) if a)
        for _ in range(4 * len(tris) + 16):
            a, b, c = tris[t]
            if orient(a, b, px, py) < 0:
                t2 = nbrs[t][2]
            elif orient(b, c, px, py) < 0:
                t2 = nbrs[t][0]
            elif orient(c, a, px, py) < 0:
                t2 = nbrs[t][1]
            else:
                break
            if t2 == -1:
                break
            t = t2
        seed = t

        # Grow the cavity of circumcircle-violating triangles.
        bad = {seed}
        stack = [seed]
        while stack:
            cur = stack.pop()
            for nb in nbrs[cur]:
                if nb != -1 and nb not in bad and in_circle(nb, px, py):
                    bad.add(nb)
                    stack.append(nb)

        # Boundary edges of the cavity, oriented as in their CCW triangles.
        boundary = []
        for bt in bad:
            a, b, c = tris[bt]
            for (u, v), opp in (((b, c), 0), ((c, a), 1), ((a, b), 2)):
                nb = nbrs[bt][opp]
                if nb == -1 or nb not in bad:
                    boundary.append((u, v, nb))

        for bt in bad:
            alive[bt] = False

        edge_owner: dict = {}
        new_ids = []
        for (u, v, outer) in boundary:
            nt = len(tris)
            tris.append([pi, u, v])
            nbrs.append([outer, -1, -1])  # slot 0 is opposite pi, the edge (u, v)
            alive.append(True)
            circ.append(_circumcircle(px, py, xs[u], ys[u], xs[v], ys[v]))
            if outer != -1:
                on = tris[outer]
                for k in range(3):
                    e = (on[(k + 1) % 3], on[(k + 2) % 3])
                    if e == (v, u):
                        nbrs[outer][k] = nt
                        break
            edge_owner[(pi, u)] = (nt, 2)  # edge (pi, u) is opposite local 2 (v)
            edge_owner[(v, pi)] = (nt, 1)  # edge (v, pi) is opposite local 1 (u)
            new_ids.append(nt)

        for nt in new_ids:
            _, u, v = tris[nt]
            mate = edge_owner.get((u, pi))
            if mate is not None:
                nbrs[nt][2] = mate[0]
            mate = edge_owner.get((pi, v))
            if mate is not None:
                nbrs[nt][1] = mate[0]
        last = new_ids[0] if new_ids else seed

    final = [
        tri
        for tri, ok in zip(tris, alive)
        if ok and all(v < n for v in tri)
    ]
    if not final:
        raise DegenerateInput("triangulation produced no simplices")
    return build_mesh(pts, np.asarray(final, dtype=np.int64))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def barycentric_coords(mesh: SimplexMesh, s: int, p, tau_bary: float = 1e-9):
    """Barycentric coordinates of point ``p`` inside simplex ``s``.

    Raises OutsideSimplex when any coordinate is below ``-tau_bary``.
    """
    p = np.asarray(p, dtype=float)
    verts = mesh.vertices[mesh.simplices[s]]
    d = mesh.dim
    mat = np.vstack([np.ones(d + 1), verts.T])
    rhs = np.concatenate([[1.0], p])
    alpha = np.linalg.solve(mat, rhs)
    if np.min(alpha) < -tau_bary:
        raise OutsideSimplex(
            f"point {p.tolist()} outside simplex {s} (min coord {np.min(alpha):.3g})"
        )
    return alpha


def compute_geometry(mesh: SimplexMesh, volume_floor: float = 1e-12) -> GeometryCache:
    """All cached geometry: volumes, hat gradients, face areas/normals/signs."""
    d = mesh.dim
    verts = mesh.vertices[mesh.simplices]            # (S, d+1, d)
    v0 = verts[:, 0, :]
    edges = verts[:, 1:, :] - v0[:, None, :]
    det = np.linalg.det(edges)
    volumes = np.abs(det) / math.factorial(d)
    if np.any(volumes <= volume_floor):
        bad = int(np.argmin(volumes))
        raise DegenerateSimplex(
            f"simplex {bad} has volume {volumes[bad]:.3g} <= floor {volume_floor:.3g}"
        )

    # Hat-function gradients: alpha = inv(M^T) @ [1, x] with rows M[v] = [1, v],
    # so grad alpha_v is row v, columns 1..d of inv(M^T).
    mats = np.concatenate([np.ones((mesh.n_simplices, d + 1, 1)), verts], axis=2)
    inv = np.linalg.inv(np.swapaxes(mats, 1, 2))
    grads = inv[:, :, 1:]  # (S, d+1, d)

    face_verts = mesh.vertices[mesh.faces]           # (F, d, d)
    if d == 2:
        delta = face_verts[:, 1, :] - face_verts[:, 0, :]
        face_areas = np.linalg.norm(delta, axis=1)
    else:
        e1 = face_verts[:, 1, :] - face_verts[:, 0, :]
        e2 = face_verts[:, 2, :] - face_verts[:, 0, :]
        face_areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    face_mid = face_verts.mean(axis=1)

    # Global face normal: orient a canonical normal (computed once per face,
    # so both adjacent simplices agree bit-for-bit) towards the all-ones
    # vector, ties broken on the first nonzero component.  si(f, s) is then
    # +1 when the outward normal of s matches the global normal.
    if d == 2:
        tang = face_verts[:, 1, :] - face_verts[:, 0, :]
        canon = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    else:
        canon = np.cross(
            face_verts[:, 1, :] - face_verts[:, 0, :],
            face_verts[:, 2, :] - face_verts[:, 0, :],
        )
    canon /= np.linalg.norm(canon, axis=1)[:, None]
    ones_dot = canon.sum(axis=1)
    canon_sign = np.sign(ones_dot)
    tied = np.abs(ones_dot) <= 1e-12
    for k in range(d):
        use = tied & (canon_sign == 0) & (np.abs(canon[:, k]) > 1e-12)
        canon_sign[use] = np.sign(canon[use, k])
    canon_sign[canon_sign == 0] = 1.0
    face_normals = canon * canon_sign[:, None]

    norms = np.linalg.norm(grads, axis=2)
    outward = -grads / norms[:, :, None]
    signs = np.zeros((mesh.n_simplices, d + 1))
    for local in range(d + 1):
        f = mesh.simplex_faces[:, local]
        agree = np.einsum("ij,ij->i", outward[:, local, :], face_normals[f])
        signs[:, local] = np.where(agree >= 0, 1.0, -1.0)

    return GeometryCache(
        volumes=volumes,
        grads=grads,
        face_areas=face_areas,
        face_normals=face_normals,
        face_midpoints=face_mid,
        orientation_signs=signs,
    )


def validate(mesh: SimplexMesh, cfg: MeshConfig | None = None) -> ValidationReport:
    """Quality and consistency report; never raises."""
    cfg = cfg or MeshConfig()
    msgs = []
    d = mesh.dim

    e = mesh.edges()
    elens = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    min_edge = float(elens.min()) if len(elens) else 0.0
    if min_edge < cfg.ell_min:
        msgs.append(f"min edge length {min_edge:.3g} below floor {cfg.ell_min:.3g}")

    vols = _signed_volumes(mesh.vertices, mesh.simplices)
    n_flipped = int(np.sum(vols <= 0))
    if n_flipped:
        msgs.append(f"{n_flipped} simplices with non-positive orientation")

    min_angle = 180.0
    verts = mesh.vertices[mesh.simplices]
    if d == 2:
        for i in range(3):
            a = verts[:, i]
            b = verts[:, (i + 1) % 3] - a
            c = verts[:, (i + 2) % 3] - a
            cosang = np.einsum("ij,ij->i", b, c) / (
                np.linalg.norm(b, axis=1) * np.linalg.norm(c, axis=1)
            )
            ang = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
            min_angle = min(min_angle, float(ang.min()))
    else:
        # Dihedral angle along each edge: angle between the two faces not
        # containing the opposite edge, via face normals.
        for s in range(mesh.n_simplices):
            vs = verts[s]
            for i in range(4):
                for j in range(i + 1, 4):
                    rest = [k for k in range(4) if k not in (i, j)]
                    n1 = np.cross(vs[rest[0]] - vs[i], vs[j] - vs[i])
                    n2 = np.cross(vs[j] - vs[i], vs[rest[1]] - vs[i])
                    nn = np.linalg.norm(n1) * np.linalg.norm(n2)
                    if nn == 0:
                        continue
                    ang = math.degrees(math.acos(np.clip(np.dot(n1, n2) / nn, -1, 1)))
                    min_angle = min(min_angle, ang)
    if min_angle < cfg.min_angle_deg:
        msgs.append(f"min angle {min_angle:.3g} deg below floor {cfg.min_angle_deg}")

    counts = np.zeros(mesh.n_faces, dtype=int)
    for s in range(mesh.n_simplices):
        for f in mesh.simplex_faces[s]:
            counts[f] += 1
    n_orphan = int(np.sum(counts == 0))
    if n_orphan:
        msgs.append(f"{n_orphan} orphan faces")

    orientation_ok = True
    lip_min = math.inf
    lip_max = 0.0
    try:
        cache = compute_geometry(mesh, cfg.volume_floor)
        g = np.linalg.norm(cache.grads, axis=2)
        lip_min = float(g.min())
        lip_max = float(g.max())
        interior = ~mesh.boundary_flags
        for f in np.nonzero(interior)[0]:
            sa, sb = mesh.face_simplices[f]
            la = int(np.where(mesh.simplex_faces[sa] == f)[0][0])
            lb = int(np.where(mesh.simplex_faces[sb] == f)[0][0])
            na = -cache.grads[sa, la] / np.linalg.norm(cache.grads[sa, la])
            nb = -cache.grads[sb, lb] / np.linalg.norm(cache.grads[sb, lb])
            va = cache.orientation_signs[sa, la] * na
            vb = cache.orientation_signs[sb, lb] * nb
            if np.linalg.norm(va - vb) > 1e-9:
                orientation_ok = False
                msgs.append(f"inconsistent orientation across face {f}")
                break
    except DegenerateSimplex as exc:
        msgs.append(str(exc))
        orientation_ok = n_flipped == 0

    ok = (
        min_edge >= cfg.ell_min
        and min_angle >= cfg.min_angle_deg
        and n_flipped == 0
        and n_orphan == 0
        and orientation_ok
    )
    return ValidationReport(
        ok=ok,
        min_edge_length=min_edge,
        min_angle_deg=min_angle,
        n_flipped=n_flipped,
        n_orphan_faces=n_orphan,
        orientation_consistent=orientation_ok,
        lipschitz_grad_min=lip_min,
        lipschitz_grad_max=lip_max,
        messages=msgs,
    )


# ---------------------------------------------------------------------------
# Point location
# ---------------------------------------------------------------------------


class SimplexLocator:
    """Maps query points to containing simplices.

    2D meshes use matplotlib's trapezoid-map trifinder; 3D falls back to a
    bucket grid over simplex bounding boxes.
    """

    def __init__(self, mesh: SimplexMesh, tau_bary: float = 1e-9):
        self.mesh = mesh
        self.tau_bary = tau_bary
        self._finder = None
        if mesh.dim == 2:
            from matplotlib.tri import Triangulation

            tri = Triangulation(
                mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.simplices
            )
            self._finder = tri.get_trifinder()
        else:
            self._grid: dict = {}
            lo = mesh.vertices.min(axis=0)
            hi = mesh.vertices.max(axis=0)
            self._lo = lo
            ncell = max(1, int(round(len(mesh.simplices) ** (1 / 3))))
            self._cell = (hi - lo).max() / ncell + 1e-300
            for s in range(mesh.n_simplices):
                vs = mesh.vertices[mesh.simplices[s]]
                cl = np.floor((vs.min(axis=0) - lo) / self._cell).astype(int)
                ch = np.floor((vs.max(axis=0) - lo) / self._cell).astype(int)
                for i in range(cl[0], ch[0] + 1):
                    for j in range(cl[1], ch[1] + 1):
                        for k in range(cl[2], ch[2] + 1):
                            self._grid.setdefault((i, j, k), []).append(s)

    def locate(self, points) -> np.ndarray:
        """Simplex index per point, -1 where outside the mesh."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.mesh.dim == 2:
            out = np.asarray(self._finder(pts[:, 0], pts[:, 1]), dtype=np.int64)
            miss = out < 0
            if np.any(miss):
                out[miss] = self._locate_slow(pts[miss])
            return out
        res = np.full(len(pts), -1, dtype=np.int64)
        for i, p in enumerate(pts):
            cellidx = tuple(np.floor((p - self._lo) / self._cell).astype(int))
            for s in self._grid.get(cellidx, ()):
                try:
                    barycentric_coords(self.mesh, s, p, self.tau_bary)
                    res[i] = s
                    break
                except OutsideSimplex:
                    continue
        return res

    def _locate_slow(self, pts) -> np.ndarray:
        """Tolerant fallback for points on or just outside element borders."""
        res = np.full(len(pts), -1, dtype=np.int64)
        for i, p in enumerate(pts):
            for s in range(self.mesh.n_simplices):
                try:
                    barycentric_coords(self.mesh, s, p, self.tau_bary)
                    res[i] = s
                    break
                except OutsideSimplex:
                    continue
        return res


# ---------------------------------------------------------------------------
# OFF I/O
# ---------------------------------------------------------------------------


def save_off(mesh: SimplexMesh, path) -> None:
    """Write the mesh as OFF text with deterministic 17-digit decimals."""
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_simplices} 0\n")
        for v in mesh.vertices:
            coords = list(v) + [0.0] * (3 - mesh.dim)
            fh.write(" ".join(f"{c:.17g}" for c in coords) + "\n")
        for s in mesh.simplices:
            fh.write(f"{len(s)} " + " ".join(str(int(i)) for i in s) + "\n")


def load_off(path, *, normalize: bool = True) -> SimplexMesh:
    """Read an OFF mesh; accepts triangle and tetrahedron cells.

    With ``normalize`` the vertices are rescaled so the bounding box has a
    maximum extent of 1, which makes the package tolerances scale-free.
    """
    with open(path) as fh:
        tokens: list = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise DegenerateInput("missing OFF header")
    nv, nc = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(
        [[float(tokens[pos + 3 * i + k]) for k in range(3)] for i in range(nv)]
    )
    pos += 3 * nv
    cells = []
    size = None
    for _ in range(nc):
        cnt = int(tokens[pos])
        if cnt not in (3, 4):
            raise DegenerateInput(f"unsupported cell size {cnt}")
        if size is None:
            size = cnt
        elif size != cnt:
            raise DegenerateInput("mixed cell sizes")
        cells.append([int(tokens[pos + 1 + k]) for k in range(cnt)])
        pos += 1 + cnt
    cells_arr = np.asarray(cells, dtype=np.int64)
    if size == 3:
        if np.max(np.abs(verts[:, 2])) > 1e-12 * max(1.0, np.abs(verts).max()):
            raise DegenerateInput("triangle cells with non-planar vertices")
        verts = verts[:, :2]
    if normalize:
        lo = verts.min(axis=0)
        extent = (verts.max(axis=0) - lo).max()
        if extent > 0:
            verts = (verts - lo) / extent
    return build_mesh(verts, cells_arr)
