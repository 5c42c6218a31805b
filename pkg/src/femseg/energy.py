"""Assembly and evaluation of the discrete label energies.

Three flavors share one bilinear saddle structure  min_u max_w  <c, u> +
<w, K u>  plus separable constraint sets:

* ``p1`` (non-metric): vertex labelings x plus per-simplex transition masses
  T[s, i, j] in R^d_{>=0} (the diagonal T[s, i, i] holds the mass staying at
  label i).  Free multipliers (lambda, theta) enforce the two mass-balance
  equations that pair the componentwise positive parts of the hat gradients
  with outgoing/incoming transition mass; an explicit dual q in W^{ij} prices
  the regularizer |s| * ||T^{ij} - T^{ji}||_{W^{ij}}.
* ``p1-metric``: vertex labelings x with per-simplex dual vectors
  lambda[s, i] constrained by lambda^i - lambda^j in W^{ij}; only valid for
  metric transition tables.
* ``rt``: per-simplex labelings x with flux duals lambda per interior face;
  auxiliary vectors y[s, face, pair] price transitions, coupled to lambda at
  the face midpoints.  Boundary faces carry no unknowns.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ShapeMismatch, UnsupportedShape
from .fem import gradient_split, p1_gradients_all
from .mesh import GeometryCache, SimplexMesh
from .shapes import Shape, WulffTable, shape_from_dict

FLAVORS = ("p1", "p1-metric", "rt")


def label_pairs(m: int):
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


@dataclass
class Problem:
    flavor: str
    mesh: SimplexMesh
    cache: GeometryCache
    m: int
    wulff: WulffTable
    costs: np.ndarray            # (V, m) for P1 flavors, (S, m) for RT
    K: sp.csr_matrix             # dual rows x primal cols
    c: np.ndarray                # linear primal cost
    layout: dict                 # block name -> (offset, shape)
    interior_faces: np.ndarray | None = None

    @property
    def n_primal(self) -> int:
        return self.K.shape[1]

    @property
    def n_dual(self) -> int:
        return self.K.shape[0]

    def block(self, state: np.ndarray, name: str) -> np.ndarray:
        off, shape = self.layout[name]
        size = int(np.prod(shape))
        return state[off : off + size].reshape(shape)

    def pair_shapes(self) -> list:
        return [self.wulff.get(i + 1, j + 1) for (i, j) in label_pairs(self.m)]


@dataclass
class PrimalDualState:
    primal: np.ndarray
    dual: np.ndarray

    def copy(self) -> "PrimalDualState":
        return PrimalDualState(self.primal.copy(), self.dual.copy())


def _coo(rows, cols, vals, shape) -> sp.csr_matrix:
    rows = np.concatenate([np.asarray(r).ravel() for r in rows])
    cols = np.concatenate([np.asarray(c).ravel() for c in cols])
    vals = np.concatenate([np.asarray(v, dtype=float).ravel() for v in vals])
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def assemble(
    mesh: SimplexMesh,
    cache: GeometryCache,
    costs: np.ndarray,
    wulff: WulffTable,
    flavor: str = "p1",
) -> Problem:
    """Build the bilinear operator and cost vector for one flavor."""
    if flavor not in FLAVORS:
        raise ShapeMismatch(f"unknown flavor {flavor!r}")
    m = wulff.m
    costs = np.asarray(costs, dtype=float)
    V, S, d = mesh.n_vertices, mesh.n_simplices, mesh.dim
    if flavor in ("p1", "p1-metric") and costs.shape != (V, m):
        raise ShapeMismatch(f"vertex costs must be {(V, m)}, got {costs.shape}")
    if flavor == "rt" and costs.shape != (S, m):
        raise ShapeMismatch(f"simplex costs must be {(S, m)}, got {costs.shape}")

    if flavor == "p1":
        return _assemble_p1_nonmetric(mesh, cache, costs, wulff)
    if flavor == "p1-metric":
        return _assemble_p1_metric(mesh, cache, costs, wulff)
    return _assemble_rt(mesh, cache, costs, wulff)


def _assemble_p1_nonmetric(mesh, cache, costs, wulff):
    m, V, S, d = wulff.m, mesh.n_vertices, mesh.n_simplices, mesh.dim
    pairs = label_pairs(m)
    P = len(pairs)
    jpos, jneg = gradient_split(cache)

    n_x = V * m
    n_T = S * m * m * d
    n_primal = n_x + n_T
    n_lam = S * m * d
    n_dual = 2 * n_lam + S * P * d

    def ix(v, i):
        return v * m + i

    def iT(s, i, j, r):
        return n_x + ((s * m + i) * m + j) * d + r

    def ilam(s, i, r):
        return (s * m + i) * d + r

    def ith(s, i, r):
        return n_lam + (s * m + i) * d + r

    def iq(s, p, r):
        return 2 * n_lam + (s * P + p) * d + r

    rows, cols, vals = [], [], []
    s_arr = np.arange(S)
    for i in range(m):
        for r in range(d):
            lam_rows = ilam(s_arr, i, r)
            th_rows = ith(s_arr, i, r)
            for local in range(d + 1):
                xcols = ix(mesh.simplices[:, local], i)
                rows.append(lam_rows)
                cols.append(xcols)
                vals.append(jpos[:, local, r])
                rows.append(th_rows)
                cols.append(xcols)
                vals.append(jneg[:, local, r])
            for j in range(m):
                rows.append(lam_rows)
                cols.append(iT(s_arr, i, j, r))
                vals.append(np.full(S, -1.0))
                rows.append(th_rows)
                cols.append(iT(s_arr, j, i, r))
                vals.append(np.full(S, -1.0))
    for p, (i, j) in enumerate(pairs):
        for r in range(d):
            qrows = iq(s_arr, p, r)
            rows.append(qrows)
            cols.append(iT(s_arr, i, j, r))
            vals.append(cache.volumes)
            rows.append(qrows)
            cols.append(iT(s_arr, j, i, r))
            vals.append(-cache.volumes)

    K = _coo(rows, cols, vals, (n_dual, n_primal))
    c = np.zeros(n_primal)
    c[:n_x] = costs.ravel()
    layout = {
        "x": (0, (V, m)),
        "T": (n_x, (S, m, m, d)),
        "lambda": (0, (S, m, d)),
        "theta": (n_lam, (S, m, d)),
        "q": (2 * n_lam, (S, P, d)),
    }
    return Problem("p1", mesh, cache, m, wulff, costs, K, c, layout)


def _assemble_p1_metric(mesh, cache, costs, wulff):
    m, V, S, d = wulff.m, mesh.n_vertices, mesh.n_simplices, mesh.dim
    n_primal = V * m
    n_dual = S * m * d
    s_arr = np.arange(S)
    rows, cols, vals = [], [], []
    for i in range(m):
        for r in range(d):
            lam_rows = (s_arr * m + i) * d + r
            for local in range(d + 1):
                rows.append(lam_rows)
                cols.append(mesh.simplices[:, local] * m + i)
                vals.append(cache.volumes * cache.grads[:, local, r])
    K = _coo(rows, cols, vals, (n_dual, n_primal))
    layout = {"x": (0, (V, m)), "lambda": (0, (S, m, d))}
    return Problem("p1-metric", mesh, cache, m, wulff, costs, K, costs.ravel().copy(), layout)


def _assemble_rt(mesh, cache, costs, wulff):
    m, S, d = wulff.m, mesh.n_simplices, mesh.dim
    pairs = label_pairs(m)
    P = len(pairs)
    interior = np.nonzero(~mesh.boundary_flags)[0]
    F = len(interior)
    face_slot = np.full(mesh.n_faces, -1, dtype=np.int64)
    face_slot[interior] = np.arange(F)

    n_x = S * m
    n_y = S * (d + 1) * P * d
    n_primal = n_x + n_y
    n_dual = F * m

    def iy(s, fl, p, r):
        return n_x + ((s * (d + 1) + fl) * P + p) * d + r

    rows, cols, vals = [], [], []
    # per simplex, per local face: the lambda coefficient row couples to x
    # and to every y vector of the same simplex
    for local in range(d + 1):
        f = mesh.simplex_faces[:, local]
        slot = face_slot[f]
        live = slot >= 0
        s_live = np.nonzero(live)[0]
        fslot = slot[live]
        si = cache.orientation_signs[s_live, local]
        area = cache.face_areas[f[live]]
        vols = cache.volumes[s_live]
        vtx = mesh.vertices[mesh.simplices[s_live, local]]  # opposite vertex
        base = area * si
        for i in range(m):
            lam_rows = fslot * m + i
            rows.append(lam_rows)
            cols.append(s_live * m + i)
            vals.append(base)
            for fl in range(d + 1):
                zbar = cache.face_midpoints[mesh.simplex_faces[s_live, fl]]
                w = zbar - vtx  # (n, d)
                coef = base / (vols * d)
                for p, (a, b) in enumerate(pairs):
                    if a == i:
                        sign = -1.0
                    elif b == i:
                        sign = 1.0
                    else:
                        continue
                    for r in range(d):
                        rows.append(lam_rows)
                        cols.append(iy(s_live, fl, p, r))
                        vals.append(sign * coef * w[:, r])

    K = _coo(rows, cols, vals, (n_dual, n_primal))
    c = np.zeros(n_primal)
    c[:n_x] = costs.ravel()
    layout = {
        "x": (0, (S, m)),
        "y": (n_x, (S, d + 1, P, d)),
        "lambda": (0, (F, m)),
    }
    return Problem("rt", mesh, cache, m, wulff, costs, K, c, layout, interior_faces=interior)


def initial_state(problem: Problem) -> PrimalDualState:
    """Uniform labeling, all other variables zero."""
    primal = np.zeros(problem.n_primal)
    x = problem.block(primal, "x")
    x[:] = 1.0 / problem.m
    return PrimalDualState(primal, np.zeros(problem.n_dual))


# ---------------------------------------------------------------------------
# Energy evaluation
# ---------------------------------------------------------------------------


def _support_batch(shape: Shape, Y: np.ndarray) -> np.ndarray:
    """Vectorized support over rows of Y."""
    from . import shapes as sh

    if isinstance(shape, sh.Ball):
        return shape.radius * np.linalg.norm(Y, axis=-1)
    if isinstance(shape, sh.Segment):
        return shape.half_length * np.abs(Y @ shape.direction)
    if isinstance(shape, sh.Box):
        return np.sum(np.maximum(shape.lo * Y, shape.hi * Y), axis=-1)
    if isinstance(shape, sh.MinkowskiSum):
        return sum(_support_batch(c, Y) for c in shape.children)
    raise UnsupportedShape(f"support of {type(shape).__name__} not available")


def regularizer_value(problem: Problem, state: PrimalDualState) -> float:
    m = problem.m
    if problem.flavor == "p1":
        T = problem.block(state.primal, "T")
        total = 0.0
        for (i, j) in label_pairs(m):
            diff = T[:, i, j, :] - T[:, j, i, :]
            total += float(
                np.dot(problem.cache.volumes, _support_batch(problem.wulff.get(i + 1, j + 1), diff))
            )
        return total
    if problem.flavor == "p1-metric":
        x = problem.block(state.primal, "x")
        grads = p1_gradients_all(problem.cache, problem.mesh, x)  # (S, m, d)
        return _metric_transport_cost(problem, grads)
    # rt
    y = problem.block(state.primal, "y")
    total = 0.0
    for p, (i, j) in enumerate(label_pairs(m)):
        total += float(np.sum(_support_batch(problem.wulff.get(i + 1, j + 1), y[:, :, p, :])))
    return total


def _metric_transport_cost(problem: Problem, grads: np.ndarray) -> float:
    """Direct pairwise transport evaluation of the metric regularizer.

    Exact for two labels; for more labels it nets gradients greedily in
    lexicographic pair order, which is exact whenever at most two labels are
    active per simplex (the metric flavor's contract assumes a metric table,
    so routing through third labels never pays).
    """
    S, m, d = grads.shape
    resid = grads.copy()
    total = np.zeros(S)
    for (i, j) in label_pairs(m):
        take_pos = np.minimum(np.maximum(resid[:, i, :], 0), np.maximum(-resid[:, j, :], 0))
        take_neg = np.minimum(np.maximum(-resid[:, i, :], 0), np.maximum(resid[:, j, :], 0))
        flow = take_pos - take_neg
        resid[:, i, :] -= flow
        resid[:, j, :] += flow
        total += _support_batch(problem.wulff.get(i + 1, j + 1), flow)
    return float(np.dot(problem.cache.volumes, total))


def balance_residuals(problem: Problem, state: PrimalDualState):
    """Equality-constraint residuals enforced by the free multipliers."""
    if problem.flavor == "p1":
        m, d = problem.m, problem.mesh.dim
        x = problem.block(state.primal, "x")
        T = problem.block(state.primal, "T")
        jpos, jneg = gradient_split(problem.cache)
        xs = x[problem.mesh.simplices]  # (S, d+1, m)
        r_lam = np.einsum("svm,svd->smd", xs, jpos) - T.sum(axis=2)
        r_th = np.einsum("svm,svd->smd", xs, jneg) - T.sum(axis=1)
        return r_lam, r_th
    if problem.flavor == "rt":
        Ku = problem.K @ state.primal
        return (Ku.reshape(-1, problem.m),)
    return ()


def primal_energy(problem: Problem, state: PrimalDualState):
    """Data + regularizer value plus a feasibility report."""
    x = problem.block(state.primal, "x")
    data = float(np.sum(problem.costs * x))
    reg = regularizer_value(problem, state)
    report = {
        "simplex_violation": float(
            max(np.abs(x.sum(axis=1) - 1.0).max(), 0.0) if x.size else 0.0
        ),
        "negativity": float(max(-x.min(), 0.0) if x.size else 0.0),
    }
    if problem.flavor == "p1":
        T = problem.block(state.primal, "T")
        report["negativity"] = float(max(report["negativity"], -min(T.min(), 0.0)))
        r_lam, r_th = balance_residuals(problem, state)
        report["balance_lambda"] = float(np.abs(r_lam).max()) if r_lam.size else 0.0
        report["balance_theta"] = float(np.abs(r_th).max()) if r_th.size else 0.0
    elif problem.flavor == "rt":
        (r,) = balance_residuals(problem, state)
        report["balance_lambda"] = float(np.abs(r).max()) if r.size else 0.0
    return data + reg, report


def check_rt_constraints(
    problem: Problem,
    state: PrimalDualState,
    n_interior: int = 10,
    seed: int = 0,
    tol: float = 1e-9,
):
    """Transition-shape violation of the reconstructed flux field.

    Evaluates ``lambda^i - lambda^j`` at all face midpoints and at random
    points of the midpoint convex hull (where values are convex combinations
    of the midpoint values, so the midpoint bound is sufficient).  Returns
    ``(midpoint_violation, interior_violation, ok)``.
    """
    if problem.flavor != "rt":
        raise ShapeMismatch("RT constraint check requires the rt flavor")
    mesh, cache, m = problem.mesh, problem.cache, problem.m
    S, d = mesh.n_simplices, mesh.dim
    lam = problem.block(state.dual, "lambda")  # (F_int, m)
    coeff = np.zeros((mesh.n_faces, m))
    coeff[problem.interior_faces] = lam

    # midpoint values of each label field, per simplex: (S, d+1 midpoints, m, d)
    vals = np.zeros((S, d + 1, m, d))
    for local in range(d + 1):
        f = mesh.simplex_faces[:, local]
        si = cache.orientation_signs[:, local]
        scale = cache.face_areas[f] / (cache.volumes * d)
        vtx = mesh.vertices[mesh.simplices[:, local]]
        for mid in range(d + 1):
            z = cache.face_midpoints[mesh.simplex_faces[:, mid]]
            basis = (si * scale)[:, None] * (z - vtx)  # (S, d)
            vals[:, mid, :, :] += coeff[f][:, :, None] * basis[:, None, :]

    rng = np.random.default_rng(seed)
    wts = rng.dirichlet(np.ones(d + 1), size=(S, n_interior))  # (S, n, d+1)

    mid_viol = 0.0
    int_viol = 0.0
    for (i, j) in label_pairs(m):
        shape = problem.wulff.get(i + 1, j + 1)
        diff = vals[:, :, i, :] - vals[:, :, j, :]  # (S, d+1, d)
        flat = diff.reshape(-1, d)
        proj = _project_batch(shape, flat)
        mid_viol = max(mid_viol, float(np.linalg.norm(flat - proj, axis=1).max(initial=0.0)))
        interior = np.einsum("snk,skd->snd", wts, diff).reshape(-1, d)
        proj_i = _project_batch(shape, interior)
        int_viol = max(
            int_viol, float(np.linalg.norm(interior - proj_i, axis=1).max(initial=0.0))
        )
    return mid_viol, int_viol, int_viol <= mid_viol + tol


def _project_batch(shape: Shape, Y: np.ndarray) -> np.ndarray:
    """Vectorized Euclidean projection over rows of Y."""
    from . import shapes as sh

    if isinstance(shape, sh.Ball):
        n = np.linalg.norm(Y, axis=1)
        scale = np.ones_like(n)
        out = np.where(n > shape.radius)
        if shape.radius == 0.0:
            return np.zeros_like(Y)
        scale[out] = shape.radius / n[out]
        return Y * scale[:, None]
    if isinstance(shape, sh.Box):
        return np.clip(Y, shape.lo, shape.hi)
    if isinstance(shape, sh.Segment):
        t = np.clip(Y @ shape.direction, -shape.half_length, shape.half_length)
        return t[:, None] * shape.direction[None, :]
    if isinstance(shape, sh.HalfSpaceCut):
        excess = np.maximum(Y @ shape.normal - shape.offset, 0.0)
        return Y - excess[:, None] * shape.normal[None, :]
    if isinstance(shape, sh.MinkowskiSum):
        balls = [c for c in shape.children if isinstance(c, sh.Ball)]
        rest = [c for c in shape.children if not isinstance(c, sh.Ball)]
        kappa = sum(b.radius for b in balls)
        if not rest:
            return _project_batch(sh.Ball(kappa), Y)
        if len(rest) == 1:
            base = _project_batch(rest[0], Y)
            if kappa == 0:
                return base
            gap = Y - base
            dist = np.linalg.norm(gap, axis=1)
            inside = dist <= kappa
            safe = np.where(dist > 0, dist, 1.0)
            out = base + gap * (kappa / safe)[:, None]
            out[inside] = Y[inside]
            return out
        parts = rest + ([sh.Ball(kappa)] if kappa > 0 else [])
        a = [np.zeros_like(Y) for _ in parts]
        prev = np.zeros_like(Y)
        for _ in range(200):
            for k, c in enumerate(parts):
                others = sum(a[t] for t in range(len(parts)) if t != k)
                a[k] = _project_batch(c, Y - others)
            cur = sum(a)
            if np.abs(cur - prev).max() < 1e-13:
                break
            prev = cur
        return sum(a)
    if isinstance(shape, sh.Intersection):
        x = Y.copy()
        corrections = [np.zeros_like(Y) for _ in shape.children]
        for _ in range(200):
            start = x.copy()
            for k, c in enumerate(shape.children):
                z = x + corrections[k]
                x = _project_batch(c, z)
                corrections[k] = z - x
            if np.abs(x - start).max() < 1e-12:
                break
        return x
    raise UnsupportedShape(f"cannot batch-project {type(shape).__name__}")


def rounded_energy(problem: Problem, labels: np.ndarray) -> float:
    """Discrete energy of a hard labeling (1-based labels).

    P1 flavors take per-vertex labels, RT per-simplex labels.  Transition
    mass is netted pairwise in lexicographic order, which prices every
    simplex with at most two active labels exactly.
    """
    labels = np.asarray(labels, dtype=np.int64)
    m = problem.m
    mesh, cache = problem.mesh, problem.cache
    onehot = np.zeros((len(labels), m))
    onehot[np.arange(len(labels)), labels - 1] = 1.0

    if problem.flavor in ("p1", "p1-metric"):
        data = float(np.sum(problem.costs[np.arange(len(labels)), labels - 1]))
        grads = p1_gradients_all(cache, mesh, onehot)  # (S, m, d)
        return data + _metric_transport_cost(problem, grads)

    data = float(np.sum(problem.costs[np.arange(len(labels)), labels - 1]))
    total = 0.0
    interior = np.nonzero(~mesh.boundary_flags)[0]
    for f in interior:
        sa, sb = mesh.face_simplices[f]
        la, lb = labels[sa], labels[sb]
        if la == lb:
            continue
        i, j = min(la, lb), max(la, lb)
        shape = problem.wulff.get(i, j)
        area = cache.face_areas[f]
        normal = cache.face_normals[f]
        total += area * shape.support(normal)
    return data + total


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

SNAPSHOT_VERSION = 1


def _encode(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    kind = "<f8" if arr.dtype.kind == "f" else "<i8"
    return {
        "dtype": kind,
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype(kind).tobytes()).decode("ascii"),
    }


def _decode(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype=obj["dtype"]).reshape(obj["shape"]).copy()


def save_snapshot(problem: Problem, state: PrimalDualState | None, path) -> None:
    doc = {
        "version": SNAPSHOT_VERSION,
        "flavor": problem.flavor,
        "m": problem.m,
        "dim": problem.mesh.dim,
        "vertices": _encode(problem.mesh.vertices),
        "simplices": _encode(problem.mesh.simplices),
        "costs": _encode(problem.costs),
        "wulff": json.loads(problem.wulff.to_json()),
    }
    if state is not None:
        doc["primal"] = _encode(state.primal)
        doc["dual"] = _encode(state.dual)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_snapshot(path):
    """Rebuild (problem, state) from a snapshot file; state may be None."""
    from .mesh import build_mesh, compute_geometry

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ShapeMismatch(f"unsupported snapshot version {doc.get('version')}")
    mesh = build_mesh(_decode(doc["vertices"]), _decode(doc["simplices"]))
    cache = compute_geometry(mesh)
    wulff = WulffTable(
        doc["m"],
        {
            tuple(int(t) for t in key.split(",")): shape_from_dict(val)
            for key, val in doc["wulff"].items()
        },
    )
    problem = assemble(mesh, cache, _decode(doc["costs"]), wulff, doc["flavor"])
    state = None
    if "primal" in doc:
        state = PrimalDualState(_decode(doc["primal"]), _decode(doc["dual"]))
    return problem, state
