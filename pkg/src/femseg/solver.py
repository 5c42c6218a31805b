"""Preconditioned primal-dual (PDHG) solver for assembled problems.

One loop serves all flavors; they differ only in their primal/dual proximal
blocks.  Diagonal preconditioning computes per-unknown and per-constraint
steps from the absolute row/column sums of the bilinear operator; steps are
made uniform inside every coupled prox block (a smaller step keeps the
convergence condition valid).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .energy import (
    PrimalDualState,
    Problem,
    _project_batch,
    balance_residuals,
    initial_state,
    label_pairs,
    primal_energy,
    rounded_energy,
)
from .errors import Diverged
from .shapes import project_simplex


@dataclass
class SolverConfig:
    max_iters: int = 10000
    check_every: int = 50
    tol: float = 1e-6
    alpha: float = 1.0              # preconditioning exponent in [0, 2]
    theta: float = 1.0              # over-relaxation
    preconditioned: bool = True     # False: plain global steps 1/||K||
    diverge_threshold: float = 1e12
    dykstra_cycles: int = 30        # metric dual prox accuracy
    dykstra_tol: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError("alpha must lie in [0, 2]")


@dataclass
class Trace:
    iterations: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    rounded_energies: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    converged: bool = False
    n_iters: int = 0

    def rows(self):
        for k in range(len(self.iterations)):
            yield (
                self.iterations[k],
                self.energies[k],
                self.rounded_energies[k],
                self.residuals[k],
                self.changes[k],
                self.wall_times[k],
            )

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,energy,rounded_energy,residual,change,wall_time\n")
            for row in self.rows():
                fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def precondition(problem: Problem, alpha: float = 1.0):
    """Diagonal steps: tau_j = 1/sum_i |K_ij|^(2-alpha), sigma_i = 1/sum_j |K_ij|^alpha."""
    A = sp.csr_matrix(
        (np.abs(problem.K.data), problem.K.indices, problem.K.indptr),
        shape=problem.K.shape,
    )
    Apow_s = A.power(alpha) if alpha != 1.0 else A
    Apow_t = A.power(2.0 - alpha) if alpha != 1.0 else A
    col = np.asarray(Apow_t.sum(axis=0)).ravel()
    row = np.asarray(Apow_s.sum(axis=1)).ravel()
    tau = np.where(col > 0, 1.0 / np.where(col > 0, col, 1.0), 1.0)
    sigma = np.where(row > 0, 1.0 / np.where(row > 0, row, 1.0), 1.0)
    return _uniformize_blocks(problem, tau, sigma)


def _blockmin(arr: np.ndarray, block: int) -> np.ndarray:
    view = arr.reshape(-1, block)
    mins = view.min(axis=1)
    return np.repeat(mins, block)


def _uniformize_blocks(problem: Problem, tau, sigma):
    """Equal steps inside every coupled prox block."""
    m, d = problem.m, problem.mesh.dim
    P = len(label_pairs(m))
    if problem.flavor == "p1":
        off, shape = problem.layout["x"]
        n_x = int(np.prod(shape))
        tau[off : off + n_x] = _blockmin(tau[off : off + n_x], m)
        qoff, qshape = problem.layout["q"]
        n_q = int(np.prod(qshape))
        sigma[qoff : qoff + n_q] = _blockmin(sigma[qoff : qoff + n_q], d)
    elif problem.flavor == "p1-metric":
        tau[:] = _blockmin(tau, m)
        sigma[:] = _blockmin(sigma, m * d)
    else:  # rt
        off, shape = problem.layout["x"]
        n_x = int(np.prod(shape))
        tau[off : off + n_x] = _blockmin(tau[off : off + n_x], m)
        yoff, yshape = problem.layout["y"]
        n_y = int(np.prod(yshape))
        tau[yoff : yoff + n_y] = _blockmin(tau[yoff : yoff + n_y], d)
    return tau, sigma


def _global_steps(problem: Problem):
    """Plain steps 1/||K|| from a power iteration, for cross-checking."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(problem.n_primal)
    v /= np.linalg.norm(v)
    Kt = problem.K.T.tocsr()
    norm = 1.0
    for _ in range(50):
        w = problem.K @ v
        v = Kt @ w
        norm = np.linalg.norm(v) ** 0.5
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v /= nv
    step = 0.95 / max(norm, 1e-30)
    return (
        np.full(problem.n_primal, step),
        np.full(problem.n_dual, step),
    )


def _dual_prox(problem: Problem, w: np.ndarray, cfg: SolverConfig) -> None:
    """Project dual blocks onto their constraint sets, in place."""
    m, d = problem.m, problem.mesh.dim
    pairs = label_pairs(m)
    if problem.flavor == "p1":
        q = problem.block(w, "q")  # (S, P, d)
        for p, (i, j) in enumerate(pairs):
            q[:, p, :] = _project_batch(problem.wulff.get(i + 1, j + 1), q[:, p, :])
    elif problem.flavor == "p1-metric":
        lam = problem.block(w, "lambda")  # (S, m, d)
        _dykstra_pairwise(problem, lam, cfg)
    # rt duals are free


def _dykstra_pairwise(problem: Problem, lam: np.ndarray, cfg: SolverConfig) -> None:
    """Batched Dykstra projection of (lambda^1..lambda^m) onto the set
    {lambda^i - lambda^j in W^{ij} for all i < j}, per simplex, in place."""
    pairs = label_pairs(problem.m)
    if len(pairs) == 1:
        i, j = pairs[0]
        diff = lam[:, i, :] - lam[:, j, :]
        proj = _project_batch(problem.wulff.get(i + 1, j + 1), diff)
        corr = 0.5 * (diff - proj)
        lam[:, i, :] -= corr
        lam[:, j, :] += corr
        return
    corrections = np.zeros((len(pairs),) + lam.shape)
    for _ in range(cfg.dykstra_cycles):
        start = lam.copy()
        for p, (i, j) in enumerate(pairs):
            z = lam + corrections[p]
            diff = z[:, i, :] - z[:, j, :]
            proj = _project_batch(problem.wulff.get(i + 1, j + 1), diff)
            corr = 0.5 * (diff - proj)
            newlam = z.copy()
            newlam[:, i, :] -= corr
            newlam[:, j, :] += corr
            corrections[p] = z - newlam
            lam[:] = newlam
        if np.abs(lam - start).max() < cfg.dykstra_tol:
            break


def _primal_prox(problem: Problem, u: np.ndarray, tau: np.ndarray, cfg: SolverConfig) -> None:
    """Proximal step on the primal blocks, in place."""
    x = problem.block(u, "x")
    x[:] = project_simplex(x)
    if problem.flavor == "p1":
        T = problem.block(u, "T")
        np.maximum(T, 0.0, out=T)
    elif problem.flavor == "rt":
        y = problem.block(u, "y")
        yoff, yshape = problem.layout["y"]
        S, d1, P, d = yshape
        tau_y = tau[yoff : yoff + S * d1 * P * d].reshape(S, d1, P, d)[..., 0]
        for p, (i, j) in enumerate(label_pairs(problem.m)):
            shape = problem.wulff.get(i + 1, j + 1)
            block = y[:, :, p, :].reshape(-1, d)
            t = tau_y[:, :, p].reshape(-1, 1)
            # prox of t * support via Moreau: y - t * proj(y / t)
            y[:, :, p, :] = (
                block - t * _project_batch(shape, block / t)
            ).reshape(S, d1, d)


def solve(
    problem: Problem,
    config: SolverConfig | None = None,
    initial: PrimalDualState | None = None,
) -> tuple[PrimalDualState, Trace]:
    """Run PDHG until the stopping tolerance or the iteration cap."""
    cfg = config or SolverConfig()
    if cfg.preconditioned:
        tau, sigma = precondition(problem, cfg.alpha)
    else:
        tau, sigma = _global_steps(problem)

    state = initial.copy() if initial is not None else initial_state(problem)
    u = state.primal.astype(float)
    w = state.dual.astype(float)
    K = problem.K
    Kt = K.T.tocsr()
    c = problem.c

    ubar = u.copy()
    trace = Trace()
    t0 = time.perf_counter()
    u_at_check = u.copy()
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        w += sigma * (K @ ubar)
        _dual_prox(problem, w, cfg)
        u_prev = u.copy()
        u -= tau * (c + Kt @ w)
        _primal_prox(problem, u, tau, cfg)
        ubar = u + cfg.theta * (u - u_prev)

        if it % cfg.check_every == 0 or it == cfg.max_iters:
            st = PrimalDualState(u, w)
            energy, report = primal_energy(problem, st)
            labels = threshold_labels(problem, st)
            r_energy = rounded_energy(problem, labels)
            resid = max(
                report.get("balance_lambda", 0.0), report.get("balance_theta", 0.0)
            )
            denom = max(1.0, float(np.linalg.norm(u)))
            change = float(np.linalg.norm(u - u_at_check)) / (denom * cfg.check_every)
            u_at_check = u.copy()
            trace.iterations.append(it)
            trace.energies.append(float(energy))
            trace.rounded_energies.append(float(r_energy))
            trace.residuals.append(float(resid))
            trace.changes.append(change)
            trace.wall_times.append(time.perf_counter() - t0)
            if not np.isfinite(energy) or abs(energy) > cfg.diverge_threshold:
                raise Diverged(f"energy {energy} at iteration {it}", iteration=it)
            if max(change, resid) < cfg.tol:
                converged = True
                break

    trace.converged = converged
    trace.n_iters = it
    return PrimalDualState(u, w), trace


def solve_rt(
    problem: Problem,
    config: SolverConfig | None = None,
    initial: PrimalDualState | None = None,
):
    """RT-flavored solve; identical scheme, named for symmetry with P1."""
    if problem.flavor != "rt":
        raise ValueError("solve_rt requires an rt problem")
    return solve(problem, config, initial)


def threshold_labels(problem: Problem, state: PrimalDualState) -> np.ndarray:
    """Argmax labeling (1-based); ties break to the lowest label index."""
    x = problem.block(state.primal, "x")
    return np.argmax(x, axis=1).astype(np.int64) + 1
