"""ADMM solvers for the linearized TV problems plus a Tikhonov baseline.

All solvers work on a fixed (jacobian, data mismatch) pair. The four TV
variants share the same structure: a quadratic update of the property
change solved by safeguarded Barzilai-Borwein gradient descent with Armijo
backtracking, a shrinkage update of the splitting variable, and an additive
multiplier update. Anisotropic variants shrink each component (per element
direction or per directed edge) independently; isotropic variants couple
the components of one element (FE) or the edges of one vertex (graph).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .fe_ops import GradientMatrices
from .graph_ops import graph_laplacian_matrix, nonlocal_divergence, nonlocal_gradient
from .mesh import WeightedGraph

SOLVER_KINDS = ("tikhonov", "a-fetv", "i-fetv", "a-gtv", "i-gtv")


@dataclass
class AdmmConfig:
    """Inner-loop configuration.

    ``theta`` defaults to ``lam`` when omitted. ``ls_init`` overrides the
    first gradient step; later steps start from a Barzilai-Borwein estimate
    and are halved by ``ls_shrink`` until the Armijo condition with constant
    ``ls_c1`` holds.
    """

    lam: float = 1e-3
    theta: float = None
    inner_loop: int = 100
    eps1: float = 1e-6
    gd_iters: int = 120
    gd_tol: float = 1e-6
    ls_init: float = None
    ls_shrink: float = 0.5
    ls_c1: float = 1e-4
    ls_window: int = 10

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.theta is not None and self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.inner_loop < 1:
            raise ValueError("inner_loop must be at least 1")
        if self.eps1 <= 0:
            raise ValueError("eps1 must be positive")
        if not 0 < self.ls_shrink < 1:
            raise ValueError("ls_shrink must lie in (0, 1)")
        if not 0 < self.ls_c1 < 1:
            raise ValueError("ls_c1 must lie in (0, 1)")
        if self.ls_window < 1:
            raise ValueError("ls_window must be at least 1")

    @property
    def theta_value(self) -> float:
        return self.lam if self.theta is None else self.theta


@dataclass
class AdmmTrace:
    """Per-iteration diagnostics of one ADMM run.

    ``objective`` is the linearized TV objective at the current iterate;
    ``aug_chain`` holds (pre, post_mu, post_nu) values of the augmented
    splitting objective around each iteration's block updates.
    """

    objective: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    split_residual: list = field(default_factory=list)
    mu_warnings: list = field(default_factory=list)
    aug_chain: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def to_csv(self, path) -> None:
        lines = ["iteration,objective,rel_change,split_residual,mu_warning,aug_pre,aug_post_mu,aug_post_nu"]
        for i in range(self.iterations):
            pre, post_mu, post_nu = self.aug_chain[i]
            lines.append(
                f"{i + 1},{self.objective[i]!r},{self.rel_change[i]!r},"
                f"{self.split_residual[i]!r},{int(self.mu_warnings[i])},"
                f"{pre!r},{post_mu!r},{post_nu!r}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def shrink_scalar(x, t):
    """Soft threshold max(|x|-t, 0) * x/|x| with the 0/0 = 0 convention."""
    arr = np.asarray(x, dtype=float)
    mag = np.abs(arr)
    safe = np.where(mag == 0.0, 1.0, mag)
    out = np.maximum(mag - t, 0.0) * (arr / safe)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def shrink_coupled(components, t):
    """Couple components through s = sqrt(sum of squares); 0/0 = 0."""
    arrs = [np.asarray(c, dtype=float) for c in components]
    s = np.sqrt(sum(a * a for a in arrs))
    safe = np.where(s == 0.0, 1.0, s)
    factor = np.maximum(s - t, 0.0) / safe
    out = tuple(a * factor for a in arrs)
    if all(np.isscalar(c) or np.asarray(c).ndim == 0 for c in components):
        return tuple(float(o) for o in out)
    return out


def _shrink_grouped(values: np.ndarray, groups: np.ndarray, n_groups: int, t: float) -> np.ndarray:
    """Couple all entries sharing a group id (per-vertex isotropic shrink)."""
    s = np.sqrt(np.bincount(groups, weights=values * values, minlength=n_groups))
    safe = np.where(s == 0.0, 1.0, s)
    factor = np.maximum(s - t, 0.0) / safe
    return values * factor[groups]


def solve_mu_subproblem(jac, dphi, quad_terms, theta, config: AdmmConfig, x0=None, scaling=None):
    """Approximately minimize the quadratic property-change subproblem.

    The objective is 0.5*||J x - dphi||^2 + (theta/2) x'Qx - theta*c'x with
    a symmetric positive semidefinite Q supplied as ``quad_terms = (apply_q,
    c)`` (either may be None). Descent steps follow the (optionally
    diagonally scaled) negative gradient with a Barzilai-Borwein initial
    step and backtracking until the Armijo condition holds against the
    worst objective of the last ``ls_window`` iterations; with
    ``ls_window=1`` the objective is non-increasing across accepted steps.
    Iterations stop once the gradient norm falls below ``gd_tol`` relative
    to the right-hand side, or at ``gd_iters``.

    Returns (x, info) with info keys iterations, grad_norm, and
    line_search_failed (step underflow: best iterate returned).
    """
    jac = np.asarray(jac, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    n = jac.shape[1]
    apply_q, lin = quad_terms if quad_terms is not None else (None, None)

    def apply_h(v):
        out = jac.T @ (jac @ v)
        if theta > 0 and apply_q is not None:
            out = out + theta * apply_q(v)
        return out

    rhs = jac.T @ dphi
    if theta > 0 and lin is not None:
        rhs = rhs + theta * lin

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.any():
        hx = apply_h(x)
        g = hx - rhs
        f = 0.5 * float(x @ hx) - float(rhs @ x)
    else:
        g = -rhs
        f = 0.0
    inv_scale = None
    if scaling is not None:
        inv_scale = 1.0 / np.maximum(np.asarray(scaling, dtype=float), 1e-300)
    tol = config.gd_tol * max(float(np.linalg.norm(rhs)), 1e-300)
    history = [f]
    bb = config.ls_init
    failed = False
    it = 0
    for it in range(config.gd_iters):
        if float(np.linalg.norm(g)) <= tol:
            break
        d = g if inv_scale is None else inv_scale * g
        hd = apply_h(d)
        gd = float(g @ d)
        dhd = float(d @ hd)
        if dhd <= 0 or gd <= 0:
            failed = True
            break
        alpha = bb if bb is not None else gd / dhd
        f_ref = max(history[-config.ls_window:])
        halvings = 0
        # exact decrease along -d: f(x - a*d) - f(x) = -a*gd + a^2/2 * dhd
        while f - alpha * gd + 0.5 * alpha * alpha * dhd > f_ref - config.ls_c1 * alpha * gd:
            alpha *= config.ls_shrink
            halvings += 1
            if alpha < 1e-300 or halvings > 200:
                failed = True
                break
        if failed:
            break
        f = f - alpha * gd + 0.5 * alpha * alpha * dhd
        x = x - alpha * d
        g = g - alpha * hd
        history.append(f)
        bb = gd / dhd
    info = {
        "iterations": it,
        "grad_norm": float(np.linalg.norm(g)),
        "line_search_failed": failed,
    }
    return x, info


def solve_tikhonov(jac, dphi, lam: float) -> np.ndarray:
    """Solve (J'J + lam*I) x = J'dphi through the dual (measurement-space) system."""
    jac = np.asarray(jac, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    gram = jac @ jac.T
    gram[np.diag_indices_from(gram)] += lam
    x = jac.T @ scipy.linalg.solve(gram, dphi, assume_a="pos")
    rhs = jac.T @ dphi
    resid = jac.T @ (jac @ x) + lam * x - rhs
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    if np.linalg.norm(resid) > 1e-8 * scale:
        raise np.linalg.LinAlgError("Tikhonov normal equations not solved to tolerance")
    return x


def _rel_change(x_new: np.ndarray, x_old: np.ndarray):
    num = float(np.abs(x_new - x_old).sum())
    den = float(np.abs(x_old).sum())
    if den == 0.0:
        return (0.0, True) if num == 0.0 else (math.inf, False)
    rel = num / den
    return rel, False


def _run_admm(jac, dphi, config, quad_terms, apply_grad, shrink, reg_value, quad_diag=None):
    """Shared ADMM loop.

    ``apply_grad(x)`` returns the stacked splitting target (ndarray),
    ``shrink(q, t)`` the thresholded splitting variable, ``reg_value(nu)``
    the regularizer term of the augmented objective (without lam), and
    ``quad_diag`` the diagonal of Q for gradient scaling.
    """
    jac = np.asarray(jac, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    theta = config.theta_value
    thr = config.lam / theta if theta > 0 else 0.0
    scaling = None
    if quad_diag is not None and theta > 0:
        scaling = np.einsum("ij,ij->j", jac, jac) + theta * quad_diag
    x = np.zeros(jac.shape[1])
    gx = apply_grad(x)
    nu = np.zeros_like(gx)
    b = np.zeros_like(gx)
    data_term = 0.5 * float(np.sum(dphi**2))
    trace = AdmmTrace()

    def augmented(data, nu_val, gx_val, b_val):
        penalty = 0.5 * theta * float(np.sum((nu_val - gx_val - b_val) ** 2))
        return data + config.lam * reg_value(nu_val) + penalty

    for _ in range(config.inner_loop):
        x_old, gx_old, data_old = x, gx, data_term
        aug_pre = augmented(data_old, nu, gx_old, b)
        x, info = solve_mu_subproblem(
            jac, dphi, quad_terms(nu, b), theta, config, x0=x, scaling=scaling
        )
        gx = apply_grad(x)
        data_term = 0.5 * float(np.sum((jac @ x - dphi) ** 2))
        aug_post_mu = augmented(data_term, nu, gx, b)
        q = gx + b
        nu = shrink(q, thr)
        aug_post_nu = augmented(data_term, nu, gx, b)
        trace.objective.append(data_term + config.lam * reg_value(gx))
        trace.aug_chain.append((aug_pre, aug_post_mu, aug_post_nu))
        trace.split_residual.append(float(np.linalg.norm(nu - gx)))
        trace.mu_warnings.append(bool(info["line_search_failed"]))
        b = q - nu
        rel, corner = _rel_change(x, x_old)
        trace.rel_change.append(rel)
        if rel <= config.eps1 or corner:
            trace.converged = True
            break
    return x, trace


def _fe_machinery(grad_mats: GradientMatrices, theta: float):
    ds = grad_mats.per_direction
    m = ds[0].shape[0]
    q_mat = None
    q_diag = None
    if theta > 0:
        q_mat = sum((d.T @ d for d in ds)).tocsr()
        q_diag = q_mat.diagonal()

    def apply_grad(x):
        return np.concatenate([d @ x for d in ds])

    def quad_terms(nu, b):
        if theta == 0:
            return None
        diff = nu - b
        lin = sum(ds[i].T @ diff[i * m:(i + 1) * m] for i in range(len(ds)))
        return ((lambda v: q_mat @ v), lin)

    return ds, m, apply_grad, quad_terms, q_diag


def solve_a_fetv(jac, dphi, grad_mats: GradientMatrices, config: AdmmConfig):
    """Anisotropic FE TV: per-direction scalar shrinkage."""
    theta = config.theta_value
    ds, m, apply_grad, quad_terms, q_diag = _fe_machinery(grad_mats, theta)

    def shrink(q, thr):
        return shrink_scalar(q, thr)

    def reg_value(nu):
        return float(np.abs(nu).sum())

    return _run_admm(jac, dphi, config, quad_terms, apply_grad, shrink, reg_value, q_diag)


def solve_i_fetv(jac, dphi, grad_mats: GradientMatrices, config: AdmmConfig):
    """Isotropic FE TV: directions coupled per element."""
    theta = config.theta_value
    ds, m, apply_grad, quad_terms, q_diag = _fe_machinery(grad_mats, theta)
    nd = len(ds)

    def shrink(q, thr):
        parts = shrink_coupled(tuple(q[i * m:(i + 1) * m] for i in range(nd)), thr)
        return np.concatenate(parts)

    def reg_value(nu):
        return float(np.sqrt(sum(nu[i * m:(i + 1) * m] ** 2 for i in range(nd))).sum())

    return _run_admm(jac, dphi, config, quad_terms, apply_grad, shrink, reg_value, q_diag)


def _graph_machinery(graph: WeightedGraph, theta: float):
    lap = graph_laplacian_matrix(graph)
    q_diag = -2.0 * lap.diagonal() if theta > 0 else None

    def apply_grad(x):
        return nonlocal_gradient(graph, x)

    def quad_terms(nu, b):
        if theta == 0:
            return None
        lin = -nonlocal_divergence(graph, nu - b)
        return ((lambda v: -2.0 * (lap @ v)), lin)

    return apply_grad, quad_terms, q_diag


def solve_a_gtv(jac, dphi, graph: WeightedGraph, config: AdmmConfig):
    """Anisotropic graph TV: scalar shrinkage per directed edge."""
    theta = config.theta_value
    apply_grad, quad_terms, q_diag = _graph_machinery(graph, theta)

    def shrink(q, thr):
        return shrink_scalar(q, thr)

    def reg_value(nu):
        return float(np.abs(nu).sum())

    return _run_admm(jac, dphi, config, quad_terms, apply_grad, shrink, reg_value, q_diag)


def solve_i_gtv(jac, dphi, graph: WeightedGraph, config: AdmmConfig):
    """Isotropic graph TV: edges of one vertex share a coupled threshold."""
    theta = config.theta_value
    apply_grad, quad_terms, q_diag = _graph_machinery(graph, theta)
    rows = graph.rows
    n = graph.n_vertices

    def shrink(q, thr):
        return _shrink_grouped(q, rows, n, thr)

    def reg_value(nu):
        per_vertex = np.bincount(rows, weights=nu * nu, minlength=n)
        return float(np.sqrt(per_vertex).sum())

    return _run_admm(jac, dphi, config, quad_terms, apply_grad, shrink, reg_value, q_diag)


def solve_inner(jac, dphi, kind: str, operator, config: AdmmConfig):
    """Dispatch to one of the five inner solvers.

    ``operator`` is a GradientMatrices for FE kinds, a WeightedGraph for
    graph kinds, and ignored for Tikhonov. Returns (delta_mu, trace) where
    the Tikhonov trace is None.
    """
    if kind == "tikhonov":
        return solve_tikhonov(jac, dphi, config.lam), None
    if kind == "a-fetv":
        return solve_a_fetv(jac, dphi, operator, config)
    if kind == "i-fetv":
        return solve_i_fetv(jac, dphi, operator, config)
    if kind == "a-gtv":
        return solve_a_gtv(jac, dphi, operator, config)
    if kind == "i-gtv":
        return solve_i_gtv(jac, dphi, operator, config)
    raise ValueError(f"unknown solver kind {kind!r}; expected one of {SOLVER_KINDS}")


def with_lambda(config: AdmmConfig, lam: float) -> AdmmConfig:
    """Copy of a config with a different regularization weight."""
    return replace(config, lam=lam)
