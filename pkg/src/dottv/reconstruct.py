"""Linearized outer reconstruction loop and L-curve weight selection.

Each outer iteration recomputes the forward model and its Jacobian at the
current property estimate, solves the chosen linearized TV (or Tikhonov)
problem for a property update, and applies the update. The loop stops when
the squared data residual stops improving by more than a relative
tolerance, or when the iteration budget is exhausted.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fe_ops import assemble_gradient_matrices, fe_tv_aniso, fe_tv_iso
from .forward import BoundaryData, ForwardModel, OpticalProperties
from .graph_ops import graph_tv_aniso, graph_tv_iso
from .inner_solvers import SOLVER_KINDS, AdmmConfig, solve_inner, with_lambda
from .mesh import Mesh, ProbeLayout, mesh_to_graph, save_vtk

DEFAULT_CLAMP_FLOOR = 1e-6


class ReconstructionError(Exception):
    """The outer loop produced a non-finite update or an invalid state."""


@dataclass
class OuterConfig:
    """Outer-loop configuration: solver choice, initial field, tolerances."""

    solver_kind: str
    mu0: OpticalProperties
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    outer_loop: int = 40
    eps2: float = 1e-4
    clamp_floor: float = DEFAULT_CLAMP_FLOOR

    def __post_init__(self):
        if self.solver_kind not in SOLVER_KINDS:
            raise ValueError(f"solver_kind must be one of {SOLVER_KINDS}")
        if self.outer_loop < 1:
            raise ValueError("outer_loop must be at least 1")

    def echo(self) -> dict:
        d = {
            "solver_kind": self.solver_kind,
            "outer_loop": self.outer_loop,
            "eps2": self.eps2,
            "clamp_floor": self.clamp_floor,
            "lambda": self.admm.lam,
            "theta": self.admm.theta_value,
            "inner_loop": self.admm.inner_loop,
            "eps1": self.admm.eps1,
            "gd_iters": self.admm.gd_iters,
            "gd_tol": self.admm.gd_tol,
        }
        return d


@dataclass
class ReconResult:
    """Final field plus convergence bookkeeping for one reconstruction."""

    mu: np.ndarray
    initial_residual: float
    residuals: list
    updates: list
    inner_traces: list
    clamp_counts: list
    config_echo: dict
    wall_clock: dict

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def save(self, outdir, mesh: Mesh = None) -> None:
        """Write the nodal field (CSV and VTK), traces, and config echo."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        if mesh is not None:
            cols = ["node"] + ["xyz"[c] for c in range(mesh.dim)] + ["mua"]
            lines = [",".join(cols)]
            for i in range(mesh.n_nodes):
                coords = ",".join(repr(float(c)) for c in mesh.nodes[i])
                lines.append(f"{i},{coords},{float(self.mu[i])!r}")
            (outdir / "field.csv").write_text("\n".join(lines) + "\n")
            save_vtk(mesh, outdir / "field.vtk", point_data={"mua": self.mu})
        lines = ["outer_iteration,residual,clamped_nodes"]
        for k, r in enumerate(self.residuals):
            lines.append(f"{k + 1},{float(r)!r},{self.clamp_counts[k]}")
        (outdir / "trace_outer.csv").write_text("\n".join(lines) + "\n")
        inner = ["outer_iteration,inner_iteration,objective,rel_change,split_residual"]
        for k, tr in enumerate(self.inner_traces):
            if tr is None:
                continue
            for i in range(tr.iterations):
                inner.append(
                    f"{k + 1},{i + 1},{tr.objective[i]!r},{tr.rel_change[i]!r},"
                    f"{tr.split_residual[i]!r}"
                )
        (outdir / "trace_inner.csv").write_text("\n".join(inner) + "\n")
        echo = [f"{k} = {v}" for k, v in self.config_echo.items()]
        (outdir / "config.txt").write_text("\n".join(echo) + "\n")


def build_operator(mesh: Mesh, solver_kind: str):
    """The discretization object a solver kind needs (None for Tikhonov)."""
    if solver_kind in ("a-fetv", "i-fetv"):
        return assemble_gradient_matrices(mesh)
    if solver_kind in ("a-gtv", "i-gtv"):
        return mesh_to_graph(mesh)
    return None


def regularizer_value(solver_kind: str, operator, delta_mu: np.ndarray) -> float:
    """Value of the solver's regularization functional at one update."""
    if solver_kind == "a-fetv":
        return fe_tv_aniso(operator, delta_mu)
    if solver_kind == "i-fetv":
        return fe_tv_iso(operator, delta_mu)
    if solver_kind == "a-gtv":
        return graph_tv_aniso(operator, delta_mu)
    if solver_kind == "i-gtv":
        return graph_tv_iso(operator, delta_mu)
    return float(np.linalg.norm(delta_mu))


def reconstruct(
    mesh: Mesh,
    layout: ProbeLayout,
    measured: BoundaryData,
    config: OuterConfig,
    forward_model: ForwardModel = None,
) -> ReconResult:
    """Run the full linearized reconstruction.

    A prebuilt ForwardModel for the same mesh/layout can be supplied to
    reuse its precomputed geometry.
    """
    fm = forward_model if forward_model is not None else ForwardModel(mesh, layout)
    operator = build_operator(mesh, config.solver_kind)
    props = config.mu0
    meas = measured.values
    t0 = time.perf_counter()
    data = fm.solve(props)
    r_prev = float(np.sum((meas - data.values) ** 2))
    initial_residual = r_prev
    t_forward = time.perf_counter() - t0

    residuals, updates, traces, clamp_counts = [], [], [], []
    t_jac = t_inner = 0.0
    for _ in range(config.outer_loop):
        t0 = time.perf_counter()
        _, jac = fm.forward_and_jacobian(props)
        t_jac += time.perf_counter() - t0
        dphi = meas - data.values
        t0 = time.perf_counter()
        dmu, trace = solve_inner(jac, dphi, config.solver_kind, operator, config.admm)
        t_inner += time.perf_counter() - t0
        if not np.all(np.isfinite(dmu)):
            raise ReconstructionError(
                f"non-finite update at outer iteration {len(residuals) + 1}"
            )
        mua = props.mua + dmu
        clamped = int(np.sum(mua < config.clamp_floor))
        if clamped:
            mua = np.maximum(mua, config.clamp_floor)
        props = props.with_mua(mua)
        updates.append(dmu)
        traces.append(trace)
        clamp_counts.append(clamped)

        t0 = time.perf_counter()
        data = fm.solve(props)
        t_forward += time.perf_counter() - t0
        r_new = float(np.sum((meas - data.values) ** 2))
        residuals.append(r_new)
        if r_prev == 0.0:
            break
        if (r_prev - r_new) / r_prev <= config.eps2:
            break
        r_prev = r_new

    return ReconResult(
        mu=props.mua,
        initial_residual=initial_residual,
        residuals=residuals,
        updates=updates,
        inner_traces=traces,
        clamp_counts=clamp_counts,
        config_echo=config.echo(),
        wall_clock={"forward": t_forward, "jacobian": t_jac, "inner": t_inner},
    )


@dataclass
class LCurveDiagnostics:
    lam_grid: np.ndarray
    residual_norms: np.ndarray
    regularizer_values: np.ndarray
    curvatures: np.ndarray
    selected_index: int
    degenerate: bool


def _corner_index(log_rho: np.ndarray, log_xi: np.ndarray):
    """Index of maximum three-point (Menger) curvature; -1 if collinear."""
    pts = np.stack([log_rho, log_xi], axis=1)
    n = pts.shape[0]
    curv = np.zeros(n)
    span = max(float(np.abs(pts - pts.mean(axis=0)).max()), 1e-30)
    for k in range(1, n - 1):
        a, b, c = pts[k - 1], pts[k], pts[k + 1]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        la = np.linalg.norm(b - a)
        lb = np.linalg.norm(c - b)
        lc = np.linalg.norm(c - a)
        if min(la, lb, lc) == 0:
            continue
        curv[k] = 2.0 * abs(cross) / (la * lb * lc)
    if np.max(curv) <= 1e-10 / span:
        return -1, curv
    best = 0
    for k in range(n):
        if curv[k] >= curv[best]:
            best = k
    return best, curv


def l_curve_select(
    mesh: Mesh,
    layout: ProbeLayout,
    measured: BoundaryData,
    config: OuterConfig,
    lam_grid,
    forward_model: ForwardModel = None,
):
    """Pick the regularization weight at the corner of the L-curve.

    Runs one linearization (at mu0) per grid value, forms (log residual
    norm, log regularizer value) points, and returns (lam, diagnostics).
    Ties break toward larger lam; a degenerate (collinear) curve returns
    the median lam with a warning.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.size < 3:
        raise ValueError("lam_grid needs at least 3 values")
    if np.any(lam_grid <= 0) or np.any(np.diff(lam_grid) <= 0):
        raise ValueError("lam_grid must be strictly positive and sorted ascending")
    fm = forward_model if forward_model is not None else ForwardModel(mesh, layout)
    operator = build_operator(mesh, config.solver_kind)
    data, jac = fm.forward_and_jacobian(config.mu0)
    dphi = measured.values - data.values
    rho = np.empty(lam_grid.size)
    xi = np.empty(lam_grid.size)
    for i, lam in enumerate(lam_grid):
        dmu, _ = solve_inner(jac, dphi, config.solver_kind, operator, with_lambda(config.admm, lam))
        rho[i] = np.linalg.norm(jac @ dmu - dphi)
        xi[i] = regularizer_value(config.solver_kind, operator, dmu)
    positive = xi[xi > 0]
    floor = positive.min() * 1e-3 if positive.size else 1e-300
    xi_safe = np.maximum(xi, floor)
    rho_safe = np.maximum(rho, 1e-300)
    best, curv = _corner_index(np.log(rho_safe), np.log(xi_safe))
    degenerate = best < 0
    if degenerate:
        warnings.warn("degenerate L-curve (collinear points); returning median lambda")
        best = lam_grid.size // 2
    diag = LCurveDiagnostics(
        lam_grid=lam_grid,
        residual_norms=rho,
        regularizer_values=xi,
        curvatures=curv,
        selected_index=int(best),
        degenerate=degenerate,
    )
    return float(lam_grid[best]), diag


def config_with_lambda(config: OuterConfig, lam: float) -> OuterConfig:
    return replace(config, admm=with_lambda(config.admm, lam))
