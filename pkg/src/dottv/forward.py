"""Continuous-wave diffusion forward model on simplex meshes.

Solves -div(kappa grad(phi)) + mua*phi = q with kappa = 1/(3*(mua + musp))
and a Robin boundary condition by Galerkin FEM with linear elements.
Sources are isotropic point loads (placed by the caller, typically one
scattering distance inside the boundary); detectors sample the field by
barycentric interpolation. Measurements are natural-log amplitudes.

The Jacobian of log-amplitude with respect to nodal absorption is computed
with adjoint fields and differentiates the assembled system exactly,
including the absorption dependence of the diffusion coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, ProbeLayout, element_measures
from .fe_ops import _basis_gradients

# Internal-reflection parameter of the Robin condition phi + 2*A*kappa*dphi/dn = 0
# for an air-tissue interface (refractive index ~1.33).
REFLECTION_PARAM = 2.74

_SOLVE_RTOL = 1e-10


class ForwardModelError(Exception):
    """Forward solve failed (singular system, bad probe placement, ...)."""


@dataclass(frozen=True)
class OpticalProperties:
    """Per-node absorption and reduced scattering coefficients (1/mm)."""

    mua: np.ndarray
    musp: np.ndarray

    def __post_init__(self):
        mua = np.asarray(self.mua, dtype=float)
        musp = np.asarray(self.musp, dtype=float)
        if mua.ndim != 1 or mua.shape != musp.shape:
            raise ValueError("mua and musp must be 1-D arrays of equal length")
        if mua.min() <= 0 or musp.min() <= 0:
            raise ValueError("optical properties must be strictly positive")
        object.__setattr__(self, "mua", mua.copy())
        object.__setattr__(self, "musp", musp.copy())

    @property
    def n_nodes(self) -> int:
        return self.mua.shape[0]

    def with_mua(self, mua) -> "OpticalProperties":
        return OpticalProperties(mua=mua, musp=self.musp)


@dataclass(frozen=True)
class BoundaryData:
    """Log-amplitude per measurement, ordered as ProbeLayout.measurements."""

    values: np.ndarray
    resample_count: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("boundary data must be a 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("boundary data contains non-finite values")
        object.__setattr__(self, "values", values.copy())

    def __len__(self) -> int:
        return self.values.shape[0]


def boundary_data_to_csv(data: BoundaryData, layout: ProbeLayout, path) -> None:
    """Write rows of (measurement id, source, detector, log amplitude)."""
    lines = ["measurement,source,detector,log_amplitude"]
    for m, (s, d) in enumerate(layout.measurements):
        lines.append(f"{m},{int(s)},{int(d)},{float(data.values[m])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def boundary_data_from_csv(path) -> BoundaryData:
    values = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:4] != ["measurement", "source", "detector", "log_amplitude"]:
            raise ValueError(f"{path}: not a boundary-data CSV")
        for line in fh:
            line = line.strip()
            if line:
                values.append(float(line.split(",")[3]))
    return BoundaryData(values=np.array(values))


class ForwardModel:
    """Reusable forward solver for one (mesh, layout) pair.

    Precomputes element geometry, boundary matrices, and probe load/sampling
    vectors, then assembles and solves per property field.
    """

    def __init__(self, mesh: Mesh, layout: ProbeLayout, reflection_param: float = REFLECTION_PARAM):
        self.mesh = mesh
        self.layout = layout
        self.reflection_param = float(reflection_param)
        dim = mesh.dim
        k = dim + 1
        self._measures = element_measures(mesh)
        self._grads = _basis_gradients(mesh)  # (M, k, dim)
        # stiffness geometry: measure * (grad_j . grad_k), one k x k block per element
        self._kloc = self._measures[:, None, None] * np.einsum(
            "ejc,ekc->ejk", self._grads, self._grads
        )
        mass_unit = (np.ones((k, k)) + np.eye(k)) / (12.0 if dim == 2 else 20.0)
        self._mass_unit = mass_unit
        self._mloc = self._measures[:, None, None] * mass_unit[None, :, :]
        elems = mesh.elements
        self._rows = np.broadcast_to(elems[:, :, None], (mesh.n_elements, k, k)).ravel()
        self._cols = np.broadcast_to(elems[:, None, :], (mesh.n_elements, k, k)).ravel()
        self._boundary = self._boundary_matrix()
        self._locator = _PointLocator(mesh)
        self._src_vecs = np.stack(
            [self._locator.sampling_vector(p, "source") for p in layout.source_positions]
        ).T  # (N, S)
        self._det_vecs = np.stack(
            [self._locator.sampling_vector(p, "detector") for p in layout.detector_positions]
        ).T  # (N, D)

    def _boundary_matrix(self) -> sp.csr_matrix:
        mesh = self.mesh
        faces = mesh.boundary_faces()
        pts = mesh.nodes[faces]
        if mesh.dim == 2:
            size = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
            unit = (np.ones((2, 2)) + np.eye(2)) / 6.0
        else:
            cross = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
            size = 0.5 * np.linalg.norm(cross, axis=1)
            unit = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = size[:, None, None] * unit[None, :, :]
        kk = faces.shape[1]
        rows = np.broadcast_to(faces[:, :, None], (faces.shape[0], kk, kk)).ravel()
        cols = np.broadcast_to(faces[:, None, :], (faces.shape[0], kk, kk)).ravel()
        n = mesh.n_nodes
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))

    def _system(self, props: OpticalProperties):
        if props.n_nodes != self.mesh.n_nodes:
            raise ValueError("property field length does not match mesh")
        kappa = 1.0 / (3.0 * (props.mua + props.musp))
        kbar = kappa[self.mesh.elements].mean(axis=1)
        mbar = props.mua[self.mesh.elements].mean(axis=1)
        vals = kbar[:, None, None] * self._kloc + mbar[:, None, None] * self._mloc
        n = self.mesh.n_nodes
        mat = sp.csr_matrix((vals.ravel(), (self._rows, self._cols)), shape=(n, n))
        mat = mat + self._boundary * (1.0 / (2.0 * self.reflection_param))
        return mat.tocsc(), kappa

    def _solve_columns(self, lu, mat, rhs: np.ndarray) -> np.ndarray:
        sol = lu.solve(rhs)
        resid = mat @ sol - rhs
        denom = np.linalg.norm(rhs, axis=0)
        num = np.linalg.norm(resid, axis=0)
        if np.any(num > _SOLVE_RTOL * np.maximum(denom, 1e-300)):
            raise ForwardModelError("linear solve exceeded residual tolerance")
        return sol

    def _fields(self, props: OpticalProperties, adjoint: bool):
        mat, kappa = self._system(props)
        try:
            lu = spla.splu(mat)
        except RuntimeError as exc:
            raise ForwardModelError(f"singular FEM system: {exc}") from exc
        direct = self._solve_columns(lu, mat, self._src_vecs)
        adj = self._solve_columns(lu, mat, self._det_vecs) if adjoint else None
        return direct, adj, kappa

    def _amplitudes(self, direct: np.ndarray) -> np.ndarray:
        meas = self.layout.measurements
        amp = np.einsum(
            "nm,nm->m", self._det_vecs[:, meas[:, 1]], direct[:, meas[:, 0]]
        )
        if np.any(amp <= 0):
            raise ForwardModelError("non-positive amplitude at a detector")
        return amp

    def solve(self, props: OpticalProperties) -> BoundaryData:
        direct, _, _ = self._fields(props, adjoint=False)
        return BoundaryData(values=np.log(self._amplitudes(direct)))

    def jacobian(self, props: OpticalProperties) -> np.ndarray:
        return self.forward_and_jacobian(props)[1]

    def forward_and_jacobian(self, props: OpticalProperties):
        """Boundary data and the dense (measurements x nodes) sensitivity matrix."""
        direct, adj, kappa = self._fields(props, adjoint=True)
        amp = self._amplitudes(direct)
        mesh = self.mesh
        elems = mesh.elements
        k = mesh.dim + 1
        meas = self.layout.measurements
        n_meas = meas.shape[0]
        grad_u = np.einsum("ejc,ejs->ecs", self._grads, direct[elems])
        grad_z = np.einsum("ejc,ejd->ecd", self._grads, adj[elems])
        uv = direct[elems]  # (M, k, S)
        zv = adj[elems]  # (M, k, D)
        jac = np.empty((n_meas, mesh.n_nodes))
        kap_coef = 3.0 * kappa**2 / k
        chunk = max(1, int(2e6 // max(mesh.n_elements, 1)))
        incidence = sp.csr_matrix(
            (
                np.ones(elems.size),
                elems.ravel(),
                np.arange(0, elems.size + 1, k),
            ),
            shape=(mesh.n_elements, mesh.n_nodes),
        ).T.tocsr()
        for start in range(0, n_meas, chunk):
            sel = slice(start, min(start + chunk, n_meas))
            s_idx = meas[sel, 0]
            d_idx = meas[sel, 1]
            kterm = self._measures[:, None] * np.einsum(
                "ecm,ecm->em", grad_u[:, :, s_idx], grad_z[:, :, d_idx]
            )
            mterm = self._measures[:, None] * np.einsum(
                "ejm,jk,ekm->em", zv[:, :, d_idx], self._mass_unit, uv[:, :, s_idx]
            )
            sk = incidence @ kterm  # (N, chunk)
            sm = incidence @ mterm
            block = kap_coef[:, None] * sk - sm / k
            jac[sel, :] = (block / amp[None, sel]).T
        return BoundaryData(values=np.log(amp)), jac


class _PointLocator:
    """Barycentric point location with a boundary tolerance."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        v = mesh.nodes[mesh.elements]
        self._origin = v[:, 0, :]
        edges = np.transpose(v[:, 1:, :] - v[:, :1, :], (0, 2, 1))  # (M, dim, dim)
        self._inv = np.linalg.inv(edges)
        self._scale = float(np.abs(mesh.nodes).max()) or 1.0

    def barycentric(self, point: np.ndarray):
        p = np.asarray(point, dtype=float)
        local = np.einsum("mij,mj->mi", self._inv, p[None, :] - self._origin)
        bary = np.concatenate([1.0 - local.sum(axis=1, keepdims=True), local], axis=1)
        best = int(np.argmax(bary.min(axis=1)))
        return best, bary[best]

    def sampling_vector(self, point, role: str) -> np.ndarray:
        elem, bary = self.barycentric(point)
        if bary.min() < -1e-8:
            raise ForwardModelError(
                f"{role} position {np.asarray(point).tolist()} lies outside the mesh"
            )
        vec = np.zeros(self.mesh.n_nodes)
        vec[self.mesh.elements[elem]] = np.clip(bary, 0.0, None)
        return vec


def solve_forward(
    mesh: Mesh,
    props: OpticalProperties,
    layout: ProbeLayout,
    reflection_param: float = REFLECTION_PARAM,
) -> BoundaryData:
    """Log-amplitude boundary measurements for one property field."""
    return ForwardModel(mesh, layout, reflection_param).solve(props)


def compute_jacobian(
    mesh: Mesh,
    props: OpticalProperties,
    layout: ProbeLayout,
    reflection_param: float = REFLECTION_PARAM,
) -> np.ndarray:
    """Adjoint-method sensitivity d(log amplitude)/d(mua) per measurement and node."""
    return ForwardModel(mesh, layout, reflection_param).jacobian(props)


def add_noise(data: BoundaryData, percent: float, seed: int, max_retries: int = 100) -> BoundaryData:
    """Multiplicative Gaussian amplitude noise, deterministic per seed.

    The amplitude A = exp(value) becomes A * (1 + percent * g) with g drawn
    from a standard normal; non-positive perturbed amplitudes are resampled
    (bounded retries, count recorded on the result).
    """
    if percent < 0 or percent >= 1:
        raise ValueError("noise fraction must lie in [0, 1)")
    if percent == 0:
        return BoundaryData(values=data.values)
    rng = np.random.default_rng(seed)
    amp = np.exp(data.values)
    noisy = amp * (1.0 + percent * rng.standard_normal(amp.shape[0]))
    resampled = 0
    for _ in range(max_retries):
        bad = noisy <= 0
        if not bad.any():
            break
        resampled += int(bad.sum())
        noisy[bad] = amp[bad] * (1.0 + percent * rng.standard_normal(int(bad.sum())))
    else:
        raise ValueError("could not produce positive amplitudes within retry budget")
    return BoundaryData(values=np.log(noisy), resample_count=resampled)
