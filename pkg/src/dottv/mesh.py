"""Unstructured simplex meshes, their weighted-graph view, and probe layouts.

A mesh is a set of nodes joined by triangles (2D) or tetrahedra (3D). The
same node set doubles as the vertex set of a weighted graph whose edges are
the element-sharing node pairs (the mesh 1-skeleton) with weights 1/distance.

File formats:

* plain text: header line ``N M dim``, then N coordinate lines, then M
  element lines of 0-based node indices, then optionally N region-label
  lines (one integer each).
* VTK legacy ASCII (``DATASET UNSTRUCTURED_GRID``), read and written for
  visualization and interchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class MeshError(Exception):
    """Base class for mesh construction and I/O failures."""


class MeshFormatError(MeshError):
    """A mesh file could not be parsed."""


class MeshValidationError(MeshError):
    """Parsed mesh data violates a structural invariant."""


class DegenerateEdgeError(MeshError):
    """Two connected nodes coincide, so the edge weight 1/d is undefined."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Mesh:
    """Immutable unstructured simplex mesh.

    Parameters
    ----------
    nodes : (N, dim) float array
        Node coordinates in mm; dim is 2 or 3.
    elements : (M, dim+1) int array
        Node indices of each triangle/tetrahedron.
    region_label : (N,) int array, optional
        Per-node tissue/region tag; defaults to zeros.
    boundary_node : (N,) bool array, optional
        Per-node boundary flag; derived from single-element faces when
        omitted.
    """

    nodes: np.ndarray
    elements: np.ndarray
    region_label: np.ndarray = None
    boundary_node: np.ndarray = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise MeshValidationError(f"nodes must be (N, 2) or (N, 3), got {nodes.shape}")
        dim = nodes.shape[1]
        n = nodes.shape[0]
        if n < dim + 1:
            raise MeshValidationError(f"need at least {dim + 1} nodes, got {n}")
        if elements.ndim != 2 or elements.shape[1] != dim + 1:
            raise MeshValidationError(
                f"elements must be (M, {dim + 1}) for dim={dim}, got {elements.shape}"
            )
        if elements.shape[0] < 1:
            raise MeshValidationError("mesh has no elements")
        if elements.min() < 0 or elements.max() >= n:
            bad = int(np.argmax((elements < 0) | (elements >= n)).item())
            raise MeshValidationError(
                f"element {bad // (dim + 1)} references node index outside [0, {n})"
            )
        for m, elem in enumerate(elements):
            if len(set(elem.tolist())) != dim + 1:
                raise MeshValidationError(f"element {m} repeats a node index: {elem.tolist()}")
        object.__setattr__(self, "nodes", _as_readonly(nodes))
        object.__setattr__(self, "elements", _as_readonly(elements))

        if self.region_label is None:
            labels = np.zeros(n, dtype=np.int64)
        else:
            labels = np.asarray(self.region_label, dtype=np.int64)
            if labels.shape != (n,):
                raise MeshValidationError(f"region_label must have shape ({n},)")
        object.__setattr__(self, "region_label", _as_readonly(labels))

        measures = element_measures(self)
        bad = np.where(measures <= 0)[0]
        if bad.size:
            raise MeshValidationError(f"element {int(bad[0])} has non-positive measure")

        if self.boundary_node is None:
            flags = _boundary_nodes(elements, n, dim)
        else:
            flags = np.asarray(self.boundary_node, dtype=bool)
            if flags.shape != (n,):
                raise MeshValidationError(f"boundary_node must have shape ({n},)")
        object.__setattr__(self, "boundary_node", _as_readonly(flags))

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def boundary_faces(self) -> np.ndarray:
        """Faces (edges in 2D, triangles in 3D) belonging to exactly one element."""
        return _boundary_faces(self.elements, self.dim)


def _element_faces(elements: np.ndarray, dim: int) -> np.ndarray:
    """All (dim)-node faces of all elements, one row per face, unsorted nodes."""
    if dim == 2:
        idx = [(0, 1), (1, 2), (2, 0)]
    else:
        idx = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    return np.concatenate([elements[:, list(i)] for i in idx], axis=0)


def _boundary_faces(elements: np.ndarray, dim: int) -> np.ndarray:
    faces = _element_faces(elements, dim)
    key = np.sort(faces, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return faces[counts[inv] == 1]


def _boundary_nodes(elements: np.ndarray, n: int, dim: int) -> np.ndarray:
    flags = np.zeros(n, dtype=bool)
    bf = _boundary_faces(elements, dim)
    if bf.size:
        flags[np.unique(bf)] = True
    return flags


def element_measure(mesh: Mesh, elem: int) -> float:
    """Area (2D, mm^2) or volume (3D, mm^3) of one element."""
    if not 0 <= elem < mesh.n_elements:
        raise IndexError(f"element index {elem} out of range [0, {mesh.n_elements})")
    return float(element_measures(mesh)[elem])


def element_measures(mesh_or_nodes, elements: np.ndarray = None) -> np.ndarray:
    """Measures of all elements at once.

    Accepts either a Mesh or a (nodes, elements) pair.
    """
    if elements is None:
        nodes, elements = mesh_or_nodes.nodes, mesh_or_nodes.elements
    else:
        nodes = mesh_or_nodes
    v = nodes[elements]  # (M, dim+1, dim)
    dim = nodes.shape[1]
    if dim == 2:
        x, y = v[..., 0], v[..., 1]
        det = (
            x[:, 0] * (y[:, 1] - y[:, 2])
            + x[:, 1] * (y[:, 2] - y[:, 0])
            + x[:, 2] * (y[:, 0] - y[:, 1])
        )
        return np.abs(det) / 2.0
    edges = v[:, 1:, :] - v[:, :1, :]  # (M, 3, 3)
    det = np.linalg.det(edges)
    return np.abs(det) / 6.0


def node_control_measures(mesh: Mesh) -> np.ndarray:
    """Per-node control measure: element measures split equally among vertices."""
    ctrl = np.zeros(mesh.n_nodes)
    share = element_measures(mesh) / (mesh.dim + 1)
    for k in range(mesh.dim + 1):
        np.add.at(ctrl, mesh.elements[:, k], share)
    return ctrl


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric weighted graph in CSR-like adjacency form.

    ``indices[indptr[i]:indptr[i+1]]`` are the neighbors of vertex i and
    ``weights`` the matching w_ij (1/mm). ``reverse`` maps the directed-edge
    slot of (i, j) to the slot of (j, i), so per-directed-edge arrays
    ("edge fields", one scalar per adjacency slot) can be transposed in O(E).
    """

    coords: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    reverse: np.ndarray = field(default=None)
    rows: np.ndarray = field(default=None)

    def __post_init__(self):
        coords = _as_readonly(np.asarray(self.coords, dtype=float))
        indptr = _as_readonly(np.asarray(self.indptr, dtype=np.int64))
        indices = _as_readonly(np.asarray(self.indices, dtype=np.int64))
        weights = _as_readonly(np.asarray(self.weights, dtype=float))
        n = coords.shape[0]
        if indptr.shape != (n + 1,):
            raise MeshValidationError("indptr length must be n_vertices + 1")
        nnz = int(indptr[-1])
        if indices.shape != (nnz,) or weights.shape != (nnz,):
            raise MeshValidationError("indices/weights length mismatch with indptr")
        if nnz and weights.min() <= 0:
            raise MeshValidationError("edge weights must be positive")
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
        if np.any(rows == indices):
            raise MeshValidationError("graph contains a self-edge")
        rev = self.reverse
        if rev is None:
            tagged = sp.csr_matrix(
                (np.arange(nnz, dtype=np.int64) + 1, indices.copy(), indptr.copy()),
                shape=(n, n),
            )
            tr = tagged.T.tocsr()
            tr.sort_indices()
            if tr.indptr.tolist() != indptr.tolist() or not np.array_equal(tr.indices, indices):
                raise MeshValidationError("adjacency is not symmetric")
            rev = tr.data - 1
        rev = np.asarray(rev, dtype=np.int64)
        if not np.allclose(weights[rev], weights, rtol=0, atol=0):
            raise MeshValidationError("weights are not exactly symmetric")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "reverse", _as_readonly(rev))
        object.__setattr__(self, "rows", _as_readonly(rows))

    @property
    def n_vertices(self) -> int:
        return self.coords.shape[0]

    @property
    def n_directed_edges(self) -> int:
        return self.indices.shape[0]

    @property
    def n_edges(self) -> int:
        return self.indices.shape[0] // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @staticmethod
    def from_edges(coords, pairs, weights=None) -> "WeightedGraph":
        """Build a graph from undirected vertex pairs.

        Weights default to 1/distance. Duplicate pairs are merged.
        """
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        if np.any(lo == hi):
            raise MeshValidationError("self-edge in pair list")
        uniq = np.unique(np.stack([lo, hi], axis=1), axis=0)
        if weights is None:
            d = np.linalg.norm(coords[uniq[:, 0]] - coords[uniq[:, 1]], axis=1)
            if np.any(d == 0):
                i, j = uniq[np.argmax(d == 0)]
                raise DegenerateEdgeError(f"connected nodes {i} and {j} coincide")
            w = 1.0 / d
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape[0] != uniq.shape[0]:
                raise MeshValidationError("one weight per unique undirected edge required")
        n = coords.shape[0]
        rows = np.concatenate([uniq[:, 0], uniq[:, 1]])
        cols = np.concatenate([uniq[:, 1], uniq[:, 0]])
        mat = sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))
        mat.sort_indices()
        return WeightedGraph(coords, mat.indptr.astype(np.int64), mat.indices.astype(np.int64), mat.data)


def mesh_to_graph(mesh: Mesh) -> WeightedGraph:
    """Weighted-graph view of a mesh: element-sharing node pairs, w = 1/distance."""
    elems = mesh.elements
    dim = mesh.dim
    pairs = []
    for a in range(dim + 1):
        for b in range(a + 1, dim + 1):
            pairs.append(elems[:, (a, b)])
    return WeightedGraph.from_edges(mesh.nodes, np.concatenate(pairs, axis=0))


# ---------------------------------------------------------------------------
# probe layout


@dataclass(frozen=True)
class ProbeLayout:
    """Source and detector positions plus the measurement list.

    ``measurements`` holds (source index, detector index) pairs in
    acquisition order.
    """

    source_positions: np.ndarray
    detector_positions: np.ndarray
    measurements: np.ndarray

    def __post_init__(self):
        src = np.atleast_2d(np.asarray(self.source_positions, dtype=float))
        det = np.atleast_2d(np.asarray(self.detector_positions, dtype=float))
        meas = np.asarray(self.measurements, dtype=np.int64).reshape(-1, 2)
        if meas.shape[0] < 1:
            raise MeshValidationError("layout needs at least one measurement")
        if meas[:, 0].min() < 0 or meas[:, 0].max() >= src.shape[0]:
            raise MeshValidationError("measurement references invalid source index")
        if meas[:, 1].min() < 0 or meas[:, 1].max() >= det.shape[0]:
            raise MeshValidationError("measurement references invalid detector index")
        object.__setattr__(self, "source_positions", _as_readonly(src))
        object.__setattr__(self, "detector_positions", _as_readonly(det))
        object.__setattr__(self, "measurements", _as_readonly(meas))

    @property
    def n_measurements(self) -> int:
        return self.measurements.shape[0]


# ---------------------------------------------------------------------------
# file I/O


def _fmt(x: float) -> str:
    return repr(float(x))


def load_mesh(path, format: str = None) -> Mesh:
    """Load a mesh from a text or VTK legacy file.

    ``format`` is "text" or "vtk"; inferred from the file when omitted.
    """
    path = Path(path)
    text = path.read_text()
    if format is None:
        format = "vtk" if text.lstrip().startswith("# vtk") else "text"
    if format == "vtk":
        return _parse_vtk(text, path)
    if format == "text":
        return _parse_text(text, path)
    raise ValueError(f"unknown mesh format {format!r}")


def _parse_text(text: str, path) -> Mesh:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MeshFormatError(f"{path}: empty mesh file")
    header = lines[0].split()
    if len(header) != 3:
        raise MeshFormatError(f"{path}: header must be 'N M dim', got {lines[0]!r}")
    try:
        n, m, dim = (int(t) for t in header)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: bad header {lines[0]!r}") from exc
    if dim not in (2, 3):
        raise MeshFormatError(f"{path}: dim must be 2 or 3, got {dim}")
    need = 1 + n + m
    if len(lines) not in (need, need + n):
        raise MeshFormatError(
            f"{path}: expected {need} or {need + n} lines, got {len(lines)}"
        )
    try:
        nodes = np.array([[float(t) for t in lines[1 + i].split()] for i in range(n)])
    except ValueError as exc:
        raise MeshFormatError(f"{path}: bad node coordinate line") from exc
    if nodes.size and nodes.shape[1] != dim:
        raise MeshFormatError(f"{path}: node lines must have {dim} coordinates")
    try:
        elements = np.array(
            [[int(t) for t in lines[1 + n + i].split()] for i in range(m)], dtype=np.int64
        )
    except ValueError as exc:
        raise MeshFormatError(f"{path}: bad element line") from exc
    if elements.size and elements.shape[1] != dim + 1:
        raise MeshFormatError(f"{path}: element lines must have {dim + 1} indices")
    labels = None
    if len(lines) == need + n:
        try:
            labels = np.array([int(lines[need + i]) for i in range(n)], dtype=np.int64)
        except ValueError as exc:
            raise MeshFormatError(f"{path}: bad region label line") from exc
    try:
        return Mesh(nodes, elements, region_label=labels)
    except MeshValidationError as exc:
        raise MeshValidationError(f"{path}: {exc}") from exc


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the plain-text node/element format."""
    out = [f"{mesh.n_nodes} {mesh.n_elements} {mesh.dim}"]
    for row in mesh.nodes:
        out.append(" ".join(_fmt(c) for c in row))
    for elem in mesh.elements:
        out.append(" ".join(str(int(i)) for i in elem))
    if np.any(mesh.region_label != 0):
        out.extend(str(int(lbl)) for lbl in mesh.region_label)
    Path(path).write_text("\n".join(out) + "\n")


def save_vtk(mesh: Mesh, path, point_data: dict = None, title: str = "dottv mesh") -> None:
    """Write the mesh (plus optional nodal scalar fields) as VTK legacy ASCII."""
    n, m, dim = mesh.n_nodes, mesh.n_elements, mesh.dim
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {n} double")
    for row in mesh.nodes:
        coords = list(row) + [0.0] * (3 - dim)
        out.append(" ".join(_fmt(c) for c in coords))
    k = dim + 1
    out.append(f"CELLS {m} {m * (k + 1)}")
    for elem in mesh.elements:
        out.append(f"{k} " + " ".join(str(int(i)) for i in elem))
    out.append(f"CELL_TYPES {m}")
    ctype = "5" if dim == 2 else "10"
    out.extend([ctype] * m)
    fields = dict(point_data or {})
    if not fields and np.any(mesh.region_label != 0):
        fields["region"] = mesh.region_label
    if fields:
        out.append(f"POINT_DATA {n}")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"point field {name!r} must have shape ({n},)")
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(_fmt(v) for v in values)
    Path(path).write_text("\n".join(out) + "\n")


def _parse_vtk(text: str, path) -> Mesh:
    tokens = text.split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos].upper() != word:
            raise MeshFormatError(f"{path}: expected {word} in VTK file")
        pos += 1

    try:
        while tokens[pos].upper() != "DATASET":
            pos += 1
    except IndexError:
        raise MeshFormatError(f"{path}: no DATASET section") from None
    pos += 1
    if tokens[pos].upper() != "UNSTRUCTURED_GRID":
        raise MeshFormatError(f"{path}: only UNSTRUCTURED_GRID is supported")
    pos += 1
    expect("POINTS")
    n = int(tokens[pos]); pos += 2  # skip dtype
    pts = np.array(tokens[pos:pos + 3 * n], dtype=float).reshape(n, 3)
    pos += 3 * n
    expect("CELLS")
    m = int(tokens[pos]); pos += 1
    total = int(tokens[pos]); pos += 1
    raw = np.array(tokens[pos:pos + total], dtype=np.int64)
    pos += total
    expect("CELL_TYPES")
    mt = int(tokens[pos]); pos += 1
    types = np.array(tokens[pos:pos + mt], dtype=int)
    cells = []
    i = 0
    for _ in range(m):
        k = int(raw[i])
        cells.append(raw[i + 1:i + 1 + k])
        i += k + 1
    keep = [c for c, t in zip(cells, types) if t in (5, 10)]
    if not keep:
        raise MeshFormatError(f"{path}: no triangle/tetrahedron cells found")
    sizes = {len(c) for c in keep}
    if len(sizes) != 1:
        raise MeshFormatError(f"{path}: mixed cell sizes are not supported")
    elements = np.stack(keep)
    dim = elements.shape[1] - 1
    nodes = pts[:, :dim]
    if dim == 2 and np.any(pts[:, 2] != 0):
        nodes = pts  # genuinely 3D points with triangle cells are rejected below
        raise MeshFormatError(f"{path}: triangle cells with non-planar points")
    labels = None
    rest = tokens[pos:]
    for i, tok in enumerate(rest):
        if tok.upper() == "SCALARS" and i + 1 < len(rest) and rest[i + 1] == "region":
            start = i + 6  # SCALARS name dtype 1 LOOKUP_TABLE default
            labels = np.array(rest[start:start + n], dtype=float).astype(np.int64)
            break
    return Mesh(nodes, elements, region_label=labels)
