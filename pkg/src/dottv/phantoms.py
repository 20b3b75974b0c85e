"""Deterministic phantom generators: disk meshes, targets, and fiber rings.

The disk triangulation is a structured "spiderweb": concentric rings of
nodes around a center node, with ring node counts kept at multiples of 16
so that a 16-fiber probe ring aligns exactly with mesh symmetry directions.
"""

from __future__ import annotations

import math

import numpy as np

from .forward import OpticalProperties
from .mesh import Mesh, ProbeLayout, node_control_measures
from .metrics import GroundTruth

HEAD_LAYER_MUA = (0.017, 0.012, 0.004, 0.018, 0.017)
HEAD_LAYER_MUSP = (0.74, 0.94, 0.3, 0.84, 1.19)
HEAD_LAYER_NAMES = ("scalp", "skull", "csf", "gray matter", "white matter")
DEFAULT_LAYER_RADII = (43.0, 39.0, 35.0, 31.0, 25.0)


def _ring_counts(n_rings: int, symmetry: int = 16) -> list:
    counts = []
    for k in range(1, n_rings + 1):
        counts.append(symmetry * max(1, round(6 * k / symmetry)))
    return counts


def make_circle_mesh(radius: float, target_element_area: float) -> Mesh:
    """Structured disk triangulation with near-uniform element areas.

    The ring count is chosen so the average element area is close to the
    target; ring node counts are multiples of 16.
    """
    if radius <= 0 or target_element_area <= 0:
        raise ValueError("radius and target_element_area must be positive")
    n_rings = max(2, round(math.sqrt(math.pi * radius**2 / (6.0 * target_element_area))))
    counts = _ring_counts(n_rings)

    nodes = [(0.0, 0.0)]
    ring_start = [1]
    for k, nk in enumerate(counts, start=1):
        r = radius * k / n_rings
        ang = 2.0 * np.pi * np.arange(nk) / nk
        for a in ang:
            nodes.append((r * math.cos(a), r * math.sin(a)))
        ring_start.append(ring_start[-1] + nk)

    elements = []
    n1 = counts[0]
    for j in range(n1):
        elements.append((0, 1 + j, 1 + (j + 1) % n1))
    for k in range(1, n_rings):
        ia, a = ring_start[k - 1], counts[k - 1]
        ib, b = ring_start[k], counts[k]
        i = j = 0
        while i < a or j < b:
            if i < a and (j >= b or (i + 1) * b <= (j + 1) * a):
                elements.append((ia + i % a, ib + j % b, ia + (i + 1) % a))
                i += 1
            else:
                elements.append((ia + i % a, ib + (j + 1) % b, ib + j % b))
                j += 1
    return Mesh(np.array(nodes), np.array(elements, dtype=np.int64))


def make_circle_truth(
    mesh: Mesh,
    center=(-10.0, 10.0),
    radius: float = 10.0,
    mua_background: float = 0.01,
    mua_anomaly: float = 0.03,
    musp: float = 1.0,
):
    """Homogeneous-background target with one disk anomaly.

    Returns (OpticalProperties, GroundTruth); the ground-truth centroid and
    measure come from the anomaly's node control measures.
    """
    center = np.asarray(center, dtype=float)
    dist = np.linalg.norm(mesh.nodes - center[None, :], axis=1)
    inside = dist <= radius
    if not inside.any():
        raise ValueError("anomaly contains no mesh nodes; is it inside the mesh?")
    mua = np.full(mesh.n_nodes, mua_background)
    mua[inside] = mua_anomaly
    props = OpticalProperties(mua=mua, musp=np.full(mesh.n_nodes, musp))
    ctrl = node_control_measures(mesh)
    w = ctrl[inside]
    centroid = (mesh.nodes[inside] * w[:, None]).sum(axis=0) / w.sum()
    truth = GroundTruth(
        field=mua,
        activation=np.where(inside)[0],
        centroid=centroid,
        measure=float(w.sum()),
    )
    return props, truth


def make_layered_disk(
    radii=DEFAULT_LAYER_RADII,
    mua=HEAD_LAYER_MUA,
    musp=HEAD_LAYER_MUSP,
    target_element_area: float = 1.7,
):
    """Concentric-layer disk with per-layer optical properties.

    ``radii`` lists the outer radius of each layer from the outermost
    inward; the first entry is the disk radius. Region labels run 1
    (outermost) to len(radii) (innermost).
    """
    radii = [float(r) for r in radii]
    if sorted(radii, reverse=True) != radii or len(set(radii)) != len(radii):
        raise ValueError("layer radii must be strictly decreasing from the outer boundary")
    if not (len(radii) == len(mua) == len(musp)):
        raise ValueError("need one mua and musp per layer")
    base = make_circle_mesh(radii[0], target_element_area)
    rho = np.linalg.norm(base.nodes, axis=1)
    thresholds = np.array(radii[1:])
    layer = (rho[:, None] < thresholds[None, :] - 1e-12).sum(axis=1)
    labels = layer + 1
    mesh = Mesh(base.nodes, base.elements, region_label=labels)
    props = OpticalProperties(
        mua=np.asarray(mua, dtype=float)[layer],
        musp=np.asarray(musp, dtype=float)[layer],
    )
    return mesh, props


def _boundary_polygon(mesh: Mesh):
    """Boundary nodes ordered by angle around their centroid."""
    idx = np.where(mesh.boundary_node)[0]
    if idx.size < 3:
        raise ValueError("mesh has no usable boundary polygon")
    pts = mesh.nodes[idx][:, :2]
    center = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
    order = np.argsort(ang)
    return pts[order], center


def _boundary_point(poly: np.ndarray, center: np.ndarray, angle: float) -> np.ndarray:
    """Intersection of the ray from the polygon center at ``angle`` with the hull."""
    d = np.array([math.cos(angle), math.sin(angle)])
    n = poly.shape[0]
    for i in range(n):
        a = poly[i] - center
        b = poly[(i + 1) % n] - center
        mat = np.array([[d[0], a[0] - b[0]], [d[1], a[1] - b[1]]])
        det = np.linalg.det(mat)
        if abs(det) < 1e-14:
            continue
        t, s = np.linalg.solve(mat, a)
        if t > 0 and -1e-12 <= s <= 1 + 1e-12:
            return center + t * d
    raise ValueError(f"no boundary intersection at angle {angle}")


def make_ring_layout(mesh: Mesh, n_fibers: int = 16, source_inset: float = 1.0) -> ProbeLayout:
    """Equidistant co-located source/detector fibers on the mesh boundary.

    Detectors sit on the boundary polygon; sources are moved ``source_inset``
    mm (one scattering distance for musp = 1/mm) toward the interior. The
    measurement list is every ordered (source, detector) pair with distinct
    fibers: n*(n-1) measurements.
    """
    if mesh.dim != 2:
        raise ValueError("ring layouts are defined for 2D meshes")
    if n_fibers < 2:
        raise ValueError("need at least two fibers")
    poly, center = _boundary_polygon(mesh)
    detectors = []
    sources = []
    for i in range(n_fibers):
        angle = 2.0 * math.pi * i / n_fibers
        p = _boundary_point(poly, center, angle)
        detectors.append(p)
        radial = p - center
        rnorm = np.linalg.norm(radial)
        sources.append(center + radial * (1.0 - source_inset / rnorm))
    meas = [(s, d) for s in range(n_fibers) for d in range(n_fibers) if d != s]
    return ProbeLayout(
        source_positions=np.array(sources),
        detector_positions=np.array(detectors),
        measurements=np.array(meas, dtype=np.int64),
    )
