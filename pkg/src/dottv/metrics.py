"""Quantitative evaluation of reconstructed fields against ground truth.

Four metrics: localization error (mm), average contrast, PSNR (dB), and
relative recovered volume (%). The recovered activation region is the set
of nodes whose recovered change reaches 60% of the maximum recovered
change; its centroid and measure are control-measure weighted, where a
node's control measure is its equal share of the measures of the elements
touching it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, node_control_measures

REGION_THRESHOLD = 0.6


class EmptyRegionError(Exception):
    """The recovered field has no positive change to threshold."""


@dataclass(frozen=True)
class GroundTruth:
    """True nodal field plus the simulated activation region summary."""

    field: np.ndarray
    activation: np.ndarray
    centroid: np.ndarray
    measure: float

    def __post_init__(self):
        field = np.asarray(self.field, dtype=float)
        activation = np.asarray(self.activation, dtype=np.int64)
        centroid = np.asarray(self.centroid, dtype=float)
        if activation.size == 0:
            raise ValueError("activation node set is empty")
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "activation", activation)
        object.__setattr__(self, "centroid", centroid)

    @property
    def anomaly_value(self) -> float:
        return float(self.field[self.activation].mean())


@dataclass(frozen=True)
class MetricReport:
    """One evaluation row; psnr is math.inf when the MSE is exactly zero."""

    localization_error: float
    average_contrast: float
    average_contrast_region_truth: float
    psnr: float
    relative_recovered_volume: float
    n_recovered: int

    @property
    def psnr_is_defined(self) -> bool:
        return math.isfinite(self.psnr)

    def as_row(self) -> dict:
        return {
            "localization_error_mm": self.localization_error,
            "average_contrast": self.average_contrast,
            "psnr_db": self.psnr,
            "relative_recovered_volume_pct": self.relative_recovered_volume,
        }


def recovered_region(mesh: Mesh, change: np.ndarray, mode: str = "positive", mask=None):
    """Threshold the recovered change field at 60% of its maximum.

    Returns (node indices, centroid, measure). ``mode`` selects whether the
    signed change or its magnitude is thresholded; ``mask`` restricts the
    eligible nodes (e.g. a volume-of-illumination mask).
    """
    change = np.asarray(change, dtype=float)
    if change.shape != (mesh.n_nodes,):
        raise ValueError("change field length does not match mesh")
    if mode == "positive":
        values = change
    elif mode == "magnitude":
        values = np.abs(change)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    eligible = np.ones(mesh.n_nodes, dtype=bool)
    if mask is not None:
        eligible = np.zeros(mesh.n_nodes, dtype=bool)
        eligible[np.asarray(mask)] = True
    vmax = values[eligible].max() if eligible.any() else 0.0
    if vmax <= 0:
        raise EmptyRegionError("recovered change has no positive values to threshold")
    selected = eligible & (values >= REGION_THRESHOLD * vmax)
    idx = np.where(selected)[0]
    ctrl = node_control_measures(mesh)
    w = ctrl[idx]
    centroid = (mesh.nodes[idx] * w[:, None]).sum(axis=0) / w.sum()
    return idx, centroid, float(w.sum())


def localization_error(centroid_true, centroid_recovered) -> float:
    """Euclidean distance between the two region centroids."""
    a = np.asarray(centroid_true, dtype=float)
    b = np.asarray(centroid_recovered, dtype=float)
    return float(np.linalg.norm(a - b))


def average_contrast(mu: np.ndarray, region: np.ndarray, truth: GroundTruth):
    """Mean recovered value over the region divided by the true value there.

    Returns (contrast, contrast_region_truth): the first uses the anomaly's
    ground-truth value as reference whenever the region overlaps the true
    activation, the second always uses the node-wise truth mean over the
    region.
    """
    mu = np.asarray(mu, dtype=float)
    region = np.asarray(region, dtype=np.int64)
    if region.size == 0:
        raise ValueError("empty recovered region")
    mean_rec = float(mu[region].mean())
    region_truth = float(truth.field[region].mean())
    overlap = np.intersect1d(region, truth.activation).size > 0
    reference = truth.anomaly_value if overlap else region_truth
    return mean_rec / reference, mean_rec / region_truth


def psnr(mu: np.ndarray, truth_field: np.ndarray, mask=None) -> float:
    """10*log10(max(mu)^2 / mse); math.inf when the fields agree exactly."""
    mu = np.asarray(mu, dtype=float)
    ref = np.asarray(truth_field, dtype=float)
    if mu.shape != ref.shape:
        raise ValueError("field/truth length mismatch")
    if mask is not None:
        sel = np.asarray(mask)
        mu, ref = mu[sel], ref[sel]
    mse = float(np.mean((mu - ref) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(mu.max())
    return 10.0 * math.log10(peak * peak / mse)


def relative_recovered_volume(measure_recovered: float, measure_true: float) -> float:
    """Recovered region measure over true region measure, in percent."""
    if measure_true <= 0:
        raise ValueError("true activation measure must be positive")
    return 100.0 * measure_recovered / measure_true


def evaluate_reconstruction(
    mesh: Mesh,
    mu: np.ndarray,
    truth: GroundTruth,
    background,
    mode: str = "positive",
    mask=None,
) -> MetricReport:
    """Compute all four metrics for a recovered absolute field.

    ``background`` (scalar or per-node) is subtracted to form the recovered
    change before thresholding.
    """
    mu = np.asarray(mu, dtype=float)
    change = mu - np.asarray(background, dtype=float)
    region, centroid, measure = recovered_region(mesh, change, mode=mode, mask=mask)
    contrast, contrast_region = average_contrast(mu, region, truth)
    return MetricReport(
        localization_error=localization_error(truth.centroid, centroid),
        average_contrast=contrast,
        average_contrast_region_truth=contrast_region,
        psnr=psnr(mu, truth.field, mask=mask),
        relative_recovered_volume=relative_recovered_volume(measure, truth.measure),
        n_recovered=int(region.size),
    )
