import numpy as np
import pytest

import dottv as dt


def test_coarse_circle_mesh_in_expected_ranges():
    mesh = dt.make_circle_mesh(43.0, 1.70)
    assert 1400 <= mesh.n_nodes <= 2200
    assert 2700 <= mesh.n_elements <= 4200
    avg = dt.element_measures(mesh).mean()
    assert avg == pytest.approx(1.70, rel=0.25)


def test_fine_circle_mesh_element_ratio():
    coarse = dt.make_circle_mesh(43.0, 1.6977)
    fine = dt.make_circle_mesh(43.0, 0.5801)
    assert fine.n_elements > 2 * coarse.n_elements
    avg = dt.element_measures(fine).mean()
    assert avg == pytest.approx(0.5801, rel=0.25)


def test_circle_mesh_total_area():
    mesh = dt.make_circle_mesh(43.0, 1.6977)
    assert dt.element_measures(mesh).sum() == pytest.approx(np.pi * 43**2, rel=0.02)


def test_circle_mesh_deterministic():
    a = dt.make_circle_mesh(15.0, 1.0)
    b = dt.make_circle_mesh(15.0, 1.0)
    np.testing.assert_array_equal(a.nodes, b.nodes)
    np.testing.assert_array_equal(a.elements, b.elements)


def test_circle_truth_values():
    mesh = dt.make_circle_mesh(43.0, 1.6977)
    props, truth = dt.make_circle_truth(mesh)
    center_idx = int(np.argmin(np.linalg.norm(mesh.nodes - np.array([-10.0, 10.0]), axis=1)))
    assert props.mua[center_idx] == pytest.approx(0.03)
    far_idx = int(np.argmin(np.linalg.norm(mesh.nodes - np.array([40.0, 0.0]), axis=1)))
    assert props.mua[far_idx] == pytest.approx(0.01)
    assert np.all(props.musp == 1.0)
    assert truth.measure == pytest.approx(np.pi * 100.0, rel=0.10)
    assert truth.anomaly_value == pytest.approx(0.03)


def test_circle_truth_rejects_outside_anomaly():
    mesh = dt.make_circle_mesh(10.0, 2.0)
    with pytest.raises(ValueError):
        dt.make_circle_truth(mesh, center=(100.0, 0.0), radius=2.0)


def test_ring_layout_counts():
    mesh = dt.make_circle_mesh(43.0, 1.6977)
    layout = dt.make_ring_layout(mesh, 16)
    assert layout.n_measurements == 240
    layout8 = dt.make_ring_layout(mesh, 8)
    assert layout8.n_measurements == 56


def test_ring_layout_equal_angular_gaps():
    mesh = dt.make_circle_mesh(43.0, 1.6977)
    layout = dt.make_ring_layout(mesh, 16)
    ang = np.arctan2(layout.detector_positions[:, 1], layout.detector_positions[:, 0])
    gaps = np.diff(np.unwrap(np.sort(ang)))
    assert np.abs(gaps - gaps[0]).max() < 1e-9


def test_ring_layout_source_inset():
    mesh = dt.make_circle_mesh(43.0, 1.6977)
    layout = dt.make_ring_layout(mesh, 16, source_inset=1.0)
    det_r = np.linalg.norm(layout.detector_positions, axis=1)
    src_r = np.linalg.norm(layout.source_positions, axis=1)
    np.testing.assert_allclose(det_r - src_r, 1.0, atol=1e-9)


def test_layered_disk_properties():
    mesh, props = dt.make_layered_disk(target_element_area=5.0)
    labels = mesh.region_label
    assert set(labels.tolist()) == {1, 2, 3, 4, 5}
    assert np.all(props.mua[labels == 3] == pytest.approx(0.004))
    assert np.all(props.musp[labels == 5] == pytest.approx(1.19))
    assert np.all(props.mua[labels == 1] == pytest.approx(0.017))
    # labels partition the nodes
    assert labels.shape == (mesh.n_nodes,)
    assert np.all((labels >= 1) & (labels <= 5))


def test_layered_disk_radial_ordering():
    mesh, _ = dt.make_layered_disk(target_element_area=5.0)
    rho = np.linalg.norm(mesh.nodes, axis=1)
    for inner, outer in [(2, 1), (3, 2), (4, 3), (5, 4)]:
        assert rho[mesh.region_label == inner].max() <= rho[mesh.region_label == outer].max() + 1e-9


def test_layered_disk_validation():
    with pytest.raises(ValueError):
        dt.make_layered_disk(radii=(10.0, 20.0, 5.0, 4.0, 3.0))
    with pytest.raises(ValueError):
        dt.make_layered_disk(radii=(10.0, 8.0), mua=(0.01,), musp=(1.0,))
