import numpy as np
import pytest

import dottv as dt
from dottv.fe_ops import SingularElementError, basis_coefficients
from dottv.mesh import Mesh


def unit_right_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def random_mesh(rng, n_pts=14):
    from scipy.spatial import Delaunay

    while True:
        pts = rng.uniform(-2, 2, size=(n_pts, 2))
        tri = Delaunay(pts)
        areas = dt.element_measures(pts, tri.simplices)
        if areas.min() > 1e-6:
            return Mesh(pts, tri.simplices)


def test_basis_coefficients_unit_triangle():
    coeffs = basis_coefficients([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a, b, c = coeffs[0]
    assert (a, b, c) == pytest.approx((-1.0, -1.0, 1.0))


@pytest.mark.parametrize("seed", range(6))
def test_basis_kronecker_property(seed):
    rng = np.random.default_rng(seed)
    verts = rng.uniform(-3, 3, size=(3, 2))
    if seed % 2:  # exercise clockwise orientation too
        verts = verts[::-1]
    area2 = abs(
        verts[0, 0] * (verts[1, 1] - verts[2, 1])
        + verts[1, 0] * (verts[2, 1] - verts[0, 1])
        + verts[2, 0] * (verts[0, 1] - verts[1, 1])
    )
    if area2 < 1e-3:
        pytest.skip("nearly degenerate draw")
    coeffs = basis_coefficients(verts)
    for j, (a, b, c) in enumerate(coeffs):
        for i, (x, y) in enumerate(verts):
            expected = 1.0 if i == j else 0.0
            assert a * x + b * y + c == pytest.approx(expected, abs=1e-12)


def test_basis_kronecker_property_3d():
    rng = np.random.default_rng(11)
    verts = rng.uniform(-1, 1, size=(4, 3))
    coeffs = basis_coefficients(verts)
    for j, (a, b, d, c) in enumerate(coeffs):
        for i, (x, y, z) in enumerate(verts):
            expected = 1.0 if i == j else 0.0
            assert a * x + b * y + d * z + c == pytest.approx(expected, abs=1e-10)


def test_collinear_triangle_raises():
    with pytest.raises(SingularElementError):
        basis_coefficients([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])


def test_constant_field_maps_to_zero():
    mesh = dt.make_circle_mesh(6.0, 1.0)
    g = dt.assemble_gradient_matrices(mesh)
    mu = np.full(mesh.n_nodes, 3.7)
    assert np.abs(g.dx @ mu).max() < 1e-12
    assert np.abs(g.dy @ mu).max() < 1e-12


def test_linear_field_exactness_per_element():
    rng = np.random.default_rng(5)
    for _ in range(5):
        mesh = random_mesh(rng)
        g = dt.assemble_gradient_matrices(mesh)
        alpha, beta, gamma = rng.uniform(0.5, 2.0, size=3)
        mu = alpha * mesh.nodes[:, 0] + beta * mesh.nodes[:, 1] + gamma
        np.testing.assert_allclose(g.dx @ mu, alpha * g.element_measures, rtol=1e-12)
        np.testing.assert_allclose(g.dy @ mu, beta * g.element_measures, rtol=1e-12)


def test_unit_triangle_hand_case():
    mesh = unit_right_triangle()
    g = dt.assemble_gradient_matrices(mesh)
    mu = np.array([0.0, 1.0, 0.0])
    assert (g.dx @ mu)[0] == pytest.approx(0.5)
    assert (g.dy @ mu)[0] == pytest.approx(0.0)


def test_row_structure():
    mesh = dt.make_circle_mesh(6.0, 1.0)
    g = dt.assemble_gradient_matrices(mesh)
    for mat in g.per_direction:
        counts = np.diff(mat.indptr)
        assert (counts == 3).all()
        rowsums = np.asarray(mat.sum(axis=1)).ravel()
        rowmax = np.abs(mat).max(axis=1).toarray().ravel()
        assert (np.abs(rowsums) <= 1e-12 * np.maximum(rowmax, 1e-30)).all()


def test_3d_gradient_matrices_linear_exactness():
    nodes = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
        ]
    )
    elements = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])
    mesh = Mesh(nodes, elements)
    g = dt.assemble_gradient_matrices(mesh)
    alpha, beta, gamma = 1.5, -0.75, 0.25
    mu = alpha * nodes[:, 0] + beta * nodes[:, 1] + gamma * nodes[:, 2]
    np.testing.assert_allclose(g.dx @ mu, alpha * g.element_measures, rtol=1e-12)
    np.testing.assert_allclose(g.dy @ mu, beta * g.element_measures, rtol=1e-12)
    np.testing.assert_allclose(g.dz @ mu, gamma * g.element_measures, rtol=1e-12)


def test_tv_constant_is_zero():
    mesh = dt.make_circle_mesh(6.0, 1.0)
    g = dt.assemble_gradient_matrices(mesh)
    mu = np.full(mesh.n_nodes, 2.0)
    tol = 1e-12 * abs(g.dx).max() * mesh.n_elements
    assert dt.fe_tv_aniso(g, mu) <= tol
    assert dt.fe_tv_iso(g, mu) <= tol


def test_tv_of_linear_field_equals_area():
    mesh = dt.make_circle_mesh(6.0, 1.0)
    g = dt.assemble_gradient_matrices(mesh)
    mu = mesh.nodes[:, 0].copy()
    total_area = g.element_measures.sum()
    assert dt.fe_tv_aniso(g, mu) == pytest.approx(total_area, rel=1e-12)


def test_tv_iso_rotation_symmetry():
    mesh = dt.make_circle_mesh(6.0, 1.0)
    g = dt.assemble_gradient_matrices(mesh)
    assert dt.fe_tv_iso(g, mesh.nodes[:, 0].copy()) == pytest.approx(
        dt.fe_tv_iso(g, mesh.nodes[:, 1].copy()), rel=1e-12
    )


def test_tv_unit_triangle_hand_values():
    mesh = unit_right_triangle()
    g = dt.assemble_gradient_matrices(mesh)
    mu = np.array([0.0, 1.0, 1.0])
    assert dt.fe_tv_aniso(g, mu) == pytest.approx(1.0)
    assert dt.fe_tv_iso(g, mu) == pytest.approx(np.sqrt(0.5))


def test_tv_norm_equivalence_and_homogeneity():
    rng = np.random.default_rng(7)
    mesh = random_mesh(rng)
    g = dt.assemble_gradient_matrices(mesh)
    for _ in range(20):
        mu = rng.standard_normal(mesh.n_nodes)
        iso = dt.fe_tv_iso(g, mu)
        aniso = dt.fe_tv_aniso(g, mu)
        assert iso <= aniso + 1e-12
        assert aniso <= np.sqrt(2) * iso + 1e-12
        c = rng.uniform(-3, 3)
        assert dt.fe_tv_aniso(g, c * mu) == pytest.approx(abs(c) * aniso, rel=1e-10)
        assert dt.fe_tv_iso(g, c * mu) == pytest.approx(abs(c) * iso, rel=1e-10)


def test_field_length_mismatch():
    mesh = unit_right_triangle()
    g = dt.assemble_gradient_matrices(mesh)
    with pytest.raises(ValueError):
        dt.fe_tv_aniso(g, np.zeros(5))


def test_matrix_triplet_roundtrip(tmp_path):
    from dottv.fe_ops import export_matrix_triplets, load_matrix_triplets

    mesh = dt.make_circle_mesh(6.0, 1.0)
    g = dt.assemble_gradient_matrices(mesh)
    p = tmp_path / "dx.txt"
    export_matrix_triplets(g.dx, p)
    loaded = load_matrix_triplets(p)
    assert (loaded != g.dx).nnz == 0
