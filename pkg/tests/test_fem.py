# tests/test_fem.py - Mesh IO, P1 assembly and the generalized eigen-solve
import math

import numpy as np
import pytest

from backend.fem import (
    Mesh, analytic_square_eigenvalues, assemble_laplacian, assemble_mass, assemble_stiffness,
    evaluate, generate_rect_mesh, interior_nodes, load_mesh, mesh_from_spec, project,
    save_mesh, solve_generalized_eig, spatial_mean,
)
from core.errors import MeshError

TOL = 1e-13


@pytest.fixture
def reference_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), np.ones(3))


@pytest.fixture(scope="module")
def neumann_32():
    mesh = generate_rect_mesh(32, 32)
    M = assemble_mass(mesh)
    R = assemble_stiffness(mesh, eta=1.0, kappa=1.0)
    return mesh, M, solve_generalized_eig(R, M, 4)


class TestMesh:
    def test_rect_counts(self):
        mesh = generate_rect_mesh(4, 4)
        assert mesh.n_nodes == 25
        assert mesh.n_triangles == 32
        assert mesh.area() == pytest.approx(1.0, abs=TOL)
        assert int(mesh.boundary_flags.sum()) == 16
        assert interior_nodes(mesh).size == 9

    def test_rectangle_area(self):
        assert generate_rect_mesh(3, 5, width=2.0, height=0.5).area() == pytest.approx(1.0, abs=TOL)

    def test_spec_square(self):
        assert mesh_from_spec("square:3").n_nodes == 16

    def test_bad_spec(self):
        with pytest.raises(MeshError):
            mesh_from_spec("square:many")

    def test_round_trip(self, tmp_path, small_square):
        path = save_mesh(small_square, tmp_path / "sq.msh")
        again = load_mesh(path)
        np.testing.assert_array_equal(again.nodes, small_square.nodes)
        np.testing.assert_array_equal(again.triangles, small_square.triangles)
        np.testing.assert_array_equal(again.boundary_flags, small_square.boundary_flags)

    def test_degenerate_triangle(self):
        with pytest.raises(MeshError):
            Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]), np.zeros(3))

    def test_duplicate_nodes(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(MeshError, match="duplicate"):
            Mesh(nodes, np.array([[0, 1, 2]]), np.zeros(4))


class TestMeshFile:
    def _write(self, tmp_path, text):
        path = tmp_path / "mesh.msh"
        path.write_text(text, encoding="utf-8")
        return path

    def test_index_out_of_range(self, tmp_path):
        path = self._write(tmp_path, "3 1\n0 0 1\n1 0 1\n0 1 1\n1 2 4\n")
        with pytest.raises(MeshError, match="line 5"):
            load_mesh(path)

    def test_inverted_triangle(self, tmp_path):
        path = self._write(tmp_path, "3 1\n0 0 1\n1 0 1\n0 1 1\n1 3 2\n")
        with pytest.raises(MeshError, match="inverted"):
            load_mesh(path)

    def test_non_numeric_node(self, tmp_path):
        path = self._write(tmp_path, "3 1\n0 0 1\n1 x 1\n0 1 1\n1 2 3\n")
        with pytest.raises(MeshError, match="line 3"):
            load_mesh(path)

    def test_truncated(self, tmp_path):
        with pytest.raises(MeshError, match="truncated"):
            load_mesh(self._write(tmp_path, "3 1\n0 0 1\n1 0 1\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(MeshError):
            load_mesh(self._write(tmp_path, "\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError):
            load_mesh(tmp_path / "absent.msh")

    def test_trailing_edges_ignored(self, tmp_path):
        mesh = load_mesh(self._write(tmp_path, "3 1 3\n0 0 1\n1 0 1\n0 1 1\n1 2 3 0\n1 2 1\n2 3 1\n3 1 1\n"))
        assert mesh.n_triangles == 1


class TestAssembly:
    def test_reference_mass(self, reference_triangle):
        expected = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
        np.testing.assert_allclose(assemble_mass(reference_triangle).toarray(), expected, atol=TOL)

    def test_reference_stiffness(self, reference_triangle):
        expected = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        np.testing.assert_allclose(assemble_laplacian(reference_triangle).toarray(), expected, atol=TOL)

    def test_constants_in_kernel(self, small_square):
        K = assemble_laplacian(small_square)
        assert np.max(np.abs(K @ np.ones(small_square.n_nodes))) < 1e-12

    def test_mass_total_is_area(self, small_square):
        M = assemble_mass(small_square)
        ones = np.ones(small_square.n_nodes)
        assert ones @ (M @ ones) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self, small_square):
        R = assemble_stiffness(small_square, eta=0.3, kappa=2.0)
        assert abs(R - R.T).max() == 0.0

    @pytest.mark.parametrize("eta, kappa", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5), (math.nan, 1.0)])
    def test_invalid_coefficients(self, small_square, eta, kappa):
        with pytest.raises(ValueError):
            assemble_stiffness(small_square, eta=eta, kappa=kappa)


class TestEigen:
    def test_neumann_benchmark(self, neumann_32):
        _, _, basis = neumann_32
        assert basis.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
        assert basis.eigenvalues[1] == pytest.approx(1.0 + math.pi ** 2, rel=0.02)

    def test_m_orthonormal(self, neumann_32):
        _, M, basis = neumann_32
        gram = basis.vectors.T @ (M @ basis.vectors)
        np.testing.assert_allclose(gram, np.eye(basis.n_modes), atol=1e-10)

    def test_residual(self, neumann_32):
        mesh, M, basis = neumann_32
        R = assemble_stiffness(mesh, eta=1.0, kappa=1.0)
        for k in range(basis.n_modes):
            v = basis.vectors[:, k]
            assert np.linalg.norm(R @ v - basis.eigenvalues[k] * (M @ v)) < 1e-8

    def test_constant_mode_sign(self, neumann_32):
        _, _, basis = neumann_32
        assert np.all(basis.vectors[:, 0] > 0)

    def test_dirichlet_first_eigenvalue(self):
        mesh = generate_rect_mesh(16, 16)
        basis = solve_generalized_eig(
            assemble_laplacian(mesh), assemble_mass(mesh), 3, free_nodes=interior_nodes(mesh)
        )
        assert basis.eigenvalues[0] == pytest.approx(2.0 * math.pi ** 2, rel=0.05)
        assert np.all(basis.vectors[mesh.boundary_flags == 1] == 0.0)

    def test_sparse_matches_dense(self, small_square):
        M = assemble_mass(small_square)
        R = assemble_stiffness(small_square, eta=1.0, kappa=1.0)
        dense = solve_generalized_eig(R, M, 4)
        sparse = solve_generalized_eig(R, M, 4, dense_threshold=10)
        np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-8)

    def test_mode_cap(self):
        mesh = generate_rect_mesh(2, 2)
        basis = solve_generalized_eig(assemble_laplacian(mesh), assemble_mass(mesh), 50, free_nodes=interior_nodes(mesh))
        assert basis.n_modes == 1


class TestProjection:
    def test_project_inverts_evaluate(self, neumann_32):
        _, M, basis = neumann_32
        coeffs = np.array([0.5, -1.0, 2.0, 0.25])
        np.testing.assert_allclose(project(evaluate(basis, coeffs), basis, M), coeffs, atol=1e-10)

    def test_spatial_mean(self, small_square):
        assert spatial_mean(small_square, np.full(small_square.n_nodes, 3.0)) == pytest.approx(3.0, abs=1e-12)
        assert spatial_mean(small_square, np.ones(small_square.n_nodes), normalize=True) == pytest.approx(1.0)

    def test_length_mismatch(self, neumann_32):
        _, M, basis = neumann_32
        with pytest.raises(ValueError):
            project(np.ones(3), basis, M)


class TestAnalytic:
    def test_dirichlet_square(self):
        values = analytic_square_eigenvalues(3)
        np.testing.assert_allclose(values, [2.0 * math.pi ** 2, 5.0 * math.pi ** 2, 5.0 * math.pi ** 2])

    def test_neumann_shift(self):
        values = analytic_square_eigenvalues(2, k1=1.0, k2=1.0, dirichlet=False)
        np.testing.assert_allclose(values, [1.0, 1.0 + math.pi ** 2])

    def test_ascending(self):
        values = analytic_square_eigenvalues(150, width=1.0, height=0.25)
        assert np.all(np.diff(values) >= 0)
        assert values.size == 150
