# backend/fem.py - P1 finite elements on triangle meshes and the generalized eigenproblem
"""
Meshes, P1 mass/stiffness assembly and the eigenpairs of R v = lambda M v
that drive the spectral decomposition.

Mesh text format (FreeFem-compatible subset, indices 1-based):
    nv nt [nbe]
    x y [flag]          nv lines, flag != 0 marks a boundary node
    i j k [label]       nt lines
    ...                 anything after the triangles (boundary edges) is ignored
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg
from scipy.spatial import cKDTree

from config.constants import MESH_DEGENERATE_AREA, MESH_DUPLICATE_TOL
from config.settings import SolverSettings
from core.errors import EigenSolveError, MeshError

logger = logging.getLogger(__name__)

_MASS_TEMPLATE = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with counterclockwise triangles"""
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_flags: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        triangles = np.asarray(self.triangles, dtype=np.int64)
        flags = np.asarray(self.boundary_flags, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "boundary_flags", flags)
        self._validate()

    def _validate(self) -> None:
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2 or self.nodes.shape[0] == 0:
            raise MeshError("mesh has no nodes")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or self.triangles.shape[0] == 0:
            raise MeshError("mesh has no triangles")
        if self.boundary_flags.shape != (self.nodes.shape[0],):
            raise MeshError("boundary_flags must have one entry per node")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("node coordinates must be finite")
        n = self.nodes.shape[0]
        bad = np.flatnonzero((self.triangles < 0).any(axis=1) | (self.triangles >= n).any(axis=1))
        if bad.size:
            raise MeshError("triangle references a missing node", [(None, f"triangle {i + 1}") for i in bad[:10]])
        areas = self.signed_areas()
        inverted = np.flatnonzero(areas < -MESH_DEGENERATE_AREA)
        if inverted.size:
            raise MeshError("inverted (clockwise) triangles", [(None, f"triangle {i + 1}") for i in inverted[:10]])
        degenerate = np.flatnonzero(np.abs(areas) <= MESH_DEGENERATE_AREA)
        if degenerate.size:
            raise MeshError("degenerate triangles", [(None, f"triangle {i + 1}") for i in degenerate[:10]])
        pairs = cKDTree(self.nodes).query_pairs(r=MESH_DUPLICATE_TOL)
        if pairs:
            i, j = sorted(min(pairs))
            raise MeshError(f"duplicate nodes {i + 1} and {j + 1}")

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self) -> float:
        return float(np.sum(self.signed_areas()))


def generate_rect_mesh(nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> Mesh:
    """Structured mesh of [0, width] x [0, height], two triangles per cell"""
    if nx < 1 or ny < 1 or not (width > 0 and height > 0):
        raise MeshError(f"rectangle mesh needs nx, ny >= 1 and positive sides, got {nx}x{ny}, {width}x{height}")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    # Step 1: split every cell (i, j) along its diagonal
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n00 = (j * (nx + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    triangles = np.vstack([
        np.column_stack([n00, n10, n11]),
        np.column_stack([n00, n11, n01]),
    ])

    # Step 2: flag boundary nodes
    on_edge = (
        np.isclose(nodes[:, 0], 0.0) | np.isclose(nodes[:, 0], width)
        | np.isclose(nodes[:, 1], 0.0) | np.isclose(nodes[:, 1], height)
    )
    return Mesh(nodes, triangles, on_edge.astype(np.int64))


def mesh_from_spec(spec: str) -> Mesh:
    """`square:N` for the unit square with N x N cells, otherwise a mesh file path"""
    if spec.startswith("square:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise MeshError(f"bad mesh spec '{spec}', expected square:N") from exc
        return generate_rect_mesh(n, n)
    return load_mesh(spec)


def _numbers(text: str, line_no: int, issues: list, kind: str, count: int, cast=float) -> Optional[list]:
    fields = text.split()
    if len(fields) < count:
        issues.append((line_no, f"{kind} needs {count} values, got {len(fields)}"))
        return None
    try:
        return [cast(x) for x in fields[:count]] + fields[count:]
    except ValueError:
        issues.append((line_no, f"{kind} has a non-numeric value: {text.strip()!r}"))
        return None


def load_mesh(path: Union[str, Path]) -> Mesh:
    """Parse the mesh text format; every problem is reported with its line number"""
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    lines = [(no, text) for no, text in enumerate(raw_lines, start=1) if text.strip() and not text.lstrip().startswith("#")]
    if not lines:
        raise MeshError(f"mesh file {path} is empty")

    issues: List[Tuple[Optional[int], str]] = []
    header_no, header = lines[0]
    counts = _numbers(header, header_no, issues, "header", 2, int)
    if counts is None:
        raise MeshError(f"invalid mesh file {path}", issues)
    nv, nt = counts[0], counts[1]
    if nv <= 0:
        raise MeshError(f"mesh file {path} declares no nodes", [(header_no, header.strip())])
    if nt <= 0:
        raise MeshError(f"mesh file {path} declares no triangles", [(header_no, header.strip())])
    body = lines[1:]
    if len(body) < nv + nt:
        raise MeshError(f"mesh file {path} is truncated: expected {nv} nodes and {nt} triangles")

    nodes = np.zeros((nv, 2))
    flags = np.zeros(nv, dtype=np.int64)
    for k, (no, text) in enumerate(body[:nv]):
        values = _numbers(text, no, issues, "node", 2)
        if values is None:
            continue
        nodes[k] = values[:2]
        if len(values) > 2:
            try:
                flags[k] = int(values[2])
            except ValueError:
                issues.append((no, f"node flag is not an integer: {values[2]!r}"))

    triangles = np.zeros((nt, 3), dtype=np.int64)
    for k, (no, text) in enumerate(body[nv:nv + nt]):
        values = _numbers(text, no, issues, "triangle", 3, int)
        if values is None:
            continue
        idx = values[:3]
        out_of_range = [i for i in idx if not 1 <= i <= nv]
        if out_of_range:
            issues.append((no, f"triangle {k + 1} references node(s) {out_of_range} outside 1..{nv}"))
            continue
        triangles[k] = [i - 1 for i in idx]
    if issues:
        raise MeshError(f"invalid mesh file {path}", issues)

    p = nodes[triangles]
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    for k in np.flatnonzero(signed <= MESH_DEGENERATE_AREA):
        no = body[nv + k][0]
        kind = "degenerate" if abs(signed[k]) <= MESH_DEGENERATE_AREA else "inverted (clockwise)"
        issues.append((no, f"triangle {k + 1} is {kind}"))
    if issues:
        raise MeshError(f"invalid mesh file {path}", issues)
    logger.info("Loaded mesh %s: %d nodes, %d triangles", path, nv, nt)
    return Mesh(nodes, triangles, flags)


def save_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """Write a mesh in the text format read by load_mesh"""
    path = Path(path)
    rows = [f"{mesh.n_nodes} {mesh.n_triangles}"]
    rows += [f"{x!r} {y!r} {int(flag)}" for (x, y), flag in zip(mesh.nodes.tolist(), mesh.boundary_flags)]
    rows += [" ".join(str(int(i) + 1) for i in tri) for tri in mesh.triangles]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def _element_data(mesh: Mesh):
    areas = mesh.signed_areas()
    if np.any(areas <= MESH_DEGENERATE_AREA):
        bad = np.flatnonzero(areas <= MESH_DEGENERATE_AREA)
        raise MeshError("degenerate triangles", [(None, f"triangle {i + 1}") for i in bad[:10]])
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return areas, rows, cols


def _assemble(mesh: Mesh, local: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_nodes
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return ((matrix + matrix.T) * 0.5).tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix, symmetric positive definite"""
    areas, rows, cols = _element_data(mesh)
    local = areas[:, None, None] * _MASS_TEMPLATE[None, :, :]
    return _assemble(mesh, local, rows, cols)


def _gradient_matrix(mesh: Mesh) -> np.ndarray:
    areas = mesh.signed_areas()
    p = mesh.nodes[mesh.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return np.stack([b, c], axis=1) / (2.0 * areas)[:, None, None]


def assemble_laplacian(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix of the Laplacian, integral of grad phi_i . grad phi_j"""
    areas, rows, cols = _element_data(mesh)
    grads = _gradient_matrix(mesh)
    local = areas[:, None, None] * np.einsum("eki,ekj->eij", grads, grads)
    return _assemble(mesh, local, rows, cols)


def assemble_stiffness(mesh: Mesh, eta: float, kappa: float = 1.0) -> sp.csr_matrix:
    """R = eta * K + kappa * M"""
    if not (math.isfinite(eta) and eta > 0):
        raise ValueError(f"eta must be positive, got {eta!r}")
    if not (math.isfinite(kappa) and kappa >= 0):
        raise ValueError(f"kappa must be >= 0, got {kappa!r}")
    stiffness = eta * assemble_laplacian(mesh)
    if kappa:
        stiffness = stiffness + kappa * assemble_mass(mesh)
    return stiffness.tocsr()


def interior_nodes(mesh: Mesh) -> np.ndarray:
    """Indices of nodes with boundary flag 0 (free under Dirichlet conditions)"""
    return np.flatnonzero(mesh.boundary_flags == 0)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Ascending eigenvalues and M-orthonormal full-length eigenvectors (columns)"""
    eigenvalues: np.ndarray
    vectors: np.ndarray
    free_nodes: Optional[np.ndarray] = None

    @property
    def n_modes(self) -> int:
        return int(self.eigenvalues.size)

    def truncated(self, n_modes: int) -> "EigenBasis":
        return EigenBasis(self.eigenvalues[:n_modes], self.vectors[:, :n_modes], self.free_nodes)


def _normalize(vectors: np.ndarray, mass: sp.spmatrix) -> np.ndarray:
    # M-orthonormalise: V <- V L^{-T} with L L^T = V^T M V
    gram = vectors.T @ (mass @ vectors)
    gram = 0.5 * (gram + gram.T)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError("eigenvectors are not linearly independent in the M inner product") from exc
    vectors = scipy.linalg.solve_triangular(chol, vectors.T, lower=True).T
    # sign: first clearly nonzero component positive
    for k in range(vectors.shape[1]):
        column = vectors[:, k]
        scale = np.max(np.abs(column))
        first = np.flatnonzero(np.abs(column) > 1e-12 * scale)
        if first.size and column[first[0]] < 0:
            vectors[:, k] = -column
    return vectors


def solve_generalized_eig(R: sp.spmatrix, M: sp.spmatrix, n_modes: int,
                          free_nodes: Optional[Sequence[int]] = None,
                          dense_threshold: Optional[int] = None) -> EigenBasis:
    """
    Lowest n_modes eigenpairs of R v = lambda M v. With free_nodes the problem
    is restricted to those rows/columns (Dirichlet) and vectors are returned
    at full length with zeros elsewhere.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    R = sp.csr_matrix(R)
    M = sp.csr_matrix(M)
    n_total = R.shape[0]
    if free_nodes is not None:
        free = np.asarray(free_nodes, dtype=np.int64)
        R = R[free][:, free]
        M = M[free][:, free]
    else:
        free = None
    dim = R.shape[0]
    if dim == 0:
        raise EigenSolveError("no free degrees of freedom")
    if n_modes > dim:
        logger.info("Requested %d modes but dimension is %d; capping", n_modes, dim)
        n_modes = dim
    threshold = SolverSettings.DENSE_EIGEN_THRESHOLD if dense_threshold is None else dense_threshold

    try:
        if dim <= threshold:
            values, vectors = scipy.linalg.eigh(R.toarray(), M.toarray(), subset_by_index=[0, n_modes - 1])
        else:
            k = min(n_modes, dim - 1)
            values, vectors = scipy.sparse.linalg.eigsh(R.tocsc(), k=k, M=M.tocsc(), sigma=-1.0, which="LM")
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError, ValueError) as exc:
        raise EigenSolveError(f"generalized eigen-solve failed: {exc}") from exc

    order = np.argsort(values, kind="stable")
    values = np.asarray(values[order], dtype=float)
    vectors = _normalize(np.asarray(vectors[:, order], dtype=float), M)

    if free is not None:
        full = np.zeros((n_total, vectors.shape[1]))
        full[free] = vectors
        vectors = full
    logger.info("Eigen-solve: %d modes, lambda_1=%.6g, lambda_max=%.6g", values.size, values[0], values[-1])
    return EigenBasis(values, vectors, free)


def project(nodal_values: np.ndarray, basis: EigenBasis, M: sp.spmatrix) -> np.ndarray:
    """Modal coefficients v_k^T M u"""
    nodal_values = np.asarray(nodal_values, dtype=float)
    if nodal_values.shape[0] != basis.vectors.shape[0]:
        raise ValueError(f"nodal vector has length {nodal_values.shape[0]}, mesh has {basis.vectors.shape[0]} nodes")
    return basis.vectors.T @ (M @ nodal_values)


def evaluate(basis: EigenBasis, coeffs: np.ndarray) -> np.ndarray:
    """Nodal field sum_k c_k v_k"""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] > basis.n_modes:
        raise ValueError(f"{coeffs.shape[0]} coefficients for a basis of {basis.n_modes} modes")
    return basis.vectors[:, :coeffs.shape[0]] @ coeffs


def spatial_mean(mesh: Mesh, nodal_values: np.ndarray, M: Optional[sp.spmatrix] = None,
                 normalize: bool = False) -> float:
    """Integral of the P1 field over the domain, 1^T M u; divided by the area when normalize"""
    M = assemble_mass(mesh) if M is None else M
    total = float(np.ones(mesh.n_nodes) @ (M @ np.asarray(nodal_values, dtype=float)))
    return total / mesh.area() if normalize else total


def analytic_square_eigenvalues(n_modes: int, k1: float = 1.0, k2: float = 0.0, dirichlet: bool = True,
                                width: float = 1.0, height: float = 1.0) -> np.ndarray:
    """Eigenvalues k1 pi^2 (m^2/w^2 + n^2/h^2) + k2 of -k1 Laplacian + k2 on a rectangle"""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    start = 1 if dirichlet else 0
    bound = int(2 * math.sqrt(n_modes) * max(width, height) / min(width, height)) + 3
    m, n = np.meshgrid(np.arange(start, start + bound), np.arange(start, start + bound))
    values = k1 * math.pi ** 2 * ((m / width) ** 2 + (n / height) ** 2) + k2
    return np.sort(values.ravel())[:n_modes]
