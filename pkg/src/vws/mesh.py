"""Structured 2-D triangulations, piecewise fields, and quadrature.

Two domain kinds are supported: the unit square and a band below the graph
of a C^1 function (used for boundary-reflection experiments).  Every mesh is
a structured grid of quadrilateral cells, each split along the same diagonal
into two positively oriented triangles.  Scalar data lives either on
vertices (P1 nodal values) or on triangles (piecewise constants sampled at
centroids); gradients of vertex fields are piecewise constant, so all
integrals reduce to exact midpoint (centroid) quadrature.

All operations are pure functions of immutable inputs and use fixed
summation order, so results are deterministic for a given platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

VERTEX = "vertex"
TRIANGLE_SCALAR = "triangle_scalar"
TRIANGLE_VECTOR = "triangle_vector"
TRIANGLE_TENSOR = "triangle_tensor"

LAYOUTS = (VERTEX, TRIANGLE_SCALAR, TRIANGLE_VECTOR, TRIANGLE_TENSOR)


class MeshError(ValueError):
    """Invalid mesh construction or field/mesh mismatch."""


@dataclass(frozen=True)
class BoundaryGraph:
    """Graph function bounding a band domain from above.

    ``a`` maps x1 to the boundary height, ``da`` is its derivative; both
    must be finite wherever sampled.  ``alpha`` is the half-width of the
    chart (the band spans x1 in [0, alpha]), ``beta`` the band thickness,
    and ``r0`` a reference radius kept for reporting.
    """

    a: Callable[[np.ndarray], np.ndarray]
    da: Callable[[np.ndarray], np.ndarray]
    alpha: float = 1.0
    beta: float = 0.5
    r0: float = 0.25

    def heights(self, x1: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.a(np.asarray(x1, dtype=float)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise MeshError("graph function returned non-finite values")
        return vals

    def slopes(self, x1: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.da(np.asarray(x1, dtype=float)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise MeshError("graph derivative returned non-finite values")
        return vals


@dataclass(frozen=True)
class TriMesh:
    """Structured triangulation with boundary flags.

    ``resolution`` is the number of cells per row (grid spacing 1/M on the
    unit square).  ``rows`` is the number of cell rows; it equals
    ``resolution`` except for doubled reflection bands.  Triangles are
    stored as vertex triples with positive signed area; within cell (i, j)
    the lower triangle precedes the upper one.
    """

    resolution: int
    rows: int
    vertices: np.ndarray          # (nv, 2) float
    triangles: np.ndarray         # (nt, 3) int
    boundary_vertex_flags: np.ndarray  # (nv,) bool
    domain_kind: str              # "unit_square" or "graph_domain"
    graph: BoundaryGraph | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        got = self._cache.get("corners")
        if got is None:
            got = self.vertices[self.triangles]
            self._cache["corners"] = got
        return got

    @property
    def areas(self) -> np.ndarray:
        got = self._cache.get("areas")
        if got is None:
            p = self.corners
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            got = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            self._cache["areas"] = got
        return got

    @property
    def centroids(self) -> np.ndarray:
        got = self._cache.get("centroids")
        if got is None:
            got = self.corners.mean(axis=1)
            self._cache["centroids"] = got
        return got

    @property
    def domain_area(self) -> float:
        return float(self.areas.sum())

    @property
    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three nodal P1 basis functions, (nt, 3, 2).

        Computed from the inverse edge matrix; exact for affine data.
        """
        got = self._cache.get("basis_gradients")
        if got is None:
            p = self.corners
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            # rows of inv([[e1],[e2]])^T are the gradients of the two
            # barycentric coordinates attached to vertices 1 and 2
            g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
            g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
            g0 = -(g1 + g2)
            got = np.stack([g0, g1, g2], axis=1)
            self._cache["basis_gradients"] = got
        return got

    @property
    def vertex_triangles(self) -> list[np.ndarray]:
        """Incident triangle indices per vertex."""
        got = self._cache.get("vertex_triangles")
        if got is None:
            order = np.argsort(self.triangles.ravel(), kind="stable")
            flat = self.triangles.ravel()[order]
            tri_of = order // 3
            starts = np.searchsorted(flat, np.arange(self.n_vertices))
            ends = np.searchsorted(flat, np.arange(self.n_vertices), side="right")
            got = [tri_of[s:e] for s, e in zip(starts, ends)]
            self._cache["vertex_triangles"] = got
        return got

    def vertex_index(self, i: int, j: int) -> int:
        return j * (self.resolution + 1) + i

    def validate(self) -> None:
        if np.any(self.areas <= 0):
            raise MeshError("mesh contains non-positively oriented triangles")
        interior_edges = _interior_edge_counts(self.triangles)
        if interior_edges is not None and np.any(interior_edges > 2):
            raise MeshError("edge shared by more than two triangles")


def _interior_edge_counts(triangles: np.ndarray) -> np.ndarray | None:
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts


@dataclass(frozen=True)
class PiecewiseField:
    """Numeric data attached to a mesh in one of four layouts.

    vertex:           (nv, N)          nodal values (u)
    triangle_scalar:  (nt,)            weights, scalar densities
    triangle_vector:  (nt, 2, N)       gradients, right-hand sides
    triangle_tensor:  (nt, 2, N, 2, N) linear coefficient tensors
    """

    mesh: TriMesh
    layout: str
    values: np.ndarray

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise MeshError(f"unknown layout {self.layout!r}")
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        nv, nt = self.mesh.n_vertices, self.mesh.n_triangles
        shape = v.shape
        ok = (
            (self.layout == VERTEX and v.ndim == 2 and shape[0] == nv)
            or (self.layout == TRIANGLE_SCALAR and shape == (nt,))
            or (
                self.layout == TRIANGLE_VECTOR
                and v.ndim == 3
                and shape[0] == nt
                and shape[1] == 2
            )
            or (
                self.layout == TRIANGLE_TENSOR
                and v.ndim == 5
                and shape[0] == nt
                and shape[1] == 2
                and shape[3] == 2
                and shape[2] == shape[4]
            )
        )
        if not ok:
            raise MeshError(f"values of shape {shape} do not fit layout {self.layout}")
        if not np.all(np.isfinite(v)):
            raise MeshError("field contains non-finite entries")

    @property
    def n_components(self) -> int:
        if self.layout == VERTEX:
            return self.values.shape[1]
        if self.layout == TRIANGLE_VECTOR:
            return self.values.shape[2]
        if self.layout == TRIANGLE_TENSOR:
            return self.values.shape[2]
        return 1

    def with_values(self, values: np.ndarray) -> "PiecewiseField":
        return PiecewiseField(self.mesh, self.layout, values)


def vertex_field(mesh: TriMesh, values: np.ndarray) -> PiecewiseField:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return PiecewiseField(mesh, VERTEX, v)


def triangle_scalar_field(mesh: TriMesh, values: np.ndarray) -> PiecewiseField:
    return PiecewiseField(mesh, TRIANGLE_SCALAR, np.asarray(values, dtype=float))


def triangle_vector_field(mesh: TriMesh, values: np.ndarray) -> PiecewiseField:
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[:, :, None]
    return PiecewiseField(mesh, TRIANGLE_VECTOR, v)


def triangle_tensor_field(mesh: TriMesh, values: np.ndarray) -> PiecewiseField:
    return PiecewiseField(mesh, TRIANGLE_TENSOR, np.asarray(values, dtype=float))


def build_unit_square_mesh(resolution: int) -> TriMesh:
    """Triangulate the unit square with M^2 cells, 2 M^2 triangles.

    Each cell is split along the diagonal from its lower-left to its
    upper-right corner; both triangles are counterclockwise with area
    h^2 / 2.
    """
    M = int(resolution)
    if M < 2:
        raise MeshError("resolution must be at least 2")
    return _build_structured(M, M, _unit_square_vertices(M), "unit_square", None)


def _unit_square_vertices(M: int) -> np.ndarray:
    coords = np.arange(M + 1) / M
    X, Y = np.meshgrid(coords, coords, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def build_graph_band_mesh(
    graph: BoundaryGraph, resolution: int, rows: int | None = None
) -> TriMesh:
    """Mesh the band below the graph: x2 in [a(x1) - beta, a(x1)].

    The parameter square is mapped through
    (x1, t) -> (x1 * alpha, a(x1 * alpha) - beta + t * beta), which keeps
    the connectivity structured; every cell still has area
    (alpha/M) * (beta/M) / 2 exactly because the map is a vertical shear.
    With ``rows = 2 M`` the band extends to a(x1) + beta (used for the
    reflected extension).
    """
    M = int(resolution)
    if M < 2:
        raise MeshError("resolution must be at least 2")
    rows = M if rows is None else int(rows)
    x1 = np.arange(M + 1) / M * graph.alpha
    heights = graph.heights(x1)
    dy = graph.beta / M
    xs = np.tile(x1, rows + 1)
    js = np.repeat(np.arange(rows + 1), M + 1)
    ys = heights[np.tile(np.arange(M + 1), rows + 1)] - graph.beta + js * dy
    verts = np.column_stack([xs, ys])
    return _build_structured(M, rows, verts, "graph_domain", graph)


def _build_structured(
    M: int, rows: int, verts: np.ndarray, kind: str, graph: BoundaryGraph | None
) -> TriMesh:
    ii, jj = np.meshgrid(np.arange(M), np.arange(rows), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = jj * (M + 1) + ii
    v10 = v00 + 1
    v01 = v00 + (M + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.empty((2 * M * rows, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    gx, gy = np.meshgrid(np.arange(M + 1), np.arange(rows + 1), indexing="xy")
    on_boundary = (
        (gx.ravel() == 0) | (gx.ravel() == M) | (gy.ravel() == 0) | (gy.ravel() == rows)
    )
    mesh = TriMesh(
        resolution=M,
        rows=rows,
        vertices=verts,
        triangles=tris,
        boundary_vertex_flags=on_boundary,
        domain_kind=kind,
        graph=graph,
    )
    mesh.validate()
    return mesh


def gradient(u: PiecewiseField) -> PiecewiseField:
    """Piecewise-constant gradient of a vertex field, (nt, 2, N).

    Exact for affine data by construction of the basis gradients.
    """
    if u.layout != VERTEX:
        raise MeshError("gradient expects a vertex-layout field")
    mesh = u.mesh
    z = u.values[mesh.triangles]          # (nt, 3, N)
    g = np.einsum("tli,tlc->tic", mesh.basis_gradients, z)
    return PiecewiseField(mesh, TRIANGLE_VECTOR, g)


def field_magnitude(f: PiecewiseField) -> np.ndarray:
    """Pointwise Frobenius magnitude per triangle (or |value| per vertex)."""
    if f.layout == TRIANGLE_SCALAR:
        return np.abs(f.values)
    if f.layout == TRIANGLE_VECTOR:
        return np.sqrt(np.einsum("tic,tic->t", f.values, f.values))
    if f.layout == VERTEX:
        return np.sqrt(np.einsum("vc,vc->v", f.values, f.values))
    raise MeshError(f"magnitude undefined for layout {f.layout}")


def weighted_lp_norm(g: PiecewiseField, omega: PiecewiseField, p: float) -> float:
    """(sum_T |g_T|^p w_T |T|)^(1/p): midpoint quadrature of the weighted norm."""
    if p <= 0:
        raise ValueError("p must be positive")
    w = _triangle_weight_values(omega, g.mesh)
    if np.any(w <= 0):
        raise ValueError("weight must be strictly positive on all triangles")
    mag = field_magnitude(g)
    return float(np.sum(mag**p * w * g.mesh.areas) ** (1.0 / p))


def lp_norm(g: PiecewiseField, p: float) -> float:
    ones = triangle_scalar_field(g.mesh, np.ones(g.mesh.n_triangles))
    return weighted_lp_norm(g, ones, p)


def weighted_integral(
    values: np.ndarray, omega: np.ndarray, mesh: TriMesh, mask: np.ndarray | None = None
) -> float:
    """sum over triangles of values * omega * area, optionally masked."""
    contrib = values * omega * mesh.areas
    if mask is not None:
        contrib = contrib[mask]
    return float(contrib.sum())


def _triangle_weight_values(omega: PiecewiseField, mesh: TriMesh) -> np.ndarray:
    if omega.mesh is not mesh and omega.mesh.n_triangles != mesh.n_triangles:
        raise MeshError("weight lives on a different mesh")
    if omega.layout == TRIANGLE_SCALAR:
        return omega.values
    if omega.layout == VERTEX and omega.values.shape[1] == 1:
        return vertex_to_triangle(omega)
    raise MeshError("weight must be a scalar field")


def vertex_to_triangle(u: PiecewiseField) -> np.ndarray:
    """Corner-mean per triangle of a scalar vertex field."""
    if u.layout != VERTEX or u.values.shape[1] != 1:
        raise MeshError("expected a scalar vertex field")
    return u.values[:, 0][u.mesh.triangles].mean(axis=1)


def interpolate_vertices(mesh: TriMesh, fn: Callable[[np.ndarray], np.ndarray]) -> PiecewiseField:
    """Vertex field from a callable of point coordinates (nv, 2) -> (nv,) or (nv, N)."""
    vals = np.asarray(fn(mesh.vertices), dtype=float)
    return vertex_field(mesh, vals)


def sample_triangle_vector(
    mesh: TriMesh, fn: Callable[[np.ndarray], np.ndarray]
) -> PiecewiseField:
    """Triangle vector field sampled at centroids; fn maps (nt, 2) -> (nt, 2[, N])."""
    vals = np.asarray(fn(mesh.centroids), dtype=float)
    return triangle_vector_field(mesh, vals)


# ---------------------------------------------------------------------------
# Boundary reflection across the graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReflectedBand:
    """Extended fields on the doubled band, plus the discrete mirror maps."""

    mesh: TriMesh           # band of 2M rows spanning [a - beta, a + beta]
    u: PiecewiseField
    f: PiecewiseField
    coeff: PiecewiseField
    omega: PiecewiseField
    vertex_mirror: np.ndarray    # (nv,) index of the mirrored vertex
    triangle_mirror: np.ndarray  # (nt,) index of the mirrored triangle


def graph_reflection_point(mesh: TriMesh, x: np.ndarray) -> np.ndarray:
    """Mirror points across the mesh's piecewise-linear boundary graph.

    Uses the interpolated graph heights carried by the mesh so the map is
    affine on each triangle and an exact involution.
    """
    if mesh.graph is None:
        raise MeshError("mesh carries no boundary graph")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = _pl_graph_height(mesh, x[:, 0])
    return np.column_stack([x[:, 0], 2.0 * a - x[:, 1]])


def graph_reflection_jacobian(mesh: TriMesh, x1: np.ndarray) -> np.ndarray:
    """Jacobian of the mirror map, (m, 2, 2); |det| = 1 identically."""
    if mesh.graph is None:
        raise MeshError("mesh carries no boundary graph")
    slope = _pl_graph_slope(mesh, np.atleast_1d(np.asarray(x1, dtype=float)))
    if not np.all(np.isfinite(slope)):
        raise MeshError("degenerate reflection Jacobian")
    J = np.zeros(slope.shape + (2, 2))
    J[:, 0, 0] = 1.0
    J[:, 1, 0] = 2.0 * slope
    J[:, 1, 1] = -1.0
    return J


def _graph_grid(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    got = mesh._cache.get("graph_grid")
    if got is None:
        M = mesh.resolution
        x1 = np.arange(M + 1) / M * mesh.graph.alpha
        got = (x1, mesh.graph.heights(x1))
        mesh._cache["graph_grid"] = got
    return got


def _pl_graph_height(mesh: TriMesh, x1: np.ndarray) -> np.ndarray:
    grid, heights = _graph_grid(mesh)
    return np.interp(x1, grid, heights)


def _pl_graph_slope(mesh: TriMesh, x1: np.ndarray) -> np.ndarray:
    grid, heights = _graph_grid(mesh)
    M = mesh.resolution
    strip = np.clip(
        (x1 / mesh.graph.alpha * M).astype(int), 0, M - 1
    )
    return (heights[strip + 1] - heights[strip]) / (grid[strip + 1] - grid[strip])


def reflect_extend(
    u: PiecewiseField,
    f: PiecewiseField,
    coeff: PiecewiseField,
    omega: PiecewiseField,
    graph: BoundaryGraph,
    trace_tol: float = 1e-12,
) -> ReflectedBand:
    """Extend (u, f, coeff, omega) from the band below the graph to its mirror.

    u must vanish on the graph row (checked against ``trace_tol`` times its
    max magnitude).  The extension is odd in u, transforms f by -J f and the
    coefficient tensor by J A J^T in the two spatial slots, and transports
    the weight unchanged.  The mirror map is affine per triangle, so the
    extended discrete weak form is an exact reflection of the original one.
    """
    mesh = u.mesh
    if mesh.domain_kind != "graph_domain" or mesh.rows != mesh.resolution:
        raise MeshError("reflect_extend expects a single-band graph mesh")
    if u.layout != VERTEX:
        raise MeshError("u must be a vertex field")
    M = mesh.resolution
    top = slice(M * (M + 1), (M + 1) * (M + 1))
    scale = float(np.max(np.abs(u.values))) or 1.0
    if np.max(np.abs(u.values[top])) > trace_tol * scale:
        raise MeshError("u has non-zero trace on the graph boundary")

    big = build_graph_band_mesh(graph, M, rows=2 * M)
    nv_small = mesh.n_vertices
    nt_small = mesh.n_triangles

    # vertex mirror: (i, j) <-> (i, 2M - j); rows match exactly by construction
    ii = np.tile(np.arange(M + 1), 2 * M + 1)
    jj = np.repeat(np.arange(2 * M + 1), M + 1)
    vertex_mirror = (2 * M - jj) * (M + 1) + ii

    u_ext = np.empty((big.n_vertices, u.values.shape[1]))
    u_ext[:nv_small] = u.values
    u_ext[nv_small:] = -u.values[vertex_mirror[nv_small:]]

    # triangle mirror: cell (i, j) <-> cell (i, 2M - 1 - j), lower <-> upper
    tt = np.arange(big.n_triangles)
    cell = tt // 2
    ci = cell % M
    cj = cell // M
    parity = tt % 2
    triangle_mirror = 2 * ((2 * M - 1 - cj) * M + ci) + (1 - parity)

    mirror_of_new = triangle_mirror[nt_small:]
    slopes = _pl_graph_slope(big, big.centroids[nt_small:, 0])
    J = np.zeros((len(slopes), 2, 2))
    J[:, 0, 0] = 1.0
    J[:, 1, 0] = 2.0 * slopes
    J[:, 1, 1] = -1.0
    if not np.all(np.isfinite(J)):
        raise MeshError("degenerate reflection Jacobian")

    f_ext = np.empty((big.n_triangles,) + f.values.shape[1:])
    f_ext[:nt_small] = f.values
    f_ext[nt_small:] = -np.einsum("tik,tkc->tic", J, f.values[mirror_of_new])

    A_ext = np.empty((big.n_triangles,) + coeff.values.shape[1:])
    A_ext[:nt_small] = coeff.values
    A_ext[nt_small:] = np.einsum(
        "tik,tkujv,tjl->tiulv", J, coeff.values[mirror_of_new], J
    )

    w_ext = np.empty(big.n_triangles)
    w_ext[:nt_small] = omega.values
    w_ext[nt_small:] = omega.values[mirror_of_new]

    return ReflectedBand(
        mesh=big,
        u=PiecewiseField(big, VERTEX, u_ext),
        f=PiecewiseField(big, TRIANGLE_VECTOR, f_ext),
        coeff=PiecewiseField(big, TRIANGLE_TENSOR, A_ext),
        omega=PiecewiseField(big, TRIANGLE_SCALAR, w_ext),
        vertex_mirror=vertex_mirror,
        triangle_mirror=triangle_mirror,
    )
