"""Structured tensor-product meshes and Taylor-Hood (Q2/Q1) function spaces."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

__all__ = [
    "BoundaryTag",
    "ProblemKind",
    "StructuredMesh",
    "TaylorHoodSpace",
    "build_structured_mesh",
    "tag_boundaries",
    "build_taylor_hood_space",
]


class BoundaryTag(Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"
    WALL = "wall"
    COMPRESSION = "compression"


class ProblemKind(Enum):
    MANDEL = "mandel"
    FOOTING = "footing"


@dataclass(frozen=True)
class StructuredMesh:
    """Axis-aligned tensor-product grid of quadrilateral/hexahedral cells.

    Facets are addressed by ``(cell_id, local_face)`` where
    ``local_face = 2 * axis + side`` (side 0: low coordinate, side 1: high).
    ``boundary_facets`` maps every exterior facet to its tag (``None`` until
    :func:`tag_boundaries` has run).
    """

    origin: np.ndarray
    extent: np.ndarray
    cells_per_axis: tuple[int, ...]
    vertex_coords: np.ndarray
    cell_connectivity: np.ndarray
    boundary_facets: dict[tuple[int, int], BoundaryTag | None]
    # tags the applied tagging scheme may assign; a valid tag can still own
    # zero facets (e.g. Compression on a grid coarser than the patch)
    valid_tags: frozenset = frozenset()

    @property
    def spatial_dim(self) -> int:
        return len(self.cells_per_axis)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def n_vertices(self) -> int:
        return self.vertex_coords.shape[0]

    @property
    def cell_size(self) -> np.ndarray:
        """Edge lengths of a single cell (constant over the grid)."""
        return self.extent / np.asarray(self.cells_per_axis, dtype=float)

    def cell_multi_index(self, cell_id: int) -> tuple[int, ...]:
        idx = []
        rem = cell_id
        for n in self.cells_per_axis:
            idx.append(rem % n)
            rem //= n
        return tuple(idx)

    def facet_centroid(self, cell_id: int, local_face: int) -> np.ndarray:
        axis, side = divmod(local_face, 2)
        h = self.cell_size
        lo = self.origin + np.asarray(self.cell_multi_index(cell_id)) * h
        centroid = lo + 0.5 * h
        centroid[axis] = lo[axis] + side * h[axis]
        return centroid

    def facet_area(self, local_face: int) -> float:
        axis = local_face // 2
        h = self.cell_size
        return float(np.prod(np.delete(h, axis)))

    def facet_normal(self, local_face: int) -> np.ndarray:
        axis, side = divmod(local_face, 2)
        n = np.zeros(self.spatial_dim)
        n[axis] = -1.0 if side == 0 else 1.0
        return n

    def facets_with_tag(self, tag: BoundaryTag) -> list[tuple[int, int]]:
        return [f for f, t in self.boundary_facets.items() if t is tag]


def build_structured_mesh(origin, extent, cells_per_axis) -> StructuredMesh:
    """Build a tensor-product mesh of the box ``[origin, origin + extent]``.

    Raises ``ValueError`` for non-positive extents or cell counts and for
    dimensions outside {2, 3}.
    """
    origin = np.asarray(origin, dtype=float)
    extent = np.asarray(extent, dtype=float)
    cells = tuple(int(n) for n in cells_per_axis)
    dim = len(cells)
    if dim not in (2, 3):
        raise ValueError(f"spatial dimension must be 2 or 3, got {dim}")
    if origin.shape != (dim,) or extent.shape != (dim,):
        raise ValueError("origin/extent dimension mismatch with cells_per_axis")
    if np.any(extent <= 0.0):
        raise ValueError(f"extents must be positive, got {extent}")
    if any(n < 1 for n in cells):
        raise ValueError(f"cell counts must be >= 1, got {cells}")

    nv_axis = [n + 1 for n in cells]
    n_vertices = int(np.prod(nv_axis))
    ids = np.arange(n_vertices)
    coords = np.empty((n_vertices, dim))
    rem = ids
    for ax in range(dim):
        coords[:, ax] = origin[ax] + (rem % nv_axis[ax]) * extent[ax] / cells[ax]
        rem = rem // nv_axis[ax]

    n_cells = int(np.prod(cells))
    cid = np.arange(n_cells)
    cell_idx = np.empty((n_cells, dim), dtype=np.int64)
    rem = cid
    for ax in range(dim):
        cell_idx[:, ax] = rem % cells[ax]
        rem = rem // cells[ax]

    # vertex strides for x-fastest numbering
    strides = np.cumprod([1] + nv_axis[:-1])
    corner_offsets = _lex_corners(dim)  # (2^dim, dim) in {0,1}
    conn = np.zeros((n_cells, 2**dim), dtype=np.int64)
    for loc, off in enumerate(corner_offsets):
        conn[:, loc] = (cell_idx + off) @ strides

    boundary: dict[tuple[int, int], BoundaryTag | None] = {}
    for ax in range(dim):
        for side in (0, 1):
            layer = cells[ax] - 1 if side == 1 else 0
            on_face = cid[cell_idx[:, ax] == layer]
            for c in on_face:
                boundary[(int(c), 2 * ax + side)] = None

    return StructuredMesh(origin, extent, cells, coords, conn, boundary)


def _lex_corners(dim: int) -> np.ndarray:
    loc = np.arange(2**dim)
    out = np.empty((2**dim, dim), dtype=np.int64)
    for ax in range(dim):
        out[:, ax] = (loc >> ax) & 1
    return out


def tag_boundaries(mesh: StructuredMesh, problem_kind: ProblemKind) -> StructuredMesh:
    """Tag all exterior facets for the given benchmark geometry.

    Mandel (2D): Left/Right on the x-axis faces, Bottom/Top on the y-axis
    faces.  Footing (3D): Bottom/Top on the z-axis faces, Wall on the four
    lateral faces; top facets whose centroids fall inside the centered patch
    of half the domain side length are tagged Compression instead of Top.
    Exact patch coverage needs the lateral cell counts divisible by 4; on
    coarser grids facets straddling the patch edge stay Top.
    """
    dim = mesh.spatial_dim
    if problem_kind is ProblemKind.MANDEL and dim != 2:
        raise ValueError(f"Mandel meshes are 2D, got dimension {dim}")
    if problem_kind is ProblemKind.FOOTING and dim != 3:
        raise ValueError(f"footing meshes are 3D, got dimension {dim}")

    if problem_kind is ProblemKind.MANDEL:
        valid = frozenset({BoundaryTag.LEFT, BoundaryTag.RIGHT,
                           BoundaryTag.TOP, BoundaryTag.BOTTOM})
    else:
        valid = frozenset({BoundaryTag.BOTTOM, BoundaryTag.TOP,
                           BoundaryTag.WALL, BoundaryTag.COMPRESSION})
    center = mesh.origin + 0.5 * mesh.extent
    quarter = 0.25 * mesh.extent
    tagged: dict[tuple[int, int], BoundaryTag | None] = {}
    for (cell, face) in mesh.boundary_facets:
        axis, side = divmod(face, 2)
        if problem_kind is ProblemKind.MANDEL:
            tag = {
                (0, 0): BoundaryTag.LEFT,
                (0, 1): BoundaryTag.RIGHT,
                (1, 0): BoundaryTag.BOTTOM,
                (1, 1): BoundaryTag.TOP,
            }[(axis, side)]
        else:
            if axis == 2:
                if side == 0:
                    tag = BoundaryTag.BOTTOM
                else:
                    c = mesh.facet_centroid(cell, face)
                    inside = all(
                        abs(c[ax] - center[ax]) < quarter[ax] for ax in (0, 1)
                    )
                    tag = BoundaryTag.COMPRESSION if inside else BoundaryTag.TOP
            else:
                tag = BoundaryTag.WALL
        tagged[(cell, face)] = tag
    return replace(mesh, boundary_facets=tagged, valid_tags=valid)


@dataclass(frozen=True)
class TaylorHoodSpace:
    """Q2 vector displacement / Q1 scalar pressure space on a structured mesh.

    Scalar Q2 nodes live on the doubled grid with spacing ``cell_size / 2``;
    each Q1 node coincides with an even-index Q2 node.  Global numbering is
    lexicographic with x fastest.  Vector displacement dofs are interleaved:
    ``dof = node * dim + component``.
    """

    mesh: StructuredMesh
    u_node_map: np.ndarray  # (n_cells, 3**dim) global Q2 node ids
    p_node_map: np.ndarray  # (n_cells, 2**dim) global Q1 node ids
    u_node_coords: np.ndarray  # (n_scalar_u, dim)
    p_node_coords: np.ndarray  # (n_p, dim)

    @property
    def dim(self) -> int:
        return self.mesh.spatial_dim

    @property
    def n_scalar_u(self) -> int:
        return self.u_node_coords.shape[0]

    @property
    def n_u(self) -> int:
        return self.dim * self.n_scalar_u

    @property
    def n_p(self) -> int:
        return self.p_node_coords.shape[0]

    @property
    def u_dof_map(self) -> np.ndarray:
        """Per-cell vector dof ids, shape (n_cells, 3**dim * dim)."""
        d = self.dim
        nodes = self.u_node_map
        dofs = np.empty((nodes.shape[0], nodes.shape[1] * d), dtype=np.int64)
        for comp in range(d):
            dofs[:, comp::d] = nodes * d + comp
        return dofs

    def u_dofs_on_plane(self, axis: int, value: float, component: int) -> np.ndarray:
        """Displacement dofs of one component on the plane coord[axis] == value."""
        tol = 1e-9 * max(1.0, float(np.max(np.abs(self.mesh.extent))))
        nodes = np.flatnonzero(np.abs(self.u_node_coords[:, axis] - value) <= tol)
        return nodes * self.dim + component

    def p_dofs_on_plane(self, axis: int, value: float) -> np.ndarray:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(self.mesh.extent))))
        return np.flatnonzero(np.abs(self.p_node_coords[:, axis] - value) <= tol)


def build_taylor_hood_space(mesh: StructuredMesh) -> TaylorHoodSpace:
    """Construct dof maps and node coordinates for the Q2/Q1 pair."""
    dim = mesh.spatial_dim
    cells = mesh.cells_per_axis
    h = mesh.cell_size

    u_grid = [2 * n + 1 for n in cells]
    p_grid = [n + 1 for n in cells]
    u_coords = _grid_coords(mesh.origin, h / 2.0, u_grid)
    p_coords = _grid_coords(mesh.origin, h, p_grid)

    n_cells = mesh.n_cells
    cell_idx = np.empty((n_cells, dim), dtype=np.int64)
    rem = np.arange(n_cells)
    for ax in range(dim):
        cell_idx[:, ax] = rem % cells[ax]
        rem = rem // cells[ax]

    u_strides = np.cumprod([1] + u_grid[:-1])
    p_strides = np.cumprod([1] + p_grid[:-1])
    u_local = _lex_offsets(dim, 3)
    p_local = _lex_offsets(dim, 2)

    u_map = np.zeros((n_cells, 3**dim), dtype=np.int64)
    for loc, off in enumerate(u_local):
        u_map[:, loc] = (2 * cell_idx + off) @ u_strides
    p_map = np.zeros((n_cells, 2**dim), dtype=np.int64)
    for loc, off in enumerate(p_local):
        p_map[:, loc] = (cell_idx + off) @ p_strides

    return TaylorHoodSpace(mesh, u_map, p_map, u_coords, p_coords)


def _grid_coords(origin, spacing, grid_shape) -> np.ndarray:
    dim = len(grid_shape)
    n = int(np.prod(grid_shape))
    coords = np.empty((n, dim))
    rem = np.arange(n)
    for ax in range(dim):
        coords[:, ax] = origin[ax] + (rem % grid_shape[ax]) * spacing[ax]
        rem = rem // grid_shape[ax]
    return coords


def _lex_offsets(dim: int, per_axis: int) -> np.ndarray:
    loc = np.arange(per_axis**dim)
    out = np.empty((per_axis**dim, dim), dtype=np.int64)
    rem = loc
    for ax in range(dim):
        out[:, ax] = rem % per_axis
        rem = rem // per_axis
    return out
