"""Conforming triangulations of the unit square and uniform red refinement."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    boundary_vertex : (V,) bool array
    h : maximum element diameter
    level : number of red refinements applied to the base mesh
    parent : (T,) int array mapping each triangle to its parent in the
        previous level, or None for a base mesh
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    h: float
    level: int = 0
    parent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.vertices, self.triangles, self.boundary_vertex):
            arr.setflags(write=False)
        if self.parent is not None:
            self.parent.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and the number of triangles owning each."""
        tri = self.triangles
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        edges, counts = np.unique(e, axis=0, return_counts=True)
        return edges, counts

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lens = np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1)
        return lens.max(axis=1)

    def shape_ratio(self) -> float:
        """max over elements of diameter / inradius."""
        p = self.vertices[self.triangles]
        lens = np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1)
        inradius = 2.0 * np.abs(self.signed_areas()) / lens.sum(axis=1)
        return float((lens.max(axis=1) / inradius).max())

    def validate(self) -> None:
        """Raise ValueError if any mesh invariant is violated."""
        if np.any(self.signed_areas() <= 0):
            raise ValueError("triangle with non-positive signed area")
        edges, counts = self.edges()
        if np.any(counts > 2):
            raise ValueError("non-conforming triangulation: edge shared by more than two triangles")
        on_boundary = np.zeros(self.n_vertices, dtype=bool)
        on_boundary[edges[counts == 1].ravel()] = True
        if not np.array_equal(on_boundary, self.boundary_vertex):
            raise ValueError("boundary flags disagree with the edge structure")


def _boundary_from_edges(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    flag = np.zeros(len(vertices), dtype=bool)
    flag[edges[counts == 1].ravel()] = True
    return flag


def build_structured_square(n: int) -> Mesh:
    """Unit square split into n x n cells, each cut along the (0,0)-(1,1) diagonal."""
    if int(n) != n or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    boundary = _boundary_from_edges(vertices, triangles)
    return Mesh(vertices, triangles, boundary, h=np.sqrt(2.0) / n, level=0)


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle is split into four congruent children.

    Children of triangle t are stored at rows 4t..4t+3; the last one is the
    interior (midpoint) triangle.
    """
    m.validate()
    tri = m.triangles
    V = m.n_vertices
    local = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key = np.sort(local, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    T = len(tri)
    mid = V + inverse.reshape(3, T).T  # mid[:, k] = midpoint of local edge k
    midpoints = 0.5 * (m.vertices[edges[:, 0]] + m.vertices[edges[:, 1]])
    vertices = np.vstack([m.vertices, midpoints])

    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    mab, mbc, mca = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(4 * T, 3)
    parent = np.repeat(np.arange(T), 4)
    boundary = _boundary_from_edges(vertices, children)
    return Mesh(vertices, children, boundary, h=m.h / 2.0, level=m.level + 1, parent=parent)


def mesh_hierarchy(levels: int, base_n: int = 1) -> list[Mesh]:
    """Nested meshes 0..levels, level 0 being the structured square with base_n cells per side."""
    meshes = [build_structured_square(base_n)]
    for _ in range(levels):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


_CACHE: dict[tuple[int, int], Mesh] = {}


def unit_square_level(level: int, base_n: int = 1) -> Mesh:
    """Cached mesh at the given refinement level of the unit square."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    key = (level, base_n)
    if key not in _CACHE:
        m = build_structured_square(base_n) if level == 0 else refine_uniform(unit_square_level(level - 1, base_n))
        _CACHE[key] = m
    return _CACHE[key]


def ancestor_map(fine: Mesh, coarse_level: int) -> np.ndarray:
    """Index of the level-``coarse_level`` triangle containing each fine triangle."""
    gap = fine.level - coarse_level
    if gap < 0:
        raise ValueError("coarse level is finer than the mesh")
    return np.arange(fine.n_triangles) // (4**gap)


def write_mesh(m: Mesh, path: str | Path) -> None:
    """Plain-text dump: header ``V T``, then ``x y boundary_flag`` rows, then ``i j k`` rows."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{m.n_vertices} {m.n_triangles}\n")
        for (x, y), b in zip(m.vertices, m.boundary_vertex):
            fh.write(f"{float(x)!r} {float(y)!r} {int(b)}\n")
        for i, j, k in m.triangles:
            fh.write(f"{i} {j} {k}\n")


def read_mesh(path: str | Path, level: int = 0) -> Mesh:
    with Path(path).open() as fh:
        V, T = (int(s) for s in fh.readline().split())
        rows = [fh.readline().split() for _ in range(V)]
        vertices = np.array([[float(r[0]), float(r[1])] for r in rows])
        boundary = np.array([r[2] == "1" for r in rows])
        triangles = np.array([[int(s) for s in fh.readline().split()] for _ in range(T)], dtype=np.int64)
    m = Mesh(vertices, triangles, boundary, h=0.0, level=level)
    h = float(m.diameters().max())
    m = Mesh(vertices, triangles, boundary, h=h, level=level)
    m.validate()
    return m
