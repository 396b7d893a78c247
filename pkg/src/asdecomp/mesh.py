"""Uniform structured triangulations of axis-aligned rectangles.

Vertices sit on an equidistant Cartesian grid, numbered row-major
(``i = iy * (nx + 1) + ix``). Every grid cell is split into two triangles by
the diagonal running from its lower-left to its upper-right corner, and all
triangles are stored counterclockwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

Rectangle = tuple[float, float, float, float]


def check_rectangle(domain) -> Rectangle:
    try:
        xmin, ymin, xmax, ymax = (float(v) for v in domain)
    except (TypeError, ValueError):
        raise ValueError(f"domain must be (xmin, ymin, xmax, ymax), got {domain!r}") from None
    if not (np.isfinite([xmin, ymin, xmax, ymax]).all() and xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate rectangle {domain!r}")
    return (xmin, ymin, xmax, ymax)


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: Rectangle
    nx: int
    ny: int
    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def hx(self) -> float:
        return (self.domain[2] - self.domain[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.domain[3] - self.domain[1]) / self.ny

    @property
    def h(self) -> float:
        """Mesh size, used as the regularisation width delta."""
        return max(self.hx, self.hy)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions on every triangle.

        Shape ``(n_triangles, 3, 2)``; entry ``[t, a]`` is the gradient of the
        hat function of local vertex ``a`` restricted to triangle ``t``.
        """
        p = self.vertices[self.triangles]
        # grad of barycentric coordinate a is the inward edge normal of the
        # opposite edge divided by twice the area
        x, y = p[..., 0], p[..., 1]
        two_area = 2.0 * self.areas[:, None]
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=-1) / two_area[..., None]

    @cached_property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    def same_as(self, other: "Mesh") -> bool:
        return self is other or (
            self.domain == other.domain and self.nx == other.nx and self.ny == other.ny
        )


def build_uniform_mesh(domain, nx: int, ny: int) -> Mesh:
    """Triangulate ``domain = (xmin, ymin, xmax, ymax)`` with ``nx * ny`` cells."""
    domain = check_rectangle(domain)
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    xmin, ymin, xmax, ymax = domain

    # (xmax - xmin) * i / nx hits interior grid lines like 0.2 exactly, which
    # matters for closed-set membership of mesh-aligned shapes
    xs = xmin + (xmax - xmin) * np.arange(nx + 1) / nx
    ys = ymin + (ymax - ymin) * np.arange(ny + 1) / ny
    xs[-1], ys[-1] = xmax, ymax
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    ll = (iy * (nx + 1) + ix).ravel()
    lr = ll + 1
    ul = ll + nx + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    bx = (vertices[:, 0] == xmin) | (vertices[:, 0] == xmax)
    by = (vertices[:, 1] == ymin) | (vertices[:, 1] == ymax)

    for arr in (vertices, triangles):
        arr.setflags(write=False)
    mask = bx | by
    mask.setflags(write=False)
    return Mesh(domain, nx, ny, vertices, triangles, mask)


def mesh_for_h(domain, h: float) -> Mesh:
    """Uniform mesh whose cells have (approximately) side length ``h``."""
    xmin, ymin, xmax, ymax = check_rectangle(domain)
    nx = max(1, int(round((xmax - xmin) / h)))
    ny = max(1, int(round((ymax - ymin) / h)))
    return build_uniform_mesh((xmin, ymin, xmax, ymax), nx, ny)


def element_geometry(mesh: Mesh, t: int) -> tuple[float, np.ndarray]:
    """Area of triangle ``t`` and the (3, 2) gradients of its hat functions."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range [0, {mesh.n_triangles})")
    return float(mesh.areas[t]), mesh.basis_gradients[t].copy()
