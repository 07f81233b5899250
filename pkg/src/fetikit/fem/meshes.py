"""Structured subdomain meshes: 1D intervals and quad-split 2D rectangles.

Boundary pieces carry tags: ("dirichlet", None) for essential outer
boundary, ("interface", id) for a shared interface, ("free", None) for a
natural (Neumann) outer boundary. Meshes are conforming within a subdomain
by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateElement(Exception):
    """An element with non-positive measure was requested."""


DIRICHLET = "dirichlet"
INTERFACE = "interface"
FREE = "free"


@dataclass
class IntervalMesh:
    """Uniform 1D mesh on [a, b] with tagged endpoints."""

    vertices: np.ndarray
    boundary: dict  # {"left": (tag, iface_id|None), "right": (tag, iface_id|None)}

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 1 or len(self.vertices) < 2:
            raise DegenerateElement("interval mesh needs at least two vertices")
        if np.any(np.diff(self.vertices) <= 0.0):
            raise DegenerateElement("interval mesh vertices must be increasing")
        for key in ("left", "right"):
            if key not in self.boundary:
                raise ValueError(f"missing boundary tag for '{key}'")

    @property
    def dimension(self) -> int:
        return 1

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.vertices) - 1

    @property
    def h_max(self) -> float:
        return float(np.diff(self.vertices).max())

    def coords(self) -> np.ndarray:
        return self.vertices.reshape(-1, 1)

    def dirichlet_nodes(self) -> np.ndarray:
        nodes = []
        if self.boundary["left"][0] == DIRICHLET:
            nodes.append(0)
        if self.boundary["right"][0] == DIRICHLET:
            nodes.append(self.n_nodes - 1)
        return np.array(nodes, dtype=int)

    def boundary_node(self, key: str) -> int:
        return 0 if key == "left" else self.n_nodes - 1

    def interface_nodes(self, key: str):
        """Single (node, t) pair for a point interface; t is always 0."""
        return [(self.boundary_node(key), 0.0)]


@dataclass
class RectangleMesh:
    """Structured quad mesh split into triangles on an axis-aligned rectangle.

    Node ids run row-major in y: id = j * (nx + 1) + i. Each quad is split
    along the lower-left to upper-right diagonal.
    """

    x0: float
    y0: float
    width: float
    height: float
    nx: int
    ny: int
    edges: dict  # {"left"|"right"|"bottom"|"top": (tag, iface_id|None)}
    hx: float = field(init=False)
    hy: float = field(init=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.width <= 0.0 or self.height <= 0.0:
            raise DegenerateElement(
                f"degenerate rectangle: {self.nx}x{self.ny} cells over "
                f"{self.width}x{self.height}"
            )
        self.hx = self.width / self.nx
        self.hy = self.height / self.ny
        for key in ("left", "right", "bottom", "top"):
            if key not in self.edges:
                raise ValueError(f"missing edge tag for '{key}'")

    @property
    def dimension(self) -> int:
        return 2

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def h_max(self) -> float:
        return max(self.hx, self.hy)

    def node_id(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    def coords(self) -> np.ndarray:
        xs = self.x0 + self.hx * np.arange(self.nx + 1)
        ys = self.y0 + self.hy * np.arange(self.ny + 1)
        gx, gy = np.meshgrid(xs, ys)  # gy varies along rows, matching node ids
        return np.column_stack([gx.ravel(), gy.ravel()])

    def triangles(self) -> np.ndarray:
        tris = []
        for j in range(self.ny):
            for i in range(self.nx):
                v00 = self.node_id(i, j)
                v10 = self.node_id(i + 1, j)
                v01 = self.node_id(i, j + 1)
                v11 = self.node_id(i + 1, j + 1)
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
        return np.array(tris, dtype=int)

    def _edge_indices(self, key: str):
        if key == "left":
            return [self.node_id(0, j) for j in range(self.ny + 1)]
        if key == "right":
            return [self.node_id(self.nx, j) for j in range(self.ny + 1)]
        if key == "bottom":
            return [self.node_id(i, 0) for i in range(self.nx + 1)]
        if key == "top":
            return [self.node_id(i, self.ny) for i in range(self.nx + 1)]
        raise KeyError(key)

    def dirichlet_nodes(self) -> np.ndarray:
        nodes: set[int] = set()
        for key, (tag, _) in self.edges.items():
            if tag == DIRICHLET:
                nodes.update(self._edge_indices(key))
        return np.array(sorted(nodes), dtype=int)

    def interface_nodes(self, key: str):
        """Ordered (node, t) pairs along the given edge; t is the arclength
        coordinate from the edge start (bottom or left end)."""
        ids = self._edge_indices(key)
        step = self.hy if key in ("left", "right") else self.hx
        return [(node, k * step) for k, node in enumerate(ids)]
