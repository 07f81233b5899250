"""Skeleton multiplier spaces: piecewise-constant dofs on the interfaces.

Point interfaces (1D subdomains) carry a single multiplier each; segment
interfaces (2D subdomains) carry one dof per multiplier cell of size
ratio * h. The skeleton also provides the diagonal Riesz map, the
stabilization weights, and coarsened prolongations for the stabilized solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

POINT = "point"
SEGMENT = "segment"


@dataclass(frozen=True)
class Interface:
    """One interface shared by exactly two subdomains.

    lo and hi are (subdomain index, mesh edge key) pairs; the interface
    normal points from lo to hi, so traces enter the coupling with sign +1
    on the lo side and -1 on the hi side.
    """

    id: int
    lo: tuple
    hi: tuple
    kind: str
    length: float
    n_cells: int
    cell_size: float
    offset: int

    def cell_bounds(self) -> np.ndarray:
        if self.kind == POINT:
            return np.zeros(1)
        return np.linspace(0.0, self.length, self.n_cells + 1)

    @property
    def dofs(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.n_cells)


@dataclass
class SkeletonSpace:
    """All interfaces of a decomposition with a global multiplier numbering."""

    interfaces: list
    fine_h: float

    def __post_init__(self):
        offset = 0
        for iface in self.interfaces:
            if iface.offset != offset:
                raise ValueError(
                    f"interface {iface.id} offset {iface.offset}, expected {offset}"
                )
            offset += iface.n_cells
        self.dim = offset

    def sigma_diag(self, choice: str = "mass") -> np.ndarray:
        """Diagonal Riesz map of the multiplier product.

        "mass" uses the interface cell measures (the skeleton L2 product);
        point multipliers get unit weight, which makes the 1D product the
        identity. "identity" is all ones.
        """
        if choice == "identity":
            return np.ones(self.dim)
        if choice != "mass":
            raise ValueError(f"unknown sigma choice '{choice}'")
        diag = np.ones(self.dim)
        for iface in self.interfaces:
            if iface.kind == SEGMENT:
                diag[iface.offset : iface.offset + iface.n_cells] = (
                    iface.length / iface.n_cells
                )
        return diag

    def stabilization_weights(self) -> np.ndarray:
        """Per-dof weights of the stabilizing product: cell size times cell
        measure on segments, the local mesh size for point multipliers."""
        w = np.empty(self.dim)
        for iface in self.interfaces:
            sl = slice(iface.offset, iface.offset + iface.n_cells)
            if iface.kind == SEGMENT:
                measure = iface.length / iface.n_cells
                w[sl] = iface.cell_size * measure
            else:
                w[sl] = iface.cell_size
        return w

    def coarsen(self, factor: int):
        """Group consecutive cells per interface into a coarse prolongation.

        Returns (prolongation, delta_tilde) where the prolongation injects
        piecewise constants on the grouped cells into the fine space; a
        ragged last group absorbs any remainder. Point interfaces are kept
        unchanged (their coarse dof is the fine dof).
        """
        if factor < 1:
            raise ValueError("coarsening factor must be >= 1")
        rows: list[int] = []
        cols: list[int] = []
        col = 0
        delta_tilde = self.fine_h
        for iface in self.interfaces:
            if iface.kind == POINT:
                rows.append(iface.offset)
                cols.append(col)
                col += 1
                continue
            n = iface.n_cells
            start = 0
            while start < n:
                stop = min(start + factor, n)
                for c in range(start, stop):
                    rows.append(iface.offset + c)
                    cols.append(col)
                delta_tilde = max(delta_tilde, (stop - start) * iface.cell_size)
                col += 1
                start = stop
        data = np.ones(len(rows))
        prolongation = sp.csr_matrix((data, (rows, cols)), shape=(self.dim, col))
        return prolongation, delta_tilde
