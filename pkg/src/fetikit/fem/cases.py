"""Manufactured solutions with symbolically derived sources and fluxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sym

_X, _Y = sym.symbols("x y")


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form solution with source derived as -div(kappa grad u).

    The source is generated symbolically once per case so it can never drift
    from the displacement; kappa must be uniform across subdomains for the
    closed form to solve the coupled problem.
    """

    name: str
    dimension: int
    _u: object
    _grad: object
    _lap: object

    def displacement(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._u(*pts.T), dtype=float) * np.ones(len(pts))

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cols = [np.asarray(g(*pts.T), dtype=float) * np.ones(len(pts)) for g in self._grad]
        return np.column_stack(cols)

    def source(self, points, kappa: float) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return -kappa * np.asarray(self._lap(*pts.T), dtype=float) * np.ones(len(pts))

    def flux(self, points, normal, kappa: float) -> np.ndarray:
        """Conormal flux nu . kappa grad u for a fixed unit normal."""
        grad = self.gradient(points)
        normal = np.asarray(normal, dtype=float)
        return kappa * grad @ normal


def _make_case(name: str, expr, dimension: int) -> ManufacturedCase:
    symbols = (_X,) if dimension == 1 else (_X, _Y)
    grad_exprs = [sym.diff(expr, s) for s in symbols]
    lap_expr = sum(sym.diff(expr, s, 2) for s in symbols)
    return ManufacturedCase(
        name=name,
        dimension=dimension,
        _u=sym.lambdify(symbols, expr, "numpy"),
        _grad=tuple(sym.lambdify(symbols, g, "numpy") for g in grad_exprs),
        _lap=sym.lambdify(symbols, lap_expr, "numpy"),
    )


def get_case(name: str, domain=None) -> ManufacturedCase:
    """Look up a manufactured case; domain-dependent cases read the extents.

    1D cases live on (0, 1). "poiseuille2d" adapts to the x extent of the
    domain and is flat in y, so it matches natural boundary conditions on
    the top and bottom edges.
    """
    if name == "linear1d":
        return _make_case(name, _X, 1)
    if name == "cubic1d":
        return _make_case(name, (_X - _X**3) / 6, 1)
    if name == "quad1d":
        return _make_case(name, _X * (1 - _X) / 2, 1)
    if name == "linear2d":
        return _make_case(name, _X + 2 * _Y, 2)
    if name == "sine2d":
        return _make_case(name, sym.sin(sym.pi * _X) * sym.sin(sym.pi * _Y), 2)
    if name == "poiseuille2d":
        x0, x1 = (0.0, 1.0) if domain is None else (domain[0][0], domain[0][1])
        return _make_case(name, (_X - x0) * (x1 - _X) / 2, 2)
    if name == "crossflow2d":
        # zero on the left/right edges, zero normal derivative on top/bottom
        ((x0, x1), (y0, y1)) = ((0.0, 1.0), (0.0, 1.0)) if domain is None else domain
        expr = sym.sin(sym.pi * (_X - x0) / (x1 - x0)) * sym.cos(
            sym.pi * (_Y - y0) / (y1 - y0)
        )
        return _make_case(name, expr, 2)
    raise KeyError(f"unknown manufactured case '{name}'")


@dataclass(frozen=True)
class StarNetworkCase:
    """Three segments of equal length meeting at a junction, unit source.

    Segment k solves -a_k u_k'' = 1 on (0, L) with u_k(L) = 0 at the outer
    end and shared value and flux balance at the junction s = 0. The
    conormal fluxes q_k = nu_k . a_k u_k'(0) split in proportion to the
    conductances; the pairwise continuity multipliers are (q_1, -q_3).
    """

    conductivities: tuple
    length: float

    @property
    def junction_value(self) -> float:
        a = self.conductivities
        return 3.0 * self.length**2 / (2.0 * sum(a))

    def _slope(self, k: int) -> float:
        a = self.conductivities[k]
        return self.length / (2.0 * a) - self.junction_value / self.length

    def segment_displacement(self, k: int, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = self.conductivities[k]
        return self.junction_value + self._slope(k) * s - s**2 / (2.0 * a)

    def segment_source(self, k: int, s) -> np.ndarray:
        return np.ones_like(np.asarray(s, dtype=float))

    def junction_fluxes(self) -> np.ndarray:
        """Outward conormal fluxes (q_1, q_2, q_3); they sum to zero."""
        return np.array(
            [-a * self._slope(k) for k, a in enumerate(self.conductivities)]
        )

    def exact_multipliers(self) -> np.ndarray:
        q = self.junction_fluxes()
        return np.array([q[0], -q[2]])


def make_star_case(conductivities, length: float = 1.0) -> StarNetworkCase:
    conductivities = tuple(float(a) for a in conductivities)
    if len(conductivities) != 3 or any(a <= 0 for a in conductivities):
        raise ValueError("star case needs three positive conductivities")
    return StarNetworkCase(conductivities=conductivities, length=float(length))
