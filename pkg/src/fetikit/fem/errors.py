"""Error norms: broken H1 seminorm and the weighted multiplier surrogate."""

from __future__ import annotations

import numpy as np

from .skeleton import POINT, SkeletonSpace

# three-point Gauss rule on [0, 1]
_GAUSS3_T = (0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6))
_GAUSS3_W = (5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0)


def broken_h1_error(assemblies, u_blocks, case) -> float:
    """Square root of the summed local H1 seminorm errors.

    u_blocks are free-dof vectors; Dirichlet data is reconstructed from the
    case so the comparison runs over full nodal fields. The exact gradient is
    sampled at element midpoints, which integrates the piecewise-constant
    discrete gradient exactly.
    """
    total = 0.0
    for assembly, u_free in zip(assemblies, u_blocks):
        mesh = assembly.mesh
        nodal = np.zeros(mesh.n_nodes)
        nodal[assembly.free_nodes] = np.asarray(u_free, dtype=float)
        if len(assembly.dirichlet):
            coords_d = mesh.coords()[assembly.dirichlet]
            nodal[assembly.dirichlet] = case.displacement(coords_d)
        if mesh.dimension == 1:
            verts = mesh.vertices
            h = np.diff(verts)
            grads = np.diff(nodal) / h
            mids = 0.5 * (verts[:-1] + verts[1:])
            exact = case.gradient(mids.reshape(-1, 1))[:, 0]
            total += float(np.sum(h * (grads - exact) ** 2))
        else:
            coords = mesh.coords()
            for tri in mesh.triangles():
                p = coords[tri]
                det = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (
                    p[2, 0] - p[0, 0]
                ) * (p[1, 1] - p[0, 1])
                area = 0.5 * det
                mat = np.array(
                    [
                        [p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]],
                        [p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]],
                    ]
                )
                grad = (mat / det) @ nodal[tri]
                mid = p.mean(axis=0)
                exact = case.gradient(mid.reshape(1, 2))[0]
                total += area * float(np.sum((grad - exact) ** 2))
    return float(np.sqrt(total))


def _interface_normal_and_points(iface, assemblies):
    """Unit normal (lo -> hi) and a map from arclength to coordinates."""
    k, edge = iface.lo
    mesh = assemblies[k].mesh
    if mesh.dimension == 1:
        node, _ = mesh.interface_nodes(edge)[0]
        x = mesh.vertices[node]
        return np.array([1.0]), lambda t: np.array([[x]])
    coords = mesh.coords()
    nodes = mesh.interface_nodes(edge)
    start = coords[nodes[0][0]]
    if edge in ("left", "right"):
        normal = np.array([1.0, 0.0])
        to_xy = lambda t: np.column_stack(
            [np.full_like(t, start[0]), start[1] + np.asarray(t)]
        )
    else:
        normal = np.array([0.0, 1.0])
        to_xy = lambda t: np.column_stack(
            [start[0] + np.asarray(t), np.full_like(t, start[1])]
        )
    return normal, to_xy


def multiplier_error(
    skeleton: SkeletonSpace, lam, case, kappa: float, assemblies
) -> float:
    """Weighted L2 distance between the multiplier and exact flux cell means.

    Segment cells are weighted by their measure; point multipliers carry
    unit weight, matching the identity product used for them.
    """
    lam = np.asarray(lam, dtype=float)
    total = 0.0
    for iface in skeleton.interfaces:
        normal, to_xy = _interface_normal_and_points(iface, assemblies)
        if iface.kind == POINT:
            exact = case.flux(to_xy(0.0), normal, kappa)[0]
            total += float((lam[iface.offset] - exact) ** 2)
            continue
        bounds = iface.cell_bounds()
        measure = iface.length / iface.n_cells
        for c in range(iface.n_cells):
            a, b = bounds[c], bounds[c + 1]
            ts = a + (b - a) * np.asarray(_GAUSS3_T)
            vals = case.flux(to_xy(ts), normal, kappa)
            mean = float(np.asarray(_GAUSS3_W) @ vals)
            total += measure * float((lam[iface.offset + c] - mean) ** 2)
    return float(np.sqrt(total))
