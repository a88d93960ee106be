"""Post-processing of converged density fields.

Black-and-white index, 0-1 projection with the minimum length scale
imposed, re-evaluation of the objective on the projected field, extraction
of solid/void interface loops along hexagon edges and their smoothing for
rendering.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import fem
from .maskfield import DensityField


def _rho(field):
    return np.asarray(getattr(field, "rho", field), dtype=float)


def bwi(field):
    """Black-and-white index ``4 sum rho (1 - rho) / Ncells`` in ``[0, 1]``."""
    rho = _rho(field)
    if rho.size == 0:
        return 0.0
    return float(4.0 * np.sum(rho * (1.0 - rho)) / rho.size)


@dataclass(eq=False)
class ProjectedDesign:
    """A 0-1 design derived from a gray field.

    Attributes
    ----------
    solid : ndarray of bool
    field : DensityField
        The projected densities (exactly 0 or 1; FE still applies the floor).
    phi : float or None
        Objective of the projected field, when a model was supplied.
    phi_gray : float or None
        Objective of the gray field it came from.
    """

    solid: np.ndarray
    field: DensityField
    phi: float = None
    phi_gray: float = None

    @property
    def relative_change(self):
        if self.phi is None or self.phi_gray is None or self.phi_gray == 0:
            return None
        return abs(self.phi - self.phi_gray) / abs(self.phi_gray)


def project_with_min_ls(field, regions, model=None, kind=fem.COMPLIANCE, scale=1.0, threshold=0.5):
    """Force ``R_min`` solid, threshold the rest and re-evaluate the objective.

    Parameters
    ----------
    field : DensityField or array_like
    regions : Regions
        From the final skeleton.
    model : FEModel, optional
        When given, the objective is evaluated on both fields.

    Returns
    -------
    ProjectedDesign
    """
    rho = _rho(field)
    rho_min = float(getattr(field, "rho_min", model.rho_min if model is not None else 1e-3))
    solid = (rho > threshold) | np.asarray(regions.r_min, dtype=bool)
    proj = DensityField(solid.astype(float), rho_min)
    phi = phi_gray = None
    if model is not None:
        phi = float(fem.objective_density_gradient(model, proj, kind, scale)[0])
        gray = field if isinstance(field, DensityField) else DensityField(rho, rho_min)
        phi_gray = float(fem.objective_density_gradient(model, gray, kind, scale)[0])
    return ProjectedDesign(solid, proj, phi, phi_gray)


# ------------------------------------------------------------ boundaries


@dataclass(frozen=True, eq=False)
class Polyline:
    """Vertex coordinates of an interface curve.

    Closed loops do not repeat their first vertex. ``pinned`` marks vertices
    that smoothing must not move.
    """

    points: np.ndarray
    closed: bool
    pinned: np.ndarray


def _interface_edges(grid, solid):
    """Directed edges ``(from_node, to_node)`` with solid on the left."""
    solid = np.asarray(solid, dtype=bool)
    if solid.shape != (grid.n_cells,):
        raise ValueError(f"solid mask must have {grid.n_cells} entries")
    nbr = grid.neighbor_table
    other = np.where(nbr >= 0, solid[np.maximum(nbr, 0)], False)
    cells, ks = np.nonzero(solid[:, None] & ~other)
    # neighbor k shares nodes k-1 and k; nodes run counter-clockwise
    start = grid.cell_nodes[cells, (ks - 1) % 6]
    end = grid.cell_nodes[cells, ks]
    return start, end


def extract_boundary(grid, solid):
    """Solid/void interface loops along hexagon edges.

    The region outside the mesh counts as void, so every loop is closed.
    Loops run counter-clockwise around solid and are ordered by their
    smallest node id, which makes the output deterministic.

    Returns
    -------
    list of ndarray of int
        Node ids of each loop.
    """
    start, end = _interface_edges(grid, solid)
    succ = dict(zip(start.tolist(), end.tolist()))
    loops = []
    seen = set()
    for s in sorted(succ):
        if s in seen:
            continue
        loop = [s]
        seen.add(s)
        nxt = succ[s]
        while nxt != s:
            loop.append(nxt)
            seen.add(nxt)
            nxt = succ[nxt]
        loops.append(np.array(loop, dtype=int))
    return loops


def smooth_polyline(points, steps=20, closed=True, pinned=None):
    """Laplacian smoothing of a polyline.

    Each step replaces every free vertex by the mean of itself and its two
    neighbors, ``(p[i-1] + p[i] + p[i+1]) / 3``. An alternating zig-zag
    shrinks by a factor of three per step. The end vertices of an open
    polyline and vertices flagged in ``pinned`` stay put.

    Returns
    -------
    ndarray, shape (n, 2)
    """
    p = np.array(points, dtype=float)
    n = len(p)
    free = np.ones(n, dtype=bool) if pinned is None else ~np.asarray(pinned, dtype=bool)
    if not closed and n:
        free[[0, -1]] = False
    if n < 3:
        return p
    for _ in range(int(steps)):
        prev = np.roll(p, 1, axis=0)
        nxt = np.roll(p, -1, axis=0)
        avg = (prev + p + nxt) / 3.0
        p = np.where(free[:, None], avg, p)
    return p


def smooth_boundary(grid, design, steps=20):
    """Interface loops of a binary design, smoothed for rendering.

    Parameters
    ----------
    grid : HexGrid
    design : ProjectedDesign or array_like of bool
    steps : int
        ``0`` returns the raw hexagon boundary.

    Returns
    -------
    list of Polyline
    """
    solid = design.solid if isinstance(design, ProjectedDesign) else np.asarray(design, dtype=bool)
    on_edge = np.zeros(grid.n_nodes, dtype=bool)
    on_edge[grid.boundary_nodes()] = True
    out = []
    for loop in extract_boundary(grid, solid):
        pinned = on_edge[loop]
        pts = smooth_polyline(grid.nodes[loop], steps, closed=True, pinned=pinned)
        out.append(Polyline(pts, True, pinned))
    return out


# ------------------------------------------------------------ connectivity


def solid_components(grid, solid):
    """Labels of edge-connected solid components (``-1`` for void cells)."""
    solid = np.asarray(solid, dtype=bool)
    nbr = grid.neighbor_table
    rows, ks = np.nonzero(nbr >= 0)
    cols = nbr[rows, ks]
    keep = solid[rows] & solid[cols]
    n = grid.n_cells
    adj = coo_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return np.where(solid, labels, -1)


def cells_touching_nodes(grid, nodes):
    """Cells having at least one of ``nodes`` as a vertex."""
    mark = np.zeros(grid.n_nodes, dtype=bool)
    mark[np.asarray(nodes, dtype=int)] = True
    return np.flatnonzero(mark[grid.cell_nodes].any(axis=1))


def _dof_nodes(dofs):
    return np.unique(np.asarray(dofs, dtype=int) // 2)


def load_path_connected(model, solid, port_dofs=()):
    """Whether one solid component touches the supports, the loads and any ports.

    Parameters
    ----------
    model : FEModel
    solid : array_like of bool
    port_dofs : sequence of int
        Further dofs (e.g. a mechanism output) that must be reached.
    """
    grid = model.grid
    labels = solid_components(grid, solid)
    groups = [model.fixed_dofs, np.flatnonzero(model.loads)]
    groups += [[d] for d in port_dofs]
    common = None
    for dofs in groups:
        if len(dofs) == 0:
            continue
        cells = cells_touching_nodes(grid, _dof_nodes(dofs))
        labs = set(labels[cells][labels[cells] >= 0].tolist())
        common = labs if common is None else common & labs
        if not common:
            return False
    return bool(common)
