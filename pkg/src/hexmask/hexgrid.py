"""Regular honeycomb meshes of pointy-top hexagons in offset rows.

Cell ``(row, col)`` has id ``row * n_cols + col``. Odd rows are shifted right
by half a horizontal pitch. Node coordinates are generated on an integer
lattice (units of ``sqrt(3) * cs / 2`` horizontally, ``cs / 2`` vertically) so
shared nodes deduplicate exactly.

Neighbors are listed in a fixed cyclic order: east, then counter-clockwise
(NE, NW, W, SW, SE). Local node ``k`` of a cell sits at angle ``30 + 60 k``
degrees, so neighbor ``k`` shares local nodes ``k - 1`` and ``k`` (mod 6).
"""

from dataclasses import dataclass, field

import numpy as np

SQRT3 = np.sqrt(3.0)

# Integer-lattice vertex offsets for angles 30, 90, ..., 330 degrees.
_VERTEX_OFFSETS = np.array([(1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1)])


@dataclass(frozen=True)
class HexCell:
    id: int
    row: int
    col: int
    centroid: tuple
    node_ids: tuple


@dataclass(frozen=True, eq=False)
class HexGrid:
    """Immutable honeycomb mesh.

    Attributes
    ----------
    n_cols, n_rows : int
        Cells per row and number of rows.
    cs : float
        Circumradius of every hexagon.
    centroids : ndarray, shape (Ncells, 2)
    nodes : ndarray, shape (Nnodes, 2)
    cell_nodes : ndarray, shape (Ncells, 6)
        Node ids of each cell, counter-clockwise from the 30 degree vertex.
    neighbor_table : ndarray, shape (Ncells, 6)
        Neighbor ids in cyclic order (E, NE, NW, W, SW, SE), -1 where absent.
    """

    n_cols: int
    n_rows: int
    cs: float
    centroids: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    cell_nodes: np.ndarray = field(repr=False)
    neighbor_table: np.ndarray = field(repr=False)

    @property
    def n_cells(self):
        return self.n_cols * self.n_rows

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def pitch(self):
        """Distance between centroids of adjacent cells."""
        return SQRT3 * self.cs

    @property
    def n_neighbors(self):
        return (self.neighbor_table >= 0).sum(axis=1)

    @property
    def is_boundary(self):
        return self.n_neighbors < 6

    @property
    def bounds(self):
        """``(xmin, ymin, xmax, ymax)`` of the node cloud."""
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def cell_id(self, row, col):
        return row * self.n_cols + col

    def row_col(self, cid):
        return divmod(int(cid), self.n_cols)

    def cell(self, cid):
        self._check(cid)
        row, col = self.row_col(cid)
        return HexCell(
            id=int(cid),
            row=row,
            col=col,
            centroid=tuple(self.centroids[cid]),
            node_ids=tuple(int(n) for n in self.cell_nodes[cid]),
        )

    def neighbors(self, cid):
        """Neighbor ids of ``cid`` in cyclic order, skipping absent ones."""
        self._check(cid)
        return [int(j) for j in self.neighbor_table[cid] if j >= 0]

    def _check(self, cid):
        if not 0 <= int(cid) < self.n_cells:
            raise IndexError(f"cell id {cid} out of range [0, {self.n_cells})")

    def cell_polygon(self, cid):
        return self.nodes[self.cell_nodes[cid]]

    def boundary_nodes(self):
        """Node ids lying on the outer boundary of the mesh."""
        edges = {}
        for nodes in self.cell_nodes:
            for k in range(6):
                e = tuple(sorted((nodes[k], nodes[(k + 1) % 6])))
                edges[e] = edges.get(e, 0) + 1
        out = {n for e, c in edges.items() if c == 1 for n in e}
        return np.array(sorted(out), dtype=int)

    def nodes_in_box(self, xmin, ymin, xmax, ymax, tol=1e-9):
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        sel = (x >= xmin - tol) & (x <= xmax + tol) & (y >= ymin - tol) & (y <= ymax + tol)
        return np.flatnonzero(sel)

    def nearest_node(self, x, y):
        d2 = (self.nodes[:, 0] - x) ** 2 + (self.nodes[:, 1] - y) ** 2
        return int(np.argmin(d2))


def _neighbor_offsets(row):
    """(drow, dcol) for E, NE, NW, W, SW, SE in offset-row layout."""
    s = row & 1
    return ((0, 1), (1, s), (1, s - 1), (0, -1), (-1, s - 1), (-1, s))


def build_grid(n_cols, n_rows, cs):
    """Build an ``n_cols`` x ``n_rows`` honeycomb with circumradius ``cs``.

    Horizontal pitch is ``sqrt(3) * cs``, vertical pitch ``1.5 * cs``. The
    lower-left cell's bottom vertex sits on ``y = 0`` and its left edge on
    ``x = 0``.
    """
    if int(n_cols) != n_cols or int(n_rows) != n_rows or n_cols < 1 or n_rows < 1:
        raise ValueError(f"grid dimensions must be positive integers, got {n_cols}x{n_rows}")
    if not cs > 0:
        raise ValueError(f"cell size must be positive, got {cs}")
    n_cols, n_rows = int(n_cols), int(n_rows)

    rows, cols = np.divmod(np.arange(n_cols * n_rows), n_cols)
    ci = 2 * cols + 1 + (rows & 1)  # lattice x of centroid
    cj = 2 + 3 * rows  # lattice y of centroid
    verts = np.stack([ci[:, None] + _VERTEX_OFFSETS[:, 0], cj[:, None] + _VERTEX_OFFSETS[:, 1]], axis=-1)
    keys, inverse = np.unique(verts.reshape(-1, 2), axis=0, return_inverse=True)
    cell_nodes = inverse.reshape(-1, 6)
    scale = np.array([SQRT3 * cs / 2.0, cs / 2.0])
    nodes = keys * scale
    centroids = np.stack([ci, cj], axis=1) * scale

    nbr = np.full((n_cols * n_rows, 6), -1, dtype=int)
    for r in range(n_rows):
        for k, (dr, dc) in enumerate(_neighbor_offsets(r)):
            rr = r + dr
            if not 0 <= rr < n_rows:
                continue
            cc = np.arange(n_cols) + dc
            ok = (cc >= 0) & (cc < n_cols)
            ids = r * n_cols + np.arange(n_cols)
            nbr[ids[ok], k] = rr * n_cols + cc[ok]

    return HexGrid(
        n_cols=n_cols,
        n_rows=n_rows,
        cs=float(cs),
        centroids=centroids,
        nodes=nodes,
        cell_nodes=cell_nodes,
        neighbor_table=nbr,
    )
