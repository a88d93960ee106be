"""Independent reference routines shared by the tests."""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def component_count(grid, sel, with_outer=False):
    """Edge-connected components of the selected cells.

    With ``with_outer`` a virtual cell surrounding the mesh joins every
    selected boundary cell and always counts as one component.
    """
    sel = np.asarray(sel, dtype=bool)
    n = grid.n_cells
    nbr = grid.neighbor_table
    i, k = np.nonzero(nbr >= 0)
    j = nbr[i, k]
    keep = sel[i] & sel[j]
    rows, cols = list(i[keep]), list(j[keep])
    if with_outer:
        b = np.flatnonzero(sel & grid.is_boundary)
        rows += list(b)
        cols += [n] * len(b)
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n + 1, n + 1))
    _, lab = connected_components(adj, directed=False)
    used = set(lab[np.flatnonzero(sel)].tolist())
    if with_outer:
        used.add(lab[n])
    return len(used)


def triangle_count(grid, sel):
    """Number of pairwise-adjacent cell triples inside ``sel``."""
    sel = np.asarray(sel, dtype=bool)
    nbr = grid.neighbor_table
    count = 0
    for i in np.flatnonzero(sel):
        for k in range(6):
            a, b = nbr[i, k], nbr[i, (k + 1) % 6]
            if a >= 0 and b >= 0 and sel[a] and sel[b]:
                count += 1
    return count // 3


def disk(grid, cx, cy, r):
    d = np.hypot(grid.centroids[:, 0] - cx, grid.centroids[:, 1] - cy)
    return d <= r


def central_difference(f, x, i, h):
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2 * h)


def relative_error(a, b, floor):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def normwise_error(a, b, floor=1e-4):
    """``max|a - b| / max(|a|_inf, |b|_inf, floor)``.

    With values of order one and a step of 1e-6, central differences carry
    round-off of about 1e-10; the floor keeps derivatives far below that
    scale from being judged on noise alone.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))


TINY_CONFIG = """\
[run]
name = tiny
[grid]
n_cols = 20
n_rows = 12
cs = 1
[masks]
n_x = 6
n_y = 4
max_axis = 6
[lengthscale]
min_ls = 1.5cs
max_ls = 4cs
[sls]
stage_budget = 40
total_budget = 1500
[boundary]
support.left = box 0 0 0 1 xy
load.tip = point 1 0 0 -1
"""


def interior_cell(grid):
    return grid.cell_id(grid.n_rows // 2, grid.n_cols // 2)


def y_shape(grid):
    """Three unit-thick arms leaving the central cell along directions 0, 2 and 4."""
    f = np.zeros(grid.n_cells, dtype=bool)
    c = interior_cell(grid)
    f[c] = True
    for k in (0, 2, 4):
        cur = c
        for _ in range(4):
            cur = grid.neighbor_table[cur, k]
            f[cur] = True
    return f


def annulus(grid, r_in=3.0, r_out=7.0):
    c = grid.centroids.mean(axis=0)
    d = np.hypot(*(grid.centroids - c).T)
    return (d > r_in) & (d < r_out)
