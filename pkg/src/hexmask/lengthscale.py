"""Skeleton-based minimum and maximum length-scale measures.

Circles of radius ``min_ls`` and ``max_ls`` are centered on every skeleton
cell. ``R_min`` collects the cells inside some ``min_ls`` circle and must be
solid; ``R_max`` collects the cells outside every ``max_ls`` circle and must
be void. The measures

    g_min = sum over R_min of (1 - rho_i)^p
    g_max = sum over R_max of (rho_i - rho_min)^p

are differentiated with the regions held fixed; the dependence of the
skeleton on the design is ignored.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import maskfield

# centroid distances are compared with a small slack so that cells lying
# exactly on a circle (common on a regular lattice) count as inside
_DIST_TOL = 1e-9

REGION_MIN = "r_min"
REGION_MAX = "r_max"
REGION_NONE = "neither"


@dataclass(frozen=True)
class LengthScaleSpec:
    """Radii of the test circles and the exponent of the measures."""

    min_ls: float
    max_ls: float
    p: int = 1

    def __post_init__(self):
        if not 0 < self.min_ls <= self.max_ls:
            raise ValueError(f"need 0 < min_ls <= max_ls, got {self.min_ls}, {self.max_ls}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        object.__setattr__(self, "p", int(self.p))


@dataclass(frozen=True, eq=False)
class Regions:
    """Boolean cell masks of ``R_min`` and ``R_max``."""

    r_min: np.ndarray
    r_max: np.ndarray

    @property
    def min_ids(self):
        return np.flatnonzero(self.r_min)

    @property
    def max_ids(self):
        return np.flatnonzero(self.r_max)


def _skeleton_mask(grid, skeleton):
    if hasattr(skeleton, "skeleton_cells"):
        return skeleton.mask(grid.n_cells)
    mask = np.asarray(skeleton, dtype=bool)
    if mask.shape != (grid.n_cells,):
        raise ValueError(f"skeleton mask must have {grid.n_cells} entries")
    return mask


def build_regions(grid, skeleton, spec):
    """Regions of the circles around a skeleton.

    Parameters
    ----------
    grid : HexGrid
    skeleton : SkeletonResult or ndarray of bool
    spec : LengthScaleSpec

    Returns
    -------
    Regions
        With an empty skeleton ``R_min`` is empty and ``R_max`` is every cell.
    """
    skel = _skeleton_mask(grid, skeleton)
    n = grid.n_cells
    if not skel.any():
        return Regions(np.zeros(n, dtype=bool), np.ones(n, dtype=bool))
    tree = cKDTree(grid.centroids[skel])
    dist, _ = tree.query(grid.centroids)
    r_min = dist <= spec.min_ls + _DIST_TOL
    r_max = dist > spec.max_ls + _DIST_TOL
    return Regions(r_min, r_max)


def _rho(field):
    return np.asarray(getattr(field, "rho", field), dtype=float)


def _rho_min(field, default=1e-3):
    return float(getattr(field, "rho_min", default))


def _terms(base, p):
    # odd powers of a negative base would make the sum negative
    if p % 2:
        base = np.maximum(base, 0.0)
    return base**p


def g_min(field, regions, spec):
    """``sum_{R_min} (1 - rho_i)^p``; never negative."""
    rho = _rho(field)[regions.r_min]
    return float(np.sum(_terms(1.0 - rho, spec.p)))


def g_max(field, regions, spec):
    """``sum_{R_max} (rho_i - rho_min)^p``; never negative."""
    rho = _rho(field)[regions.r_max]
    return float(np.sum(_terms(rho - _rho_min(field), spec.p)))


def _term_derivative(base, p):
    if p == 1:
        return (base > 0).astype(float)
    out = p * base ** (p - 1)
    if p % 2:
        out = np.where(base > 0, out, 0.0)
    return out


def density_gradients(field, regions, spec):
    """``d g_min / d rho`` and ``d g_max / d rho`` as per-cell arrays."""
    rho = _rho(field)
    d_min = np.zeros_like(rho)
    d_max = np.zeros_like(rho)
    sel = regions.r_min
    d_min[sel] = -_term_derivative(1.0 - rho[sel], spec.p)
    sel = regions.r_max
    d_max[sel] = _term_derivative(rho[sel] - _rho_min(field), spec.p)
    return d_min, d_max


def lengthscale_gradient(field, regions, spec, masks, points):
    """Gradients of ``g_min`` and ``g_max`` w.r.t. the flat mask vector.

    ``points`` are the cell centroids the field was evaluated at.
    """
    d_min, d_max = density_gradients(field, regions, spec)
    both = maskfield.density_vjp(masks, points, np.column_stack([d_min, d_max]))
    return both[0], both[1]


@dataclass(frozen=True)
class Violations:
    """Cells that break the length scales after thresholding at 0.5."""

    min_cells: np.ndarray
    max_cells: np.ndarray

    @property
    def n_min(self):
        return len(self.min_cells)

    @property
    def n_max(self):
        return len(self.max_cells)


def violations(field, regions, threshold=0.5):
    """Void cells inside ``R_min`` and solid cells inside ``R_max``."""
    rho = _rho(field)
    return Violations(
        np.flatnonzero(regions.r_min & (rho <= threshold)),
        np.flatnonzero(regions.r_max & (rho > threshold)),
    )


def region_labels(regions):
    """Per-cell label: ``r_min``, ``r_max`` or ``neither``."""
    labels = np.full(len(regions.r_min), REGION_NONE, dtype=object)
    labels[regions.r_min] = REGION_MIN
    labels[regions.r_max] = REGION_MAX
    return labels


def regions_csv(regions):
    """CSV text with columns ``id,region``."""
    lines = ["id,region"]
    lines += [f"{i},{lab}" for i, lab in enumerate(region_labels(regions))]
    return "\n".join(lines) + "\n"
