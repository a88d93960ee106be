"""Topology-preserving thinning of filled/void hexagonal cell fields.

Each iteration detects the contour (filled cells touching void or the mesh
boundary), refines it by deleting cells whose contour neighbors form a single
run of 2-5 cells, then expands the voids through contour cells that separate
void from still-filled interior. The loop stops when two consecutive
iterations give the same contour. Filled cells still off the contour at that
point are forced onto it and refined once more.

All work happens on a scratch copy of the field; callers' arrays are never
modified.
"""

from dataclasses import dataclass

import numpy as np

RETAIN_ISOLATED = "retain-isolated"
RETAIN_ENDPOINT = "retain-endpoint"
I_A, I_B = "I-A", "I-B"
II_A, II_B, II_C = "II-A", "II-B", "II-C"
III_A, III_BC = "III-A", "III-B/C"
IV = "IV"
RETAIN_ENCLOSED = "retain-enclosed"

REMOVABLE = frozenset({I_A, II_A, III_A, IV})

_BY_ONES = {
    2: {3: I_A, 2: I_B},
    3: {2: II_A, 1: II_B, 0: II_C},
    4: {1: III_A, 0: III_BC},
    5: {0: IV},
}


@dataclass(frozen=True)
class CharacterVector:
    """Per-node counts of incident contour cells (the cell itself included)."""

    chi: tuple

    @property
    def total(self):
        return sum(self.chi)

    @property
    def nse(self):
        """Number of surrounding contour cells, ``(S_chi - 6) / 2``."""
        return (self.total - 6) // 2

    @property
    def ones(self):
        return sum(1 for c in self.chi if c == 1)


@dataclass(frozen=True)
class SkeletonResult:
    skeleton_cells: frozenset
    iterations: int
    special_case_triggered: bool

    def mask(self, n_cells):
        out = np.zeros(n_cells, dtype=bool)
        out[list(self.skeleton_cells)] = True
        return out


def binarize(rho, threshold=0.5):
    return np.asarray(rho) > threshold


def detect_contour(grid, filled):
    """Filled cells with a void neighbor, plus every filled mesh-boundary cell."""
    filled = np.asarray(filled, dtype=bool)
    nbr = grid.neighbor_table
    nbr_filled = np.where(nbr >= 0, filled[np.maximum(nbr, 0)], False)
    return filled & (nbr_filled.sum(axis=1) < 6)


def character_from_pattern(pattern):
    """Character vector from the 6 neighbor contour flags in cyclic order.

    Node ``k`` is shared with neighbors ``k`` and ``k + 1``.
    """
    c = [1 if p else 0 for p in pattern]
    return CharacterVector(tuple(1 + c[k] + c[(k + 1) % 6] for k in range(6)))


def character(grid, contour, cid):
    """Character vector of contour cell ``cid``."""
    contour = np.asarray(contour, dtype=bool)
    if not contour[cid]:
        raise ValueError(f"cell {cid} is not on the contour")
    return character_from_pattern(_pattern(grid.neighbor_table[cid], contour))


def _pattern(row, contour):
    return [j >= 0 and bool(contour[j]) for j in row]


def _pattern_of(chi):
    """Neighbor flags that produce ``chi``, or None if no pattern does."""
    if len(chi) != 6:
        return None
    for c0 in (0, 1):
        c = [c0]
        for k in range(5):
            c.append(chi[k] - 1 - c[k])
        if all(v in (0, 1) for v in c) and chi[5] == 1 + c[5] + c[0]:
            return c
    return None


def classify(chi):
    """Case label of a contour cell from its character vector."""
    if isinstance(chi, CharacterVector):
        cv = chi
    else:
        cv = CharacterVector(tuple(chi))
    if _pattern_of(cv.chi) is None:
        raise RuntimeError(f"inconsistent character vector {cv.chi}")
    nse = cv.nse
    if nse == 0:
        return RETAIN_ISOLATED
    if nse == 1:
        return RETAIN_ENDPOINT
    if nse == 6:
        # only reachable for cells forced onto the contour; removal would
        # punch a hole
        return RETAIN_ENCLOSED
    label = _BY_ONES[nse].get(cv.ones)
    if label is None:
        raise RuntimeError(f"inconsistent character vector {cv.chi}")
    return label


# classification only depends on the 6-bit neighbor pattern
_LABEL_TABLE = [
    classify(character_from_pattern([(m >> k) & 1 for k in range(6)])) for m in range(64)
]


def _code(row, contour):
    m = 0
    for k, j in enumerate(row):
        if j >= 0 and contour[j]:
            m |= 1 << k
    return m


def _label(nbr, contour, cid):
    return _LABEL_TABLE[_code(nbr[cid], contour)]


def refine_contour(grid, filled, contour):
    """Delete unnecessary contour cells until none remain.

    Cells are scanned in ascending id and the character is recomputed after
    every deletion. Deleted cells are also set void in ``filled``.

    Returns new ``(contour, filled)`` arrays.
    """
    contour = np.array(contour, dtype=bool)
    filled = np.array(filled, dtype=bool)
    nbr = grid.neighbor_table
    ids = np.flatnonzero(contour)
    changed = True
    while changed:
        changed = False
        for cid in ids:
            if contour[cid] and _label(nbr, contour, cid) in REMOVABLE:
                contour[cid] = False
                filled[cid] = False
                changed = True
        ids = np.flatnonzero(contour)
    return contour, filled


def retention_step(grid, filled, contour):
    """Expand voids through contour cells of type I-B backed by filled interior.

    A I-B cell with at least one filled neighbor off the contour is removed
    from the contour and set void; all other contour cells are retained.
    Decisions are taken on the refined contour as a whole.

    Returns ``(contour, filled, changed)``.
    """
    contour = np.array(contour, dtype=bool)
    filled = np.array(filled, dtype=bool)
    nbr = grid.neighbor_table
    drop = []
    for cid in np.flatnonzero(contour):
        if _label(nbr, contour, cid) != I_B:
            continue
        row = nbr[cid]
        if any(j >= 0 and filled[j] and not contour[j] for j in row):
            drop.append(cid)
    if drop:
        contour[drop] = False
        filled[drop] = False
    return contour, filled, bool(drop)


def skeletonize(grid, filled, max_iterations=None):
    """Skeleton of a boolean field (or a density field thresholded at 0.5)."""
    filled = np.asarray(filled)
    if filled.dtype != bool:
        filled = binarize(filled)
    filled = filled.copy()
    if filled.shape != (grid.n_cells,):
        raise ValueError(f"field must have {grid.n_cells} entries")
    limit = grid.n_cells if max_iterations is None else max_iterations

    previous = None
    contour = np.zeros_like(filled)
    iterations = 0
    while iterations < limit:
        iterations += 1
        contour = detect_contour(grid, filled)
        contour, filled = refine_contour(grid, filled, contour)
        contour, filled, _ = retention_step(grid, filled, contour)
        if previous is not None and np.array_equal(contour, previous):
            break
        previous = contour

    leftover = filled & ~contour
    special = bool(leftover.any())
    if special:
        contour, filled = refine_contour(grid, filled, filled)
    return SkeletonResult(frozenset(int(i) for i in np.flatnonzero(contour)), iterations, special)
