"""Deterministic SVG rendering of honeycomb designs.

Each cell is drawn as a hexagon filled with the gray level ``1 - rho`` (solid
is black). Optional layers: mask ellipses, skeleton cells, length-scale
violations (blue squares for void cells inside ``R_min``, red circles for
solid cells inside ``R_max``) and smoothed boundary polylines. Numbers are
printed with a fixed precision, so equal inputs give byte-identical output.
"""

import numpy as np

from . import lengthscale

_FMT = "{:.3f}"


def _num(v):
    s = _FMT.format(float(v))
    return "0.000" if s == "-0.000" else s


def _gray(rho):
    level = int(round(255 * (1.0 - float(np.clip(rho, 0.0, 1.0)))))
    return f"#{level:02x}{level:02x}{level:02x}"


class _Frame:
    """Maps model coordinates to SVG user units (y pointing down)."""

    def __init__(self, grid, pad, scale):
        xmin, ymin, xmax, ymax = grid.bounds
        nodes = grid.nodes
        self.x0 = min(xmin, nodes[:, 0].min()) - pad
        self.y1 = max(ymax, nodes[:, 1].max()) + pad
        self.width = (max(xmax, nodes[:, 0].max()) + pad - self.x0) * scale
        self.height = (self.y1 - (min(ymin, nodes[:, 1].min()) - pad)) * scale
        self.scale = scale

    def x(self, v):
        return (v - self.x0) * self.scale

    def y(self, v):
        return (self.y1 - v) * self.scale

    def pt(self, p):
        return f"{_num(self.x(p[0]))},{_num(self.y(p[1]))}"


def _ellipse(frame, params, color):
    x, y, a, b, theta = params
    deg = -np.degrees(theta)  # y axis is flipped
    cx, cy = _num(frame.x(x)), _num(frame.y(y))
    return (
        f'<ellipse cx="{cx}" cy="{cy}" rx="{_num(a * frame.scale)}" ry="{_num(b * frame.scale)}" '
        f'transform="rotate({_num(deg)} {cx} {cy})" fill="none" stroke="{color}" stroke-width="0.8"/>'
    )


def render_svg(
    grid,
    field,
    masks=None,
    skeleton=None,
    regions=None,
    boundary=None,
    scale=10.0,
    show_cells=True,
):
    """Render a design as an SVG 1.1 document.

    Parameters
    ----------
    grid : HexGrid
    field : DensityField or array_like
        Per-cell densities.
    masks : MaskSet, optional
        Ellipse outlines are drawn for every mask.
    skeleton : SkeletonResult or array_like of bool, optional
        Skeleton cells are outlined in orange.
    regions : Regions, optional
        Violation markers are drawn for cells that break the length scales.
    boundary : list of Polyline, optional
        Smoothed interface loops drawn as closed paths.
    scale : float
        SVG units per model length unit.
    show_cells : bool
        Draw the gray cell layer.

    Returns
    -------
    str
    """
    rho = np.asarray(getattr(field, "rho", field), dtype=float)
    if rho.shape != (grid.n_cells,):
        raise ValueError(f"field must have {grid.n_cells} entries")
    fr = _Frame(grid, pad=grid.cs, scale=scale)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_num(fr.width)}" '
        f'height="{_num(fr.height)}" viewBox="0 0 {_num(fr.width)} {_num(fr.height)}">',
        f'<rect x="0" y="0" width="{_num(fr.width)}" height="{_num(fr.height)}" fill="#ffffff"/>',
    ]
    if show_cells:
        out.append('<g id="cells" stroke="none">')
        for i in range(grid.n_cells):
            pts = " ".join(fr.pt(p) for p in grid.cell_polygon(i))
            out.append(f'<polygon points="{pts}" fill="{_gray(rho[i])}"/>')
        out.append("</g>")
    if skeleton is not None:
        skel = lengthscale._skeleton_mask(grid, skeleton)
        out.append('<g id="skeleton" fill="none" stroke="#ff8c00" stroke-width="1">')
        for i in np.flatnonzero(skel):
            pts = " ".join(fr.pt(p) for p in grid.cell_polygon(i))
            out.append(f'<polygon points="{pts}"/>')
        out.append("</g>")
    if regions is not None:
        viol = lengthscale.violations(rho, regions)
        half = 0.35 * grid.cs * scale
        out.append('<g id="min-violations" fill="#1f4fff" stroke="none">')
        for i in viol.min_cells:
            cx, cy = fr.x(grid.centroids[i, 0]), fr.y(grid.centroids[i, 1])
            out.append(
                f'<rect x="{_num(cx - half)}" y="{_num(cy - half)}" width="{_num(2 * half)}" height="{_num(2 * half)}"/>'
            )
        out.append("</g>")
        out.append('<g id="max-violations" fill="#e01010" stroke="none">')
        for i in viol.max_cells:
            out.append(
                f'<circle cx="{_num(fr.x(grid.centroids[i, 0]))}" cy="{_num(fr.y(grid.centroids[i, 1]))}" r="{_num(half)}"/>'
            )
        out.append("</g>")
    if masks is not None:
        color = "#d62728" if masks.polarity == "negative" else "#2ca02c"
        out.append('<g id="masks">')
        for params in masks.params:
            out.append(_ellipse(fr, params, color))
        out.append("</g>")
    if boundary is not None:
        out.append('<g id="boundary" fill="none" stroke="#0050a0" stroke-width="1.2">')
        for line in boundary:
            pts = [fr.pt(p) for p in line.points]
            if not pts:
                continue
            d = "M " + " L ".join(pts) + (" Z" if line.closed else "")
            out.append(f'<path d="{d}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def count_markers(svg):
    """Numbers of blue-square and red-circle violation markers in ``svg``."""

    def group(name):
        start = svg.find(f'<g id="{name}"')
        if start < 0:
            return ""
        return svg[start : svg.find("</g>", start)]

    return group("min-violations").count("<rect "), group("max-violations").count("<circle ")
