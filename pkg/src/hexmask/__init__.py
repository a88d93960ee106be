"""Topology optimization on honeycomb meshes with elliptical masks and
skeleton-based length-scale control."""

from .hexgrid import HexGrid, build_grid
from .maskfield import DensityField, EllipticalMask, MaskSet, evaluate_field

__version__ = "0.1.0"

__all__ = [
    "DensityField",
    "EllipticalMask",
    "HexGrid",
    "MaskSet",
    "build_grid",
    "evaluate_field",
    "__version__",
]
