"""Shrinking-target sets of toral endomorphisms: dimension formulas and numerical probes."""

from .errors import ShrinkTargetError
from .matrix_core import IntMatrix, parse_matrix, spectral_data
from .dimension_formulas import dimension_for, dimension_profile
from .preimage_geometry import TorusPoint, preimage_points, preimage_set, rasterize

__version__ = "0.1.0"

__all__ = [
    "IntMatrix", "ShrinkTargetError", "TorusPoint", "dimension_for", "dimension_profile",
    "parse_matrix", "preimage_points", "preimage_set", "rasterize", "spectral_data",
]
