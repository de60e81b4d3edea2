"""Numerical laboratory for eigenfunction localization and heat observability
on rotationally symmetric geometries."""

__version__ = "0.1.0"

from . import agmon, carleman, constants, diskmodes, geometry, heatpos, modes1d

__all__ = [
    "agmon", "carleman", "constants", "diskmodes", "geometry",
    "heatpos", "modes1d", "__version__",
]
