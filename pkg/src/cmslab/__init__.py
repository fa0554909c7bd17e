"""Calculus of moving surfaces, verified numerically with Taylor jets."""

from .jets import BACKEND, DEFAULT_ORDER, Jet
from .geometry import SurfaceSpec, builtin_surface, sample_frame

__version__ = "0.1.0"

__all__ = ["BACKEND", "DEFAULT_ORDER", "Jet", "SurfaceSpec", "builtin_surface", "sample_frame", "__version__"]
