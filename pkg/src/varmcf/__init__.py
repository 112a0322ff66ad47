"""Regularized mean curvature flow engine for point-cloud varifolds."""

from .curvature import CurvatureField, QuadratureSpec, curvature_field, dissipation
from .geometry import Plane, plane_distance
from .kernel import Kernel
from .varifold import Atom, SampledMap, Varifold, push_forward, total_mass

__all__ = [
    "Atom",
    "CurvatureField",
    "Kernel",
    "Plane",
    "QuadratureSpec",
    "SampledMap",
    "Varifold",
    "curvature_field",
    "dissipation",
    "plane_distance",
    "push_forward",
    "total_mass",
]

__version__ = "0.1.0"
