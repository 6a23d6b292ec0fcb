"""N-sided hole filling with learned projection surfaces.

Submodules: ``geom`` (B-spline surfaces, Catmull-Clark meshes), ``param``
(boundary parameterization), ``fairing`` (constrained fairness solve),
``voxel`` (per-axis coordinate labels), ``net`` (the network), ``dataset``
(synthetic records) and ``pipeline`` (fill, evaluation and export).
"""
from .errors import HoleFillError
from .geom import BSplineSurface, KnotVector
from .param import HoleBoundary, PCurve

__version__ = "0.1.0"
__all__ = ["BSplineSurface", "KnotVector", "HoleBoundary", "PCurve", "HoleFillError"]
