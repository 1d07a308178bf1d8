"""Deterministic rigid point cloud registration: feature pyramid, cross-layer
attention, consistency-filtered matching and iteratively reweighted SVD."""
from .core import (CorrespondenceSet, PointCloud, RigidTransform, apply_transform, compose,
                   invert)
from .errors import IgasaError

__version__ = "0.1.0"

__all__ = ["CorrespondenceSet", "IgasaError", "PointCloud", "RigidTransform", "apply_transform",
           "compose", "invert"]
