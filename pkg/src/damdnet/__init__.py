"""Desk-scale 3D face alignment toolkit.

Synthetic morphable model, weak-perspective projection, joint parameter /
vertex losses, a dual-attention regressor on a minimal autodiff engine,
plus evaluation, augmentation, complexity analysis and z-buffer rendering.
"""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
