"""Wendland C2 smoothing kernel restricted to the mid-surface subspace.

A shell is discretised by a single particle layer on its mid-surface, so the
kernel acts on the (dim-1)-dimensional tangent space: the 2D solver uses the
1D normalisation and the 3D solver the 2D one.  Support radius is 2h.
"""

import numpy as np

SUPPORT_FACTOR = 2.0
SMOOTHING_RATIO = 1.15  # default h / particle spacing


def _alpha(h, dim):
    if dim == 2:
        return 3.0 / (4.0 * h)
    if dim == 3:
        return 7.0 / (4.0 * np.pi * h * h)
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def kernel_value(q, h, dim):
    """W(q) for q = r/h.  Accepts scalars or arrays."""
    q = np.asarray(q, dtype=np.float64)
    w = _alpha(h, dim) * (1.0 + 2.0 * q) * (1.0 - 0.5 * q) ** 4
    return np.where(q < SUPPORT_FACTOR, w, 0.0)


def kernel_radial_derivative(q, h, dim):
    """dW/dr for q = r/h.  Non-positive everywhere, zero outside support."""
    q = np.asarray(q, dtype=np.float64)
    dw = -5.0 * _alpha(h, dim) * q * (1.0 - 0.5 * q) ** 3 / h
    return np.where(q < SUPPORT_FACTOR, dw, 0.0)


def support_radius(h):
    return SUPPORT_FACTOR * h
