"""Upper half-plane geometry used by the Green function recursion.

All functions accept scalars or numpy arrays and broadcast.
"""
import numpy as np

from .errors import DomainError

IM_FLOOR = 1e-300


def check_half_plane(*points):
    for p in points:
        if not np.all(np.imag(p) > IM_FLOOR):
            raise DomainError(f"point(s) not in the upper half-plane: {p!r}")


def gamma(g, h):
    """Semi-metric ``|g - h|**2 / (Im g * Im h)`` on the upper half-plane."""
    check_half_plane(g, h)
    return np.abs(np.subtract(g, h)) ** 2 / (np.imag(g) * np.imag(h))


def hyperbolic_distance(g, h):
    """Hyperbolic distance, ``arccosh(gamma/2 + 1)``.

    Evaluated as ``2 asinh(sqrt(gamma)/2)``, which is the same quantity
    without the cancellation near the diagonal.
    """
    return 2.0 * np.arcsinh(np.sqrt(gamma(g, h)) / 2.0)


def phi_step(z, v, children=()):
    """One step of the forward recursion, ``-1 / (z - v + sum w2 * g)``.

    ``children`` is a sequence of ``(weight**2, g)`` pairs.
    """
    check_half_plane(z)
    total = z - v
    for w2, g in children:
        check_half_plane(g)
        if not w2 > 0:
            raise DomainError(f"squared weight must be positive, got {w2}")
        total = total + w2 * g
    return -1.0 / total


def phi_sum(z, v, weighted_sum):
    """Vectorised :func:`phi_step` given the precomputed weighted child sum."""
    return -1.0 / (z - v + weighted_sum)
