"""Weighted grid vectors.

All vectors live on finite grids. A quadrature weight vector attached to the
grid defines the inner product ``<u, v> = sum_i w_i u_i v_i`` and the norms
``||u||_p = (sum_i w_i |u_i|^p)^(1/p)``, so that discrete computations mimic
the continuous L^p geometry. Plain Euclidean spaces use all-ones weights.
"""

from dataclasses import dataclass

import numpy as np


def unit_weights(n):
    return np.ones(n)


def trapezoid_weights(n, length=1.0):
    """Trapezoid-rule quadrature weights for n uniformly spaced nodes
    covering an interval of the given length (endpoints carry half weight)."""
    if n < 2:
        raise ValueError("trapezoid rule needs at least 2 nodes")
    h = length / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def winner(weights, u, v):
    """Weighted inner product of two coefficient arrays."""
    return float(np.dot(weights * u, v))


def wnorm(weights, u, p=2):
    """Weighted L^p norm of a coefficient array."""
    if p == 2:
        return float(np.sqrt(np.dot(weights * u, u)))
    return float(np.sum(weights * np.abs(u) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class WeightedVector:
    """Grid function together with the quadrature weights of its space."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if values.shape != weights.shape or values.ndim != 1:
            raise ValueError(
                "values and weights must be 1-d arrays of equal length, got "
                f"{values.shape} and {weights.shape}"
            )
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ValueError("weights must be nonnegative with at least one positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.values.size

    def inner(self, other):
        v = other.values if isinstance(other, WeightedVector) else np.asarray(other)
        return winner(self.weights, self.values, v)

    def norm(self, p=2):
        return wnorm(self.weights, self.values, p)


def as_values(x):
    """Coefficient array of x, which may be a WeightedVector or array-like."""
    if isinstance(x, WeightedVector):
        return x.values
    return np.asarray(x, dtype=float)
