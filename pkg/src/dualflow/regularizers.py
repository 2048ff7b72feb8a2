"""Strongly convex regularizers and their conjugate gradient maps.

Each regularizer R knows its value, its strong-convexity modulus c0 (with
respect to the norm stated per variant), and the map

    conj_grad(xi) = argmin_z { R(z) - <xi, z> } = grad R*(xi),

which is (1/(2 c0))-Lipschitz from the dual norm into the primal norm.
Inner products throughout are the weighted ones of the X grid.

Variants
--------
quadratic      R(x) = (scale/2) ||x||^2,        c0 = scale/2,  L2 norm
entropy        R(x) = sum w x log x + simplex,  c0 = 1/2,      L1 norm
tv_strong      R(x) = ||x||^2/(2 beta) + TV(x), c0 = 1/(2 beta), l2 norm
l1_quadratic   R(x) = ||x||_1 + (alpha/2)||x||^2, c0 = alpha/2, L2 norm
"""

from dataclasses import dataclass

import numpy as np

from .spaces import as_values, unit_weights, winner, wnorm


@dataclass
class BregmanReport:
    """Bregman distance D_R^xi0(x, x0) together with its arguments."""

    value: float
    x: np.ndarray
    base: np.ndarray
    subgradient: np.ndarray


class TvNonConvergence(RuntimeError):
    """PDHG hit max_iter before reaching the requested duality gap."""

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


def softmax_map(xi, weights):
    """Weighted softmax x_i = exp(xi_i - M) / sum_j w_j exp(xi_j - M).

    This is the conjugate gradient map of the entropy-on-simplex regularizer:
    the output is strictly positive, has weighted sum exactly one, and is
    invariant to adding a constant to xi (the max shift also prevents
    overflow).
    """
    xi = as_values(xi)
    e = np.exp(xi - np.max(xi))
    return e / np.dot(weights, e)


class Regularizer:
    """Common interface; subclasses set c0, weights and the norm exponents."""

    #: exponent of the primal norm in strong-convexity statements (1 or 2)
    primal_p = 2

    def value(self, x):
        raise NotImplementedError

    def conj_grad(self, xi, warm=None):
        """x = grad R*(xi); `warm` optionally seeds an inner solver."""
        x, _ = self.conj_grad_state(xi, warm)
        return x

    def conj_grad_state(self, xi, warm=None):
        """Like conj_grad but also returns an opaque warm-start token."""
        raise NotImplementedError

    def xnorm(self, v):
        return wnorm(self.weights, v, p=self.primal_p)

    def dual_norm(self, v):
        if self.primal_p == 1:
            return float(np.max(np.abs(v)))
        return wnorm(self.weights, v, p=2)

    def bregman(self, x, x0, xi0):
        """D_R^xi0(x, x0) = R(x) - R(x0) - <xi0, x - x0>."""
        x, x0, xi0 = as_values(x), as_values(x0), as_values(xi0)
        rx = self.value(x)
        if not np.isfinite(rx):
            return BregmanReport(np.inf, x, x0, xi0)
        d = rx - self.value(x0) - winner(self.weights, xi0, x - x0)
        return BregmanReport(float(d), x, x0, xi0)


class QuadraticRegularizer(Regularizer):
    """R(x) = (scale/2) ||x||^2 in the weighted L2 norm."""

    def __init__(self, scale=1.0, weights=None, n=None):
        if weights is None:
            weights = unit_weights(n)
        self.weights = np.asarray(weights, float)
        self.scale = float(scale)
        self.c0 = self.scale / 2.0

    def value(self, x):
        x = as_values(x)
        return 0.5 * self.scale * float(np.dot(self.weights * x, x))

    def conj_grad_state(self, xi, warm=None):
        return as_values(xi) / self.scale, None


class EntropySimplexRegularizer(Regularizer):
    """Negative Boltzmann-Shannon entropy restricted to the probability
    simplex {x >= 0, sum w x = 1}; R(x) = sum_i w_i x_i log x_i there."""

    primal_p = 1
    simplex_tol = 1e-8

    def __init__(self, weights):
        self.weights = np.asarray(weights, float)
        self.c0 = 0.5  # Pinsker constant for the L1 norm

    def value(self, x):
        x = as_values(x)
        if np.any(x < 0) or abs(np.dot(self.weights, x) - 1.0) > self.simplex_tol:
            return np.inf
        pos = x > 0
        return float(np.dot(self.weights[pos] * x[pos], np.log(x[pos])))

    def conj_grad_state(self, xi, warm=None):
        return softmax_map(xi, self.weights), None


def _forward_diff(z):
    """Forward differences along each axis, Neumann boundary (no difference
    across the final row/column)."""
    return [np.diff(z, axis=a) for a in range(z.ndim)]


def _neg_div(p, shape):
    """Adjoint of _forward_diff: returns D^T p for the stacked differences."""
    out = np.zeros(shape)
    for a, pa in enumerate(p):
        sl_lo = [slice(None)] * len(shape)
        sl_hi = [slice(None)] * len(shape)
        sl_lo[a] = slice(0, shape[a] - 1)
        sl_hi[a] = slice(1, shape[a])
        out[tuple(sl_lo)] -= pa
        out[tuple(sl_hi)] += pa
    return out


def tv_value(z):
    """Anisotropic total variation: sum of absolute forward differences."""
    return float(sum(np.sum(np.abs(d)) for d in _forward_diff(np.asarray(z, float))))


def tv_prox_pdhg(v, beta, tol=1e-10, max_iter=5000, warm=None, return_state=False,
                 check_every=10):
    """Approximate argmin_z { ||z - v||^2 / (2 beta) + TV(z) } by the primal
    dual hybrid gradient method.

    Steps sigma = tau = 1/||D|| (||D||^2 <= 4 * ndim for forward differences),
    relaxation theta = 1. Iterates until the primal-dual gap estimate drops
    to `tol`; raises TvNonConvergence carrying the final gap if max_iter is
    reached first. `warm` may carry a (z, p) pair from a nearby problem.
    """
    v = np.asarray(v, float)
    shape = v.shape
    step = 1.0 / np.sqrt(4.0 * v.ndim)

    if warm is not None:
        z = warm[0].copy()
        p = [pa.copy() for pa in warm[1]]
    else:
        z = v.copy()
        p = [np.zeros_like(d) for d in _forward_diff(v)]

    def gap_value(z, p):
        dtp = _neg_div(p, shape)
        primal = float(np.sum((z - v) ** 2)) / (2 * beta) + tv_value(z)
        dual = float(np.sum(v * dtp)) - 0.5 * beta * float(np.sum(dtp * dtp))
        return primal - dual

    gap = gap_value(z, p)
    if gap <= tol:
        state = (z, p)
        return (z, state) if return_state else z

    zbar = z
    ratio = step / beta
    for it in range(1, max_iter + 1):
        dz = _forward_diff(zbar)
        p = [np.clip(pa + step * da, -1.0, 1.0) for pa, da in zip(p, dz)]
        z_old = z
        z = (z - step * _neg_div(p, shape) + ratio * v) / (1.0 + ratio)
        zbar = 2.0 * z - z_old
        if it % check_every == 0 or it == max_iter:
            gap = gap_value(z, p)
            if gap <= tol:
                break
    if gap > tol:
        raise TvNonConvergence(
            f"PDHG gap {gap:.3e} > tol {tol:.3e} after {max_iter} iterations", gap
        )
    state = (z, p)
    return (z, state) if return_state else z


class TvStrongRegularizer(Regularizer):
    """R(x) = ||x||^2 / (2 beta) + TV(x) on images, plain l2 inner product.

    conj_grad solves the TV denoising problem with data beta * xi via PDHG;
    the default gap tolerance is tol_scale * (1 + ||xi||) so that inner
    accuracy tracks the magnitude of the flow iterates.
    """

    def __init__(self, beta, shape, tol_scale=1e-10, max_iter=5000):
        self.beta = float(beta)
        self.image_shape = tuple(shape)
        self.n = int(np.prod(shape))
        self.weights = unit_weights(self.n)
        self.c0 = 1.0 / (2.0 * self.beta)
        self.tol_scale = tol_scale
        self.max_iter = max_iter

    def value(self, x):
        x = as_values(x)
        return float(np.dot(x, x)) / (2 * self.beta) + tv_value(x.reshape(self.image_shape))

    def conj_grad_state(self, xi, warm=None):
        xi = as_values(xi)
        v = (self.beta * xi).reshape(self.image_shape)
        tol = self.tol_scale * (1.0 + float(np.linalg.norm(xi)))
        z, state = tv_prox_pdhg(v, self.beta, tol=tol, max_iter=self.max_iter,
                                warm=warm, return_state=True)
        return z.ravel(), state


class L1QuadraticRegularizer(Regularizer):
    """R(x) = ||x||_1 + (alpha/2) ||x||^2: the strongly convex perturbation of
    the L1 norm used by the perturbation experiment; c0 = alpha/2 in L2."""

    def __init__(self, alpha, weights=None, n=None):
        if weights is None:
            weights = unit_weights(n)
        self.weights = np.asarray(weights, float)
        self.alpha = float(alpha)
        self.c0 = self.alpha / 2.0

    def value(self, x):
        x = as_values(x)
        return float(np.dot(self.weights, np.abs(x) + 0.5 * self.alpha * x * x))

    def conj_grad_state(self, xi, warm=None):
        xi = as_values(xi)
        return np.sign(xi) * np.maximum(np.abs(xi) - 1.0, 0.0) / self.alpha, None
