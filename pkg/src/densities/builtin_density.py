#!/usr/bin/env python3
import itertools
import logging
import math

import numpy as np

from src.densities.base_density import AdmissibleDensity

logger = logging.getLogger('stablefield.densities.builtin')


def _falling(x, n):
    """x (x-1) ... (x-n+1), with the empty product equal to 1."""
    out = 1.0
    for i in range(n):
        out *= x - i
    return out


def default_exponents(u, v, alpha):
    """
    Default (a', a_1..a_d) for the power-law density.

    In one dimension a_1 = v_1 + u is sharp. For d >= 2 the product bound
    must also hold on the diagonal, which forces sum(a_l) <= u + sum(v_l),
    so each axis gets v_l + u/d. The larger, alpha-dependent value
    v_l + u + (d - 1)/alpha breaks that bound and is not used.
    """
    d = len(v)
    if d == 1:
        return u, (v[0] + u,)
    logger.warning(
        "Using reduced default exponents a_l = v_l + u/%s for d=%s; check_admissibility confirms them", d, d)
    return u, tuple(x + u / d for x in v)


class BuiltinDensity(AdmissibleDensity):
    """f(ξ) = ‖ξ‖^{-(u + d/α)} Π (1 + |ξ_l|)^{-v_l}."""

    kind = 'builtin'

    def __init__(self, u, v, alpha, d=None, a_prime=None, a=None):
        """
        Initialize the density.

        Args:
            u (float): Exponent in (0, 1)
            v (sequence): Non-negative per-axis exponents
            alpha (float): Stability parameter in (0, 2]
            d (int): Dimension, defaults to len(v)
            a_prime (float): Near-origin exponent, defaults to u
            a (sequence): Far-field exponents, defaults to default_exponents

        Raises:
            ValueError: If u or v are out of range
        """
        v = tuple(float(x) for x in np.atleast_1d(v))
        d = len(v) if d is None else int(d)
        if len(v) != d:
            raise ValueError("expected {} exponents v_l, got {}".format(d, len(v)))
        if not 0.0 < u < 1.0:
            raise ValueError("u must lie in (0, 1), got {}".format(u))
        if any(x < 0.0 for x in v):
            raise ValueError("v_l must be non-negative, got {}".format(v))

        if a_prime is None or a is None:
            default_prime, default_a = default_exponents(float(u), v, float(alpha))
            a_prime = default_prime if a_prime is None else a_prime
            a = default_a if a is None else a
        super().__init__(alpha, d, a_prime, a)
        self.u = float(u)
        self.v = v
        self.s = self.u + self.d / self.alpha

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=float)
        rho = np.sum(xi ** 2, axis=-1)
        with np.errstate(divide='ignore'):
            out = rho ** (-0.5 * self.s)
        for l in range(self.d):
            out = out * (1.0 + np.abs(xi[..., l])) ** (-self.v[l])
        return out

    def partial(self, p, xi):
        return builtin_partial(self, p, xi)

    def _radial_partial(self, q, xi, rho):
        # ∂^q of φ(ρ) = ρ^{-s/2}, ρ = Σ ξ_l²
        total = np.zeros(xi.shape[:-1])
        half = -0.5 * self.s
        for k in itertools.product(*[range(ql // 2 + 1) for ql in q]):
            order = sum(ql - kl for ql, kl in zip(q, k))
            term = _falling(half, order) * rho ** (half - order)
            for l in range(self.d):
                coeff = math.factorial(q[l]) / (math.factorial(k[l]) * math.factorial(q[l] - 2 * k[l]))
                term = term * coeff * (2.0 * xi[..., l]) ** (q[l] - 2 * k[l])
            total = total + term
        return total

    def _axis_partial(self, l, n, x):
        # n-th derivative of (1 + |x|)^{-v_l}, x != 0
        v = self.v[l]
        return _falling(-v, n) * (1.0 + np.abs(x)) ** (-v - n) * np.sign(x) ** n

    def describe(self):
        info = super().describe()
        info.update({'u': self.u, 'v': list(self.v)})
        return info


def builtin_partial(density, p, xi):
    """
    Exact mixed partial ∂^p f of a BuiltinDensity.

    Leibniz rule over the radial factor and the d univariate factors.

    Args:
        density (BuiltinDensity): The density
        p (sequence): Multi-index with 0 <= p_l <= p_star
        xi (array_like): Points of shape (..., d) with no zero coordinate

    Returns:
        numpy.ndarray: Values of shape (...)

    Raises:
        ValueError: On a zero coordinate or an order above p_star
    """
    p = density._check_order(p)
    xi = density._check_points(xi)
    rho = np.sum(xi ** 2, axis=-1)
    total = np.zeros(xi.shape[:-1])
    for q in itertools.product(*[range(pl + 1) for pl in p]):
        term = density._radial_partial(q, xi, rho)
        for l in range(density.d):
            term = term * math.comb(p[l], q[l]) * density._axis_partial(l, p[l] - q[l], xi[..., l])
        total = total + term
    return total
