#!/usr/bin/env python3
import itertools
import logging
import math

import numpy as np

logger = logging.getLogger('stablefield.densities.base')


def p_star(alpha):
    """
    Derivative order max{2, floor(1/alpha) + 1} required of admissible densities.

    Raises:
        ValueError: If alpha is outside (0, 2]
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2], got {}".format(alpha))
    return max(2, int(math.floor(1.0 / alpha)) + 1)


def central_difference_weights(order):
    """Offsets (in steps) and weights of the central difference of the given order."""
    offsets = np.array([order / 2.0 - i for i in range(order + 1)])
    weights = np.array([(-1.0) ** i * math.comb(order, i) for i in range(order + 1)])
    return offsets, weights


class AdmissibleDensity:
    """Base class for spectral densities f."""

    kind = 'abstract'

    def __init__(self, alpha, d, a_prime, a):
        """
        Initialize the density.

        Args:
            alpha (float): Stability parameter in (0, 2]
            d (int): Dimension
            a_prime (float): Near-origin exponent a' in (0, 1)
            a (sequence): Per-axis decay exponents a_1..a_d
        """
        if d < 1:
            raise ValueError("dimension must be positive, got {}".format(d))
        self.alpha = float(alpha)
        self.d = int(d)
        self.p_star = p_star(self.alpha)
        self.a_prime = float(a_prime)
        self.a = tuple(float(x) for x in a)
        if len(self.a) != self.d:
            raise ValueError("expected {} exponents a_l, got {}".format(self.d, len(self.a)))

    def evaluate(self, xi):
        """
        Evaluate f at points of shape (..., d).

        Returns:
            numpy.ndarray: Real values of shape (...)
        """
        raise NotImplementedError("Subclasses must implement evaluate method")

    def partial(self, p, xi):
        """
        Mixed partial derivative ∂^p f.

        The base implementation uses nested central differences with one
        Richardson step; subclasses with closed forms override it.
        """
        p = self._check_order(p)
        xi = self._check_points(xi)
        if not any(p):
            return self.evaluate(xi)
        coarse = self._nested_difference(p, xi, 1.0)
        fine = self._nested_difference(p, xi, 0.5)
        return (4.0 * fine - coarse) / 3.0

    def _nested_difference(self, p, xi, shrink):
        stencils = [central_difference_weights(order) for order in p]
        steps = np.stack(
            [np.abs(xi[..., l]) * shrink * np.finfo(float).eps ** (1.0 / (p[l] + 3))
             for l in range(self.d)], axis=-1)
        total = np.zeros(xi.shape[:-1])
        for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
            shift = np.stack([stencils[l][0][combo[l]] * steps[..., l] for l in range(self.d)], axis=-1)
            weight = np.prod([stencils[l][1][combo[l]] for l in range(self.d)])
            total = total + weight * self.evaluate(xi + shift)
        scale = np.prod([steps[..., l] ** p[l] for l in range(self.d)], axis=0)
        return total / scale

    def _check_order(self, p):
        p = tuple(int(x) for x in p)
        if len(p) != self.d:
            raise ValueError("multi-index {} does not match dimension {}".format(p, self.d))
        if any(x < 0 or x > self.p_star for x in p):
            raise ValueError("derivative order {} exceeds p_star={}".format(p, self.p_star))
        return p

    def _check_points(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.d:
            raise ValueError("points have dimension {}, density has {}".format(xi.shape[-1], self.d))
        if np.any(xi == 0.0):
            raise ValueError("f and its partials are only defined off the coordinate axes")
        return xi

    def describe(self):
        """Parameters recorded in realization metadata."""
        return {
            'kind': self.kind,
            'alpha': self.alpha,
            'd': self.d,
            'a_prime': self.a_prime,
            'a': list(self.a),
        }
