#!/usr/bin/env python3
"""Gauss-Legendre rules on intervals, frequency bands and dyadic shells."""
import math
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

BAND_LOW = 2.0 * math.pi / 3.0
BAND_MID = 4.0 * math.pi / 3.0
BAND_HIGH = 8.0 * math.pi / 3.0


@lru_cache(maxsize=64)
def _reference_rule(n):
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss(n, interval=(0.0, 1.0)):
    """
    Gauss points and weights of order n on an interval.

    Args:
        n (int): Number of nodes
        interval (tuple): (a, b) integration bounds

    Returns:
        tuple: (nodes, weights) as float64 arrays
    """
    a, b = float(interval[0]), float(interval[1])
    x, w = _reference_rule(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(breaks, n):
    """Concatenate order-n rules over consecutive segments of `breaks`."""
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = gauss(n, (a, b))
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def band_rule(n, scale=1.0):
    """
    One-axis rule covering the symmetric annulus {2π/3 <= |λ| <= 8π/3} scaled by `scale`.

    Each half-annulus gets n nodes, so the axis carries 2n nodes. The nodes
    are split between the panels [2π/3, 4π/3] and [4π/3, 8π/3] in proportion
    to their widths; ψ̂¹ switches branch at 4π/3.
    """
    n = int(n)
    if n < 2:
        raise ValueError("band_rule needs at least 2 nodes per half-annulus, got {}".format(n))
    n_low = max(1, int(round(n / 3.0)))
    x1, w1 = gauss(n_low, (BAND_LOW * scale, BAND_MID * scale))
    x2, w2 = gauss(n - n_low, (BAND_MID * scale, BAND_HIGH * scale))
    x, w = np.concatenate([x1, x2]), np.concatenate([w1, w2])
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def dyadic_shells(r_min, r_max, n):
    """Composite rule on [r_min, r_max] with one order-n panel per dyadic shell."""
    m = max(1, int(math.ceil(math.log2(r_max / r_min))))
    breaks = r_min * np.exp2(np.arange(m + 1))
    breaks[-1] = max(breaks[-1], r_max)
    return composite_gauss(breaks, n)


def symmetric_shells(r_min, r_max, n):
    """`dyadic_shells` mirrored onto the negative half-line."""
    x, w = dyadic_shells(r_min, r_max, n)
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])
