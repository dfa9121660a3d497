#!/usr/bin/env python3
"""
Lemarié-Meyer wavelet atoms in the frequency domain.

Fourier convention: ĝ(ξ) = ∫ e^{-iξ·x} g(x) dx, the inverse carries (2π)^{-d}.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from src.utils.quadrature import BAND_HIGH, BAND_LOW, BAND_MID, gauss

logger = logging.getLogger('stablefield.wavelet_atoms')


class QuadratureError(RuntimeError):
    """Raised when a refinement loop stops before reaching its tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class MeyerProfile:
    """Smooth ramp ν and the mother wavelet ψ̂¹ built on it."""

    @staticmethod
    def _bump(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    def nu(self, x):
        """ν(x) = s(x) / (s(x) + s(1-x)) with s(x) = exp(-1/x) on x > 0."""
        x = np.asarray(x, dtype=float)
        left = self._bump(x)
        right = self._bump(1.0 - x)
        return left / (left + right)

    def hat(self, lam):
        """
        Evaluate ψ̂¹ at real frequencies.

        Args:
            lam (array_like): Frequencies

        Returns:
            numpy.ndarray: Complex values, zero outside 2π/3 <= |λ| <= 8π/3
        """
        lam = np.asarray(lam, dtype=float)
        mag = np.abs(lam)
        out = np.zeros(lam.shape, dtype=complex)

        low = (mag >= BAND_LOW) & (mag <= BAND_MID)
        high = (mag > BAND_MID) & (mag <= BAND_HIGH)
        out[low] = np.exp(0.5j * lam[low]) * np.sin(
            0.5 * math.pi * self.nu(3.0 * mag[low] / (2.0 * math.pi) - 1.0))
        out[high] = np.exp(0.5j * lam[high]) * np.cos(
            0.5 * math.pi * self.nu(3.0 * mag[high] / (4.0 * math.pi) - 1.0))
        return out


MEYER = MeyerProfile()


@dataclass(frozen=True)
class WaveletAtom:
    """Index (J, K) of a renormalized atom ψ̂_{α,J,K}."""

    J: tuple
    K: tuple
    alpha: float = 2.0

    def __post_init__(self):
        if len(self.J) != len(self.K):
            raise ValueError("J and K must have the same length")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError("alpha must lie in (0, 2], got {}".format(self.alpha))

    @property
    def d(self):
        return len(self.J)


def meyer_hat(lam):
    """ψ̂¹(λ) for the default profile."""
    return MEYER.hat(lam)


def axis_factor(j, k, alpha, x):
    """One tensor factor 2^{-j/α} e^{-i 2^{-j} k x} ψ̂¹(2^{-j} x)."""
    scaled = np.ldexp(np.asarray(x, dtype=float), -int(j))
    return 2.0 ** (-j / alpha) * np.exp(-1j * k * scaled) * MEYER.hat(scaled)


def psi_hat_alpha_JK(atom, xi):
    """
    Evaluate the renormalized atom ψ̂_{α,J,K}.

    Args:
        atom (WaveletAtom): Atom index and stability parameter
        xi (array_like): Points of shape (..., d)

    Returns:
        numpy.ndarray: Complex values of shape (...)
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != atom.d:
        raise ValueError("xi has dimension {}, atom has {}".format(xi.shape[-1], atom.d))
    value = np.ones(xi.shape[:-1], dtype=complex)
    for axis in range(atom.d):
        value = value * axis_factor(atom.J[axis], atom.K[axis], atom.alpha, xi[..., axis])
    return value


def support_box(J):
    """Per-axis bounds (lo, hi) of the annulus lo <= |ξ_l| <= hi."""
    return [(float(np.ldexp(BAND_LOW, int(j))), float(np.ldexp(BAND_HIGH, int(j)))) for j in J]


def _profile_integral(alpha, nodes):
    total = 0.0
    for interval in ((BAND_LOW, BAND_MID), (BAND_MID, BAND_HIGH)):
        x, w = gauss(nodes, interval)
        total += np.sum(w * np.abs(MEYER.hat(x)) ** alpha)
    return 2.0 * total


def atom_quasi_norm(alpha, d=1, nodes=256, rtol=1e-10, max_nodes=16384):
    """
    Compute ‖ψ̂¹‖_{L^α(ℝ)}^d, the common (quasi-)norm of every ψ̂_{α,J,K}.

    The node count is doubled until the relative change drops below rtol.

    Raises:
        ValueError: If alpha is outside (0, 2]
        QuadratureError: If max_nodes is reached first
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2], got {}".format(alpha))

    previous = _profile_integral(alpha, nodes)
    change = float("inf")
    while nodes < max_nodes:
        nodes *= 2
        current = _profile_integral(alpha, nodes)
        change = abs(current - previous) / abs(current)
        if change < rtol:
            logger.debug("atom_quasi_norm(alpha=%s) converged with %s nodes", alpha, nodes)
            return current ** (d / alpha)
        previous = current

    raise QuadratureError(
        "atom_quasi_norm did not reach rtol={} (last change {:.3e})".format(rtol, change),
        estimate=previous ** (d / alpha))


def inner_product(atom, other, nodes=512):
    """
    (2π)^{-d} ∫ ψ̂_{α,J,K} conj(ψ̂_{α',J',K'}) dξ by per-axis quadrature.

    The integrand factorizes across axes, so the d-dimensional integral is a
    product of 1-D integrals over the support of `atom`.
    """
    if atom.d != other.d:
        raise ValueError("atoms have different dimensions")
    value = 1.0 + 0.0j
    for axis in range(atom.d):
        lo, hi = support_box([atom.J[axis]])[0]
        mid = 2.0 * lo
        parts = 0.0j
        for interval in ((lo, mid), (mid, hi), (-mid, -lo), (-hi, -mid)):
            x, w = gauss(nodes, interval)
            first = axis_factor(atom.J[axis], atom.K[axis], atom.alpha, x)
            second = axis_factor(other.J[axis], other.K[axis], other.alpha, x)
            parts += np.sum(w * first * np.conj(second))
        value *= parts / (2.0 * math.pi)
    return value
