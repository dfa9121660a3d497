#!/usr/bin/env python3
"""
Localized kernels Ψ_{α,J} and their partial derivatives.

    ∂^bΨ_{α,J}(x) = (2π)^{-d} 2^{Σj_l/α} i^{l(b)} ∫ e^{ix·ξ} ξ^b f(2^J ξ) ψ̂_{0,0}(ξ) dξ

The integrand vanishes outside the band {2π/3 <= |ξ_l| <= 8π/3}, so every
integral is a tensor Gauss-Legendre rule over that band. Synthesis reads
kernels from cubic-spline tables (PsiTable) built once per (J, b).
"""
import logging
import math
import os
import threading
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from src.utils.grid_io import read_grid, read_yaml, write_grid, write_yaml
from src.utils.parallel import ordered_map
from src.utils.quadrature import band_rule
from src.wavelet_atoms import MEYER, QuadratureError, WaveletAtom, psi_hat_alpha_JK

logger = logging.getLogger('stablefield.psi_kernel')

# largest |x_l| at which the band quadrature stays accurate
ACCURACY_CAP = 200.0
TABLE_CHUNKS = 16


class ScaleOverflowError(RuntimeError):
    """Raised when 2^{Σj/α} times the integral leaves the float range."""


class CoverageError(ValueError):
    """Raised when a kernel table is asked for points outside its grid."""


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Tensor Gauss-Legendre rule over the band.

    Each half-annulus gets `nodes_per_half_band` nodes plus three per unit of
    the largest |x_l| the rule must resolve, so at x = 0 an axis carries
    2 * nodes_per_half_band nodes.
    """

    nodes_per_half_band: int = 64

    def node_count(self, extent=0.0):
        return int(self.nodes_per_half_band + math.ceil(3.0 * abs(float(extent))))

    def refined(self):
        return QuadratureSpec(2 * self.nodes_per_half_band)

    @classmethod
    def default(cls, d):
        return cls(64 if d <= 2 else 24)


@dataclass(frozen=True)
class PsiValue:
    J: tuple
    b: tuple
    x: tuple
    value: float
    imag_residual: float


def _scale_exponent(J, alpha):
    return sum(J) / alpha


def _apply_scale(values, J, alpha):
    exponent = _scale_exponent(J, alpha)
    peak = float(np.max(np.abs(values))) if np.size(values) else 0.0
    if peak > 0.0 and math.log2(peak) + exponent > 1023.0:
        raise ScaleOverflowError("2^(Σj/α) overflows for J={} (log2 scale {:.1f})".format(tuple(J), exponent))
    if exponent < -1074.0:
        return np.zeros_like(values)
    # split the power so neither factor overflows on its own
    half = 0.5 * exponent
    return values * 2.0 ** half * 2.0 ** (exponent - half)


def _integrand(J, b, density, extents, quad):
    """Per-axis nodes and the weighted integrand tensor on the band."""
    d = len(J)
    nodes, axis_weights = [], []
    for l in range(d):
        x, w = band_rule(quad.node_count(extents[l]))
        nodes.append(x)
        axis_weights.append(w * MEYER.hat(x) * x ** b[l])
    mesh = np.meshgrid(*nodes, indexing='ij')
    scaled = np.stack([np.ldexp(mesh[l], int(J[l])) for l in range(d)], axis=-1)
    values = density.evaluate(scaled).astype(complex)
    if not np.all(np.isfinite(values)):
        raise ScaleOverflowError("f(2^J ξ) is not finite on the band for J={}".format(tuple(J)))
    for l in range(d):
        shape = [1] * d
        shape[l] = -1
        values = values * axis_weights[l].reshape(shape)
    values *= (1j ** sum(b)) / (2.0 * math.pi) ** d
    return nodes, values


def _check_extent(extents):
    worst = max(extents) if len(extents) else 0.0
    if worst > ACCURACY_CAP:
        raise QuadratureError("|x_l| = {:.1f} exceeds the kernel accuracy cap {}".format(worst, ACCURACY_CAP))


def psi_points(J, b, x, density, alpha=None, quad=None):
    """
    Evaluate ∂^bΨ_{α,J} at scattered points.

    Args:
        J (sequence): Scale multi-index
        b (sequence): Derivative multi-index
        x (array_like): Points of shape (N, d)
        density (AdmissibleDensity): Spectral density
        alpha (float): Stability parameter, defaults to density.alpha
        quad (QuadratureSpec): Quadrature rule

    Returns:
        tuple: (real values, imaginary residuals), each of shape (N,)

    Raises:
        QuadratureError: If a coordinate exceeds ACCURACY_CAP
        ScaleOverflowError: If the scale prefactor overflows
    """
    alpha = density.alpha if alpha is None else float(alpha)
    quad = quad or QuadratureSpec.default(len(J))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    extents = np.max(np.abs(x), axis=0) if x.shape[0] else np.zeros(len(J))
    _check_extent(extents)
    nodes, tensor = _integrand(J, b, density, extents, quad)

    acc = np.tensordot(np.exp(1j * np.outer(x[:, 0], nodes[0])), tensor, axes=([1], [0]))
    for l in range(1, len(J)):
        acc = np.einsum('nk...,nk->n...', acc, np.exp(1j * np.outer(x[:, l], nodes[l])))
    acc = _apply_scale(acc, J, alpha)
    return acc.real, np.abs(acc.imag)


def psi_grid(J, b, axes, density, alpha=None, quad=None, extents=None):
    """
    Evaluate ∂^bΨ_{α,J} on the tensor grid axes[0] x ... x axes[d-1].

    The exponential factorizes, so the grid costs d matrix contractions.
    `extents` fixes the per-axis node counts; by default they follow the axes.

    Returns:
        tuple: (real values, imaginary residuals) shaped like the grid
    """
    alpha = density.alpha if alpha is None else float(alpha)
    quad = quad or QuadratureSpec.default(len(J))
    axes = [np.asarray(a, dtype=float) for a in axes]
    if extents is None:
        extents = [float(np.max(np.abs(a))) for a in axes]
    _check_extent(extents)
    nodes, acc = _integrand(J, b, density, extents, quad)
    for l in range(len(J)):
        acc = np.tensordot(acc, np.exp(1j * np.outer(axes[l], nodes[l])), axes=([0], [1]))
    acc = _apply_scale(acc, J, alpha)
    return acc.real, np.abs(acc.imag)


def compute_psi(J, b, x, density, alpha=None, quad=None):
    """
    Single value ∂^bΨ_{α,J}(x) with its imaginary residual.

    Returns:
        PsiValue: The value
    """
    J, b, x = tuple(int(j) for j in J), tuple(int(v) for v in b), tuple(float(v) for v in x)
    value, residual = psi_points(J, b, np.array([x]), density, alpha, quad)
    return PsiValue(J=J, b=b, x=x, value=float(value[0]), imag_residual=float(residual[0]))


def compute_s_JK(J, K, t, density, alpha=None, quad=None):
    """
    s_{J,K}(t) = (2π)^{-d} ∫ (e^{it·ξ} - 1) f(ξ) ψ̂_{J,K}(ξ) dξ.

    Integrated directly in ξ over the support of ψ̂_{J,K}, independently of the
    kernel rule. `alpha` only selects the default quadrature; ψ̂_{J,K} is the
    L²-normalized atom.

    Returns:
        float: Real part of the integral
    """
    quad = quad or QuadratureSpec.default(len(J))
    d = len(J)
    t = np.asarray(t, dtype=float)
    atom = WaveletAtom(tuple(int(j) for j in J), tuple(int(k) for k in K), 2.0)

    nodes, weights = [], []
    for l in range(d):
        extent = abs(np.ldexp(t[l], int(J[l]))) + abs(K[l])
        x, w = band_rule(quad.node_count(extent) + 4, scale=2.0 ** int(J[l]))
        nodes.append(x)
        weights.append(w)
    mesh = np.stack(np.meshgrid(*nodes, indexing='ij'), axis=-1)
    weight = np.ones(mesh.shape[:-1])
    for l in range(d):
        shape = [1] * d
        shape[l] = -1
        weight = weight * weights[l].reshape(shape)

    phase = np.exp(1j * np.tensordot(mesh, t, axes=([-1], [0]))) - 1.0
    integrand = phase * density.evaluate(mesh) * psi_hat_alpha_JK(atom, mesh)
    return float(np.sum(weight * integrand).real / (2.0 * math.pi) ** d)


class PsiTable:
    """
    ∂^bΨ_{α,J} tabulated on the grid origin + step * n, interpolated by cubic splines.
    """

    def __init__(self, J, b, alpha, origin, step, values, imag_residual=0.0):
        self.J = tuple(int(j) for j in J)
        self.b = tuple(int(v) for v in b)
        self.alpha = float(alpha)
        self.origin = np.asarray(origin, dtype=float)
        self.step = np.asarray(step, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.imag_residual = float(imag_residual)
        self.upper = self.origin + self.step * (np.array(self.values.shape) - 1)
        self._coeffs = ndimage.spline_filter(self.values, order=3, mode='mirror')

    @property
    def d(self):
        return len(self.J)

    @classmethod
    def tabulate(cls, J, b, density, alpha=None, radius=14.0, step=None, quad=None, workers=1):
        """
        Tabulate on [-radius, radius]^d.

        Rows along the first axis are computed in a fixed number of chunks,
        all with the node count of the full table, and concatenated in order.
        """
        alpha = density.alpha if alpha is None else float(alpha)
        d = len(J)
        step = default_table_step(d) if step is None else float(step)
        n = int(round(2.0 * radius / step)) + 1
        axis = -radius + step * np.arange(n)
        chunks = np.array_split(axis, min(TABLE_CHUNKS, n))

        def rows(chunk):
            return psi_grid(J, b, [chunk] + [axis] * (d - 1), density, alpha, quad, extents=[radius] * d)

        parts = ordered_map(rows, chunks, workers)
        values = np.concatenate([p[0] for p in parts], axis=0)
        residual = max(float(np.max(p[1])) for p in parts)
        scale = 1.0 + float(np.max(np.abs(values)))
        if residual > 1e-8 * scale:
            logger.warning("Kernel table J=%s b=%s has imaginary residual %.3e", tuple(J), tuple(b), residual)
        logger.debug("Tabulated Ψ J=%s b=%s on %s nodes per axis", tuple(J), tuple(b), n)
        return cls(J, b, alpha, [-radius] * d, [step] * d, values, residual)

    def covers(self, x):
        x = np.asarray(x, dtype=float)
        tol = 1e-9 * self.step
        return bool(np.all(x >= self.origin - tol) and np.all(x <= self.upper + tol))

    def evaluate(self, x):
        """
        Interpolate at points of shape (..., d).

        Raises:
            CoverageError: If any point lies outside the table
        """
        x = np.asarray(x, dtype=float)
        if x.size and not self.covers(x):
            raise CoverageError(
                "kernel table J={} covers [{}, {}], requested [{}, {}]".format(
                    self.J, self.origin.tolist(), self.upper.tolist(),
                    np.min(x.reshape(-1, self.d), axis=0).tolist(), np.max(x.reshape(-1, self.d), axis=0).tolist()))
        coords = (x.reshape(-1, self.d) - self.origin) / self.step
        out = ndimage.map_coordinates(self._coeffs, coords.T, order=3, mode='mirror', prefilter=False)
        return out.reshape(x.shape[:-1])

    def save(self, path):
        """Write the table as an HSFG grid with a YAML sidecar."""
        write_grid(path, self.origin, self.step, self.values)
        write_yaml(os.path.splitext(path)[0] + '.yml', {
            'kind': 'psi_table', 'J': list(self.J), 'b': list(self.b), 'alpha': self.alpha,
            'imag_residual': self.imag_residual,
        })

    @classmethod
    def load(cls, path):
        origin, step, values = read_grid(path)
        meta = read_yaml(os.path.splitext(path)[0] + '.yml')
        return cls(meta['J'], meta['b'], meta['alpha'], origin, step, values, meta.get('imag_residual', 0.0))


def default_table_step(d):
    return 1.0 / 64.0 if d == 1 else 1.0 / 32.0


class KernelBank:
    """Thread-safe cache of PsiTables keyed by (J, b)."""

    def __init__(self, density, alpha=None, radius=14.0, step=None, quad=None, workers=1):
        self.density = density
        self.alpha = density.alpha if alpha is None else float(alpha)
        self.radius = float(radius)
        self.step = step
        self.quad = quad or QuadratureSpec.default(density.d)
        self.workers = workers
        self._tables = {}
        self._lock = threading.Lock()

    def table(self, J, b=None):
        J = tuple(int(j) for j in J)
        b = tuple(int(v) for v in (b or (0,) * len(J)))
        key = (J, b)
        with self._lock:
            cached = self._tables.get(key)
        if cached is not None:
            return cached
        table = PsiTable.tabulate(J, b, self.density, self.alpha, self.radius, self.step, self.quad, self.workers)
        with self._lock:
            return self._tables.setdefault(key, table)


@dataclass
class LocalizationReport:
    branch: str
    p_star: int
    spatial_slopes: dict
    spatial_ok: bool
    prefactor_slopes: list
    predicted_slopes: list
    prefactor_ok: bool

    @property
    def passed(self):
        return self.spatial_ok and self.prefactor_ok

    def to_dict(self):
        return {
            'branch': self.branch,
            'p_star': self.p_star,
            'spatial_slopes': {str(k): v for k, v in self.spatial_slopes.items()},
            'spatial_ok': self.spatial_ok,
            'prefactor_slopes': list(self.prefactor_slopes),
            'predicted_slopes': list(self.predicted_slopes),
            'prefactor_ok': self.prefactor_ok,
            'passed': self.passed,
        }


def predicted_log2_prefactor(J, eta, density, alpha):
    """
    log2 of the J-dependent prefactor bounding sup |∂^bΨ_{α,J}|.

    For eta = 0 the kernel is Ψ_{α,-J} with J >= 0 and the bound is
    (Σ 2^{-j_l})^{-a'-d/α} Π 2^{-j_l/α}; otherwise Π 2^{(1-η_l) j_l/α - η_l j_l a_l}.
    """
    if not any(eta):
        return -(density.a_prime + density.d / alpha) * math.log2(sum(2.0 ** -j for j in J)) - sum(J) / alpha
    return sum((1 - e) * j / alpha - e * j * a for j, e, a in zip(J, eta, density.a))


def _envelope(r, values, bins):
    """Running maximum of |values| over the tail beyond each bin edge."""
    edges = np.geomspace(r[0], r[-1], bins + 1)
    centres, peaks = [], []
    for lo in edges[:-1]:
        tail = np.abs(values[r >= lo])
        if tail.size:
            centres.append(lo)
            peaks.append(float(np.max(tail)))
    return np.array(centres), np.array(peaks)


def verify_localization(J_set, b, T, density, alpha=None, eta=None, quad=None,
                        x_range=(5.0, 100.0), samples=2000, box=4.0, tolerance=0.10):
    """
    Fit the spatial decay and the J prefactor of ∂^bΨ_{α,J}.

    With eta = 0 (the default) J_set holds non-negative multi-indices and the
    kernels Ψ_{α,-J} are used; otherwise J_set must lie in the η orthant.

    Args:
        J_set (list): Scale multi-indices, at least two for the prefactor fit
        b (sequence): Derivative multi-index
        T (float): Offset in the weight Π(1 + T + |x_l|)
        density (AdmissibleDensity): Spectral density
        alpha (float): Stability parameter
        eta (sequence): Frequency band
        quad (QuadratureSpec): Quadrature rule
        x_range (tuple): Diagonal radii used for the decay fit
        samples (int): Number of radii
        box (float): Half-width of the box for the prefactor sup
        tolerance (float): Relative tolerance on the prefactor slope

    Returns:
        LocalizationReport: Fitted slopes and verdicts

    Raises:
        ValueError: If the data are degenerate or J_set is outside the branch
    """
    alpha = density.alpha if alpha is None else float(alpha)
    d = density.d
    eta = tuple(eta) if eta is not None else (0,) * d
    low = not any(eta)
    J_set = [tuple(int(j) for j in J) for J in J_set]
    if len(J_set) < 2:
        raise ValueError("verify_localization needs at least two scales")
    for J in J_set:
        if low and any(j < 0 for j in J):
            raise ValueError("J={} must be non-negative on the eta=0 branch".format(J))
        if not low and any((e == 1 and j < 1) or (e == 0 and j > 0) for j, e in zip(J, eta)):
            raise ValueError("J={} is not in the band eta={}".format(J, eta))

    def kernel_scale(J):
        return tuple(-j for j in J) if low else J

    r = np.geomspace(x_range[0], x_range[1], samples)
    slopes = {}
    for J in J_set:
        values, _ = psi_points(kernel_scale(J), b, np.repeat(r[:, None], d, axis=1), density, alpha, quad)
        centres, peaks = _envelope(r, values, 24)
        floor = 1e-12 * max(float(np.max(np.abs(values))), 1e-300)
        keep = peaks > floor
        if np.count_nonzero(keep) < 3:
            logger.debug("Kernel J=%s is below the noise floor on %s", J, x_range)
            slopes[J] = -math.inf
            continue
        slope, _ = np.polyfit(d * np.log1p(T + centres[keep]), np.log(peaks[keep]), 1)
        slopes[J] = float(slope)

    grid = np.linspace(-box, box, int(16 * box) + 1)
    log_sups, predicted = [], []
    for J in J_set:
        values, _ = psi_grid(kernel_scale(J), b, [grid] * d, density, alpha, quad)
        peak = float(np.max(np.abs(values)))
        if peak <= 0.0:
            raise ValueError("kernel J={} vanishes on the box; cannot fit a prefactor".format(J))
        log_sups.append(math.log2(peak))
        predicted.append(predicted_log2_prefactor(J, eta, density, alpha))

    # regress along each axis that varies in J_set
    fitted, expected = [], []
    coords = np.array(J_set, dtype=float)
    for l in range(d):
        if np.ptp(coords[:, l]) == 0:
            continue
        fitted.append(float(np.polyfit(coords[:, l], log_sups, 1)[0]))
        expected.append(float(np.polyfit(coords[:, l], predicted, 1)[0]))
    if not fitted:
        raise ValueError("J_set does not vary along any axis")

    p = density.p_star
    spatial_ok = all(s <= -p + 0.5 for s in slopes.values())
    prefactor_ok = all(abs(f - e) <= tolerance * max(abs(e), 1e-12) for f, e in zip(fitted, expected))
    report = LocalizationReport(
        branch='low' if low else 'band', p_star=p, spatial_slopes=slopes, spatial_ok=spatial_ok,
        prefactor_slopes=fitted, predicted_slopes=expected, prefactor_ok=prefactor_ok)
    logger.info("Localization %s: spatial slopes %s, prefactor %s vs %s", report.branch,
                ["%.2f" % s for s in slopes.values()], fitted, expected)
    return report
