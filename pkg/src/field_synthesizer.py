#!/usr/bin/env python3
"""
Assembly of X, its η-frequency parts X^η and their partial derivatives.

    Φ_{α,J}(x) = Σ_K Ψ_{α,J}(x - K) ε_{α,J,K}
    X^η(t)     = Σ_{J in Z^d_(η)} Φ_{α,J}(2^J t) - Φ_{α,J}(0)
    X          = Σ_η X^η

Every sum is truncated by a TruncationPlan and reduced in a fixed order
(η, then J, then K). Every point of a scale J sums the same K set with smooth
cutoff weights, so a realization is continuous in t and bit-reproducible for
any worker count.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.psi_kernel import KernelBank, QuadratureSpec, psi_points
from src.utils.parallel import ordered_map
from src.utils.quadrature import gauss
from src.wavelet_atoms import MEYER

logger = logging.getLogger('stablefield.field_synthesizer')

POINT_BLOCK = 1 << 20


class DifferentiabilityError(ValueError):
    """Raised when η_l b_l < a_l (or b_l < a_l for the full field) fails."""


@dataclass(frozen=True)
class LatticeSpec:
    origin: tuple
    step: tuple
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, 'origin', tuple(float(o) for o in self.origin))
        object.__setattr__(self, 'step', tuple(float(s) for s in self.step))
        object.__setattr__(self, 'counts', tuple(int(n) for n in self.counts))
        if not len(self.origin) == len(self.step) == len(self.counts):
            raise ValueError("origin, step and counts must have the same length")
        if any(n < 1 for n in self.counts) or any(s <= 0.0 for s in self.step):
            raise ValueError("lattice counts and steps must be positive")

    @property
    def d(self):
        return len(self.counts)

    def axes(self):
        return [o + s * np.arange(n) for o, s, n in zip(self.origin, self.step, self.counts)]

    def points(self):
        """Lattice points in row-major order, shape (N, d)."""
        return np.stack(np.meshgrid(*self.axes(), indexing='ij'), axis=-1).reshape(-1, self.d)

    def box(self):
        return [(o, o + s * (n - 1)) for o, s, n in zip(self.origin, self.step, self.counts)]

    @classmethod
    def centred(cls, half_width, step, d):
        n = int(round(2.0 * half_width / step)) + 1
        return cls([-half_width] * d, [step] * d, [n] * d)

    def to_dict(self):
        return {'origin': list(self.origin), 'step': list(self.step), 'counts': list(self.counts)}


def bands(d):
    """Υ = {0,1}^d in lexicographic order."""
    return [tuple(e) for e in itertools.product((0, 1), repeat=d)]


def band_levels(eta, j_abs_max):
    """Scales J in Z^d_(η) with |j_l| <= j_abs_max, lexicographic."""
    ranges = [range(1, j_abs_max + 1) if e else range(-j_abs_max, 1) for e in eta]
    return [tuple(J) for J in itertools.product(*ranges)]


@dataclass
class TruncationPlan:
    """
    Cutoffs shared by every point of a run.

    Scales satisfy |j_l| <= j_abs_max. For a scale J every point sums over the
    same K set, all K within k_radius + taper of the image box 2^J t_box. A
    term Ψ(x - K) is weighted by Π_l c(|x_l - K_l|), where the cutoff c is 1 up
    to k_radius and falls to 0 along the ramp ν over a width of table_margin / 2,
    so only the K within k_radius + taper of a point carry weight.
    """

    j_abs_max: int
    k_radius: int = 12
    table_margin: float = 2.0
    table_step: float = None
    quad: QuadratureSpec = None
    tail_report: dict = field(default_factory=dict)

    @classmethod
    def default(cls, d):
        return cls(j_abs_max=6 if d == 1 else 4, quad=QuadratureSpec.default(d))

    def __post_init__(self):
        if self.table_margin <= 0.0:
            raise ValueError("table_margin must be positive")

    @property
    def table_radius(self):
        return self.k_radius + self.table_margin

    @property
    def taper(self):
        return 0.5 * self.table_margin

    def offsets(self, d):
        """Integer offsets o with |o_l| <= ceil(k_radius + taper), lexicographic."""
        r = int(math.ceil(self.k_radius + self.taper))
        axis = np.arange(-r, r + 1)
        return np.stack(np.meshgrid(*[axis] * d, indexing='ij'), axis=-1).reshape(-1, d)

    def cutoff(self, diff):
        """Π_l c(|x_l - K_l|) for offsets of shape (..., d)."""
        ramp = MEYER.nu((np.abs(diff) - self.k_radius) / self.taper)
        return np.prod(1.0 - ramp, axis=-1)

    def to_dict(self):
        return {
            'j_abs_max': self.j_abs_max, 'k_radius': self.k_radius, 'table_margin': self.table_margin,
            'table_step': self.table_step,
            'nodes_per_half_band': self.quad.nodes_per_half_band if self.quad else None,
        }


@dataclass
class FieldRealization:
    grid: LatticeSpec
    values: np.ndarray
    meta: dict

    def at_origin(self):
        """Value at t = 0 when the lattice contains it."""
        idx = []
        for o, s, n in zip(self.grid.origin, self.grid.step, self.grid.counts):
            k = -o / s
            if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < n:
                raise ValueError("lattice does not contain the origin")
            idx.append(int(round(k)))
        return float(self.values[tuple(idx)])


class Synthesizer:
    """Shared state of one realization: coefficients, kernel tables, plan."""

    def __init__(self, source, density, plan=None, workers=1, bank=None):
        self.source = source
        self.density = density
        self.alpha = density.alpha
        self.d = density.d
        self.plan = plan or TruncationPlan.default(self.d)
        self.workers = workers
        self.bank = bank or KernelBank(density, self.alpha, self.plan.table_radius, self.plan.table_step,
                                       self.plan.quad, workers)

    def phi(self, J, x, b=None):
        """
        Φ_{α,J} (or ∂^bΦ_{α,J}) at points x of shape (N, d).

        Only the K near each point carry cutoff weight, so the sum over the
        plan's K set reduces to floor(x) + offsets.

        Raises:
            CoverageError: If the kernel table does not cover x - K
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        table = self.bank.table(J, b)
        offsets = self.plan.offsets(self.d)
        reach = self.plan.k_radius + self.plan.taper
        out = np.zeros(x.shape[0])
        block = max(1, POINT_BLOCK // len(offsets))
        for start in range(0, x.shape[0], block):
            pts = x[start:start + block]
            K = np.floor(pts)[:, None, :] + offsets[None, :, :]
            diff = pts[:, None, :] - K
            mask = np.all(np.abs(diff) < reach, axis=-1)
            unique, inverse = np.unique(K[mask].astype(np.int64), axis=0, return_inverse=True)
            eps = np.zeros(mask.shape)
            eps[mask] = self.source.block(J, unique)[inverse.reshape(-1)]
            kernel = np.zeros(mask.shape)
            kernel[mask] = table.evaluate(diff[mask]) * self.plan.cutoff(diff[mask])
            out[start:start + pts.shape[0]] = np.sum(kernel * eps, axis=1)
        return out

    def level(self, J, t, b=None):
        """∂^b[Φ_{α,J}(2^J ·)](t) = 2^{J·b} ∂^bΦ_{α,J}(2^J t)."""
        x = np.stack([np.ldexp(t[:, l], int(J[l])) for l in range(self.d)], axis=-1)
        values = self.phi(J, x, b)
        if b is not None and any(b):
            values = values * 2.0 ** sum(j * bl for j, bl in zip(J, b))
        return values

    def band(self, eta, t, b=None):
        """X^η (or ∂^bX^η) at points t, summed over J in lexicographic order."""
        eta = tuple(int(e) for e in eta)
        levels = band_levels(eta, self.plan.j_abs_max)
        derivative = b is not None and any(b)
        origin = np.zeros((1, self.d))

        def compute(J):
            values = self.level(J, t, b)
            if not derivative and not any(eta):
                values = values - self.level(J, origin)[0]
            return values

        parts = ordered_map(compute, levels, self.workers)
        total = np.zeros(t.shape[0])
        for values in parts:
            total = total + values
        if not derivative and any(eta):
            # Y^η(t) - Y^η(0), with Y^η(0) from the same routine
            y0 = 0.0
            for J in levels:
                y0 = y0 + self.level(J, origin)[0]
            total = total - y0
        self._record_tail(eta, b, levels, parts)
        return total

    def _record_tail(self, eta, b, levels, parts):
        key = ''.join(str(e) for e in eta)
        sups = {J: float(np.max(np.abs(v))) if v.size else 0.0 for J, v in zip(levels, parts)}
        self.plan.tail_report[key] = tail_estimate(
            eta, b, sups, self.plan.j_abs_max, self.alpha, self.density.a, self.density.a_prime)

    def meta(self, grid, band, b):
        return {
            'density': self.density.describe(),
            'alpha': self.alpha,
            'seed': self.source.seed,
            'coefficients': self.source.describe(),
            'plan': self.plan.to_dict(),
            'band': band,
            'b': list(b) if b is not None else [0] * self.d,
            'grid': grid.to_dict(),
        }


def _check_grid(synth, grid):
    if grid.d != synth.d:
        raise ValueError("lattice has dimension {}, density has {}".format(grid.d, synth.d))


def phi_alpha_J(synth, J, x):
    """Φ_{α,J}(x) = Σ_K Ψ_{α,J}(x - K) ε_{α,J,K} at points x."""
    return synth.phi(tuple(int(j) for j in J), x)


def synthesize_band(synth, eta, grid):
    """
    X^η on a lattice.

    Returns:
        FieldRealization: Values shaped like the lattice
    """
    _check_grid(synth, grid)
    values = synth.band(eta, grid.points()).reshape(grid.counts)
    logger.debug("Synthesized band %s on %s points", eta, values.size)
    return FieldRealization(grid, values, synth.meta(grid, list(eta), None))


def synthesize_full(synth, grid):
    """X = Σ_η X^η, with the bands added in lexicographic order."""
    _check_grid(synth, grid)
    pts = grid.points()
    total = np.zeros(pts.shape[0])
    for eta in bands(synth.d):
        total = total + synth.band(eta, pts)
    logger.info("Synthesized full field on %s points (seed %s)", total.size, synth.source.seed)
    return FieldRealization(grid, total.reshape(grid.counts), synth.meta(grid, 'full', None))


def check_differentiable(b, eta, a):
    """
    Raises:
        DifferentiabilityError: If η_l b_l < a_l fails on some axis
    """
    for l, (bl, al) in enumerate(zip(b, a)):
        el = 1 if eta is None else eta[l]
        if el * bl >= al and bl > 0:
            raise DifferentiabilityError(
                "∂^b with b={} is not guaranteed on band {}: condition η_l b_l < a_l fails on axis {} "
                "({} * {} >= {})".format(list(b), 'full' if eta is None else list(eta), l, el, bl, al))


def derivative_field(synth, b, eta, grid):
    """
    ∂^bX^η, or ∂^bX when eta is None, on a lattice.

    Raises:
        DifferentiabilityError: If the band condition fails
    """
    _check_grid(synth, grid)
    b = tuple(int(v) for v in b)
    if not any(b):
        return synthesize_full(synth, grid) if eta is None else synthesize_band(synth, eta, grid)
    check_differentiable(b, eta, synth.density.a)
    pts = grid.points()
    selected = bands(synth.d) if eta is None else [tuple(eta)]
    total = np.zeros(pts.shape[0])
    for band in selected:
        total = total + synth.band(band, pts, b)
    label = 'full' if eta is None else list(eta)
    return FieldRealization(grid, total.reshape(grid.counts), synth.meta(grid, label, b))


def level_ratio(eta, b, alpha, a, a_prime):
    """Per-axis geometric decay of the level envelopes away from j = 0."""
    b = b or (0,) * len(eta)
    if not any(eta) and not any(b):
        return [2.0 ** -(1.0 - a_prime)] * len(eta)
    return [2.0 ** -(al - bl) if e else 2.0 ** -(1.0 / alpha + bl) for e, bl, al in zip(eta, b, a)]


def level_bound(J, b, eta, alpha, delta, a, a_prime):
    """
    Envelope of sup |∂^b[Φ_{α,J}(2^J ·)]| over a fixed box, up to a constant.

    Π_l ρ_l^{|j_l|} (1 + |j_l|)^μ with μ = 1/α + δ for α < 2 and 1/2 at α = 2.
    """
    mu = 0.5 if alpha == 2.0 else 1.0 / alpha + delta
    ratios = level_ratio(eta, b, alpha, a, a_prime)
    return math.prod(r ** abs(j) * (1.0 + abs(j)) ** mu for r, j in zip(ratios, J))


def tail_estimate(eta, b, sups, j_abs_max, alpha, a, a_prime, delta=0.1, horizon=256):
    """
    Bound on the levels beyond j_abs_max, scaled by the outermost computed levels.

    The constant is the largest sup/level_bound over levels touching the
    cutoff; the envelope sum over the omitted levels is separable per axis.
    """
    d = len(eta)
    if any(al <= bl for al, bl, e in zip(a, b or (0,) * d, eta) if e):
        return float('inf')
    outer = [J for J in sups if any(abs(j) == j_abs_max for j in J)]
    constant = max((sups[J] / level_bound(J, b, eta, alpha, delta, a, a_prime) for J in outer), default=0.0)

    mu = 0.5 if alpha == 2.0 else 1.0 / alpha + delta
    ratios = level_ratio(eta, b, alpha, a, a_prime)
    whole, inside = 1.0, 1.0
    for e, r in zip(eta, ratios):
        js = np.arange(1, horizon + 1) if e else np.arange(0, horizon + 1)
        terms = r ** js * (1.0 + js) ** mu
        whole *= float(np.sum(terms))
        inside *= float(np.sum(terms[js <= j_abs_max]))
    return constant * max(whole - inside, 0.0)


def tail_report(synth):
    """Tail estimates recorded by the last synthesis, keyed by band."""
    return dict(synth.plan.tail_report)


def _shell_rule(r_min, r_max, t, base=32):
    """Dyadic shells on [r_min, r_max], with nodes growing with the oscillation of e^{itξ}."""
    nodes, weights = [], []
    lo = r_min
    while lo < r_max:
        hi = min(2.0 * lo, r_max)
        n = base + int(math.ceil(abs(t) * (hi - lo) / math.pi))
        x, w = gauss(n, (lo, hi))
        nodes.append(x)
        weights.append(w)
        lo = hi
    x, w = np.concatenate(nodes), np.concatenate(weights)
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def gaussian_variance_oracle(density, t, octaves=20):
    """
    2 ∫ |e^{it·ξ} - 1|² f(ξ)² dξ, the variance of X(t) at α = 2.

    Tensor product of per-axis dyadic-shell rules on 2^-octaves <= |ξ_l| <= 2^octaves.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rules = [_shell_rule(2.0 ** -octaves, 2.0 ** octaves, tl) for tl in t]
    mesh = np.stack(np.meshgrid(*[r[0] for r in rules], indexing='ij'), axis=-1)
    weight = math.prod(np.meshgrid(*[r[1] for r in rules], indexing='ij')) if len(t) > 1 else rules[0][1]
    phase = np.tensordot(mesh, t, axes=([-1], [0]))
    integrand = 2.0 * (1.0 - np.cos(phase)) * density.evaluate(mesh) ** 2
    return 2.0 * float(np.sum(weight * integrand))


def frame_reconstruction_error(t, n_levels, density, alpha=None, k_factor=4, quad=None, octaves=16, high_octaves=6):
    """
    Δ_α distance between F(t, ·) = (e^{itξ} - 1) f and its truncated expansion.

    D_n = {|j| <= n, |k| <= k_factor 2^n}; the expansion Σ s_{J,K}(t) conj ψ̂_{J,K}
    uses s_{J,K}(t) = Ψ_J(2^J t - K) - Ψ_J(-K). Δ_α is ∫|·|^α for α < 1 and the
    L^α norm otherwise. One-dimensional.

    Returns:
        list: Errors for n = 1..n_levels
    """
    alpha = density.alpha if alpha is None else float(alpha)
    if density.d != 1:
        raise ValueError("frame_reconstruction_error is one-dimensional")
    t = float(t)
    xi, w = _shell_rule(2.0 ** -(n_levels + octaves), 2.0 ** (n_levels + high_octaves), t)
    target = (np.exp(1j * t * xi) - 1.0) * density.evaluate(xi[:, None])

    def distance(approx):
        power = float(np.sum(w * np.abs(target - approx) ** alpha))
        return power if alpha < 1.0 else power ** (1.0 / alpha)

    errors = []
    for n in range(1, n_levels + 1):
        approx = np.zeros(xi.shape, dtype=complex)
        K = np.arange(-k_factor * 2 ** n, k_factor * 2 ** n + 1, dtype=float)
        for j in range(-n, n + 1):
            if t == 0.0:
                break
            x = np.concatenate([np.ldexp(t, j) - K, -K])[:, None]
            psi, _ = psi_points((j,), (0,), x, density, 2.0, quad)
            s = psi[:K.size] - psi[K.size:]
            scaled = np.ldexp(xi, -j)
            inside = MEYER.hat(scaled) != 0.0
            series = np.exp(1j * np.outer(scaled[inside], K)) @ s
            approx[inside] += 2.0 ** (-j / 2.0) * np.conj(MEYER.hat(scaled[inside])) * series
        errors.append(distance(approx))
        logger.debug("Frame reconstruction n=%s: %.6e", n, errors[-1])
    return errors
