#!/usr/bin/env python3
"""
Admissible spectral densities and the empirical admissibility checker.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.densities.base_density import AdmissibleDensity, p_star
from src.densities.builtin_density import BuiltinDensity, builtin_partial
from src.densities.callable_density import CallableDensity
from src.densities.tabulated_density import TabulatedDensity
from src.utils.parallel import ordered_map
from src.utils.quadrature import symmetric_shells

logger = logging.getLogger('stablefield.spectral_density')

__all__ = [
    'AdmissibleDensity', 'BuiltinDensity', 'CallableDensity', 'TabulatedDensity',
    'AdmissibilityError', 'AdmissibilityReport', 'SamplingSpec',
    'builtin_partial', 'check_admissibility', 'empirical_exponents', 'get_spectral_density', 'p_star',
]

STABILITY = 0.10


class AdmissibilityError(ValueError):
    """Raised when an empirical constant keeps growing under refinement."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def get_spectral_density(config):
    """
    Build the density named by config['density']['kind'].

    Args:
        config (dict): Run configuration with 'density', 'alpha' and 'd'

    Returns:
        AdmissibleDensity: The density

    Raises:
        ValueError: If the kind is unknown or its parameters are missing
    """
    spec = config['density']
    kind = spec.get('kind', 'builtin')
    alpha = float(config['alpha'])
    d = int(config['d'])

    if kind == 'builtin':
        v = spec.get('v') or [0.0] * d
        logger.info("Using builtin density u=%s v=%s", spec['u'], v)
        return BuiltinDensity(spec['u'], v, alpha, d=d, a_prime=spec.get('a_prime'), a=spec.get('a'))

    if spec.get('a_prime') is None or spec.get('a') is None:
        raise ValueError("density.a_prime and density.a are required for kind '{}'".format(kind))
    if kind == 'callable':
        return CallableDensity.from_target(spec['target'], alpha, d, spec['a_prime'], spec['a'])
    if kind == 'tabulated':
        density = TabulatedDensity.from_file(spec['table'], alpha, spec['a_prime'], spec['a'])
        if density.d != d:
            raise ValueError("density table is {}-dimensional, run has d={}".format(density.d, d))
        return density

    raise ValueError(f"Unsupported density kind: {kind}")


@dataclass(frozen=True)
class SamplingSpec:
    """
    Sample layout of the admissibility checker.

    Every axis magnitude is log-spaced with `points_per_octave` nodes; level
    i of the refinement reaches `octaves[i]` octaves below the near-origin
    radius 8π√d/3 and above the far radius 2π/3.
    """

    points_per_octave: int = 2
    octaves: tuple = (8, 12, 16)
    far_floor: float = 2.0 ** -4
    integrability_nodes: int = 16

    def __post_init__(self):
        if len(self.octaves) < 3:
            raise ValueError("at least three refinement levels are needed to detect growth")


@dataclass
class AdmissibilityReport:
    integrability_estimate: float
    h2_constant_estimate: float
    h3_constant_estimate: float
    violations: list = field(default_factory=list)
    integrability_sequence: list = field(default_factory=list)
    h2_sequence: list = field(default_factory=list)
    h3_sequence: list = field(default_factory=list)
    exponents: dict = field(default_factory=dict)

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {
            'integrability_estimate': self.integrability_estimate,
            'h2_constant_estimate': self.h2_constant_estimate,
            'h3_constant_estimate': self.h3_constant_estimate,
            'integrability_sequence': list(self.integrability_sequence),
            'h2_sequence': list(self.h2_sequence),
            'h3_sequence': list(self.h3_sequence),
            'violations': list(self.violations),
            'exponents': dict(self.exponents),
            'passed': self.passed,
        }


def _log_magnitudes(lo, hi, per_octave):
    n = max(2, int(math.ceil(per_octave * math.log2(hi / lo))) + 1)
    return np.geomspace(lo, hi, n)


def _sign_patterns(d):
    return np.array(list(itertools.product((1.0, -1.0), repeat=d)))


def _tensor_points(magnitudes, d):
    grid = np.stack(np.meshgrid(*([magnitudes] * d), indexing='ij'), axis=-1).reshape(-1, d)
    signs = _sign_patterns(d)
    return (grid[None, :, :] * signs[:, None, :]).reshape(-1, d)


class _PartialSample:
    """|∂^p f| on one sample region, reusable for any exponent choice."""

    def __init__(self, density, points, workers):
        self.points = points
        self.orders = list(itertools.product(range(density.p_star + 1), repeat=density.d))
        self.values = ordered_map(lambda p: np.abs(density.partial(p, points)), self.orders, workers)

    def near_sup(self, a_prime, d, alpha):
        radius = np.linalg.norm(self.points, axis=1)
        best, witness = 0.0, None
        for p, values in zip(self.orders, self.values):
            ratio = values * radius ** (a_prime + d / alpha + sum(p))
            best, witness = _track(best, witness, ratio, p, self.points)
        return best, witness

    def far_sup(self, a, alpha):
        weight_log = np.log1p(np.abs(self.points))
        best, witness = 0.0, None
        for p, values in zip(self.orders, self.values):
            exponent = np.asarray(a) + 1.0 / alpha + np.asarray(p)
            ratio = values * np.exp(weight_log @ exponent)
            best, witness = _track(best, witness, ratio, p, self.points)
        return best, witness


def _track(best, witness, ratio, p, points):
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    i = int(np.argmax(ratio))
    if ratio[i] > best:
        return float(ratio[i]), {'point': points[i].tolist(), 'p': list(p)}
    return best, witness


def _diverging(sequence):
    """Growth above the stability margin across the last two refinements."""
    a, b, c = sequence[-3:]
    return b > (1.0 + STABILITY) * a and c > (1.0 + STABILITY) * b


def _stable(sequence):
    return sequence[-1] <= (1.0 + STABILITY) * sequence[-2]


class _CheckerSamples:
    def __init__(self, density, sampling, workers):
        d = density.d
        near_radius = 8.0 * math.pi * math.sqrt(d) / 3.0
        far_radius = 2.0 * math.pi / 3.0
        self.near, self.far = [], []
        for octaves in sampling.octaves:
            low = near_radius * 2.0 ** -octaves / math.sqrt(d)
            mags = _log_magnitudes(low, near_radius, sampling.points_per_octave)
            pts = _tensor_points(mags, d)
            pts = pts[np.linalg.norm(pts, axis=1) <= near_radius]
            self.near.append(_PartialSample(density, pts, workers))

            mags = _log_magnitudes(sampling.far_floor, far_radius * 2.0 ** octaves, sampling.points_per_octave)
            pts = _tensor_points(mags, d)
            pts = pts[np.linalg.norm(pts, axis=1) >= far_radius]
            self.far.append(_PartialSample(density, pts, workers))
            logger.debug("Checker level with %s octaves: %s near, %s far points", octaves,
                         len(self.near[-1].points), len(self.far[-1].points))


def _integrability(density, alpha, octaves, nodes):
    """∫ min(1, ‖ξ‖^α) |f|^α dξ on the box 2^-octaves <= |ξ_l| <= 2^octaves."""
    x, w = symmetric_shells(2.0 ** -octaves, 2.0 ** octaves, nodes)
    d = density.d
    if d > 1:
        rest = np.stack(np.meshgrid(*([x] * (d - 1)), indexing='ij'), axis=-1).reshape(-1, d - 1)
        rest_w = np.prod(np.stack(np.meshgrid(*([w] * (d - 1)), indexing='ij'), axis=-1).reshape(-1, d - 1), axis=1)
    else:
        rest, rest_w = np.zeros((1, 0)), np.ones(1)
    total = 0.0
    # one slab per first-axis node keeps memory at O(n^{d-1})
    for i in range(len(x)):
        pts = np.concatenate([np.full((rest.shape[0], 1), x[i]), rest], axis=1)
        values = np.minimum(1.0, np.linalg.norm(pts, axis=1) ** alpha) * np.abs(density.evaluate(pts)) ** alpha
        total += w[i] * float(np.sum(rest_w * values))
    return total


def check_admissibility(density, alpha=None, sampling=None, workers=1, raise_on_violation=True):
    """
    Empirically check conditions (H2) and (H3) and the integrability of |f|^α.

    Args:
        density (AdmissibleDensity): Density with partials up to p_star per axis
        alpha (float): Stability parameter, defaults to density.alpha
        sampling (SamplingSpec): Sample layout
        workers (int): Threads used over derivative orders
        raise_on_violation (bool): Raise instead of only listing violations

    Returns:
        AdmissibilityReport: Constants per refinement level and any violations

    Raises:
        AdmissibilityError: If a constant diverges and raise_on_violation is set
    """
    alpha = density.alpha if alpha is None else float(alpha)
    sampling = sampling or SamplingSpec()
    samples = _CheckerSamples(density, sampling, workers)

    h2, h2_witness = zip(*[s.near_sup(density.a_prime, density.d, alpha) for s in samples.near])
    h3, h3_witness = zip(*[s.far_sup(density.a, alpha) for s in samples.far])
    integrals = [_integrability(density, alpha, o, sampling.integrability_nodes) for o in sampling.octaves]

    violations = []
    if _diverging(h2):
        violations.append({'condition': 'H2', 'witness': h2_witness[-1], 'sequence': list(h2)})
    if _diverging(h3):
        violations.append({'condition': 'H3', 'witness': h3_witness[-1], 'sequence': list(h3)})
    steps = np.diff(integrals)
    if not np.all(np.isfinite(integrals)) or (abs(steps[-1]) > abs(steps[-2]) and abs(steps[-1]) > 1e-12):
        violations.append({'condition': 'integrability', 'witness': None, 'sequence': list(integrals)})

    report = AdmissibilityReport(
        integrability_estimate=float(integrals[-1]),
        h2_constant_estimate=float(h2[-1]),
        h3_constant_estimate=float(h3[-1]),
        violations=violations,
        integrability_sequence=[float(v) for v in integrals],
        h2_sequence=[float(v) for v in h2],
        h3_sequence=[float(v) for v in h3],
        exponents={'a_prime': density.a_prime, 'a': list(density.a)},
    )
    for violation in violations:
        logger.warning("Admissibility condition %s fails, witness %s", violation['condition'], violation['witness'])
    if violations and raise_on_violation:
        first = violations[0]
        raise AdmissibilityError(
            "condition {} diverges under refinement, witness {}".format(first['condition'], first['witness']),
            report=report)
    return report


def _bisect(stable, lo, hi, iterations, upward=True):
    """Boundary of a monotone stability region; upward=True finds the largest stable value."""
    if upward and not stable(lo):
        return lo
    if not upward and not stable(hi):
        return hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if stable(mid) == upward:
            lo = mid
        else:
            hi = mid
    return lo if upward else hi


def empirical_exponents(density, sampling=None, workers=1, a_max=8.0, iterations=20):
    """
    Smallest a' and largest a_l for which the checker's constants stay stable.

    The sample partials are computed once; only the weights change
    during the bisection.

    Returns:
        dict: {'a_prime': float, 'a': [float, ...]}
    """
    sampling = sampling or SamplingSpec()
    samples = _CheckerSamples(density, sampling, workers)
    alpha = density.alpha

    def near_stable(a_prime):
        return _stable([s.near_sup(a_prime, density.d, alpha)[0] for s in samples.near])

    a_prime = _bisect(near_stable, 0.0, 1.0, iterations, upward=False)

    exponents = list(density.a)
    for l in range(density.d):
        def far_stable(value, axis=l):
            trial = list(exponents)
            trial[axis] = value
            return _stable([s.far_sup(trial, alpha)[0] for s in samples.far])

        exponents[l] = _bisect(far_stable, 0.0, a_max, iterations)
    logger.info("Empirical exponents: a'=%.4f a=%s", a_prime, ["%.4f" % x for x in exponents])
    return {'a_prime': a_prime, 'a': exponents}
