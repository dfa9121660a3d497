#!/usr/bin/env python3
"""
Increment operators, rate functions and empirical regularity scans.

Lattice operators act on arrays whose element i sits at the lattice point
of index i; a shift by s >= 0 steps shortens the affected axes by s.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.field_synthesizer import bands
from src.lemma_oracles import lemma_oracles
from src.utils.parallel import ordered_map

logger = logging.getLogger('stablefield.regularity_verifier')

__all__ = [
    'LatticeDomainError', 'RegularityReport', 'aggregate_reports', 'crop_common', 'delta_B', 'delta_n',
    'directional_scan', 'infinity_scan', 'lemma_oracles', 'rate_L', 'rate_Ltilde', 'ratio_curves',
    'rectangular_n0', 'rectangular_scan', 'translate', 'verdict',
]

GROWTH = 0.10
VOID = 1e-300


class LatticeDomainError(ValueError):
    """Raised when shifts do not fit the lattice or are not lattice-aligned."""


def _shift(values, axis, s):
    n = values.shape[axis]
    if s < 0:
        raise LatticeDomainError("lattice shifts must be non-negative, got {}".format(s))
    if s >= n:
        raise LatticeDomainError("shift of {} steps does not fit an axis of {} points".format(s, n))
    upper = [slice(None)] * values.ndim
    lower = [slice(None)] * values.ndim
    upper[axis] = slice(s, n)
    lower[axis] = slice(0, n - s)
    return values[tuple(upper)], values[tuple(lower)]


def translate(values, shifts):
    """(Θ_v g)(x) = g(x + v) for a lattice vector v given in steps."""
    out = np.asarray(values)
    for axis, s in enumerate(shifts):
        if s:
            out = _shift(out, axis, int(s))[0]
    return out


def delta_B(values, B, shifts):
    """
    Directional increment Δ^B_{(h)}: b_k-fold difference g(x + h_k e_k) - g(x) per axis.

    Args:
        values (numpy.ndarray): Lattice values
        B (sequence): Multiplicities b_k
        shifts (sequence): h_k in lattice steps

    Returns:
        numpy.ndarray: Increments, each axis shortened by b_k h_k

    Raises:
        LatticeDomainError: If the lattice is too small
    """
    out = np.asarray(values, dtype=float)
    for axis, (b, s) in enumerate(zip(B, shifts)):
        for _ in range(int(b)):
            hi, lo = _shift(out, axis, int(s))
            out = hi - lo
    return out


def delta_n(values, n, shifts):
    """n-fold rectangular increment 𝚫ⁿ_h, h = shifts along the diagonal."""
    out = np.asarray(values, dtype=float)
    for _ in range(int(n)):
        hi = translate(out, shifts)
        lo = out[tuple(slice(0, m) for m in hi.shape)]
        out = hi - lo
    return out


def crop_common(*arrays):
    """Restrict arrays to their common leading index box."""
    shape = tuple(min(a.shape[i] for a in arrays) for i in range(arrays[0].ndim))
    return [a[tuple(slice(0, m) for m in shape)] for a in arrays]


def _indicator(condition):
    return 1.0 if condition else 0.0


def rate_L(alpha, a, b, delta=0.0):
    """
    Logarithmic exponent of the directional modulus.

    α = 2: 0 if a > b, 1/2 if a < b, 3/2 if a = b.
    α < 2: 0 if a > b, 1/α + ⌊α⌋/2 + δ if a < b, one more if a = b.
    """
    if min(a, b, delta) < 0:
        raise ValueError("rate_L needs non-negative arguments")
    if alpha == 2.0:
        return 0.5 * _indicator(b >= a) + _indicator(b == a)
    return (1.0 / alpha + math.floor(alpha) / 2.0 + delta) * _indicator(b >= a) + _indicator(b == a)


def rate_Ltilde(alpha, a, delta=0.0):
    """Logarithmic exponent of the rectangular modulus: one more when a is an integer."""
    if min(a, delta) < 0:
        raise ValueError("rate_Ltilde needs non-negative arguments")
    integer = _indicator(float(a).is_integer())
    if alpha == 2.0:
        return 0.5 + integer
    return 1.0 / alpha + math.floor(alpha) / 2.0 + delta + integer


def rectangular_n0(a):
    """n₀ = 1 - d + Σ ⌈a_l⌉."""
    return 1 - len(a) + sum(int(math.ceil(x)) for x in a)


def verdict(ratios):
    """
    'diverging' when two consecutive increases each exceed 10%, else 'bounded-trend'.

    None entries (numerically void levels) are skipped.
    """
    finite = [r for r in ratios if r is not None]
    rises = [b > (1.0 + GROWTH) * a for a, b in zip(finite[:-1], finite[1:])]
    return 'diverging' if any(x and y for x, y in zip(rises[:-1], rises[1:])) else 'bounded-trend'


@dataclass
class RegularityReport:
    kind: str
    levels: list
    abscissa: list
    ratios: list
    verdict: str
    parameters: dict = field(default_factory=dict)
    void_levels: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    per_seed: list = field(default_factory=list)

    @property
    def table(self):
        return dict(zip(self.levels, self.ratios))

    def to_dict(self):
        return {
            'kind': self.kind,
            'verdict': self.verdict,
            'parameters': dict(self.parameters),
            'table': [{'level': lv, 'abscissa': x, 'ratio': r}
                      for lv, x, r in zip(self.levels, self.abscissa, self.ratios)],
            'void_levels': list(self.void_levels),
            'warnings': list(self.warnings),
            'per_seed': [list(r) for r in self.per_seed],
        }


def _ratio(numerator, denominator):
    if numerator == 0.0:
        return 0.0
    if denominator < VOID:
        return None
    return numerator / denominator


def _aggregate(kind, levels, abscissa, tables, parameters, warnings=None):
    """Per-level median over seeds, then the verdict."""
    ratios, void = [], []
    for i, level in enumerate(levels):
        column = [t[i] for t in tables if t[i] is not None]
        if not column:
            ratios.append(None)
            void.append(level)
        else:
            ratios.append(float(np.median(column)))
    if void:
        logger.warning("%s scan: levels %s are numerically void", kind, void)
    report = RegularityReport(kind=kind, levels=list(levels), abscissa=list(abscissa), ratios=ratios,
                              verdict=verdict(ratios), parameters=parameters, void_levels=void,
                              warnings=list(warnings or []), per_seed=[list(t) for t in tables])
    logger.info("%s scan verdict: %s", kind, report.verdict)
    return report


def aggregate_reports(reports):
    """Merge reports of the same scan over seeds by the per-level median."""
    if not reports:
        raise ValueError("no reports to aggregate")
    first = reports[0]
    tables = []
    for report in reports:
        tables.extend(report.per_seed or [report.ratios])
    warnings = [w for report in reports for w in report.warnings]
    return _aggregate(first.kind, first.levels, first.abscissa, tables, dict(first.parameters), warnings)


def ratio_curves(report):
    """Plot data {curve name: (x, y)} for a report; void levels are dropped."""
    pairs = [(x, r) for x, r in zip(report.abscissa, report.ratios) if r is not None]
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    return {'ratio': (x, y)}


def _as_list(realizations):
    return list(realizations) if isinstance(realizations, (list, tuple)) else [realizations]


def _lattice_steps(grid, length):
    steps = []
    for l, step in enumerate(grid.step):
        s = length[l] / step
        if abs(s - round(s)) > 1e-9 * max(1.0, abs(s)):
            raise LatticeDomainError("h_{} = {} is not a multiple of the lattice step {}".format(l, length[l], step))
        steps.append(int(round(s)))
    return steps


def _window(grid, T, shape):
    """Index slices of the points of [-T, T]^d inside an array of the given shape."""
    slices = []
    for o, s, n in zip(grid.origin, grid.step, shape):
        lo = int(math.ceil((-T - o) / s - 1e-9))
        hi = int(math.floor((T - o) / s + 1e-9))
        if lo < 0 or hi >= n:
            raise LatticeDomainError(
                "lattice does not cover [-{0}, {0}] after the shifts (indices {1}..{2} of {3})".format(T, lo, hi, n))
        slices.append(slice(lo, hi + 1))
    return tuple(slices)


def _log_factor(h, power):
    return math.log(3.0 + 1.0 / h) ** power


def directional_denominator(h, B, a, alpha, delta, eta=None, exponent_shift=0.0):
    """
    Π |h_l|^{min(b_l, a_l)} log(3 + |h_l|^{-1})^{L} for the full field, or with
    the split |h_l|^{b_l(1-η_l)} |h_l|^{min(b_l, a_l) η_l} log^{η_l L} on a band.
    """
    value = 1.0
    for l, (hl, bl, al) in enumerate(zip(h, B, a)):
        if bl == 0:
            continue
        power = min(bl, al + exponent_shift)
        rate = rate_L(alpha, al, bl, delta)
        if eta is None:
            value *= hl ** power * _log_factor(hl, rate)
        else:
            e = eta[l]
            value *= hl ** (bl * (1 - e)) * hl ** (power * e) * _log_factor(hl, e * rate)
    return value


def directional_scan(realizations, B, T, a, alpha, delta=0.1, eta=None, levels=8, exponent_shift=0.0,
                     workers=1):
    """
    Sup over [-T, T]^d of |Δ^B_{(h)} X| divided by the modulus denominator,
    for |h_l| = T 2^{-m}, m = 1..levels.

    Args:
        realizations (list): FieldRealizations of one band (or the full field) over seeds
        B (sequence): Multiplicities
        T (float): Half-width of the box
        a (sequence): Exponents a_l
        alpha (float): Stability parameter
        delta (float): Logarithmic slack
        eta (sequence): Band, None for the full field
        levels (int): Number of dyadic levels
        exponent_shift (float): Added to a_l in the |h| power of the denominator

    Returns:
        RegularityReport: Median ratios over seeds and the verdict

    Raises:
        LatticeDomainError: If a level does not fit the lattices
    """
    realizations = _as_list(realizations)
    B = tuple(int(b) for b in B)
    lengths = [T * 2.0 ** -m for m in range(1, levels + 1)]

    def scan(realization):
        row = []
        for h in lengths:
            hv = [h] * len(B)
            shifts = [s if b else 0 for s, b in zip(_lattice_steps(realization.grid, hv), B)]
            diff = delta_B(realization.values, B, shifts)
            sup = float(np.max(np.abs(diff[_window(realization.grid, T, diff.shape)])))
            row.append(_ratio(sup, directional_denominator(hv, B, a, alpha, delta, eta, exponent_shift)))
        return row

    tables = ordered_map(scan, realizations, workers)
    params = {'B': list(B), 'T': T, 'a': list(a), 'alpha': alpha, 'delta': delta,
              'band': 'full' if eta is None else list(eta), 'exponent_shift': exponent_shift}
    return _aggregate('directional', list(range(1, levels + 1)), lengths, tables, params)


def rectangular_denominator(h, a, alpha, delta, eta=None, exponent_shift=0.0):
    """
    Σ_l |h_l|^{a_l} log(3 + |h_l|^{-1})^{L̃(a_l)} for the full field; on a band the
    power is η_l a_l + (1-η_l)⌈a_l⌉ and the log power η_l L̃(a_l).
    """
    total = 0.0
    for l, (hl, al) in enumerate(zip(h, a)):
        rate = rate_Ltilde(alpha, al, delta)
        if eta is None:
            total += hl ** (al + exponent_shift) * _log_factor(hl, rate)
        else:
            e = eta[l]
            total += hl ** (e * (al + exponent_shift) + (1 - e) * math.ceil(al)) * _log_factor(hl, e * rate)
    return total


def rectangular_scan(realizations, n, T, a, alpha, delta=0.1, eta=None, levels=8, exponent_shift=0.0,
                     workers=1):
    """
    Sup over [-T, T]^d of |𝚫ⁿ_h X| divided by the rectangular modulus, for the
    diagonal h with |h_l| = T 2^{-m}.

    Raises:
        ValueError: If n < n₀ = 1 - d + Σ⌈a_l⌉
    """
    n0 = rectangular_n0(a)
    if n < n0:
        raise ValueError("rectangular increments need n >= n0 = {}, got {}".format(n0, n))
    realizations = _as_list(realizations)
    d = len(a)
    lengths = [T * 2.0 ** -m for m in range(1, levels + 1)]

    def scan(realization):
        row = []
        for h in lengths:
            hv = [h] * d
            diff = delta_n(realization.values, n, _lattice_steps(realization.grid, hv))
            sup = float(np.max(np.abs(diff[_window(realization.grid, T, diff.shape)])))
            row.append(_ratio(sup, rectangular_denominator(hv, a, alpha, delta, eta, exponent_shift)))
        return row

    tables = ordered_map(scan, realizations, workers)
    params = {'n': n, 'n0': n0, 'T': T, 'a': list(a), 'alpha': alpha, 'delta': delta,
              'band': 'full' if eta is None else list(eta), 'exponent_shift': exponent_shift}
    return _aggregate('rectangular', list(range(1, levels + 1)), lengths, tables, params)


def infinity_normalizer(r, alpha, a_prime, delta, eta=None, b=None, exponent_shift=0.0):
    """
    Growth normalizer at ‖t‖ = r.

    Bands η ≠ 0 and derivatives: 1 for α < 1, sqrt(log(3 + r)) otherwise.
    Full field and X⁰: r^{a'} log(3 + r)^{1/α+δ} for α < 2, r^{a'} sqrt(log log(3 + r)) at α = 2.
    """
    smooth = (eta is not None and any(eta)) or (b is not None and any(b))
    if smooth:
        return 1.0 if alpha < 1.0 else math.sqrt(math.log(3.0 + r))
    power = r ** (a_prime + exponent_shift)
    if alpha == 2.0:
        return power * math.sqrt(math.log(math.log(3.0 + r)))
    return power * math.log(3.0 + r) ** (1.0 / alpha + delta)


def shell_points(radius, d, per_side=64):
    """Points with radius/2 < ‖t‖_∞ <= radius on a regular grid."""
    axis = np.linspace(-radius, radius, 2 * per_side + 1)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    norm = np.max(np.abs(grid), axis=1)
    return grid[(norm > radius / 2.0) & (norm <= radius)]


def infinity_scan(synthesizers, alpha, a_prime, delta=0.1, eta=None, b=None, shells=7, shell_cap=2 ** 14,
                  per_side=64, exponent_shift=0.0):
    """
    Per dyadic shell ‖t‖_∞ in (2^{m-1}, 2^m], m = 1..shells, the sup of |∂^b X^η|
    (or the full field when eta is None) divided by the growth normalizer.

    Shells whose image 2^{j_abs_max} 2^m exceeds shell_cap are skipped and
    recorded as capped.

    Args:
        synthesizers (list): One field_synthesizer.Synthesizer per seed

    Returns:
        RegularityReport: Median ratios over seeds
    """
    synthesizers = _as_list(synthesizers)
    d = synthesizers[0].d
    j_max = synthesizers[0].plan.j_abs_max
    radii, warnings = [], []
    for m in range(1, shells + 1):
        radius = 2.0 ** m
        if 2.0 ** j_max * radius > shell_cap:
            warnings.append("shell {} capped: 2^{} * {} exceeds {}".format(m, j_max, radius, shell_cap))
            logger.warning("Infinity scan: %s", warnings[-1])
            continue
        radii.append(radius)

    selected = bands(d) if eta is None else [tuple(eta)]
    tables = []
    for synth in synthesizers:
        row = []
        for radius in radii:
            pts = shell_points(radius, d, per_side)
            values = np.zeros(pts.shape[0])
            for band in selected:
                values = values + synth.band(band, pts, b)
            norm = infinity_normalizer(radius, alpha, a_prime, delta, eta, b, exponent_shift)
            row.append(_ratio(float(np.max(np.abs(values))), norm))
        tables.append(row)

    params = {'alpha': alpha, 'a_prime': a_prime, 'delta': delta, 'band': 'full' if eta is None else list(eta),
              'b': list(b) if b is not None else [0] * d, 'shell_cap': shell_cap, 'exponent_shift': exponent_shift}
    levels = [int(round(math.log2(r))) for r in radii]
    return _aggregate('infinity', levels, radii, tables, params, warnings)
