#!/usr/bin/env python3
"""
Brute-force oracles for the deterministic inequalities behind the regularity
estimates. Nothing here touches a random number generator.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from src.densities.base_density import p_star
from src.utils.parallel import ordered_map

logger = logging.getLogger('stablefield.lemma_oracles')

SLACK = 1e-12
REFINEMENT = 0.01

DEFAULT_PARAMS = {
    'subadditivity': {'points': 100, 'u_max': 1e6},
    'convolution': {'alphas': [0.3, 1.0, 2.0], 'k_max': 100000, 'theta_max': 1e4, 'v_max': 1e3,
                    'theta_points': 12, 'v_points': 41},
    'series': {'cases': [
        {'alpha': 0.5, 'a_prime': 0.3, 'delta': 0.1, 'd': 1, 'r': 1},
        {'alpha': 1.2, 'a_prime': 0.7, 'delta': 0.1, 'd': 1, 'r': 1},
        {'alpha': 2.0, 'a_prime': 0.5, 'delta': 0.1, 'd': 2, 'r': 1},
        {'alpha': 1.5, 'a_prime': 0.6, 'delta': 0.2, 'd': 2, 'r': 2},
    ], 'checkpoints': [8, 12, 16], 'step': 8, 'tolerance': 1e-6, 'n_max': 400},
    'increments': {'T': 1.0, 'd': [1, 2], 'max_length': 3, 'h_levels': 6, 'points': 41},
    'dyadic_sums': {'T': 1.0, 'mu': [0.0, 0.6, 1.5], 'a': [0.3, 1.0], 'alpha': [0.5, 2.0],
                    'octaves': 40, 'per_octave': 4},
}


@dataclass
class OracleResult:
    name: str
    passed: bool
    constant: float = None
    witnesses: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {'name': self.name, 'passed': bool(self.passed), 'constant': self.constant,
                'witnesses': list(self.witnesses), 'details': dict(self.details)}


@dataclass
class LemmaOracleReport:
    results: list
    kind: str = 'lemma-oracle'

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def result(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {'kind': self.kind, 'passed': self.passed, 'results': [r.to_dict() for r in self.results]}


def _sqrt_log(x):
    return np.sqrt(np.log(3.0 + np.asarray(x, dtype=float)))


def _grid(lo_exp, hi, points):
    """0 together with a geometric grid up to hi."""
    return np.concatenate([[0.0], np.geomspace(10.0 ** lo_exp, hi, points - 1)])


def check_subadditivity(points=100, u_max=1e6):
    """sqrt(log(3 + u' + u'')) <= 2 sqrt(log(3 + u')) sqrt(log(3 + u'')) on a points² grid."""
    u = _grid(-3, u_max, points)
    u1, u2 = np.meshgrid(u, u, indexing='ij')
    lhs = _sqrt_log(u1 + u2)
    rhs = 2.0 * _sqrt_log(u1) * _sqrt_log(u2)
    bad = np.argwhere(lhs > rhs * (1.0 + SLACK))
    witnesses = [{'u1': float(u1[tuple(i)]), 'u2': float(u2[tuple(i)])} for i in bad[:10]]
    return OracleResult('subadditivity', not witnesses, float(np.max(lhs / rhs)), witnesses,
                        {'points': int(u.size ** 2)})


def convolution_ratio(theta, v, alpha, k_max=100000):
    """
    Σ_{|k| <= k_max} sqrt(log(3 + θ + |k|)) / (2 + |v - k|)^{p*} divided by sqrt(log(3 + θ + |v|)).

    Args:
        theta (float): θ >= 0
        v (numpy.ndarray): Points v
        alpha (float): Sets p* = p*(α)

    Returns:
        numpy.ndarray: Ratio per v
    """
    k = np.arange(-k_max, k_max + 1, dtype=float)
    top = _sqrt_log(theta + np.abs(k))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    p = p_star(alpha)
    out = np.empty(v.shape)
    for i, vi in enumerate(v):
        out[i] = np.sum(top / (2.0 + np.abs(vi - k)) ** p) / _sqrt_log(theta + abs(vi))
    return out


def check_convolution(alphas=(0.3, 1.0, 2.0), k_max=100000, theta_max=1e4, v_max=1e3, theta_points=12,
                      v_points=41, workers=1):
    """Sup of convolution_ratio over (θ, v) grids stays put when both grids are refined."""
    witnesses, sups = [], {}

    def sup_over(alpha, nt, nv):
        thetas = _grid(-2, theta_max, nt)
        vs = np.linspace(-v_max, v_max, nv)
        rows = ordered_map(lambda th: float(np.max(convolution_ratio(th, vs, alpha, k_max))), thetas, workers)
        return max(rows)

    for alpha in alphas:
        coarse = sup_over(alpha, theta_points, v_points)
        fine = sup_over(alpha, 2 * theta_points, 2 * v_points - 1)
        sups[str(alpha)] = {'coarse': coarse, 'fine': fine}
        logger.debug("Convolution sup at alpha=%s: %.6g -> %.6g", alpha, coarse, fine)
        if not math.isfinite(fine) or fine > coarse * (1.0 + REFINEMENT):
            witnesses.append({'alpha': alpha, 'coarse': coarse, 'fine': fine})
    constant = max(s['fine'] for s in sups.values())
    return OracleResult('convolution', not witnesses, constant, witnesses, {'sups': sups, 'k_max': k_max})


def series_box(N, alpha, a_prime, delta, d, r):
    """Partial sum over J in {0..N}^d of the dyadic series bounding the synthesis."""
    j = np.arange(N + 1, dtype=float)
    mesh = np.meshgrid(*([j] * d), indexing='ij')
    log2_term = -mesh[r - 1] * (1.0 - a_prime)
    log2_term = log2_term - (d / alpha) * np.log2(sum(np.exp2(-m) for m in mesh))
    weight = np.ones_like(log2_term)
    for m in mesh:
        log2_term = log2_term - m / alpha
        weight = weight * _sqrt_log(m) * (1.0 + m) ** (1.0 / alpha + delta)
    return float(np.sum(np.exp2(log2_term) * weight))


def check_series(cases, checkpoints=(8, 12, 16), step=8, tolerance=1e-6, n_max=400):
    """
    Partial sums at the checkpoints, then N is extended in steps until the
    Cauchy increment drops below the tolerance.
    """
    witnesses, details = [], []
    for case in cases:
        params = dict(case)
        sums = {N: series_box(N, **params) for N in checkpoints}
        N, previous = max(checkpoints), sums[max(checkpoints)]
        increment = float('inf')
        limit = n_max if params['d'] == 1 else min(n_max, 300 if params['d'] == 2 else 80)
        while N < limit:
            N += step
            current = series_box(N, **params)
            increment, previous = current - previous, current
            if increment < tolerance:
                break
        monotone = all(sums[a] <= sums[b] for a, b in zip(checkpoints[:-1], checkpoints[1:]))
        entry = {'case': params, 'partial_sums': {str(k): v for k, v in sums.items()}, 'N': N,
                 'limit': previous, 'last_increment': increment}
        details.append(entry)
        if not (monotone and math.isfinite(previous) and increment < tolerance):
            witnesses.append(entry)
            logger.warning("Series did not settle for %s (increment %.3g at N=%s)", params, increment, N)
    return OracleResult('series', not witnesses, max(e['limit'] for e in details), witnesses,
                        {'cases': details})


class BumpFunction:
    """g(x) = Σ_terms Π_l q_l(x_l) exp(-x_l²/2) with polynomial q_l."""

    def __init__(self, terms):
        self.terms = [[Polynomial(c) for c in term] for term in terms]
        self.d = len(self.terms[0])

    @staticmethod
    def _axis_derivative(q, order):
        for _ in range(order):
            q = q.deriv() - Polynomial([0.0, 1.0]) * q
        return q

    def derivative(self, B, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        gauss = np.exp(-0.5 * x ** 2)
        for term in self.terms:
            value = np.ones(x.shape[:-1])
            for l, q in enumerate(term):
                value = value * self._axis_derivative(q, B[l])(x[..., l]) * gauss[..., l]
            total = total + value
        return total

    def __call__(self, x):
        return self.derivative((0,) * self.d, x)


def _box(T, d, points):
    axis = np.linspace(-T, T, points)
    return np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1)


def increment(g, B, h, x):
    """Δ^B_{(h)} g at points x by the binomial expansion."""
    total = np.zeros(x.shape[:-1])
    for m in itertools.product(*(range(b + 1) for b in B)):
        coeff = 1.0
        for b, mi in zip(B, m):
            coeff *= (-1.0) ** (b - mi) * math.comb(b, mi)
        total = total + coeff * g(x + np.asarray(m, dtype=float) * np.asarray(h, dtype=float))
    return total


def check_increments(T=1.0, d=(1, 2), max_length=3, h_levels=6, points=41):
    """‖Δ^B_{(h)} g‖ <= 2^{l(B)} min_{B' <= B} ‖∂^{B'} g‖_{T 2^{l(B)}} Π |h_l|^{b'_l} on bump functions."""
    bumps = {
        1: BumpFunction([[[1.0, -0.5, 0.3, 0.1]]]),
        2: BumpFunction([[[1.0, 0.4], [0.5, 0.0, 0.2]], [[0.0, 1.0, -0.3], [1.0, 1.0]]]),
        3: BumpFunction([[[1.0, 0.2], [1.0, -0.1], [0.5, 0.0, 0.1]]]),
    }
    witnesses, checked, worst = [], 0, 0.0
    for dim in d:
        g = bumps[dim]
        x = _box(T, dim, points)
        for B in itertools.product(range(max_length + 1), repeat=dim):
            length = sum(B)
            if length == 0 or length > max_length:
                continue
            wide = _box(T * 2 ** length, dim, points * 2 ** length)
            sups = {Bp: float(np.max(np.abs(g.derivative(Bp, wide))))
                    for Bp in itertools.product(*(range(b + 1) for b in B))}
            for m in range(h_levels):
                for signs in itertools.product((-1.0, 1.0), repeat=dim):
                    h = np.array(signs) * T * 2.0 ** -m
                    lhs = float(np.max(np.abs(increment(g, B, h, x))))
                    bound = min(s * float(np.prod(np.abs(h) ** np.array(Bp))) for Bp, s in sups.items())
                    rhs = 2.0 ** length * bound
                    checked += 1
                    if rhs > 0:
                        worst = max(worst, lhs / rhs)
                    if lhs > rhs * (1.0 + SLACK) + SLACK:
                        witnesses.append({'d': dim, 'B': list(B), 'h': h.tolist(), 'lhs': lhs, 'rhs': rhs})
    return OracleResult('increments', not witnesses, worst, witnesses[:10], {'checked': checked})


def _z_grid(T, octaves, per_octave):
    m = np.arange(octaves * per_octave + 1)
    z = T * np.exp2(-m / per_octave)
    return np.concatenate([-z[::-1], [0.0], z])


def _safe_ratio(num, den):
    out = np.zeros_like(num)
    nz = num != 0.0
    out[nz] = num[nz] / den[nz]
    return out


def _capped_power(j, z, b):
    """min(|2^j z|^b, 1) for a column of j and a row of z, with 0^0 = 1."""
    if b == 0:
        return np.ones(np.broadcast(j, z).shape)
    with np.errstate(divide='ignore'):
        log2z = np.where(z > 0, np.log2(np.where(z > 0, z, 1.0)), -np.inf)
    return np.exp2(np.minimum(b * (j + log2z), 0.0))


def low_frequency_ratio(z, alpha, mu, b, j_min=-2000):
    """Σ_{j<=0} 2^{j/α}(1+|j|)^μ min(|2^j z|^b, 1) / |z|^b with 0/0 = 0."""
    j = np.arange(j_min, 1, dtype=float)[:, None]
    z = np.abs(np.asarray(z, dtype=float))[None, :]
    num = np.sum(np.exp2(j / alpha) * (1.0 + np.abs(j)) ** mu * _capped_power(j, z, b), axis=0)
    return _safe_ratio(num, z[0] ** b)


def high_frequency_ratio(z, a, mu, b, log_power=None, j_max=None):
    """
    Σ_{j>=1} 2^{-ja}(1+j)^μ min(|2^j z|^b, 1) divided by |z|^b when b < a, or by
    |z|^a log(3 + |z|^{-1})^{log_power} otherwise (μ+1 when b = a, μ when b > a).
    """
    if j_max is None:
        j_max = 200 + int(math.ceil((60.0 + 12.0 * mu) / a))
    z = np.abs(np.asarray(z, dtype=float))
    num = np.zeros(z.shape)
    for start in range(1, j_max + 1, 512):
        j = np.arange(start, min(start + 512, j_max + 1), dtype=float)[:, None]
        num = num + np.sum(np.exp2(-j * a) * (1.0 + j) ** mu * _capped_power(j, z[None, :], b),
                           axis=0)
    if b < a:
        den = z ** b
    else:
        if log_power is None:
            log_power = mu + 1.0 if b == a else mu
        with np.errstate(divide='ignore'):
            den = np.where(z > 0, z ** a * np.log(3.0 + 1.0 / np.where(z > 0, z, 1.0)) ** log_power, 0.0)
    return _safe_ratio(num, den)


def check_dyadic_sums(T=1.0, mu=(0.0, 0.6, 1.5), a=(0.3, 1.0), alpha=(0.5, 2.0), octaves=40, per_octave=4):
    """
    Sups of the low- and high-frequency ratios over z in [-T, T]: finite, and
    within 1% when the grid is refined and pushed twice as far towards 0.
    """
    witnesses, sups = [], {}
    base = _z_grid(T, octaves, per_octave)
    fine = _z_grid(T, 2 * octaves, 2 * per_octave)

    def compare(label, fn):
        s0, s1 = float(np.max(fn(base))), float(np.max(fn(fine)))
        sups[label] = {'base': s0, 'refined': s1}
        if not (math.isfinite(s1) and s1 <= s0 * (1.0 + REFINEMENT) + SLACK):
            witnesses.append({'case': label, 'base': s0, 'refined': s1})

    for m in mu:
        for al in alpha:
            for b in (0.0, 0.5, 2.0):
                compare('low alpha={} mu={} b={}'.format(al, m, b),
                        lambda z, al=al, m=m, b=b: low_frequency_ratio(z, al, m, b))
        for ai in a:
            for b, case in ((0.5 * ai, 'b<a'), (ai, 'b=a'), (ai + 1.0, 'b>a')):
                compare('high {} a={} mu={}'.format(case, ai, m),
                        lambda z, ai=ai, m=m, b=b: high_frequency_ratio(z, ai, m, b))
    constant = max(s['refined'] for s in sups.values())
    return OracleResult('dyadic_sums', not witnesses, constant, witnesses, {'sups': sups})


def _merged(params):
    merged = {k: dict(v) for k, v in DEFAULT_PARAMS.items()}
    for key, value in (params or {}).items():
        if key not in merged:
            raise ValueError("Unknown lemma oracle: {}".format(key))
        merged[key].update(value or {})
    return merged


def lemma_oracles(params=None, workers=1):
    """
    Run every deterministic oracle.

    Args:
        params (dict): Per-oracle overrides of DEFAULT_PARAMS
        workers (int): Threads for grid sweeps

    Returns:
        LemmaOracleReport: Pass/fail per oracle with violating witnesses
    """
    p = _merged(params)
    results = [
        check_subadditivity(**p['subadditivity']),
        check_convolution(workers=workers, **p['convolution']),
        check_series(**p['series']),
        check_increments(**p['increments']),
        check_dyadic_sums(**p['dyadic_sums']),
    ]
    for r in results:
        logger.info("Lemma oracle %s: %s (constant %.6g, %s witnesses)",
                    r.name, 'pass' if r.passed else 'FAIL', r.constant, len(r.witnesses))
    return LemmaOracleReport(results)
