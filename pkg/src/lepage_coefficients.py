#!/usr/bin/env python3
"""
Coefficients ε_{α,J,K} of the wavelet-type series.

For α < 2 every coefficient is a measurable function of one shared LePage
stream (Γ_m, κ^m, g_m):

    ε_{α,J,K} = Re a(α) Σ_m g_m Γ_m^{-1/α} φ(κ^m)^{-1/α} conj ψ̂_{α,J,K}(κ^m)

For α = 2 each (J, K) gets an independent centred normal draw with variance
2(2π)^d from a counter-based generator keyed on (seed, J, K).
"""
import logging
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from src.utils.quadrature import BAND_LOW, gauss
from src.wavelet_atoms import MEYER, atom_quasi_norm

logger = logging.getLogger('stablefield.lepage_coefficients')

STREAM_TAG = 1
GAUSSIAN_TAG = 2
LOG_KAPPA_CAP = 700.0
J_RANGE = 40
TERM_CHUNK = 4096
ROW_CHUNK = 256


def a_alpha(alpha):
    """
    a(α) = (∫_0^∞ x^{-α} sin x dx)^{-1/α} in closed form.

    Raises:
        ValueError: If alpha is outside (0, 2)
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2), got {}".format(alpha))
    if alpha == 1.0:
        return 2.0 / math.pi
    return (special.gamma(1.0 - alpha) * math.cos(0.5 * math.pi * alpha)) ** (-1.0 / alpha)


def _sinc(x):
    return np.sinc(np.asarray(x) / math.pi)


def a_alpha_oracle(alpha, half_periods=200, nodes=32, averaged=40):
    """
    a(α) from the defining integral.

    The first half-period carries the x^{-α} singularity and goes to QUADPACK
    with an algebraic weight; later half-periods use Gauss-Legendre. The
    alternating partial sums are then averaged repeatedly.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2), got {}".format(alpha))
    first, _ = integrate.quad(_sinc, 0.0, math.pi, weight='alg', wvar=(1.0 - alpha, 0.0),
                              epsabs=1e-15, epsrel=1e-14, limit=200)
    partial = [first]
    for k in range(1, half_periods):
        x, w = gauss(nodes, (k * math.pi, (k + 1) * math.pi))
        partial.append(partial[-1] + float(np.sum(w * x ** -alpha * np.sin(x))))

    sums = np.array(partial[-averaged:])
    while sums.size > 1:
        sums = 0.5 * (sums[1:] + sums[:-1])
    return float(sums[0]) ** (-1.0 / alpha)


def gaussian_scale(alpha):
    """σ_α such that E|Re g|^α = 1 for g = σ_α (Z_1 + i Z_2)."""
    moment = 2.0 ** (alpha / 2.0) * special.gamma((alpha + 1.0) / 2.0) / math.sqrt(math.pi)
    return moment ** (-1.0 / alpha)


def default_M(d):
    """Series truncation length used when the configuration leaves M unset."""
    if d == 1:
        return 1000000
    return int(min(1e5 * 4 ** (d - 1), 4e6))


@dataclass(frozen=True)
class LePageStream:
    """Shared randomness (Γ, κ, g) of one realization."""

    seed: int
    alpha: float
    epsilon_phi: float
    M: int
    d: int
    gamma: np.ndarray
    log_abs_kappa: np.ndarray
    kappa_sign: np.ndarray
    g: np.ndarray
    a_alpha: float

    @property
    def kappa(self):
        return self.kappa_sign * np.exp(self.log_abs_kappa)

    def log_phi(self):
        """log φ(κ^m) for φ(ξ) = (ε/4)^d Π |ξ_l|^{-1} (1 + |log|ξ_l||)^{-1-ε}."""
        y = self.log_abs_kappa
        eps = self.epsilon_phi
        return self.d * math.log(eps / 4.0) - np.sum(y, axis=1) - (1.0 + eps) * np.sum(np.log1p(np.abs(y)), axis=1)


def sample_stream(seed, alpha, epsilon_phi=0.5, M=None, d=1):
    """
    Draw the LePage stream for one seed.

    Args:
        seed (int): Non-negative seed
        alpha (float): Stability parameter in (0, 2)
        epsilon_phi (float): Tail parameter of φ
        M (int): Number of terms, defaults to default_M(d)
        d (int): Dimension

    Returns:
        LePageStream: Immutable arrays, bit-identical for identical arguments
    """
    M = default_M(d) if M is None else int(M)
    if M < 1:
        raise ValueError("M must be positive, got {}".format(M))
    if epsilon_phi <= 0.0:
        raise ValueError("epsilon_phi must be positive, got {}".format(epsilon_phi))
    constant = a_alpha(alpha)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), STREAM_TAG])))
    gamma = np.cumsum(rng.standard_exponential(M))
    sign = np.where(rng.integers(0, 2, size=(M, d)) == 0, 1.0, -1.0)
    # |y| has density ε (1 + |y|)^{-1-ε}; the log of each coordinate is ±|y|
    magnitude = (1.0 - rng.random((M, d))) ** (-1.0 / epsilon_phi) - 1.0
    log_abs = np.where(rng.integers(0, 2, size=(M, d)) == 0, 1.0, -1.0) * np.minimum(magnitude, LOG_KAPPA_CAP)
    z = rng.standard_normal((M, 2))
    g = gaussian_scale(alpha) * (z[:, 0] + 1j * z[:, 1])

    for array in (gamma, sign, log_abs, g):
        array.setflags(write=False)
    logger.debug("Sampled LePage stream seed=%s alpha=%s M=%s d=%s", seed, alpha, M, d)
    return LePageStream(seed=int(seed), alpha=float(alpha), epsilon_phi=float(epsilon_phi), M=M, d=int(d),
                        gamma=gamma, log_abs_kappa=log_abs, kappa_sign=sign, g=g, a_alpha=constant)


def stream_to_config(stream):
    """Parameters that regenerate the stream; the arrays are never stored."""
    return {'seed': stream.seed, 'alpha': stream.alpha, 'epsilon_phi': stream.epsilon_phi,
            'M': stream.M, 'd': stream.d}


def stream_from_config(config):
    return sample_stream(config['seed'], config['alpha'], config['epsilon_phi'], config['M'], config['d'])


def _zigzag(n):
    n = int(n)
    return 2 * n if n >= 0 else -2 * n - 1


class CoefficientSource:
    """Common interface of the α < 2 and α = 2 coefficient laws."""

    kind = 'abstract'

    def __init__(self, alpha, d, seed):
        self.alpha = float(alpha)
        self.d = int(d)
        self.seed = int(seed)

    def block(self, J, K):
        """
        Coefficients ε_{α,J,K} for one J and many K.

        Args:
            J (sequence): Scale multi-index
            K (array_like): Integer array of shape (n, d)

        Returns:
            numpy.ndarray: Real values of shape (n,)
        """
        raise NotImplementedError("Subclasses must implement block method")

    def truncation_bound(self, J):
        return 0.0

    def describe(self):
        return {'kind': self.kind, 'alpha': self.alpha, 'd': self.d, 'seed': self.seed}


class LePageCoefficients(CoefficientSource):
    """
    ε_{α,J,K} from one LePage stream.

    Terms are bucketed once by the dyadic band of each κ coordinate; a query
    for J only visits the terms whose κ lies in support_box(J), in ascending m.
    """

    kind = 'lepage'

    def __init__(self, stream):
        super().__init__(stream.alpha, stream.d, stream.seed)
        self.stream = stream
        self._axis_buckets = [self._bucket_axis(stream.log_abs_kappa[:, l]) for l in range(stream.d)]
        self._log_scale = -(np.log(stream.gamma) + stream.log_phi()) / stream.alpha
        self._bands = {}
        self._lock = threading.Lock()

    @staticmethod
    def _bucket_axis(log_abs):
        # |κ| in 2^j [2π/3, 8π/3] means j in {top - 1, top}
        top = np.floor((log_abs - math.log(BAND_LOW)) / math.log(2.0)).astype(np.int64)
        buckets = {}
        for j in range(-J_RANGE, J_RANGE + 1):
            members = np.nonzero((top == j) | (top - 1 == j))[0]
            if members.size:
                buckets[j] = members
        return buckets

    def members(self, J):
        """Ascending indices m with κ^m in support_box(J)."""
        if any(abs(int(j)) > J_RANGE for j in J):
            return np.zeros(0, dtype=np.int64)
        index = None
        for l, j in enumerate(J):
            bucket = self._axis_buckets[l].get(int(j))
            if bucket is None:
                return np.zeros(0, dtype=np.int64)
            index = bucket if index is None else np.intersect1d(index, bucket, assume_unique=True)
        return index

    def band_terms(self, J):
        """
        Weights w_m and scaled marks u_m = 2^{-J} κ^m of the terms in band J.

        ε_{α,J,K} = Re Σ_m w_m exp(i Σ_l k_l u_{m,l}).
        """
        J = tuple(int(j) for j in J)
        with self._lock:
            cached = self._bands.get(J)
        if cached is not None:
            return cached

        stream = self.stream
        m = self.members(J)
        weights = stream.a_alpha * stream.g[m] * np.exp(self._log_scale[m])
        marks = np.empty((m.size, self.d))
        for l, j in enumerate(J):
            marks[:, l] = np.ldexp(stream.kappa_sign[m, l] * np.exp(stream.log_abs_kappa[m, l]), -j)
            weights = weights * 2.0 ** (-j / self.alpha) * np.conj(MEYER.hat(marks[:, l]))
        keep = weights != 0.0
        terms = (weights[keep], marks[keep], m[keep])
        for array in terms:
            array.setflags(write=False)
        with self._lock:
            return self._bands.setdefault(J, terms)

    def block(self, J, K):
        K = np.atleast_2d(np.asarray(K, dtype=float))
        weights, marks, _ = self.band_terms(J)
        out = np.zeros(K.shape[0])
        if weights.size == 0 or K.shape[0] == 0:
            return out
        for r0 in range(0, K.shape[0], ROW_CHUNK):
            rows = K[r0:r0 + ROW_CHUNK]
            acc = np.zeros(rows.shape[0])
            for m0 in range(0, weights.size, TERM_CHUNK):
                u = marks[m0:m0 + TERM_CHUNK]
                phase = rows[:, 0, None] * u[None, :, 0]
                for l in range(1, self.d):
                    phase = phase + rows[:, l, None] * u[None, :, l]
                acc += (np.exp(1j * phase) * weights[None, m0:m0 + TERM_CHUNK]).real.sum(axis=1)
            out[r0:r0 + rows.shape[0]] = acc
        return out

    def truncation_bound(self, J):
        """
        Scale of the neglected terms m > M for band J.

        Γ_M^{-1/α} times the rms mark of the band terms times
        sqrt(n_band / (2/α - 1)), the remainder of Σ_{m>M} m^{-2/α}.
        """
        weights, _, m = self.band_terms(J)
        if weights.size == 0:
            return 0.0
        marks = np.abs(weights) * self.stream.gamma[m] ** (1.0 / self.alpha)
        rms = math.sqrt(float(np.mean(marks ** 2)))
        tail = self.stream.gamma[-1] ** (-1.0 / self.alpha)
        return tail * rms * math.sqrt(weights.size / (2.0 / self.alpha - 1.0))

    def describe(self):
        info = super().describe()
        info.update(stream_to_config(self.stream))
        return info


class GaussianCoefficients(CoefficientSource):
    """Independent N(0, 2(2π)^d) coefficients keyed on (seed, J, K)."""

    kind = 'gaussian'

    def __init__(self, seed, d):
        super().__init__(2.0, d, seed)
        self.scale = math.sqrt(2.0 * (2.0 * math.pi) ** d)

    def _key(self, J, prefix):
        entropy = [self.seed, GAUSSIAN_TAG] + [_zigzag(j) for j in J] + [_zigzag(k) for k in prefix]
        return np.random.SeedSequence(entropy).generate_state(2, np.uint64)

    def _row(self, J, prefix, k_lo, k_hi):
        bits = np.random.Philox(key=self._key(J, prefix))
        # counter 2^62 + k_1 + 1 holds the draw for k_1
        bits.advance(int(k_lo) + 2 ** 62)
        raw = bits.random_raw(4 * (int(k_hi) - int(k_lo) + 1))[::4]
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
        return self.scale * special.ndtri(u)

    def block(self, J, K):
        J = tuple(int(j) for j in J)
        K = np.atleast_2d(np.asarray(K, dtype=np.int64))
        out = np.zeros(K.shape[0])
        if K.shape[0] == 0:
            return out
        prefixes = K[:, 1:]
        groups = {}
        for i, prefix in enumerate(map(tuple, prefixes.tolist())):
            groups.setdefault(prefix, []).append(i)
        for prefix in sorted(groups):
            rows = np.array(groups[prefix])
            k1 = K[rows, 0]
            lo, hi = int(k1.min()), int(k1.max())
            out[rows] = self._row(J, prefix, lo, hi)[k1 - lo]
        return out


def coefficient_source(alpha, seed, d, epsilon_phi=0.5, M=None):
    """
    Pick the coefficient law: Gaussian at α = 2, the shared LePage stream below.

    Returns:
        CoefficientSource: The source
    """
    if alpha == 2.0:
        logger.info("Using independent Gaussian coefficients (alpha=2)")
        return GaussianCoefficients(seed, d)
    return LePageCoefficients(sample_stream(seed, alpha, epsilon_phi, M, d))


def epsilon_JK(stream, J, K):
    """Single coefficient ε_{α,J,K} from a stream."""
    source = stream if isinstance(stream, CoefficientSource) else LePageCoefficients(stream)
    return float(source.block(J, np.asarray([K]))[0])


def epsilon_block(stream, J, K):
    source = stream if isinstance(stream, CoefficientSource) else LePageCoefficients(stream)
    return source.block(J, K)


def gaussian_epsilon_JK(seed, J, K, d=None):
    d = len(J) if d is None else int(d)
    return float(GaussianCoefficients(seed, d).block(J, np.asarray([K]))[0])


def gaussian_epsilon_block(seed, J, K, d=None):
    d = len(J) if d is None else int(d)
    return GaussianCoefficients(seed, d).block(J, K)


def coefficient_sample(alpha, J, K, seeds, epsilon_phi=0.5, M=None, d=1):
    """
    Pool ε_{α,J,K} over the K rows of each of several independent seeds.

    Within one seed the values are identically distributed but share the
    stream, so distributional checks pool many seeds.
    """
    K = np.atleast_2d(np.asarray(K))
    values = [coefficient_source(alpha, seed, d, epsilon_phi, M).block(J, K) for seed in seeds]
    return np.concatenate(values)


def stable_scale(alpha, d=1):
    """σ^α = ‖ψ̂¹‖_{L^α}^{dα}, the common scale of every ε_{α,J,K}."""
    return atom_quasi_norm(alpha, d) ** alpha


def coefficient_envelope(J, K, alpha, delta):
    """
    Growth envelope of |ε_{α,J,K}|.

    Π(1+|j_l|)^{1/α+δ} for α < 1, times sqrt(log(3 + Σ|j_l| + |k_l|)) for
    α in [1, 2), and the square-root log alone for α = 2.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    log_term = np.sqrt(np.log(3.0 + np.sum(np.abs(J), axis=1) + np.sum(np.abs(K), axis=1)))
    if alpha == 2.0:
        return log_term
    poly = np.prod((1.0 + np.abs(J)) ** (1.0 / alpha + delta), axis=1)
    return poly if alpha < 1.0 else poly * log_term


def envelope_check(source, delta=0.1, j_max=3, k_max=16, enlarge=4, growth=1.25):
    """
    Empirical C(ω) = sup |ε_{α,J,K}| / envelope on a base and an enlarged sample.

    The enlarged sample multiplies the number of K per scale by `enlarge`.

    Returns:
        dict: base and enlarged constants, their ratio and a verdict
    """
    d = source.d
    scales = [tuple(J) for J in np.ndindex(*([2 * j_max + 1] * d))]
    scales = [tuple(j - j_max for j in J) for J in scales]

    def constant(radius):
        axis = np.arange(-radius, radius + 1)
        K = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        best = 0.0
        for J in scales:
            values = source.block(J, K)
            ratios = np.abs(values) / coefficient_envelope(np.repeat([J], len(K), axis=0), K, source.alpha, delta)
            best = max(best, float(np.max(ratios)))
        return best

    base = constant(k_max)
    enlarged = constant(int(round(k_max * enlarge ** (1.0 / d))))
    ratio = enlarged / base if base > 0.0 else 0.0
    report = {
        'alpha': source.alpha, 'delta': delta, 'base_constant': base, 'enlarged_constant': enlarged,
        'ratio': ratio, 'bounded': ratio <= growth,
    }
    logger.info("Envelope check alpha=%s delta=%s: C=%.4g -> %.4g", source.alpha, delta, base, enlarged)
    return report
