"""Exactly known spectra and density samples used to check the analysis chain.

The ladders expose the same ``window(h, interval)`` and ``potential_range``
as ``spectrum.OperatorSpectrum``, so sweeps can run on them unchanged.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import integrate

from .classify import POINT_MODELS, circle_density, point_density
from .errors import OperatorError
from .spectrum import SpectralWindow

logger = logging.getLogger(__name__)


def _check_interval(h, interval):
    lower, upper = (float(value) for value in interval)
    if not h > 0.0:
        raise OperatorError(f"h must be positive, got {h}")
    if not lower < upper:
        raise OperatorError(f"empty spectral window [{lower}, {upper})")
    return lower, upper


class HarmonicLadder:
    """lambda = E_c + h (alpha1 (n1 + 1/2) + alpha2 (n2 + 1/2)), the spectrum of a quadratic minimum."""

    def __init__(self, E_c, alphas, span=1.0):
        self.E_c = float(E_c)
        self.alphas = tuple(sorted(float(alpha) for alpha in alphas))
        if len(self.alphas) != 2 or self.alphas[0] <= 0.0:
            raise OperatorError(f"a harmonic ladder needs two positive frequencies, got {alphas}")
        self.span = float(span)

    def __repr__(self):
        return f"HarmonicLadder(E_c={self.E_c!r}, alphas={self.alphas!r})"

    @property
    def potential_range(self):
        return self.E_c, self.E_c + self.span

    def eigenvalues(self, h, interval):
        lower, upper = _check_interval(h, interval)
        first, second = self.alphas
        top = (upper - self.E_c) / h
        values = []
        n1 = 0
        while first * (n1 + 0.5) + 0.5 * second < top:
            n2 = np.arange(0, int(math.ceil((top - first * (n1 + 0.5)) / second)) + 1)
            values.append(self.E_c + h * (first * (n1 + 0.5) + second * (n2 + 0.5)))
            n1 += 1
        if not values:
            return np.empty(0)
        values = np.concatenate(values)
        return np.sort(values[(values >= lower) & (values < upper)])

    def window(self, h, interval):
        lower, upper = _check_interval(h, interval)
        return SpectralWindow(h, (lower, upper), self.eigenvalues(h, interval), True, 0.0)

    def exact_upsilon(self, tf):
        """h-independent value of Upsilon at E_c: -int phi_hat / (4 sin(a1 t/2) sin(a2 t/2))."""
        first, second = self.alphas

        def integrand(t):
            return float(tf.phi_hat(t)) / (4.0 * math.sin(first * t / 2.0) * math.sin(second * t / 2.0))

        value, _ = integrate.quad(integrand, tf.t0 - tf.delta, tf.t0 + tf.delta, epsabs=0.0, epsrel=1e-11, limit=200)
        return -2.0 * value


class CircleLadder:
    """lambda = E_c + h alpha (n + 1/2) + h^2 m^2 / rho^2, a circle of minima of radius rho."""

    def __init__(self, E_c, alpha, radius, span=1.0):
        self.E_c = float(E_c)
        self.alpha = float(alpha)
        self.radius = float(radius)
        if self.alpha <= 0.0 or self.radius <= 0.0:
            raise OperatorError("circle ladder frequency and radius must be positive")
        self.span = float(span)

    def __repr__(self):
        return f"CircleLadder(E_c={self.E_c!r}, alpha={self.alpha!r}, radius={self.radius!r})"

    @property
    def potential_range(self):
        return self.E_c, self.E_c + self.span

    def eigenvalues(self, h, interval):
        lower, upper = _check_interval(h, interval)
        top = (upper - self.E_c) / h
        values = []
        n = 0
        while self.alpha * (n + 0.5) < top:
            base = self.alpha * (n + 0.5)
            m_max = int(math.floor(self.radius * math.sqrt(max(top - base, 0.0) / h))) + 1
            m = np.arange(-m_max, m_max + 1)
            values.append(self.E_c + h * (base + h * m**2 / self.radius**2))
            n += 1
        if not values:
            return np.empty(0)
        values = np.concatenate(values)
        return np.sort(values[(values >= lower) & (values < upper)])

    def window(self, h, interval):
        lower, upper = _check_interval(h, interval)
        return SpectralWindow(h, (lower, upper), self.eigenvalues(h, interval), True, 0.0)

    def exact_leading(self, tf, h):
        """Leading term -rho sqrt(pi/(2h)) int_0^inf phi_hat / (sqrt(t) sin(alpha t/2)) dt."""

        def integrand(t):
            return float(tf.phi_hat(t)) / (math.sqrt(t) * math.sin(self.alpha * t / 2.0))

        value, _ = integrate.quad(integrand, tf.t0 - tf.delta, tf.t0 + tf.delta, epsabs=0.0, epsrel=1e-11, limit=200)
        return -self.radius * math.sqrt(math.pi / (2.0 * h)) * value


def _noisy(values, noise, rng):
    if noise <= 0.0:
        return values
    return values * np.exp(noise * rng.standard_normal(values.shape))


def point_density_samples(r, omegas, t0_grid, amplitude=1.0, noise=0.0, seed=None):
    """(t0, D) samples of a point model with lognormal multiplicative noise."""
    rng = np.random.default_rng(seed)
    t0_grid = np.asarray(t0_grid, dtype=float)
    values = _noisy(point_density(t0_grid, r, omegas, amplitude), noise, rng)
    return list(zip(t0_grid.tolist(), values.tolist()))


def circle_density_samples(kind, omega, t0_grid, amplitude=1.0, noise=0.0, seed=None):
    rng = np.random.default_rng(seed)
    t0_grid = np.asarray(t0_grid, dtype=float)
    values = _noisy(circle_density(t0_grid, kind, omega, amplitude), noise, rng)
    return list(zip(t0_grid.tolist(), values.tolist()))


def random_point_cases(count, seed, frequency_range=(0.5, 3.0), t0_range=(0.1, 2.0), points=20, noise=0.05):
    """Randomized (r, omegas, samples) cases drawn uniformly over the three point models."""
    rng = np.random.default_rng(seed)
    t0_grid = np.linspace(*t0_range, points)
    cases = []
    for _ in range(count):
        r = int(rng.integers(0, len(POINT_MODELS)))
        omegas = tuple(rng.uniform(*frequency_range, 2).tolist())
        amplitude = float(np.exp(rng.uniform(-2.0, 2.0)))
        values = _noisy(point_density(t0_grid, r, omegas, amplitude), noise, rng)
        cases.append((r, omegas, list(zip(t0_grid.tolist(), values.tolist()))))
    return cases
