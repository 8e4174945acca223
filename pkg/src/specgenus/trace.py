"""Admissible test functions and the localized spectral distribution.

The Fourier convention is phi(s) = int phi_hat(t) exp(i s t) dt.  With
phi_hat(t) = b((t - t0)/delta) + b((t + t0)/delta) this gives

    phi(s) = 2 delta cos(s t0) beta(s delta),   beta(w) = int_{-1}^{1} b(u) cos(w u) du

so phi is real, even and bounded by phi(0).
"""

from __future__ import annotations

import logging
import math
from collections import namedtuple
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, special

from .common import write_csv
from .errors import IncompleteWindowError, TestFunctionError, WindowError

logger = logging.getLogger(__name__)

BUMP_INTEGRAL = 0.4439938161680794
QUADRATURE_NODES = 256
QUADRATURE_BUCKET = 50.0
OSCILLATORY_LIMIT = 400.0
TAIL_TOLERANCE = 1e-10
DEFAULT_SUPPORT = 0.5

TraceSample = namedtuple(
    "TraceSample", ["E", "h", "value", "analytic", "tail_bound", "window", "test_function"]
)


def bump(u):
    """exp(-1/(1-u^2)) on (-1, 1), zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    values = np.zeros_like(u)
    values[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return values


@lru_cache(maxsize=None)
def _legendre_rule(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights * bump(nodes)


def _beta_oscillatory(omega):
    value, _ = integrate.quad(
        lambda u: float(bump(u)), 0.0, 1.0, weight="cos", wvar=omega, epsabs=1e-15, limit=200
    )
    return 2.0 * value


def bump_cosine(omega):
    """beta(omega), the cosine transform of the bump over [-1, 1]."""
    omega = np.abs(np.asarray(omega, dtype=float))
    flat = omega.ravel()
    result = np.empty_like(flat)
    remaining = np.ones(flat.shape, dtype=bool)
    bucket = QUADRATURE_BUCKET
    nodes_count = QUADRATURE_NODES
    while bucket <= OSCILLATORY_LIMIT:
        selected = remaining & (flat <= bucket)
        if np.any(selected):
            nodes, weights = _legendre_rule(nodes_count)
            result[selected] = np.cos(np.outer(flat[selected], nodes)) @ weights
            remaining &= ~selected
        bucket *= 2.0
        nodes_count *= 2
    for index in np.flatnonzero(remaining):
        result[index] = _beta_oscillatory(flat[index])
    return result.reshape(omega.shape)


class TestFunction:
    """Two-bump phi_hat centred at +-t0 with half-width delta, supported in [-T, T]."""

    __test__ = False

    def __init__(self, t0, delta, T):
        self.t0 = float(t0)
        self.delta = float(delta)
        self.T = float(T)
        if not all(math.isfinite(value) for value in (self.t0, self.delta, self.T)):
            raise TestFunctionError("test-function parameters must be finite", t0=t0, delta=delta, T=T)
        if not 0.0 < self.delta < self.t0:
            raise TestFunctionError(f"need 0 < delta < t0, got delta={delta}, t0={t0}", t0=t0, delta=delta)
        if self.t0 + self.delta > self.T * (1.0 + 1e-12):
            raise TestFunctionError(f"support t0 + delta = {self.t0 + self.delta} exceeds T = {T}", t0=t0, T=T)

    def __repr__(self):
        return f"TestFunction(t0={self.t0!r}, delta={self.delta!r}, T={self.T!r})"

    @property
    def inner_edge(self):
        return self.t0 - self.delta

    @cached_property
    def norm(self):
        """int phi_hat = phi(0)."""
        value, _ = integrate.quad(lambda u: float(bump(u)), -1.0, 1.0, epsabs=0.0, epsrel=1e-10)
        return 2.0 * self.delta * value

    def phi_hat(self, t):
        t = np.asarray(t, dtype=float)
        return bump((t - self.t0) / self.delta) + bump((t + self.t0) / self.delta)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return 2.0 * self.delta * np.cos(s * self.t0) * bump_cosine(s * self.delta)

    def analytic(self, s):
        """Transform of the positive-time bump alone; phi = 2 Re(analytic)."""
        s = np.asarray(s, dtype=float)
        return self.delta * np.exp(1j * s * self.t0) * bump_cosine(s * self.delta)

    @cached_property
    def tail_reach(self):
        """Smallest |s| beyond which |phi(s)| stays below TAIL_TOLERANCE * phi(0)."""
        omegas = np.linspace(0.0, OSCILLATORY_LIMIT, 4001)
        large = np.flatnonzero(np.abs(bump_cosine(omegas)) >= TAIL_TOLERANCE * BUMP_INTEGRAL)
        return float(omegas[min(large[-1] + 1, len(omegas) - 1)]) / self.delta


class LinearCombination:
    """sum_k c_k phi_k for test functions phi_k; Upsilon is linear in it."""

    __test__ = False

    def __init__(self, terms):
        self.terms = [(float(coefficient), function) for coefficient, function in terms]
        if not self.terms:
            raise TestFunctionError("a linear combination needs at least one term")
        self.t0 = float("nan")
        self.delta = float("nan")

    @property
    def T(self):
        return max(function.T for _, function in self.terms)

    @property
    def inner_edge(self):
        return min(function.inner_edge for _, function in self.terms)

    @property
    def norm(self):
        return sum(coefficient * function.norm for coefficient, function in self.terms)

    @property
    def tail_reach(self):
        return max(function.tail_reach for _, function in self.terms)

    def phi_hat(self, t):
        return sum(coefficient * function.phi_hat(t) for coefficient, function in self.terms)

    def __call__(self, s):
        return sum(coefficient * function(s) for coefficient, function in self.terms)

    def analytic(self, s):
        return sum(coefficient * function.analytic(s) for coefficient, function in self.terms)


def make_test_function(t0, delta, T):
    return TestFunction(t0, delta, T)


def eval_phi(tf, s):
    return tf(s)


def default_support(alpha_max=None):
    """Support bound T below the first period 2 pi / alpha_max of the linearized flow."""
    if alpha_max is None or not alpha_max > 0.0:
        return DEFAULT_SUPPORT
    return 1.6 * math.pi / alpha_max


def detection_test_function(T, t0_fraction=0.6, delta_fraction=0.35):
    return TestFunction(t0_fraction * T, delta_fraction * T, T)


class EnergyCutoff:
    """Smooth energy localization Theta((lambda - E)/h) applied inside the trace.

    ``erfc`` uses Theta(s) = erfc((|s| - 4w)/w)/2 with w = sharpness/(t0 - delta),
    which is within about 1e-5 of one for |s| <= w and below 1e-8 past 8w.  Its
    Fourier transform carries a factor exp(-(w t)^2/4), so at t = t0 - delta
    the leak into the flat region of phi_hat is about exp(-sharpness^2/4).
    ``sharp`` is the plain sum over the window.
    """

    KINDS = ("erfc", "sharp")

    def __init__(self, kind="erfc", sharpness=8.0):
        if kind not in self.KINDS:
            raise TestFunctionError(f"unknown cutoff kind {kind!r}")
        if not sharpness > 0.0:
            raise TestFunctionError(f"cutoff sharpness must be positive, got {sharpness}")
        self.kind = kind
        self.sharpness = float(sharpness)

    def __repr__(self):
        return f"EnergyCutoff(kind={self.kind!r}, sharpness={self.sharpness!r})"

    def width(self, tf):
        return self.sharpness / tf.inner_edge

    def reach(self, tf):
        if self.kind == "sharp":
            return tf.tail_reach
        return 8.0 * self.width(tf)

    def weights(self, s, tf):
        s = np.asarray(s, dtype=float)
        if self.kind == "sharp":
            return np.ones_like(s)
        w = self.width(tf)
        return 0.5 * special.erfc((np.abs(s) - 4.0 * w) / w)

    def tail_weight(self, tf):
        """Integral of the cutoff weight over s beyond the reach, on one side."""
        if self.kind == "sharp":
            return TAIL_TOLERANCE * tf.tail_reach
        # int_4^inf erfc(x) dx = exp(-16)/sqrt(pi) - 4 erfc(4)
        integrated_erfc = math.exp(-16.0) / math.sqrt(math.pi) - 4.0 * float(special.erfc(4.0))
        return 0.5 * self.width(tf) * integrated_erfc


def upsilon(window, E, tf, cutoff=None):
    """Sum of phi((lambda_j - E)/h) over a complete eigenvalue window.

    The sample also carries the one-sided sum over the positive-time bump,
    whose modulus keeps the size of the leading term whatever its phase;
    ``value`` is twice its real part.
    """
    if not window.complete:
        raise IncompleteWindowError(
            f"window {window.interval} at h={window.h} is not certified complete", h=window.h
        )
    cutoff = cutoff or EnergyCutoff("sharp")
    lower, upper = window.interval
    margin = cutoff.reach(tf) * window.h
    if not lower + margin <= E <= upper - margin:
        raise WindowError(
            f"E={E} is closer than {margin:.3g} to the edge of window [{lower}, {upper})",
            E=E,
            h=window.h,
        )
    eigenvalues = np.asarray(window.eigenvalues, dtype=float)
    s = (eigenvalues - E) / window.h
    analytic = complex(np.sum(cutoff.weights(s, tf) * tf.analytic(s)))
    # eigenvalues per unit s outside the window, by the Weyl law when the window carries it
    density = window.density
    if density is None:
        density = len(eigenvalues) / max(upper - lower, window.h)
    tail_bound = 2.0 * density * window.h * cutoff.tail_weight(tf) * abs(tf.norm)
    return TraceSample(float(E), window.h, 2.0 * analytic.real, analytic, tail_bound, window, tf)


def trace_rows(samples):
    for sample in samples:
        tf = sample.test_function
        yield (sample.E, sample.h, tf.t0, tf.delta, sample.value, abs(sample.analytic))


def write_trace_csv(samples, path):
    write_csv(path, ("E", "h", "t0", "delta", "value", "modulus"), trace_rows(samples))


def phi_samples(tf, s_grid):
    s_grid = np.asarray(s_grid, dtype=float)
    return list(zip(s_grid.tolist(), np.asarray(tf(s_grid)).tolist()))


def write_phi_csv(tf, s_grid, path):
    write_csv(path, ("s", "phi"), phi_samples(tf, s_grid))
