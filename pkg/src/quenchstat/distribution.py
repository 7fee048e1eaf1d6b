"""Full statistics of a time signal: random-time sampling and analytic references."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.special
import scipy.stats

from .quench import EVAL_CHUNK, ObservableSeries, evaluate

GL_NODES = 256
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


@dataclass(frozen=True)
class SamplingPlan:
    horizon: float = 16000.0
    samples: int = 40000
    rng_seed: int = 0
    bins: int = 101
    range: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.samples < 100:
            raise ValueError("at least 100 samples are required")
        if self.bins < 3:
            raise ValueError("at least 3 bins are required")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise ValueError("range must be (lo, hi) with lo < hi")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def times(self) -> np.ndarray:
        """Uniform random times on [0, horizon] from a counter-based (Philox) stream."""
        return np.random.Generator(np.random.Philox(self.rng_seed)).uniform(0.0, self.horizon, self.samples)


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    bin_edges: np.ndarray
    densities: np.ndarray
    sample_mean: float
    sample_variance: float
    sample_skewness: float
    sample_excess_kurtosis: float
    plan: SamplingPlan
    times: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    degenerate: bool = False

    @property
    def sample_std(self) -> float:
        return math.sqrt(self.sample_variance)

    @property
    def standard_error(self) -> float:
        """Standard error of the sample mean."""
        return self.sample_std / math.sqrt(self.samples.size)

    @property
    def variance_standard_error(self) -> float:
        """Standard error of the sample variance, ``sqrt((mu4 - sigma^4) / N)``."""
        dev = self.samples - self.samples.mean()
        mu4 = float(np.mean(dev**4))
        return math.sqrt(max(mu4 - float(np.mean(dev**2)) ** 2, 0.0) / self.samples.size)

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])


def _evaluate_parallel(series: ObservableSeries, times: np.ndarray, threads: int) -> np.ndarray:
    if threads <= 1 or times.size <= EVAL_CHUNK:
        return evaluate(series, times)
    out = np.empty_like(times)
    starts = range(0, times.size, EVAL_CHUNK)

    def work(start):
        out[start : start + EVAL_CHUNK] = evaluate(series, times[start : start + EVAL_CHUNK])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(work, starts))
    return out


def sample_signal(series: ObservableSeries, plan: SamplingPlan, threads: int = 1) -> EmpiricalDistribution:
    """Histogram of the series sampled at ``plan.samples`` random times.

    Output is bitwise independent of ``threads``: chunks are fixed-size and
    each chunk is evaluated identically.
    """
    times = plan.times()
    values = _evaluate_parallel(series, times, threads)
    lo, hi = float(values.min()), float(values.max())
    degenerate = False
    if plan.range is not None:
        edges = np.linspace(plan.range[0], plan.range[1], plan.bins + 1)
    elif hi > lo:
        pad = 0.01 * (hi - lo)
        edges = np.linspace(lo - pad, hi + pad, plan.bins + 1)
    else:
        degenerate = True
        half = max(abs(lo), 1.0) * 1e-9
        edges = np.array([lo - half, lo + half])
    counts, edges = np.histogram(values, bins=edges)
    densities = counts / (values.size * np.diff(edges))
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1))
    if degenerate or var == 0.0:
        skew = kurt = 0.0
    else:
        skew = float(scipy.stats.skew(values))
        kurt = float(scipy.stats.kurtosis(values))
    return EmpiricalDistribution(edges, densities, mean, var, skew, kurt, plan, times, values, degenerate)


# --- analytic references -----------------------------------------------------


def arcsine_density(u, a: float):
    """Density of ``a cos(phi)`` with uniform phase."""
    u = np.asarray(u, dtype=float)
    a = abs(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(u) < a, 1.0 / (np.pi * np.sqrt(a * a - u * u)), 0.0)
    return np.where(np.abs(u) == a, np.inf, out)


def arcsine_cdf(u, a: float):
    u = np.asarray(u, dtype=float)
    a = abs(a)
    return 0.5 + np.arcsin(np.clip(u / a, -1.0, 1.0)) / np.pi


@dataclass(frozen=True)
class TwoModeModel:
    """``F(t) = mean + A cos(omega_A t) + B cos(omega_B t)`` with incommensurate frequencies."""

    mean: float
    A: float
    B: float
    omega_A: float
    omega_B: float

    @property
    def support(self) -> tuple[float, float]:
        half = abs(self.A) + abs(self.B)
        return self.mean - half, self.mean + half

    @property
    def singular_points(self) -> np.ndarray:
        """Support edges (jumps) and the two logarithmic peaks, ascending."""
        a, b = abs(self.A), abs(self.B)
        pts = self.mean + np.array([-(a + b), -abs(a - b), abs(a - b), a + b])
        return np.unique(pts)

    @property
    def peaks(self) -> tuple[float, float]:
        d = abs(abs(self.A) - abs(self.B))
        return self.mean - d, self.mean + d

    @property
    def variance(self) -> float:
        return 0.5 * (self.A**2 + self.B**2)

    def pdf(self, f):
        return two_mode_density(self, f)

    def cdf(self, f):
        return two_mode_cdf(self, f)


def _sine_nodes(lo, hi):
    """Gauss-Legendre nodes for [lo, hi] after ``x = mid + half*sin(psi)``.

    Returns (nodes, weights) with the ``cos(psi)`` Jacobian folded into the
    weights, shapes ``(..., GL_NODES)``; clusters nodes at both ends.
    """
    psi = 0.5 * np.pi * _GL_X
    mid = 0.5 * (hi + lo)[..., None]
    half = 0.5 * (hi - lo)[..., None]
    nodes = mid + half * np.sin(psi)
    weights = half * np.cos(psi) * (0.5 * np.pi * _GL_W)
    return nodes, weights


def _theta_window(model: TwoModeModel, u):
    """Admissible range of the larger mode's phase angle for offset ``u``."""
    a, b = sorted((abs(model.A), abs(model.B)), reverse=True)
    s_lo = np.clip((u - b) / a, -1.0, 1.0)
    s_hi = np.clip((u + b) / a, -1.0, 1.0)
    return a, b, np.arcsin(s_lo), np.arcsin(s_hi)


def _smaller_phase_integral(a, b, u):
    """``(1/pi^2) * integral dphi / sqrt(a^2 - (u - b sin phi)^2)`` over the admissible window.

    The phase of the smaller mode ``b`` is integrated with sine-clustered
    nodes at both ends. The two factors of ``a^2 - (u - b sin phi)^2`` are
    formed as (clearance) + (difference of sines) so neither suffers
    cancellation next to a clipped endpoint.
    """
    phi_lo = np.arcsin(np.clip((u - a) / b, -1.0, 1.0))
    phi_hi = np.arcsin(np.clip((u + a) / b, -1.0, 1.0))
    psi = 0.5 * np.pi * _GL_X
    half = 0.5 * (phi_hi - phi_lo)[:, None]
    # distances to the ends without forming 1 -/+ sin(psi) directly
    from_lo = 2.0 * half * np.sin(0.25 * np.pi + 0.5 * psi) ** 2
    to_hi = 2.0 * half * np.sin(0.25 * np.pi - 0.5 * psi) ** 2
    phi = phi_lo[:, None] + from_lo
    lo, hi = phi_lo[:, None], phi_hi[:, None]
    f1 = np.maximum(a - b - u, 0.0)[:, None] + 2.0 * b * np.cos(0.5 * (phi + lo)) * np.sin(0.5 * from_lo)
    f2 = np.maximum(a - b + u, 0.0)[:, None] + 2.0 * b * np.cos(0.5 * (phi + hi)) * np.sin(0.5 * to_hi)
    w = half * np.cos(psi) * (0.5 * np.pi * _GL_W)
    with np.errstate(invalid="ignore", divide="ignore"):
        integrand = np.where((f1 > 0) & (f2 > 0), 1.0 / np.sqrt(f1 * f2), 0.0)
    return np.sum(w * integrand, axis=1) / np.pi**2


def two_mode_density(model: TwoModeModel, f):
    """Stationary density of the two-mode signal (convolution of two arcsine laws).

    ``+inf`` is returned exactly at the points in ``model.singular_points``.
    """
    f_arr = np.asarray(f, dtype=float)
    if np.any(np.isnan(f_arr)):
        raise ValueError("density evaluated at NaN")
    if model.A == 0 and model.B == 0:
        raise ValueError("two-mode model needs |A| > 0")
    scalar = f_arr.ndim == 0
    u = np.atleast_1d(f_arr - model.mean).ravel()
    if model.B == 0 or model.A == 0:
        out = arcsine_density(u, model.A or model.B)
    else:
        a, b = sorted((abs(model.A), abs(model.B)), reverse=True)
        inside = np.abs(u) < a + b
        out = np.zeros_like(u)
        if np.any(inside):
            out[inside] = _smaller_phase_integral(a, b, u[inside])
        singular = np.isin(u + model.mean, model.singular_points)
        out[singular] = np.inf
    out = out.reshape(f_arr.shape) if not scalar else out
    return float(out[0]) if scalar else out


def two_mode_cdf(model: TwoModeModel, f):
    """CDF of the two-mode signal: average of the smaller mode's arcsine CDF over the larger's phase."""
    f_arr = np.asarray(f, dtype=float)
    scalar = f_arr.ndim == 0
    u = np.atleast_1d(f_arr - model.mean).ravel()
    if model.B == 0 or model.A == 0:
        out = arcsine_cdf(u, model.A or model.B)
    else:
        a, b, th_lo, th_hi = _theta_window(model, u)
        th, w = _sine_nodes(th_lo, th_hi)
        inner = 0.5 + np.arcsin(np.clip((u[:, None] - a * np.sin(th)) / b, -1.0, 1.0)) / np.pi
        out = (th_lo + 0.5 * np.pi) / np.pi + np.sum(w * inner, axis=1) / np.pi
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out.reshape(f_arr.shape)


def two_mode_fit(series: ObservableSeries) -> TwoModeModel:
    """Keep the two cosine terms largest in magnitude; mean is the full series mean."""
    order = np.argsort(-np.abs(series.coefficients), kind="stable")
    if order.size == 0:
        raise ValueError("series has no oscillating terms")
    iA = order[0]
    A, wA = float(series.coefficients[iA]), float(series.frequencies[iA])
    if order.size == 1:
        return TwoModeModel(series.mean, A, 0.0, wA, wA)
    iB = order[1]
    return TwoModeModel(series.mean, A, float(series.coefficients[iB]), wA, float(series.frequencies[iB]))


def gaussian_reference(mean: float, std: float, f):
    if not std > 0:
        raise ValueError("std must be positive")
    return scipy.stats.norm.pdf(f, loc=mean, scale=std)


@dataclass(frozen=True)
class GaussianReference:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    singular_points = ()

    def pdf(self, f):
        return gaussian_reference(self.mean, self.std, f)

    def cdf(self, f):
        return scipy.stats.norm.cdf(f, loc=self.mean, scale=self.std)


class DensityReference:
    """Wrap a bare density; its CDF is tabulated by adaptive quadrature between singular points."""

    def __init__(self, pdf, support, singular_points=(), grid=2001):
        self.pdf = pdf
        self.singular_points = np.asarray(singular_points, dtype=float)
        lo, hi = support
        knots = np.unique(np.concatenate([np.linspace(lo, hi, grid), self.singular_points]))
        knots = knots[(knots >= lo) & (knots <= hi)]
        pieces = [
            scipy.integrate.quad(lambda x: float(pdf(x)), x0, x1, limit=200)[0]
            for x0, x1 in zip(knots[:-1], knots[1:])
        ]
        self._knots = knots
        self._cum = np.concatenate([[0.0], np.cumsum(pieces)])
        if abs(self._cum[-1] - 1.0) > 1e-3:
            raise ValueError(f"analytic density integrates to {self._cum[-1]:.6f} over its support")

    def cdf(self, f):
        return np.interp(f, self._knots, self._cum, left=0.0, right=1.0)


@dataclass(frozen=True)
class ComparisonReport:
    ks_distance: float
    sup_norm_binned: float


def compare(emp: EmpiricalDistribution, analytic) -> ComparisonReport:
    """KS distance on raw samples and sup-norm between binned densities.

    ``analytic`` needs ``cdf`` (and optionally ``singular_points``); bins
    containing a singular point are excluded from the sup-norm.
    """
    ks = float(scipy.stats.kstest(emp.samples, analytic.cdf).statistic)
    edges = emp.bin_edges
    cdf_edges = np.asarray(analytic.cdf(edges), dtype=float)
    binned = np.diff(cdf_edges) / np.diff(edges)
    keep = np.ones(binned.size, dtype=bool)
    for point in np.atleast_1d(getattr(analytic, "singular_points", ())):
        keep &= ~((edges[:-1] <= point) & (point <= edges[1:]))
    sup = float(np.max(np.abs(binned[keep] - emp.densities[keep]))) if np.any(keep) else 0.0
    return ComparisonReport(ks, sup)


def binned_reference(analytic, edges: np.ndarray) -> np.ndarray:
    """Bin-averaged analytic density on the given edges."""
    return np.diff(np.asarray(analytic.cdf(edges), dtype=float)) / np.diff(edges)


def interior_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima, excluding the first and last bins."""
    v = np.asarray(values)
    inner = np.arange(1, v.size - 1)
    return inner[(v[inner] > v[inner - 1]) & (v[inner] > v[inner + 1])]
