"""Numerical Mellin transforms and the product-of-random-variables engine.

The adversary models an observation as Y = beta*X + alpha and predicts
X = (Y - alpha) * (1/beta).  With U = Y - alpha and V = 1/beta, X = U*V,
and the transform of the product is the pointwise product of transforms.
Numerically everything runs on an exponential grid: cubic-spline
resampling, multiplication by exp(c*t), then an FFT gives the transform
along the vertical line Re(s) = c; a quadratic-cost Riemann sum serves as
the slow oracle.  The predicted density is then restricted to NSQF
integers (the smart search space) and the true value's rank measures the
per-layer guessing effort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import DomainError, EvidenceError, ResolutionError, SupportError
from .model import nsqf_in_range

DEFAULT_C = 1.5
DEFAULT_N = 1 << 14


@dataclass(frozen=True)
class GridPdf:
    """Density sampled on a strictly increasing positive grid."""

    x: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        x, f = np.asarray(self.x, float), np.asarray(self.f, float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise DomainError("grid and density must be 1-D arrays of equal length >= 2")
        if x[0] <= 0:
            raise DomainError("support must be strictly positive")
        if np.any(np.diff(x) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise DomainError("density must be finite and nonnegative")

    def weights(self) -> np.ndarray:
        """Trapezoid-rule integration weights for this grid."""
        w = np.empty_like(self.x)
        w[1:-1] = (self.x[2:] - self.x[:-2]) / 2
        w[0] = (self.x[1] - self.x[0]) / 2
        w[-1] = (self.x[-1] - self.x[-2]) / 2
        return w

    def mass(self) -> float:
        return float(np.sum(self.f * self.weights()))

    def normalized(self) -> "GridPdf":
        m = self.mass()
        if m <= 0:
            raise DomainError("cannot normalize zero mass")
        return GridPdf(self.x, self.f / m)

    def cdf_values(self) -> np.ndarray:
        c = np.concatenate(([0.0], np.cumsum(0.5 * (self.f[1:] + self.f[:-1]) * np.diff(self.x))))
        return c

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cdf = self.cdf_values()
        total = cdf[-1]
        if total <= 0:
            raise DomainError("cannot sample zero mass")
        u = rng.uniform(0, total, size=n)
        return np.interp(u, cdf, self.x)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int = 512) -> "GridPdf":
        x = np.linspace(lo, hi, n)
        return cls(x, np.full(n, 1.0 / (hi - lo)))

    @classmethod
    def point_mass(cls, value: float, rel_width: float = 1e-3, n: int = 33) -> "GridPdf":
        """Narrow triangular spike standing in for a point mass."""
        half = max(value * rel_width, 1e-12)
        x = np.linspace(value - half, value + half, n)
        f = np.maximum(0.0, 1.0 - np.abs(x - value) / half) / half
        return cls(x, f).normalized()


@dataclass(frozen=True)
class MellinFn:
    """Transform values along the line Re(s) = c on an FFT frequency grid."""

    s: np.ndarray
    values: np.ndarray
    c: float
    t0: float
    dt: float

    @property
    def n(self) -> int:
        return self.s.size

    def invert(self) -> GridPdf:
        """Inverse along the same exponential-grid Fourier pipeline."""
        omega = self.s.imag
        v = self.values * np.exp(-1j * omega * self.t0) / self.dt
        g = np.fft.fft(v / self.n)
        t = self.t0 + self.dt * np.arange(self.n)
        f = np.real(g) * np.exp(-self.c * t)
        return GridPdf(np.exp(t), np.maximum(f, 0.0))


def mellin_riemann(pdf: GridPdf, s_points) -> MellinFn:
    """Direct Riemann-sum transform; quadratic cost, used as the oracle."""
    s = np.atleast_1d(np.asarray(s_points, dtype=complex))
    if np.any(s.real <= 0):
        raise DomainError("transform strip is Re(s) > 0 for these densities")
    w = pdf.f * pdf.weights()
    lx = np.log(pdf.x)
    vals = np.exp(np.outer(s - 1, lx)) @ w
    return MellinFn(s=s, values=vals, c=float(s.real[0]), t0=float(lx[0]), dt=0.0)


def _resample_log(pdf: GridPdf, t: np.ndarray) -> np.ndarray:
    """Cubic-spline interpolation of the density onto x = exp(t)."""
    spline = CubicSpline(pdf.x, pdf.f, extrapolate=False)
    vals = spline(np.exp(t))
    return np.maximum(np.nan_to_num(vals, nan=0.0), 0.0)


def _fft_on_grid(pdf: GridPdf, c: float, t0: float, dt: float, n: int) -> MellinFn:
    t = t0 + dt * np.arange(n)
    g = _resample_log(pdf, t) * np.exp(c * t)
    omega = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    vals = dt * np.exp(1j * omega * t0) * n * np.fft.ifft(g)
    return MellinFn(s=c + 1j * omega, values=vals, c=c, t0=t0, dt=dt)


def mellin_fft(pdf: GridPdf, c: float = DEFAULT_C, n: int = DEFAULT_N, pad: float = 0.25) -> MellinFn:
    """Spline resample to an exponential grid, weight by exp(c*t), FFT."""
    if pdf.x.size < 8:
        raise ResolutionError("need at least 8 grid points")
    t_lo, t_hi = math.log(pdf.x[0]), math.log(pdf.x[-1])
    span = t_hi - t_lo
    t0 = t_lo - pad * span
    dt = span * (1 + 2 * pad) / (n - 1)
    return _fft_on_grid(pdf, c, t0, dt, n)


def reciprocal_pdf(beta: GridPdf) -> GridPdf:
    """Density of V = 1/beta by change of variables.

    The input is first resampled onto a geometric grid so the reflected
    grid stays well conditioned and the mass drift stays below 1e-6.
    """
    if beta.x[0] < 1e-12:
        raise DomainError("support touching zero has no reciprocal density")
    x = np.geomspace(beta.x[0], beta.x[-1], max(4 * beta.x.size, 4096))
    f = np.interp(x, beta.x, beta.f)
    v = 1.0 / x[::-1]
    f_v = f[::-1] * (x[::-1] ** 2)  # f_beta(1/v) / v^2 with x = 1/v
    return GridPdf(v, f_v)


def product_pdf(
    u: GridPdf,
    v: GridPdf,
    method: str = "mellin",
    rng: np.random.Generator | None = None,
    mc_draws: int = 10**6,
    c: float = DEFAULT_C,
    n: int = DEFAULT_N,
) -> GridPdf:
    """Density of X = U*V for independent positive U, V."""
    if method == "mellin":
        span_u = math.log(u.x[-1] / u.x[0])
        span_v = math.log(v.x[-1] / v.x[0])
        dt = (span_u + span_v) * 1.10 / (n // 2)
        mu = _fft_on_grid(u, c, math.log(u.x[0]) - 2 * dt, dt, n)
        mv = _fft_on_grid(v, c, math.log(v.x[0]) - 2 * dt, dt, n)
        prod = MellinFn(
            s=mu.s,
            values=mu.values * mv.values,
            c=c,
            t0=mu.t0 + mv.t0,
            dt=dt,
        )
        out = prod.invert()
        return out.normalized()
    if method == "mc":
        rng = rng if rng is not None else np.random.default_rng(0)
        xs = u.sample(rng, mc_draws) * v.sample(rng, mc_draws)
        lo, hi = xs.min(), xs.max()
        edges = np.geomspace(lo, hi * (1 + 1e-12), 513)
        counts, edges = np.histogram(xs, bins=edges)
        centers = np.sqrt(edges[:-1] * edges[1:])
        dens = counts / (mc_draws * np.diff(edges))
        return GridPdf(centers, dens).normalized()
    raise DomainError(f"unknown product method {method!r}")


def tv_distance(p: GridPdf, q: GridPdf, n_bins: int = 256) -> float:
    """Total-variation distance via per-bin masses on a shared log grid."""
    lo = min(p.x[0], q.x[0])
    hi = max(p.x[-1], q.x[-1])
    edges = np.geomspace(lo, hi, n_bins + 1)

    def bin_mass(pdf: GridPdf) -> np.ndarray:
        cdf = pdf.cdf_values()
        total = cdf[-1]
        vals = np.interp(edges, pdf.x, cdf / total, left=0.0, right=1.0)
        return np.diff(vals)

    return 0.5 * float(np.abs(bin_mass(p) - bin_mass(q)).sum())


def shift_pdf(y_obs: float, alpha_prior: GridPdf) -> GridPdf:
    """Density of U = y - alpha."""
    if y_obs <= alpha_prior.x[-1]:
        raise EvidenceError(
            f"observation {y_obs} inside the additive prior support (max {alpha_prior.x[-1]})"
        )
    u = y_obs - alpha_prior.x[::-1]
    return GridPdf(u, alpha_prior.f[::-1])


def predict_X(
    y_obs: float,
    alpha_prior: GridPdf,
    beta_prior: GridPdf,
    c: float = DEFAULT_C,
    n: int = DEFAULT_N,
    method: str = "mellin",
    rng: np.random.Generator | None = None,
) -> GridPdf:
    """Adversary's predicted density of X given one observed Y."""
    u = shift_pdf(y_obs, alpha_prior)
    v = reciprocal_pdf(beta_prior)
    return product_pdf(u, v, method=method, rng=rng, c=c, n=n)


# ---------------------------------------------------------------------------
# smart search space and rank


@dataclass(frozen=True)
class SmartPmf:
    """Probability mass restricted to the NSQF integers of a range."""

    values: np.ndarray  # ascending NSQF integers
    pmf: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(v): float(p) for v, p in zip(self.values, self.pmf)}


def smart_search_space(h: GridPdf, lo: int, hi: int) -> SmartPmf:
    """Interpolate h onto the integers of [lo, hi] and fold every
    non-NSQF integer's mass into its nearest NSQF integer (ties go low)."""
    nsqf_vals = nsqf_in_range(lo, hi)
    if nsqf_vals.size == 0:
        raise DomainError(f"no NSQF integers in [{lo}, {hi}]")
    ints = np.arange(lo, hi + 1, dtype=np.int64)
    interp = PchipInterpolator(h.x, h.f, extrapolate=False)
    masses = np.maximum(np.nan_to_num(interp(ints.astype(float)), nan=0.0), 0.0)

    idx = np.searchsorted(nsqf_vals, ints)
    left_idx = np.clip(idx - 1, 0, nsqf_vals.size - 1)
    right_idx = np.clip(idx, 0, nsqf_vals.size - 1)
    dist_left = np.where(idx > 0, ints - nsqf_vals[left_idx], np.iinfo(np.int64).max)
    dist_right = np.where(idx < nsqf_vals.size, nsqf_vals[right_idx] - ints, np.iinfo(np.int64).max)
    target = np.where(dist_left <= dist_right, left_idx, right_idx)

    pmf = np.zeros(nsqf_vals.size)
    np.add.at(pmf, target, masses)
    total = pmf.sum()
    if total <= 0:
        raise DomainError("predicted density carries no mass on the candidate range")
    return SmartPmf(values=nsqf_vals, pmf=pmf / total)


def rank(h_smart: SmartPmf, x_r: int) -> int:
    """Position of the true value in the descending-probability guess order.

    Ties resolve toward smaller values, so the rank is deterministic.
    """
    hits = np.flatnonzero(h_smart.values == x_r)
    if hits.size == 0:
        raise SupportError(f"{x_r} is not in the candidate support")
    p_r = h_smart.pmf[hits[0]]
    higher = int(np.count_nonzero(h_smart.pmf > p_r))
    tied_smaller = int(np.count_nonzero((h_smart.pmf == p_r) & (h_smart.values < x_r)))
    return 1 + higher + tied_smaller


@dataclass
class RankResult:
    layer: int
    x_r: int
    rank: int
    n_candidates: int

    @property
    def n_choices(self) -> int:
        """Choices an optimal guesser burns through: the rank itself."""
        return self.rank

    def to_json(self) -> dict:
        return {
            "layer": self.layer,
            "x_r": self.x_r,
            "rank": self.rank,
            "candidates": self.n_candidates,
            "log10_choices": math.log10(self.rank),
        }


def search_space_size(per_layer: list[RankResult]) -> float:
    """log10 of the product of per-layer choice counts."""
    return float(sum(math.log10(r.n_choices) for r in per_layer))
