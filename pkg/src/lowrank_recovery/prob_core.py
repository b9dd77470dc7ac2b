"""Scalar and vector randomness: Gaussian sampling, chi-square tails,
2-stability, approximate Caratheodory, Monte Carlo integration and
Johnson-Lindenstrauss embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from . import csvio
from .rng import RngStream

__all__ = [
    "RngStream",
    "PointSet",
    "TailReport",
    "binomial_halfwidth",
    "gaussian_vector",
    "chi2_mgf",
    "chi2_tail_bound",
    "two_stability_report",
    "chi2_tail_experiment",
    "approx_caratheodory",
    "radius",
    "monte_carlo_integrate",
    "jl_min_dim",
    "jl_embed",
    "gaussian_matrix",
    "scalar_bernstein_bound",
    "rademacher_sum_tail",
    "trial_chunks",
]


@dataclass(frozen=True)
class PointSet:
    """Finite set of points in R^dim, optionally carrying convex weights."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-D array (one point per row)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape[0] != pts.shape[0]:
                raise ValueError("one weight per point required")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be non-negative and sum to 1")
            object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self) -> str:
        return csvio.matrix_to_csv(self.points)

    @classmethod
    def from_csv(cls, text: str) -> "PointSet":
        return cls(csvio.matrix_from_csv(text))


def binomial_halfwidth(p, trials: int, sigmas: float = 3.0):
    """``sigmas * sqrt(p (1 - p) / trials)``, elementwise."""
    p = np.asarray(p, dtype=float)
    return sigmas * np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / trials)


@dataclass
class TailReport:
    """Empirical tail frequencies next to one or more analytic bounds.

    ``bound`` is the curve used for the pass/fail contract; when several
    bounds are compared, ``curves`` holds each of them by name and
    ``bound`` is their pointwise minimum.
    """

    thresholds: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    trials: int
    curves: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.empirical = np.asarray(self.empirical, dtype=float)
        self.bound = np.asarray(self.bound, dtype=float)
        if self.bound.shape != self.thresholds.shape:
            raise ValueError("one bound per threshold required")
        if np.any((self.empirical < 0) | (self.empirical > 1)):
            raise ValueError("empirical frequencies must lie in [0, 1]")

    def halfwidth(self, sigmas: float = 3.0) -> np.ndarray:
        return binomial_halfwidth(self.empirical, self.trials, sigmas)

    def holds(self, curve: Optional[str] = None, sigmas: float = 3.0) -> bool:
        """True when every empirical frequency is below the bound plus a binomial half-width."""
        b = self.bound if curve is None else np.asarray(self.curves[curve])
        return bool(np.all(self.empirical <= b + self.halfwidth(sigmas)))

    def columns(self) -> dict:
        cols = {"t": self.thresholds, "empirical": self.empirical, "bound": self.bound}
        for name, c in self.curves.items():
            cols[f"bound_{name}"] = np.asarray(c)
        cols["trials"] = np.full(self.thresholds.shape, self.trials, dtype=np.int64)
        return cols

    def to_csv(self) -> str:
        cols = self.columns()
        return csvio.table_to_csv(list(cols), list(cols.values()))


def gaussian_vector(rng: RngStream, dim: int) -> np.ndarray:
    """``dim`` i.i.d. standard normal draws."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return rng.normal(dim)


def gaussian_matrix(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """Random matrix with i.i.d. N(0, 1/rows) entries (the JL / RIP normalization)."""
    return rng.normal((rows, cols)) / math.sqrt(rows)


def chi2_mgf(lam: float) -> float:
    """Moment generating function ``E exp(lam * w^2) = 1 / sqrt(1 - 2 lam)`` of a squared standard normal."""
    if not lam < 0.5:
        raise ValueError(f"MGF diverges for lambda >= 1/2 (got {lam})")
    return 1.0 / math.sqrt(1.0 - 2.0 * lam)


def _concentration_exponent(eps) -> float:
    return eps * eps / 2.0 - eps ** 3 / 3.0


def chi2_tail_bound(m: int, eps: float) -> float:
    """``exp(-(m/2)(eps^2/2 - eps^3/3))``, bounding each tail of a chi-square(m) at ``(1 +- eps) m``."""
    return math.exp(-0.5 * m * _concentration_exponent(eps))


def two_stability_report(lambda_vec, trials: int = 100_000, rng: RngStream | None = None) -> float:
    """Kolmogorov-Smirnov distance between ``sum_i lambda_i w_i`` and ``||lambda||_2 N(0, 1)``.

    At ``trials = 1e5`` the distance stays below ``2 / sqrt(trials)`` except
    with probability below 1e-3.
    """
    lam = np.asarray(lambda_vec, dtype=float).ravel()
    if lam.size == 0 or not np.any(lam):
        raise ValueError("lambda_vec must be a nonzero vector")
    if trials < 10_000:
        raise ValueError("trials must be >= 1e4")
    if rng is None:
        rng = RngStream(0)
    samples = np.empty(trials)
    chunk = max(1, 2_000_000 // lam.size)
    for start in range(0, trials, chunk):
        stop = min(trials, start + chunk)
        samples[start:stop] = rng.normal((stop - start, lam.size)) @ lam
    samples.sort()
    cdf = ndtr(samples / np.linalg.norm(lam))
    i = np.arange(1, trials + 1)
    return float(max(np.max(i / trials - cdf), np.max(cdf - (i - 1) / trials)))


def chi2_tail_experiment(m: int, eps: float, trials: int, rng: RngStream) -> TailReport:
    """Frequencies of ``sum w_i^2 >= (1+eps) m`` and ``<= (1-eps) m`` against the exponential bound.

    The report has two rows, upper tail first; both share the same bound.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if m < 1 or trials < 1:
        raise ValueError("m and trials must be >= 1")
    upper = lower = 0
    chunk = max(1, 4_000_000 // m)
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        s = np.sum(rng.normal((k, m)) ** 2, axis=1)
        upper += int(np.count_nonzero(s >= (1.0 + eps) * m))
        lower += int(np.count_nonzero(s <= (1.0 - eps) * m))
    b = chi2_tail_bound(m, eps)
    return TailReport(
        thresholds=[(1.0 + eps) * m, (1.0 - eps) * m],
        empirical=[upper / trials, lower / trials],
        bound=[b, b],
        trials=trials,
        meta={"m": m, "eps": eps},
    )


def chi2_contract_slack(bound: float, trials: int) -> float:
    """Allowed excess of an empirical chi-square tail over its bound."""
    return 3.0 * math.sqrt(bound / trials) + 10.0 / trials


def radius(pointset: PointSet) -> float:
    """Largest Euclidean norm of a point in the set."""
    if len(pointset) == 0:
        raise ValueError("empty point set")
    return float(np.max(np.linalg.norm(pointset.points, axis=1)))


def approx_caratheodory(
    pointset: PointSet, target_weights, n_points: int, rng: RngStream
) -> tuple[np.ndarray, float]:
    """Empirical mean of ``n_points`` draws approximating a convex combination.

    Indices are drawn i.i.d. with probabilities ``target_weights``; returns the
    mean of the drawn points and its distance to ``sum_j w_j z_j``. In mean
    square the error is at most ``(r^2 - ||x||^2) / n_points``.
    """
    if len(pointset) == 0:
        raise ValueError("empty point set")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    w = PointSet(pointset.points, target_weights).weights
    target = w @ pointset.points
    idx = rng.categorical(w, n_points)
    approx = pointset.points[idx].mean(axis=0)
    return approx, float(np.linalg.norm(approx - target))


def monte_carlo_integrate(
    sampler: Callable[[RngStream, int], tuple[np.ndarray, np.ndarray]],
    n: int,
    rng: RngStream,
    f_l2: Optional[float] = None,
) -> tuple[float, Optional[float]]:
    """Plain Monte Carlo average over a measure-one domain.

    ``sampler(rng, n)`` returns ``(points, values)`` for ``n`` independent
    uniform points. The second return value is ``f_l2 / sqrt(n)`` (the RMS
    error bound) when ``f_l2 = ||f||_2`` is supplied, else ``None``.
    Domains of other measure must be rescaled by the caller.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    _, values = sampler(rng, n)
    estimate = float(np.mean(values))
    return estimate, (None if f_l2 is None else f_l2 / math.sqrt(n))


def uniform_sampler(f: Callable[[np.ndarray], np.ndarray], dim: int = 1):
    """Sampler on the unit cube ``[0, 1]^dim`` evaluating a vectorized ``f``."""

    def sample(rng: RngStream, n: int):
        x = rng.uniform((n, dim))
        return x, np.asarray(f(x[:, 0] if dim == 1 else x), dtype=float)

    return sample


def jl_min_dim(n_points: float, eps: float) -> int:
    """Smallest ``m >= 4 ln(N) / (eps^2/2 - eps^3/3)``."""
    if not n_points >= 2:
        raise ValueError("n_points must be >= 2")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    e = Fraction(eps)
    factor = Fraction(4) / (e * e / 2 - e ** 3 / 3)
    value = float(factor) * math.log(n_points)
    return int(math.ceil(value))


def jl_embed(
    pointset: PointSet, eps: float, m: Optional[int], rng: RngStream
) -> tuple[PointSet, float]:
    """Project points with a Gaussian matrix scaled by ``1/sqrt(m)``.

    Returns the embedded set and the largest relative change of a squared
    pairwise distance. Coincident pairs are skipped; if every pair
    coincides the distortion is 0. ``m=None`` uses :func:`jl_min_dim`.
    """
    if m is None:
        m = jl_min_dim(max(2, len(pointset)), eps)
    if m < 1:
        raise ValueError("m must be >= 1")
    a = gaussian_matrix(rng, m, pointset.dim)
    y = pointset.points @ a.T
    return PointSet(y), pairwise_distortion(pointset.points, y)


def pairwise_distortion(x: np.ndarray, y: np.ndarray) -> float:
    i, j = np.triu_indices(x.shape[0], k=1)
    d_old = np.sum((x[i] - x[j]) ** 2, axis=1)
    d_new = np.sum((y[i] - y[j]) ** 2, axis=1)
    keep = d_old > 0
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(d_new[keep] - d_old[keep]) / d_old[keep]))


def trial_chunks(trials: int, width: int, budget: int = 4_000_000):
    """Yield ``(start, count)`` blocks of trials holding about ``budget`` draws each."""
    chunk = max(1, budget // max(1, width))
    for start in range(0, trials, chunk):
        yield start, min(chunk, trials - start)


def scalar_bernstein_bound(m: int, v0_sq: float, t) -> np.ndarray:
    """Tail bound for a sum of ``m`` centred scalars bounded by 1 with variance at most ``v0_sq``.

    ``2 exp(-t^2 / (4 m v0_sq))`` for ``t <= 2 m v0_sq``, else ``2 exp(-t / 2)``.
    """
    t = np.asarray(t, dtype=float)
    split = 2.0 * m * v0_sq
    return np.where(t <= split, 2.0 * np.exp(-t * t / (4.0 * m * v0_sq)), 2.0 * np.exp(-t / 2.0))


def rademacher_sum_tail(m: int, ts, trials: int, rng: RngStream) -> TailReport:
    """Frequency of ``|eps_1 + ... + eps_m| > t`` for independent signs."""
    ts = np.asarray(ts, dtype=float)
    sums = np.empty(trials)
    for start, k in trial_chunks(trials, m):
        sums[start:start + k] = np.abs(rng.rademacher((k, m)).sum(axis=1))
    emp = np.array([np.mean(sums > t) for t in ts])
    return TailReport(ts, emp, scalar_bernstein_bound(m, 1.0, ts), trials, meta={"m": m, "sums": sums})
