"""Matrix-valued concentration: Lie product formula, Golden-Thompson,
the Lieb concavity midpoint probe and matrix Bernstein tail experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg_core import as_matrix, expm, operator_norm, sym_expm, sym_logm, symmetrize
from .prob_core import TailReport, trial_chunks
from .rng import RngStream

KINDS = ("rademacher_weighted", "gaussian_weighted", "random_dyad")
SIGN_ENUMERATION_LIMIT = 16


@dataclass(frozen=True)
class MatrixEnsemble:
    """Centred symmetric random matrices of size ``n``.

    ``rademacher_weighted`` draws ``sum_j eps_j B_j`` with independent signs,
    ``gaussian_weighted`` draws ``sum_j g_j B_j`` with standard normals and
    ``random_dyad`` draws ``eps u u^T`` with ``u`` uniform on the unit sphere.
    """

    kind: str
    n: int
    mats: np.ndarray = field(default_factory=lambda: np.empty((0, 0, 0)))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "random_dyad":
            return
        mats = np.asarray(self.mats, dtype=float)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[1:] != (self.n, self.n) or mats.shape[0] == 0:
            raise ValueError(f"expected a stack of {self.n}x{self.n} matrices")
        if not np.allclose(mats, np.swapaxes(mats, 1, 2), atol=1e-12):
            raise ValueError("weight matrices must be symmetric")
        object.__setattr__(self, "mats", mats)

    @classmethod
    def rademacher(cls, mats) -> "MatrixEnsemble":
        mats = np.asarray(mats, dtype=float)
        return cls("rademacher_weighted", mats.shape[-1], mats)

    @classmethod
    def gaussian(cls, mats) -> "MatrixEnsemble":
        mats = np.asarray(mats, dtype=float)
        return cls("gaussian_weighted", mats.shape[-1], mats)

    @classmethod
    def dyad(cls, n: int) -> "MatrixEnsemble":
        return cls("random_dyad", n)

    def sample(self, rng: RngStream, count: int) -> np.ndarray:
        """``count`` independent draws, shape ``(count, n, n)``."""
        return self.sample_sums(rng, count, 1)

    def sample_sums(self, rng: RngStream, count: int, m: int) -> np.ndarray:
        """``count`` independent sums ``X_1 + ... + X_m``, shape ``(count, n, n)``."""
        if self.kind == "random_dyad":
            g = rng.normal((count, m, self.n))
            u = g / np.linalg.norm(g, axis=2, keepdims=True)
            eps = rng.rademacher((count, m))
            return np.einsum("kmi,km,kmj->kij", u, eps, u)
        j = self.mats.shape[0]
        if self.kind == "rademacher_weighted":
            w = rng.rademacher((count, m, j))
        else:
            w = rng.normal((count, m, j))
        return np.einsum("kj,jab->kab", w.sum(axis=1), self.mats)


@dataclass(frozen=True)
class BernsteinParams:
    """``v0_sq >= ||E X^2||``, ``c >= ||X||`` a.s., ``sigma_sq = ||sum E X_j^2||``, ``k_bound = K``."""

    v0_sq: float
    c: float
    sigma_sq: float
    k_bound: float
    source: str = "analytic"
    samples: int = 0

    def __post_init__(self):
        for name in ("v0_sq", "c", "sigma_sq", "k_bound"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


def _sign_max_norm(mats: np.ndarray) -> float:
    j = mats.shape[0]
    if j > SIGN_ENUMERATION_LIMIT:
        return float(sum(operator_norm(b) for b in mats))
    # a sign pattern and its negation give the same norm
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=j - 1)))
    signs = np.hstack([np.ones((len(signs), 1)), signs])
    sums = np.einsum("sj,jab->sab", signs, mats)
    return float(np.max(np.abs(np.linalg.eigvalsh(sums))))


def empirical_second_moment(e: MatrixEnsemble, samples: int, rng: RngStream) -> np.ndarray:
    """Sample mean of ``X^2``."""
    acc = np.zeros((e.n, e.n))
    for _, k in trial_chunks(samples, e.n * e.n * 4):
        x = e.sample(rng, k)
        acc += np.einsum("kab,kbc->ac", x, x)
    return acc / samples


def analytic_second_moment(e: MatrixEnsemble) -> np.ndarray:
    if e.kind == "random_dyad":
        return np.eye(e.n) / e.n
    return np.einsum("jab,jbc->ac", e.mats, e.mats)


def ensemble_params(e: MatrixEnsemble, empirical_samples: int, rng: RngStream, m: int = 1) -> BernsteinParams:
    """Bernstein parameters of ``e`` for sums of ``m`` i.i.d. copies.

    Every supported kind has an analytic ``E X^2``. For Rademacher weights
    the almost-sure norm bound is the maximum over sign patterns (exact up
    to 16 matrices, triangle inequality beyond). Gaussian weights are
    unbounded, so ``c = inf``. With ``empirical_samples > 0`` the variance
    proxy is the larger of the analytic and sampled ``||E X^2||``.
    """
    v0_sq = operator_norm(analytic_second_moment(e))
    if e.kind == "random_dyad":
        c = 1.0
    elif e.kind == "rademacher_weighted":
        c = _sign_max_norm(e.mats)
    else:
        c = math.inf
    source = "analytic"
    if empirical_samples > 0:
        v0_sq = max(v0_sq, operator_norm(empirical_second_moment(e, empirical_samples, rng)))
        source = "analytic+empirical"
    return BernsteinParams(v0_sq, c, m * v0_sq, c, source, int(empirical_samples))


def bernstein_bound(n: int, m: int, v0_sq: float, c: float, t) -> np.ndarray:
    """``2n exp(-t^2/(4 m v0_sq))`` for ``t <= 2 m v0_sq / c``, else ``2n exp(-t/(2c))``."""
    t = np.asarray(t, dtype=float)
    split = 2.0 * m * v0_sq / c
    small = 2.0 * n * np.exp(-t * t / (4.0 * m * v0_sq))
    large = 2.0 * n * np.exp(-t / (2.0 * c))
    return np.where(t <= split, small, large)


def lieb_bernstein_bound(n: int, sigma_sq: float, k_bound: float, t) -> np.ndarray:
    """``2n exp(-(t^2/2) / (sigma_sq + K t / 3))``."""
    t = np.asarray(t, dtype=float)
    return 2.0 * n * np.exp(-(t * t / 2.0) / (sigma_sq + k_bound * t / 3.0))


def h_function(u) -> np.ndarray:
    """``(1+u) log(1+u) - u``."""
    u = np.asarray(u, dtype=float)
    return (1.0 + u) * np.log1p(u) - u


def bernstein_tail_experiment(
    e: MatrixEnsemble, m: int, ts: Sequence[float], trials: int, rng: RngStream,
    params: BernsteinParams | None = None,
) -> TailReport:
    """Frequency of ``||X_1 + ... + X_m|| > t`` against both Bernstein curves.

    ``curves`` holds ``theo_bern1`` (two-regime form) and ``lieb``
    (``sigma^2 = m ||E X^2||``); ``bound`` is their pointwise minimum.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("thresholds must be positive")
    if m < 1 or trials < 1:
        raise ValueError("m and trials must be >= 1")
    if params is None:
        params = ensemble_params(e, 0, rng, m)
    width = m * (e.mats.shape[0] if e.kind != "random_dyad" else e.n + 1)
    norms = np.empty(trials)
    for start, k in trial_chunks(trials, width):
        s = e.sample_sums(rng, k, m)
        if e.n == 1:
            norms[start:start + k] = np.abs(s[:, 0, 0])
        else:
            norms[start:start + k] = np.max(np.abs(np.linalg.eigvalsh(s)), axis=1)
    emp = np.array([np.mean(norms > t) for t in ts])
    b1 = bernstein_bound(e.n, m, params.v0_sq, params.c, ts)
    lieb = lieb_bernstein_bound(e.n, m * params.v0_sq, params.k_bound, ts)
    return TailReport(
        ts, emp, np.minimum(b1, lieb), trials,
        curves={"theo_bern1": b1, "lieb": lieb},
        meta={"n": e.n, "m": m, "v0_sq": params.v0_sq, "c": params.c,
              "sigma_sq": m * params.v0_sq, "norms": norms},
    )


# --------------------------------------------------------------------------
# Trace inequalities


def _square_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"need square matrices of equal size, got {a.shape} and {b.shape}")
    return a, b


def lie_product_errors(a, b, ns: Sequence[int]) -> np.ndarray:
    """``||e^{A+B} - (e^{A/N} e^{B/N})^N||`` for each ``N``.

    Symmetric inputs use eigendecompositions, others the general exponential.
    """
    a, b = _square_pair(a, b)
    ex = sym_expm if np.array_equal(a, a.T) and np.array_equal(b, b.T) else expm
    target = ex(a + b)
    out = []
    for n in ns:
        if n < 1:
            raise ValueError("N must be >= 1")
        step = ex(a / n) @ ex(b / n)
        out.append(operator_norm(target - np.linalg.matrix_power(step, int(n))))
    return np.array(out)


def golden_thompson_gap(a, b) -> tuple[float, float]:
    """``(tr e^{A+B}, tr(e^A e^B))`` for symmetric ``A, B``."""
    a, b = _square_pair(a, b)
    a, _ = symmetrize(a)
    b, _ = symmetrize(b)
    lhs = float(np.trace(sym_expm(a + b)))
    rhs = float(np.trace(sym_expm(a) @ sym_expm(b)))
    return lhs, rhs


def lieb_function(h, a) -> float:
    """``tr exp(H + log A)``."""
    return float(np.trace(sym_expm(h + sym_logm(a))))


def lieb_concavity_probe(h, a, b) -> float:
    """Midpoint gap ``f((A+B)/2) - (f(A) + f(B))/2`` of ``f(A) = tr exp(H + log A)``.

    Non-negative when ``f`` is concave on positive definite matrices.
    """
    h, _ = symmetrize(as_matrix(h, "h"))
    a, _ = symmetrize(as_matrix(a, "a"))
    b, _ = symmetrize(as_matrix(b, "b"))
    if not (h.shape == a.shape == b.shape):
        raise ValueError("h, a and b must have the same shape")
    return lieb_function(h, (a + b) / 2.0) - 0.5 * (lieb_function(h, a) + lieb_function(h, b))


def random_symmetric(rng: RngStream, n: int, norm: float | None = None) -> np.ndarray:
    """Gaussian symmetric matrix, optionally rescaled to a given operator norm."""
    g = rng.normal((n, n))
    s = (g + g.T) / 2.0
    if norm is not None:
        s *= norm / operator_norm(s)
    return s


def random_spd(rng: RngStream, n: int) -> np.ndarray:
    """Random symmetric positive definite matrix with spectrum in roughly [0.1, 10]."""
    g = rng.normal((n, n))
    q, _ = np.linalg.qr(g)
    lam = np.exp(rng.uniform(n) * math.log(100.0)) / 10.0
    s = (q * lam) @ q.T
    return (s + s.T) / 2.0
