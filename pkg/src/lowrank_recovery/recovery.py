"""Nuclear-norm decoding, null space property falsifiers, and the golfing
construction of a dual certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .linalg_core import as_matrix, operator_norm, sgn, singular_values
from .prob_core import TailReport
from .rng import RngStream
from .sensing import (
    GaussianMap,
    OperatorBasis,
    SamplingOperator,
    TangentProjector,
    sample_indices,
    tangent_complement,
    tangent_project,
)

Measurement = Union[GaussianMap, SamplingOperator]

VIOLATION_TOL = 1e-12


# --------------------------------------------------------------------------
# Proximal map and constraint projection


def svt(a, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the proximal map of ``tau ||.||_*``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    a = as_matrix(a)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (u[:, :k] * s[:k]) @ vt[:k]


class AffineConstraint:
    """The affine set ``{W : measurements(W) = y}`` with its Frobenius projection.

    For entry sampling, duplicated indices are one constraint (their values
    are averaged). For a Gaussian map the projection uses the SVD of the
    measurement matrix; if that matrix is rank deficient the projection is
    onto the least-squares-consistent set and ``rank_deficient`` is set.
    """

    def __init__(self, measurement: Measurement, y):
        y = np.asarray(y, dtype=float).ravel()
        self.measurement = measurement
        self.rank_deficient = False
        if isinstance(measurement, SamplingOperator):
            if y.size != measurement.m:
                raise ValueError(f"expected {measurement.m} measured values, got {y.size}")
            self.shape = (measurement.n, measurement.n)
            idx, inv = np.unique(measurement.omegas, return_inverse=True)
            vals = np.bincount(inv, weights=y) / np.bincount(inv)
            self._idx, self._vals = idx, vals
            self._entry = measurement.basis.is_entry
            if not self._entry:
                self._rows = measurement.basis.vec_matrix()[idx]
            self.kernel_dim = measurement.basis.size - idx.size
        elif isinstance(measurement, GaussianMap):
            if y.size != measurement.m:
                raise ValueError(f"expected {measurement.m} measured values, got {y.size}")
            self.shape = (measurement.n, measurement.N)
            w = measurement.matrix
            u, s, vt = np.linalg.svd(w, full_matrices=False)
            keep = s > s[0] * max(w.shape) * np.finfo(float).eps
            self.rank_deficient = bool(keep.sum() < measurement.m)
            self._v = vt[keep].T
            self._x0 = self._v @ ((u[:, keep].T @ y) / s[keep])
            self._entry = False
            self._rows = None
            self.kernel_dim = w.shape[1] - int(keep.sum())
        else:
            raise TypeError(f"unsupported measurement type {type(measurement).__name__}")
        self.y = y

    def measure(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if isinstance(self.measurement, SamplingOperator):
            return self.measurement.measure(z)
        return self.measurement.matrix @ z.ravel()

    def project(self, z) -> np.ndarray:
        z = np.array(z, dtype=float)
        if z.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {z.shape}")
        if isinstance(self.measurement, SamplingOperator):
            if self._entry:
                flat = z.ravel()
                flat[self._idx] = self._vals
                return flat.reshape(self.shape)
            flat = z.ravel()
            flat = flat + (self._vals - self._rows @ flat) @ self._rows
            return flat.reshape(self.shape)
        flat = z.ravel()
        flat = flat - self._v @ (self._v.T @ flat) + self._x0
        return flat.reshape(self.shape)

    def residual(self, z) -> float:
        return float(np.linalg.norm(self.measure(z) - self.y))

    def kernel_basis(self) -> np.ndarray:
        """Orthonormal basis of the measurement kernel, columns of length ``rows*cols``."""
        d = self.shape[0] * self.shape[1]
        if isinstance(self.measurement, SamplingOperator):
            if self._entry:
                free = np.setdiff1d(np.arange(d), self._idx)
                k = np.zeros((d, free.size))
                k[free, np.arange(free.size)] = 1.0
                return k
            mask = np.ones(d, dtype=bool)
            mask[self._idx] = False
            return self.measurement.basis.vec_matrix()[mask].T
        _, s, vt = np.linalg.svd(self.measurement.matrix, full_matrices=True)
        rank = int(np.count_nonzero(s > s[0] * max(self.measurement.matrix.shape) * np.finfo(float).eps))
        return vt[rank:].T


def affine_project(measurement: Measurement, y, z) -> np.ndarray:
    """Frobenius projection of ``z`` onto ``{W : measurements(W) = y}``."""
    return AffineConstraint(measurement, y).project(z)


# --------------------------------------------------------------------------
# Douglas-Rachford solver


@dataclass(frozen=True)
class SolverConfig:
    """Douglas-Rachford parameters.

    ``tol_residual=None`` means ``1e-9 * ||y||_2``.
    """

    step: float = 1.0
    tol_residual: Optional[float] = None
    tol_change: float = 1e-10
    max_iter: int = 5000

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.tol_residual is not None and not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if not self.tol_change > 0:
            raise ValueError("tol_change must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class RecoveryReport:
    solution: np.ndarray
    iterations: int
    constraint_residual: float
    objective: float
    converged: bool

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.constraint_residual,
                "objective": self.objective, "converged": self.converged}


def complete(measurement: Measurement, y, cfg: SolverConfig = SolverConfig()) -> RecoveryReport:
    """Minimize the nuclear norm subject to matching the measurements.

    Douglas-Rachford splitting between the affine projection and singular
    value thresholding. The reported solution is the thresholded iterate;
    it is accepted once its constraint residual and relative change both
    fall below tolerance. On hitting ``max_iter`` the iterate with the
    smallest residual is returned with ``converged=False``.
    """
    con = AffineConstraint(measurement, y)
    tol_res = cfg.tol_residual if cfg.tol_residual is not None else 1e-9 * float(np.linalg.norm(con.y))
    tol_res = max(tol_res, 1e-300)
    if con.kernel_dim == 0:
        # constraint set is a single point
        z = con.project(np.zeros(con.shape))
        res = con.residual(z)
        return RecoveryReport(z, 1, res, float(np.sum(singular_values(z))), res <= max(tol_res, 1e-12))

    x = np.zeros(con.shape)
    w_prev = None
    best = None
    for it in range(1, cfg.max_iter + 1):
        z = con.project(x)
        w = svt(2.0 * z - x, cfg.step)
        x = x + w - z
        res = con.residual(w)
        if best is None or res < best[1]:
            best = (w, res, it)
        if w_prev is not None:
            change = float(np.linalg.norm(w - w_prev)) / max(float(np.linalg.norm(w)), 1e-300)
            if res <= tol_res and change <= cfg.tol_change:
                return RecoveryReport(w, it, res, float(np.sum(singular_values(w))), True)
        w_prev = w
    w, res, _ = best
    return RecoveryReport(w, cfg.max_iter, res, float(np.sum(singular_values(w))), False)


# --------------------------------------------------------------------------
# Null space property falsifiers


@dataclass
class NspReport:
    """Outcome of a null space property search.

    ``violated=False`` only means no violation was found within the budget.
    ``margin`` is the best normalized value of (mass on the ``k`` largest
    coordinates or ``r`` largest singular values) minus (the rest), divided
    by the total; the property requires it to be negative everywhere on the
    kernel.
    """

    violated: bool
    witness: Optional[np.ndarray]
    margin: float
    budget_used: int
    order: int = 1
    kind: str = "vector"

    def __post_init__(self):
        if self.violated:
            if self.witness is None:
                raise ValueError("a violation needs a witness")
            m = (vector_nsp_margin if self.kind == "vector" else rank_nsp_margin)(self.witness, self.order)
            if m < -VIOLATION_TOL:
                raise ValueError(f"witness does not violate the property (margin {m:.3e})")
        elif self.witness is not None:
            raise ValueError("witness present without a violation")


def vector_nsp_margin(v, k: int) -> float:
    """``(||v_T||_1 - ||v_T^c||_1) / ||v||_1`` with ``T`` the ``k`` largest entries."""
    a = np.sort(np.abs(np.asarray(v, dtype=float).ravel()))[::-1]
    total = a.sum()
    if total == 0:
        return -np.inf
    return float((2.0 * a[:k].sum() - total) / total)


def rank_nsp_margin(mat, r: int) -> float:
    """``(sum_{j<=r} s_j - sum_{j>r} s_j) / ||M||_*``."""
    s = singular_values(mat)
    total = s.sum()
    if total == 0:
        return -np.inf
    return float((2.0 * s[:r].sum() - total) / total)


def _local_search(objective, dim: int, budget: int, rng: RngStream, heuristic=None):
    """Random restarts with coordinate ascent; returns (best_c, best_value, evaluations)."""
    used = 0
    best_c, best_val = None, -np.inf
    while used < budget:
        c = rng.normal(dim)
        val = objective(c)
        used += 1
        if heuristic is not None and used < budget:
            c2 = heuristic(c)
            v2 = objective(c2)
            used += 1
            if v2 > val:
                c, val = c2, v2
        step = 0.5 * float(np.linalg.norm(c)) / math.sqrt(dim)
        while used < budget and step > 1e-7 * float(np.linalg.norm(c)) and val < -VIOLATION_TOL:
            improved = False
            for i in range(dim):
                for sign in (1.0, -1.0):
                    if used >= budget:
                        break
                    trial = c.copy()
                    trial[i] += sign * step
                    tv = objective(trial)
                    used += 1
                    if tv > val:
                        c, val, improved = trial, tv, True
                        break
            if not improved:
                step *= 0.5
        if val > best_val:
            best_c, best_val = c, val
        if best_val >= -VIOLATION_TOL:
            break
    return best_c, best_val, used


def nsp_falsify(a, k: int, budget: int, rng: RngStream) -> NspReport:
    """Search the kernel of ``a`` for a vector violating the order-k null space property."""
    a = as_matrix(a)
    N = a.shape[1]
    if not 1 <= k <= N:
        raise ValueError("k must lie in [1, cols]")
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    rank = int(np.count_nonzero(s > s[0] * max(a.shape) * np.finfo(float).eps)) if s.size else 0
    kern = vt[rank:].T
    if kern.shape[1] == 0:
        return NspReport(False, None, -np.inf, 0, k, "vector")
    c, val, used = _local_search(lambda c: vector_nsp_margin(kern @ c, k), kern.shape[1], budget, rng)
    violated = val >= -VIOLATION_TOL
    wit = None
    if violated:
        wit = kern @ c
        wit /= np.linalg.norm(wit)
    return NspReport(violated, wit, val, used, k, "vector")


def rank_nsp_falsify(measurement: Measurement, r: int, budget: int, rng: RngStream) -> NspReport:
    """Search the measurement kernel for a matrix violating the rank-r null space property.

    Besides coordinate ascent, each restart tries one alternating projection
    between the rank-r matrices and the kernel.
    """
    con = AffineConstraint(measurement, np.zeros(measurement.m))
    kern = con.kernel_basis()
    shape = con.shape
    if kern.shape[1] == 0:
        return NspReport(False, None, -np.inf, 0, r, "rank")

    def objective(c):
        return rank_nsp_margin((kern @ c).reshape(shape), r)

    def heuristic(c):
        m = (kern @ c).reshape(shape)
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        low = (u[:, :r] * s[:r]) @ vt[:r]
        return kern.T @ low.ravel()

    c, val, used = _local_search(objective, kern.shape[1], budget, rng, heuristic)
    violated = val >= -VIOLATION_TOL
    wit = None
    if violated:
        wit = (kern @ c).reshape(shape)
        wit /= np.linalg.norm(wit)
    return NspReport(violated, wit, val, used, r, "rank")


# --------------------------------------------------------------------------
# Golfing scheme


def golfing_batches(n: int, r: int) -> int:
    """Number of batches ``ceil(log2(2 n^2 sqrt(r)))``."""
    return int(math.ceil(math.log2(2.0 * n * n * math.sqrt(r))))


def golfing_batch_size(n: int, r: int, nu: float, l: int, beta: float = 1.0) -> int:
    """``ceil(64 nu r n [ln(6nr) + ln(2l) + beta ln n])``."""
    return int(math.ceil(64.0 * nu * r * n * (math.log(6 * n * r) + math.log(2 * l) + beta * math.log(n))))


def default_batch_sizes(m: int, n: int, r: int) -> list[int]:
    """Split ``m`` as evenly as possible into ``golfing_batches(n, r)`` parts."""
    l = golfing_batches(n, r)
    base, extra = divmod(m, l)
    return [base + (1 if i < extra else 0) for i in range(l)]


@dataclass
class DualCertificate:
    """Golfing output ``Y`` with its per-step residual norms.

    ``residual_norms[i] = ||Z_i||_F`` for ``i = 0..l`` (``Z_0 = sgn A``).
    ``omegas`` holds the sampled basis indices of each batch.
    """

    y: np.ndarray
    batch_sizes: tuple
    residual_norms: np.ndarray
    cond_tangent: float
    cond_complement: float
    omegas: tuple = ()
    basis: Optional[OperatorBasis] = None

    @property
    def batches(self) -> int:
        return len(self.batch_sizes)

    def halves_each_step(self) -> bool:
        z = self.residual_norms
        return bool(np.all(z[1:] <= 0.5 * z[:-1]))


def golfing_certificate(
    basis: OperatorBasis,
    a,
    p: TangentProjector,
    batch_sizes: Sequence[int],
    rng: RngStream,
    replacement: bool = True,
) -> DualCertificate:
    """Build ``Y`` batch by batch: ``Y_i = Y_{i-1} + R_i Z_{i-1}``, ``Z_i = sgn A - P_T Y_i``.

    Each ``R_i`` samples a fresh batch of basis indices, with replacement
    unless ``replacement=False``.
    """
    a = as_matrix(a)
    if np.linalg.norm(a - a.T) > 1e-10 * max(1.0, np.linalg.norm(a)):
        raise ValueError("golfing scheme needs a symmetric matrix")
    if any(b < 1 for b in batch_sizes):
        raise ValueError("batch sizes must be positive")
    s = sgn(a)
    y = np.zeros_like(s)
    z = s.copy()
    norms = [float(np.linalg.norm(z))]
    omegas = []
    for m_i in batch_sizes:
        om = sample_indices(rng, basis.size, int(m_i), replacement=replacement)
        op = SamplingOperator(basis, om, replacement)
        if basis.is_entry:
            y = y + op.scale * op.counts().reshape(s.shape) * z
        else:
            y = y + op.scale * basis.synthesize(op.measure(z), om)
        z = s - tangent_project(p, y)
        norms.append(float(np.linalg.norm(z)))
        omegas.append(om)
    return DualCertificate(
        y=y,
        batch_sizes=tuple(int(b) for b in batch_sizes),
        residual_norms=np.array(norms),
        cond_tangent=float(np.linalg.norm(tangent_project(p, y) - s)),
        cond_complement=operator_norm(tangent_complement(p, y)),
        omegas=tuple(omegas),
        basis=basis,
    )


def verify_certificate(cert: DualCertificate, a, p: TangentProjector, n: int) -> tuple[bool, bool, bool]:
    """Check ``Y`` in range(R), ``||P_T Y - sgn A||_F <= 1/(2n^2)`` and ``||P_Tperp Y|| <= 1/2``."""
    y = as_matrix(cert.y)
    s = sgn(a)
    cond_tangent = float(np.linalg.norm(tangent_project(p, y) - s))
    cond_complement = operator_norm(tangent_complement(p, y))
    if cert.omegas:
        sampled = np.unique(np.concatenate(cert.omegas))
    else:
        sampled = np.empty(0, dtype=np.int64)
    basis = cert.basis if cert.basis is not None else OperatorBasis.entry(n)
    coeffs = basis.coefficients(y, sampled) if sampled.size else np.empty(0)
    reproj = basis.synthesize(coeffs, sampled) if sampled.size else np.zeros_like(y)
    in_range = bool(np.linalg.norm(y - reproj) <= 1e-10 * max(1.0, float(np.linalg.norm(y))))
    return in_range, cond_tangent <= 1.0 / (2.0 * n * n), cond_complement <= 0.5


# --------------------------------------------------------------------------
# Concentration of the sampled tangent operator


def tangent_nu(basis: OperatorBasis, p: TangentProjector) -> float:
    """``(n / 2r) max_a ||P_T X_a||_F^2``, the coherence entering the tangent bound."""
    b = p.vec_basis()
    proj_sq = np.sum((basis.vec_matrix() @ b) ** 2, axis=1)
    return float(basis.n * proj_sq.max() / (2 * p.r))


def tangent_concentration_bound(n: int, r: int, nu: float, m: int, t) -> np.ndarray:
    """``4 n r exp(-t^2 m / (4 (2 nu r n + 1)))``."""
    t = np.asarray(t, dtype=float)
    return 4.0 * n * r * np.exp(-t * t * m / (4.0 * (2.0 * nu * r * n + 1.0)))


def tangent_sample_count(n: int, r: int, nu: float, failure: float) -> int:
    """Smallest ``m`` with ``4 n r exp(-m / (16 (2 nu r n + 1))) <= failure``."""
    return int(math.ceil(16.0 * (2.0 * nu * r * n + 1.0) * math.log(4.0 * n * r / failure)))


def power_iteration_norm(mat: np.ndarray, rng: RngStream, iters: int = 200, tol: float = 1e-10) -> float:
    """Operator norm of a symmetric matrix by power iteration."""
    d = mat.shape[0]
    if d == 0:
        return 0.0
    x = rng.normal(d)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = mat @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        x = y / new
        if abs(new - est) <= tol * max(new, 1.0):
            est = new
            break
        est = new
    return est


def tangent_deviation(basis: OperatorBasis, p: TangentProjector, omegas, rng: RngStream, tb: Optional[np.ndarray] = None) -> float:
    """``||P_T - P_T R P_T||`` restricted to ``T`` for the given sample indices."""
    if tb is None:
        tb = p.vec_basis()
    g = basis.vec_matrix()[np.asarray(omegas)] @ tb if not basis.is_entry else tb[np.asarray(omegas)]
    m = g.shape[0]
    op = np.eye(tb.shape[1]) - (basis.size / m) * (g.T @ g)
    return power_iteration_norm(op, rng)


def tangent_operator_concentration(
    basis: OperatorBasis,
    p: TangentProjector,
    m: int,
    trials: int,
    ts,
    rng: RngStream,
    nu: Optional[float] = None,
) -> TailReport:
    """Frequency of ``||P_T - P_T R P_T|| >= t`` against ``4nr exp(-t^2 m / (4(2 nu r n + 1)))``.

    ``nu`` defaults to :func:`tangent_nu`.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any((ts <= 0) | (ts >= 2)):
        raise ValueError("thresholds must lie in (0, 2)")
    if nu is None:
        nu = tangent_nu(basis, p)
    tb = p.vec_basis()
    devs = np.empty(trials)
    for i in range(trials):
        om = sample_indices(rng, basis.size, m, replacement=True)
        devs[i] = tangent_deviation(basis, p, om, rng, tb)
    emp = np.array([np.mean(devs >= t) for t in ts])
    return TailReport(ts, emp, tangent_concentration_bound(p.n, p.r, nu, m, ts), trials,
                      meta={"nu": nu, "m": m, "deviations": devs})
