"""Measurement ensembles: Gaussian information maps, orthonormal operator
bases, the rescaled sampling operator, coherence, and the projector onto the
tangent space of a low-rank matrix."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg_core import as_matrix, sgn, svd
from .prob_core import TailReport
from .rng import RngStream


def rip_sample_count(n: int, N: int, r: int, delta: float = 0.5, eps: float = 0.01, const: float = 10.0) -> int:
    """Desk-scale Gaussian measurement count ``ceil(const (r(n+N) + ln(2/eps)) / delta^2)``.

    The constant 10 is an empirical calibration; the underlying bound only
    fixes the shape of the expression.
    """
    return int(math.ceil(const * (r * (n + N) + math.log(2.0 / eps)) / delta ** 2))


# --------------------------------------------------------------------------
# Gaussian information maps


@dataclass(frozen=True)
class GaussianMap:
    """``m`` measurement matrices of shape ``n x N`` with i.i.d. N(0, 1/m) entries.

    Only ``(seed, stream_id)`` and the dimensions need to be persisted; the
    matrices are re-derived from the stream.
    """

    m: int
    n: int
    N: int
    mats: np.ndarray  # (m, n, N)
    seed: int = 0
    stream_id: int = 0

    @property
    def matrix(self) -> np.ndarray:
        """The map as an ``m x (n N)`` matrix acting on row-major ``vec(A)``."""
        return self.mats.reshape(self.m, self.n * self.N)

    def to_json(self) -> str:
        return json.dumps(
            {"kind": "gaussian", "m": self.m, "n": self.n, "N": self.N,
             "seed": self.seed, "stream_id": self.stream_id}
        )

    @classmethod
    def from_json(cls, text: str) -> "GaussianMap":
        d = json.loads(text)
        return gaussian_map_new(RngStream(d["seed"], d["stream_id"]), d["m"], d["n"], d["N"])


def gaussian_map_new(rng: RngStream, m: int, n: int, N: int) -> GaussianMap:
    if min(m, n, N) < 1:
        raise ValueError("m, n, N must all be >= 1")
    mats = rng.normal((m, n, N)) / math.sqrt(m)
    return GaussianMap(m=m, n=n, N=N, mats=mats, seed=rng.seed, stream_id=rng.stream_id)


def apply_map(gmap: GaussianMap, a) -> np.ndarray:
    """Vector of Frobenius inner products ``<X_j, a>_F``."""
    a = as_matrix(a)
    if a.shape != (gmap.n, gmap.N):
        raise ValueError(f"expected a {gmap.n}x{gmap.N} matrix, got {a.shape}")
    return gmap.matrix @ a.ravel()


def fixed_vector_isometry_bound(m: int, t) -> np.ndarray:
    """``2 exp(-(m/2)(t^2/2 - t^3/3))`` for deviations of ``||Ax||^2`` from 1."""
    t = np.asarray(t, dtype=float)
    return 2.0 * np.exp(-0.5 * m * (t * t / 2.0 - t ** 3 / 3.0))


def fixed_vector_isometry_experiment(
    m: int, n: int, trials: int, ts, rng: RngStream, x=None
) -> TailReport:
    """Frequency of ``| ||Ax||^2 - 1 | >= t`` for a Gaussian ``m x n`` matrix ``A``.

    ``x`` defaults to the first unit vector; any unit vector has the same
    distribution.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any((ts <= 0) | (ts >= 1)):
        raise ValueError("thresholds must lie in (0, 1)")
    if x is None:
        x = np.zeros(n)
        x[0] = 1.0
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    dev = np.empty(trials)
    chunk = max(1, 2_000_000 // (m * n))
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        a = rng.normal((k, m, n)) / math.sqrt(m)
        dev[start:start + k] = np.abs(np.sum((a @ x) ** 2, axis=1) - 1.0)
    emp = np.array([np.mean(dev >= t) for t in ts])
    return TailReport(ts, emp, fixed_vector_isometry_bound(m, ts), trials,
                      meta={"m": m, "n": n, "deviations": dev})


# --------------------------------------------------------------------------
# Operator bases and sampling


class OperatorBasis:
    """Orthonormal basis ``{X_a}`` of ``n x n`` matrices in the Frobenius inner product.

    Use :meth:`entry` for the standard basis ``{e_k e_l^T}`` (index
    ``a = k n + l``, zero-based) or :meth:`explicit` for an arbitrary list of
    ``n^2`` matrices, which is checked for orthonormality.
    """

    def __init__(self, n: int, mats: Optional[np.ndarray] = None):
        self.n = int(n)
        self._mats = mats

    @classmethod
    def entry(cls, n: int) -> "OperatorBasis":
        if n < 1:
            raise ValueError("n must be >= 1")
        return cls(n)

    @classmethod
    def explicit(cls, mats, tol: float = 1e-10) -> "OperatorBasis":
        mats = np.asarray(mats, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] != mats.shape[1] ** 2:
            raise ValueError("an explicit basis needs n^2 matrices of shape n x n")
        n = mats.shape[1]
        flat = mats.reshape(n * n, n * n)
        err = np.abs(flat @ flat.T - np.eye(n * n)).max()
        if err > tol:
            raise ValueError(f"basis is not orthonormal (max Gram deviation {err:.3e})")
        return cls(n, mats.copy())

    @property
    def is_entry(self) -> bool:
        return self._mats is None

    @property
    def kind(self) -> str:
        return "entry" if self.is_entry else "explicit"

    @property
    def size(self) -> int:
        return self.n * self.n

    def element(self, a: int) -> np.ndarray:
        if not 0 <= a < self.size:
            raise IndexError(f"basis index {a} out of range")
        if self.is_entry:
            k, l = divmod(a, self.n)
            return entry_basis_element(self.n, k, l)
        return self._mats[a].copy()

    def vec_matrix(self) -> np.ndarray:
        """``n^2 x n^2`` matrix whose row ``a`` is ``vec(X_a)`` (row-major)."""
        if self.is_entry:
            return np.eye(self.size)
        return self._mats.reshape(self.size, self.size)

    def stack(self) -> np.ndarray:
        return self.vec_matrix().reshape(self.size, self.n, self.n)

    def coefficients(self, z, indices=None) -> np.ndarray:
        """``<X_a, z>_F`` for the given indices (all by default)."""
        z = np.asarray(z, dtype=float).ravel()
        if self.is_entry:
            return z if indices is None else z[np.asarray(indices)]
        flat = self._mats.reshape(self.size, self.size)
        return flat @ z if indices is None else flat[np.asarray(indices)] @ z

    def synthesize(self, coeffs, indices=None) -> np.ndarray:
        """``sum_a c_a X_a`` over ``indices`` (all by default); duplicates add up."""
        coeffs = np.asarray(coeffs, dtype=float)
        if indices is None:
            indices = np.arange(self.size)
        indices = np.asarray(indices, dtype=np.int64)
        if self.is_entry:
            out = np.bincount(indices, weights=coeffs, minlength=self.size)
        else:
            out = coeffs @ self._mats.reshape(self.size, self.size)[indices]
        return out.reshape(self.n, self.n)


def entry_basis_element(n: int, k: int, l: int) -> np.ndarray:
    """Matrix unit ``e_k e_l^T`` (zero-based ``k, l``)."""
    if not (0 <= k < n and 0 <= l < n):
        raise ValueError(f"index ({k}, {l}) out of range for n={n}")
    x = np.zeros((n, n))
    x[k, l] = 1.0
    return x


def sample_indices(rng: RngStream, n_sq: int, m: int, replacement: bool) -> np.ndarray:
    """``m`` uniform indices in ``[0, n_sq)``: i.i.d., or a uniform subset via partial Fisher-Yates."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if replacement:
        return rng.integers(n_sq, m)
    if m > n_sq:
        raise ValueError(f"cannot draw {m} distinct indices out of {n_sq}")
    return rng.permutation_prefix(n_sq, m)


@dataclass(frozen=True)
class SamplingOperator:
    """``Z -> (n^2/m) sum_j <X_{w_j}, Z>_F X_{w_j}`` for sampled basis indices ``w_j``.

    Repeated indices contribute repeatedly.
    """

    basis: OperatorBasis
    omegas: np.ndarray
    replacement: bool = True

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=np.int64).ravel()
        if om.size and (om.min() < 0 or om.max() >= self.basis.size):
            raise ValueError("sample index out of range")
        if not self.replacement and np.unique(om).size != om.size:
            raise ValueError("duplicate indices in a sampling-without-replacement operator")
        object.__setattr__(self, "omegas", om)

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def m(self) -> int:
        return int(self.omegas.size)

    @property
    def scale(self) -> float:
        return self.basis.size / self.m

    def counts(self) -> np.ndarray:
        return np.bincount(self.omegas, minlength=self.basis.size)

    def measure(self, z) -> np.ndarray:
        """Raw measurements ``<X_{w_j}, z>_F`` in sampling order."""
        return self.basis.coefficients(z, self.omegas)

    def to_json(self, basis_file: Optional[str] = None) -> str:
        return json.dumps({
            "n": self.n, "m": self.m, "replacement": self.replacement,
            "omegas": [int(w) for w in self.omegas],
            "basis": "entry" if self.basis.is_entry else (basis_file or "explicit"),
        })

    @classmethod
    def from_json(cls, text: str, basis: Optional[OperatorBasis] = None) -> "SamplingOperator":
        d = json.loads(text)
        if d["basis"] == "entry":
            basis = OperatorBasis.entry(d["n"])
        elif basis is None:
            raise ValueError("explicit basis must be supplied for a non-entry sampling operator")
        op = cls(basis, np.asarray(d["omegas"], dtype=np.int64), bool(d["replacement"]))
        if op.m != d["m"] or op.n != d["n"]:
            raise ValueError("inconsistent sampling operator JSON")
        return op


def sampling_operator_new(basis: OperatorBasis, m: int, rng: RngStream, replacement: bool = True) -> SamplingOperator:
    return SamplingOperator(basis, sample_indices(rng, basis.size, m, replacement), replacement)


def sampling_apply(op: SamplingOperator, z) -> np.ndarray:
    z = as_matrix(z)
    if z.shape != (op.n, op.n):
        raise ValueError(f"expected a {op.n}x{op.n} matrix, got {z.shape}")
    if op.basis.is_entry:
        return op.scale * op.counts().reshape(op.n, op.n) * z
    return op.scale * op.basis.synthesize(op.measure(z), op.omegas)


# --------------------------------------------------------------------------
# Tangent space


@dataclass(frozen=True)
class TangentProjector:
    """Projector onto ``T = {Z : P_perp Z P_perp = 0}`` for ``P = u u^T``."""

    u_basis: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_basis, dtype=float)
        if u.ndim != 2:
            raise ValueError("u_basis must be 2-D")
        if np.abs(u.T @ u - np.eye(u.shape[1])).max() > 1e-10:
            raise ValueError("u_basis must have orthonormal columns")
        object.__setattr__(self, "u_basis", u)

    @classmethod
    def from_matrix(cls, a, rank_tol: Optional[float] = None) -> "TangentProjector":
        """Range of ``a`` from its SVD (left singular vectors of nonzero singular values)."""
        f = svd(a, rank_tol)
        return cls(f.u[:, :f.numerical_rank])

    @property
    def n(self) -> int:
        return self.u_basis.shape[0]

    @property
    def r(self) -> int:
        return self.u_basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.u_basis @ self.u_basis.T

    @property
    def dim(self) -> int:
        return 2 * self.r * self.n - self.r ** 2

    def vec_basis(self) -> np.ndarray:
        """Orthonormal basis of ``T`` as columns of an ``n^2 x dim`` matrix (row-major vec)."""
        n, r = self.n, self.r
        full = _complete_basis(self.u_basis)
        u, w = full[:, :r], full[:, r:]
        cols = []
        for i in range(r):
            for j in range(r):
                cols.append(np.outer(u[:, i], u[:, j]).ravel())
            for j in range(n - r):
                cols.append(np.outer(u[:, i], w[:, j]).ravel())
                cols.append(np.outer(w[:, j], u[:, i]).ravel())
        return np.array(cols).T if cols else np.zeros((n * n, 0))


def _complete_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of R^n whose first r columns are ``u``."""
    n, r = u.shape
    q, _ = np.linalg.qr(np.hstack([u, np.eye(n)]))
    return np.hstack([u, q[:, r:n]])


def tangent_project(p: TangentProjector, z) -> np.ndarray:
    """``P Z + Z P - P Z P``."""
    z = as_matrix(z)
    if z.shape != (p.n, p.n):
        raise ValueError(f"expected a {p.n}x{p.n} matrix, got {z.shape}")
    u = p.u_basis
    uz = u @ (u.T @ z)
    zu = (z @ u) @ u.T
    return uz + zu - u @ (u.T @ zu)


def tangent_complement(p: TangentProjector, z) -> np.ndarray:
    """``z - P_T z = P_perp z P_perp``."""
    z = as_matrix(z)
    return z - tangent_project(p, z)


# --------------------------------------------------------------------------
# Coherence


@dataclass(frozen=True)
class CoherenceReport:
    """Coherence of a rank-r matrix with respect to an operator basis.

    ``nu_basis`` is ``n max_a ||X_a||^2``; ``nu_pair`` holds the two
    matrix-dependent ratios ``(n/(2r)) max_a ||P_T X_a||_F^2`` and
    ``(n^2/r) max_a <X_a, sgn A>^2``. ``mu1`` and ``mu2`` are only defined
    for the entry basis.
    """

    nu_basis: float
    nu_pair: tuple
    mu1: Optional[float] = None
    mu2: Optional[float] = None
    max_tangent_sq: float = 0.0
    max_basis_opnorm_sq: float = 0.0

    @property
    def nu(self) -> float:
        """Smallest coherence admissible through the matrix-dependent route."""
        return max(self.nu_pair)

    @property
    def nu_entry(self) -> Optional[float]:
        """``max(mu1, mu2^2)`` for the entry basis."""
        if self.mu1 is None:
            return None
        return max(self.mu1, self.mu2 ** 2)


def coherence(basis: OperatorBasis, a, p: Optional[TangentProjector] = None) -> CoherenceReport:
    a, _ = _symmetric(a)
    if p is None:
        p = TangentProjector.from_matrix(a)
    n, r = basis.n, p.r
    s = sgn(a)
    if basis.is_entry:
        basis_op_sq = 1.0
        row_sq = np.sum(p.u_basis ** 2, axis=1)  # ||P_U e_i||^2
        # ||P_T(e_i e_j^T)||_F^2 = ||P e_i||^2 + (1 - ||P e_i||^2) ||P e_j||^2
        tangent_sq = row_sq[:, None] + (1.0 - row_sq)[:, None] * row_sq[None, :]
        max_tangent_sq = float(tangent_sq.max())
        max_sgn_sq = float(np.max(s ** 2))
        mu1 = float(n / r * row_sq.max()) if r else 0.0
        mu2 = float(n / math.sqrt(r) * np.abs(s).max()) if r else 0.0
    else:
        mats = basis.stack()
        basis_op_sq = float(max(np.linalg.norm(x, 2) ** 2 for x in mats))
        max_tangent_sq = float(max(np.sum(tangent_project(p, x) ** 2) for x in mats))
        max_sgn_sq = float(np.max(basis.coefficients(s) ** 2))
        mu1 = mu2 = None
    nu_pair = (
        n * max_tangent_sq / (2 * r) if r else 0.0,
        n * n * max_sgn_sq / r if r else 0.0,
    )
    return CoherenceReport(
        nu_basis=n * basis_op_sq,
        nu_pair=nu_pair,
        mu1=mu1,
        mu2=mu2,
        max_tangent_sq=max_tangent_sq,
        max_basis_opnorm_sq=basis_op_sq,
    )


def _symmetric(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    asym = float(np.linalg.norm(a - a.T))
    return 0.5 * (a + a.T), asym


# --------------------------------------------------------------------------
# Restricted isometry


def sparse_rip_constant(a, k: int, max_supports: int = 1_000_000) -> float:
    """Exact order-k restricted isometry constant by enumerating every support."""
    a = as_matrix(a)
    N = a.shape[1]
    if not 1 <= k <= N:
        raise ValueError("k must lie in [1, cols]")
    if math.comb(N, k) > max_supports:
        raise ValueError(f"C({N},{k}) = {math.comb(N, k)} supports exceeds the enumeration guard {max_supports}")
    gram = a.T @ a
    supports = np.array(list(itertools.combinations(range(N), k)), dtype=np.int64)
    delta = 0.0
    for start in range(0, len(supports), 20000):
        sup = supports[start:start + 20000]
        sub = gram[sup[:, :, None], sup[:, None, :]]
        lam = np.linalg.eigvalsh(sub)
        delta = max(delta, float(np.max(lam[:, -1] - 1.0)), float(np.max(1.0 - lam[:, 0])))
    return delta


def random_lowrank_unit(rng: RngStream, n: int, N: int, r: int) -> np.ndarray:
    """Random rank-r matrix with Gaussian factors, normalized to unit Frobenius norm."""
    a = rng.normal((n, r)) @ rng.normal((r, N))
    return a / np.linalg.norm(a)


def incoherent_psd(rng: RngStream, n: int, r: int) -> np.ndarray:
    """Symmetric rank-r matrix ``U U^T / r`` built from random sign columns.

    For ``r = 1`` the range is spanned by a vector with entries ``+-1/sqrt(n)``,
    so both coherence parameters equal 1. Larger ``r`` orthonormalizes sign
    columns, which keeps the coherence small but not exactly 1.
    """
    if not 1 <= r <= n:
        raise ValueError("need 1 <= r <= n")
    q, _ = np.linalg.qr(rng.rademacher((n, r)))
    return (q @ q.T) / r


def matrix_rip_estimate(gmap: GaussianMap, r: int, probes: int, rng: RngStream, use_net: bool = True, net_cap: int = 1_000_000) -> float:
    """Probe-based lower estimate of the rank-r restricted isometry constant.

    Maximum of ``| ||X(A)||^2 - 1 |`` over random rank-r unit-Frobenius
    matrices and, when ``21^{r(n+N+1)} <= net_cap``, the elements of a
    1/2-net of the rank-r unit ball (rescaled to unit norm). This is an
    estimate, not a certificate.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    mat = gmap.matrix
    best = 0.0
    for start in range(0, probes, 1024):
        k = min(1024, probes - start)
        a = rng.normal((k, gmap.n, r)) @ rng.normal((k, r, gmap.N))
        a /= np.linalg.norm(a, axis=(1, 2), keepdims=True)
        vals = np.sum((a.reshape(k, -1) @ mat.T) ** 2, axis=1)
        best = max(best, float(np.max(np.abs(vals - 1.0))))
    if use_net and 21.0 ** (r * (gmap.n + gmap.N + 1)) <= net_cap:
        from .nets import lowrank_net

        net = lowrank_net(gmap.n, gmap.N, r, 0.5, rng, cap=net_cap)
        for el in net.elements:
            nrm = np.linalg.norm(el)
            if nrm > 1e-12:
                v = el.ravel() / nrm
                best = max(best, abs(float(np.sum((mat @ v) ** 2)) - 1.0))
    return best


def orthonormal_measurement_map(n: int, N: int, rng: RngStream) -> GaussianMap:
    """Map whose ``n N`` measurement matrices form a random orthonormal basis.

    Such a map is an exact isometry (all restricted isometry constants 0).
    """
    q, _ = np.linalg.qr(rng.normal((n * N, n * N)))
    return GaussianMap(m=n * N, n=n, N=N, mats=q.T.reshape(n * N, n, N), seed=rng.seed, stream_id=rng.stream_id)
