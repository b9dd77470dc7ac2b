"""Dense linear algebra kernel.

Matrices are plain 2-D ``float64`` numpy arrays. Constructors and entry points
validate shape and finiteness through :func:`as_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .rng import RngStream

SYMMETRY_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when an iterative numerical routine fails to converge."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float array, or raise ``ValueError``."""
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def default_rank_tol(shape) -> float:
    """Relative singular value cutoff used when none is given."""
    return 1e-10 * max(shape)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``a = u @ diag(sigmas) @ v.T`` with rank metadata.

    ``u`` is rows x k and ``v`` is cols x k with k = min(rows, cols).
    """

    u: np.ndarray
    sigmas: np.ndarray
    v: np.ndarray
    numerical_rank: int
    rank_tol: float

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigmas) @ self.v.T

    def truncated(self, rank: int | None = None):
        """Leading ``rank`` factors (numerical rank by default)."""
        r = self.numerical_rank if rank is None else rank
        return self.u[:, :r], self.sigmas[:r], self.v[:, :r]


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition ``s = q @ diag(lambdas) @ q.T``, eigenvalues descending."""

    q: np.ndarray
    lambdas: np.ndarray


def _canonical_signs(u: np.ndarray, v: np.ndarray) -> None:
    # Largest-magnitude entry of each left vector made positive; argmax picks
    # the lowest index on ties.
    if u.size == 0:
        return
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    u *= signs
    v *= signs


def svd(a, rank_tol: float | None = None) -> SvdFactors:
    """Full singular value decomposition with canonical singular-vector signs.

    Parameters
    ----------
    a : array_like
        Finite real matrix.
    rank_tol : float, optional
        Relative cutoff in [0, 1); singular values above ``rank_tol * sigma_1``
        count toward the numerical rank. Defaults to
        ``1e-10 * max(rows, cols)``.

    Raises
    ------
    ConvergenceError
        If LAPACK's divide-and-conquer and QR-iteration drivers both fail.
    """
    a = as_matrix(a)
    if rank_tol is None:
        rank_tol = default_rank_tol(a.shape)
    if not 0.0 <= rank_tol < 1.0:
        raise ValueError(f"rank_tol must lie in [0, 1), got {rank_tol}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                f"SVD of {a.shape} matrix did not converge in either LAPACK driver "
                f"(gesdd, gesvd; internal sweep cap 30*min(rows, cols) = {30 * min(a.shape)})"
            ) from exc
    v = vt.T.copy()
    u = u.copy()
    _canonical_signs(u, v)
    s = np.maximum(s, 0.0)
    rank = int(np.count_nonzero(s > rank_tol * s[0])) if s[0] > 0 else 0
    return SvdFactors(u=u, sigmas=s, v=v, numerical_rank=rank, rank_tol=float(rank_tol))


def singular_values(a) -> np.ndarray:
    return np.linalg.svd(as_matrix(a), compute_uv=False)


def symmetrize(s, tol: float = SYMMETRY_TOL) -> tuple[np.ndarray, float]:
    """Return ``(s + s.T) / 2`` and the asymmetry ``||s - s.T||_F``.

    Raises ``ValueError`` when the asymmetry exceeds ``tol * max(1, ||s||_F)``.
    """
    s = as_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got {s.shape}")
    asym = float(np.linalg.norm(s - s.T))
    if asym > tol * max(1.0, float(np.linalg.norm(s))):
        raise ValueError(f"matrix is not symmetric (||S - S^T||_F = {asym:.3e})")
    return 0.5 * (s + s.T), asym


def sym_eig(s) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order."""
    s, _ = symmetrize(s)
    lam, q = np.linalg.eigh(s)
    return SymEig(q=q[:, ::-1].copy(), lambdas=lam[::-1].copy())


def frobenius_inner(a, b) -> float:
    """Frobenius inner product ``sum_jk a_jk b_jk``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_same_shape(a, b)
    return float(np.sum(a * b))


def schatten_norm(a, p: float) -> float:
    """Schatten p-norm of ``a``.

    ``p = 1`` is the nuclear norm, ``p = 2`` the Frobenius norm and
    ``p = inf`` the operator norm. For ``0 < p < 1`` the quasi-norm is
    returned as written.
    """
    if not (p > 0):
        raise ValueError(f"p must be positive, got {p}")
    s = singular_values(a)
    if math.isinf(p):
        return float(s[0])
    if s[0] == 0.0:
        return 0.0
    # scale by sigma_1 to avoid overflow for large p
    return float(s[0] * np.sum((s / s[0]) ** p) ** (1.0 / p))


def nuclear_norm(a) -> float:
    return float(np.sum(singular_values(a)))


def operator_norm(a) -> float:
    return float(singular_values(a)[0])


def sgn(a, rank_tol: float | None = None) -> np.ndarray:
    """Sum of ``u_j v_j^T`` over the numerically nonzero singular values.

    This is the matrix with ``<sgn(a), a>_F = ||a||_*`` and ``||sgn(a)|| <= 1``.
    """
    f = svd(a, rank_tol)
    u, _, v = f.truncated()
    return u @ v.T


def sym_expm(s) -> np.ndarray:
    """Exponential of a symmetric matrix through its eigendecomposition."""
    e = sym_eig(s)
    return (e.q * np.exp(e.lambdas)) @ e.q.T


def sym_logm(s) -> np.ndarray:
    """Logarithm of a symmetric positive definite matrix.

    Raises ``ValueError`` reporting the smallest eigenvalue when ``s`` is not
    positive definite.
    """
    e = sym_eig(s)
    lam_min = float(e.lambdas[-1])
    if not lam_min > 0.0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {lam_min:.3e})")
    return (e.q * np.log(e.lambdas)) @ e.q.T


def expm(a) -> np.ndarray:
    """Exponential of a general square matrix (Pade scaling and squaring)."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    return scipy.linalg.expm(a)


def singular_triangle_gap(a, b) -> tuple[float, float]:
    """``(sum |s_j(a) - s_j(b)|, sum s_j(a - b))``; the first never exceeds the second."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_same_shape(a, b)
    lhs = float(np.sum(np.abs(singular_values(a) - singular_values(b))))
    rhs = nuclear_norm(a - b)
    return lhs, rhs


def eigen_triangle_gap(a, b) -> tuple[float, float]:
    """Symmetric analogue: ``(sum |l_j(a) - l_j(b)|, ||a - b||_*)`` with sorted eigenvalues."""
    la = sym_eig(a).lambdas
    lb = sym_eig(b).lambdas
    _check_same_shape(np.atleast_2d(la), np.atleast_2d(lb))
    return float(np.sum(np.abs(la - lb))), nuclear_norm(as_matrix(a) - as_matrix(b))


def nuclear_duality_gap(a, probes: int, rng: RngStream, batch: int = 4096) -> tuple[float, float]:
    """Compare random dual probes with the SVD maximizer of ``<a, b>_F``.

    Returns ``(best_probe, exact)``: ``best_probe`` is the largest
    ``<a, b>_F`` over ``probes`` Gaussian matrices rescaled to operator norm
    one; ``exact`` is ``<a, u v^T>_F`` built from the full SVD of ``a``.
    """
    a = as_matrix(a)
    if probes < 1:
        raise ValueError("probes must be >= 1")
    f = svd(a)
    exact = float(np.sum(a * (f.u @ f.v.T)))
    best = -np.inf
    done = 0
    while done < probes:
        k = min(batch, probes - done)
        b = rng.normal((k,) + a.shape)
        norms = np.linalg.norm(b, ord=2, axis=(1, 2))
        vals = np.einsum("ij,kij->k", a, b) / norms
        best = max(best, float(vals.max()))
        done += k
    return best, exact
