"""Epsilon-nets on the sphere, the ball, the Stiefel manifold and the set of
rank-r matrices in the Frobenius unit ball, plus the net-based operator norm
bound.

Nets are built by randomized greedy packing: candidates are drawn uniformly
and kept when they are at distance at least ``eps`` from every kept point.
A maximal packing of that kind is also an ``eps``-covering. Construction stops
after ``max(50 * |net|, MIN_STREAK)`` consecutive rejections; the floor keeps
uncovered regions of measure above about 1e-4 from surviving.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import csvio
from .rng import RngStream

DEFAULT_CAP = 1_000_000
REJECTION_FACTOR = 50
MIN_STREAK = 200_000


@dataclass(frozen=True)
class Net:
    """Finite net with its ambient descriptor.

    ``ambient`` is one of ``("sphere", n)``, ``("ball", n)``,
    ``("stiefel", n, k)`` or ``("lowrank", n, N, r)``. ``elements`` is an
    array whose leading axis enumerates net points: vectors for sphere and
    ball, ``k x n`` matrices with orthonormal rows for Stiefel, ``n x N``
    matrices for the low-rank set.
    """

    ambient: tuple
    eps: float
    elements: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.elements.shape[0])

    @property
    def kind(self) -> str:
        return self.ambient[0]

    def cardinality_bound(self) -> float:
        kind = self.ambient[0]
        if kind in ("sphere", "ball"):
            return (1.0 + 2.0 / self.eps) ** self.ambient[1]
        if kind == "stiefel":
            _, n, k = self.ambient
            return (1.0 + 2.0 / self.eps) ** (n * k)
        _, n, N, r = self.ambient
        return (1.0 + 10.0 / self.eps) ** (r * (n + N + 1))

    def to_csv(self) -> str:
        return csvio.matrix_to_csv(self.elements.reshape(len(self), -1))

    def sidecar_json(self) -> str:
        return json.dumps({"ambient": list(self.ambient), "eps": self.eps,
                           "element_shape": list(self.elements.shape[1:])})

    @classmethod
    def from_files(cls, csv_text: str, sidecar: str) -> "Net":
        d = json.loads(sidecar)
        flat = csvio.matrix_from_csv(csv_text)
        return cls(tuple(d["ambient"]), float(d["eps"]), flat.reshape((-1,) + tuple(d["element_shape"])))


def _check_cap(bound: float, cap: int) -> None:
    if bound > cap:
        raise ValueError(f"net cardinality bound {bound:.4g} exceeds cap {cap}")


def _stop_after(size: int) -> int:
    return max(REJECTION_FACTOR * size, MIN_STREAK)


def _greedy_packing(draw: Callable[[int], np.ndarray], eps: float, batch: int = 4096) -> np.ndarray:
    kept = np.empty((0, 0))
    streak = 0
    while True:
        cand = draw(batch)
        if kept.shape[0] == 0:
            kept = cand[:1]
            cand = cand[1:]
        d2 = _min_sq_dist(cand, kept)
        ok = np.flatnonzero(d2 >= eps * eps)
        prev = -1
        added = []
        for i in ok:
            # rejections between the previous accept and this candidate
            streak += i - prev - 1
            prev = i
            if streak >= _stop_after(kept.shape[0] + len(added)):
                break
            x = cand[i]
            if added and np.min(np.sum((np.array(added) - x) ** 2, axis=1)) < eps * eps:
                streak += 1
                continue
            added.append(x)
            streak = 0
        else:
            streak += len(cand) - prev - 1
        if added:
            kept = np.vstack([kept, np.array(added)])
        if streak >= _stop_after(kept.shape[0]):
            return kept


def _min_sq_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.full(x.shape[0], np.inf)
    for start in range(0, y.shape[0], 2048):
        yy = y[start:start + 2048]
        d = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ yy.T + np.sum(yy * yy, axis=1)[None, :]
        out = np.minimum(out, d.min(axis=1))
    return np.maximum(out, 0.0)


def _uniform_sphere(rng: RngStream, n: int, k: int) -> np.ndarray:
    g = rng.normal((k, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _uniform_ball(rng: RngStream, n: int, k: int) -> np.ndarray:
    return _uniform_sphere(rng, n, k) * rng.uniform((k, 1)) ** (1.0 / n)


def sphere_net(n: int, eps: float, rng: RngStream, cap: int = DEFAULT_CAP) -> Net:
    """Greedy ``eps``-packing of the unit sphere in R^n (an ``eps``-net).

    Raises ``ValueError`` if the cardinality bound ``(1 + 2/eps)^n`` exceeds ``cap``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    _check_cap((1.0 + 2.0 / eps) ** n, cap)
    pts = _greedy_packing(lambda k: _uniform_sphere(rng, n, k), eps)
    return Net(("sphere", n), eps, pts)


def ball_net(n: int, eps: float, rng: RngStream, cap: int = DEFAULT_CAP) -> Net:
    """Greedy ``eps``-packing of the closed unit ball in R^n."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    _check_cap((1.0 + 2.0 / eps) ** n, cap)
    pts = _greedy_packing(lambda k: _uniform_ball(rng, n, k), eps)
    return Net(("ball", n), eps, pts)


def dist_2inf(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Largest row-wise Euclidean distance, batched over leading axes."""
    return np.sqrt(np.max(np.sum((a - b) ** 2, axis=-1), axis=-1))


def _orthonormalize_rows(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal-row surrogates of a batch of ``k x n`` matrices.

    Returns the polar factor (Frobenius-nearest point) and the row
    Gram-Schmidt factor with signs matched to the diagonal.
    """
    w, _, zt = np.linalg.svd(u, full_matrices=False)
    polar = w @ zt
    q, r = np.linalg.qr(np.swapaxes(u, -1, -2))
    signs = np.where(np.diagonal(r, axis1=-2, axis2=-1) < 0, -1.0, 1.0)
    gs = np.swapaxes(q * signs[..., None, :], -1, -2)
    return polar, gs


def stiefel_net(n: int, k: int, eps: float, rng: RngStream, cap: int = DEFAULT_CAP) -> Net:
    """Net of ``k x n`` matrices with orthonormal rows, radius ``2 eps`` in the max-row distance.

    Every ``k``-tuple of an ``eps``-net of the sphere is projected onto the
    manifold (the closer of the polar and Gram-Schmidt factors in the
    max-row distance) and kept only if that distance is at most ``eps``.
    ``meta["projection_dist"]`` records the achieved distance per element.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    _check_cap((1.0 + 2.0 / eps) ** (n * k), cap)
    base = sphere_net(n, eps, rng, cap).elements
    kept, dists = [], []
    combos = itertools.product(range(len(base)), repeat=k)
    while True:
        chunk = list(itertools.islice(combos, 8192))
        if not chunk:
            break
        u = base[np.array(chunk)]  # (b, k, n)
        polar, gs = _orthonormalize_rows(u)
        dp = dist_2inf(u, polar)
        dg = dist_2inf(u, gs)
        best = np.where((dp <= dg)[:, None, None], polar, gs)
        d = np.minimum(dp, dg)
        keep = d <= eps
        kept.append(best[keep])
        dists.append(d[keep])
    elements = np.concatenate(kept) if kept else np.empty((0, k, n))
    return Net(("stiefel", n, k), eps, elements, meta={"projection_dist": np.concatenate(dists)})


def lowrank_net(n: int, N: int, r: int, rho: float, rng: RngStream, cap: int = DEFAULT_CAP) -> Net:
    """``rho``-net in Frobenius norm of rank-``r`` matrices with ``||A||_F <= 1``.

    Elements are ``U^T diag(s) V`` with ``U, V`` from Stiefel nets at
    ``rho/5`` and ``s`` from a ``rho/5``-net of the unit ball in R^r.
    """
    if not 1 <= r <= min(n, N):
        raise ValueError("need 1 <= r <= min(n, N)")
    if not 0.0 < rho < 5.0:
        raise ValueError("rho must lie in (0, 5)")
    _check_cap((1.0 + 10.0 / rho) ** (r * (n + N + 1)), cap)
    e = rho / 5.0
    us = stiefel_net(n, r, e, rng, cap).elements  # (a, r, n)
    vs = stiefel_net(N, r, e, rng, cap).elements  # (b, r, N)
    ss = ball_net(r, e, rng, cap).elements        # (c, r)
    # (a, c, n, r) scaled left factors, then contract with right factors
    left = np.swapaxes(us, 1, 2)[:, None, :, :] * ss[None, :, None, :]
    el = np.einsum("acir,brj->acbij", left, vs).reshape(-1, n, N)
    return Net(("lowrank", n, N, r), rho, el, meta={"factor_sizes": (len(us), len(vs), len(ss))})


def net_operator_norm_bound(apply: Union[Callable, np.ndarray], net: Net, eps: float | None = None) -> float:
    """Upper bound ``max_z ||A z|| / (1 - eps)`` on the operator norm from a sphere net."""
    eps = net.eps if eps is None else eps
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if net.kind != "sphere":
        raise ValueError("operator norm bound needs a sphere net")
    if callable(apply):
        vals = np.array([np.linalg.norm(apply(z)) for z in net.elements])
    else:
        vals = np.linalg.norm(net.elements @ np.asarray(apply, dtype=float).T, axis=1)
    return float(vals.max() / (1.0 - eps))


def covering_radius_estimate(net: Net, samples: np.ndarray) -> float:
    """Largest distance from a sample point to its nearest net element.

    Euclidean for vector nets, max-row distance for Stiefel nets and
    Frobenius for low-rank nets.
    """
    if net.kind == "stiefel":
        worst = 0.0
        for s in samples:
            worst = max(worst, float(dist_2inf(net.elements, s[None]).min()))
        return worst
    x = samples.reshape(len(samples), -1)
    y = net.elements.reshape(len(net), -1)
    return float(np.sqrt(_min_sq_dist(x, y)).max())
