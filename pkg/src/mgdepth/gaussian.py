"""Low-rank multivariate Gaussian core.

A distribution over N pixel depths with covariance ``psi @ psi.T +
sigma**2 * I`` is represented by the factor ``psi`` (N x M, M usually far
below N) and the noise level ``sigma``.  Log-density, solves and the
log-determinant all route through the M x M capacitance matrix

    A = psi.T @ psi / sigma**2 + I_M

so their cost is O(N*M + M**3) instead of O(N**3).  A dense representation
is kept alongside as the brute-force oracle for testing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs, dtrtrs

from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .rng import CounterRng

_LOG_2PI = math.log(2.0 * math.pi)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LowRankGaussian:
    """Gaussian with mean ``mu`` and covariance ``psi @ psi.T + sigma**2 I``.

    ``mu`` has shape (n,), ``psi`` shape (n, m) with m >= 0, and
    ``sigma > 0`` strictly, which keeps the covariance positive definite.
    m = 0 (an empty factor) is the independent-pixel diagonal case.  Arrays
    are copied and marked read-only on construction; instances are
    immutable and safe to share across threads.

    Note m may exceed n: fusing an ensemble of S members produces a factor
    of width S*m + S, which at small n is wider than n.  Every operation
    here is valid for any m >= 0.
    """

    mu: np.ndarray
    psi: np.ndarray
    sigma: float

    def __post_init__(self):
        mu = _as_readonly(np.atleast_1d(self.mu))
        psi = np.asarray(self.psi, dtype=np.float64)
        if psi.ndim == 1:
            psi = psi.reshape(-1, 1)
        psi = _as_readonly(psi)
        if mu.ndim != 1 or mu.size == 0:
            raise DimensionMismatchError("mu must be a non-empty vector")
        if psi.ndim != 2 or psi.shape[0] != mu.size:
            raise DimensionMismatchError(
                f"psi must have shape ({mu.size}, m), got {psi.shape}"
            )
        sigma = float(self.sigma)
        if not (sigma > 0.0):
            raise ValueError(f"sigma must be strictly positive, got {sigma}")
        if not np.isfinite(mu).all() or not np.isfinite(psi).all():
            raise ValueError("mu and psi must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def m(self) -> int:
        return self.psi.shape[1]


@dataclass(frozen=True)
class DenseGaussian:
    """Explicit (mu, Sigma) pair; the O(N**3) oracle representation.

    ``sigma_full`` must be symmetric to within 1e-12 relative.  Positive
    definiteness is verified where the matrix is factorized (nll_dense)
    rather than on construction, so building an oracle stays cheap.
    """

    mu: np.ndarray
    sigma_full: np.ndarray

    def __post_init__(self):
        mu = _as_readonly(np.atleast_1d(self.mu))
        cov = _as_readonly(self.sigma_full)
        if mu.ndim != 1 or mu.size == 0:
            raise DimensionMismatchError("mu must be a non-empty vector")
        if cov.shape != (mu.size, mu.size):
            raise DimensionMismatchError(
                f"sigma_full must be ({mu.size}, {mu.size}), got {cov.shape}"
            )
        scale = np.abs(cov).max() if cov.size else 0.0
        if np.abs(cov - cov.T).max() > 1e-12 * max(1.0, scale):
            raise ValueError("sigma_full is not symmetric to 1e-12 relative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_full", cov)

    @property
    def n(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class CholeskyWorkspace:
    """Capacitance matrix ``a = psi.T @ psi / sigma**2 + I`` and its lower
    Cholesky factor ``l``."""

    a: np.ndarray
    l: np.ndarray


def capacitance(g: LowRankGaussian) -> CholeskyWorkspace:
    """Form and factor the capacitance matrix of ``g``.

    Raises NotPositiveDefiniteError if the factorization fails, which for a
    validated LowRankGaussian can only happen on non-finite intermediate
    values.
    """
    m = g.m
    if m == 0:
        empty = np.zeros((0, 0))
        return CholeskyWorkspace(a=empty, l=empty)
    a = g.psi.T @ g.psi
    a *= 1.0 / (g.sigma * g.sigma)
    a.flat[:: m + 1] += 1.0
    lower, info = dpotrf(a, lower=1)
    diag = np.diag(lower)
    if info != 0 or not np.isfinite(diag).all() or (diag <= 0.0).any():
        raise NotPositiveDefiniteError(
            f"capacitance Cholesky failed (info={info}); inputs non-finite?"
        )
    return CholeskyWorkspace(a=a, l=lower)


def _check_vector(g: LowRankGaussian, v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (g.n,):
        raise DimensionMismatchError(f"{name} must have shape ({g.n},), got {v.shape}")
    return v


def nll_lowrank(g: LowRankGaussian, z) -> float:
    """Negative log density of ``z`` under ``g`` in O(N*M + M**3).

    Follows the capacitance route: with r = z - mu, p = psi.T @ r and
    A = L @ L.T,

        nll = N/2 log(2 pi sigma^2) + sum_i log L_ii
              + r.T r / (2 sigma^2) - q.T q / (2 sigma^4),   q = L \\ p.

    Agrees with the dense oracle to ~1e-9 absolute at desk scale.
    """
    z = _check_vector(g, z, "z")
    sigma = g.sigma
    n, m = g.n, g.m
    r = z - g.mu
    half_quad = 0.5 * (r @ r) / (sigma * sigma)
    const = 0.5 * n * (_LOG_2PI + 2.0 * math.log(sigma))
    if m == 0:
        return float(const + half_quad)
    p = g.psi.T @ r
    ws = capacitance(g)
    q, info = dtrtrs(ws.l, p, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"triangular solve failed (info={info})")
    correction = 0.5 * (q @ q) / sigma ** 4
    return float(const + np.log(np.diag(ws.l)).sum() + half_quad - correction)


def nll_dense(g: DenseGaussian, z) -> float:
    """Negative log density via explicit factorization of the full N x N
    covariance; O(N**3).  This is the oracle nll_lowrank is tested against.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (g.n,):
        raise DimensionMismatchError(f"z must have shape ({g.n},), got {z.shape}")
    lower, info = dpotrf(g.sigma_full, lower=1)
    diag = np.diag(lower)
    if info != 0 or not np.isfinite(diag).all() or (diag <= 0.0).any():
        raise NotPositiveDefiniteError(f"covariance is not SPD (info={info})")
    r = z - g.mu
    q, info = dtrtrs(lower, r, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"triangular solve failed (info={info})")
    return float(0.5 * g.n * _LOG_2PI + np.log(diag).sum() + 0.5 * (q @ q))


def dense_covariance(g: LowRankGaussian) -> DenseGaussian:
    """Materialize ``g`` as an explicit (mu, Sigma) pair."""
    cov = g.psi @ g.psi.T
    cov += (g.sigma * g.sigma) * np.eye(g.n)
    cov = 0.5 * (cov + cov.T)
    return DenseGaussian(mu=g.mu, sigma_full=cov)


def lowrank_logdet(g: LowRankGaussian) -> float:
    """log det(psi psi.T + sigma^2 I) = 2 N log sigma + 2 sum_i log L_ii."""
    base = 2.0 * g.n * math.log(g.sigma)
    if g.m == 0:
        return float(base)
    ws = capacitance(g)
    return float(base + 2.0 * np.log(np.diag(ws.l)).sum())


def woodbury_solve(g: LowRankGaussian, v) -> np.ndarray:
    """Solve Sigma x = v without forming Sigma, in O(N*M + M**3).

    x = v / sigma^2 - psi @ (A^-1 @ (psi.T @ v)) / sigma^4.
    """
    v = _check_vector(g, v, "v")
    inv_s2 = 1.0 / (g.sigma * g.sigma)
    if g.m == 0:
        return inv_s2 * v
    ws = capacitance(g)
    p = g.psi.T @ v
    x, info = dpotrs(ws.l, p, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"capacitance solve failed (info={info})")
    return inv_s2 * v - (inv_s2 * inv_s2) * (g.psi @ x)


def sample(g: LowRankGaussian, rng: CounterRng, count: int) -> np.ndarray:
    """Draw ``count`` vectors z = mu + psi @ eps_m + sigma * eps_n.

    eps_m and eps_n are independent standard normal blocks drawn from
    ``rng`` in that order (all eps_m rows first, then all eps_n rows).
    Returns an array of shape (count, n).  count must be >= 1.
    """
    count = int(count)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    eps_m = rng.normals((count, g.m))
    eps_n = rng.normals((count, g.n))
    return g.mu + eps_m @ g.psi.T + g.sigma * eps_n


def covariance_row(g: LowRankGaussian, i: int) -> np.ndarray:
    """Row ``i`` of the covariance, psi @ psi[i] + sigma^2 e_i, in O(N*M)."""
    i = int(i)
    if not 0 <= i < g.n:
        raise IndexError(f"pixel index {i} out of range [0, {g.n})")
    row = g.psi @ g.psi[i]
    row[i] += g.sigma * g.sigma
    return row


def marginal_pair(g: LowRankGaussian, a: int, b: int) -> DenseGaussian:
    """Exact 2-d marginal of pixels ``a`` and ``b``."""
    a, b = int(a), int(b)
    for idx in (a, b):
        if not 0 <= idx < g.n:
            raise IndexError(f"pixel index {idx} out of range [0, {g.n})")
    if a == b:
        raise DimensionMismatchError("marginal_pair needs two distinct pixels")
    rows = g.psi[[a, b]]
    cov = rows @ rows.T
    cov += (g.sigma * g.sigma) * np.eye(2)
    cov = 0.5 * (cov + cov.T)
    return DenseGaussian(mu=g.mu[[a, b]], sigma_full=cov)
