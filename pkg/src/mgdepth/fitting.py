"""Analytic NLL gradients, the multi-scale training objective, and a
direct-parameter maximum-likelihood fit.

Gradients follow the standard Gaussian identities.  With w = Sigma^-1 r:

    d/dmu   = -w
    d/dpsi  = Sigma^-1 psi - w (w.T psi),   Sigma^-1 psi = psi A^-1 / sigma^2
    d/dsigma = sigma * (trace(Sigma^-1) - w.T w),
               trace(Sigma^-1) = (n - m + trace(A^-1)) / sigma^2

all evaluated through the capacitance matrix, never materializing Sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg.lapack import dpotrs, dtrtrs

from .errors import DegenerateInputError, DimensionMismatchError, NotPositiveDefiniteError
from .gaussian import LowRankGaussian, capacitance, nll_lowrank, woodbury_solve
from .rng import CounterRng

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NllGradient:
    """Partial derivatives of the NLL with respect to mu, psi and sigma."""

    d_mu: np.ndarray
    d_psi: np.ndarray
    d_sigma: float


@dataclass(frozen=True)
class FitConfig:
    """Settings for fit_mle.

    sigma is the fixed (or initial, when fit_sigma) noise level; None means
    use the pooled residual standard deviation of the samples.
    """

    step_size: float = 1e-2
    iterations: int = 500
    fit_sigma: bool = False
    seed: int = 42
    m: int = 0
    sigma: float | None = None

    def __post_init__(self):
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError(f"step_size must be in (0, 1], got {self.step_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if self.sigma is not None and not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def _trace_a_inv(ws) -> float:
    m = ws.a.shape[0]
    if m == 0:
        return 0.0
    inv_l, info = dtrtrs(ws.l, np.eye(m), lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"triangular solve failed (info={info})")
    # trace(A^-1) = ||L^-1||_F^2 since A^-1 = L^-T L^-1.
    return float((inv_l * inv_l).sum())


def nll_gradients(g: LowRankGaussian, z) -> NllGradient:
    """Exact gradient of nll_lowrank(g, z) in O(N*M**2 + M**3)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (g.n,):
        raise DimensionMismatchError(f"z must have shape ({g.n},), got {z.shape}")
    sigma = g.sigma
    inv_s2 = 1.0 / (sigma * sigma)
    r = z - g.mu
    w = woodbury_solve(g, r)
    if g.m == 0:
        d_psi = np.zeros((g.n, 0))
        trace_inv = inv_s2 * g.n
    else:
        ws = capacitance(g)
        ainv_psi_t, info = dpotrs(ws.l, g.psi.T, lower=1)
        if info != 0:
            raise NotPositiveDefiniteError(f"capacitance solve failed (info={info})")
        d_psi = inv_s2 * ainv_psi_t.T - np.outer(w, g.psi.T @ w)
        trace_inv = inv_s2 * (g.n - g.m + _trace_a_inv(ws))
    d_sigma = sigma * (trace_inv - float(w @ w))
    return NllGradient(d_mu=-w, d_psi=d_psi, d_sigma=float(d_sigma))


def finite_diff_check(g: LowRankGaussian, z, eps: float = 1e-5) -> float:
    """Worst relative disagreement between nll_gradients and central
    finite differences of nll_lowrank over every parameter.

    Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|),
    so parameters with near-zero gradient are compared absolutely.
    """
    eps = float(eps)
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    grad = nll_gradients(g, z)
    worst = 0.0

    def rel(analytic: float, numeric: float) -> float:
        return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))

    for i in range(g.n):
        shift = np.zeros(g.n)
        shift[i] = eps
        hi = nll_lowrank(LowRankGaussian(g.mu + shift, g.psi, g.sigma), z)
        lo = nll_lowrank(LowRankGaussian(g.mu - shift, g.psi, g.sigma), z)
        worst = max(worst, rel(grad.d_mu[i], (hi - lo) / (2 * eps)))
    for i in range(g.n):
        for j in range(g.m):
            shift = np.zeros((g.n, g.m))
            shift[i, j] = eps
            hi = nll_lowrank(LowRankGaussian(g.mu, g.psi + shift, g.sigma), z)
            lo = nll_lowrank(LowRankGaussian(g.mu, g.psi - shift, g.sigma), z)
            worst = max(worst, rel(grad.d_psi[i, j], (hi - lo) / (2 * eps)))
    hi = nll_lowrank(LowRankGaussian(g.mu, g.psi, g.sigma + eps), z)
    lo = nll_lowrank(LowRankGaussian(g.mu, g.psi, g.sigma - eps), z)
    worst = max(worst, rel(grad.d_sigma, (hi - lo) / (2 * eps)))
    return worst


def total_loss(mu_scales, psi, sigma: float, z_gt, include_mse: bool = True) -> float:
    """Training objective over four mean scales sharing one factor.

    Sum of the four per-scale NLLs plus, unless disabled, the mean squared
    error of the first (finest) scale against the target.
    """
    z_gt = np.asarray(z_gt, dtype=np.float64)
    scales = [np.asarray(mu, dtype=np.float64) for mu in mu_scales]
    if len(scales) != 4:
        raise DimensionMismatchError(f"expected 4 mean scales, got {len(scales)}")
    for mu in scales:
        if mu.shape != z_gt.shape:
            raise DimensionMismatchError(
                f"scale shape {mu.shape} does not match target {z_gt.shape}"
            )
    total = sum(
        nll_lowrank(LowRankGaussian(mu, psi, sigma), z_gt) for mu in scales
    )
    if include_mse:
        diff = scales[0] - z_gt
        total += float(diff @ diff) / z_gt.size
    return float(total)


def _mean_nll(mu, psi, sigma, x) -> float:
    """Mean NLL of the rows of x, batched."""
    k, n = x.shape
    m = psi.shape[1]
    r = x - mu
    mean_rr = float((r * r).sum()) / k
    const = 0.5 * n * (_LOG_2PI + 2.0 * math.log(sigma))
    if m == 0:
        return const + 0.5 * mean_rr / (sigma * sigma)
    ws = capacitance(LowRankGaussian(np.zeros(n), psi, sigma))
    p = psi.T @ r.T
    q, info = dtrtrs(ws.l, p, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"triangular solve failed (info={info})")
    mean_qq = float((q * q).sum()) / k
    return (
        const
        + float(np.log(np.diag(ws.l)).sum())
        + 0.5 * mean_rr / (sigma * sigma)
        - 0.5 * mean_qq / sigma ** 4
    )


def _mean_gradients(mu, psi, sigma, x):
    """Gradients of the mean NLL over the rows of x, batched."""
    k, n = x.shape
    m = psi.shape[1]
    inv_s2 = 1.0 / (sigma * sigma)
    r = x - mu
    if m == 0:
        w = inv_s2 * r.T
        d_psi = np.zeros((n, 0))
        trace_inv = inv_s2 * n
    else:
        ws = capacitance(LowRankGaussian(np.zeros(n), psi, sigma))
        p = psi.T @ r.T
        ainv_p, info = dpotrs(ws.l, p, lower=1)
        if info != 0:
            raise NotPositiveDefiniteError(f"capacitance solve failed (info={info})")
        w = inv_s2 * r.T - (inv_s2 * inv_s2) * (psi @ ainv_p)
        ainv_psi_t, info = dpotrs(ws.l, psi.T, lower=1)
        if info != 0:
            raise NotPositiveDefiniteError(f"capacitance solve failed (info={info})")
        d_psi = inv_s2 * ainv_psi_t.T - (w @ (w.T @ psi)) / k
        trace_inv = inv_s2 * (n - m + _trace_a_inv(ws))
    d_mu = -w.mean(axis=1)
    d_sigma = sigma * (trace_inv - float((w * w).sum()) / k)
    return d_mu, d_psi, d_sigma


def fit_mle(
    samples,
    config: FitConfig,
    on_checkpoint: Callable[[int, float], None] | None = None,
) -> LowRankGaussian:
    """Fit a LowRankGaussian to samples by gradient descent on the mean NLL.

    Initialization: mu at the sample mean, psi at seeded noise of scale
    1e-2 (the psi gradient vanishes identically at psi = 0), sigma at
    config.sigma or the pooled residual standard deviation.  Each
    iteration backtracks from the configured step, halving until the mean
    NLL does not increase, so checkpointed NLLs (every 10 iterations,
    reported through ``on_checkpoint``) are non-increasing.  When
    config.fit_sigma is set, sigma is optimized through log sigma to stay
    positive.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(
            f"samples must be a (count, n) array, got shape {x.shape}"
        )
    k, n = x.shape
    if k < 2:
        raise DegenerateInputError(f"need at least 2 samples, got {k}")
    if n < 1:
        raise DimensionMismatchError("samples must have at least one coordinate")
    if not np.isfinite(x).all():
        raise ValueError("samples must be finite")

    rng = CounterRng(config.seed)
    mu = x.mean(axis=0)
    psi = 1e-2 * rng.normals((n, config.m))
    if config.sigma is not None:
        sigma = float(config.sigma)
    else:
        resid = x - mu
        sigma = max(float(np.sqrt((resid * resid).mean())), 1e-3)

    current = _mean_nll(mu, psi, sigma, x)
    for it in range(1, config.iterations + 1):
        d_mu, d_psi, d_sigma = _mean_gradients(mu, psi, sigma, x)
        step = config.step_size
        accepted = False
        for _ in range(60):
            new_mu = mu - step * d_mu
            new_psi = psi - step * d_psi
            if config.fit_sigma:
                # descend in log sigma; d/dlog sigma = sigma * d_sigma
                new_sigma = sigma * math.exp(-step * sigma * d_sigma)
            else:
                new_sigma = sigma
            candidate = _mean_nll(new_mu, new_psi, new_sigma, x)
            if candidate <= current:
                mu, psi, sigma, current = new_mu, new_psi, new_sigma, candidate
                accepted = True
                break
            step *= 0.5
        if on_checkpoint is not None and it % 10 == 0:
            on_checkpoint(it, current)
        if not accepted:
            break
    return LowRankGaussian(mu=mu, psi=psi, sigma=sigma)
