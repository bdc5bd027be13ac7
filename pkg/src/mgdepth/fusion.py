"""Equal-weight mixtures of low-rank Gaussians and their single-Gaussian
moment-matched approximation.

The exact mixture NLL comes from a log-sum-exp over component densities.
The moment-matched collapse keeps the mixture mean and, by the law of
total variance, packs the mixture covariance into one widened factor

    psi_bar = concat(psi_1, ..., psi_S, mu_1 - mu_bar, ..., mu_S - mu_bar)
              / sqrt(S)

so the result is again a LowRankGaussian (of width S*m + S) and both the
approximation and its error stay measurable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError
from .gaussian import LowRankGaussian, nll_lowrank

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianEnsemble:
    """S equally weighted components sharing dimension, rank and sigma."""

    components: tuple[LowRankGaussian, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DegenerateInputError("ensemble needs at least one component")
        first = comps[0]
        for g in comps[1:]:
            if g.n != first.n or g.m != first.m:
                raise DimensionMismatchError(
                    "ensemble components must share n and m; "
                    f"got ({g.n}, {g.m}) vs ({first.n}, {first.m})"
                )
            if g.sigma != first.sigma:
                raise DimensionMismatchError(
                    f"ensemble components must share sigma; got {g.sigma} vs {first.sigma}"
                )
        object.__setattr__(self, "components", comps)

    @property
    def size(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return self.components[0].n

    @property
    def sigma(self) -> float:
        return self.components[0].sigma


def ensemble_nll(e: GaussianEnsemble, z) -> float:
    """Exact mixture NLL, -log mean_s exp(-nll_s), stabilized by
    subtracting the largest log density before exponentiating."""
    log_dens = np.array([-nll_lowrank(g, z) for g in e.components])
    peak = log_dens.max()
    return float(-(peak + np.log(np.exp(log_dens - peak).mean())))


def fuse(e: GaussianEnsemble, truncate_to: int | None = None) -> LowRankGaussian:
    """Moment-matched single Gaussian of the mixture.

    The fused covariance psi_bar @ psi_bar.T + sigma^2 I equals the exact
    mixture covariance (mean of component covariances plus the spread of
    component means).  By default the factor keeps its full width
    S*m + S; pass ``truncate_to`` to keep only that many leading singular
    directions of psi_bar, trading covariance mass for width.
    """
    comps = e.components
    s = len(comps)
    mu_bar = np.mean([g.mu for g in comps], axis=0)
    blocks = [g.psi for g in comps] + [(g.mu - mu_bar).reshape(-1, 1) for g in comps]
    psi_bar = np.hstack(blocks) / np.sqrt(s)
    if truncate_to is not None:
        width = psi_bar.shape[1]
        if not 0 <= truncate_to <= width:
            raise DimensionMismatchError(
                f"truncate_to must be in [0, {width}], got {truncate_to}"
            )
        u, svals, _ = np.linalg.svd(psi_bar, full_matrices=False)
        psi_bar = u[:, :truncate_to] * svals[:truncate_to]
    return LowRankGaussian(mu=mu_bar, psi=psi_bar, sigma=e.sigma)


def diagonal_nll(mu, stds, z) -> float:
    """NLL of z under independent per-pixel Gaussians N(mu_i, stds_i^2)."""
    mu = np.asarray(mu, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if not (mu.shape == stds.shape == z.shape) or mu.ndim != 1:
        raise DimensionMismatchError(
            f"mu, stds and z must be vectors of one length, got "
            f"{mu.shape}, {stds.shape}, {z.shape}"
        )
    if not (stds > 0.0).all():
        raise ValueError("per-pixel stds must be strictly positive")
    resid = (z - mu) / stds
    return float(
        0.5 * mu.size * _LOG_2PI + np.log(stds).sum() + 0.5 * (resid @ resid)
    )


def nll_comparison(e: GaussianEnsemble, z, baseline_diag_sigma) -> tuple[float, float]:
    """(moment-matched fused NLL, independent diagonal-baseline NLL) of z.

    The baseline shares the fused mean and uses the supplied per-pixel
    standard deviations, so matched marginals isolate the value of the
    off-diagonal covariance.
    """
    fused = fuse(e)
    fused_nll = nll_lowrank(fused, z)
    diag = diagonal_nll(fused.mu, baseline_diag_sigma, z)
    return fused_nll, diag
