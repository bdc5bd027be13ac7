"""Classical depth losses and their covariance-kernel reductions.

The negative log likelihood of the low-rank Gaussian collapses onto three
widely used losses for special factor choices:

  * zero factor        -> plain squared error,
  * all-ones factor    -> scale-invariant loss with
                          alpha = (N/sigma^2) / (N/sigma^2 + 1),
  * spectral factor of the inverse second-difference kernel
                       -> squared-gradient loss.

``check_reduction`` quantifies each claim by fitting the best affine map
from the classical loss to the NLL over a probe set and reporting the
worst residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .gaussian import LowRankGaussian, nll_lowrank
from .rng import CounterRng

FORWARD = "forward"
DIRICHLET = "dirichlet"


def _residual(mu, z) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if mu.shape != z.shape or mu.ndim != 1:
        raise DimensionMismatchError(
            f"mu and z must be vectors of equal length, got {mu.shape} and {z.shape}"
        )
    return z - mu


def l2_loss(mu, z) -> float:
    """Unnormalized squared error r.T @ r with r = z - mu."""
    r = _residual(mu, z)
    return float(r @ r)


def si_loss(mu, z, sigma: float) -> float:
    """Scale-invariant loss r.T r - (alpha/N) (r.T 1)^2.

    alpha = (N/sigma^2) / (N/sigma^2 + 1); as N/sigma^2 grows the loss
    becomes insensitive to a constant shift of the residual.
    """
    r = _residual(mu, z)
    n = r.size
    sigma = float(sigma)
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    ratio = n / (sigma * sigma)
    alpha = ratio / (ratio + 1.0)
    s = r.sum()
    return float(r @ r - (alpha / n) * s * s)


def gradient_loss(mu, z, boundary: str = FORWARD) -> float:
    """Squared first-difference loss of the residual, O(N).

    ``forward`` sums squared consecutive differences only ((N-1) terms);
    ``dirichlet`` additionally charges the two boundary values, making the
    quadratic form the full tridiagonal second-difference kernel
    tridiag(-1, 2, -1), which is the convention with a closed-form inverse
    (see j_matrix).
    """
    r = _residual(mu, z)
    if r.size < 2:
        raise DimensionMismatchError("gradient_loss needs at least 2 entries")
    diffs = np.diff(r)
    total = float(diffs @ diffs)
    if boundary == FORWARD:
        return total
    if boundary == DIRICHLET:
        return total + float(r[0] * r[0] + r[-1] * r[-1])
    raise ValueError(f"boundary must be '{FORWARD}' or '{DIRICHLET}', got {boundary!r}")


def difference_matrix(n: int, boundary: str = FORWARD) -> np.ndarray:
    """Explicit first-difference operator whose Gram matrix the loss uses.

    forward: (n-1) x n rows (..., -1, 1, ...).
    dirichlet: (n+1) x n, same interior rows plus boundary rows so that
    D.T @ D = tridiag(-1, 2, -1).
    """
    n = int(n)
    if n < 2:
        raise DimensionMismatchError("difference_matrix needs n >= 2")
    interior = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    interior[idx, idx] = -1.0
    interior[idx, idx + 1] = 1.0
    if boundary == FORWARD:
        return interior
    if boundary == DIRICHLET:
        first = np.zeros((1, n))
        first[0, 0] = 1.0
        last = np.zeros((1, n))
        last[0, -1] = -1.0
        return np.vstack([first, interior, last])
    raise ValueError(f"boundary must be '{FORWARD}' or '{DIRICHLET}', got {boundary!r}")


def j_matrix(n: int) -> np.ndarray:
    """Inverse of the tridiag(-1, 2, -1) kernel: J_ij = min(i,j) - ij/(n+1)
    with 1-based indices."""
    n = int(n)
    if n < 1:
        raise DimensionMismatchError("j_matrix needs n >= 1")
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.minimum.outer(i, i) - np.outer(i, i) / (n + 1)


def j_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues of j_matrix(n) in decreasing order:
    lambda_l = 1 / (2 - 2 cos(l pi / (n+1))), l = 1..n."""
    n = int(n)
    l = np.arange(1, n + 1, dtype=np.float64)
    return 1.0 / (2.0 - 2.0 * np.cos(l * np.pi / (n + 1)))


def j_eigenvectors(n: int) -> np.ndarray:
    """Unit-norm eigenvectors of j_matrix(n), column l for eigenvalue l.

    Column l is the sine mode sin(k l pi / (n+1)), k = 1..n, scaled by
    sqrt(2/(n+1)) to unit length.  The columns are mutually orthonormal.
    """
    n = int(n)
    k = np.arange(1, n + 1, dtype=np.float64)[:, None]
    l = np.arange(1, n + 1, dtype=np.float64)[None, :]
    u = np.sin(k * l * np.pi / (n + 1))
    return u * math.sqrt(2.0 / (n + 1))


def gradient_psi(n: int, m: int) -> np.ndarray:
    """Rank-m spectral factor of j_matrix(n): column l is
    sqrt(lambda_l) times the unit eigenvector for the l-th largest
    eigenvalue.  With m = n, psi @ psi.T reconstructs J exactly.
    """
    n, m = int(n), int(m)
    if not 1 <= m <= n:
        raise DimensionMismatchError(f"need 1 <= m <= n, got m={m}, n={n}")
    lam = j_eigenvalues(n)[:m]
    vecs = j_eigenvectors(n)[:, :m]
    return vecs * np.sqrt(lam)


@dataclass(frozen=True)
class ReductionReport:
    """Outcome of one reduction check over a probe set.

    nll_value and classical_value are probe-set means; affine_gap is the
    worst absolute residual after the best-fit map a*classical + b -> nll.
    """

    nll_value: float
    classical_value: float
    affine_gap: float


_KINDS = ("l2", "si", "gradient")


def check_reduction(
    kind: str,
    n: int,
    sigma: float,
    probe_count: int,
    rng: CounterRng,
    m: int | None = None,
) -> ReductionReport:
    """Measure how affinely the NLL tracks a classical loss.

    Draws ``probe_count`` standard-normal residual vectors, evaluates the
    NLL under the factor the reduction prescribes (zero, all-ones, or
    gradient_psi(n, m)) and the classical loss (squared error,
    scale-invariant loss in its alpha = 1 textbook form, or Dirichlet
    gradient loss), then reports the worst residual of the least-squares
    affine fit from classical to NLL values.

    ``m`` only applies to the gradient kind and defaults to n (exact
    kernel reconstruction); smaller m truncates the spectrum and widens
    the gap.
    """
    kind = str(kind).lower()
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    n = int(n)
    probe_count = int(probe_count)
    if n < 2:
        raise DimensionMismatchError("check_reduction needs n >= 2")
    if probe_count < 8:
        raise ValueError(f"probe_count must be >= 8, got {probe_count}")

    mu = np.zeros(n)
    if kind == "l2":
        psi = np.zeros((n, 1))
    elif kind == "si":
        psi = np.ones((n, 1))
    else:
        psi = gradient_psi(n, n if m is None else m)
    g = LowRankGaussian(mu=mu, psi=psi, sigma=sigma)

    probes = rng.normals((probe_count, n))
    nll_vals = np.array([nll_lowrank(g, row) for row in probes])
    if kind == "l2":
        classical = np.array([l2_loss(mu, row) for row in probes])
    elif kind == "si":
        sums = probes.sum(axis=1)
        classical = (probes * probes).sum(axis=1) - sums * sums / n
    else:
        classical = np.array([gradient_loss(mu, row, DIRICHLET) for row in probes])

    design = np.column_stack([classical, np.ones(probe_count)])
    coef, *_ = np.linalg.lstsq(design, nll_vals, rcond=None)
    gap = float(np.abs(design @ coef - nll_vals).max())
    return ReductionReport(
        nll_value=float(nll_vals.mean()),
        classical_value=float(classical.mean()),
        affine_gap=gap,
    )
