"""Closed-form primitives for multivariate Gaussian densities.

Everything downstream (mixture handling, reduction costs, clustering) is
built on the handful of identities implemented here: density evaluation,
the Kullback-Leibler divergence between two Gaussians, the decomposition
of a product of two Gaussians into a scale factor times a Gaussian, the
expectation of one Gaussian's log density under another, the density
maximum, and the moment-matched merge of a weighted pair.

All covariance work goes through Cholesky factorizations; there is no
silent regularization anywhere.  Callers that need to repair a
borderline covariance (the EM loop does) must do so explicitly via
:func:`jitter`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .constants import SYMMETRY_RTOL, WEIGHT_EXCESS_ATOL

__all__ = [
    "GaussianComponent",
    "ProductDecomposition",
    "log_pdf",
    "pdf",
    "kld_gauss",
    "product_decompose",
    "expected_log",
    "max_value",
    "moment_match_merge",
    "mahalanobis_sq",
    "jitter",
]

_LOG_2PI = math.log(2.0 * math.pi)


def _as_mean(mean) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 1 or mean.size == 0:
        raise ValueError(f"mean must be a non-empty 1-D vector, got shape {mean.shape}")
    return mean


def _as_cov(cov, k: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (k, k):
        raise ValueError(f"cov must have shape ({k}, {k}), got {cov.shape}")
    asym = np.max(np.abs(cov - cov.T))
    if asym > SYMMETRY_RTOL * max(1.0, np.max(np.abs(cov))):
        raise ValueError(f"cov is not symmetric (max asymmetry {asym:.3e})")
    return cov


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """A weighted Gaussian density, immutable once constructed.

    Parameters
    ----------
    weight : float
        Nonnegative mixture weight.  Mixtures additionally require
        strictly positive weights; a bare component may carry weight 0.
    mean : array_like, shape (k,)
    cov : array_like, shape (k, k)
        Symmetric positive definite covariance.  Positive definiteness
        is established by a Cholesky factorization at construction;
        failure raises ``numpy.linalg.LinAlgError``.
    """

    weight: float
    mean: np.ndarray
    cov: np.ndarray
    # Cached Cholesky factor (lower) and log determinant of cov.
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    log_det: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weight = float(self.weight)
        if not np.isfinite(weight) or weight < 0.0:
            raise ValueError(f"weight must be finite and nonnegative, got {weight}")
        if weight > 1.0 + WEIGHT_EXCESS_ATOL:
            raise ValueError(f"weight must not exceed 1, got {weight}")
        mean = _as_mean(self.mean)
        cov = _as_cov(self.cov, mean.size)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("mean and cov must be finite")
        chol = np.linalg.cholesky(cov)  # LinAlgError if not positive definite
        mean = mean.copy()
        cov = cov.copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        chol.flags.writeable = False
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "log_det", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return self.mean.size

    def with_weight(self, weight: float) -> "GaussianComponent":
        """Same density, different weight."""
        return GaussianComponent(weight, self.mean, self.cov)


@dataclass(frozen=True, eq=False)
class ProductDecomposition:
    """Product of two Gaussian densities, written as scale * N(mean_star, cov_star).

    ``scale`` equals the density of one component's mean under a Gaussian
    whose covariance is the sum of the two covariances; it underflows to
    0.0 for widely separated inputs, which downstream code treats as the
    exact limit.
    """

    scale: float
    mean_star: np.ndarray
    cov_star: np.ndarray


def _check_same_dim(a: GaussianComponent, b: GaussianComponent):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _half_maha(chol: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis norms of rows of ``delta`` given a Cholesky factor."""
    z = solve_triangular(chol, delta.T, lower=True)
    return np.einsum("ij,ij->j", z, z)


def log_pdf(c: GaussianComponent, x) -> float | np.ndarray:
    """Log density of ``c`` at ``x``.

    ``x`` may be a single point of shape (k,) or a batch of shape (n, k);
    the result is a scalar or an array of shape (n,) accordingly.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != c.dim:
        raise ValueError(f"point dimension {pts.shape[1]} does not match component dimension {c.dim}")
    quad = _half_maha(c.chol, pts - c.mean)
    out = -0.5 * (c.dim * _LOG_2PI + c.log_det + quad)
    return float(out[0]) if single else out


def pdf(c: GaussianComponent, x) -> float | np.ndarray:
    """Density of ``c`` at ``x`` (see :func:`log_pdf` for shapes)."""
    return np.exp(log_pdf(c, x))


def mahalanobis_sq(c: GaussianComponent, x) -> float | np.ndarray:
    """Squared Mahalanobis distance from ``x`` to the component mean."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != c.dim:
        raise ValueError(f"point dimension {pts.shape[1]} does not match component dimension {c.dim}")
    quad = _half_maha(c.chol, pts - c.mean)
    return float(quad[0]) if single else quad


def kld_gauss(from_: GaussianComponent, to: GaussianComponent) -> float:
    """Kullback-Leibler divergence D(from_ || to) between two Gaussians.

    Closed form::

        1/2 [ log(|S_to| / |S_from|) - k + tr(S_to^-1 S_from)
              + (m_to - m_from)^T S_to^-1 (m_to - m_from) ]

    Always nonnegative; zero iff the densities coincide.
    """
    _check_same_dim(from_, to)
    k = from_.dim
    # tr(S_to^-1 S_from) = || L_to^-1 L_from ||_F^2
    w = solve_triangular(to.chol, from_.chol, lower=True)
    trace_term = float(np.sum(w * w))
    maha = float(_half_maha(to.chol, (to.mean - from_.mean)[None, :])[0])
    return 0.5 * (to.log_det - from_.log_det - k + trace_term + maha)


def product_decompose(a: GaussianComponent, b: GaussianComponent) -> ProductDecomposition:
    """Write the pointwise product of two Gaussian densities as a scaled Gaussian.

    N(x; m_a, S_a) N(x; m_b, S_b) = scale * N(x; m*, S*) with

        scale = N(m_b; m_a, S_a + S_b)
        m*    = m_a + S_a (S_a + S_b)^-1 (m_b - m_a)
        S*    = S_a - S_a (S_a + S_b)^-1 S_a
    """
    _check_same_dim(a, b)
    s = a.cov + b.cov
    chol_s = np.linalg.cholesky(s)
    log_det_s = 2.0 * float(np.sum(np.log(np.diag(chol_s))))
    delta = b.mean - a.mean
    maha = float(_half_maha(chol_s, delta[None, :])[0])
    scale = math.exp(-0.5 * (a.dim * _LOG_2PI + log_det_s + maha))
    # gain = S_a (S_a + S_b)^-1, via two triangular solves
    half = solve_triangular(chol_s, a.cov, lower=True)
    gain = solve_triangular(chol_s.T, half, lower=False).T
    mean_star = a.mean + gain @ delta
    cov_star = a.cov - gain @ a.cov
    cov_star = 0.5 * (cov_star + cov_star.T)
    return ProductDecomposition(scale, mean_star, cov_star)


def expected_log(under: GaussianComponent, of: GaussianComponent) -> float:
    """E_{x ~ under}[ log of(x) ] in closed form.

    Equals -1/2 log|2 pi S_of| - 1/2 tr[ S_of^-1 (S_under + d d^T) ]
    with d the difference of means.
    """
    _check_same_dim(under, of)
    k = under.dim
    w = solve_triangular(of.chol, under.chol, lower=True)
    trace_term = float(np.sum(w * w))
    maha = float(_half_maha(of.chol, (of.mean - under.mean)[None, :])[0])
    return -0.5 * (k * _LOG_2PI + of.log_det + trace_term + maha)


def max_value(c: GaussianComponent) -> float:
    """Maximum of the density, attained at the mean: (2 pi)^(-k/2) |S|^(-1/2)."""
    return math.exp(-0.5 * (c.dim * _LOG_2PI + c.log_det))


def moment_match_merge(a: GaussianComponent, b: GaussianComponent) -> GaussianComponent:
    """Single Gaussian matching the zeroth, first and second moments of a weighted pair.

    The merged component carries weight ``w_a + w_b``, the weighted mean,
    and the weighted covariance plus the spread term between the means::

        S = wa' S_a + wb' S_b + wa' wb' (m_a - m_b)(m_a - m_b)^T

    with wa', wb' the weights normalized over the pair.  Among single
    Gaussians this choice minimizes the forward divergence from the
    normalized pair.
    """
    _check_same_dim(a, b)
    total = a.weight + b.weight
    if total <= 0.0:
        raise ValueError("cannot merge a pair with zero total weight")
    wa = a.weight / total
    wb = b.weight / total
    mean = wa * a.mean + wb * b.mean
    delta = a.mean - b.mean
    with np.errstate(over="ignore"):
        cov = wa * a.cov + wb * b.cov + (wa * wb) * np.outer(delta, delta)
    # The spread term can overflow for extreme separations; surface that
    # as a factorization failure so callers treat the pair as unmergeable.
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise np.linalg.LinAlgError("moment-matched merge overflows to non-finite moments")
    return GaussianComponent(total, mean, cov)


def jitter(c: GaussianComponent, eps: float) -> GaussianComponent:
    """Return ``c`` with ``eps`` added to every covariance diagonal entry.

    The library never regularizes on its own; this is the explicit
    escape hatch for iterative callers whose covariance estimates go
    numerically singular.
    """
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    return GaussianComponent(c.weight, c.mean, c.cov + eps * np.eye(c.dim))
