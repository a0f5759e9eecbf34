"""Robust clustering by over-fitting EM and reducing the fitted mixture.

The workflow: fit a deliberately over-sized mixture to contaminated
data with EM, then shrink it with a reduction method.  A method whose
prune costs reflect the reverse divergence will discard the diffuse
low-weight components that EM spends on background clutter, and the
points assigned to them; a merge-only method must keep every point.

Labels are 1-based component indices; :data:`DISCARDED` (-1) marks
points dropped by a prune step.  Ground-truth arrays use the same
1-based indices with :data:`SPURIOUS` (0) for clutter points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import mixture as mix
from .costs import CostKind
from .gauss import GaussianComponent, log_pdf as _component_log_pdf, mahalanobis_sq
from .mixture import GaussianMixture, Merge, Prune
from .reduction import ReductionTrace, reduce

__all__ = [
    "DISCARDED",
    "SPURIOUS",
    "LabeledDataset",
    "EMConfig",
    "EMFit",
    "EMError",
    "six_cluster_mixture",
    "generate_corrupted_data",
    "em_fit",
    "em_fit_details",
    "reduce_and_reassign",
]

DISCARDED = -1
SPURIOUS = 0


class EMError(RuntimeError):
    """EM could not produce a usable mixture (degenerate fit or bad input)."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Points with optional cluster labels and optional ground truth.

    ``labels[i]`` is the 1-based index of the mixture component point i
    is assigned to, or :data:`DISCARDED`; ``None`` means not yet
    assigned.  ``truth[i]`` is the 1-based generating component, or
    :data:`SPURIOUS` for clutter.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    truth: np.ndarray | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {points.shape}")
        object.__setattr__(self, "points", points)
        for name in ("labels", "truth"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=int)
            if arr.shape != (points.shape[0],):
                raise ValueError(f"{name} must have one entry per point")
            object.__setattr__(self, name, arr)


def six_cluster_mixture() -> GaussianMixture:
    """The fixed six-component 2-D mixture behind the clustering benchmark."""
    weights = [0.2, 0.2, 0.2, 0.2, 0.1, 0.1]
    means = [[-5.0, 5.0], [4.0, 5.0], [4.0, -4.0], [-4.0, -4.0], [-7.0, 0.0], [7.0, 0.0]]
    covs = [
        [[1.0, 0.5], [0.5, 0.5]],
        [[1.0, 0.2], [0.2, 0.5]],
        [[2.0, 0.0], [0.0, 1.0]],
        [[2.0, -2.0], [-2.0, 3.0]],
        [[0.1, 0.0], [0.0, 3.0]],
        [[0.1, 0.0], [0.0, 3.0]],
    ]
    return GaussianMixture.from_arrays(weights, means, covs)


def generate_corrupted_data(n: int, m: int, side: float = 20.0, seed=None) -> LabeledDataset:
    """Draws from the benchmark mixture plus uniform clutter.

    ``n`` points come from :func:`six_cluster_mixture` (truth = 1-based
    component of origin) followed by ``m`` points uniform on the
    origin-centered square of the given side (truth = SPURIOUS).
    Deterministic given ``seed``; labels are left unassigned.
    """
    if n < 0 or m < 0:
        raise ValueError("n and m must be nonnegative")
    if side <= 0.0:
        raise ValueError(f"side must be positive, got {side}")
    rng = np.random.default_rng(seed)
    mixture = six_cluster_mixture()
    if n > 0:
        pts, comp = mix.sample(mixture, n, rng, return_components=True)
    else:
        pts = np.empty((0, 2))
        comp = np.empty(0, dtype=int)
    clutter = rng.uniform(-side / 2.0, side / 2.0, size=(m, 2))
    points = np.vstack([pts, clutter])
    truth = np.concatenate([comp, np.full(m, SPURIOUS, dtype=int)])
    return LabeledDataset(points, labels=None, truth=truth)


@dataclass(frozen=True)
class EMConfig:
    """Settings for :func:`em_fit`.

    ``tol`` is the total log-likelihood improvement below which the
    iteration stops.  ``jitter`` scales the mean per-coordinate data
    variance to give the diagonal bump applied when a covariance update
    fails to factorize; at most ``max_jitter_retries`` bumps are applied
    per component per iteration before the fit is abandoned.
    """

    n_clusters: int
    max_iters: int = 500
    tol: float = 1e-6
    seed: int | None = None
    jitter: float = 1e-6
    max_jitter_retries: int = 3

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError(f"n_clusters must be at least 1, got {self.n_clusters}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.tol < 0.0 or self.jitter < 0.0:
            raise ValueError("tol and jitter must be nonnegative")


@dataclass(frozen=True, eq=False)
class EMFit:
    """Fit result plus diagnostics for convergence analysis."""

    mixture: GaussianMixture
    responsibilities: np.ndarray
    log_likelihoods: tuple[float, ...]
    converged: bool
    jitter_events: int
    reinit_events: int
    # Iterations whose parameter update was perturbed (jitter or
    # reinitialization); the usual monotonicity guarantee does not
    # cover the following log-likelihood evaluation.
    perturbed_iterations: tuple[int, ...]


def _seed_means(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Spread-out initial means: each next seed drawn with probability
    proportional to its squared distance from the nearest chosen seed."""
    n = points.shape[0]
    means = np.empty((k, points.shape[1]))
    means[0] = points[rng.integers(n)]
    d2 = np.sum((points - means[0]) ** 2, axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            probs = d2 / total
            idx = rng.choice(n, p=probs)
        else:
            idx = rng.integers(n)
        means[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - means[i]) ** 2, axis=1))
    return means


def _factorizable(weight: float, mean: np.ndarray, cov: np.ndarray, eps: float, retries: int):
    """Build a component, bumping the covariance diagonal on factorization failure.

    Returns (component, bumps_applied); raises EMError when the allowed
    number of bumps is exhausted.
    """
    dim = mean.size
    for attempt in range(retries + 1):
        try:
            return GaussianComponent(weight, mean, cov + attempt * eps * np.eye(dim)), attempt
        except np.linalg.LinAlgError:
            continue
    raise EMError(f"covariance failed to factorize after {retries} jitter retries")


def em_fit_details(points: np.ndarray, cfg: EMConfig) -> EMFit:
    """Full EM fit with diagnostics; :func:`em_fit` is the plain wrapper.

    Expectation and maximization follow the standard Gaussian mixture
    updates; initialization uses spread-out seeded means with identity
    covariances scaled to the data variance.  A component that loses all
    responsibility is re-seeded at a random data point (counted in
    ``reinit_events``).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise EMError(f"points must be a non-empty 2-D array, got shape {points.shape}")
    n, dim = points.shape
    k = cfg.n_clusters
    if n < k:
        raise EMError(f"cannot fit {k} clusters to {n} points")
    rng = np.random.default_rng(cfg.seed)
    var_scale = float(np.mean(np.var(points, axis=0)))
    if var_scale <= 0.0:
        var_scale = 1.0
    eps = cfg.jitter * var_scale
    means = _seed_means(points, k, rng)
    covs = np.tile(var_scale * np.eye(dim), (k, 1, 1))
    weights = np.full(k, 1.0 / k)

    lls: list[float] = []
    perturbed: list[int] = []
    jitter_events = 0
    reinit_events = 0
    converged = False
    resp = np.full((n, k), 1.0 / k)
    for it in range(cfg.max_iters):
        comps = []
        touched = False
        for c in range(k):
            comp, bumps = _factorizable(weights[c], means[c], covs[c], eps, cfg.max_jitter_retries)
            comps.append(comp)
            if bumps:
                jitter_events += bumps
                covs[c] = comp.cov
                touched = True
        log_terms = np.empty((n, k))
        for c, comp in enumerate(comps):
            log_terms[:, c] = np.log(weights[c]) + _component_log_pdf(comp, points)
        log_norm = logsumexp(log_terms, axis=1)
        total_ll = float(np.sum(log_norm))
        if not np.isfinite(total_ll):
            raise EMError(f"log-likelihood became non-finite at iteration {it}")
        resp = np.exp(log_terms - log_norm[:, None])
        if touched:
            perturbed.append(it)
        lls.append(total_ll)
        if len(lls) > 1 and abs(lls[-1] - lls[-2]) <= cfg.tol:
            converged = True
            break
        # Maximization.
        counts = resp.sum(axis=0)
        for c in range(k):
            if counts[c] < n * 1e-12:
                means[c] = points[rng.integers(n)]
                covs[c] = var_scale * np.eye(dim)
                counts[c] = 1.0
                reinit_events += 1
                if not perturbed or perturbed[-1] != it:
                    perturbed.append(it)
            else:
                mu = resp[:, c] @ points / counts[c]
                centered = points - mu
                cov = (resp[:, c, None] * centered).T @ centered / counts[c]
                means[c] = mu
                covs[c] = 0.5 * (cov + cov.T)
        weights = counts / counts.sum()

    final_comps = []
    for c in range(k):
        comp, bumps = _factorizable(weights[c], means[c], covs[c], eps, cfg.max_jitter_retries)
        jitter_events += bumps
        final_comps.append(comp)
    mixture = GaussianMixture(tuple(final_comps)).renormalized()
    # Responsibilities always correspond to the returned parameters (the
    # loop may have ended on a maximization step).
    log_terms = np.empty((n, k))
    for c, comp in enumerate(mixture.components):
        log_terms[:, c] = np.log(comp.weight) + _component_log_pdf(comp, points)
    resp = np.exp(log_terms - logsumexp(log_terms, axis=1)[:, None])
    return EMFit(
        mixture,
        resp,
        tuple(lls),
        converged,
        jitter_events,
        reinit_events,
        tuple(perturbed),
    )


def em_fit(points: np.ndarray, cfg: EMConfig) -> tuple[GaussianMixture, np.ndarray]:
    """Fit a Gaussian mixture by EM; returns (mixture, responsibilities).

    Responsibility rows sum to 1.  Raises :class:`EMError` when the fit
    degenerates (non-finite likelihood, unrecoverable covariance, or too
    few points).
    """
    fit = em_fit_details(points, cfg)
    return fit.mixture, fit.responsibilities


def reduce_and_reassign(
    mixture: GaussianMixture,
    responsibilities: np.ndarray,
    points: np.ndarray,
    target: int,
    kind: CostKind,
) -> tuple[GaussianMixture, LabeledDataset, ReductionTrace]:
    """Reduce a fitted mixture and carry the point assignments along.

    Initial labels are the argmax responsibilities.  Replaying the
    reduction trace, a pruned component's points become
    :data:`DISCARDED`; the points of a merged pair are reassigned to the
    squared-Mahalanobis-nearest component of the mixture as it stands
    after that step.  Returns (reduced mixture, labeled points, trace).
    """
    points = np.asarray(points, dtype=float)
    responsibilities = np.asarray(responsibilities, dtype=float)
    if responsibilities.shape != (points.shape[0], mixture.size):
        raise ValueError(
            f"responsibilities shape {responsibilities.shape} does not match "
            f"{points.shape[0]} points x {mixture.size} components"
        )
    labels = np.argmax(responsibilities, axis=1) + 1
    reduced, trace = reduce(mixture, target, kind)
    cur = mixture
    for step in trace.steps:
        h = step.chosen
        nxt = mix.apply(cur, h)
        if isinstance(h, Prune):
            labels = np.where(labels == h.j, DISCARDED, labels)
            labels = np.where(labels > h.j, labels - 1, labels)
        else:
            moved = (labels == h.i) | (labels == h.j)
            labels = np.where(labels > h.j, labels - 1, labels)
            if np.any(moved):
                d2 = np.stack([mahalanobis_sq(c, points[moved]) for c in nxt.components])
                labels[moved] = np.argmin(d2, axis=0) + 1
        cur = nxt
    return reduced, LabeledDataset(points, labels=labels), trace
