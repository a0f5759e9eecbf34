"""Reduction costs: divergence estimates, baseline bounds, and the
reverse-divergence surrogates used by the greedy engine.

The merge-direction surrogates follow one pattern: a candidate action's
cost has the form

    w log w - w * log( w_i exp(-e_i) + w_j exp(-e_j) ),   w = w_i + w_j

where the exponents ``e`` are divergences.  Divergences between remote
components easily reach 10^3, so every such combination is evaluated
with log-sum-exp; no intermediate ``exp(-e)`` is ever formed outside of
it.

Costs are reported exactly as computed.  The prune and merge surrogates
are upper bounds only up to second-order remainder terms, so slightly
negative values can occur for near-duplicate pairs; they are meaningful
(the true divergence is tiny) and are flagged by the reduction trace
rather than clamped here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import mixture as mix
from .gauss import (
    GaussianComponent,
    expected_log,
    kld_gauss,
    max_value,
    moment_match_merge,
    product_decompose,
)
from .mixture import GaussianMixture, Hypothesis, Merge, Prune

__all__ = [
    "CostKind",
    "DivergenceEstimate",
    "DisjointSupportError",
    "gaussian_overlap",
    "ise_analytic",
    "mc_kld",
    "runnalls_bound",
    "kld_to_pair_bound",
    "crude_prune_bound",
    "arkl_prune_cost",
    "simple_merge_bound",
    "switched_divergence",
    "optimal_split_weight",
    "arkl_merge_cost",
    "hypothesis_cost",
]


class CostKind(enum.Enum):
    """Which cost a greedy reduction assigns to a hypothesis.

    The enum values double as the CLI method names.
    """

    RUNNALLS_B = "runnalls"
    WILLIAMS_ISE = "williams"
    ARKL_FULL = "arkl"
    ARKL_SIMPLE = "arkl-simple"

    @property
    def include_pruning(self) -> bool:
        return self is not CostKind.RUNNALLS_B


@dataclass(frozen=True)
class DivergenceEstimate:
    """A divergence value together with its sampling uncertainty.

    ``samples == 0`` marks an analytic (deterministic) result and forces
    ``std_error == 0``.  A Monte Carlo estimate carries the sample count
    and the standard error of the mean.
    """

    value: float
    std_error: float
    samples: int

    def __post_init__(self):
        if self.samples < 0:
            raise ValueError(f"samples must be nonnegative, got {self.samples}")
        if self.std_error < 0.0:
            raise ValueError(f"std_error must be nonnegative, got {self.std_error}")
        if self.samples == 0 and self.std_error != 0.0:
            raise ValueError("an analytic estimate (samples=0) must have std_error 0")


class DisjointSupportError(ArithmeticError):
    """The denominator density underflowed to exactly zero at a sample point."""

    def __init__(self, abscissa: np.ndarray):
        self.abscissa = np.asarray(abscissa, dtype=float)
        super().__init__(
            f"density underflowed to zero at sample point {self.abscissa.tolist()}; "
            "the divergence is numerically infinite"
        )


def gaussian_overlap(a: GaussianComponent, b: GaussianComponent) -> float:
    """Integral of the product of two Gaussian densities.

    Equals ``N(mean_a; mean_b, cov_a + cov_b)``; weights are ignored.
    """
    return product_decompose(a, b).scale


def _overlap_matrix(comps_a, comps_b) -> np.ndarray:
    out = np.empty((len(comps_a), len(comps_b)))
    for r, a in enumerate(comps_a):
        for c, b in enumerate(comps_b):
            out[r, c] = gaussian_overlap(a, b)
    return out


def _ise_from_overlaps(wp: np.ndarray, wq: np.ndarray, gpp: np.ndarray, gqq: np.ndarray, gpq: np.ndarray) -> float:
    return float(wp @ gpp @ wp + wq @ gqq @ wq - 2.0 * (wp @ gpq @ wq))


def ise_analytic(p: GaussianMixture, q: GaussianMixture) -> float:
    """Integral squared error between two mixtures, in closed form.

    All three Gram terms are computed: the self term of ``p``, the self
    term of ``q``, and the cross term.  The result is a true squared
    L2 distance, zero iff the mixtures represent the same density.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    gpp = _overlap_matrix(p.components, p.components)
    gqq = _overlap_matrix(q.components, q.components)
    gpq = _overlap_matrix(p.components, q.components)
    return _ise_from_overlaps(p.weights, q.weights, gpp, gqq, gpq)


def mc_kld(from_: GaussianMixture, to: GaussianMixture, n: int, seed) -> DivergenceEstimate:
    """Monte Carlo estimate of D(from_ || to) between two mixtures.

    Averages ``log from_(x) - log to(x)`` over ``n`` seeded draws from
    ``from_`` and reports the standard error of the mean.  If ``to``
    underflows to exactly zero density at any sample, the divergence is
    numerically infinite and :class:`DisjointSupportError` is raised
    with the offending abscissa.
    """
    if n < 1000:
        raise ValueError(f"n must be at least 1000 for a usable error estimate, got {n}")
    pts = mix.sample(from_, n, seed)
    lf = mix.log_pdf(from_, pts)
    lt = mix.log_pdf(to, pts)
    bad = np.isneginf(lt)
    if np.any(bad):
        raise DisjointSupportError(pts[int(np.argmax(bad))])
    diff = lf - lt
    value = float(np.mean(diff))
    std_error = float(np.std(diff, ddof=1) / math.sqrt(n))
    return DivergenceEstimate(value, std_error, n)


# ---------------------------------------------------------------------------
# Forward-divergence baseline (Runnalls)
# ---------------------------------------------------------------------------


def _runnalls_kernel(a: GaussianComponent, b: GaussianComponent) -> tuple[float, float]:
    """Per-pair divergences to the moment-matched merge.

    These depend only on the pair's relative weights, so they survive
    any uniform rescaling of the mixture weights.
    """
    merged = moment_match_merge(a, b)
    return kld_gauss(a, merged), kld_gauss(b, merged)


def runnalls_bound(a: GaussianComponent, b: GaussianComponent) -> float:
    """Weighted upper bound on the forward-divergence increase of merging a pair.

    B = w_a D(q_a || q_ab) + w_b D(q_b || q_ab) with q_ab the
    moment-matched merge.  Scales linearly with the absolute weights.
    """
    ka, kb = _runnalls_kernel(a, b)
    return a.weight * ka + b.weight * kb


# ---------------------------------------------------------------------------
# Reverse-divergence surrogates
# ---------------------------------------------------------------------------


def kld_to_pair_bound(
    k: GaussianComponent, i: GaussianComponent, j: GaussianComponent, w_i: float, w_j: float
) -> float:
    """Upper bound on the divergence from one Gaussian to a weighted pair.

    Bounds ``D(q_k || w_i q_i + w_j q_j)`` (an unnormalized two-term
    kernel) by ``-log( w_i exp(-D(q_k||q_i)) + w_j exp(-D(q_k||q_j)) )``.
    """
    if w_i <= 0.0 or w_j <= 0.0:
        raise ValueError("pair weights must be positive")
    return -float(
        np.logaddexp(math.log(w_i) - kld_gauss(k, i), math.log(w_j) - kld_gauss(k, j))
    )


def crude_prune_bound(w: float) -> float:
    """Weight-only upper bound on the reverse divergence of pruning: -log(1 - w)."""
    if not 0.0 < w < 1.0:
        raise ValueError(f"pruned weight must lie strictly between 0 and 1, got {w}")
    return -math.log1p(-w)


def _arkl_prune_terms(weights: np.ndarray, kld_to_pruned: np.ndarray, i0: int) -> np.ndarray:
    """Prune-cost candidates for every retained component J.

    ``kld_to_pruned[j]`` holds D(q_j || q_pruned).  Retaining mass on J
    tightens the crude bound by the J-th correction term; the cost used
    by the engine is the minimum over J of these candidates.
    """
    w_i = weights[i0]
    log_wi = math.log(w_i)
    others = np.arange(weights.size) != i0
    w_j = weights[others]
    corr = np.logaddexp(0.0, log_wi - np.log(w_j) - kld_to_pruned[others])
    return crude_prune_bound(w_i) - (w_j / (1.0 - w_i)) * corr


def arkl_prune_cost(m: GaussianMixture, i: int, pairwise_kld: np.ndarray | None = None) -> float:
    """Reverse-divergence surrogate for pruning component ``i`` (1-based).

    Refines the crude ``-log(1 - w_i)`` bound with the best single
    retained component: the minimum over J != i of

        -log(1 - w_i) - (w_j / (1 - w_i)) log(1 + (w_i / w_j) exp(-D(q_j || q_i)))

    ``pairwise_kld`` may supply the full divergence matrix with
    ``pairwise_kld[a, b] = D(q_(a+1) || q_(b+1))``; it is computed on the
    fly when omitted.  The minimum is taken over the components actually
    present, so it must be re-evaluated after every reduction step.
    """
    if not 1 <= i <= m.size:
        raise ValueError(f"index {i} out of range for mixture of size {m.size} (1-based)")
    if m.size < 2:
        raise ValueError("prune cost requires at least two components")
    i0 = i - 1
    if pairwise_kld is None:
        col = np.array(
            [kld_gauss(c, m.components[i0]) if r != i0 else 0.0 for r, c in enumerate(m.components)]
        )
    else:
        pairwise_kld = np.asarray(pairwise_kld, dtype=float)
        if pairwise_kld.shape != (m.size, m.size):
            raise ValueError(f"pairwise_kld must have shape ({m.size}, {m.size}), got {pairwise_kld.shape}")
        col = pairwise_kld[:, i0]
    return float(np.min(_arkl_prune_terms(m.weights, col, i0)))


def _pair_cost_from_neg_exponents(w_i: float, w_j: float, e_i: float, e_j: float) -> float:
    """Assemble w log w - w log(w_i exp(-e_i) + w_j exp(-e_j)) stably."""
    w = w_i + w_j
    return w * math.log(w) - w * float(np.logaddexp(math.log(w_i) - e_i, math.log(w_j) - e_j))


def _simple_merge_kernel(a: GaussianComponent, b: GaussianComponent) -> tuple[float, float]:
    merged = moment_match_merge(a, b)
    return kld_gauss(merged, a), kld_gauss(merged, b)


def simple_merge_bound(a: GaussianComponent, b: GaussianComponent) -> float:
    """Merge cost surrogate that plugs plain divergences into the pair bound.

    Applies :func:`kld_to_pair_bound` with q_k the moment-matched merge.
    A genuine upper bound on the reverse divergence of merging, but far
    looser than the switched version for well-separated pairs: it keeps
    growing with the separation and soon exceeds the cost of pruning
    either component outright.
    """
    e_a, e_b = _simple_merge_kernel(a, b)
    return _pair_cost_from_neg_exponents(a.weight, b.weight, e_a, e_b)


def switched_divergence(k: GaussianComponent, i: GaussianComponent, j: GaussianComponent) -> float:
    """Divergence from q_k to q_j with the region near q_i switched off.

    Evaluates, in closed form,

        V(q_k, q_i, q_j) = Integral q_k (1 - q_i / max q_i) log(q_k / q_j)

    The switching factor vanishes at the mean of q_i and tends to 1 far
    from it, so V discounts exactly the region where q_i would cover for
    q_j.  Assembled from the product decomposition of q_i with q_k, the
    expected-log identity, and the plain divergence D(q_k || q_j).
    Unlike a true divergence it may be negative.
    """
    pd = product_decompose(i, k)
    star = GaussianComponent(1.0, pd.mean_star, pd.cov_star)
    # (2 pi)^(k/2) |cov_i|^(1/2) N(mean_i; mean_k, cov_k + cov_i), in [0, 1]
    ratio = pd.scale / max_value(i)
    return kld_gauss(k, j) - ratio * (expected_log(star, k) - expected_log(star, j))


def optimal_split_weight(w_i: float, w_j: float, v_i: float, v_j: float) -> float:
    """Convex split of the merged component's mass that minimizes the pair bound.

    Returns ``w_i exp(-v_i) / (w_i exp(-v_i) + w_j exp(-v_j))``, the
    weight fraction assigned to the i-side surrogate.
    """
    if w_i <= 0.0 or w_j <= 0.0:
        raise ValueError("weights must be positive")
    log_terms = np.array([math.log(w_i) - v_i, math.log(w_j) - v_j])
    return float(np.exp(log_terms[0] - logsumexp(log_terms)))


def _arkl_merge_kernel(a: GaussianComponent, b: GaussianComponent) -> tuple[float, float]:
    """Switched divergences of a pair's moment match, one per side.

    The exponent paired with w_a switches on q_b and compares against
    q_a, and vice versa.  Both depend only on the pair's relative
    weights.
    """
    merged = moment_match_merge(a, b)
    v_a = switched_divergence(merged, b, a)
    v_b = switched_divergence(merged, a, b)
    return v_a, v_b


def arkl_merge_cost(a: GaussianComponent, b: GaussianComponent) -> float:
    """Reverse-divergence surrogate for merging a pair.

    Uses the pair bound with switched divergences in the exponents:

        w log w - w log( w_a exp(-V(q_ab, q_b, q_a)) + w_b exp(-V(q_ab, q_a, q_b)) )

    For near-duplicate pairs this is close to the true reverse
    divergence of the merge (both are near zero); for separated pairs it
    stays bounded instead of blowing up like :func:`simple_merge_bound`.
    """
    v_a, v_b = _arkl_merge_kernel(a, b)
    return _pair_cost_from_neg_exponents(a.weight, b.weight, v_a, v_b)


# ---------------------------------------------------------------------------
# Gram-based squared-error assembly (shared with the reduction engine)
# ---------------------------------------------------------------------------


def _gram_stats(weights: np.ndarray, gram: np.ndarray) -> tuple[np.ndarray, float]:
    s = gram @ weights
    return s, float(weights @ s)


def _prune_ise_from_gram(weights: np.ndarray, gram: np.ndarray, s: np.ndarray, t: float, j0: int) -> float:
    """ISE between the mixture and its renormalized prune, from cached overlaps."""
    w_j = weights[j0]
    c = 1.0 / (1.0 - w_j)
    own = t - 2.0 * w_j * s[j0] + w_j * w_j * gram[j0, j0]
    cross = t - w_j * s[j0]
    return t + c * c * own - 2.0 * c * cross


def _merge_ise_from_gram(
    weights: np.ndarray,
    gram: np.ndarray,
    s: np.ndarray,
    t: float,
    i0: int,
    j0: int,
    u: np.ndarray,
    u_mm: float,
) -> float:
    """ISE between the mixture and its (i0, j0) merge, from cached overlaps.

    ``u`` holds the overlaps of the merged candidate with every current
    component and ``u_mm`` its self overlap; everything else comes from
    the Gram matrix of the unmodified mixture.
    """
    w_i, w_j = weights[i0], weights[j0]
    w_m = w_i + w_j
    survivors_sq = (
        t
        - 2.0 * (w_i * s[i0] + w_j * s[j0])
        + (w_i * w_i * gram[i0, i0] + 2.0 * w_i * w_j * gram[i0, j0] + w_j * w_j * gram[j0, j0])
    )
    wu = float(weights @ u)
    wu_surv = wu - w_i * u[i0] - w_j * u[j0]
    q_sq = survivors_sq + 2.0 * w_m * wu_surv + w_m * w_m * u_mm
    pq = (t - w_i * s[i0] - w_j * s[j0]) + w_m * wu
    return t + q_sq - 2.0 * pq


def _williams_ise(m: GaussianMixture, h: Hypothesis, gram: np.ndarray) -> float:
    weights = m.weights
    s, t = _gram_stats(weights, gram)
    if isinstance(h, Prune):
        return _prune_ise_from_gram(weights, gram, s, t, h.j - 1)
    merged = moment_match_merge(m.components[h.i - 1], m.components[h.j - 1])
    u = np.array([gaussian_overlap(c, merged) for c in m.components])
    u_mm = gaussian_overlap(merged, merged)
    return _merge_ise_from_gram(weights, gram, s, t, h.i - 1, h.j - 1, u, u_mm)


def hypothesis_cost(m: GaussianMixture, h: Hypothesis, kind: CostKind, cache=None) -> float:
    """Cost assigned to a single hypothesis under the given method.

    ``cache`` may be a cost table from the reduction module (anything
    exposing ``pairwise_kld`` / ``gram`` arrays for the current
    mixture); without it the needed statistics are computed on the fly.
    Pruning is not part of the Runnalls hypothesis set, so asking for a
    prune cost under it is an error.
    """
    if isinstance(h, Prune):
        if kind is CostKind.RUNNALLS_B:
            raise ValueError("the merge-only Runnalls method assigns no cost to pruning")
        if kind is CostKind.ARKL_SIMPLE:
            return crude_prune_bound(m.components[h.j - 1].weight)
        if kind is CostKind.ARKL_FULL:
            table = getattr(cache, "pairwise_kld", None) if cache is not None else None
            return arkl_prune_cost(m, h.j, table)
        if kind is CostKind.WILLIAMS_ISE:
            gram = getattr(cache, "gram", None) if cache is not None else None
            if gram is None:
                gram = _overlap_matrix(m.components, m.components)
            return _williams_ise(m, h, gram)
    elif isinstance(h, Merge):
        a, b = m.components[h.i - 1], m.components[h.j - 1]
        if kind is CostKind.RUNNALLS_B:
            return runnalls_bound(a, b)
        if kind is CostKind.ARKL_SIMPLE:
            return simple_merge_bound(a, b)
        if kind is CostKind.ARKL_FULL:
            return arkl_merge_cost(a, b)
        if kind is CostKind.WILLIAMS_ISE:
            gram = getattr(cache, "gram", None) if cache is not None else None
            if gram is None:
                gram = _overlap_matrix(m.components, m.components)
            return _williams_ise(m, h, gram)
    raise ValueError(f"unknown hypothesis type: {h!r}")
