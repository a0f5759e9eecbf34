"""Greedy mixture reduction with incremental cost caching.

One reduction step evaluates every admissible hypothesis (all prunes and
all pair merges, or merges only for the merge-only method), applies the
cheapest one, and repeats until the target size is reached.  Ties are
broken by canonical hypothesis order: prunes before merges, then
ascending indices; together with the deterministic cost evaluation this
makes repeated runs bit-identical.

The expensive pairwise statistics are cached across steps in a
:class:`CostTable`.  What survives a step is exactly the
weight-independent part of each cost:

* divergences between existing components (the full pairwise matrix used
  by the refined prune cost),
* per-pair divergences to/from the pair's moment match and the switched
  divergences of the merge surrogates -- these depend only on the pair's
  relative weights, which no prune or unrelated merge can change,
* the Gram matrix of pairwise overlap integrals for the squared-error
  method.

After every step the weight-dependent cost entries are reassembled from
those kernels under the renormalized weights; a merge additionally
computes the new component's row of statistics.  This keeps the
divergence-based methods at O(N^2) primitive evaluations for a full
N -> 1 reduction.  The squared-error method re-evaluates each candidate
merge's overlap vector every step (the candidates change with the
surviving set), which is O(N^3) per step instead of the O(N^4) of a
from-scratch evaluation.

A merge candidate whose moment-matched covariance fails to factorize is
assigned +inf cost, skipped, and recorded in the trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mixture as mix
from .costs import (
    CostKind,
    _arkl_prune_terms,
    _gram_stats,
    _ise_from_overlaps,
    _merge_ise_from_gram,
    _pair_cost_from_neg_exponents,
    _prune_ise_from_gram,
    arkl_prune_cost,
    crude_prune_bound,
    gaussian_overlap,
    kld_gauss,
    switched_divergence,
)
from .gauss import GaussianComponent, moment_match_merge
from .mixture import GaussianMixture, Hypothesis, Merge, Prune, enumerate_hypotheses

__all__ = [
    "EvalCounter",
    "CostTable",
    "TraceStep",
    "ReductionTrace",
    "build_cost_table",
    "update_cost_table",
    "reduce",
    "reference_reduce",
    "cost_eval_count",
]


@dataclass
class EvalCounter:
    """Tally of pairwise-statistic evaluations performed by an engine.

    One unit per plain Gaussian divergence, per overlap integral, and
    per switched divergence.  Reassembling cached kernels under new
    weights is ordinary arithmetic and is deliberately not counted.
    """

    kld: int = 0
    overlap: int = 0
    switched: int = 0

    @property
    def total(self) -> int:
        return self.kld + self.overlap + self.switched


def _counted_kld(counter: EvalCounter | None, a: GaussianComponent, b: GaussianComponent) -> float:
    if counter is not None:
        counter.kld += 1
    return kld_gauss(a, b)


def _counted_overlap(counter: EvalCounter | None, a: GaussianComponent, b: GaussianComponent) -> float:
    if counter is not None:
        counter.overlap += 1
    return gaussian_overlap(a, b)


def _counted_switched(
    counter: EvalCounter | None, k: GaussianComponent, i: GaussianComponent, j: GaussianComponent
) -> float:
    if counter is not None:
        counter.switched += 1
    return switched_divergence(k, i, j)


@dataclass(eq=False)
class CostTable:
    """Cached per-hypothesis costs and their weight-independent kernels.

    ``pair_cost[i0, j0]`` (0-based, upper triangle) is the current cost
    of merging that pair and ``prune_cost[j0]`` the current cost of the
    corresponding prune (``None`` for the merge-only method).
    ``pairwise_kld[a, b]`` holds D(component a || component b) for the
    refined prune cost; ``gram`` holds pairwise overlap integrals for
    the squared-error method.  ``kernel_a``/``kernel_b`` are the per-pair
    weight-independent merge kernels, and ``degenerate`` marks pairs
    whose moment match failed to factorize (their cost is pinned at
    +inf).
    """

    kind: CostKind
    pair_cost: np.ndarray
    prune_cost: np.ndarray | None
    pairwise_kld: np.ndarray | None
    gram: np.ndarray | None
    kernel_a: np.ndarray | None
    kernel_b: np.ndarray | None
    degenerate: np.ndarray
    # Pairs first marked degenerate by the build/update call that
    # produced this table (1-based), for trace bookkeeping.
    new_degenerate: list | None = None

    def __post_init__(self):
        if self.new_degenerate is None:
            self.new_degenerate = []

    @property
    def size(self) -> int:
        return self.pair_cost.shape[0]


def _pair_kernel(
    kind: CostKind, a: GaussianComponent, b: GaussianComponent, counter: EvalCounter | None
) -> tuple[float, float]:
    """Weight-independent merge kernel for one (a, b) pair, a before b."""
    merged = moment_match_merge(a, b)
    if kind is CostKind.RUNNALLS_B:
        return _counted_kld(counter, a, merged), _counted_kld(counter, b, merged)
    if kind is CostKind.ARKL_SIMPLE:
        return _counted_kld(counter, merged, a), _counted_kld(counter, merged, b)
    if kind is CostKind.ARKL_FULL:
        return (
            _counted_switched(counter, merged, b, a),
            _counted_switched(counter, merged, a, b),
        )
    raise ValueError(f"no pair kernel for {kind}")


def _assemble_pair_cost(kind: CostKind, w_i: float, w_j: float, k_a: float, k_b: float) -> float:
    if kind is CostKind.RUNNALLS_B:
        return w_i * k_a + w_j * k_b
    # Both reverse-divergence merge surrogates share the pair-bound shape.
    return _pair_cost_from_neg_exponents(w_i, w_j, k_a, k_b)


def _refresh_weighted(table: CostTable, m: GaussianMixture) -> None:
    """Reassemble all weight-dependent entries from cached kernels."""
    n = m.size
    w = m.weights
    for i0 in range(n):
        for j0 in range(i0 + 1, n):
            if table.degenerate[i0, j0]:
                table.pair_cost[i0, j0] = np.inf
            else:
                table.pair_cost[i0, j0] = _assemble_pair_cost(
                    table.kind, w[i0], w[j0], table.kernel_a[i0, j0], table.kernel_b[i0, j0]
                )
    if table.kind is CostKind.ARKL_SIMPLE:
        for j0 in range(n):
            table.prune_cost[j0] = crude_prune_bound(w[j0])
    elif table.kind is CostKind.ARKL_FULL:
        for j0 in range(n):
            table.prune_cost[j0] = arkl_prune_cost(m, j0 + 1, table.pairwise_kld)


def _refresh_williams(table: CostTable, m: GaussianMixture, counter: EvalCounter | None) -> None:
    """Re-evaluate all squared-error costs from the cached Gram matrix.

    Every candidate merge needs its overlap vector against the current
    components, so this costs O(N) evaluations per merge hypothesis.
    """
    n = m.size
    w = m.weights
    gram = table.gram
    s, t = _gram_stats(w, gram)
    for j0 in range(n):
        table.prune_cost[j0] = _prune_ise_from_gram(w, gram, s, t, j0)
    for i0 in range(n):
        for j0 in range(i0 + 1, n):
            if table.degenerate[i0, j0]:
                table.pair_cost[i0, j0] = np.inf
                continue
            try:
                merged = moment_match_merge(m.components[i0], m.components[j0])
            except np.linalg.LinAlgError:
                table.degenerate[i0, j0] = True
                table.new_degenerate.append(Merge(i0 + 1, j0 + 1))
                table.pair_cost[i0, j0] = np.inf
                continue
            u = np.array([_counted_overlap(counter, c, merged) for c in m.components])
            u_mm = _counted_overlap(counter, merged, merged)
            table.pair_cost[i0, j0] = _merge_ise_from_gram(w, gram, s, t, i0, j0, u, u_mm)


def build_cost_table(m: GaussianMixture, kind: CostKind, counter: EvalCounter | None = None) -> CostTable:
    """Evaluate all hypothesis costs for ``m`` from scratch."""
    if not isinstance(kind, CostKind):
        raise ValueError(f"kind must be a CostKind, got {kind!r}")
    n = m.size
    comps = m.components
    pair_cost = np.full((n, n), np.inf)
    degenerate = np.zeros((n, n), dtype=bool)
    if kind is CostKind.WILLIAMS_ISE:
        gram = np.empty((n, n))
        for i0 in range(n):
            for j0 in range(i0, n):
                gram[i0, j0] = gram[j0, i0] = _counted_overlap(counter, comps[i0], comps[j0])
        table = CostTable(kind, pair_cost, np.full(n, np.inf), None, gram, None, None, degenerate)
        _refresh_williams(table, m, counter)
        return table
    kernel_a = np.full((n, n), np.nan)
    kernel_b = np.full((n, n), np.nan)
    discovered = []
    for i0 in range(n):
        for j0 in range(i0 + 1, n):
            try:
                kernel_a[i0, j0], kernel_b[i0, j0] = _pair_kernel(kind, comps[i0], comps[j0], counter)
            except np.linalg.LinAlgError:
                degenerate[i0, j0] = True
                discovered.append(Merge(i0 + 1, j0 + 1))
    pairwise_kld = None
    if kind is CostKind.ARKL_FULL:
        pairwise_kld = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                if a != b:
                    pairwise_kld[a, b] = _counted_kld(counter, comps[a], comps[b])
    prune_cost = None if kind is CostKind.RUNNALLS_B else np.full(n, np.inf)
    table = CostTable(
        kind, pair_cost, prune_cost, pairwise_kld, None, kernel_a, kernel_b, degenerate, discovered
    )
    _refresh_weighted(table, m)
    return table


def _delete_rc(arr: np.ndarray, idx: tuple[int, ...]) -> np.ndarray:
    return np.delete(np.delete(arr, idx, axis=0), idx, axis=1)


def _insert_rc(arr: np.ndarray, pos: int, fill) -> np.ndarray:
    out = np.insert(arr, pos, fill, axis=0)
    return np.insert(out, pos, fill, axis=1)


def update_cost_table(
    table: CostTable, m_after: GaussianMixture, applied: Hypothesis, counter: EvalCounter | None = None
) -> CostTable:
    """Advance a cost table across one applied hypothesis.

    ``m_after`` is the mixture the applied hypothesis produced.  Returns
    a new table; the input is not modified.  Surviving kernels, pairwise
    divergences and Gram entries are carried over, and only statistics
    involving a newly merged component are evaluated.
    """
    kind = table.kind
    if isinstance(applied, Prune):
        drop: tuple[int, ...] = (applied.j - 1,)
        insert_at = None
    elif isinstance(applied, Merge):
        drop = (applied.i - 1, applied.j - 1)
        insert_at = applied.i - 1
    else:
        raise ValueError(f"unknown hypothesis type: {applied!r}")

    n_after = m_after.size
    discovered = []
    pair_cost = np.full((n_after, n_after), np.inf)
    degenerate = _delete_rc(table.degenerate, drop)
    pairwise_kld = None if table.pairwise_kld is None else _delete_rc(table.pairwise_kld, drop)
    gram = None if table.gram is None else _delete_rc(table.gram, drop)
    kernel_a = None if table.kernel_a is None else _delete_rc(table.kernel_a, drop)
    kernel_b = None if table.kernel_b is None else _delete_rc(table.kernel_b, drop)

    if insert_at is not None:
        merged = m_after.components[insert_at]
        degenerate = _insert_rc(degenerate, insert_at, False)
        if gram is not None:
            gram = _insert_rc(gram, insert_at, 0.0)
            for idx, c in enumerate(m_after.components):
                gram[insert_at, idx] = gram[idx, insert_at] = _counted_overlap(
                    counter, c if idx != insert_at else merged, merged
                )
        if pairwise_kld is not None:
            pairwise_kld = _insert_rc(pairwise_kld, insert_at, 0.0)
            for idx, c in enumerate(m_after.components):
                if idx != insert_at:
                    pairwise_kld[idx, insert_at] = _counted_kld(counter, c, merged)
                    pairwise_kld[insert_at, idx] = _counted_kld(counter, merged, c)
        if kernel_a is not None:
            kernel_a = _insert_rc(kernel_a, insert_at, np.nan)
            kernel_b = _insert_rc(kernel_b, insert_at, np.nan)
            for idx, c in enumerate(m_after.components):
                if idx == insert_at:
                    continue
                lo, hi = min(idx, insert_at), max(idx, insert_at)
                first = m_after.components[lo]
                second = m_after.components[hi]
                try:
                    kernel_a[lo, hi], kernel_b[lo, hi] = _pair_kernel(kind, first, second, counter)
                except np.linalg.LinAlgError:
                    degenerate[lo, hi] = True
                    discovered.append(Merge(lo + 1, hi + 1))

    prune_cost = None if kind is CostKind.RUNNALLS_B else np.full(n_after, np.inf)
    new_table = CostTable(
        kind, pair_cost, prune_cost, pairwise_kld, gram, kernel_a, kernel_b, degenerate, discovered
    )
    if kind is CostKind.WILLIAMS_ISE:
        _refresh_williams(new_table, m_after, counter)
    else:
        _refresh_weighted(new_table, m_after)
    return new_table


@dataclass(frozen=True)
class TraceStep:
    """One applied reduction step.

    ``flags`` carries anomalies worth surfacing: ``"negative_cost"``
    marks a surrogate that came out below zero (possible for
    near-duplicate pairs; the literal value is kept).  ``all_costs``
    optionally maps every evaluated hypothesis to its cost.
    """

    chosen: Hypothesis
    cost: float
    size_after: int
    flags: tuple[str, ...] = ()
    all_costs: dict | None = None


@dataclass(frozen=True)
class ReductionTrace:
    """Full record of a greedy reduction, sufficient to replay it.

    ``skipped`` lists (step index, merge) pairs that were excluded with
    +inf cost because the candidate covariance failed to factorize.
    Step indices are 0-based positions into ``steps``.
    """

    method: CostKind
    steps: tuple[TraceStep, ...]
    eval_count: int = 0
    per_step_eval_counts: tuple[int, ...] = ()
    skipped: tuple[tuple[int, Merge], ...] = ()


def _costs_in_canonical_order(table: CostTable) -> np.ndarray:
    n = table.size
    iu, ju = np.triu_indices(n, k=1)
    merge_costs = table.pair_cost[iu, ju]
    if table.prune_cost is None:
        return merge_costs
    return np.concatenate([table.prune_cost, merge_costs])


def reduce(
    m: GaussianMixture, target: int, kind: CostKind, record_all_costs: bool = False
) -> tuple[GaussianMixture, ReductionTrace]:
    """Greedily reduce a normalized mixture to ``target`` components.

    Returns the reduced mixture and a trace that replays to it exactly.
    ``target == len(m)`` is a no-op with an empty trace.  Raises
    ``ValueError`` for an out-of-range target and propagates a
    factorization error if every admissible hypothesis is degenerate.
    """
    if not isinstance(kind, CostKind):
        raise ValueError(f"kind must be a CostKind, got {kind!r}")
    if not 1 <= target <= m.size:
        raise ValueError(f"target must lie in [1, {m.size}], got {target}")
    if not m.is_normalized:
        raise ValueError("reduction requires a normalized mixture")
    counter = EvalCounter()
    steps: list[TraceStep] = []
    per_step: list[int] = []
    skipped: list[tuple[int, Merge]] = []
    cur = m
    table: CostTable | None = None
    pending: Hypothesis | None = None
    while cur.size > target:
        evals_before = counter.total
        if table is None:
            table = build_cost_table(cur, kind, counter)
        else:
            table = update_cost_table(table, cur, pending, counter)
        skipped.extend((len(steps), h) for h in table.new_degenerate)
        hyps = enumerate_hypotheses(cur, kind.include_pruning)
        costs_arr = _costs_in_canonical_order(table)
        pick = int(np.argmin(costs_arr))
        cost = float(costs_arr[pick])
        if not np.isfinite(cost):
            raise np.linalg.LinAlgError("every admissible hypothesis is degenerate")
        chosen = hyps[pick]
        cur = mix.apply(cur, chosen)
        pending = chosen
        flags = ("negative_cost",) if cost < 0.0 else ()
        all_costs = dict(zip(hyps, costs_arr.tolist())) if record_all_costs else None
        steps.append(TraceStep(chosen, cost, cur.size, flags, all_costs))
        per_step.append(counter.total - evals_before)
    trace = ReductionTrace(kind, tuple(steps), counter.total, tuple(per_step), tuple(skipped))
    return cur, trace


def _naive_cost(m: GaussianMixture, h: Hypothesis, kind: CostKind, counter: EvalCounter | None) -> float:
    """From-scratch cost of one hypothesis, counting every evaluation.

    Mirrors the public per-hypothesis cost functions through the same
    assembly helpers, so values agree with the cached engine bit for bit
    wherever the inputs do.
    """
    if kind is CostKind.WILLIAMS_ISE:
        try:
            q = mix.apply(m, h)
        except np.linalg.LinAlgError:
            return np.inf
        n, nq = m.size, q.size
        gpp = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                gpp[a, b] = _counted_overlap(counter, m.components[a], m.components[b])
        gqq = np.empty((nq, nq))
        for a in range(nq):
            for b in range(nq):
                gqq[a, b] = _counted_overlap(counter, q.components[a], q.components[b])
        gpq = np.empty((n, nq))
        for a in range(n):
            for b in range(nq):
                gpq[a, b] = _counted_overlap(counter, m.components[a], q.components[b])
        return _ise_from_overlaps(m.weights, q.weights, gpp, gqq, gpq)
    if isinstance(h, Prune):
        w = m.weights
        if kind is CostKind.ARKL_SIMPLE:
            return crude_prune_bound(w[h.j - 1])
        if kind is CostKind.ARKL_FULL:
            i0 = h.j - 1
            col = np.array(
                [
                    _counted_kld(counter, c, m.components[i0]) if r != i0 else 0.0
                    for r, c in enumerate(m.components)
                ]
            )
            return float(np.min(_arkl_prune_terms(w, col, i0)))
        raise ValueError(f"no prune cost under {kind}")
    a, b = m.components[h.i - 1], m.components[h.j - 1]
    try:
        k_a, k_b = _pair_kernel(kind, a, b, counter)
    except np.linalg.LinAlgError:
        return np.inf
    return _assemble_pair_cost(kind, a.weight, b.weight, k_a, k_b)


def reference_reduce(
    m: GaussianMixture, target: int, kind: CostKind
) -> tuple[GaussianMixture, ReductionTrace]:
    """Cache-free reference engine: every cost recomputed from scratch.

    Same hypothesis ordering, tie-breaking and step semantics as
    :func:`reduce`; exists as the correctness baseline for the cached
    engine and as the naive-complexity yardstick.
    """
    if not isinstance(kind, CostKind):
        raise ValueError(f"kind must be a CostKind, got {kind!r}")
    if not 1 <= target <= m.size:
        raise ValueError(f"target must lie in [1, {m.size}], got {target}")
    if not m.is_normalized:
        raise ValueError("reduction requires a normalized mixture")
    counter = EvalCounter()
    steps: list[TraceStep] = []
    per_step: list[int] = []
    skipped: list[tuple[int, Merge]] = []
    cur = m
    while cur.size > target:
        evals_before = counter.total
        hyps = enumerate_hypotheses(cur, kind.include_pruning)
        costs_arr = np.array([_naive_cost(cur, h, kind, counter) for h in hyps])
        for pos, h in enumerate(hyps):
            if isinstance(h, Merge) and np.isinf(costs_arr[pos]):
                skipped.append((len(steps), h))
        pick = int(np.argmin(costs_arr))
        cost = float(costs_arr[pick])
        if not np.isfinite(cost):
            raise np.linalg.LinAlgError("every admissible hypothesis is degenerate")
        chosen = hyps[pick]
        cur = mix.apply(cur, chosen)
        flags = ("negative_cost",) if cost < 0.0 else ()
        steps.append(TraceStep(chosen, cost, cur.size, flags))
        per_step.append(counter.total - evals_before)
    trace = ReductionTrace(kind, tuple(steps), counter.total, tuple(per_step), tuple(skipped))
    return cur, trace


def cost_eval_count(trace: ReductionTrace) -> int:
    """Total pairwise-statistic evaluations recorded in a trace."""
    return trace.eval_count
