"""Stability of kernel sets: word-tree envelopes and related criteria.

A set of kernels is stable around a reference measure when some starting
measure keeps every word of kernels inside a multiplicative band around
the reference. The envelope computed here is the exact maximum of
``max(mu_w/pi, pi/mu_w)`` over the full word tree up to a depth, which is
why enumeration is exhaustive by default: the envelope is a maximum and
sampling can only under-estimate it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .chain_core import (
    KernelSequence,
    ProbMeasure,
    StochasticKernel,
    classify_structure,
    stationary_measure,
)
from .rng import substream

DEFAULT_BUDGET_NODES = 1 << 20
_CHUNK_ROWS = 1 << 15


class EnumerationBudgetError(RuntimeError):
    """Word tree larger than the node budget.

    Raise the budget for an exhaustive answer, or estimate from below by
    evaluating sampled words (for example i.i.d. :class:`KernelSequence`
    trajectories), accepting that a sampled envelope is a lower bound.
    """

    def __init__(self, nodes: int, budget: int):
        super().__init__(
            f"word tree has {nodes} nodes, budget is {budget}; raise budget_nodes "
            "or fall back to sampled words (the sampled envelope is only a lower bound)"
        )
        self.nodes = nodes
        self.budget = budget


def _tree_nodes(alphabet: int, depth: int) -> int:
    return sum(alphabet ** d for d in range(depth + 1))


def _check_budget(alphabet: int, depth: int, budget: int) -> None:
    nodes = _tree_nodes(alphabet, depth)
    if nodes > budget:
        raise EnumerationBudgetError(nodes, budget)


@dataclass(frozen=True)
class StabilityReport:
    """Envelope of measure-to-reference ratios over a word tree."""

    candidate_pi: ProbMeasure
    mu0: ProbMeasure
    depth: int
    c_estimate: float
    witness_word: tuple[int, ...]
    criterion_pass: bool | None = None

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "c_estimate": None if math.isinf(self.c_estimate) else self.c_estimate,
            "witness_word": list(self.witness_word),
            "criterion_pass": self.criterion_pass,
        }


def envelope_summary_csv(reports, path) -> None:
    """Write one ``depth,c_estimate`` line per report."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("depth,c_estimate\n")
        for report in reports:
            fh.write(f"{report.depth},{float(report.c_estimate)!r}\n")


@dataclass(frozen=True)
class WordEnumeration:
    """Exhaustive lexicographic enumeration plan over a kernel alphabet."""

    alphabet: int
    depth: int

    def words(self):
        for d in range(self.depth + 1):
            yield from itertools.product(range(self.alphabet), repeat=d)

    def count(self) -> int:
        return _tree_nodes(self.alphabet, self.depth)


def _walk_envelope(mats, mu0: np.ndarray, log_pi: np.ndarray, depth: int,
                   want_witness: bool = True) -> tuple[float, tuple[int, ...]]:
    """Max of ``max_x |log(mu_w(x)/pi(x))|`` over all words ``|w| <= depth``.

    Exact depth-first traversal. Subtrees whose leaf count fits a chunk are
    expanded level-by-level as one vectorized block; longer prefixes are
    walked explicitly. Zero measure entries produce an infinite envelope.
    """
    q = len(mats)
    size = mu0.shape[0]
    max_rows = max(1, _CHUNK_ROWS // size)
    sub_depth = 0
    while q ** (sub_depth + 1) <= max_rows and sub_depth < depth:
        sub_depth += 1
    prefix_depth = depth - sub_depth

    best = -np.inf
    best_word: tuple[int, ...] = ()

    def consider(level: np.ndarray, words) -> None:
        nonlocal best, best_word
        with np.errstate(divide="ignore"):
            scores = np.abs(np.log(level) - log_pi[None, :]).max(axis=1)
        top = int(scores.argmax())
        if scores[top] > best:
            best = float(scores[top])
            best_word = words(top) if want_witness else ()

    # proper prefixes (words shorter than prefix_depth), walked one by one
    for d in range(prefix_depth):
        for word in itertools.product(range(q), repeat=d):
            mu = mu0
            for letter in word:
                mu = mu @ mats[letter]
            consider(mu[None, :], lambda _i, w=word: w)

    # each prefix of full length roots one vectorized subtree
    for prefix in itertools.product(range(q), repeat=prefix_depth):
        mu = mu0
        for letter in prefix:
            mu = mu @ mats[letter]
        level = mu[None, :]
        consider(level, lambda _i, w=prefix: w)
        for extra in range(1, sub_depth + 1):
            level = np.stack([level @ m for m in mats], axis=1).reshape(-1, size)

            def decode(i: int, w=prefix, t=extra) -> tuple[int, ...]:
                letters = []
                for _ in range(t):
                    letters.append(i % q)
                    i //= q
                return w + tuple(reversed(letters))

            consider(level, decode)
    return best, best_word


def ratio_envelope(kernels, mu0: ProbMeasure, pi: ProbMeasure, depth: int,
                   budget_nodes: int = DEFAULT_BUDGET_NODES,
                   c_threshold: float | None = None) -> StabilityReport:
    """Exact ratio envelope of ``mu0`` against ``pi`` over the word tree.

    ``c_estimate`` is the max over all words of length at most ``depth``
    (the empty word included) and all states of
    ``max(mu_w(x)/pi(x), pi(x)/mu_w(x))``; it never decreases with depth.
    When ``c_threshold`` is given, ``criterion_pass`` records whether the
    envelope stayed at or below it.
    """
    kernels = list(kernels)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not (mu0.positive and pi.positive):
        raise ValueError("mu0 and pi must be strictly positive")
    _check_budget(len(kernels), depth, budget_nodes)
    log_best, word = _walk_envelope(
        [k.entries for k in kernels], mu0.weights, np.log(pi.weights), depth)
    c = float(np.exp(log_best))
    return StabilityReport(
        candidate_pi=pi,
        mu0=mu0,
        depth=depth,
        c_estimate=c,
        witness_word=word,
        criterion_pass=None if c_threshold is None else bool(c <= c_threshold),
    )


@dataclass(frozen=True)
class CriterionWitness:
    word: tuple[int, ...]
    reason: str
    detail: str


def product_invariant_criterion(kernels, pi: ProbMeasure, depth: int, c: float,
                                budget_nodes: int = DEFAULT_BUDGET_NODES,
                                max_witnesses: int = 10) -> tuple[bool, list[CriterionWitness]]:
    """Check every word product up to ``depth`` for the stability criterion.

    For each non-empty word ``w``, the product ``P_w`` must be irreducible
    and aperiodic and its invariant measure must satisfy
    ``pi/c <= pi_w <= c pi`` entrywise. This is a necessary condition for
    ``c``-stability of a merging set, and it is reported as a criterion,
    not as a proof. Witnesses list the first failing words in lexicographic
    order, capped at ``max_witnesses``.
    """
    kernels = list(kernels)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not pi.positive:
        raise ValueError("pi must be strictly positive")
    _check_budget(len(kernels), depth, budget_nodes)
    lo = pi.weights / c
    hi = pi.weights * c
    witnesses: list[CriterionWitness] = []

    def visit(word: tuple[int, ...], matrix: np.ndarray) -> None:
        if len(witnesses) >= max_witnesses:
            return
        k = StochasticKernel(pi.space, matrix)
        structure = classify_structure(k)
        if not (structure.irreducible and structure.aperiodic):
            reason = "reducible" if not structure.irreducible else "periodic"
            witnesses.append(CriterionWitness(word, reason,
                                              f"recurrent classes {structure.recurrent_classes}"))
            return
        pw = stationary_measure(k).weights
        slack = 1e-12
        if (pw < lo - slack).any() or (pw > hi + slack).any():
            state = int(np.argmax(np.maximum(lo - pw, pw - hi)))
            witnesses.append(CriterionWitness(
                word, "band",
                f"state {state}: pi_w={pw[state]:.6g} outside [{lo[state]:.6g}, {hi[state]:.6g}]"))

    mats = [k.entries for k in kernels]

    def dfs(word: tuple[int, ...], matrix: np.ndarray) -> None:
        if len(witnesses) >= max_witnesses:
            return
        for j, m in enumerate(mats):
            child = matrix @ m
            visit(word + (j,), child)
            if len(word) + 1 < depth:
                dfs(word + (j,), child)

    dfs((), np.eye(pi.space.size))
    return len(witnesses) == 0, witnesses


def search_stable_measure(kernels, pi: ProbMeasure, depth: int,
                          budget_nodes: int = DEFAULT_BUDGET_NODES,
                          seed: int = 0, max_passes: int = 40) -> tuple[ProbMeasure, float]:
    """Heuristic search for a starting measure minimizing the envelope.

    Minimizes ``F(mu0) = max_w max_x |log(mu_w(x)/pi(x))|`` by coordinate
    multiplicative updates projected back to the simplex, multi-started
    from ``pi``, the uniform measure, and the barycenter of the alphabet's
    stationary measures. Deterministic given the seed. The result is
    evidence, not proof: a failed search does not certify instability.
    """
    kernels = list(kernels)
    if not pi.positive:
        raise ValueError("pi must be strictly positive")
    _check_budget(len(kernels), depth, budget_nodes)
    mats = [k.entries for k in kernels]
    log_pi = np.log(pi.weights)
    size = pi.space.size

    def objective(w: np.ndarray) -> float:
        value, _ = _walk_envelope(mats, w, log_pi, depth, want_witness=False)
        return value

    starts = [pi.weights, np.full(size, 1.0 / size)]
    leaf_measures = []
    for k in kernels:
        if classify_structure(k).irreducible:
            leaf_measures.append(stationary_measure(k).weights)
    if leaf_measures:
        bary = np.mean(leaf_measures, axis=0)
        starts.append(bary / bary.sum())

    rng = substream(seed, 0x57A7)
    best_w = None
    best_f = np.inf
    for start in starts:
        w = start.copy()
        f = objective(w)
        step = 0.25
        for _ in range(max_passes):
            improved = False
            for x in rng.permutation(size):
                for factor in (1.0 + step, 1.0 / (1.0 + step)):
                    trial = w.copy()
                    trial[x] *= factor
                    trial /= trial.sum()
                    ft = objective(trial)
                    if ft < f - 1e-15:
                        w, f = trial, ft
                        improved = True
                        break
            if not improved:
                step /= 2.0
                if step < 1e-4:
                    break
        if best_w is None or f < best_f:
            best_f, best_w = f, w
    mu0 = ProbMeasure(pi.space, best_w)
    return mu0, float(np.exp(best_f))


def two_point_classify(kernels) -> tuple[str, tuple[int, int] | None]:
    """Stability of a set of 2x2 kernels by the zero-corner pattern.

    The set is unstable exactly when it contains an ordered pair of
    distinct kernels where the first never holds state 0 and the second
    never holds state 1; the witness pair of indices is returned.
    """
    kernels = list(kernels)
    for k in kernels:
        if k.space.size != 2:
            raise ValueError("two_point_classify needs 2x2 kernels")
    for i, a in enumerate(kernels):
        for j, b in enumerate(kernels):
            if i == j:
                continue
            distinct = not np.array_equal(a.entries, b.entries)
            if distinct and a.entries[0, 0] == 0.0 and b.entries[1, 1] == 0.0:
                return "unstable", (i, j)
    return "stable", None


@dataclass(frozen=True)
class LimitRowEstimate:
    """Backward-limit row estimate with its convergence diagnostic.

    ``spread`` is the worst column max-min gap of the deepest backward
    window; small values mean the window matrix is nearly row-constant and
    ``measure`` approximates the limit row. ``spreads[j]`` tracks the gap
    after extending the window ``j`` steps into the past (monotone
    non-increasing). ``extension_is_convention`` flags explicit-list
    sequences, which are reused cyclically for indices before the start.
    """

    measure: ProbMeasure
    spread: float
    spreads: np.ndarray
    n: int
    m_min: int
    extension_is_convention: bool


def limit_row_estimate(seq: KernelSequence, n: int, m_min: int) -> LimitRowEstimate:
    """Estimate the limit row of backward windows ``K_{m,n}`` as m decreases."""
    if m_min >= n:
        raise ValueError("m_min must be < n")
    size = seq.space.size
    p = np.eye(size)
    spreads = np.empty(n - m_min)
    for j, m in enumerate(range(n - 1, m_min - 1, -1)):
        p = seq.kernel_at(m + 1).entries @ p
        p = p / p.sum(axis=1)[:, None]
        spreads[j] = float((p.max(axis=0) - p.min(axis=0)).max())
    measure = ProbMeasure.from_weights(seq.space, p.mean(axis=0))
    return LimitRowEstimate(
        measure=measure,
        spread=float(spreads[-1]),
        spreads=spreads,
        n=n,
        m_min=m_min,
        extension_is_convention=seq.extension_is_convention,
    )
