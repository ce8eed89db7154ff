"""Constructors for the kernel families and worked examples used throughout.

Birth-death chains on a segment, the perturbed-stick pair whose alternating
composition develops a geometric invariant profile, the small two-, five-
and seven-point counterexample kernels, and weighted-graph walks with the
Metropolis reweighting that pins a prescribed reversible measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from mpmath import mp

from .chain_core import ProbMeasure, StateSpace, StochasticKernel
from .rng import substream

DETAILED_BALANCE_ATOL = 1e-12


# ---------------------------------------------------------------------------
# birth-death chains on {0, ..., N}


def constant_rate_bd(N: int, p: float, q: float, r: float) -> StochasticKernel:
    """Constant-rate birth-death chain on ``{0, ..., N}``.

    Interior states move up with ``p``, down with ``q`` and hold with ``r``;
    at the two ends the blocked move is reflected into holding, so
    ``K(0,0) = q + r`` and ``K(N,N) = p + r``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if min(p, q, r) < 0 or abs(p + q + r - 1.0) > 1e-12:
        raise ValueError(f"rates must be a probability triple, got p={p} q={q} r={r}")
    k = np.zeros((N + 1, N + 1))
    for x in range(N + 1):
        if x < N:
            k[x, x + 1] = p
        if x > 0:
            k[x, x - 1] = q
        k[x, x] = r
    k[0, 0] += q
    k[N, N] += p
    return StochasticKernel(StateSpace(N + 1), k)


@dataclass(frozen=True)
class BirthDeathSpec:
    """A general birth-death chain with its reversible measure and class flags.

    ``within_rate_band`` and ``within_measure_band`` report membership in
    the reference class of nearly uniform chains: every transition
    probability in ``[1/4, 3/4]`` and ``1/4 <= (N+1) pi(x) <= 4``. The
    flags are informational; membership is not enforced.
    """

    N: int
    up: np.ndarray
    down: np.ndarray
    hold: np.ndarray
    kernel: StochasticKernel
    reversible_measure: ProbMeasure
    within_rate_band: bool
    within_measure_band: bool


def general_bd(N: int, up, down, hold=None) -> BirthDeathSpec:
    """Birth-death chain with per-site rates.

    ``up[x]`` and ``down[x]`` are the probabilities of ``x -> x+1`` and
    ``x -> x-1``; ``up[N]`` and ``down[0]`` must be 0. Holding defaults to
    the leftover mass. The reversible measure comes from the standard
    product formula ``pi(x) proportional to prod_{j<x} up[j]/down[j+1]``.
    """
    up = np.asarray(up, dtype=float)
    down = np.asarray(down, dtype=float)
    if up.shape != (N + 1,) or down.shape != (N + 1,):
        raise ValueError("up and down must have length N+1")
    if up[N] != 0 or down[0] != 0:
        raise ValueError("up[N] and down[0] must be 0")
    hold = 1.0 - up - down if hold is None else np.asarray(hold, dtype=float)
    if np.abs(up + down + hold - 1.0).max() > 1e-12 or min(up.min(), down.min(), hold.min()) < 0:
        raise ValueError("per-site rates must form probability triples")
    if up[:N].min() <= 0 or down[1:].min() <= 0:
        raise ValueError("interior up and down rates must be positive (irreducible chain)")
    k = np.zeros((N + 1, N + 1))
    for x in range(N + 1):
        if x < N:
            k[x, x + 1] = up[x]
        if x > 0:
            k[x, x - 1] = down[x]
        k[x, x] = hold[x]
    kernel = StochasticKernel(StateSpace(N + 1), k)

    log_pi = np.concatenate(([0.0], np.cumsum(np.log(up[:N]) - np.log(down[1:]))))
    log_pi -= log_pi.max()
    pi = np.exp(log_pi)
    measure = ProbMeasure(kernel.space, pi / pi.sum())
    residual = measure.weights[:, None] * kernel.entries
    if np.abs(residual - residual.T).max() > DETAILED_BALANCE_ATOL:
        raise ArithmeticError("detailed balance residual out of tolerance")

    entries = kernel.entries
    active = entries[np.abs(np.subtract.outer(np.arange(N + 1), np.arange(N + 1))) <= 1]
    rate_band = bool((active >= 0.25 - 1e-15).all() and (active <= 0.75 + 1e-15).all())
    scaled = (N + 1) * measure.weights
    measure_band = bool((scaled >= 0.25 - 1e-15).all() and (scaled <= 4 + 1e-15).all())
    return BirthDeathSpec(N, up, down, hold, kernel, measure, rate_band, measure_band)


# ---------------------------------------------------------------------------
# the perturbed stick pair


def perturbed_stick_pair(N: int, p: float, q: float, r: float,
                         eta1: float, eta2: float) -> tuple[StochasticKernel, StochasticKernel]:
    """The two perturbed stick kernels on ``{0, ..., N}``, ``N`` odd.

    The first kernel moves even sites up with ``p`` / down with ``q`` and
    odd sites up with ``q`` / down with ``p``, holds interior sites with
    ``r``, reflects at 0 (``q + r`` holding) and holds the top state with
    ``eta1``. The second kernel swaps the roles of ``p`` and ``q`` and
    replaces ``eta1`` by ``eta2``. Both are reversible; their reversible
    measures are flat except at the top state and are returned by
    :func:`stick_pair_measures`.
    """
    if N < 3 or N % 2 == 0:
        raise ValueError("N must be odd and >= 3")
    if min(p, q, r) < 0 or abs(p + q + r - 1.0) > 1e-12:
        raise ValueError("p, q, r must be a probability triple")
    if not (0 <= eta1 < 1 and 0 <= eta2 < 1):
        raise ValueError("eta parameters must lie in [0, 1)")

    def build(up_even: float, down_even: float, eta: float) -> StochasticKernel:
        n = (N - 1) // 2
        k = np.zeros((N + 1, N + 1))
        for x in range(0, n + 1):
            k[2 * x, 2 * x + 1] = up_even
        for x in range(1, n + 1):
            k[2 * x, 2 * x - 1] = down_even
            k[2 * x - 1, 2 * x] = down_even
        for x in range(0, n):
            k[2 * x + 1, 2 * x] = up_even
        for x in range(1, N):
            k[x, x] = r
        k[0, 0] = down_even + r
        k[N, N] = eta
        k[N, N - 1] = 1.0 - eta
        return StochasticKernel(StateSpace(N + 1), k)

    q1 = build(p, q, eta1)
    q2 = build(q, p, eta2)
    for kern, pi in zip((q1, q2), stick_pair_measures(N, p, q, r, eta1, eta2)):
        flow = pi.weights[:, None] * kern.entries
        if np.abs(flow - flow.T).max() > DETAILED_BALANCE_ATOL:
            raise ArithmeticError("stick kernel failed its detailed balance check")
    return q1, q2


def stick_pair_measures(N: int, p: float, q: float, r: float,
                        eta1: float, eta2: float) -> tuple[ProbMeasure, ProbMeasure]:
    """Reversible measures of the two stick kernels (flat below the top state)."""
    space = StateSpace(N + 1)
    out = []
    for rate, eta in ((p, eta1), (q, eta2)):
        w = np.full(N + 1, (1.0 - eta) / rate)
        w[N] = 1.0
        out.append(ProbMeasure(space, w / w.sum()))
    return out[0], out[1]


def circle_relabeling(N: int) -> list[int]:
    """State order that turns the composed stick pair into a line chain.

    Descending odd states from ``N`` down to 1, then ascending even states
    from 0 up to ``N-1``; position ``i`` in this list is the state whose
    composed-chain invariant weight is ``alpha + beta (p/q)^(2i)``.
    """
    n = (N - 1) // 2
    return [N - 2 * i for i in range(n + 1)] + [2 * j for j in range(n + 1)]


def closed_form_invariant(N: int, p: float, q: float, eta1: float, eta2: float) -> ProbMeasure:
    """Invariant measure of the composed stick pair with zero holding.

    Solves the invariance equations of the composed kernel (first stick
    kernel applied first) in closed form: along :func:`circle_relabeling`
    the weights are ``alpha + beta (p/q)^(2i)`` with::

        beta  = [(1-eta1) q/p - (1-eta2)] / [q - p + p eta2 (1 - (p/q)^(2N))]
        alpha = [(1-eta2) eta1 - (1-eta1) eta2 (p/q)^(2N)] / [same denominator]

    and weight 1 at relabeling position 0. Requires ``p + q = 1`` and
    ``p != q``. Evaluated in extended precision: ``(p/q)^(2N)`` spans many
    decades already for moderate ``N`` and the terms combine with mixed
    signs.
    """
    if abs(p + q - 1.0) > 1e-12:
        raise ValueError("closed form needs r = 0, so p + q = 1")
    if p == q:
        raise ValueError("closed form degenerates at p = q")
    digits = 40 + int(2 * N * abs(np.log10(p / q))) + N
    with mp.workdps(digits):
        mp_p, mp_q = mp.mpf(p), mp.mpf(q)
        mp_e1, mp_e2 = mp.mpf(eta1), mp.mpf(eta2)
        t = (mp_p / mp_q) ** 2
        t_pow_n = t ** N
        den = mp_q - mp_p + mp_p * mp_e2 * (1 - t_pow_n)
        beta = ((1 - mp_e1) * (mp_q / mp_p) - (1 - mp_e2)) / den
        alpha = ((1 - mp_e2) * mp_e1 - (1 - mp_e1) * mp_e2 * t_pow_n) / den
        vals = [mp.mpf(1)]
        for i in range(1, N + 1):
            vals.append(alpha + beta * t ** i)
        total = mp.fsum(vals)
        normalized = [v / total for v in vals]
    weights = np.zeros(N + 1)
    for i, state in enumerate(circle_relabeling(N)):
        weights[state] = float(normalized[i])
    return ProbMeasure(StateSpace(N + 1), weights)


# ---------------------------------------------------------------------------
# small counterexample kernels


def _srw_kernel(n: int, edges, loops) -> StochasticKernel:
    degree = np.zeros(n)
    for x, y in edges:
        degree[x] += 1
        degree[y] += 1
    for x in loops:
        degree[x] += 1
    k = np.zeros((n, n))
    for x, y in edges:
        k[x, y] += 1.0 / degree[x]
        k[y, x] += 1.0 / degree[y]
    for x in loops:
        k[x, x] += 1.0 / degree[x]
    return StochasticKernel(StateSpace(n), k)


def _default_shift_kernel() -> StochasticKernel:
    # 0 -> 1 -> 2 deterministically, 2 splits back to {0, 1}: irreducible,
    # aperiodic, not reversible, and sharing-a-successor fails to connect
    # state 1 to the others, so the kernel composed with its adjoint is
    # reducible.
    return StochasticKernel(StateSpace(3), np.array([
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
    ]))


def small_example(name: str, a: float | None = None, b: float | None = None,
                  base: StochasticKernel | None = None) -> tuple[StochasticKernel, ...]:
    """Named small kernel sets.

    ``two_point(a, b)``
        ``[[0, 1], [1-a, a]]`` and ``[[b, 1-b], [1, 0]]`` with parameters in
        ``(0, 1)``: merging in total variation, never in relative-sup.
    ``five_point``
        Unit-weight walk kernels on two five-vertex graphs that differ by
        swapping the hub's neighbors; alternating them traps the support in
        a two-cycle of sets while total variation still merges.
    ``seven_point``
        Unit-weight walk kernels on two seven-vertex graphs; alternating
        them splits mass between two oscillating traps, so even total
        variation merging fails.
    ``adjoint_pair``
        ``(K, K*)`` for a non-reversible base kernel (default: a 3-state
        shift with a split return) whose composition ``K K*`` is reducible.
    """
    if name == "two_point":
        if a is None or b is None or not (0 < a < 1 and 0 < b < 1):
            raise ValueError("two_point needs parameters a, b in (0, 1)")
        space = StateSpace(2)
        return (
            StochasticKernel(space, np.array([[0.0, 1.0], [1.0 - a, a]])),
            StochasticKernel(space, np.array([[b, 1.0 - b], [1.0, 0.0]])),
        )
    if name == "five_point":
        # left vertex 0 loops and hangs off a degree-3 hub; the second graph
        # swaps labels 1<->2 and 3<->4 of the first
        q0 = _srw_kernel(5, [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)], [0])
        q1 = _srw_kernel(5, [(0, 2), (2, 1), (2, 4), (1, 3), (4, 3)], [0])
        return q0, q1
    if name == "seven_point":
        # path into a looped middle vertex, then a diamond to the far end;
        # the second graph swaps labels 0<->1, 3<->4, 5<->6 of the first
        q0 = _srw_kernel(7, [(0, 1), (1, 2), (2, 3), (3, 4), (3, 5), (4, 6), (5, 6)], [2])
        q1 = _srw_kernel(7, [(1, 0), (0, 2), (2, 4), (4, 3), (4, 6), (3, 5), (6, 5)], [2])
        return q0, q1
    if name == "adjoint_pair":
        from .chain_core import adjoint_kernel, stationary_measure

        k = base if base is not None else _default_shift_kernel()
        return k, adjoint_kernel(k, stationary_measure(k))
    raise ValueError(f"unknown example {name!r}")


# ---------------------------------------------------------------------------
# weighted graphs


@dataclass(frozen=True)
class WeightedGraph:
    """A connected non-oriented graph with loops allowed and positive weights.

    Edges are pairs ``(x, y)`` with ``x <= y``; a loop is ``(x, x)`` and
    counts once in the degree. ``weights`` is parallel to ``edges``.
    """

    space: StateSpace
    edges: tuple[tuple[int, int], ...]
    weights: np.ndarray

    def __post_init__(self):
        n = self.space.size
        seen = set()
        for x, y in self.edges:
            if not (0 <= x <= y < n):
                raise ValueError(f"edge ({x}, {y}) out of range or not ordered")
            if (x, y) in seen:
                raise ValueError(f"duplicate edge ({x}, {y})")
            seen.add((x, y))
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.edges),):
            raise ValueError("weights must align with edges")
        if len(self.edges) and w.min() <= 0:
            raise ValueError("weights must be strictly positive")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not self._connected():
            raise ValueError("graph must be connected")

    def _connected(self) -> bool:
        n = self.space.size
        adj = [[] for _ in range(n)]
        for x, y in self.edges:
            adj[x].append(y)
            adj[y].append(x)
        seen = {0}
        stack = [0]
        while stack:
            for nbr in adj[stack.pop()]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        return len(seen) == n

    @property
    def n_vertices(self) -> int:
        return self.space.size

    @property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=int)
        for x, y in self.edges:
            d[x] += 1
            if y != x:
                d[y] += 1
        return d

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    @property
    def degree_measure(self) -> ProbMeasure:
        d = self.degrees.astype(float)
        return ProbMeasure(self.space, d / d.sum())

    def incident_weight(self, weights: np.ndarray | None = None) -> np.ndarray:
        """Total weight at each vertex, loops counted once."""
        w = self.weights if weights is None else np.asarray(weights, dtype=float)
        s = np.zeros(self.n_vertices)
        for (x, y), we in zip(self.edges, w):
            s[x] += we
            if y != x:
                s[y] += we
        return s

    @property
    def total_weight(self) -> float:
        """The normalization ``sum_x sum_{e at x} w_e``."""
        return float(self.incident_weight().sum())

    @property
    def weight_ratio(self) -> float:
        """Largest ratio between two edge weights (at least 1)."""
        return float(self.weights.max() / self.weights.min())

    @property
    def has_all_loops(self) -> bool:
        loops = {x for x, y in self.edges if x == y}
        return len(loops) == self.n_vertices

    def with_weights(self, weights) -> "WeightedGraph":
        return WeightedGraph(self.space, self.edges, np.asarray(weights, dtype=float))

    def unit_weights(self) -> "WeightedGraph":
        return self.with_weights(np.ones(len(self.edges)))

    def to_json(self) -> dict:
        from .chain_core import space_to_json

        return {
            "space": space_to_json(self.space),
            "edges": [list(e) for e in self.edges],
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WeightedGraph":
        from .chain_core import space_from_json

        return cls(
            space_from_json(obj["space"]),
            tuple((min(x, y), max(x, y)) for x, y in obj["edges"]),
            np.asarray(obj["weights"], dtype=float),
        )


def graph_kernel(g: WeightedGraph) -> tuple[StochasticKernel, ProbMeasure]:
    """Weighted-walk kernel ``K(x,y) = w_xy / sum_{e at x} w_e`` and its measure.

    The reversible measure is the incident weight normalized by the total;
    scaling all weights leaves both outputs unchanged.
    """
    s = g.incident_weight()
    k = np.zeros((g.n_vertices, g.n_vertices))
    for (x, y), w in zip(g.edges, g.weights):
        k[x, y] += w / s[x]
        if y != x:
            k[y, x] += w / s[y]
    kernel = StochasticKernel(g.space, k)
    pi = ProbMeasure(g.space, s / s.sum())
    flow = pi.weights[:, None] * kernel.entries
    if np.abs(flow - flow.T).max() > DETAILED_BALANCE_ATOL:
        raise ArithmeticError("graph kernel failed its detailed balance check")
    return kernel, pi


def metropolis_reweight(g: WeightedGraph, pi_target: ProbMeasure,
                        a_max: float | None = None) -> np.ndarray:
    """Edge weights whose walk has ``pi_target`` as reversible measure.

    This is the Metropolis construction with the current weights as
    proposal: non-loop weights are scaled by the smaller of the two
    endpoint ratios ``pi_target / pi(w)`` and loops absorb the leftover
    mass, which stays positive. Requires a loop at every vertex. With
    ``a`` the band of ``pi_target / degree measure`` and ``b`` the weight
    ratio of ``g``, the new weight ratio is at most ``a^2 (b^3 + b D)``.

    Returns the new weight vector aligned with ``g.edges``.
    """
    if not g.has_all_loops:
        raise ValueError("metropolis reweight needs a loop at every vertex")
    if pi_target.space != g.space:
        raise ValueError("measure lives on a different space")
    if not pi_target.positive:
        raise ValueError("pi_target must be strictly positive")
    delta = g.degree_measure.weights
    ratio_band = max(float((pi_target.weights / delta).max()),
                     float((delta / pi_target.weights).max()))
    if a_max is not None and ratio_band > a_max:
        raise ValueError(f"pi_target sits in the a={ratio_band:.4g} band, beyond a_max={a_max}")
    c_v = g.total_weight
    pi_v = g.incident_weight() / c_v
    scale = pi_target.weights / pi_v
    new = np.empty(len(g.edges))
    loop_index = {}
    nonloop_sum = np.zeros(g.n_vertices)
    for idx, ((x, y), w) in enumerate(zip(g.edges, g.weights)):
        if x == y:
            loop_index[x] = idx
        else:
            new[idx] = w * min(scale[x], scale[y])
            nonloop_sum[x] += new[idx]
            nonloop_sum[y] += new[idx]
    for x, idx in loop_index.items():
        new[idx] = c_v * pi_target.weights[x] - nonloop_sum[x]
        if new[idx] <= 0:
            raise ArithmeticError(f"loop weight at vertex {x} came out non-positive")
    return new


def metropolis_ratio_bound(g: WeightedGraph, pi_target: ProbMeasure) -> float:
    """The guaranteed weight-ratio bound ``a^2 (b^3 + b D)`` for the reweight."""
    delta = g.degree_measure.weights
    a = max(float((pi_target.weights / delta).max()), float((delta / pi_target.weights).max()))
    b = g.weight_ratio
    return a * a * (b ** 3 + b * g.max_degree)


def random_weights(g: WeightedGraph, b: float, seed: int) -> np.ndarray:
    """I.i.d. log-uniform weights on ``[1, b]``; the weight ratio never exceeds ``b``."""
    if b < 1:
        raise ValueError("b must be >= 1")
    rng = substream(seed, 0x9E1A)
    return np.exp(rng.uniform(0.0, np.log(b), size=len(g.edges)))


def lazy_stick(N: int) -> WeightedGraph:
    """Path on ``{0, ..., N}`` with unit weights and a loop at every vertex."""
    if N < 1:
        raise ValueError("N must be >= 1")
    edges = [(x, x + 1) for x in range(N)] + [(x, x) for x in range(N + 1)]
    edges.sort()
    return WeightedGraph(StateSpace(N + 1), tuple(edges), np.ones(len(edges)))


def random_regular_graph(n: int, d: int, seed: int, max_tries: int = 2000,
                         with_loops: bool = False) -> WeightedGraph:
    """Random simple ``d``-regular graph by the pairing model with rejection.

    Stubs are matched uniformly; matchings with self-pairs or repeated
    pairs are rejected, as are disconnected graphs. ``with_loops`` adds a
    unit loop at every vertex afterwards (degrees become ``d + 1``).
    """
    if n * d % 2 != 0:
        raise ValueError("n * d must be even")
    if d < 2 or n <= d:
        raise ValueError("need 2 <= d < n")
    rng = substream(seed, 0x3E6)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        pairs = perm.reshape(-1, 2)
        edges = set()
        ok = True
        for x, y in pairs:
            x, y = int(min(x, y)), int(max(x, y))
            if x == y or (x, y) in edges:
                ok = False
                break
            edges.add((x, y))
        if not ok:
            continue
        edge_list = sorted(edges)
        if with_loops:
            edge_list = sorted(edge_list + [(x, x) for x in range(n)])
        try:
            return WeightedGraph(StateSpace(n), tuple(edge_list), np.ones(len(edge_list)))
        except ValueError:
            continue  # disconnected draw
    raise RuntimeError(f"no simple connected {d}-regular graph found in {max_tries} tries")
