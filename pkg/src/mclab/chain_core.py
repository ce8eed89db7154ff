"""State spaces, stochastic kernels, measures, products and structure.

All values are immutable after construction and every operation is a pure
function, so objects can be shared freely across threads. Matrices are
dense ``float64``; the intended scale is a few thousand states at most.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

ROW_SUM_ATOL = 1e-9        # constructor accepts rows this far from 1
VALUE_ATOL = 1e-12         # tolerance quoted in the public contracts


class ReducibleKernelError(ValueError):
    """Raised when an operation needs irreducibility and the kernel lacks it.

    Carries the recurrent classes so callers can report which parts of the
    state space decoupled.
    """

    def __init__(self, message: str, recurrent_classes: tuple[tuple[int, ...], ...]):
        super().__init__(message)
        self.recurrent_classes = recurrent_classes


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateSpace:
    """A finite, labelled state space.

    Parameters
    ----------
    size : int
        Number of states, at least 1.
    labels : tuple of str, optional
        Display labels, one per state, unique. Defaults to ``"0", "1", ...``.
    """

    size: int
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"state space needs size >= 1, got {self.size}")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.size)))
        if len(self.labels) != self.size:
            raise ValueError("labels length must equal size")
        if len(set(self.labels)) != self.size:
            raise ValueError("labels must be unique")

    @classmethod
    def of_size(cls, n: int) -> "StateSpace":
        return cls(n)


@dataclass(frozen=True, eq=False)
class ProbMeasure:
    """A probability vector on a :class:`StateSpace`.

    Weights must be non-negative and sum to 1 within ``1e-9``; they are
    renormalized on construction so the stored vector sums to 1 in working
    precision. ``positive`` is true iff every weight is strictly positive.
    """

    space: StateSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.space.size,):
            raise ValueError(f"weights shape {w.shape} does not match space size {self.space.size}")
        if w.min() < 0:
            raise ValueError(f"negative weight {w.min()}")
        total = w.sum()
        if abs(total - 1.0) > ROW_SUM_ATOL:
            raise ValueError(f"weights sum to {total}, not 1")
        object.__setattr__(self, "weights", _as_readonly(w / total))

    @property
    def positive(self) -> bool:
        return bool(self.weights.min() > 0)

    @classmethod
    def uniform(cls, space: StateSpace) -> "ProbMeasure":
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def dirac(cls, space: StateSpace, state: int) -> "ProbMeasure":
        w = np.zeros(space.size)
        w[state] = 1.0
        return cls(space, w)

    @classmethod
    def from_weights(cls, space: StateSpace, raw: Iterable[float]) -> "ProbMeasure":
        """Normalize arbitrary non-negative weights into a measure."""
        w = np.asarray(list(raw) if not isinstance(raw, np.ndarray) else raw, dtype=float)
        s = w.sum()
        if s <= 0:
            raise ValueError("weights must have positive total mass")
        return cls(space, w / s)


@dataclass(frozen=True, eq=False)
class StochasticKernel:
    """A row-stochastic square matrix on a :class:`StateSpace`.

    Entries must be non-negative and each row must sum to 1 within
    ``1e-9``; rows are renormalized on construction so stored sums are 1
    in working precision.
    """

    space: StateSpace
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        n = self.space.size
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match space size {n}")
        if m.min() < 0:
            raise ValueError(f"negative entry {m.min()}")
        sums = m.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_ATOL
        if bad.any():
            raise ValueError(f"rows {np.nonzero(bad)[0].tolist()} sum to {sums[bad]}, not 1")
        object.__setattr__(self, "entries", _as_readonly(m / sums[:, None]))

    @property
    def size(self) -> int:
        return self.space.size

    @classmethod
    def from_matrix(cls, matrix, space: StateSpace | None = None) -> "StochasticKernel":
        m = np.asarray(matrix, dtype=float)
        return cls(space if space is not None else StateSpace(m.shape[0]), m)

    @classmethod
    def identity(cls, space: StateSpace) -> "StochasticKernel":
        return cls(space, np.eye(space.size))

    @classmethod
    def _unchecked(cls, space: StateSpace, matrix: np.ndarray) -> "StochasticKernel":
        # Bypass used only where the contract explicitly disables the
        # stochasticity check (adjoint of a non-invariant measure).
        obj = object.__new__(cls)
        object.__setattr__(obj, "space", space)
        object.__setattr__(obj, "entries", _as_readonly(matrix))
        return obj


def _require_same_space(*objs) -> StateSpace:
    space = objs[0].space
    for o in objs[1:]:
        if o.space != space:
            raise ValueError("operands live on different state spaces")
    return space


@dataclass(eq=False)
class KernelSequence:
    """A rule producing the driving kernels ``K_1, K_2, ...``.

    Three rules are supported: an explicit finite list, a cyclic word over
    a finite kernel alphabet, and seeded i.i.d. draws from a finite kernel
    alphabet. Cyclic and i.i.d. rules extend to indices ``i <= 0`` (used by
    backward-limit estimates); explicit lists extend by cyclic reuse and
    carry ``extension_is_convention = True`` to flag that choice.
    """

    kind: str
    kernels: tuple[StochasticKernel, ...]
    word: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()
    seed: int = 0

    _draw_cache: dict = field(default_factory=dict, compare=False, repr=False)

    _BLOCK = 1024

    def __post_init__(self):
        if self.kind not in ("explicit", "cyclic", "iid"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if not self.kernels:
            raise ValueError("kernel set must be non-empty")
        _require_same_space(*self.kernels)
        if self.kind == "cyclic":
            if not self.word:
                object.__setattr__(self, "word", tuple(range(len(self.kernels))))
            if any(not 0 <= i < len(self.kernels) for i in self.word):
                raise ValueError("cyclic word indexes outside the kernel set")
        if self.kind == "iid":
            if not self.probs:
                object.__setattr__(self, "probs", (1.0 / len(self.kernels),) * len(self.kernels))
            if len(self.probs) != len(self.kernels):
                raise ValueError("probs length must match kernel set")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > ROW_SUM_ATOL:
                raise ValueError("probs must be a probability vector")

    @property
    def space(self) -> StateSpace:
        return self.kernels[0].space

    @property
    def extension_is_convention(self) -> bool:
        """True when indices ``i <= 0`` are defined only by cyclic reuse."""
        return self.kind == "explicit"

    @classmethod
    def explicit(cls, kernels: Sequence[StochasticKernel]) -> "KernelSequence":
        return cls("explicit", tuple(kernels))

    @classmethod
    def cyclic(cls, kernels: Sequence[StochasticKernel], word: Sequence[int] | None = None) -> "KernelSequence":
        return cls("cyclic", tuple(kernels), word=tuple(word) if word is not None else ())

    @classmethod
    def constant(cls, kernel: StochasticKernel) -> "KernelSequence":
        return cls("cyclic", (kernel,), word=(0,))

    @classmethod
    def iid(cls, kernels: Sequence[StochasticKernel], probs: Sequence[float] | None = None,
            seed: int = 0) -> "KernelSequence":
        return cls("iid", tuple(kernels), probs=tuple(probs) if probs is not None else (), seed=seed)

    def _iid_index(self, i: int) -> int:
        from .rng import substream

        block, offset = divmod(i, self._BLOCK)
        draws = self._draw_cache.get(block)
        if draws is None:
            u = substream(self.seed, block).random(self._BLOCK)
            cdf = np.cumsum(self.probs)
            draws = np.searchsorted(cdf, u, side="right").clip(0, len(self.kernels) - 1)
            self._draw_cache[block] = draws
        return int(draws[offset])

    def kernel_at(self, i: int) -> StochasticKernel:
        """Kernel ``K_i``; defined for every integer ``i`` (see class docs)."""
        if self.kind == "iid":
            return self.kernels[self._iid_index(i)]
        word = self.word if self.kind == "cyclic" else tuple(range(len(self.kernels)))
        return self.kernels[word[(i - 1) % len(word)]]

    def explicit_length(self) -> int | None:
        return len(self.kernels) if self.kind == "explicit" else None


# ---------------------------------------------------------------------------
# operations


def compose(a: StochasticKernel, b: StochasticKernel) -> StochasticKernel:
    """Matrix product ``ab(x, y) = sum_z a(x, z) b(z, y)``."""
    space = _require_same_space(a, b)
    return StochasticKernel(space, a.entries @ b.entries)


def product(seq: KernelSequence, m: int, n: int, order: str = "forward") -> StochasticKernel:
    """Iterated kernel over the window ``(m, n]``.

    ``forward`` returns ``K_{m+1} ... K_n`` and ``backward`` returns
    ``K_n ... K_{m+1}``; ``n == m`` gives the identity. Implemented as a
    literal fold of :func:`compose`, so the result carries the same
    floating-point operations as step-by-step composition.
    """
    if m > n:
        raise ValueError(f"need m <= n, got m={m} n={n}")
    if order not in ("forward", "backward"):
        raise ValueError(f"unknown order {order!r}")
    acc = StochasticKernel.identity(seq.space)
    for i in range(m + 1, n + 1):
        k = seq.kernel_at(i)
        acc = compose(acc, k) if order == "forward" else compose(k, acc)
    return acc


def evolve(mu0: ProbMeasure, seq: KernelSequence, n: int) -> list[ProbMeasure]:
    """Distributions ``mu_0, ..., mu_n`` with ``mu_i = mu_{i-1} K_i``.

    Computed by iterated vector-matrix products; the full product matrix is
    never materialized.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    _require_same_space(mu0, seq)
    out = [mu0]
    w = mu0.weights
    for i in range(1, n + 1):
        w = w @ seq.kernel_at(i).entries
        measure = ProbMeasure(seq.space, w)
        out.append(measure)
        w = measure.weights
    return out


def _gth_stationary(matrix: np.ndarray) -> np.ndarray:
    # Grassmann-Taksar-Heyman elimination: no subtractions, so the result
    # is entrywise accurate even when the measure spans many decades.
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ a[:k, k]
    return pi / pi.sum()


def stationary_measure(k: StochasticKernel) -> ProbMeasure:
    """The unique invariant measure of an irreducible kernel.

    Primary path is a direct solve of the singular system with the first
    row replaced by the normalization constraint. If that solution is not
    entrywise trustworthy (a non-positive entry, or a large relative
    residual on some state) the GTH elimination is used instead, which is
    accurate entry by entry regardless of the measure's dynamic range.

    Raises
    ------
    ReducibleKernelError
        If the kernel has more than one recurrent class; the error carries
        the classes.
    """
    report = classify_structure(k)
    if not report.irreducible:
        raise ReducibleKernelError(
            f"kernel is reducible ({len(report.recurrent_classes)} recurrent classes); "
            "the invariant measure is not unique",
            report.recurrent_classes,
        )
    n = k.size
    if n == 1:
        return ProbMeasure(k.space, np.ones(1))
    a = k.entries.T - np.eye(n)
    a[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    pi = np.linalg.solve(a, b)
    residual = pi @ k.entries - pi
    # relative residual per state: catches solutions whose small entries
    # are garbage even when the absolute residual looks fine
    entrywise_ok = pi.min() > 0 and np.max(np.abs(residual) / np.maximum(pi, 1e-300)) <= 1e-12
    if not entrywise_ok:
        pi = _gth_stationary(k.entries)
        residual = pi @ k.entries - pi
    if np.abs(residual).max() > VALUE_ATOL:
        raise ArithmeticError(f"stationary solve residual {np.abs(residual).max():.2e} exceeds 1e-12")
    return ProbMeasure(k.space, pi)


def _recurrent_classes(support: np.ndarray) -> tuple[list[list[int]], np.ndarray]:
    n = support.shape[0]
    n_comp, comp = connected_components(csr_matrix(support), directed=True, connection="strong")
    leaves = np.zeros(n_comp, dtype=bool)
    for c in range(n_comp):
        members = np.nonzero(comp == c)[0]
        outside = support[np.ix_(members, np.nonzero(comp != c)[0])]
        leaves[c] = not outside.any()
    classes = [sorted(np.nonzero(comp == c)[0].tolist()) for c in range(n_comp) if leaves[c]]
    classes.sort()
    return classes, comp


def _class_period(support: np.ndarray, members: list[int]) -> int:
    # gcd of cycle lengths through a strongly connected class, via BFS
    # levels: every edge u -> v contributes level(u) + 1 - level(v).
    sub = support[np.ix_(members, members)]
    m = len(members)
    level = np.full(m, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(sub[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    for u in range(m):
        for v in np.nonzero(sub[u])[0]:
            g = math.gcd(g, int(level[u]) + 1 - int(level[v]))
    return abs(g) if g != 0 else 1


@dataclass(frozen=True)
class StructureReport:
    """Communication structure of a kernel's positive-entry digraph."""

    irreducible: bool
    aperiodic: bool
    sia: bool
    recurrent_classes: tuple[tuple[int, ...], ...]
    period: int


def classify_structure(k: StochasticKernel) -> StructureReport:
    """Strongly-connected-component analysis of the support digraph.

    ``sia`` is true iff there is exactly one recurrent class and the
    kernel is aperiodic on it, which is equivalent to the powers of the
    kernel converging to a row-constant matrix.
    """
    support = k.entries > 0
    classes, _ = _recurrent_classes(support)
    periods = [_class_period(support, members) for members in classes]
    aperiodic = all(p == 1 for p in periods)
    period = periods[0] if len(periods) == 1 else math.gcd(*periods) if periods else 1
    return StructureReport(
        irreducible=len(classes) == 1 and len(classes[0]) == k.size,
        aperiodic=aperiodic,
        sia=len(classes) == 1 and periods[0] == 1,
        recurrent_classes=tuple(tuple(c) for c in classes),
        period=max(period, 1),
    )


def adjoint_kernel(k: StochasticKernel, pi: ProbMeasure) -> StochasticKernel:
    """Adjoint ``K*(x, y) = pi(y) K(y, x) / pi(x)`` on ``l2(pi)``.

    ``pi`` must be strictly positive. When ``pi K = pi`` (checked to
    ``1e-10``) the adjoint is row-stochastic; otherwise a warning is
    emitted and the raw adjoint matrix is returned with the stochasticity
    check disabled.
    """
    _require_same_space(k, pi)
    if not pi.positive:
        raise ValueError("adjoint needs a strictly positive measure")
    w = pi.weights
    adj = (w[None, :] * k.entries.T) / w[:, None]
    if np.abs(w @ k.entries - w).max() > 1e-10:
        warnings.warn("measure is not invariant for the kernel; adjoint rows may not sum to 1",
                      stacklevel=2)
        return StochasticKernel._unchecked(k.space, adj)
    return StochasticKernel(k.space, adj)


def total_variation(mu: np.ndarray, nu: np.ndarray) -> float:
    """Total variation distance between two probability vectors."""
    return 0.5 * float(np.abs(np.asarray(mu) - np.asarray(nu)).sum())


def contraction_coefficient(k: StochasticKernel) -> float:
    """Dobrushin coefficient: the largest TV distance between two rows.

    Submultiplicative under composition, hence a merging upper bound.
    """
    e = k.entries
    n = e.shape[0]
    if n <= 1:
        return 0.0
    if n <= 128:
        best = float((0.5 * np.abs(e[:, None, :] - e[None, :, :]).sum(axis=-1)).max())
    else:
        best = 0.0
        for i in range(n - 1):
            d = 0.5 * np.abs(e[i + 1:] - e[i]).sum(axis=1)
            best = max(best, float(d.max()))
    return min(best, 1.0)


# ---------------------------------------------------------------------------
# JSON wire formats
#
# kernel:   {"space": {"labels": [...]}, "matrix": [[...]]}
# measure:  {"space": {"labels": [...]}, "weights": [...]}
# sequence: {"kind": "cyclic"|"explicit"|"iid", "kernels": [...],
#            "word": [...], "probs": [...], "seed": <u64>}


def space_to_json(space: StateSpace) -> dict:
    return {"labels": list(space.labels)}


def space_from_json(obj: dict) -> StateSpace:
    labels = obj["labels"]
    return StateSpace(len(labels), tuple(labels))


def kernel_to_json(k: StochasticKernel) -> dict:
    return {"space": space_to_json(k.space), "matrix": k.entries.tolist()}


def kernel_from_json(obj: dict) -> StochasticKernel:
    return StochasticKernel(space_from_json(obj["space"]), np.asarray(obj["matrix"], dtype=float))


def measure_to_json(mu: ProbMeasure) -> dict:
    return {"space": space_to_json(mu.space), "weights": mu.weights.tolist()}


def measure_from_json(obj: dict) -> ProbMeasure:
    return ProbMeasure(space_from_json(obj["space"]), np.asarray(obj["weights"], dtype=float))


def sequence_to_json(seq: KernelSequence) -> dict:
    out: dict = {"kind": seq.kind, "kernels": [kernel_to_json(k) for k in seq.kernels]}
    if seq.kind == "cyclic":
        out["word"] = list(seq.word)
    if seq.kind == "iid":
        out["probs"] = list(seq.probs)
        out["seed"] = seq.seed
    return out


def sequence_from_json(obj: dict) -> KernelSequence:
    kernels = [kernel_from_json(k) for k in obj["kernels"]]
    kind = obj["kind"]
    if kind == "explicit":
        return KernelSequence.explicit(kernels)
    if kind == "cyclic":
        return KernelSequence.cyclic(kernels, obj.get("word"))
    if kind == "iid":
        return KernelSequence.iid(kernels, obj.get("probs"), obj.get("seed", 0))
    raise ValueError(f"unknown sequence kind {kind!r}")


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
