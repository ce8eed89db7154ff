"""Exact merging distances, merging times, and certified upper bounds.

Distances are computed from the full iterated-kernel matrix, never from
sampled trajectories, so the reported values are exact at desk scale.
The extremal-pair reduction applies throughout: the worst pair of Dirac
starting points realizes the supremum over all pairs of starting
distributions, both for total variation and for the relative-sup
statistic.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .chain_core import (
    KernelSequence,
    contraction_coefficient,
    product,
)

#: per-step renormalization drift allowed while accumulating products
DRIFT_ATOL = 1e-12


def tv_between_rows(matrix: np.ndarray) -> float:
    """Largest total-variation distance between two rows."""
    n = matrix.shape[0]
    if n <= 1:
        return 0.0
    if n <= 128:
        diffs = 0.5 * np.abs(matrix[:, None, :] - matrix[None, :, :]).sum(axis=-1)
        return float(diffs.max())
    best = 0.0
    for i in range(n - 1):
        d = 0.5 * np.abs(matrix[i + 1:] - matrix[i]).sum(axis=1)
        best = max(best, float(d.max()))
    return best


def relsup_between_rows(matrix: np.ndarray) -> float:
    """Relative-sup statistic ``max_y (max_x M(x,y)) / (min_x M(x,y)) - 1``.

    A column that is identically zero contributes 0 (the state is reached
    from nowhere); a column with both zero and positive entries yields
    ``+inf``.
    """
    mx = matrix.max(axis=0)
    mn = matrix.min(axis=0)
    if bool(((mn == 0) & (mx > 0)).any()):
        return math.inf
    live = mx > 0
    if not live.any():
        return 0.0
    return float((mx[live] / mn[live]).max() - 1.0)


def _accumulate(seq: KernelSequence, n: int):
    """Yield ``(i, K_{0,i})`` for ``i = 0..n`` with per-row renormalization."""
    p = np.eye(seq.space.size)
    yield 0, p
    for i in range(1, n + 1):
        p = p @ seq.kernel_at(i).entries
        sums = p.sum(axis=1)
        if np.abs(sums - 1.0).max() > DRIFT_ATOL:
            raise ArithmeticError(f"row-sum drift {np.abs(sums - 1.0).max():.2e} at step {i}")
        p = p / sums[:, None]
        yield i, p


def pairwise_distances(seq: KernelSequence, n: int) -> tuple[float, float]:
    """Exact ``(tv, relsup)`` distance over Dirac starting pairs at time n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    p = product(seq, 0, n, "forward").entries
    return tv_between_rows(p), relsup_between_rows(p)


def first_passage(seq: KernelSequence, epsilon: float, metric: str,
                  n_max: int) -> tuple[int | None, float, float]:
    """First ``n`` with pairwise distance <= epsilon, walking incrementally.

    Stops as soon as the chosen metric reaches the threshold; returns
    ``(time or None, tv, relsup)`` evaluated at the stopping step. Cheaper
    than :func:`merging_time` when only the passage time is needed.
    """
    if metric not in ("tv", "relsup"):
        raise ValueError(f"unknown metric {metric!r}")
    measure = tv_between_rows if metric == "tv" else relsup_between_rows
    p = np.eye(seq.space.size)
    hit: int | None = 0 if measure(p) <= epsilon else None
    if hit is None:
        for i in range(1, n_max + 1):
            p = p @ seq.kernel_at(i).entries
            p = p / p.sum(axis=1)[:, None]
            if measure(p) <= epsilon:
                hit = i
                break
    return hit, tv_between_rows(p), relsup_between_rows(p)


@dataclass(frozen=True)
class MergingReport:
    """Distance trajectories and first passage under a threshold.

    ``tv_time``/``relsup_time`` are the smallest ``n <= horizon`` at which
    the respective trajectory falls to ``epsilon`` or below, or ``None``
    when the threshold is not reached within the horizon. The certificate
    trajectories from the Doeblin and block-contraction bounds ride along
    for serialization.
    """

    horizon: int
    epsilon: float
    tv_trajectory: np.ndarray
    relsup_trajectory: np.ndarray
    tv_time: int | None
    relsup_time: int | None
    doeblin_trajectory: np.ndarray
    block_trajectory: np.ndarray
    renorm_drift: float = 0.0

    def time(self, metric: str) -> int | None:
        if metric == "tv":
            return self.tv_time
        if metric == "relsup":
            return self.relsup_time
        raise ValueError(f"unknown metric {metric!r}")

    def to_rows(self) -> list[dict]:
        rows = []
        for i in range(self.horizon + 1):
            rows.append({
                "n": i,
                "tv": float(self.tv_trajectory[i]),
                "relsup": float(self.relsup_trajectory[i]),
                "doeblin_bound": float(self.doeblin_trajectory[i]),
                "block_bound": float(self.block_trajectory[i]),
            })
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["n", "tv", "relsup", "doeblin_bound", "block_bound"])
            writer.writeheader()
            for row in self.to_rows():
                writer.writerow({k: repr(float(v)) if isinstance(v, float) else v
                                 for k, v in row.items()})

    def to_json(self, path=None):
        obj = {
            "horizon": self.horizon,
            "epsilon": self.epsilon,
            "tv_time": self.tv_time,
            "relsup_time": self.relsup_time,
            "tv": self.tv_trajectory.tolist(),
            "relsup": [None if math.isinf(v) else v for v in self.relsup_trajectory],
            "doeblin_bound": self.doeblin_trajectory.tolist(),
            "block_bound": self.block_trajectory.tolist(),
            "renorm_drift": self.renorm_drift,
        }
        if path is None:
            return obj
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")
        return obj


def merging_time(seq: KernelSequence, epsilon: float, metric: str = "tv",
                 n_max: int = 1000, block: int = 1) -> MergingReport:
    """Trajectories up to ``n_max`` and the first time distance <= epsilon.

    Both distance trajectories are recorded regardless of ``metric``; the
    metric argument only validates the epsilon range (total variation needs
    ``epsilon in (0, 1)``, relative-sup any positive value). ``None`` stands
    for "not reached": the horizon is reported rather than extrapolated.
    """
    if metric not in ("tv", "relsup"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "tv" and not 0 < epsilon < 1:
        raise ValueError("tv epsilon must lie in (0, 1)")
    if metric == "relsup" and epsilon <= 0:
        raise ValueError("relsup epsilon must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")

    tv = np.empty(n_max + 1)
    rs = np.empty(n_max + 1)
    drift = 0.0
    p = np.eye(seq.space.size)
    tv[0] = tv_between_rows(p)
    rs[0] = relsup_between_rows(p)
    for i in range(1, n_max + 1):
        p = p @ seq.kernel_at(i).entries
        sums = p.sum(axis=1)
        step_drift = float(np.abs(sums - 1.0).max())
        if step_drift > DRIFT_ATOL:
            raise ArithmeticError(f"row-sum drift {step_drift:.2e} at step {i}")
        drift = max(drift, step_drift)
        p = p / sums[:, None]
        tv[i] = tv_between_rows(p)
        rs[i] = relsup_between_rows(p)

    def first_time(traj):
        hits = np.nonzero(traj <= epsilon)[0]
        return int(hits[0]) if hits.size else None

    cert = doeblin_bound(seq, n_max)
    return MergingReport(
        horizon=n_max,
        epsilon=epsilon,
        tv_trajectory=tv,
        relsup_trajectory=rs,
        tv_time=first_time(tv),
        relsup_time=first_time(rs),
        doeblin_trajectory=np.concatenate(([1.0], cert.cumulative_bound)),
        block_trajectory=_block_trajectory(seq, n_max, block),
        renorm_drift=drift,
    )


@dataclass(frozen=True)
class DoeblinCertificate:
    """Per-step common-column mass and the coupling product bound.

    ``epsilons[i-1]`` is ``max_y min_x K_i(x, y)``; the cumulative bound
    ``prod (1 - eps_i)`` dominates the exact total-variation pairwise
    distance. ``diverges`` records whether the partial sum of the epsilons
    exceeded ``divergence_threshold`` over the horizon, the numerical
    stand-in for an infinite sum.
    """

    epsilons: np.ndarray
    cumulative_bound: np.ndarray
    diverges: bool
    divergence_threshold: float


def doeblin_bound(seq: KernelSequence, n: int, divergence_threshold: float = 50.0) -> DoeblinCertificate:
    """Doeblin coupling certificate over the first ``n`` steps."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eps = np.empty(n)
    for i in range(1, n + 1):
        eps[i - 1] = seq.kernel_at(i).entries.min(axis=0).max()
    return DoeblinCertificate(
        epsilons=eps,
        cumulative_bound=np.cumprod(1.0 - eps),
        diverges=bool(eps.sum() > divergence_threshold),
        divergence_threshold=divergence_threshold,
    )


def _block_trajectory(seq: KernelSequence, n: int, block: int) -> np.ndarray:
    # traj[i] = product of block coefficients over complete blocks ending
    # at or before i; valid because tv distances are non-increasing.
    traj = np.ones(n + 1)
    running = 1.0
    for j in range(n // block):
        q = product(seq, j * block, (j + 1) * block, "forward")
        running *= contraction_coefficient(q)
        traj[(j + 1) * block:] = running
    return traj


def block_contraction_bound(seq: KernelSequence, n: int, block: int) -> float:
    """Product of Dobrushin coefficients over complete blocks of length ``block``.

    Valid as an upper bound on the exact pairwise TV distance at the last
    complete block boundary (and beyond, distances being non-increasing).
    """
    if block < 1:
        raise ValueError("block must be >= 1")
    bound = 1.0
    for j in range(n // block):
        q = product(seq, j * block, (j + 1) * block, "forward")
        bound *= contraction_coefficient(q)
    return bound


@dataclass(frozen=True)
class UniformConditionsCertificate:
    """Witness for the uniform irreducibility / uniform laziness conditions.

    ``satisfied`` means every support pattern raised to the ``ell`` power is
    entrywise positive and every kernel holds each state with probability at
    least ``eta > 0``; ``epsilon`` is the largest uniform entry lower bound
    on the supports.
    """

    ell: int | None
    epsilon: float
    eta: float
    adjacency_witnesses: tuple[np.ndarray, ...]
    satisfied: bool


def uniform_conditions_certificate(kernels, ell_max: int) -> UniformConditionsCertificate:
    """Search powers of each kernel's own support pattern up to ``ell_max``."""
    kernels = list(kernels)
    if not kernels:
        raise ValueError("kernel set must be non-empty")
    supports = [k.entries > 0 for k in kernels]
    eta = min(float(k.entries.diagonal().min()) for k in kernels)
    epsilon = min(float(k.entries[s].min()) for k, s in zip(kernels, supports))
    ell = None
    powers = [s.copy() for s in supports]
    for step in range(1, ell_max + 1):
        if all(p.all() for p in powers):
            ell = step
            break
        powers = [(p.astype(int) @ s.astype(int)) > 0 for p, s in zip(powers, supports)]
    return UniformConditionsCertificate(
        ell=ell,
        epsilon=epsilon,
        eta=eta,
        adjacency_witnesses=tuple(s.astype(int) for s in supports),
        satisfied=ell is not None and eta > 0,
    )


def backward_envelopes(seq: KernelSequence, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Column envelopes of the backward products ``K_k ... K_1``.

    Returns ``(m, M)`` of shape ``(n+1, n_states)``: the columnwise minimum
    and maximum after each step. ``M(., y)`` is non-increasing and
    ``m(., y)`` non-decreasing because left-multiplying by a stochastic
    matrix averages rows.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    size = seq.space.size
    lo = np.empty((n + 1, size))
    hi = np.empty((n + 1, size))
    p = np.eye(size)
    lo[0] = p.min(axis=0)
    hi[0] = p.max(axis=0)
    for i in range(1, n + 1):
        p = seq.kernel_at(i).entries @ p
        sums = p.sum(axis=1)
        if np.abs(sums - 1.0).max() > DRIFT_ATOL:
            raise ArithmeticError(f"row-sum drift at step {i}")
        p = p / sums[:, None]
        lo[i] = p.min(axis=0)
        hi[i] = p.max(axis=0)
    return lo, hi
