import itertools
import math

import numpy as np
import pytest

from mclab import (
    EnumerationBudgetError,
    KernelSequence,
    ProbMeasure,
    StateSpace,
    StochasticKernel,
    classify_structure,
    compose,
    limit_row_estimate,
    perturbed_stick_pair,
    product_invariant_criterion,
    ratio_envelope,
    search_stable_measure,
    small_example,
    stationary_measure,
    two_point_classify,
)
from mclab.stability import WordEnumeration, envelope_summary_csv

from conftest import random_kernel


def envelope_oracle(kernels, mu0, pi, depth):
    """Plain nested-loop envelope for cross-checking the chunked walker."""
    best = 0.0
    best_word = ()
    for d in range(depth + 1):
        for word in itertools.product(range(len(kernels)), repeat=d):
            mu = mu0.weights
            for j in word:
                mu = mu @ kernels[j].entries
            with np.errstate(divide="ignore"):
                score = np.abs(np.log(mu) - np.log(pi.weights)).max()
            if score > best:
                best, best_word = score, word
    return math.exp(best), best_word


def circulant(space, row):
    n = space.size
    m = np.stack([np.roll(row, shift) for shift in range(n)])
    return StochasticKernel(space, m)


class TestRatioEnvelope:
    def test_stationary_singleton_is_one(self, rng):
        k = random_kernel(rng, 5)
        pi = stationary_measure(k)
        rep = ratio_envelope([k], pi, pi, depth=8)
        assert rep.c_estimate == pytest.approx(1.0, abs=1e-9)

    def test_shift_invariant_kernels_are_one_stable(self, rng):
        # circulant kernels preserve the uniform measure exactly
        space = StateSpace(5)
        kernels = [circulant(space, rng.dirichlet(np.ones(5))) for _ in range(3)]
        uniform = ProbMeasure.uniform(space)
        rep = ratio_envelope(kernels, uniform, uniform, depth=6)
        assert rep.c_estimate == pytest.approx(1.0, abs=1e-9)

    def test_matches_bruteforce_oracle(self, rng):
        kernels = [random_kernel(rng, 4, zero_prob=0.2) for _ in range(2)]
        mu0 = ProbMeasure(kernels[0].space, rng.dirichlet(np.full(4, 2.0)))
        pi = ProbMeasure.uniform(kernels[0].space)
        rep = ratio_envelope(kernels, mu0, pi, depth=7)
        oracle_c, oracle_word = envelope_oracle(kernels, mu0, pi, 7)
        assert rep.c_estimate == pytest.approx(oracle_c, rel=1e-12)
        assert rep.witness_word == oracle_word

    def test_monotone_in_depth(self, rng):
        kernels = [random_kernel(rng, 3) for _ in range(2)]
        mu0 = ProbMeasure(kernels[0].space, rng.dirichlet(np.ones(3)))
        pi = ProbMeasure.uniform(kernels[0].space)
        values = [ratio_envelope(kernels, mu0, pi, depth=d).c_estimate
                  for d in range(1, 7)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_stick_pair_envelope_grows_with_size(self):
        values = {}
        for n in (5, 11):
            q1, q2 = perturbed_stick_pair(n, 0.6, 0.4, 0.0, 0.0, 0.0)
            uniform = ProbMeasure.uniform(q1.space)
            rep = ratio_envelope([q1, q2], uniform, uniform, depth=2 * n,
                                 budget_nodes=1 << 24)
            values[n] = rep.c_estimate
        assert values[11] > values[5] > 2.0

    def test_budget_error(self, rng):
        kernels = [random_kernel(rng, 3) for _ in range(2)]
        uniform = ProbMeasure.uniform(kernels[0].space)
        with pytest.raises(EnumerationBudgetError):
            ratio_envelope(kernels, uniform, uniform, depth=25, budget_nodes=1000)

    def test_threshold_flag(self, rng):
        k = random_kernel(rng, 4)
        pi = stationary_measure(k)
        rep = ratio_envelope([k], pi, pi, depth=3, c_threshold=1.5)
        assert rep.criterion_pass is True

    def test_summary_csv(self, rng, tmp_path):
        k = random_kernel(rng, 3)
        pi = stationary_measure(k)
        reports = [ratio_envelope([k], pi, pi, depth=d) for d in (1, 2)]
        path = tmp_path / "summary.csv"
        envelope_summary_csv(reports, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "depth,c_estimate" and len(lines) == 3

    def test_word_enumeration_counts(self):
        enum = WordEnumeration(alphabet=2, depth=3)
        words = list(enum.words())
        assert len(words) == enum.count() == 1 + 2 + 4 + 8
        assert len(set(words)) == len(words)


class TestProductInvariantCriterion:
    def test_single_ergodic_kernel_passes(self, rng):
        k = random_kernel(rng, 4)
        pi = stationary_measure(k)
        ok, witnesses = product_invariant_criterion([k], pi, depth=4, c=1.0 + 1e-9)
        assert ok and not witnesses

    def test_stick_pair_fails_with_alternating_witness(self):
        n = 11
        q1, q2 = perturbed_stick_pair(n, 0.6, 0.4, 0.0, 0.0, 0.0)
        uniform = ProbMeasure.uniform(q1.space)
        ok, witnesses = product_invariant_criterion([q1, q2], uniform, depth=2, c=2.0)
        assert not ok
        assert witnesses[0].word == (0, 1)
        assert witnesses[0].reason == "band"

    def test_pass_implies_envelope_within_squared_constant(self, rng):
        # no exact constant relation is known between the two notions, so
        # this pins the observed behavior on concrete stable sets
        n, p, q, r = 7, 0.5, 0.3, 0.2
        pair = list(perturbed_stick_pair(n, p, q, r, eta1=q + r, eta2=p + r))
        uniform = ProbMeasure.uniform(pair[0].space)
        c = 1.05
        ok, _ = product_invariant_criterion(pair, uniform, depth=4, c=c)
        assert ok
        envelope = ratio_envelope(pair, uniform, uniform, depth=4)
        assert envelope.c_estimate <= c * c

    def test_five_point_composition_is_not_irreducible(self):
        q0, q1 = small_example("five_point")
        rep = classify_structure(compose(q1, q0))
        assert not rep.irreducible
        uniform = ProbMeasure.uniform(q0.space)
        ok, witnesses = product_invariant_criterion([q0, q1], uniform, depth=2, c=50.0)
        assert not ok
        assert any(w.reason == "reducible" for w in witnesses)


class TestSearchStableMeasure:
    def test_singleton_recovers_stationary(self, rng):
        k = random_kernel(rng, 4)
        pi = stationary_measure(k)
        mu0, c = search_stable_measure([k], pi, depth=4, seed=1)
        assert c == pytest.approx(1.0, abs=1e-8)
        assert np.abs(mu0.weights - pi.weights).max() <= 1e-6

    def test_shared_invariant_pair_gives_exactly_pi(self, rng):
        space = StateSpace(4)
        kernels = [circulant(space, rng.dirichlet(np.ones(4))) for _ in range(2)]
        uniform = ProbMeasure.uniform(space)
        mu0, c = search_stable_measure(kernels, uniform, depth=5, seed=0)
        assert c == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(mu0.weights, uniform.weights)

    def test_uniformizing_etas_make_pair_one_stable(self):
        n, p, q, r = 7, 0.5, 0.3, 0.2
        q1, q2 = perturbed_stick_pair(n, p, q, r, eta1=q + r, eta2=p + r)
        uniform = ProbMeasure.uniform(q1.space)
        mu0, c = search_stable_measure([q1, q2], uniform, depth=5, seed=0)
        assert c <= 1.0 + 1e-9

    def test_reported_c_is_achievable(self, rng):
        kernels = [random_kernel(rng, 3, zero_prob=0.2) for _ in range(2)]
        pi = ProbMeasure.uniform(kernels[0].space)
        mu0, c = search_stable_measure(kernels, pi, depth=4, seed=3)
        recheck = ratio_envelope(kernels, mu0, pi, depth=4)
        assert recheck.c_estimate <= c + 1e-12


class TestTwoPointClassify:
    def test_paper_pattern_is_unstable(self):
        kernels = small_example("two_point", a=0.4, b=0.7)
        verdict, witness = two_point_classify(kernels)
        assert verdict == "unstable"
        assert witness == (0, 1)

    def test_singleton_is_stable(self):
        swap = StochasticKernel(StateSpace(2), np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert two_point_classify([swap])[0] == "stable"

    def test_positive_diagonals_are_stable(self, rng):
        kernels = [random_kernel(rng, 2) for _ in range(3)]
        assert two_point_classify(kernels)[0] == "stable"

    def test_rejects_larger_kernels(self, rng):
        with pytest.raises(ValueError):
            two_point_classify([random_kernel(rng, 3)])

    def test_unstable_pair_envelope_diverges(self, rng):
        kernels = small_example("two_point", a=0.5, b=0.5)
        uniform = ProbMeasure.uniform(kernels[0].space)
        values = [ratio_envelope(list(kernels), uniform, uniform, depth=d).c_estimate
                  for d in (2, 4, 6, 8, 10)]
        assert all(b > a for a, b in zip(values, values[1:]))
        # alternating the two kernels drains one state geometrically
        assert values[-1] > 4.0 * values[0]


class TestLimitRow:
    def test_homogeneous_converges_to_stationary(self, rng):
        k = random_kernel(rng, 5)
        pi = stationary_measure(k)
        est = limit_row_estimate(KernelSequence.constant(k), n=3, m_min=-60)
        assert est.spread < 1e-10
        assert np.abs(est.measure.weights - pi.weights).max() < 1e-9
        assert not est.extension_is_convention

    def test_spread_decays_geometrically(self, rng):
        k = random_kernel(rng, 4)
        est = limit_row_estimate(KernelSequence.constant(k), n=0, m_min=-40)
        tail = est.spreads[-10:]
        assert all(b <= a * 0.9 for a, b in zip(tail, tail[1:]))

    def test_sia_products_merge(self, rng):
        kernels = [random_kernel(rng, 4) for _ in range(2)]
        # strictly positive kernels: every finite product forgets the start
        est = limit_row_estimate(KernelSequence.iid(kernels, seed=5), n=2, m_min=-50)
        assert est.spread < 1e-12

    def test_seven_point_never_merges(self):
        q0, q1 = small_example("seven_point")
        seq = KernelSequence.cyclic([q1, q0])
        est = limit_row_estimate(seq, n=4, m_min=-100)
        assert est.spread >= 0.5

    def test_spread_is_monotone(self, rng):
        kernels = [random_kernel(rng, 4, zero_prob=0.4) for _ in range(2)]
        est = limit_row_estimate(KernelSequence.iid(kernels, seed=8), n=0, m_min=-60)
        assert (np.diff(est.spreads) <= 1e-12).all()

    def test_explicit_list_flags_convention(self, rng):
        seq = KernelSequence.explicit([random_kernel(rng, 3) for _ in range(3)])
        est = limit_row_estimate(seq, n=1, m_min=-10)
        assert est.extension_is_convention
