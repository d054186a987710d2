"""KL diagnostics: targets, diffused KL, and the parallel reference run."""

import itertools
import math

import numpy as np
import pytest

from tneda.diagnostics import (
    KlReport,
    boltzmann_target,
    diffused_kl,
    kl_details,
    run_with_reference,
)
from tneda.evolve import (
    AdaptiveGapSchedule,
    AnnealedSchedule,
    BoltzmannSelection,
    BornMachineSampler,
    EdaConfig,
)
from tneda.models import FiniteDistribution, TrainConfig, model_kl_vs_target
from tneda.mps import EncodingMode, random_init
from tneda.problems import OneMax, PortfolioProblem, random_covariance


def all_bitstrings(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)


class TestBoltzmannTarget:
    def test_point_mass(self):
        target = boltzmann_target((np.array([[0, 1]]), np.array([2.0])), 1.0)
        np.testing.assert_allclose(target.probs, [1.0])

    def test_equal_objectives_uniform(self):
        strings = all_bitstrings(2)
        target = boltzmann_target((strings, np.zeros(4)), 0.5)
        np.testing.assert_allclose(target.probs, np.full(4, 0.25))

    def test_log3_gap(self):
        strings = np.array([[0, 0], [1, 1]], dtype=np.int8)
        target = boltzmann_target((strings, np.array([0.0, math.log(3.0)])), 1.0)
        np.testing.assert_allclose(target.probs, [0.75, 0.25])

    def test_pool_restriction(self):
        strings = all_bitstrings(2)
        target = boltzmann_target((strings, np.array([3.0, 1.0, 0.0, 2.0])), 1e9, pool_size=2)
        assert target.strings.shape == (2, 2)
        np.testing.assert_allclose(target.probs, [0.5, 0.5], atol=1e-9)


class TestDiffusedKl:
    def make_target(self, n, seed):
        rng = np.random.default_rng(seed)
        strings = all_bitstrings(n)
        keep = rng.permutation(2**n)[: 2 ** (n - 1)]
        w = rng.random(keep.size)
        return FiniteDistribution(strings[keep], w / w.sum())

    def test_zero_flip_matches_plain_kl(self):
        m = random_init(6, 3, EncodingMode.AMPLITUDE, seed=0)
        target = self.make_target(6, 1)
        assert diffused_kl(m, 0.0, target) == pytest.approx(model_kl_vs_target(m, target))

    def test_half_flip_entropy_identity(self):
        m = random_init(7, 2, EncodingMode.AMPLITUDE, seed=2)
        target = self.make_target(7, 3)
        expected = 7 * math.log(2.0) - target.entropy()
        assert diffused_kl(m, 0.5, target) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("p_flip", [0.005, 0.01, 0.025])
    def test_matches_brute_force_equation(self, p_flip):
        n = 8
        m = random_init(n, 3, EncodingMode.AMPLITUDE, seed=4)
        target = self.make_target(n, 5)
        # oracle: apply the full 2^N x 2^N bit-flip kernel to the dense law
        strings = all_bitstrings(n)
        vals = np.empty(2**n)
        for pos, bits in enumerate(strings):
            v = np.ones((1, 1))
            for site, b in zip(m.tensors, bits):
                v = v @ site[:, b, :]
            vals[pos] = v[0, 0]
        q = vals**2 / (vals**2).sum()
        d = np.array([[1 - p_flip, p_flip], [p_flip, 1 - p_flip]])
        kernel = np.ones((1, 1))
        for _ in range(n):
            kernel = np.kron(kernel, d)
        q_tilde = kernel @ q
        index = target.strings.astype(np.int64) @ (1 << np.arange(n - 1, -1, -1))
        expected = float(np.sum(target.probs * (np.log(target.probs) - np.log(q_tilde[index]))))
        assert diffused_kl(m, p_flip, target) == pytest.approx(expected, abs=1e-9)

    def test_smooth_in_p_flip(self):
        m = random_init(6, 2, EncodingMode.AMPLITUDE, seed=6)
        target = self.make_target(6, 7)
        h = 1e-6
        base = diffused_kl(m, 0.05, target)
        assert abs(diffused_kl(m, 0.05 + h, target) - base) < 1e-3

    def test_rejects_bad_p(self):
        m = random_init(4, 2, EncodingMode.AMPLITUDE, seed=8)
        with pytest.raises(ValueError):
            diffused_kl(m, -0.1, self.make_target(4, 9))

    def test_zero_support_reported(self):
        from tneda.mps import Mps

        tensors = []
        for b in (1, 0, 1):
            t = np.zeros((1, 2, 1))
            t[0, b, 0] = 1.0
            tensors.append(t)
        point = Mps(tuple(tensors), EncodingMode.DIRECT_POSITIVE, 1)
        target = FiniteDistribution(np.array([[0, 0, 0], [1, 0, 1]]), np.array([0.5, 0.5]))
        kl, zeros = kl_details(point, target)
        assert kl == math.inf
        assert zeros == 1


def small_run(mutation_rate, mirror, seed=0, reference_cfg=None):
    problem = OneMax(8)
    train = TrainConfig(learning_rate=0.1, chi_max=2, sweeps=1)
    primary = BornMachineSampler(train)
    reference = BornMachineSampler(reference_cfg or train)
    cfg = EdaConfig(
        n_parents=40, n_children=40, generations=5, mutation_rate=mutation_rate,
        call_budget=400, n_init=40,
    )
    return run_with_reference(
        problem, primary, reference, BoltzmannSelection(AnnealedSchedule()), cfg,
        rng=seed, mirror_reference_rng=mirror,
    )


class TestRunWithReference:
    def test_identical_configs_mirrored_rng_zero_delta(self):
        result = small_run(mutation_rate=0.0, mirror=True)
        assert result.reports
        for report in result.reports:
            assert report.delta == pytest.approx(0.0, abs=1e-12)

    def test_reports_and_records_align(self):
        result = small_run(mutation_rate=0.01, mirror=False, seed=3)
        assert len(result.reports) == len(result.records)
        for rec, rep in zip(result.records, result.reports):
            assert rec.generation == rep.generation
            assert rec.kl_primary == rep.kl_primary
            assert rep.kl_primary >= 0
            assert rep.kl_reference >= 0
            if rep.delta is not None:
                assert rep.delta == pytest.approx(rep.kl_primary - rep.kl_reference)

    def test_reference_is_bystander(self):
        """The primary trajectory must not depend on the reference config."""
        a = small_run(0.01, mirror=False, seed=5)
        big = TrainConfig(learning_rate=0.1, chi_max=5, sweeps=2)
        b = small_run(0.01, mirror=False, seed=5, reference_cfg=big)
        assert [r.best_objective for r in a.records] == [r.best_objective for r in b.records]
        assert [r.kl_primary for r in a.reports] == [r.kl_primary for r in b.reports]

    def test_portfolio_run_with_adaptive_temperature(self):
        sigma = random_covariance(12, seed=1)
        problem = PortfolioProblem(sigma, n_min=3, n_max=5)
        train = TrainConfig(learning_rate=0.1, chi_max=5, sweeps=1)
        cfg = EdaConfig(
            n_parents=50, n_children=50, generations=4, mutation_rate=0.01,
            call_budget=500, n_init=50,
        )
        result = run_with_reference(
            problem,
            BornMachineSampler(train),
            BornMachineSampler(train),
            BoltzmannSelection(AdaptiveGapSchedule()),
            cfg,
            rng=9,
        )
        assert len(result.reports) == 4
        assert all(math.isfinite(r.kl_primary) for r in result.reports)

    def test_kl_primary_matches_dense_oracle(self):
        """The in-run diffused KL equals the full 2^N x 2^N computation.

        A plain run with the same seed replays the primary trajectory (the
        reference is a bystander), exposing each generation's model, pool,
        and temperature for an independent dense recomputation.
        """
        problem = OneMax(8)
        train = TrainConfig(learning_rate=0.1, chi_max=2, sweeps=1)
        cfg = EdaConfig(
            n_parents=30, n_children=30, generations=3, mutation_rate=0.01,
            call_budget=300, n_init=30,
        )
        selection = BoltzmannSelection(AnnealedSchedule())
        result = run_with_reference(
            problem, BornMachineSampler(train), BornMachineSampler(train),
            selection, cfg, rng=17,
        )

        captured = []
        from tneda.evolve import run_eda

        def capture(ctx):
            captured.append(
                (ctx.pool_strings.copy(), ctx.pool_values.copy(), ctx.temperature,
                 ctx.model.model)
            )

        run_eda(problem, BornMachineSampler(train), selection, cfg, rng=17, observer=capture)

        d = np.array([[0.99, 0.01], [0.01, 0.99]])
        kernel = np.ones((1, 1))
        for _ in range(8):
            kernel = np.kron(kernel, d)
        strings = all_bitstrings(8)
        for report, (pool, values, temperature, model) in zip(result.reports, captured):
            vals = np.empty(256)
            for pos, bits in enumerate(strings):
                v = np.ones((1, 1))
                for site, b in zip(model.tensors, bits):
                    v = v @ site[:, b, :]
                vals[pos] = v[0, 0]
            q_tilde = kernel @ (vals**2 / (vals**2).sum())
            w = np.exp(-(values - values.min()) / temperature)
            w /= w.sum()
            idx = pool.astype(np.int64) @ (1 << np.arange(7, -1, -1))
            oracle = float(np.sum(w * (np.log(w) - np.log(q_tilde[idx]))))
            assert report.kl_primary == pytest.approx(oracle, abs=1e-9)

    def test_requires_boltzmann_selection(self):
        from tneda.evolve import TournamentSelection

        with pytest.raises(ValueError):
            run_with_reference(
                OneMax(6),
                BornMachineSampler(TrainConfig(learning_rate=0.1, chi_max=2)),
                BornMachineSampler(TrainConfig(learning_rate=0.1, chi_max=2)),
                TournamentSelection(3),
                EdaConfig(n_parents=10, n_children=10, generations=2, call_budget=100, n_init=10),
                rng=0,
            )
