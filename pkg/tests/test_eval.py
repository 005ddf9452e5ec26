import csv
import math

import numpy as np
import pytest

from psar.core import BanditTask, PotentialOutcomesTable
from psar.envgen import MixtureBetaBernoulliConfig, MixtureTaskSampler, sample_mixture_latents
from psar.eval import (
    SimulatedEnvironment,
    check_loss_kl_identity,
    check_optimum_gap,
    check_prob_matching,
    check_prop1_bound,
    check_sim_to_real,
    run_coverage_experiment,
    run_episode,
    run_lower_bound_instance,
    run_regret_experiment,
    run_simulated_episode,
    simulator_penalty,
    ts_regret_bound,
    write_coverage_csv,
    write_regret_csv,
)
from psar.eval.theory import lower_bound_prior_kl, optimal_action_probs, ts_action_probs
from psar.eval.verify import run_verification
from psar.policies import Policy, TsPsar, TsUniformBB, make_policy
from psar.seqmodel import (
    BetaBernoulliModel,
    ConstantModel,
    OracleMixtureModel,
    PerturbedModel,
    UniformBetaBernoulliModel,
)


class UniformRandom(Policy):
    def select_action(self, history, rng):
        return int(rng.integers(self.priors.shape[0]))


def one_arm_sampler(rng):
    rows = (rng.random((1, 20)) < 0.5).astype(np.int8)
    return BanditTask(np.zeros((1, 1)), PotentialOutcomesTable.full(rows))


def small_mixture(rng):
    return MixtureTaskSampler(num_actions=3, horizon=30)(rng)


class TestRegretExperiment:
    def test_single_arm_zero_regret(self):
        curves = run_regret_experiment({"ts": TsUniformBB()}, one_arm_sampler, 20, 5, base_seed=0)
        assert np.all(curves["ts"].cumulative == 0)

    def test_bounded_and_monotone(self):
        curves = run_regret_experiment({"u": UniformRandom(), "ts": TsUniformBB()}, small_mixture, 30, 8, 1)
        for c in curves.values():
            assert np.all(np.diff(c.cumulative, axis=1) >= 0)
            assert np.all(c.cumulative[:, -1] <= 30)
            assert c.mean().shape == (30,) and c.se().shape == (30,)

    def test_instant_is_mean_gap(self):
        rng = np.random.default_rng(0)
        task = small_mixture(rng)[0]
        actions, inst, _ = run_episode(UniformRandom(), task, rng)
        mu = task.table.row_means()
        np.testing.assert_allclose(inst, mu.max() - mu[actions])

    def test_common_random_numbers(self):
        # the same policy twice under one replication sees the same task and stream
        pol = TsUniformBB()
        curves = run_regret_experiment({"a": pol, "b": pol}, small_mixture, 30, 4, 3)
        assert np.array_equal(curves["a"].instant, curves["b"].instant)

    def test_jobs_do_not_change_results(self):
        pols = {"ts": TsUniformBB()}
        one = run_regret_experiment(pols, small_mixture, 30, 4, 7, jobs=1)
        two = run_regret_experiment(pols, small_mixture, 30, 4, 7, jobs=2)
        assert np.array_equal(one["ts"].instant, two["ts"].instant)

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            run_regret_experiment({"u": UniformRandom()}, small_mixture, 31, 1, 0)
        with pytest.raises(ValueError):
            run_regret_experiment({"u": UniformRandom()}, small_mixture, 30, 0, 0)

    def test_csv(self, tmp_path):
        curves = run_regret_experiment({"u": UniformRandom()}, small_mixture, 30, 2, 0)
        write_regret_csv(curves, tmp_path / "r.csv")
        rows = list(csv.reader(open(tmp_path / "r.csv")))
        assert rows[0] == ["policy", "rep", "t", "instant_regret", "cum_regret"]
        assert len(rows) == 1 + 2 * 30
        assert float(rows[30][4]) == pytest.approx(curves["u"].cumulative[0, -1])


class TestCoverage:
    def setup_method(self):
        task = MixtureTaskSampler(num_actions=300, horizon=100)(np.random.default_rng(0))[0]
        self.z, self.y = task.priors, task.table.entries

    def test_high_level(self):
        rows = run_coverage_experiment({"oracle": OracleMixtureModel()}, self.z, self.y, [0], [0.99], k=200,
                                       rng=np.random.default_rng(1))
        assert rows[0].coverage >= 0.95

    def test_degenerate_model(self):
        y = np.zeros((4, 10), dtype=np.int8)
        y[1] = 1
        y[3, :9] = 1
        rows = run_coverage_experiment({"one": ConstantModel(1.0)}, np.zeros((4, 1)), y, [0], [0.8], k=20)
        assert rows[0].mean_width == 0.0
        assert rows[0].coverage == 0.25

    def test_width_shrinks_with_data(self):
        rows = run_coverage_experiment({"oracle": OracleMixtureModel()}, self.z, self.y, [0, 25], [0.8], k=100,
                                       rng=np.random.default_rng(2))
        assert rows[1].mean_width < rows[0].mean_width
        assert all(0 <= r.coverage <= 1 for r in rows)

    def test_t_obs_range(self):
        with pytest.raises(ValueError):
            run_coverage_experiment({"o": OracleMixtureModel()}, self.z, self.y, [100])

    def test_csv(self, tmp_path):
        rows = run_coverage_experiment({"u": UniformBetaBernoulliModel()}, self.z[:20], self.y[:20], [0, 5], [0.5, 0.8],
                                       k=30)
        write_coverage_csv(rows, tmp_path / "c.csv")
        out = list(csv.reader(open(tmp_path / "c.csv")))
        assert out[0] == ["model", "t_obs", "level", "coverage", "coverage_se", "mean_width", "width_se"]
        assert len(out) == 5


class TestKlIdentity:
    def test_model_is_truth(self):
        lhs, rhs, diff = check_loss_kl_identity(UniformBetaBernoulliModel(), UniformBetaBernoulliModel(), 5)
        assert abs(lhs) < 1e-12 and abs(rhs) < 1e-12 and diff < 1e-12

    def test_iid_vs_urn_two_steps(self):
        # urn law over 00,01,10,11 is 1/3,1/6,1/6,1/3; the iid model gives 1/4 each
        expected = 2 / 3 * math.log(4 / 3) + 1 / 3 * math.log(2 / 3)
        lhs, rhs, diff = check_loss_kl_identity(ConstantModel(0.5), UniformBetaBernoulliModel(), 2)
        assert lhs == pytest.approx(expected, abs=1e-12) and rhs == pytest.approx(expected, abs=1e-12)

    def test_two_atom_z(self):
        _, _, diff = check_loss_kl_identity(BetaBernoulliModel(2.0, 3.0), OracleMixtureModel(), 6,
                                            [[0.05, 0.2], [0.2, 0.05]], [0.4, 0.6])
        assert diff < 1e-10

    def test_limits(self):
        with pytest.raises(ValueError):
            check_loss_kl_identity(ConstantModel(0.5), UniformBetaBernoulliModel(), 11)
        with pytest.raises(ValueError):
            check_loss_kl_identity(ConstantModel(0.5), UniformBetaBernoulliModel(), 2, [[0.0], [1.0]], [0.5, 0.6])


class TestProp1:
    def test_exact_model(self):
        urn = UniformBetaBernoulliModel()
        res = check_prop1_bound(urn, urn)
        assert np.all(np.abs(res.lhs) < 1e-12) and res.rhs == pytest.approx(0, abs=1e-12)

    def test_perturbed_holds(self):
        urn = UniformBetaBernoulliModel()
        res = check_prop1_bound(PerturbedModel(urn, 0.05), urn)
        assert res.holds and res.rhs > 0
        assert np.all(res.lhs_pushforward <= res.rhs + 1e-9)
        assert np.all(res.lhs_pushforward <= res.lhs + 1e-12)

    def test_uniform_policy(self):
        urn = UniformBetaBernoulliModel()
        assert check_prop1_bound(PerturbedModel(urn, 0.05), urn, policy="uniform").holds

    def test_limits(self):
        urn = UniformBetaBernoulliModel()
        with pytest.raises(ValueError):
            check_prop1_bound(urn, urn, horizon=5)


class TestProbMatching:
    def test_symmetric_empty_history(self):
        urn = UniformBetaBernoulliModel()
        z = np.zeros((2, 1))
        n = s = np.zeros(2, dtype=int)
        # row means are uniform on {0, 1/3, 2/3, 1}; ties go to arm 0, so P(arm 0) = 10/16
        p = ts_action_probs(urn, z, n, s, 3)
        np.testing.assert_allclose(p, [10 / 16, 6 / 16], atol=1e-12)
        np.testing.assert_allclose(p, optimal_action_probs(urn, z, n, s, 3), atol=1e-12)

    def test_history_favouring_arm0(self):
        # arm 0 saw one success; enumeration of Beta-binomial completions gives 5/6
        urn = UniformBetaBernoulliModel()
        z = np.zeros((2, 1))
        n, s = np.array([1, 0]), np.array([1, 0])
        assert ts_action_probs(urn, z, n, s, 3)[0] == pytest.approx(5 / 6, abs=1e-12)
        assert optimal_action_probs(urn, z, n, s, 3)[0] == pytest.approx(5 / 6, abs=1e-12)

    def test_exact_model(self):
        urn = UniformBetaBernoulliModel()
        assert check_prob_matching(urn, urn) < 1e-9
        assert check_prob_matching(OracleMixtureModel(), OracleMixtureModel(), z_atoms=[[0.1, 0.2]]) < 1e-9

    def test_perturbed_negative_control(self):
        urn = UniformBetaBernoulliModel()
        assert check_prob_matching(PerturbedModel(urn, 0.05), urn) > 1e-3


class TestSimulator:
    def test_plays_condition_on_own_stream(self):
        env = SimulatedEnvironment(UniformBetaBernoulliModel(), np.zeros((2, 1)), 10)
        rng = np.random.default_rng(0)
        for a in [0, 0, 1, 0]:
            env.play(a, rng)
        assert env.plays.tolist() == [3, 1]
        rows = env.complete_rows(rng)
        assert np.all(rows >= env.successes) and np.all(rows <= 10)

    def test_certain_model(self):
        env = SimulatedEnvironment(ConstantModel(1.0), np.zeros((3, 1)), 5)
        assert run_simulated_episode(env, UniformRandom(), 5, np.random.default_rng(0)) == 0.0

    def test_model_is_truth(self):
        urn = UniformBetaBernoulliModel()
        res = check_sim_to_real(TsUniformBB(), urn, urn, lambda g, a: np.zeros((a, 1)), 2, 5, 1500,
                                z_atoms=[[0.0]])
        assert res.penalty < 1e-7
        assert abs(res.delta_real - res.delta_sim) <= 3 * np.hypot(res.se_real, res.se_sim)

    def test_iid_vs_urn(self):
        res = check_sim_to_real(TsPsar(ConstantModel(0.5)), ConstantModel(0.5), UniformBetaBernoulliModel(),
                                lambda g, a: np.zeros((a, 1)), 2, 5, 300, z_atoms=[[0.0]])
        assert res.holds and res.slack > 0
        assert res.penalty == pytest.approx(simulator_penalty(2, res.excess))

    def test_penalty_formula(self):
        assert simulator_penalty(10, 0.02) == pytest.approx(math.sqrt(0.1))
        assert simulator_penalty(10, -1e-15) == 0.0

    def test_regret_bound_formula(self):
        assert ts_regret_bound(10, 500) == pytest.approx(math.sqrt(10 * math.log(10) / 1000))
        assert ts_regret_bound(2, 5, 0.5) == pytest.approx(math.sqrt(math.log(2) / 5) + math.sqrt(0.5))


class TestLowerBound:
    def test_prior_kl_closed_form(self):
        T = 100
        eps = 1 / T**2
        assert lower_bound_prior_kl(T) == pytest.approx(0.5 * math.log(0.5 / eps) + 0.5 * math.log(0.5 / (1 - eps)))

    def test_instance(self):
        rows = run_lower_bound_instance((100, 1000), reps=500, rng=np.random.default_rng(0))
        assert rows[1].true_regret < rows[0].true_regret
        assert all(r.misspecified_regret >= 0.05 for r in rows)
        assert all(r.misspecified_regret > r.true_regret for r in rows)


class TestOptimumGap:
    def latents(self, rng, a):
        return sample_mixture_latents(MixtureBetaBernoulliConfig(), a, rng)[1]

    def test_mixture_bound(self):
        mean, se, bound = check_optimum_gap(self.latents, 10, 500, 1000, np.random.default_rng(0))
        assert mean <= bound + 3 * se

    def test_decreasing_in_horizon(self):
        rng = np.random.default_rng(1)
        short = check_optimum_gap(self.latents, 10, 100, 1000, rng)
        long = check_optimum_gap(self.latents, 10, 1000, 1000, rng)
        assert long[0] < short[0]

    def test_single_arm_scale(self):
        mean, _, bound = check_optimum_gap(lambda g, a: np.full(a, 0.5), 1, 10_000, 2000, np.random.default_rng(2))
        assert bound == 0.0
        assert mean == pytest.approx(math.sqrt(2 / math.pi) * 0.5 / 100, rel=0.1)


class TestVerification:
    def test_all_pass(self):
        results = run_verification(seed=0, lower_bound_reps=300, sim_reps=200)
        assert [r.name for r in results if not r.passed] == []
        assert all(r.line().count(",") == 4 for r in results)

    def test_oracle_ts_policy_runs(self):
        curves = run_regret_experiment({"o": make_policy("ts_oracle")}, small_mixture, 30, 2, 0)
        assert curves["o"].reps == 2
