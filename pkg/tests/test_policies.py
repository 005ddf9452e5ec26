import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psar.core import History
from psar.generate import GenerationConfig, PredictiveTables
from psar.neural import Mlp
from psar.policies import (
    POLICY_NAMES,
    BayesUcbPsar,
    BrokenMean,
    BrokenOneReward,
    TsEnsemble,
    TsNeuralLinear,
    TsPsar,
    argmax_random,
    bayes_ucb_index,
    bayes_ucb_quantile,
    broken_mean_select,
    broken_one_reward_select,
    fresh,
    make_policy,
    ts_psar_select,
    ts_uniform_bb_select,
    ucb_select,
    ucb_width,
)
from psar.seqmodel import (
    ConstantModel,
    FeatureProbabilityModel,
    GaussianGaussianModel,
    OracleMixtureModel,
    RateModel,
    UniformBetaBernoulliModel,
)


def frequency(select, trials, num_actions, seed=0):
    rng = np.random.default_rng(seed)
    return np.bincount([select(rng) for _ in range(trials)], minlength=num_actions) / trials


def within_se(freq, p, n, k=3.0):
    return np.all(np.abs(np.asarray(freq) - p) <= k * np.sqrt(np.asarray(p) * (1 - np.asarray(p)) / n) + 1e-12)


def rate_model(p, feature_dim=1):
    mlp = Mlp([feature_dim, 1], params=[np.zeros((feature_dim, 1)), np.array([math.log(p / (1 - p))])])
    return RateModel(feature_dim, mlp=mlp)


class TestTsPsar:
    def test_degenerate_models(self):
        h = History(np.array([[1.0], [0.0], [0.0]]))
        model = FeatureProbabilityModel()
        rng = np.random.default_rng(0)
        assert all(ts_psar_select(model, h, 5, GenerationConfig(), rng) == 0 for _ in range(50))

    def test_symmetric_prior(self):
        h = History(np.zeros((2, 1)))
        cfg = GenerationConfig()
        freq = frequency(lambda r: ts_psar_select(ConstantModel(0.5), h, 1, cfg, r), 20_000, 2)
        # ties at T=1 go to arm 0: P(arm 0) = P(y0 >= y1) = 3/4
        assert within_se(freq[0], 0.75, 20_000)
        tabs = PredictiveTables(UniformBetaBernoulliModel(), h.priors, 20)
        freq = frequency(lambda r: ts_psar_select(UniformBetaBernoulliModel(), h, 20, cfg, r, tabs), 50_000, 2)
        # each row mean is uniform on 21 values, so ties carry mass 1/21
        assert within_se(freq[0], 0.5 + 0.5 / 21, 50_000)

    def test_enumerated_selection_probability(self):
        # T=2, arm 0 saw y=1; enumerate imputations of both rows under the urn
        def urn_prob(prefix, completion):
            s, n, p = sum(prefix), len(prefix), 1.0
            for y in completion:
                q = (1 + s) / (2 + n)
                p *= q if y else 1 - q
                s += y
                n += 1
            return p

        total = 0.0
        for c0 in itertools.product((0, 1), repeat=1):
            for c1 in itertools.product((0, 1), repeat=2):
                p = urn_prob([1], c0) * urn_prob([], c1)
                total += p * ((1 + sum(c0)) / 2 >= sum(c1) / 2)
        h = History(np.zeros((2, 1)), [0], [1])
        tabs = PredictiveTables(UniformBetaBernoulliModel(), h.priors, 2)
        trials = 50_000
        freq = frequency(lambda r: ts_psar_select(UniformBetaBernoulliModel(), h, 2, GenerationConfig(), r, tabs),
                         trials, 2, seed=1)
        assert total == pytest.approx(8 / 9)
        assert within_se(freq[0], total, trials)

    def test_replay_reproduces(self):
        h = History(np.random.default_rng(0).uniform(0, 0.25, (5, 2)), [1, 2], [1, 0])
        pol = TsPsar(OracleMixtureModel())
        pol.begin(h.priors, 50)
        a = [pol.select_action(h, np.random.default_rng(9)) for _ in range(3)]
        b = [pol.select_action(h, np.random.default_rng(9)) for _ in range(3)]
        assert a == b

    def test_truncation_modes(self):
        pol = TsPsar(UniformBetaBernoulliModel())
        pol.begin(np.zeros((2, 1)), 600)
        assert pol.generation_config().truncation == 500
        pol = TsPsar(UniformBetaBernoulliModel(), truncation=None)
        pol.begin(np.zeros((2, 1)), 600)
        assert pol.generation_config().truncation is None


class TestBayesUcb:
    def test_quantile_example(self):
        assert bayes_ucb_quantile(1, 100) == pytest.approx(1 - 1 / math.log(100))
        assert bayes_ucb_index(1, 100, 100) == 79

    def test_degenerate_horizon(self):
        with pytest.raises(ValueError):
            bayes_ucb_quantile(1, 2)

    @given(st.integers(1, 1000), st.integers(3, 10_000))
    def test_index_monotone(self, t, T):
        assert bayes_ucb_index(t + 1, T, 100) >= bayes_ucb_index(t, T, 100)

    def test_equal_samples_is_greedy(self):
        # deterministic predictions make all k samples of an arm equal
        h = History(np.array([[0.0], [1.0], [0.0]]), [0, 2], [1, 1])
        pol = BayesUcbPsar(FeatureProbabilityModel(), num_generations=10)
        pol.begin(h.priors, 5)
        assert pol.select_action(h, np.random.default_rng(0)) == 1

    def test_needs_two_generations(self):
        with pytest.raises(ValueError):
            BayesUcbPsar(ConstantModel(), num_generations=1)


class TestUniformBB:
    def test_symmetric(self):
        h = History(np.zeros((3, 1)))
        trials = 100_000
        freq = frequency(lambda r: ts_uniform_bb_select(h, r), trials, 3)
        assert within_se(freq, 1 / 3, trials)

    def test_dominant_arm(self):
        h = History(np.zeros((2, 1)), [0] * 100 + [1] * 100, [1] * 100 + [0] * 100)
        freq = frequency(lambda r: ts_uniform_bb_select(h, r), 10_000, 2)
        assert freq[0] > 0.999

    def test_single_arm(self):
        assert ts_uniform_bb_select(History(np.zeros((1, 1))), np.random.default_rng(0)) == 0


class TestUcb:
    def test_unplayed_first(self):
        h = History(np.zeros((3, 1)), [0, 0, 2], [1, 1, 1])
        assert ucb_select(h) == 1

    def test_width_formula(self):
        expected = 0.5 * math.sqrt(2 * (1 + 2 * math.log(2 * math.sqrt(2) / 0.1)))
        assert ucb_width(1, 2)[()] == pytest.approx(expected)

    def test_width_shrinks(self):
        assert ucb_width(100, 5) < ucb_width(10, 5)


class TestNeuralLinear:
    def test_symmetric(self):
        pol = TsNeuralLinear(GaussianGaussianModel(rate_model(0.3)))
        h = History(np.zeros((2, 1)))
        freq = frequency(lambda r: pol.select_action(h, r), 20_000, 2)
        assert within_se(freq, 0.5, 20_000)

    def test_zero_variance_limit_is_greedy(self):
        h = History(np.zeros((2, 1)), [0, 1], [1, 0])
        pol = TsNeuralLinear(GaussianGaussianModel(rate_model(0.5), prior_var=1.0, obs_var=1e-9))
        assert all(pol.select_action(h, np.random.default_rng(i)) == 0 for i in range(20))

    def test_sampling_distribution(self):
        model = GaussianGaussianModel(rate_model(1e-6))
        mean, var = model.posterior(np.zeros((1, 1)), 1, 1)
        assert mean[0] == pytest.approx(0.8, abs=1e-5) and var == pytest.approx(0.2)


class TestEnsemble:
    def test_identical_members_greedy(self):
        members = [RateModel(1, hidden=4, rng=np.random.default_rng(0)) for _ in range(3)]
        pol = TsEnsemble(members)
        z = np.array([[0.0], [1.0], [2.0]])
        pol.begin(z, 10)
        greedy = int(np.argmax(members[0].rate(z)))
        assert all(pol.select_action(History(z), np.random.default_rng(i)) == greedy for i in range(20))

    def test_symmetric_untrained(self):
        pol = TsEnsemble([rate_model(0.5), rate_model(0.5)])
        pol.begin(np.zeros((2, 1)), 10)
        assert pol.select_action(History(np.zeros((2, 1))), np.random.default_rng(0)) == 0

    def test_disagreement_shrinks(self):
        rng = np.random.default_rng(0)
        members = [rate_model(p) for p in np.linspace(0.1, 0.9, 10)]
        pol = TsEnsemble(members, online_lr=0.02)
        z = np.array([[0.5], [-0.5]])
        pol.begin(z, 500)
        before = pol.member_rates()[:, 0].std()
        h = History(z)
        for _ in range(500):
            y = int(rng.random() < 0.3)
            h = h.append(0, y)
            pol.observe(h, 0, y, rng)
        assert pol.member_rates()[:, 0].std() < before

    def test_members_not_mutated(self):
        m = RateModel(1, hidden=4, rng=np.random.default_rng(0))
        before = [p.copy() for p in m.mlp.params]
        pol = TsEnsemble([m, m.copy()])
        pol.begin(np.zeros((1, 1)), 5)
        pol.observe(History(np.zeros((1, 1)), [0], [1]), 0, 1, np.random.default_rng(0))
        assert all(np.array_equal(a, b) for a, b in zip(before, m.mlp.params))

    def test_needs_two(self):
        with pytest.raises(ValueError):
            TsEnsemble([rate_model(0.5)])


class TestBrokenVariants:
    def test_uniform_ties(self):
        h = History(np.zeros((3, 1)))
        freq = frequency(lambda r: broken_one_reward_select(ConstantModel(0.5), h, r), 30_000, 3)
        assert within_se(freq, 1 / 3, 30_000)
        freq = frequency(lambda r: broken_mean_select(ConstantModel(0.5), h, 1000, r), 30_000, 3)
        assert within_se(freq, 1 / 3, 30_000)

    def test_certain_arm(self):
        h = History(np.array([[1.0], [0.0]]))
        assert all(broken_one_reward_select(FeatureProbabilityModel(), h, np.random.default_rng(i)) == 0
                   for i in range(20))

    def test_worse_arm_probability(self):
        # arm 0 at (10, 9), arm 1 at (10, 1) under the uniform prior
        p_good, p_bad = 10 / 12, 2 / 12
        expected = p_bad * (1 - p_good) + 0.5 * (p_good * p_bad + (1 - p_good) * (1 - p_bad))
        h = History(np.zeros((2, 1)), [0] * 10 + [1] * 10, [1] * 9 + [0] + [1] + [0] * 9)
        trials = 100_000
        freq = frequency(lambda r: broken_one_reward_select(UniformBetaBernoulliModel(), h, r), trials, 2)
        assert within_se(freq[1], expected, trials)

    def test_many_draws_is_greedy(self):
        h = History(np.array([[0.52], [0.5], [0.1]]))
        trials = 2000
        freq = frequency(lambda r: broken_mean_select(FeatureProbabilityModel(), h, 100_000, r), trials, 3)
        # P(mean of 1e5 draws at 0.52 loses to 0.5) is below 1e-30
        assert freq[0] == 1.0

    def test_one_draw_equals_one_reward(self):
        h = History(np.random.default_rng(0).uniform(0, 0.25, (4, 2)), [0, 1, 1], [1, 0, 1])
        model = OracleMixtureModel()
        for seed in range(30):
            a = broken_one_reward_select(model, h, np.random.default_rng(seed))
            b = broken_mean_select(model, h, 1, np.random.default_rng(seed))
            assert a == b

    def test_random_ties(self):
        rng = np.random.default_rng(0)
        picks = {argmax_random([1, 0, 1], rng) for _ in range(100)}
        assert picks == {0, 2}


class TestRegistry:
    def test_all_names(self):
        model = UniformBetaBernoulliModel()
        for name in POLICY_NAMES:
            if name == "ts_neural_linear":
                pol = make_policy(name, GaussianGaussianModel(rate_model(0.5)))
            elif name == "ts_ensemble":
                pol = make_policy(name, [rate_model(0.4), rate_model(0.6)])
            else:
                pol = make_policy(name, model)
            assert pol.name == name

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_policy("greedy")
        with pytest.raises(ValueError):
            make_policy("ts_psar")

    @settings(max_examples=15, deadline=None)
    @given(st.sampled_from(["ts_psar", "ts_uniform_bb", "ucb", "broken_one_reward", "broken_mean"]),
           st.integers(0, 2**31))
    def test_actions_in_range(self, name, seed):
        rng = np.random.default_rng(seed)
        z = rng.uniform(0, 0.25, (4, 2))
        pol = fresh(make_policy(name, OracleMixtureModel()))
        pol.begin(z, 8)
        h = History(z)
        for _ in range(8):
            a = pol.select_action(h, rng)
            assert 0 <= a < 4
            h = h.append(a, int(rng.random() < 0.5))
            pol.observe(h, a, int(h.outcomes[-1]), rng)

    def test_broken_classes(self):
        assert isinstance(make_policy("broken_mean", ConstantModel()), BrokenMean)
        assert isinstance(make_policy("broken_one_reward", ConstantModel()), BrokenOneReward)
