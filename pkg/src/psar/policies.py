"""Online decision rules.

A policy is prepared once per episode with :meth:`Policy.begin`, asked for an
action each period and told the outcome through :meth:`Policy.observe`.
Episodes should use fresh copies (see :func:`fresh`).
"""
from __future__ import annotations

import copy
import math

import numpy as np

from .core import History
from .generate import GenerationConfig, PredictiveTables, sample_arm_means
from .seqmodel import GaussianGaussianModel, OracleMixtureModel, RateModel, SequenceModel

BROKEN_MEAN_DRAWS = 500


def argmax_lowest(values) -> int:
    return int(np.argmax(values))


def argmax_random(values, rng) -> int:
    values = np.asarray(values)
    best = np.flatnonzero(values == values.max())
    return int(best[0]) if best.size == 1 else int(rng.choice(best))


class Policy:
    name = "policy"

    def begin(self, priors, horizon):
        self.priors = np.atleast_2d(np.asarray(priors, dtype=np.float64))
        self.horizon = int(horizon)

    def select_action(self, history: History, rng) -> int:
        raise NotImplementedError

    def observe(self, history: History, action: int, outcome: int, rng) -> None:
        """Called after each period with the updated history."""


def fresh(policy: Policy) -> Policy:
    return copy.deepcopy(policy)


class TsPsar(Policy):
    """Thompson sampling: impute one table, act greedily on its row means."""

    def __init__(self, model: SequenceModel, truncation="auto", name="ts_psar"):
        self.model = model
        self.truncation = truncation
        self.name = name
        self._tables = None

    def generation_config(self, num_samples=1):
        if self.truncation == "auto":
            return GenerationConfig.default_for(self.horizon, num_samples)
        return GenerationConfig(self.truncation, num_samples)

    def begin(self, priors, horizon):
        super().begin(priors, horizon)
        self._tables = PredictiveTables(self.model, self.priors, self.generation_config().table_size(horizon) - 1)

    def sample_means(self, history, rng, num_samples=1):
        return sample_arm_means(self.model, history, self.horizon, self.generation_config(num_samples), rng,
                                tables=self._tables)

    def select_action(self, history, rng):
        return argmax_lowest(self.sample_means(history, rng)[0])


def ts_psar_select(model, history, horizon, gen_config: GenerationConfig, rng, tables=None) -> int:
    cfg = GenerationConfig(gen_config.truncation, 1)
    return argmax_lowest(sample_arm_means(model, history, horizon, cfg, rng, tables=tables)[0])


def bayes_ucb_quantile(t, horizon):
    """Quantile level 1 - 1/(t log T); must fall strictly inside (0, 1)."""
    if t < 1:
        raise ValueError("t must be at least 1")
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    q = 1.0 - 1.0 / (t * math.log(horizon))
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level {q:.4g} outside (0, 1); horizon too small")
    return q


def bayes_ucb_index(t, horizon, k):
    """1-based order statistic used by BayesUCB."""
    return max(1, min(k, math.ceil(bayes_ucb_quantile(t, horizon) * k)))


class BayesUcbPsar(TsPsar):
    def __init__(self, model, num_generations=100, truncation="auto", name="bayes_ucb_psar"):
        if num_generations < 2:
            raise ValueError("num_generations must be at least 2")
        super().__init__(model, truncation, name)
        self.num_generations = int(num_generations)

    def select_action(self, history, rng):
        k = self.num_generations
        j = bayes_ucb_index(history.t + 1, self.horizon, k)
        samples = np.sort(self.sample_means(history, rng, k), axis=0)
        return argmax_lowest(samples[j - 1])


class TsUniformBB(Policy):
    name = "ts_uniform_bb"

    def select_action(self, history, rng):
        n, s = history.counts()
        return argmax_lowest(rng.beta(1 + s, 1 + n - s))


def ucb_width(n, num_actions, delta=0.1, sigma=0.5):
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = sigma * np.sqrt((1 + n) / n**2 * (1 + 2 * np.log(num_actions * np.sqrt(1 + n) / delta)))
    return np.where(n > 0, w, np.inf)


class Ucb(Policy):
    name = "ucb"

    def __init__(self, delta=0.1, sigma=0.5):
        self.delta = delta
        self.sigma = sigma

    def select_action(self, history, rng):
        n, s = history.counts()
        mean = np.divide(s, n, out=np.zeros(n.shape), where=n > 0)
        return argmax_lowest(mean + ucb_width(n, n.size, self.delta, self.sigma))


class TsNeuralLinear(Policy):
    name = "ts_neural_linear"

    def __init__(self, model: GaussianGaussianModel):
        self.model = model

    def select_action(self, history, rng):
        n, s = history.counts()
        mean, var = self.model.posterior(history.priors, n, s)
        return argmax_lowest(rng.normal(mean, np.sqrt(var)))


class TsEnsemble(Policy):
    """Pick one member at random and act greedily on its rate predictions.

    After each observation every member takes one gradient step on it with
    probability one half (online bootstrap), or always when ``bootstrap`` is off.
    """

    name = "ts_ensemble"

    def __init__(self, members, online_lr=0.01, bootstrap=True):
        if len(members) < 2:
            raise ValueError("an ensemble needs at least two members")
        self.members = list(members)
        self.online_lr = online_lr
        self.bootstrap = bootstrap

    def begin(self, priors, horizon):
        super().begin(priors, horizon)
        self.members = [m.copy() for m in self.members]
        self._rates = np.stack([m.rate(self.priors) for m in self.members])

    def member_rates(self):
        return self._rates

    def select_action(self, history, rng):
        j = rng.integers(len(self.members))
        return argmax_lowest(self._rates[j])

    def observe(self, history, action, outcome, rng):
        include = rng.random(len(self.members)) < 0.5 if self.bootstrap else np.ones(len(self.members), bool)
        z = self.priors[action][None]
        for j in np.flatnonzero(include):
            self.members[j].sgd_step(z, [outcome], self.online_lr)
            self._rates[j] = self.members[j].rate(self.priors)


class BrokenOneReward(Policy):
    """Draw one next outcome per arm and pick the largest (random ties)."""

    name = "broken_one_reward"

    def __init__(self, model: SequenceModel):
        self.model = model

    def predictive(self, history):
        n, s = history.counts()
        return self.model.predict(history.priors, n, s)

    def select_action(self, history, rng):
        p = self.predictive(history)
        return argmax_random(rng.random(p.size) < p, rng)


class BrokenMean(BrokenOneReward):
    """Average k independent next-outcome draws per arm without write-back."""

    name = "broken_mean"

    def __init__(self, model, k=BROKEN_MEAN_DRAWS):
        super().__init__(model)
        if k < 1:
            raise ValueError("k must be positive")
        self.k = int(k)

    def select_action(self, history, rng):
        p = self.predictive(history)
        if self.k == 1:
            return argmax_random(rng.random(p.size) < p, rng)
        return argmax_random(rng.binomial(self.k, p) / self.k, rng)


def broken_one_reward_select(model, history, rng) -> int:
    return BrokenOneReward(model).select_action(history, rng)


def broken_mean_select(model, history, k, rng) -> int:
    return BrokenMean(model, k).select_action(history, rng)


def ts_uniform_bb_select(history, rng) -> int:
    return TsUniformBB().select_action(history, rng)


def ucb_select(history, delta=0.1, sigma=0.5) -> int:
    return Ucb(delta, sigma).select_action(history, None)


POLICY_NAMES = (
    "ts_psar",
    "bayes_ucb_psar",
    "ts_uniform_bb",
    "ucb",
    "ts_neural_linear",
    "ts_ensemble",
    "broken_one_reward",
    "broken_mean",
    "ts_oracle",
)


def make_policy(name, model=None, **options) -> Policy:
    """Build a policy from its registry name.

    ``model`` is the sequence model for the PS-AR and broken variants, a
    GaussianGaussianModel for ``ts_neural_linear`` and a list of RateModel
    members for ``ts_ensemble``.
    """
    if name == "ts_psar":
        return TsPsar(_need(model, name), options.get("truncation", "auto"))
    if name == "ts_oracle":
        return TsPsar(model or OracleMixtureModel(), options.get("truncation", "auto"), name="ts_oracle")
    if name == "bayes_ucb_psar":
        return BayesUcbPsar(_need(model, name), options.get("num_generations", 100), options.get("truncation", "auto"))
    if name == "ts_uniform_bb":
        return TsUniformBB()
    if name == "ucb":
        return Ucb(options.get("delta", 0.1), options.get("sigma", 0.5))
    if name == "ts_neural_linear":
        if not isinstance(model, GaussianGaussianModel):
            raise ValueError("ts_neural_linear needs a GaussianGaussianModel")
        return TsNeuralLinear(model)
    if name == "ts_ensemble":
        if not model or not all(isinstance(m, RateModel) for m in model):
            raise ValueError("ts_ensemble needs a list of RateModel members")
        return TsEnsemble(model, options.get("online_lr", 0.01), options.get("bootstrap", True))
    if name == "broken_one_reward":
        return BrokenOneReward(_need(model, name))
    if name == "broken_mean":
        return BrokenMean(_need(model, name), options.get("k", BROKEN_MEAN_DRAWS))
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")


def _need(model, name):
    if model is None:
        raise ValueError(f"policy {name!r} needs a sequence model")
    return model
