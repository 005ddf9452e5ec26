"""Task samplers, click-rate normalization and offline datasets."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit, logit

from .core import BanditTask, PotentialOutcomesTable, as_features

VALIDATION_FRACTION = 0.2
MIN_IMPRESSIONS = 100


class DatasetParseError(ValueError):
    """Malformed offline dataset file."""


@dataclass(frozen=True)
class MixtureBetaBernoulliConfig:
    feature_low: float = 0.0
    feature_high: float = 0.25
    concentration: float = 25.0
    mixture_weight: float = 0.5

    def __post_init__(self):
        if not self.feature_low < self.feature_high:
            raise ValueError("feature_low must be below feature_high")
        if not self.concentration > 0:
            raise ValueError("concentration must be positive")
        if not 0.0 <= self.mixture_weight <= 1.0:
            raise ValueError("mixture_weight must lie in [0, 1]")

    def component_params(self, z):
        """Beta parameters of both mixture branches for features z of shape (..., 2).

        Returns (weights (2,), alphas (..., 2), betas (..., 2)).
        """
        z = np.asarray(z, dtype=np.float64)
        c = self.concentration
        z1, z2 = z[..., 0], z[..., 1]
        alphas = np.stack([c * z1 / 4 + 1, c * (1 - z2 / 4) + 1], axis=-1)
        betas = np.stack([c * (1 - z1 / 4) + 1, c * z2 / 4 + 1], axis=-1)
        weights = np.array([self.mixture_weight, 1.0 - self.mixture_weight])
        return weights, alphas, betas


@dataclass(frozen=True)
class EmpiricalBayesConfig:
    prior_scale: float = 5.0

    def __post_init__(self):
        if not self.prior_scale > 0:
            raise ValueError("prior_scale must be positive")

    def beta_params(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim and z.shape[-1] == 1:
            z = z[..., 0]
        return self.prior_scale * z + 1, self.prior_scale * (1 - z) + 1


@dataclass(frozen=True)
class LatentMixtureState:
    success_prob: float
    component: int


def _check_shape(num_actions, horizon, min_actions=1):
    if num_actions < min_actions:
        raise ValueError(f"num_actions must be at least {min_actions}")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")


def _bernoulli_table(mu, horizon, rng):
    entries = (rng.random((mu.size, horizon)) < mu[:, None]).astype(np.int8)
    return PotentialOutcomesTable.full(entries)


def sample_mixture_latents(config: MixtureBetaBernoulliConfig, num_actions, rng):
    """Features (A, 2), success probabilities (A,) and branch indices (A,)."""
    z = rng.uniform(config.feature_low, config.feature_high, size=(num_actions, 2))
    weights, alphas, betas = config.component_params(z)
    comp = (rng.random(num_actions) >= weights[0]).astype(np.int64)
    rows = np.arange(num_actions)
    mu = rng.beta(alphas[rows, comp], betas[rows, comp])
    return z, mu, comp


def sample_mixture_task(config: MixtureBetaBernoulliConfig, num_actions, horizon, rng):
    _check_shape(num_actions, horizon, min_actions=2)
    z, mu, comp = sample_mixture_latents(config, num_actions, rng)
    task = BanditTask(z, _bernoulli_table(mu, horizon, rng))
    return task, [LatentMixtureState(float(m), int(c)) for m, c in zip(mu, comp)]


def sample_empirical_bayes_task(config: EmpiricalBayesConfig, num_actions, horizon, rng):
    _check_shape(num_actions, horizon)
    z = rng.random(num_actions)
    a, b = config.beta_params(z)
    mu = rng.beta(a, b)
    task = BanditTask(z[:, None], _bernoulli_table(mu, horizon, rng))
    return task, [float(m) for m in mu]


def normalize_click_rates(rates):
    """Shift rates on the logit scale so their mean logit is zero.

    Rates of exactly 0 or 1 have no finite logit; they pass through unchanged
    and are left out of the mean.
    """
    r = np.asarray(rates, dtype=np.float64)
    if r.size == 0:
        raise ValueError("rates must be nonempty")
    if np.any((r < 0) | (r > 1)) or not np.all(np.isfinite(r)):
        raise ValueError("rates must lie in [0, 1]")
    inner = (r > 0) & (r < 1)
    out = r.copy()
    if inner.any():
        lg = logit(r[inner])
        out[inner] = expit(lg - lg.mean())
    return out


def bootstrap_sequence(outcomes, target_length, rng):
    src = np.asarray(outcomes, dtype=np.int8)
    if src.size == 0:
        raise ValueError("cannot bootstrap from an empty sequence")
    if target_length < 0:
        raise ValueError("target_length must be nonnegative")
    return src[rng.integers(0, src.size, size=target_length)]


@dataclass
class ActionDataset:
    """Per-action (id, features, outcomes) entries with a train/validation split."""

    action_ids: list
    features: np.ndarray
    outcomes: list
    is_validation: np.ndarray = field(default=None)

    def __post_init__(self):
        self.features = as_features(self.features) if len(self.action_ids) else np.zeros((0, 1))
        self.outcomes = [np.asarray(o, dtype=np.int8) for o in self.outcomes]
        if not (len(self.action_ids) == self.features.shape[0] == len(self.outcomes)):
            raise ValueError("ids, features and outcomes must have equal length")
        if any(o.size == 0 for o in self.outcomes):
            raise ValueError("every action needs at least one outcome")
        if self.is_validation is None:
            self.is_validation = np.zeros(len(self.action_ids), dtype=bool)
        self.is_validation = np.asarray(self.is_validation, dtype=bool)

    def __len__(self):
        return len(self.action_ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, mask) -> "ActionDataset":
        idx = np.flatnonzero(mask)
        return ActionDataset(
            [self.action_ids[i] for i in idx],
            self.features[idx],
            [self.outcomes[i] for i in idx],
            self.is_validation[idx],
        )

    def with_split(self, rng, fraction=VALIDATION_FRACTION) -> "ActionDataset":
        """Mark each action as validation independently with probability ``fraction``."""
        if not 0.0 < fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        flags = rng.random(len(self)) < fraction
        return ActionDataset(self.action_ids, self.features, self.outcomes, flags)

    def train(self) -> "ActionDataset":
        return self.subset(~self.is_validation)

    def validation(self) -> "ActionDataset":
        return self.subset(self.is_validation)

    def counts(self):
        """Per-entry sequence lengths and success counts."""
        n = np.array([o.size for o in self.outcomes], dtype=np.int64)
        s = np.array([int(o.sum()) for o in self.outcomes], dtype=np.int64)
        return n, s

    def save(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["action_id", "features", "outcomes"])
            for aid, z, y in zip(self.action_ids, self.features, self.outcomes):
                w.writerow([aid, ";".join(repr(float(v)) for v in z), "".join("1" if v else "0" for v in y)])


def load_action_dataset(path, min_impressions=MIN_IMPRESSIONS) -> ActionDataset:
    """Read ``action_id,features,outcomes`` rows; short actions are dropped."""
    ids, feats, outs = [], [], []
    dim = None
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["action_id", "features", "outcomes"]:
            raise DatasetParseError("line 1: expected header action_id,features,outcomes")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise DatasetParseError(f"line {line}: expected 3 fields, got {len(row)}")
            aid, ftxt, otxt = (c.strip() for c in row)
            try:
                z = [float(v) for v in ftxt.split(";")]
            except ValueError:
                raise DatasetParseError(f"line {line}: features must be semicolon-separated reals") from None
            if not np.all(np.isfinite(z)):
                raise DatasetParseError(f"line {line}: features must be finite")
            if not otxt or set(otxt) - {"0", "1"}:
                raise DatasetParseError(f"line {line}: outcomes must be a nonempty string of 0/1")
            if dim is None:
                dim = len(z)
            elif len(z) != dim:
                raise DatasetParseError(f"line {line}: feature dimension {len(z)} differs from {dim}")
            if len(otxt) < min_impressions:
                continue
            ids.append(aid)
            feats.append(z)
            outs.append(np.frombuffer(otxt.encode(), dtype=np.uint8) - ord("0"))
    features = np.array(feats, dtype=np.float64).reshape(len(ids), dim or 1)
    return ActionDataset(ids, features, outs)


def build_offline_dataset(sampler: Callable, num_actions, horizon, rng) -> ActionDataset:
    """Flatten per-action (Z, Y_1:T) pairs from tasks drawn by ``sampler(rng)``.

    ``sampler`` returns a BanditTask (optionally as the first element of a tuple).
    Tasks are drawn repeatedly until ``num_actions`` rows are collected.
    """
    feats, outs = [], []
    while sum(f.shape[0] for f in feats) < num_actions:
        task = sampler(rng)
        if isinstance(task, tuple):
            task = task[0]
        feats.append(task.priors)
        outs.extend(task.table.entries)
    features = np.concatenate(feats)[:num_actions]
    outs = [np.array(o) for o in outs[:num_actions]]
    if any(o.size != horizon for o in outs):
        raise ValueError("sampler produced sequences of the wrong horizon")
    return ActionDataset([f"a{i}" for i in range(num_actions)], features, outs)


@dataclass(frozen=True)
class MixtureTaskSampler:
    """Picklable callable ``rng -> (task, latents)`` for the mixture environment."""

    config: MixtureBetaBernoulliConfig = MixtureBetaBernoulliConfig()
    num_actions: int = 10
    horizon: int = 500

    def __call__(self, rng):
        return sample_mixture_task(self.config, self.num_actions, self.horizon, rng)


@dataclass(frozen=True)
class EmpiricalBayesTaskSampler:
    config: EmpiricalBayesConfig = EmpiricalBayesConfig()
    num_actions: int = 10
    horizon: int = 500

    def __call__(self, rng):
        return sample_empirical_bayes_task(self.config, self.num_actions, self.horizon, rng)


class DatasetTaskSampler:
    """Tasks built from a pool of real actions.

    Each task draws ``num_actions`` distinct actions, takes their observed
    click rates after logit-centering, and samples fresh Bernoulli outcomes.
    """

    def __init__(self, dataset: ActionDataset, num_actions, horizon, normalize=True):
        if len(dataset) < num_actions:
            raise ValueError("dataset has fewer actions than a task needs")
        n, s = dataset.counts()
        rates = s / n
        self.rates = normalize_click_rates(rates) if normalize else rates
        self.features = dataset.features
        self.num_actions = num_actions
        self.horizon = horizon

    def __call__(self, rng):
        idx = rng.choice(self.features.shape[0], size=self.num_actions, replace=False)
        mu = self.rates[idx]
        task = BanditTask(self.features[idx], _bernoulli_table(mu, self.horizon, rng))
        return task, [float(m) for m in mu]


def category_dataset(num_actions, num_categories, length, rng, concentration=10.0):
    """Synthetic click data whose only prior information is a one-hot category.

    Each category has a base rate drawn uniformly from (0.02, 0.5); an action's
    rate is Beta around its category's base rate.
    """
    base = rng.uniform(0.02, 0.5, size=num_categories)
    cats = rng.integers(0, num_categories, size=num_actions)
    mu = rng.beta(concentration * base[cats], concentration * (1 - base[cats]))
    features = np.eye(num_categories)[cats]
    outs = [(rng.random(length) < m).astype(np.int8) for m in mu]
    return ActionDataset([f"c{c}_{i}" for i, c in enumerate(cats)], features, outs)
