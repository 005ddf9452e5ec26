"""Autoregressive imputation of missing potential outcomes.

For each action the missing entries of its row are filled in time order, each
drawn from the sequence model given every entry placed so far in that row
(observed ones first, then earlier generated ones).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import History, PotentialOutcomesTable
from .kernels import walk_record, walk_successes
from .seqmodel import SequenceModel

DEFAULT_TRUNCATION = 500


@dataclass(frozen=True)
class GenerationConfig:
    """``truncation=None`` completes the whole row; otherwise average m fresh draws.

    A truncation of at least the horizon also completes the whole row.
    """

    truncation: int | None = None
    num_samples: int = 1

    def __post_init__(self):
        if self.truncation is not None and self.truncation < 1:
            raise ValueError("truncation must be a positive integer")
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")

    @classmethod
    def default_for(cls, horizon, num_samples=1):
        """Truncate at 500 draws only when the horizon is longer than that."""
        return cls(DEFAULT_TRUNCATION if horizon > DEFAULT_TRUNCATION else None, num_samples)

    def table_size(self, horizon):
        """Largest count n the predictive table must cover, plus one."""
        return horizon + (self.truncation or 0) + 1


class PredictiveTables:
    """Dense ``p[n, s]`` tables for a fixed set of feature vectors.

    Identical feature rows share one table. Tables never change within an
    episode because the model is fixed and only (n, s) move.
    """

    def __init__(self, model: SequenceModel, priors, n_max):
        priors = np.atleast_2d(np.asarray(priors, dtype=np.float64))
        uniq, idx = np.unique(priors, axis=0, return_inverse=True)
        self.model = model
        self.n_max = int(n_max)
        self.index = idx.reshape(-1).astype(np.int64)
        self.tables = np.stack([model.table(z, self.n_max) for z in uniq])

    @property
    def num_actions(self) -> int:
        return self.index.size


def _tables_for(model, history, n_max, tables):
    if tables is None:
        return PredictiveTables(model, history.priors, n_max)
    if tables.n_max < n_max or tables.num_actions != history.num_actions:
        raise ValueError("precomputed tables do not cover this history")
    return tables


@dataclass(frozen=True)
class ImputedTable:
    table: PotentialOutcomesTable
    generated: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return ~self.generated


def impute_table(model, history: History, horizon, rng, tables=None) -> ImputedTable:
    """One full posterior sample of the potential-outcomes table."""
    if history.t > horizon:
        raise ValueError("history is longer than the horizon")
    A = history.num_actions
    tabs = _tables_for(model, history, horizon, tables)
    mask = history.observed_mask(horizon)
    entries = np.zeros((A, horizon), dtype=np.int8)
    entries[history.actions, np.arange(history.t)] = history.outcomes
    n0, s0 = history.counts()
    steps = horizon - n0
    gen = walk_record(tabs.tables, tabs.index, n0, s0, steps, rng.random((A, horizon)))
    for a in range(A):
        entries[a, ~mask[a]] = gen[a, : steps[a]]
    return ImputedTable(PotentialOutcomesTable.full(entries), ~mask)


def sample_means_from_stats(tables: PredictiveTables, table_idx, n0, s0, horizon, config: GenerationConfig, rng):
    """Posterior samples of row means for rows with observed counts (n0, s0).

    Returns a (num_samples, rows) array. Full mode averages the completed row
    (observed plus generated). Truncated mode (m below the horizon) averages
    exactly m freshly generated outcomes and leaves observed ones out.
    """
    n0 = np.asarray(n0, dtype=np.int64)
    s0 = np.asarray(s0, dtype=np.int64)
    if np.any(n0 > horizon):
        raise ValueError("more observations than the horizon")
    k = config.num_samples
    m = config.truncation if config.truncation is not None and config.truncation < horizon else None
    A = n0.size
    steps = np.full(A, m, dtype=np.int64) if m else horizon - n0
    width = int(steps.max()) if A else 0
    g = walk_successes(
        tables.tables,
        np.tile(np.asarray(table_idx, dtype=np.int64), k),
        np.tile(n0, k),
        np.tile(s0, k),
        np.tile(steps, k),
        rng.random((k * A, width)),
    ).reshape(k, A)
    if m:
        return g / m
    return (s0 + g) / horizon


def sample_arm_means(model, history: History, horizon, config: GenerationConfig, rng, tables=None, actions=None):
    """(num_samples, num_actions) array of posterior samples of each arm's mean."""
    if history.t > horizon:
        raise ValueError("history is longer than the horizon")
    tabs = _tables_for(model, history, config.table_size(horizon) - 1, tables)
    n0, s0 = history.counts()
    idx = tabs.index
    if actions is not None:
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        n0, s0, idx = n0[actions], s0[actions], idx[actions]
    return sample_means_from_stats(tabs, idx, n0, s0, horizon, config, rng)


def posterior_mean_sample(model, history, action, horizon, config: GenerationConfig, rng, tables=None) -> float:
    one = GenerationConfig(config.truncation, 1)
    return float(sample_arm_means(model, history, horizon, one, rng, tables, actions=[action])[0, 0])


def credible_interval(samples, level):
    """Equal-tailed interval from empirical quantiles (linear interpolation)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in the open interval (0, 1)")
    lo, hi = np.quantile(x, [(1 - level) / 2, 1 - (1 - level) / 2])
    return float(lo), float(hi)
