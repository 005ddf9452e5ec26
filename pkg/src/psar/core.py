"""Domain types: potential-outcomes tables, bandit tasks and histories.

Outcomes are binary and the reward map is the identity, so a table row's
mean reward is just the fraction of ones in that row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UndefinedEntryError(ValueError):
    """Raised when an operation needs a table entry that is not realized."""


def reward(outcome):
    """Identity reward on binary outcomes."""
    return outcome


def as_features(values) -> np.ndarray:
    """Validate prior features for a set of actions; returns a (A, d) float array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"prior features must be (num_actions, d), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("prior features must be finite")
    return arr


@dataclass(frozen=True)
class PotentialOutcomesTable:
    """|A| x T array of binary potential outcomes plus a realized-entry mask."""

    entries: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int8)
        mask = np.asarray(self.mask, dtype=bool)
        if entries.ndim != 2 or entries.shape != mask.shape:
            raise ValueError("entries and mask must be 2-D arrays of equal shape")
        if entries.shape[0] < 1 or entries.shape[1] < 1:
            raise ValueError("table needs at least one action and one timestep")
        if np.any((entries[mask] != 0) & (entries[mask] != 1)):
            raise ValueError("realized outcomes must be 0 or 1")
        entries = np.where(mask, entries, 0).astype(np.int8)
        entries.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, entries) -> "PotentialOutcomesTable":
        entries = np.asarray(entries)
        return cls(entries, np.ones(entries.shape, dtype=bool))

    @property
    def num_actions(self) -> int:
        return self.entries.shape[0]

    @property
    def horizon(self) -> int:
        return self.entries.shape[1]

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    def row_means(self) -> np.ndarray:
        if not self.complete:
            raise UndefinedEntryError("table has unrealized entries")
        return self.entries.mean(axis=1)


def empirical_mean(table: PotentialOutcomesTable, action: int) -> float:
    """Long-run mean reward of one row; every entry of the row must be known."""
    if not table.mask[action].all():
        missing = np.flatnonzero(~table.mask[action]) + 1
        raise UndefinedEntryError(f"action {action} has undefined entries at timesteps {missing.tolist()}")
    return float(reward(table.entries[action]).mean())


def best_action(table: PotentialOutcomesTable) -> int:
    """Row with the largest mean reward; ties go to the lowest index."""
    return int(np.argmax(table.row_means()))


@dataclass(frozen=True)
class BanditTask:
    priors: np.ndarray
    table: PotentialOutcomesTable

    def __post_init__(self):
        priors = as_features(self.priors)
        if priors.shape[0] != self.table.num_actions:
            raise ValueError("one prior feature vector is required per action")
        if not self.table.complete:
            raise ValueError("a bandit task carries a fully observed table")
        priors.flags.writeable = False
        object.__setattr__(self, "priors", priors)

    @property
    def num_actions(self) -> int:
        return self.table.num_actions

    @property
    def horizon(self) -> int:
        return self.table.horizon


@dataclass(frozen=True)
class History:
    """Prior features plus the chronological record of (timestep, action, outcome).

    Timesteps are implicit: record ``i`` happened at time ``i + 1``.
    """

    priors: np.ndarray
    actions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    outcomes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self):
        priors = as_features(self.priors)
        actions = np.asarray(self.actions, dtype=np.int64).ravel()
        outcomes = np.asarray(self.outcomes, dtype=np.int8).ravel()
        if actions.shape != outcomes.shape:
            raise ValueError("actions and outcomes must have equal length")
        if actions.size and (actions.min() < 0 or actions.max() >= priors.shape[0]):
            raise ValueError("action index out of range")
        if np.any((outcomes != 0) & (outcomes != 1)):
            raise ValueError("outcomes must be 0 or 1")
        for arr in (priors, actions, outcomes):
            arr.flags.writeable = False
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "outcomes", outcomes)

    @classmethod
    def from_records(cls, priors, records) -> "History":
        """Build from ``(timestep, action, outcome)`` triples; timesteps must be 1, 2, ..."""
        records = list(records)
        steps = [int(r[0]) for r in records]
        if steps != list(range(1, len(records) + 1)):
            raise ValueError("timesteps must start at 1 and increase without gaps")
        return cls(priors, [r[1] for r in records], [r[2] for r in records])

    @property
    def num_actions(self) -> int:
        return self.priors.shape[0]

    @property
    def t(self) -> int:
        """Number of recorded observations (the next decision is at time t + 1)."""
        return int(self.actions.size)

    @property
    def records(self) -> list[tuple[int, int, int]]:
        return [(i + 1, int(a), int(y)) for i, (a, y) in enumerate(zip(self.actions, self.outcomes))]

    def append(self, action: int, outcome: int) -> "History":
        return History(
            self.priors,
            np.append(self.actions, np.int64(action)),
            np.append(self.outcomes, np.int8(outcome)),
        )

    def counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-action observation counts and success counts."""
        k = self.num_actions
        n = np.bincount(self.actions, minlength=k).astype(np.int64)
        s = np.bincount(self.actions, weights=self.outcomes, minlength=k).astype(np.int64)
        return n, s

    def observed_mask(self, horizon: int) -> np.ndarray:
        """(A, horizon) mask of table entries revealed by this history."""
        if self.t > horizon:
            raise ValueError("history is longer than the horizon")
        mask = np.zeros((self.num_actions, horizon), dtype=bool)
        mask[self.actions, np.arange(self.t)] = True
        return mask


def observed_stats(history: History, action: int) -> tuple[int, int, list[int]]:
    """Count, success count and ordered outcomes observed for one action."""
    seq = history.outcomes[history.actions == action]
    return int(seq.size), int(seq.sum()), [int(y) for y in seq]


def episode_regret(task: BanditTask, chosen_actions) -> float:
    """Per-period regret against the best fixed row in hindsight."""
    actions = np.asarray(chosen_actions, dtype=np.int64)
    T = task.horizon
    if actions.shape != (T,):
        raise ValueError(f"expected {T} actions, got {actions.size}")
    rewards = reward(task.table.entries).astype(np.float64)
    best_total = rewards.sum(axis=1).max()
    earned = rewards[actions, np.arange(T)].sum()
    return float((best_total - earned) / T)
