"""A bandit simulator driven by a sequence model.

The k-th play of an arm returns an outcome drawn from the model given that
arm's first k - 1 simulated outcomes. Rows are indexed by play count rather
than by calendar time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import BanditTask, History, PotentialOutcomesTable
from ..generate import PredictiveTables
from ..kernels import walk_successes
from ..policies import Policy, fresh
from ..seqmodel import SequenceModel
from .experiments import run_episode


class SimulatedEnvironment:
    def __init__(self, model: SequenceModel, priors, horizon):
        self.model = model
        self.priors = np.atleast_2d(np.asarray(priors, dtype=float))
        self.horizon = int(horizon)
        self._tables = PredictiveTables(model, self.priors, self.horizon)
        A = self.priors.shape[0]
        self.plays = np.zeros(A, dtype=np.int64)
        self.successes = np.zeros(A, dtype=np.int64)

    def play(self, action, rng) -> int:
        a = int(action)
        tab = self._tables.tables[self._tables.index[a]]
        y = int(rng.random() < tab[self.plays[a], self.successes[a]])
        self.plays[a] += 1
        self.successes[a] += y
        return y

    def complete_rows(self, rng) -> np.ndarray:
        """Row sums after extending every arm's stream to the horizon."""
        steps = self.horizon - self.plays
        g = walk_successes(self._tables.tables, self._tables.index, self.plays, self.successes, steps,
                           rng.random((steps.size, max(1, int(steps.max())))))
        return self.successes + g


def run_simulated_episode(env: SimulatedEnvironment, policy: Policy, horizon, rng) -> float:
    """Per-period regret of ``policy`` inside the simulator."""
    pol = fresh(policy)
    pol.begin(env.priors, horizon)
    history = History(env.priors)
    earned = 0
    for _ in range(horizon):
        a = pol.select_action(history, rng)
        y = env.play(a, rng)
        history = history.append(a, y)
        pol.observe(history, a, y, rng)
        earned += y
    best = env.complete_rows(rng).max()
    return float((best - earned) / horizon)


def simulator_penalty(num_actions, excess) -> float:
    """sqrt(|A| / 2 * excess loss), the price of simulating with an imperfect model."""
    return float(np.sqrt(num_actions / 2.0 * max(float(excess), 0.0)))


@dataclass
class SimToRealResult:
    delta_real: float
    se_real: float
    delta_sim: float
    se_sim: float
    penalty: float
    excess: float

    @property
    def slack(self) -> float:
        return self.delta_sim + self.penalty + 3 * np.hypot(self.se_real, self.se_sim) - self.delta_real

    @property
    def holds(self) -> bool:
        return self.slack >= 0


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def check_sim_to_real(policy, model, truth, z_sampler, num_actions, horizon, reps, base_seed=0, excess=None,
                      z_atoms=None, z_weights=None, excess_samples=20000) -> SimToRealResult:
    """Compare real regret under ``truth`` with simulated regret under ``model``.

    ``z_sampler(rng, size)`` draws feature rows. The excess loss is computed by
    enumeration when the horizon is at most 10 and ``z_atoms`` is given,
    otherwise by Monte Carlo.
    """
    from ..seqmodel import excess_loss

    real, sim = [], []
    for rep in range(reps):
        ss = np.random.SeedSequence([int(base_seed), rep]).spawn(4)
        rng_task = np.random.default_rng(ss[0])
        z = z_sampler(rng_task, num_actions)
        rows = truth.sample_sequences(z, horizon, rng_task)
        task = BanditTask(z, PotentialOutcomesTable.full(rows))
        real.append(run_episode(policy, task, np.random.default_rng(ss[1]))[2])
        rng_sim = np.random.default_rng(ss[2])
        z_sim = z_sampler(rng_sim, num_actions)
        sim.append(run_simulated_episode(SimulatedEnvironment(model, z_sim, horizon), policy, horizon, rng_sim))
    if excess is None:
        if horizon <= 10 and z_atoms is not None:
            excess = excess_loss(model, truth, z_atoms, z_weights, horizon)
        else:
            rng_ex = np.random.default_rng([int(base_seed), reps, 7])
            excess = excess_loss(model, truth, None, horizon=horizon, mode="mc", rng=rng_ex,
                                 num_samples=excess_samples, z_sampler=z_sampler)[0]
    dr, sr = _mean_se(real)
    ds, ss_ = _mean_se(sim)
    return SimToRealResult(dr, sr, ds, ss_, simulator_penalty(num_actions, excess), float(excess))
