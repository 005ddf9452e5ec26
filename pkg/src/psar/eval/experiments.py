"""Regret and coverage experiments."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import BanditTask, History, episode_regret
from ..generate import GenerationConfig, PredictiveTables, credible_interval, sample_means_from_stats
from ..policies import Policy, fresh


def rep_streams(base_seed, rep):
    """Independent generators for the task and for the policies of one replication."""
    task_ss, policy_ss = np.random.SeedSequence([int(base_seed), int(rep)]).spawn(2)
    return np.random.default_rng(task_ss), policy_ss


def run_episode(policy: Policy, task: BanditTask, rng):
    """Play one episode; returns (actions, instant regret per period, realized per-period regret).

    Instant regret is the gap between the best row mean and the chosen row's mean.
    """
    T = task.horizon
    pol = fresh(policy)
    pol.begin(task.priors, T)
    means = task.table.row_means()
    history = History(task.priors)
    actions = np.zeros(T, dtype=np.int64)
    for t in range(T):
        a = pol.select_action(history, rng)
        y = int(task.table.entries[a, t])
        history = history.append(a, y)
        pol.observe(history, a, y, rng)
        actions[t] = a
    instant = means.max() - means[actions]
    return actions, instant, episode_regret(task, actions)


@dataclass
class RegretCurve:
    policy: str
    instant: np.ndarray
    realized: np.ndarray

    @property
    def reps(self) -> int:
        return self.instant.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.instant, axis=1)

    def mean(self) -> np.ndarray:
        return self.cumulative.mean(axis=0)

    def se(self) -> np.ndarray:
        if self.reps < 2:
            return np.zeros(self.instant.shape[1])
        return self.cumulative.std(axis=0, ddof=1) / np.sqrt(self.reps)

    def final(self, t=None):
        """Mean and standard error of cumulative regret after ``t`` periods (default: all)."""
        col = (t or self.instant.shape[1]) - 1
        c = self.cumulative[:, col]
        return float(c.mean()), float(c.std(ddof=1) / np.sqrt(c.size)) if c.size > 1 else 0.0


def _one_rep(args):
    policies, sampler, base_seed, rep = args
    task_rng, policy_ss = rep_streams(base_seed, rep)
    task = sampler(task_rng)
    if isinstance(task, tuple):
        task = task[0]
    out = {}
    for name, pol in policies.items():
        # common random numbers: every policy sees the same task and seed
        _, inst, real = run_episode(pol, task, np.random.default_rng(policy_ss))
        out[name] = (inst, real)
    return out


def run_regret_experiment(policies: dict, sampler, horizon, reps, base_seed, jobs=1) -> dict:
    """Regret curves for named policies over ``reps`` shared tasks.

    ``sampler(rng)`` returns a BanditTask (or a tuple starting with one) whose
    horizon must equal ``horizon``. Results do not depend on ``jobs``.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    work = [(policies, sampler, base_seed, r) for r in range(reps)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_one_rep, work))
    else:
        results = [_one_rep(w) for w in work]
    curves = {}
    for name in policies:
        inst = np.stack([r[name][0] for r in results])
        if inst.shape[1] != horizon:
            raise ValueError(f"sampler produced horizon {inst.shape[1]}, expected {horizon}")
        curves[name] = RegretCurve(name, inst, np.array([r[name][1] for r in results]))
    return curves


def write_regret_csv(curves: dict, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "rep", "t", "instant_regret", "cum_regret"])
        for name, c in curves.items():
            cum = c.cumulative
            for r in range(c.reps):
                for t in range(c.instant.shape[1]):
                    w.writerow([name, r, t + 1, repr(float(c.instant[r, t])), repr(float(cum[r, t]))])


@dataclass
class CoverageRow:
    model: str
    t_obs: int
    level: float
    coverage: float
    coverage_se: float
    mean_width: float
    width_se: float
    num_actions: int
    num_samples: int


def run_coverage_experiment(models: dict, features, outcomes, t_obs_list=(0,), levels=(0.8,), k=250, rng=None,
                            chunk=64):
    """Credible-interval coverage of each row's true mean.

    ``features`` is (N, d) and ``outcomes`` is (N, T): one held-out action per
    row with its full outcome sequence. Each action is conditioned on its first
    ``t_obs`` outcomes and k full-row posterior mean samples are drawn.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    outcomes = np.asarray(outcomes, dtype=np.int64)
    N, T = outcomes.shape
    if any(t >= T or t < 0 for t in t_obs_list):
        raise ValueError("t_obs must lie in [0, T)")
    rng = rng if rng is not None else np.random.default_rng(0)
    truth = outcomes.mean(axis=1)
    cfg = GenerationConfig(None, k)
    rows = []
    for name, model in models.items():
        for t_obs in t_obs_list:
            n0 = np.full(N, t_obs, dtype=np.int64)
            s0 = outcomes[:, :t_obs].sum(axis=1)
            samples = np.empty((k, N))
            for start in range(0, N, chunk):
                sl = slice(start, min(N, start + chunk))
                tabs = PredictiveTables(model, features[sl], T)
                samples[:, sl] = sample_means_from_stats(tabs, tabs.index, n0[sl], s0[sl], T, cfg, rng)
            for level in levels:
                credible_interval(samples[:, 0], level)  # validates the level
                lo, hi = np.quantile(samples, [(1 - level) / 2, 1 - (1 - level) / 2], axis=0)
                hit = (lo <= truth) & (truth <= hi)
                width = hi - lo
                cov = float(hit.mean())
                rows.append(CoverageRow(
                    name, int(t_obs), float(level), cov, float(np.sqrt(cov * (1 - cov) / N)),
                    float(width.mean()), float(width.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0, N, k,
                ))
    return rows


def write_coverage_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "t_obs", "level", "coverage", "coverage_se", "mean_width", "width_se"])
        for r in rows:
            w.writerow([r.model, r.t_obs, repr(r.level), repr(r.coverage), repr(r.coverage_se),
                        repr(r.mean_width), repr(r.width_se)])
