"""Exact and Monte Carlo checks of the theoretical guarantees.

Small instances are solved by brute-force enumeration of histories and table
completions, so the checks need no sampling and hold to rounding error.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..seqmodel import ClosedFormModel, DiscreteLatentModel, SequenceModel, all_sequences, excess_loss


@dataclass
class CheckResult:
    """One verification line: the check passes when ``lhs <= rhs`` (``margin = rhs - lhs``)."""

    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.margin >= 0)

    def line(self) -> str:
        return f"{self.name},{self.lhs:.6g},{self.rhs:.6g},{self.margin:.6g},{'pass' if self.passed else 'FAIL'}"


def _atoms(z_atoms, z_weights):
    atoms = np.atleast_2d(np.asarray(z_atoms, dtype=float))
    w = np.full(atoms.shape[0], 1.0 / atoms.shape[0]) if z_weights is None else np.asarray(z_weights, float)
    if not np.isclose(w.sum(), 1.0):
        raise ValueError("Z weights must sum to 1")
    return atoms, w


def check_loss_kl_identity(model, truth, horizon, z_atoms=((0.0,),), z_weights=None):
    """(lhs, rhs, |lhs - rhs|) for  loss(model) - loss(truth) = E_Z KL(truth || model).

    The left side sums expected next-outcome log losses over timesteps, one
    prefix at a time. The right side compares joint sequence probabilities.
    """
    if horizon > 10:
        raise ValueError("identity check enumerates sequences; use horizon <= 10")
    atoms, w = _atoms(z_atoms, z_weights)
    lhs = 0.0
    rhs = 0.0
    for z, wz in zip(atoms, w):
        for t in range(horizon):
            prefixes = all_sequences(t)
            lp_prefix = truth.sequence_log_probs(z, prefixes) if t else np.zeros(1)
            n = np.full(prefixes.shape[0], t)
            s = prefixes.sum(axis=1)
            p_true = truth.predict(z, n, s)
            p_model = model.predict(z, n, s)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = (
                    -np.where(p_true > 0, p_true * np.log(p_model), 0.0)
                    - np.where(p_true < 1, (1 - p_true) * np.log1p(-p_model), 0.0)
                    + np.where(p_true > 0, p_true * np.log(p_true), 0.0)
                    + np.where(p_true < 1, (1 - p_true) * np.log1p(-p_true), 0.0)
                )
            lhs += wz * float(np.sum(np.exp(lp_prefix) * step))
        rhs += wz * excess_loss(model, truth, z[None], None, horizon)
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# Enumeration of table completions


def model_completion_law(model: SequenceModel, z, n, s, horizon):
    """All completions of a row with (n, s) observed, and their probabilities under autoregressive generation."""
    k = horizon - n
    ys = all_sequences(k)
    if k == 0:
        return ys, np.ones(1)
    prefix = np.concatenate([np.zeros((ys.shape[0], 1), dtype=np.int64), np.cumsum(ys, axis=1)[:, :-1]], axis=1)
    p = model.predict(z, (n + np.arange(k))[None, :].repeat(ys.shape[0], 0).ravel(), (s + prefix).ravel())
    p = p.reshape(ys.shape)
    return ys, np.prod(np.where(ys == 1, p, 1 - p), axis=1)


def truth_completion_law(truth, z, n, s, horizon):
    """Conditional law of the missing entries given the observed ones.

    For closed-form Bayesian models this is a ratio of marginal likelihoods;
    otherwise the model's own autoregressive law is used.
    """
    if not isinstance(truth, ClosedFormModel):
        return model_completion_law(truth, z, n, s, horizon)
    k = horizon - n
    ys = all_sequences(k)
    tot = s + ys.sum(axis=1)
    lp = np.asarray(truth.log_marginal(z, np.full(ys.shape[0], horizon), tot), dtype=float).reshape(-1)
    return ys, np.exp(lp - truth.log_marginal(z, n, s))


def _mean_law(ys, probs, s, horizon):
    means = (s + ys.sum(axis=1)) / horizon
    return means, probs


def argmax_probs(mean_laws):
    """P(argmax_a mu_a = a) for independent rows; ties go to the lowest index.

    ``mean_laws`` is a list of (values, probs) per arm.
    """
    A = len(mean_laws)
    grids = np.meshgrid(*[m for m, _ in mean_laws], indexing="ij")
    pgrid = np.ones(grids[0].shape)
    for a, (_, p) in enumerate(mean_laws):
        shape = [1] * A
        shape[a] = p.size
        pgrid = pgrid * p.reshape(shape)
    best = np.argmax(np.stack(grids), axis=0)
    return np.array([pgrid[best == a].sum() for a in range(A)])


def _kl(p, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return float(terms.sum())


def _pushforward(values, probs):
    uniq, inv = np.unique(np.round(values, 12), return_inverse=True)
    return np.bincount(inv, weights=probs, minlength=uniq.size)


def _stats(actions, outcomes, num_actions):
    n = np.bincount(actions, minlength=num_actions).astype(int) if len(actions) else np.zeros(num_actions, int)
    s = np.bincount(actions, weights=outcomes, minlength=num_actions).astype(int) if len(actions) else np.zeros(num_actions, int)
    return n, s


def _laws(model_or_truth, z_rows, n, s, horizon, truth_side):
    law_fn = truth_completion_law if truth_side else model_completion_law
    return [law_fn(model_or_truth, z_rows[a], int(n[a]), int(s[a]), horizon) for a in range(len(n))]


def ts_action_probs(model, z_rows, n, s, horizon):
    """Exact selection probabilities of generation-based Thompson sampling."""
    laws = _laws(model, z_rows, n, s, horizon, truth_side=False)
    return argmax_probs([_mean_law(ys, p, s[a], horizon) for a, (ys, p) in enumerate(laws)])


def optimal_action_probs(truth, z_rows, n, s, horizon):
    """Exact posterior probability that each action has the best row mean."""
    laws = _laws(truth, z_rows, n, s, horizon, truth_side=True)
    return argmax_probs([_mean_law(ys, p, s[a], horizon) for a, (ys, p) in enumerate(laws)])


def _z_assignments(atoms, weights, num_actions):
    for combo in itertools.product(range(atoms.shape[0]), repeat=num_actions):
        yield atoms[list(combo)], float(np.prod(weights[list(combo)]))


@dataclass
class Prop1Result:
    lhs: np.ndarray
    rhs: float
    excess: float
    lhs_pushforward: np.ndarray
    lhs_reverse: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs + 1e-9))


def check_prop1_bound(model, truth, horizon=3, num_actions=2, z_atoms=((0.0,),), z_weights=None, policy="ts_psar"):
    """Expected KL between true and generated table laws at each period versus |A| times the excess loss.

    ``lhs[t - 1]`` is E[KL(P(tau | H_{t-1}) || P(generated table | H_{t-1}))]
    where histories arise from running ``policy`` ("ts_psar" with ``model`` or
    "uniform") against the truth. ``lhs_pushforward`` is the same for the
    vector of row means; ``lhs_reverse`` swaps the KL arguments and is
    reported for information only.
    """
    if horizon > 4 or num_actions > 3:
        raise ValueError("enumeration is limited to horizon <= 4 and at most 3 actions")
    atoms, w = _atoms(z_atoms, z_weights)
    lhs = np.zeros(horizon)
    push = np.zeros(horizon)
    rev = np.zeros(horizon)
    for z_rows, wz in _z_assignments(atoms, w, num_actions):
        frontier = [((), (), wz)]
        for t in range(horizon):
            nxt = []
            for acts, outs, prob in frontier:
                n, s = _stats(np.array(acts, dtype=int), np.array(outs, dtype=float), num_actions)
                true_laws = _laws(truth, z_rows, n, s, horizon, truth_side=True)
                model_laws = _laws(model, z_rows, n, s, horizon, truth_side=False)
                for a in range(num_actions):
                    (ys, pt), (_, pm) = true_laws[a], model_laws[a]
                    lhs[t] += prob * _kl(pt, pm)
                    rev[t] += prob * _kl(pm, pt)
                    mt = _pushforward(ys.sum(axis=1), pt)
                    mm = _pushforward(ys.sum(axis=1), pm)
                    push[t] += prob * _kl(mt, mm)
                if policy == "ts_psar":
                    pi = argmax_probs([_mean_law(ys, pm, s[a], horizon) for a, (ys, pm) in enumerate(model_laws)])
                elif policy == "uniform":
                    pi = np.full(num_actions, 1.0 / num_actions)
                else:
                    raise ValueError("policy must be 'ts_psar' or 'uniform'")
                for a in range(num_actions):
                    if pi[a] == 0:
                        continue
                    p1 = float(truth.predict(z_rows[a], n[a], s[a]))
                    for y, py in ((1, p1), (0, 1 - p1)):
                        if py > 0:
                            nxt.append((acts + (a,), outs + (y,), prob * pi[a] * py))
            frontier = nxt
    excess = excess_loss(model, truth, atoms, w, horizon)
    return Prop1Result(lhs, num_actions * excess, excess, push, rev)


def check_prob_matching(model, truth, horizon=3, num_actions=2, z_atoms=((0.0,),), z_weights=None):
    """Largest total-variation gap between TS selection and optimal-action probabilities.

    Every history of length 0..horizon-1 (all action and outcome sequences) is
    checked, under every assignment of feature atoms to actions.
    """
    atoms, w = _atoms(z_atoms, z_weights)
    worst = 0.0
    for z_rows, _ in _z_assignments(atoms, w, num_actions):
        for t in range(horizon):
            for acts in itertools.product(range(num_actions), repeat=t):
                for outs in itertools.product((0, 1), repeat=t):
                    n, s = _stats(np.array(acts, dtype=int), np.array(outs, dtype=float), num_actions)
                    p_ts = ts_action_probs(model, z_rows, n, s, horizon)
                    p_opt = optimal_action_probs(truth, z_rows, n, s, horizon)
                    worst = max(worst, 0.5 * float(np.abs(p_ts - p_opt).sum()))
    return worst


# ---------------------------------------------------------------------------
# Regret bounds


def ts_regret_bound(num_actions, horizon, excess=0.0) -> float:
    """sqrt(|A| log|A| / (2T)) + sqrt(|A| / 2 * excess loss)."""
    from .simulator import simulator_penalty

    return math.sqrt(num_actions * math.log(num_actions) / (2 * horizon)) + simulator_penalty(num_actions, excess)


SAFE, RISKY = 0, 1
LOWER_BOUND_ATOMS = (0.25, 0.5, 0.75)


def lower_bound_model(horizon=None) -> DiscreteLatentModel:
    """Safe/Risky instance; with ``horizon`` the risky prior is the misspecified one."""
    safe = [0.0, 1.0, 0.0]
    if horizon is None:
        risky = [0.5, 0.0, 0.5]
    else:
        eps = 1.0 / horizon**2
        risky = [1.0 - eps, 0.0, eps]
    return DiscreteLatentModel(LOWER_BOUND_ATOMS, [safe, risky], name="lower_bound")


def lower_bound_prior_kl(horizon) -> float:
    """KL between the true and misspecified priors on a risky arm's success rate."""
    eps = 1.0 / horizon**2
    return 0.5 * math.log(0.5 / eps) + 0.5 * math.log(0.5 / (1 - eps))


def _latent_ts_regret(belief: DiscreteLatentModel, z, table, rng):
    """Vectorised latent-rate Thompson sampling over replications.

    ``z`` is (R, A) integer features, ``table`` is (R, A, T) outcomes.
    Returns realized per-period regret per replication.
    """
    R, A, T = table.shape
    n = np.zeros((R, A))
    s = np.zeros((R, A))
    earned = np.zeros(R)
    atoms = belief.atoms
    rows = np.arange(R)
    for t in range(T):
        post = belief.posterior_weights(z.reshape(-1, 1), n.ravel(), s.ravel()).reshape(R, A, atoms.size)
        cdf = np.cumsum(post, axis=2)
        u = rng.random((R, A, 1))
        draw = atoms[np.minimum((u > cdf).sum(axis=2), atoms.size - 1)]
        a = np.argmax(draw, axis=1)
        y = table[rows, a, t]
        earned += y
        n[rows, a] += 1
        s[rows, a] += y
    return (table.sum(axis=2).max(axis=1) - earned) / T


@dataclass
class LowerBoundRow:
    horizon: int
    true_regret: float
    true_se: float
    misspecified_regret: float
    misspecified_se: float


def run_lower_bound_instance(horizons=(100, 1000), reps=2000, num_actions=3, rng=None):
    """Per-period regret of exact Thompson sampling under the true and a misspecified prior."""
    rng = rng if rng is not None else np.random.default_rng(0)
    truth = lower_bound_model()
    out = []
    for T in horizons:
        z = (rng.random((reps, num_actions)) < 0.5).astype(np.int64)
        risky_high = rng.random((reps, num_actions)) < 0.5
        mu = np.where(z == SAFE, 0.5, np.where(risky_high, 0.75, 0.25))
        table = (rng.random((reps, num_actions, T)) < mu[..., None]).astype(np.int64)
        res = []
        for belief in (truth, lower_bound_model(T)):
            r = _latent_ts_regret(belief, z, table, rng)
            res.append((float(r.mean()), float(r.std(ddof=1) / np.sqrt(reps))))
        out.append(LowerBoundRow(T, res[0][0], res[0][1], res[1][0], res[1][1]))
    return out


def check_optimum_gap(latent_sampler, num_actions, horizon, reps, rng):
    """E max_a |mu_inf - mu_T| by Monte Carlo against sqrt(2 log|A| / T).

    ``latent_sampler(rng, num_actions)`` returns long-run success rates.
    Returns (mean, standard error, bound).
    """
    gaps = np.empty(reps)
    for r in range(reps):
        mu = np.asarray(latent_sampler(rng, num_actions), dtype=float)
        mu_t = rng.binomial(horizon, mu) / horizon
        gaps[r] = np.abs(mu - mu_t).max()
    bound = math.sqrt(2 * math.log(num_actions) / horizon) if num_actions > 1 else 0.0
    return float(gaps.mean()), float(gaps.std(ddof=1) / np.sqrt(reps)), bound
