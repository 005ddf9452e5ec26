"""The theory verification suite behind ``psar verify``."""
from __future__ import annotations

import numpy as np
from scipy.special import betaln

from ..envgen import MixtureBetaBernoulliConfig, sample_mixture_latents
from ..generate import GenerationConfig, sample_arm_means
from ..core import History
from ..policies import TsPsar
from ..seqmodel import (
    BetaBernoulliModel,
    ConstantModel,
    OracleMixtureModel,
    PerturbedModel,
    UniformBetaBernoulliModel,
)
from .simulator import check_sim_to_real
from .theory import (
    CheckResult,
    check_loss_kl_identity,
    check_optimum_gap,
    check_prob_matching,
    check_prop1_bound,
    run_lower_bound_instance,
)

KL_TOL = 1e-10
ENUM_TOL = 1e-9


def kl_identity_pairs():
    """Three (name, model, truth, horizon, Z atoms, Z weights) cases."""
    oracle = OracleMixtureModel()
    z_two = [[0.05, 0.2], [0.2, 0.05]]
    return [
        ("urn_vs_iid", ConstantModel(0.5), UniformBetaBernoulliModel(), 6, [[0.0]], None),
        ("mixture_vs_beta", BetaBernoulliModel(2.0, 3.0), oracle, 8, z_two, [0.3, 0.7]),
        ("beta_vs_perturbed", PerturbedModel(UniformBetaBernoulliModel(), 0.05), BetaBernoulliModel(2.0, 3.0), 10,
         [[0.0]], None),
    ]


def beta_identity_error(num_triples=100, max_len=30, rng=None):
    """Largest |exp(sequence log-likelihood) - B(a+s, b+T-s)/B(a, b)| over random cases."""
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(num_triples):
        a, b = rng.uniform(0.1, 10.0, size=2)
        y = (rng.random(rng.integers(0, max_len + 1)) < rng.random()).astype(int)
        model = BetaBernoulliModel(a, b)
        s = int(y.sum())
        direct = np.exp(model.sequence_log_likelihood([0.0], y))
        closed = np.exp(betaln(a + s, b + y.size - s) - betaln(a, b))
        worst = max(worst, abs(direct - closed))
    return worst


def polya_urn_deviation(num_draws=100_000, rng=None):
    """Largest |frequency - 1/3| in standard errors for two-step urn generation."""
    rng = rng if rng is not None else np.random.default_rng(0)
    hist = History(np.zeros((1, 1)))
    means = sample_arm_means(UniformBetaBernoulliModel(), hist, 2, GenerationConfig(None, num_draws), rng)[:, 0]
    freq = np.bincount(np.rint(means * 2).astype(int), minlength=3) / num_draws
    se = np.sqrt((1 / 3) * (2 / 3) / num_draws)
    return float(np.abs(freq - 1 / 3).max() / se)


def run_verification(seed=0, lower_bound_reps=1000, sim_reps=400):
    rng = np.random.default_rng(seed)
    out = []
    for name, model, truth, T, atoms, w in kl_identity_pairs():
        _, _, diff = check_loss_kl_identity(model, truth, T, atoms, w)
        out.append(CheckResult(f"kl_identity_{name}", diff, KL_TOL))

    urn = UniformBetaBernoulliModel()
    exact = check_prop1_bound(urn, urn)
    out.append(CheckResult("prop1_exact_model_lhs", float(np.abs(exact.lhs).max()), ENUM_TOL))
    pert = check_prop1_bound(PerturbedModel(urn, 0.05), urn)
    for t, v in enumerate(pert.lhs, start=1):
        out.append(CheckResult(f"prop1_perturbed_t{t}", float(v), pert.rhs + ENUM_TOL))
    out.append(CheckResult("prob_matching_tv", check_prob_matching(urn, urn), ENUM_TOL))
    out.append(CheckResult("beta_marginal_identity", beta_identity_error(rng=rng), 1e-12))
    out.append(CheckResult("polya_urn_max_se", polya_urn_deviation(rng=rng), 3.0))

    rows = run_lower_bound_instance((100, 1000), lower_bound_reps, rng=rng)
    for r in rows:
        out.append(CheckResult(f"lower_bound_misspecified_T{r.horizon}", 0.05, r.misspecified_regret))
    out.append(CheckResult("lower_bound_true_decreasing", rows[1].true_regret, rows[0].true_regret))

    cfg = MixtureBetaBernoulliConfig()
    mean, se, bound = check_optimum_gap(lambda g, a: sample_mixture_latents(cfg, a, g)[1], 10, 500, 2000, rng)
    out.append(CheckResult("optimum_gap_A10_T500", mean - 3 * se, bound))

    policy = TsPsar(ConstantModel(0.5))
    res = check_sim_to_real(policy, ConstantModel(0.5), urn, lambda g, a: np.zeros((a, 1)), 2, 5, sim_reps,
                            base_seed=seed, z_atoms=[[0.0]])
    out.append(CheckResult("sim_to_real_iid_vs_urn_T5", res.delta_real,
                           res.delta_sim + res.penalty + 3 * np.hypot(res.se_real, res.se_sim)))
    return out
