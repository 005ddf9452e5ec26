"""Sequence models p(Y_next = 1 | Z, past outcomes).

Every model here is exchangeable: the prediction depends on past outcomes only
through the count ``n`` and the success count ``s``. That lets generation use
dense lookup tables ``p[n, s]`` per distinct feature vector.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, expit, gammaln, logsumexp, xlog1py, xlogy

from .envgen import EmpiricalBayesConfig, MixtureBetaBernoulliConfig
from .neural import Mlp, softplus

PROB_CLAMP = 1e-6
MAX_EXACT_HORIZON = 20


@dataclass(frozen=True)
class SufficientStats:
    n: int
    s: int

    def __post_init__(self):
        if not 0 <= self.s <= self.n:
            raise ValueError("need 0 <= s <= n")

    @property
    def mean(self) -> float:
        return self.s / self.n if self.n else 0.0

    @property
    def inv(self) -> float:
        return 1.0 / (1.0 + self.n)

    @classmethod
    def of(cls, outcomes) -> "SufficientStats":
        y = np.asarray(outcomes)
        return cls(int(y.size), int(y.sum()))


def _broadcast(z, n, s):
    """Flatten (z, n, s) to matching rows; z may be a single feature vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None]
    n = np.asarray(n, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    shape = np.broadcast_shapes(n.shape, s.shape)
    if z.shape[0] != 1:
        shape = np.broadcast_shapes(shape, (z.shape[0],))
    n = np.broadcast_to(n, shape).ravel()
    s = np.broadcast_to(s, shape).ravel()
    if z.shape[0] == 1:
        z = np.broadcast_to(z, (n.size, z.shape[1]))
    if np.any(s < 0) or np.any(s > n):
        raise ValueError("need 0 <= s <= n")
    return z, n, s, shape


def _shaped(values, shape):
    out = np.asarray(values, dtype=np.float64).reshape(shape)
    return out if shape else float(out)


def stat_features(n, s):
    """(mean, inv) with the 0/0 -> 0 convention for the empty history."""
    n = np.asarray(n, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    mean = np.divide(s, n, out=np.zeros_like(s), where=n > 0)
    return mean, 1.0 / (1.0 + n)


def triangle(n_max):
    """All (n, s) with 0 <= s <= n <= n_max."""
    n_idx, s_idx = np.tril_indices(n_max + 1)
    return n_idx, s_idx


class SequenceModel:
    """Base class. Subclasses implement ``_predict(z, n, s)`` on flat arrays."""

    name = "model"
    feature_dim = None

    def predict(self, z, n, s):
        """Vectorised P(Y=1 | z, n, s); z is (d,) or (B, d), n and s broadcast."""
        zb, nb, sb, shape = _broadcast(z, n, s)
        return self._predict(zb, nb, sb).reshape(shape)

    def predict_next(self, z, stats: SufficientStats) -> float:
        return float(self.predict(z, stats.n, stats.s))

    def _predict(self, z, n, s):
        raise NotImplementedError

    def table(self, z, n_max):
        """Dense (n_max + 1, n_max + 1) array of predictions, zero above the diagonal."""
        n_idx, s_idx = triangle(n_max)
        out = np.zeros((n_max + 1, n_max + 1))
        z = np.asarray(z, dtype=np.float64).reshape(1, -1)
        out[n_idx, s_idx] = self._predict(np.broadcast_to(z, (n_idx.size, z.shape[1])), n_idx.astype(float), s_idx.astype(float))
        return out

    def sequence_log_probs(self, z, outcomes):
        """log P(y_1:T | z) for each row of a (M, T) outcome array, step by step."""
        y = np.atleast_2d(np.asarray(outcomes, dtype=np.int64))
        M, T = y.shape
        if T == 0:
            return np.zeros(M)
        s = np.concatenate([np.zeros((M, 1), dtype=np.int64), np.cumsum(y, axis=1)[:, :-1]], axis=1)
        n = np.broadcast_to(np.arange(T), (M, T))
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[None]
        z = np.broadcast_to(z, (M, z.shape[1]))
        p = self._predict_grid(z, n.astype(float), s.astype(float))
        return (xlogy(y, p) + xlog1py(1 - y, -p)).sum(axis=1)

    def _predict_grid(self, z, n, s):
        """Predictions for (M, T) grids of stats, one feature row per grid row."""
        M, T = n.shape
        return self._predict(np.repeat(z, T, axis=0), n.ravel(), s.ravel()).reshape(M, T)

    def sequence_log_likelihood(self, z, outcomes) -> float:
        y = np.asarray(outcomes)
        if y.size and np.any((y != 0) & (y != 1)):
            raise ValueError("outcomes must be binary")
        return float(self.sequence_log_probs(z, y.reshape(1, -1))[0])

    def dataset_loss(self, dataset, per_outcome=False):
        """Negative total log-likelihood over an ActionDataset."""
        if len(dataset) == 0:
            return 0.0
        total = 0.0
        count = 0
        lengths = np.array([o.size for o in dataset.outcomes])
        for T in np.unique(lengths):
            idx = np.flatnonzero(lengths == T)
            ys = np.stack([dataset.outcomes[i] for i in idx])
            total -= self.sequence_log_probs(dataset.features[idx], ys).sum()
            count += ys.size
        return total / count if per_outcome else float(total)

    def sample_sequences(self, z, horizon, rng):
        """Draw outcome sequences autoregressively; z is (M, d), returns (M, horizon)."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        M = z.shape[0]
        y = np.zeros((M, horizon), dtype=np.int8)
        s = np.zeros(M)
        for t in range(horizon):
            p = self.predict(z, np.full(M, float(t)), s)
            y[:, t] = rng.random(M) < p
            s += y[:, t]
        return y


class ClosedFormModel(SequenceModel):
    """Bayesian model with a closed-form marginal likelihood of a sequence."""

    def log_marginal(self, z, n, s):
        """log P(specific sequence with n trials and s successes | z)."""
        raise NotImplementedError


class BetaBernoulliModel(ClosedFormModel):
    """Fixed Beta(alpha, beta) prior on a Bernoulli rate."""

    def __init__(self, alpha=1.0, beta=1.0):
        if not (alpha > 0 and beta > 0):
            raise ValueError("Beta parameters must be positive")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.name = f"beta_bernoulli({self.alpha:g},{self.beta:g})"

    def _predict(self, z, n, s):
        return (self.alpha + s) / (self.alpha + self.beta + n)

    def log_marginal(self, z, n, s):
        n = np.asarray(n, dtype=float)
        s = np.asarray(s, dtype=float)
        a, b = self.alpha, self.beta
        return _shaped(betaln(a + s, b + n - s) - betaln(a, b), np.broadcast_shapes(n.shape, s.shape))

    def table(self, z, n_max):
        n = np.arange(n_max + 1)[:, None].astype(float)
        s = np.arange(n_max + 1)[None, :].astype(float)
        return np.where(s <= n, (self.alpha + s) / (self.alpha + self.beta + n), 0.0)


class UniformBetaBernoulliModel(BetaBernoulliModel):
    def __init__(self):
        super().__init__(1.0, 1.0)
        self.name = "uniform_bb"


def _mixture_table(log_w, alphas, betas, n_max):
    """p[n, s] for a Beta mixture with log prior weights and component params (K,).

    Log-Beta terms are assembled from 1-D log-gamma arrays, so the cost is
    dominated by a few (n_max + 1)**2 additions per component.
    """
    idx = np.arange(n_max + 1, dtype=float)
    n = idx[:, None]
    s = idx[None, :]
    lw = []
    for lwk, a, b in zip(log_w, alphas, betas):
        ga = gammaln(a + idx)
        gb = gammaln(b + idx)
        gab = gammaln(a + b + idx)
        f = np.clip(n - s, 0, n_max).astype(np.int64)
        lw.append(lwk + ga[None, :] + gb[f] - gab[:, None] - betaln(a, b))
    lw = np.stack(lw)
    w = np.exp(lw - lw.max(axis=0))
    w /= w.sum(axis=0)
    pred = (alphas[:, None, None] + s) / (alphas[:, None, None] + betas[:, None, None] + n)
    return np.where(s <= n, (w * pred).sum(axis=0), 0.0)


class BetaMixtureModel(ClosedFormModel):
    """Exact posterior predictive of a finite mixture of Beta-Bernoulli components.

    ``params(z)`` returns (weights (K,), alphas (B, K), betas (B, K)).
    """

    def __init__(self, params, feature_dim=None, name="beta_mixture"):
        self._param_fn = params
        self.feature_dim = feature_dim
        self.name = name

    def component_params(self, z):
        w, a, b = self._param_fn(np.atleast_2d(np.asarray(z, dtype=float)))
        w = np.asarray(w, dtype=float)
        if not np.isclose(w.sum(), 1.0):
            raise ValueError("mixture weights must sum to 1")
        return w, np.atleast_2d(a), np.atleast_2d(b)

    def _log_weights(self, w, a, b, n, s):
        with np.errstate(divide="ignore"):
            return np.log(w) + betaln(a + s[:, None], b + (n - s)[:, None]) - betaln(a, b)

    def _predict(self, z, n, s):
        w, a, b = self.component_params(z)
        lw = self._log_weights(w, a, b, n, s)
        post = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        return (post * (a + s[:, None]) / (a + b + n[:, None])).sum(axis=1)

    def posterior_weights(self, z, n, s):
        zb, nb, sb, _ = _broadcast(z, n, s)
        w, a, b = self.component_params(zb)
        lw = self._log_weights(w, a, b, nb, sb)
        return np.exp(lw - logsumexp(lw, axis=1, keepdims=True))

    def log_marginal(self, z, n, s):
        zb, nb, sb, shape = _broadcast(z, n, s)
        w, a, b = self.component_params(zb)
        return _shaped(logsumexp(self._log_weights(w, a, b, nb, sb), axis=1), shape)

    def table(self, z, n_max):
        w, a, b = self.component_params(z)
        with np.errstate(divide="ignore"):
            return _mixture_table(np.log(w), a[0], b[0], n_max)

    def sample_latent_rates(self, z, rng):
        w, a, b = self.component_params(z)
        comp = rng.choice(w.size, size=a.shape[0], p=w)
        rows = np.arange(a.shape[0])
        return rng.beta(a[rows, comp], b[rows, comp])


class OracleMixtureModel(BetaMixtureModel):
    """Exact Bayesian predictive for the synthetic mixture environment."""

    def __init__(self, config: MixtureBetaBernoulliConfig | None = None):
        self.config = config or MixtureBetaBernoulliConfig()
        super().__init__(self.config.component_params, feature_dim=2, name="oracle")


class EmpiricalBayesOracle(BetaMixtureModel):
    """Exact predictive for the empirical-Bayes environment (one component)."""

    def __init__(self, config: EmpiricalBayesConfig | None = None):
        self.config = config or EmpiricalBayesConfig()

        def params(z):
            a, b = self.config.beta_params(z)
            return np.ones(1), np.reshape(a, (-1, 1)), np.reshape(b, (-1, 1))

        super().__init__(params, feature_dim=1, name="eb_oracle")


class DiscreteLatentModel(ClosedFormModel):
    """Bernoulli rate drawn from finitely many atoms; prior weights depend on Z.

    ``priors[c]`` is the prior over ``atoms`` for integer feature value ``c``.
    """

    def __init__(self, atoms, priors, name="discrete_latent"):
        self.atoms = np.asarray(atoms, dtype=float)
        self.priors = np.asarray(priors, dtype=float)
        if self.priors.ndim != 2 or self.priors.shape[1] != self.atoms.size:
            raise ValueError("priors must be (num_categories, num_atoms)")
        if not np.allclose(self.priors.sum(axis=1), 1.0):
            raise ValueError("each prior must sum to 1")
        self.feature_dim = 1
        self.name = name

    def _log_post(self, z, n, s):
        c = np.asarray(z[:, 0], dtype=np.int64)
        u = self.atoms
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors[c])
        return log_prior + xlogy(s[:, None], u) + xlog1py((n - s)[:, None], -u)

    def _predict(self, z, n, s):
        lw = self._log_post(z, n, s)
        w = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        return w @ self.atoms

    def log_marginal(self, z, n, s):
        zb, nb, sb, shape = _broadcast(z, n, s)
        return _shaped(logsumexp(self._log_post(zb, nb, sb), axis=1), shape)

    def posterior_weights(self, z, n, s):
        zb, nb, sb, _ = _broadcast(z, n, s)
        lw = self._log_post(zb, nb, sb)
        return np.exp(lw - logsumexp(lw, axis=1, keepdims=True))


class ConstantModel(ClosedFormModel):
    """i.i.d. Bernoulli(p) regardless of features and history."""

    def __init__(self, p=0.5):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        self.p = float(p)
        self.name = f"constant({self.p:g})"

    def _predict(self, z, n, s):
        return np.full(n.shape, self.p)

    def log_marginal(self, z, n, s):
        n = np.asarray(n, dtype=float)
        s = np.asarray(s, dtype=float)
        return _shaped(xlogy(s, self.p) + xlog1py(n - s, -self.p), np.broadcast_shapes(n.shape, s.shape))


class FeatureProbabilityModel(SequenceModel):
    """Predicts the first feature as the success probability, ignoring history."""

    name = "feature_probability"

    def _predict(self, z, n, s):
        return np.clip(z[:, 0], 0.0, 1.0)


class PerturbedModel(SequenceModel):
    """A base model whose predictions are shifted by ``delta`` and clamped."""

    def __init__(self, base: SequenceModel, delta=0.05, clamp=PROB_CLAMP):
        self.base = base
        self.delta = float(delta)
        self.clamp = clamp
        self.feature_dim = base.feature_dim
        self.name = f"perturbed({base.name},{self.delta:+g})"

    def _predict(self, z, n, s):
        return np.clip(self.base._predict(z, n, s) + self.delta, self.clamp, 1 - self.clamp)

    def table(self, z, n_max):
        tab = np.clip(self.base.table(z, n_max) + self.delta, self.clamp, 1 - self.clamp)
        return np.tril(tab)


def _mlp_widths(in_dim, hidden, depth, out_dim):
    return [in_dim] + [hidden] * (depth - 1) + [out_dim]


class BetaBernoulliNnModel(ClosedFormModel):
    """Learned Beta prior: one network maps Z to (alpha, beta) through softplus."""

    def __init__(self, feature_dim, hidden=50, depth=3, rng=None, mlp=None):
        self.feature_dim = int(feature_dim)
        self.mlp = mlp or Mlp(_mlp_widths(self.feature_dim, hidden, depth, 2), "softplus", rng=rng)
        if self.mlp.widths[0] != self.feature_dim or self.mlp.widths[-1] != 2 or self.mlp.output != "softplus":
            raise ValueError("network must map features to two softplus outputs")
        self.name = "bb_nn"

    def beta_params(self, z):
        out = self.mlp.predict(np.atleast_2d(np.asarray(z, dtype=float)))
        out = np.maximum(out, 1e-12)
        return out[:, 0], out[:, 1]

    def _predict(self, z, n, s):
        a, b = self.beta_params(z)
        return (a + s) / (a + b + n)

    def _predict_grid(self, z, n, s):
        a, b = self.beta_params(z)
        return (a[:, None] + s) / (a[:, None] + b[:, None] + n)

    def log_marginal(self, z, n, s):
        zb, nb, sb, shape = _broadcast(z, n, s)
        a, b = self.beta_params(zb)
        return _shaped(betaln(a + sb, b + nb - sb) - betaln(a, b), shape)

    def table(self, z, n_max):
        a, b = self.beta_params(z)
        return BetaBernoulliModel(a[0], b[0]).table(None, n_max)


class FlexibleNnModel(SequenceModel):
    """Network over [Z ; (mean, inv) repeated r times] with a sigmoid output."""

    def __init__(self, feature_dim, repeats=10, hidden=50, depth=3, rng=None, mlp=None, table_dtype=np.float32):
        self.feature_dim = int(feature_dim)
        self.repeats = int(repeats)
        in_dim = self.feature_dim + 2 * self.repeats
        self.mlp = mlp or Mlp(_mlp_widths(in_dim, hidden, depth, 1), "sigmoid", rng=rng)
        if self.mlp.widths[0] != in_dim or self.mlp.widths[-1] != 1:
            raise ValueError("network input must be feature_dim + 2 * repeats with one output")
        self.table_dtype = table_dtype
        self.name = "flexible_nn"

    def inputs(self, z, n, s):
        mean, inv = stat_features(n, s)
        stats = np.tile(np.stack([mean, inv], axis=1), (1, self.repeats))
        return np.concatenate([np.asarray(z, dtype=float), stats], axis=1)

    def _predict(self, z, n, s):
        p = self.mlp.predict(self.inputs(z, n, s))[:, 0]
        return np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)

    def table(self, z, n_max):
        n_idx, s_idx = triangle(n_max)
        z = np.broadcast_to(np.asarray(z, dtype=float).reshape(1, -1), (n_idx.size, self.feature_dim))
        p = self.mlp.predict(self.inputs(z, n_idx, s_idx), dtype=self.table_dtype)[:, 0]
        out = np.zeros((n_max + 1, n_max + 1))
        out[n_idx, s_idx] = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
        return out


class RateModel(SequenceModel):
    """Predicts a success rate from Z alone (history is ignored).

    An optional frozen prior network is added on the logit scale, scaled by
    ``prior_scale``; it is never trained.
    """

    def __init__(self, feature_dim, hidden=50, depth=3, rng=None, mlp=None, prior_scale=0.0, prior_mlp=None):
        self.feature_dim = int(feature_dim)
        self.mlp = mlp or Mlp(_mlp_widths(self.feature_dim, hidden, depth, 1), "identity", rng=rng)
        self.prior_scale = float(prior_scale)
        self.prior_mlp = prior_mlp
        if self.prior_scale and self.prior_mlp is None:
            self.prior_mlp = Mlp(_mlp_widths(self.feature_dim, hidden, depth, 1), "identity", rng=rng)
        self.name = "rate_nn"

    def logits(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = self.mlp.predict(z)[:, 0]
        if self.prior_scale:
            out = out + self.prior_scale * self.prior_mlp.predict(z)[:, 0]
        return out

    def rate(self, z):
        return np.clip(expit(self.logits(z)), PROB_CLAMP, 1 - PROB_CLAMP)

    def _predict(self, z, n, s):
        return self.rate(z)

    def _predict_grid(self, z, n, s):
        return np.broadcast_to(self.rate(z)[:, None], n.shape)

    def table(self, z, n_max):
        return np.tril(np.full((n_max + 1, n_max + 1), float(self.rate(z)[0])))

    def copy(self):
        return RateModel(self.feature_dim, mlp=self.mlp.copy(), prior_scale=self.prior_scale,
                         prior_mlp=self.prior_mlp)

    def sgd_step(self, z, y, lr):
        """One plain gradient step of logistic loss on (z, y) pairs."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        _, pre = self.mlp.forward(z, return_pre=True)
        total = pre[:, 0]
        if self.prior_scale:
            total = total + self.prior_scale * self.prior_mlp.predict(z)[:, 0]
        grads, _ = self.mlp.backward((expit(total) - y)[:, None], wrt="pre")
        for p, g in zip(self.mlp.params, grads):
            p -= lr * g


@dataclass
class GaussianGaussianModel:
    """Conjugate Gaussian model per arm with prior mean from a rate network."""

    prior_mean: RateModel
    prior_var: float = 1.0
    obs_var: float = 0.25

    def __post_init__(self):
        if not (self.prior_var > 0 and self.obs_var > 0):
            raise ValueError("variances must be positive")

    name = "neural_linear"

    def posterior(self, z, n, s):
        """Posterior mean and variance of each arm's reward."""
        g = self.prior_mean.rate(z)
        n = np.asarray(n, dtype=float)
        s = np.asarray(s, dtype=float)
        var = 1.0 / (1.0 / self.prior_var + n / self.obs_var)
        mean = var * (g / self.prior_var + s / self.obs_var)
        return mean, var


def neural_linear_posterior(model: GaussianGaussianModel, z, stats: SufficientStats):
    mean, var = model.posterior(np.atleast_2d(z), stats.n, stats.s)
    return float(mean[0]), float(var)


def predict_next(model: SequenceModel, z, stats: SufficientStats) -> float:
    return model.predict_next(z, stats)


def sequence_log_likelihood(model: SequenceModel, z, outcomes) -> float:
    return model.sequence_log_likelihood(z, outcomes)


def dataset_loss(model: SequenceModel, dataset, per_outcome=False) -> float:
    return model.dataset_loss(dataset, per_outcome=per_outcome)


def all_sequences(horizon):
    """Every binary sequence of the given length, as a (2**horizon, horizon) array."""
    if horizon == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product((0, 1), repeat=horizon)), dtype=np.int64)


def _truth_log_probs(truth, z, seqs):
    if isinstance(truth, ClosedFormModel):
        n = np.full(seqs.shape[0], seqs.shape[1])
        return np.asarray(truth.log_marginal(np.atleast_2d(z), n, seqs.sum(axis=1)), dtype=float)
    return truth.sequence_log_probs(z, seqs)


def excess_loss(model, truth, z_atoms, z_weights=None, horizon=3, mode="exact", rng=None, num_samples=10000,
                z_sampler=None):
    """Expected excess log loss of ``model`` over ``truth`` for one action's sequence.

    Exact mode enumerates all 2**horizon sequences at each Z atom and returns
    E_Z KL(truth || model). Monte Carlo mode samples (Z, Y_1:T) from the truth
    and returns (estimate, standard error).
    """
    if mode == "exact":
        if horizon > MAX_EXACT_HORIZON:
            raise ValueError(f"exact mode supports horizon <= {MAX_EXACT_HORIZON}")
        z_atoms = np.atleast_2d(np.asarray(z_atoms, dtype=float))
        w = np.full(z_atoms.shape[0], 1.0 / z_atoms.shape[0]) if z_weights is None else np.asarray(z_weights, float)
        seqs = all_sequences(horizon)
        total = 0.0
        for z, wz in zip(z_atoms, w):
            lp_true = _truth_log_probs(truth, z, seqs)
            lp_model = model.sequence_log_probs(z, seqs)
            pt = np.exp(lp_true)
            total += wz * float(np.sum(np.where(pt > 0, pt * (lp_true - lp_model), 0.0)))
        return total
    if mode != "mc":
        raise ValueError("mode must be 'exact' or 'mc'")
    if rng is None:
        raise ValueError("Monte Carlo mode needs an rng")
    if z_sampler is not None:
        z = z_sampler(rng, num_samples)
    else:
        z_atoms = np.atleast_2d(np.asarray(z_atoms, dtype=float))
        w = None if z_weights is None else np.asarray(z_weights, float)
        z = z_atoms[rng.choice(z_atoms.shape[0], size=num_samples, p=w)]
    y = truth.sample_sequences(z, horizon, rng)
    diff = _truth_log_probs_rows(truth, z, y) - model.sequence_log_probs(z, y)
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(diff.size))


def _truth_log_probs_rows(truth, z, y):
    if isinstance(truth, ClosedFormModel):
        return np.asarray(truth.log_marginal(z, np.full(y.shape[0], y.shape[1]), y.sum(axis=1)), dtype=float)
    return truth.sequence_log_probs(z, y)


def save_model(model, path):
    """Serialize a model to a versioned npz archive."""
    arrays = {"version": np.array(1)}
    if isinstance(model, BetaBernoulliNnModel):
        arrays.update(kind=np.array("bb_nn"), feature_dim=np.array(model.feature_dim), **model.mlp.to_arrays("m_"))
    elif isinstance(model, FlexibleNnModel):
        arrays.update(kind=np.array("flexible_nn"), feature_dim=np.array(model.feature_dim),
                      repeats=np.array(model.repeats), **model.mlp.to_arrays("m_"))
    elif isinstance(model, RateModel):
        arrays.update(kind=np.array("rate_nn"), feature_dim=np.array(model.feature_dim),
                      prior_scale=np.array(model.prior_scale), **model.mlp.to_arrays("m_"))
        if model.prior_mlp is not None:
            arrays.update(model.prior_mlp.to_arrays("q_"))
    elif isinstance(model, BetaBernoulliModel):
        arrays.update(kind=np.array("beta_bernoulli"), alpha=np.array(model.alpha), beta=np.array(model.beta))
    elif isinstance(model, OracleMixtureModel):
        c = model.config
        arrays.update(kind=np.array("oracle"), cfg=np.array([c.feature_low, c.feature_high, c.concentration,
                                                             c.mixture_weight]))
    elif isinstance(model, EmpiricalBayesOracle):
        arrays.update(kind=np.array("eb_oracle"), prior_scale=np.array(model.config.prior_scale))
    elif isinstance(model, ConstantModel):
        arrays.update(kind=np.array("constant"), p=np.array(model.p))
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as d:
        kind = str(d["kind"])
        if kind == "bb_nn":
            return BetaBernoulliNnModel(int(d["feature_dim"]), mlp=Mlp.from_arrays(d, "m_"))
        if kind == "flexible_nn":
            return FlexibleNnModel(int(d["feature_dim"]), int(d["repeats"]), mlp=Mlp.from_arrays(d, "m_"))
        if kind == "rate_nn":
            prior = Mlp.from_arrays(d, "q_") if "q_widths" in d else None
            return RateModel(int(d["feature_dim"]), mlp=Mlp.from_arrays(d, "m_"),
                             prior_scale=float(d["prior_scale"]), prior_mlp=prior)
        if kind == "beta_bernoulli":
            return BetaBernoulliModel(float(d["alpha"]), float(d["beta"]))
        if kind == "oracle":
            return OracleMixtureModel(MixtureBetaBernoulliConfig(*[float(v) for v in d["cfg"]]))
        if kind == "eb_oracle":
            return EmpiricalBayesOracle(EmpiricalBayesConfig(float(d["prior_scale"])))
        if kind == "constant":
            return ConstantModel(float(d["p"]))
    raise ValueError(f"unknown model kind {kind!r}")
