"""Offline training of sequence models by minibatch log-loss minimisation."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import betaln, digamma, expit

from .envgen import ActionDataset, EmpiricalBayesConfig, bootstrap_sequence
from .generate import GenerationConfig, PredictiveTables, sample_arm_means
from .core import History
from .neural import AdamW
from .seqmodel import BetaBernoulliNnModel, FlexibleNnModel, RateModel, stat_features


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 500
    lr: float = 1e-3
    weight_decay: float = 0.01
    permute: bool = True
    bootstrap_length: int | None = None
    patience: int = 50
    validation_fraction: float = 0.2
    seed: int = 0
    # Flexible models only: timesteps sampled per sequence for each gradient
    # step (None uses every timestep). The subsampled loss is unbiased.
    steps_per_sequence: int | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs must be nonnegative; batch_size and patience positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive and weight_decay nonnegative")
        if self.bootstrap_length is not None and self.bootstrap_length < 1:
            raise ValueError("bootstrap_length must be positive")
        if self.steps_per_sequence is not None and self.steps_per_sequence < 1:
            raise ValueError("steps_per_sequence must be positive")


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    selected_epoch: int = 0
    config: dict = field(default_factory=dict)

    def record(self, epoch, train, val):
        self.epochs.append(int(epoch))
        self.train_loss.append(float(train))
        self.val_loss.append(float(val))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for row in zip(self.epochs, self.train_loss, self.val_loss):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def _padded(outcomes):
    lengths = np.array([o.size for o in outcomes], dtype=np.int64)
    y = np.zeros((len(outcomes), int(lengths.max())), dtype=np.int8)
    for i, o in enumerate(outcomes):
        y[i, : o.size] = o
    return y, lengths


def augment(outcomes, config: TrainConfig, rng):
    """Bootstrap short sequences up to the target length, then permute each one."""
    out = []
    for o in outcomes:
        if config.bootstrap_length and o.size < config.bootstrap_length:
            o = bootstrap_sequence(o, config.bootstrap_length, rng)
        if config.permute:
            o = o[rng.permutation(o.size)]
        out.append(o)
    return out


class _BetaHeadObjective:
    """Closed-form sequence loss -log B(a+S, b+T-S) + log B(a, b)."""

    def __init__(self, model: BetaBernoulliNnModel):
        self.model = model
        self.params = model.mlp.params

    def loss_and_grad(self, z, outcomes, rng, steps):
        T = np.array([o.size for o in outcomes], dtype=float)
        S = np.array([o.sum() for o in outcomes], dtype=float)
        ab = self.model.mlp.forward(z)
        ab = np.maximum(ab, 1e-12)
        a, b = ab[:, 0], ab[:, 1]
        nll = -(betaln(a + S, b + T - S) - betaln(a, b))
        count = T.sum()
        dab = digamma(a + b + T) - digamma(a + b)
        ga = -(digamma(a + S) - digamma(a)) + dab
        gb = -(digamma(b + T - S) - digamma(b)) + dab
        grads, _ = self.model.mlp.backward(np.stack([ga, gb], axis=1) / count)
        return float(nll.sum() / count), grads


class _FlexibleObjective:
    """Binary cross-entropy of next-outcome predictions along each sequence."""

    def __init__(self, model: FlexibleNnModel):
        self.model = model
        self.params = model.mlp.params

    def loss_and_grad(self, z, outcomes, rng, steps):
        y, lengths = _padded(outcomes)
        B, L = y.shape
        s_prefix = np.concatenate([np.zeros((B, 1)), np.cumsum(y, axis=1)[:, :-1]], axis=1)
        if steps is None or steps >= L:
            rows, cols = np.nonzero(np.arange(L)[None, :] < lengths[:, None])
        else:
            # sample timesteps uniformly within each sequence's valid range
            cols = np.floor(rng.random((B, steps)) * lengths[:, None]).astype(np.int64).ravel()
            rows = np.repeat(np.arange(B), steps)
        n = cols.astype(float)
        s = s_prefix[rows, cols]
        target = y[rows, cols].astype(float)
        x = self.model.inputs(z[rows], n, s)
        p, pre = self.model.mlp.forward(x, return_pre=True)
        pre = pre[:, 0]
        nll = np.logaddexp(0.0, pre) - target * pre
        # rescale so the estimate targets the mean loss per outcome
        grads, _ = self.model.mlp.backward(((expit(pre) - target) / rows.size)[:, None], wrt="pre")
        return float(nll.mean()), grads


class _RateObjective:
    """Logistic loss of a history-free rate; depends on each sequence via (T, S)."""

    def __init__(self, model: RateModel):
        self.model = model
        self.params = model.mlp.params

    def loss_and_grad(self, z, outcomes, rng, steps):
        T = np.array([o.size for o in outcomes], dtype=float)
        S = np.array([o.sum() for o in outcomes], dtype=float)
        _, pre = self.model.mlp.forward(z, return_pre=True)
        logit = pre[:, 0]
        if self.model.prior_scale:
            logit = logit + self.model.prior_scale * self.model.prior_mlp.predict(z)[:, 0]
        count = T.sum()
        nll = T * np.logaddexp(0.0, logit) - S * logit
        grads, _ = self.model.mlp.backward(((T * expit(logit) - S) / count)[:, None], wrt="pre")
        return float(nll.sum() / count), grads


def objective_for(model):
    if isinstance(model, BetaBernoulliNnModel):
        return _BetaHeadObjective(model)
    if isinstance(model, FlexibleNnModel):
        return _FlexibleObjective(model)
    if isinstance(model, RateModel):
        return _RateObjective(model)
    raise TypeError(f"{type(model).__name__} has no trainable parameters")


def _split(dataset: ActionDataset, config: TrainConfig, rng):
    if not dataset.is_validation.any():
        dataset = dataset.with_split(rng, config.validation_fraction)
    return dataset.train(), dataset.validation()


def train_model(model, dataset: ActionDataset, config: TrainConfig = TrainConfig(), rng=None) -> TrainReport:
    """Fit ``model`` in place and return its loss curves.

    Losses are reported per outcome. Epoch 0 holds the losses of the initial
    parameters. The parameters with the lowest validation loss are restored at
    the end; training stops early after ``patience`` epochs without improvement.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    obj = objective_for(model)
    train_set, val_set = _split(dataset, config, rng)
    if len(train_set) == 0:
        raise ValueError("training split is empty")
    selector = val_set if len(val_set) else train_set
    opt = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    report = TrainReport(config=asdict(config))

    def evaluate(ds):
        loss = model.dataset_loss(ds, per_outcome=True)
        if not np.isfinite(loss):
            raise TrainingDivergedError("evaluation loss is not finite")
        return loss

    best_val = evaluate(selector)
    report.record(0, evaluate(train_set), best_val)
    best_params = [p.copy() for p in obj.params]
    best_epoch, stale = 0, 0
    N = len(train_set)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        batch_losses, weights = [], []
        for start in range(0, N, config.batch_size):
            idx = order[start : start + config.batch_size]
            seqs = augment([train_set.outcomes[i] for i in idx], config, rng)
            loss, grads = obj.loss_and_grad(train_set.features[idx], seqs, rng, config.steps_per_sequence)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            opt.step(obj.params, grads)
            batch_losses.append(loss)
            weights.append(idx.size)
        val = evaluate(selector)
        report.record(epoch, np.average(batch_losses, weights=weights), val)
        if val < best_val:
            best_val, best_epoch, stale = val, epoch, 0
            best_params = [p.copy() for p in obj.params]
        else:
            stale += 1
            if stale >= config.patience:
                break
    for p, b in zip(obj.params, best_params):
        p[...] = b
    report.selected_epoch = best_epoch
    return report


@dataclass
class EmpiricalBayesRow:
    z: float
    learned_mean: float
    learned_mad: float
    true_mean: float
    true_mad: float


def empirical_bayes_report(model, truth: EmpiricalBayesConfig = EmpiricalBayesConfig(), num_actions=100,
                           num_samples=10000, horizon=500, rng=None, features=None):
    """Compare prior means and spreads implied by ``model`` with the true prior.

    Learned statistics come from samples of a row mean generated with no
    observations; true statistics from direct draws of the Beta prior.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    z = rng.random(num_actions) if features is None else np.asarray(features, dtype=float).ravel()
    a, b = truth.beta_params(z[:, None])
    rows = []
    cfg = GenerationConfig(None, num_samples)
    for i, zi in enumerate(z):
        hist = History(np.array([[zi]]))
        tables = PredictiveTables(model, hist.priors, horizon)
        learned = sample_arm_means(model, hist, horizon, cfg, rng, tables=tables)[:, 0]
        true = rng.beta(a[i], b[i], size=num_samples)
        rows.append(EmpiricalBayesRow(
            float(zi),
            float(learned.mean()),
            float(np.abs(learned - learned.mean()).mean()),
            float(true.mean()),
            float(np.abs(true - true.mean()).mean()),
        ))
    return rows


def prior_mean_correlation(rows) -> float:
    learned = np.array([r.learned_mean for r in rows])
    true = np.array([r.true_mean for r in rows])
    return float(np.corrcoef(learned, true)[0, 1])
