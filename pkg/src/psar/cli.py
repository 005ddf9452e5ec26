"""Command-line entry point: ``psar <mode> [--config FILE] [--key value ...]``.

Every mode accepts a ``key = value`` config file; flags override file values,
which override defaults. Outputs go to ``$PSAR_OUTPUT_ROOT/<output>`` along
with ``config.resolved`` and ``manifest.json`` (resolved config, seed and
SHA-256 of each output).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    Field,
    boolean,
    dump_config,
    float_list,
    int_list,
    optional_int,
    read_config,
    resolve,
    str_list,
    truncation_value,
)

OUTPUT_ROOT_ENV = "PSAR_OUTPUT_ROOT"

COMMON = {
    "seed": Field(int, None, "base random seed (required)"),
    "output": Field(str, None, "output directory under the output root (default: the mode name)"),
    "jobs": Field(int, os.cpu_count() or 1, "parallel worker processes"),
}

SCHEMAS = {
    "gen-data": {
        "env": Field(str, "mixture", "mixture | empirical_bayes | category"),
        "num_actions": Field(int, 2500, "number of actions"),
        "horizon": Field(int, 500, "outcomes per action"),
        "num_categories": Field(int, 10, "categories for the category environment"),
    },
    "train": {
        "dataset": Field(str, None, "dataset CSV (action_id,features,outcomes)"),
        "model": Field(str, "flexible", "flexible | bb_nn | rate"),
        "hidden": Field(int, 50, "hidden width"),
        "depth": Field(int, 3, "number of weight layers"),
        "repeats": Field(int, 10, "copies of the summary statistics (flexible)"),
        "epochs": Field(int, 1000, ""),
        "batch_size": Field(int, 500, ""),
        "lr": Field(float, 1e-3, ""),
        "weight_decay": Field(float, 0.01, ""),
        "permute": Field(boolean, True, ""),
        "bootstrap_length": Field(optional_int, None, "bootstrap shorter sequences to this length"),
        "patience": Field(int, 50, "early-stopping patience in epochs"),
        "validation_fraction": Field(float, 0.2, ""),
        "steps_per_sequence": Field(optional_int, None, "timesteps sampled per sequence (flexible)"),
        "min_impressions": Field(int, 100, "drop actions with fewer outcomes"),
        "prior_scale": Field(float, 0.0, "frozen prior network scale (rate model)"),
    },
    "run-bandit": {
        "env": Field(str, "mixture", "mixture | empirical_bayes | dataset"),
        "dataset": Field(str, None, "dataset CSV for env=dataset"),
        "policies": Field(str_list, ["ts_oracle", "ts_uniform_bb"], "comma-separated policy names"),
        "model": Field(str, "oracle", "checkpoint path or oracle | eb_oracle | uniform_bb"),
        "prior_model": Field(str, None, "rate-model checkpoint for ts_neural_linear"),
        "ensemble": Field(str_list, None, "rate-model checkpoints for ts_ensemble"),
        "num_actions": Field(int, 10, ""),
        "horizon": Field(int, 500, ""),
        "reps": Field(int, 200, ""),
        "truncation": Field(truncation_value, "auto", "auto | full | m"),
        "num_generations": Field(int, 100, "BayesUCB samples per arm"),
        "broken_k": Field(int, 500, "draws averaged by broken_mean"),
        "online_lr": Field(float, 0.01, "ensemble online step size"),
    },
    "coverage": {
        "env": Field(str, "mixture", "mixture | empirical_bayes"),
        "models": Field(str_list, ["oracle"], "checkpoint paths or builtin model names"),
        "num_held_out": Field(int, 1000, "held-out actions"),
        "horizon": Field(int, 500, ""),
        "k": Field(int, 250, "posterior samples per action"),
        "t_obs": Field(int_list, [0, 5, 10, 25], "conditioning timesteps"),
        "levels": Field(float_list, [0.8], "nominal credible levels"),
    },
    "verify": {
        "lower_bound_reps": Field(int, 1000, "replications for the lower-bound instance"),
        "sim_reps": Field(int, 400, "replications for the simulator check"),
    },
}


def _builtin_model(name):
    from .seqmodel import EmpiricalBayesOracle, OracleMixtureModel, UniformBetaBernoulliModel, load_model

    builtins = {"oracle": OracleMixtureModel, "eb_oracle": EmpiricalBayesOracle, "uniform_bb": UniformBetaBernoulliModel}
    if name in builtins:
        return builtins[name]()
    if not Path(name).is_file():
        raise ConfigError(f"model {name!r} is neither a builtin name nor an existing checkpoint")
    return load_model(name)


def _sampler(cfg):
    from .envgen import (
        DatasetTaskSampler,
        EmpiricalBayesTaskSampler,
        MixtureTaskSampler,
        load_action_dataset,
    )

    env = cfg["env"]
    if env == "mixture":
        return MixtureTaskSampler(num_actions=cfg["num_actions"], horizon=cfg["horizon"])
    if env == "empirical_bayes":
        return EmpiricalBayesTaskSampler(num_actions=cfg["num_actions"], horizon=cfg["horizon"])
    if env == "dataset":
        if not cfg.get("dataset"):
            raise ConfigError("missing required field: dataset")
        return DatasetTaskSampler(load_action_dataset(cfg["dataset"]), cfg["num_actions"], cfg["horizon"])
    raise ConfigError(f"unknown env {env!r}")


def cmd_gen_data(cfg, out):
    from .envgen import build_offline_dataset, category_dataset

    rng = np.random.default_rng(cfg["seed"])
    if cfg["env"] == "category":
        ds = category_dataset(cfg["num_actions"], cfg["num_categories"], cfg["horizon"], rng)
    else:
        sampler = _sampler({**cfg, "num_actions": min(cfg["num_actions"], 1000)})
        ds = build_offline_dataset(sampler, cfg["num_actions"], cfg["horizon"], rng)
    path = out / "dataset.csv"
    ds.save(path)
    return [path]


def cmd_train(cfg, out):
    from .envgen import load_action_dataset
    from .seqmodel import BetaBernoulliNnModel, FlexibleNnModel, RateModel, save_model
    from .train import TrainConfig, train_model

    if not cfg["dataset"]:
        raise ConfigError("missing required field: dataset")
    ds = load_action_dataset(cfg["dataset"], cfg["min_impressions"])
    if len(ds) == 0:
        raise ConfigError("dataset has no actions after the min_impressions filter")
    rng = np.random.default_rng(cfg["seed"])
    d = ds.feature_dim
    kind = cfg["model"]
    if kind == "flexible":
        model = FlexibleNnModel(d, cfg["repeats"], cfg["hidden"], cfg["depth"], rng=rng)
    elif kind == "bb_nn":
        model = BetaBernoulliNnModel(d, cfg["hidden"], cfg["depth"], rng=rng)
    elif kind == "rate":
        model = RateModel(d, cfg["hidden"], cfg["depth"], rng=rng, prior_scale=cfg["prior_scale"])
    else:
        raise ConfigError(f"unknown model {kind!r}")
    tc = TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], weight_decay=cfg["weight_decay"],
        permute=cfg["permute"], bootstrap_length=cfg["bootstrap_length"], patience=cfg["patience"],
        validation_fraction=cfg["validation_fraction"], seed=cfg["seed"],
        steps_per_sequence=cfg["steps_per_sequence"],
    )
    report = train_model(model, ds, tc, rng)
    ckpt = out / "model.npz"
    save_model(model, ckpt)
    curve = out / "train_report.csv"
    report.to_csv(curve)
    print(f"selected epoch {report.selected_epoch}, validation loss {report.val_loss[report.selected_epoch]:.6f}")
    return [ckpt, curve]


def _policies(cfg):
    from .policies import make_policy
    from .seqmodel import GaussianGaussianModel, load_model

    out = {}
    for name in cfg["policies"]:
        opts = {"truncation": cfg["truncation"], "num_generations": cfg["num_generations"], "k": cfg["broken_k"],
                "online_lr": cfg["online_lr"]}
        if name == "ts_neural_linear":
            if not cfg["prior_model"]:
                raise ConfigError("missing required field: prior_model (for ts_neural_linear)")
            model = GaussianGaussianModel(load_model(cfg["prior_model"]))
        elif name == "ts_ensemble":
            if not cfg["ensemble"]:
                raise ConfigError("missing required field: ensemble (for ts_ensemble)")
            model = [load_model(p) for p in cfg["ensemble"]]
        elif name in ("ts_oracle", "ts_uniform_bb", "ucb"):
            model = None
        else:
            model = _builtin_model(cfg["model"])
        out[name] = make_policy(name, model, **opts)
    return out


def cmd_run_bandit(cfg, out):
    from .eval.experiments import run_regret_experiment, write_regret_csv

    curves = run_regret_experiment(_policies(cfg), _sampler(cfg), cfg["horizon"], cfg["reps"], cfg["seed"],
                                   jobs=cfg["jobs"])
    path = out / "regret.csv"
    write_regret_csv(curves, path)
    for name, c in curves.items():
        m, se = c.final()
        print(f"{name}: cumulative regret {m:.3f} +/- {se:.3f}")
    return [path]


def cmd_coverage(cfg, out):
    from .eval.experiments import run_coverage_experiment, write_coverage_csv

    sampler = _sampler({**cfg, "num_actions": cfg["num_held_out"]})
    task = sampler(np.random.default_rng([cfg["seed"], 0]))[0]
    models = {Path(m).stem if Path(m).suffix else m: _builtin_model(m) for m in cfg["models"]}
    rows = run_coverage_experiment(models, task.priors, task.table.entries, cfg["t_obs"], cfg["levels"], cfg["k"],
                                   rng=np.random.default_rng([cfg["seed"], 1]))
    path = out / "coverage.csv"
    write_coverage_csv(rows, path)
    for r in rows:
        print(f"{r.model} t_obs={r.t_obs} level={r.level:g}: coverage {r.coverage:.3f} width {r.mean_width:.3f}")
    return [path]


def cmd_verify(cfg, out):
    from .eval.verify import run_verification

    results = run_verification(cfg["seed"], cfg["lower_bound_reps"], cfg["sim_reps"])
    path = out / "verify.csv"
    lines = ["check_name,lhs,rhs,margin,pass"] + [r.line() for r in results]
    path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return [path]


class VerificationFailed(RuntimeError):
    pass


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "run-bandit": cmd_run_bandit,
    "coverage": cmd_coverage,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="psar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, schema in SCHEMAS.items():
        p = sub.add_parser(mode)
        p.add_argument("--config", help="key = value config file")
        for key, field in {**COMMON, **schema}.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=field.help or None)
    return parser


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mode = args.mode
    try:
        file_values = read_config(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if k not in ("mode", "config")}
        cfg = resolve({**COMMON, **SCHEMAS[mode]}, file_values, flags)
        if cfg["seed"] is None:
            raise ConfigError("missing required field: seed")
        if cfg["jobs"] < 1:
            raise ConfigError("jobs must be at least 1")
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
        out = root / (cfg["output"] or mode)
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[mode](cfg, out)
    except (ConfigError, VerificationFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, VerificationFailed) else 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    recorded = {k: v for k, v in cfg.items() if k != "jobs"}
    (out / "config.resolved").write_text(f"# psar {mode}\n" + dump_config(recorded))
    manifest = {
        "mode": mode,
        "version": __version__,
        "seed": cfg["seed"],
        "config": recorded,
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
