"""Command-line pipeline: generate -> correct -> train-eval -> report.

Each subcommand reads a JSON config file, writes its outputs plus a manifest
(config hash, input file hashes, package version) into the output directory,
and exits 0 on success, 2 on configuration errors, 1 on runtime errors.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .correction import (
    METHOD_IDS,
    CorrectedDataset,
    CorrectionParams,
    apply_method,
    error_decomposition,
    read_labels_csv,
)
from .data_model import (
    FeatureSchema,
    chronological_split_indices,
    compute_stats,
    ingest_csv,
    write_csv,
)
from .errors import ConfigError, WatchlabError
from .estimator import BiasNoiseCurves, GmmOptions, fit_all_groups, smooth_curves
from .evaluation import evaluate, gauc, improve_percentage, oracle_labels
from .synthgen import (
    Curve,
    SynthConfig,
    generate,
    read_ground_truth_csv,
    write_ground_truth_csv,
)
from .trainer import FMModel, TrainConfig, build_vocab, train


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, config: dict, inputs: dict, notes: dict | None = None):
    manifest = {
        "watchlab_version": __version__,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "input_sha256": {name: _sha256(p) for name, p in inputs.items()},
        "notes": notes or {},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def _curve_from_config(spec, default: Curve) -> Curve:
    if spec is None:
        return default
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError(f"curve spec must be {{'family': ..., params...}}, got {spec}")
    params = {k: v for k, v in spec.items() if k != "family"}
    return Curve(spec["family"], params)


def _synth_config(config: dict, seed_override) -> SynthConfig:
    g = config.get("generate", {})
    defaults = SynthConfig()
    try:
        return SynthConfig(
            n_rows=int(g.get("n_rows", defaults.n_rows)),
            n_users=int(g.get("n_users", defaults.n_users)),
            n_items=int(g.get("n_items", defaults.n_items)),
            latent_dim=int(g.get("latent_dim", defaults.latent_dim)),
            duration_range=tuple(g.get("duration_range", defaults.duration_range)),
            bias_curve=_curve_from_config(g.get("bias_curve"), defaults.bias_curve),
            noise_curve=_curve_from_config(g.get("noise_curve"), defaults.noise_curve),
            noise_std_plus=float(g.get("noise_std_plus", defaults.noise_std_plus)),
            noise_std_minus=float(g.get("noise_std_minus", defaults.noise_std_minus)),
            duration_interest_coupling=float(
                g.get("duration_interest_coupling", defaults.duration_interest_coupling)
            ),
            interest_scale=float(g.get("interest_scale", defaults.interest_scale)),
            duration_per_item=bool(g.get("duration_per_item", defaults.duration_per_item)),
            seed=int(seed_override if seed_override is not None else config.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad generate section: {exc}")


def _out_dir(config, out_override) -> Path:
    out = Path(out_override or config.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_path(config, out_dir: Path) -> Path:
    p = config.get("dataset_csv")
    return Path(p) if p else out_dir / "data.csv"


def _schema(config) -> FeatureSchema:
    fields = tuple(config.get("feature_fields", ()))
    return FeatureSchema(feature_fields=fields)


def run_generate(config: dict, seed=None, out=None) -> Path:
    out_dir = _out_dir(config, out)
    synth = _synth_config(config, seed)
    dataset, truth = generate(synth)
    data_path = out_dir / "data.csv"
    truth_path = out_dir / "ground_truth.csv"
    write_csv(dataset, data_path)
    write_ground_truth_csv(truth, truth_path)
    _write_manifest(out_dir, config, {"data.csv": data_path, "ground_truth.csv": truth_path},
                    notes={"n_rows": len(dataset)})
    return out_dir


def _estimator_options(config) -> tuple:
    e = config.get("estimator", {})
    opts = GmmOptions(
        min_group_size=int(e.get("min_group_size", 50)),
        tol=float(e.get("tol", 1e-6)),
        max_iter=int(e.get("max_iter", 200)),
        var_floor=float(e.get("var_floor", 1e-4)),
    )
    window = int(e.get("window", 2))
    if window < 0:
        raise ConfigError("estimator.window must be >= 0")
    return opts, window


def _correction_methods(config) -> list:
    c = config.get("correction", {})
    methods = c.get("methods", ["d2co_a", "d2co_s"])
    if not methods:
        raise ConfigError("correction.methods must be non-empty")
    for m in methods:
        if m not in METHOD_IDS:
            raise ConfigError(f"unknown correction method {m!r}")
    if "d2co_s" in methods and not c.get("alpha"):
        raise ConfigError("d2co_s requested but correction.alpha is missing or zero")
    return methods


def _correction_params(config, method, curves) -> CorrectionParams:
    c = config.get("correction", {})
    return CorrectionParams(
        method=method,
        curves=curves,
        alpha=c.get("alpha"),
        n_bins=int(c.get("n_bins", 60)),
        denoise_threshold_s=float(c.get("denoise_threshold_s", 5.0)),
        clip=bool(c.get("clip", True)),
    )


def fit_curves(dataset, config) -> BiasNoiseCurves:
    opts, window = _estimator_options(config)
    raw = fit_all_groups(dataset, opts)
    counts = compute_stats(dataset).group_counts
    return smooth_curves(raw, window, counts)


def run_correct(config: dict, seed=None, out=None) -> Path:
    out_dir = _out_dir(config, out)
    data_path = _dataset_path(config, out_dir)
    if not data_path.exists():
        raise ConfigError(f"input dataset not found: {data_path}")
    dataset = ingest_csv(data_path, _schema(config))
    methods = _correction_methods(config)
    curves = fit_curves(dataset, config)
    curves_path = out_dir / "curves.csv"
    curves.to_csv(curves_path)

    outputs = {"curves.csv": curves_path}
    for method in methods:
        labeled = apply_method(dataset, _correction_params(config, method, curves))
        path = out_dir / f"labeled_{method}.csv"
        labeled.to_csv(path, _schema(config))
        outputs[path.name] = path

    notes = {}
    truth_path = Path(config.get("ground_truth_csv", out_dir / "ground_truth.csv"))
    if truth_path.exists():
        truth = read_ground_truth_csv(truth_path)
        wp_true = np.array([t.w_plus_d for t in truth])
        wm_true = np.array([t.w_minus_d for t in truth])
        wp_est, wm_est = curves.value_at(dataset.durations)
        notes["curve_error"] = {
            "max_rel_err_w_plus": float(np.max(np.abs(wp_est - wp_true) / wp_true)),
            "max_rel_err_w_minus": float(
                np.max(np.abs(wm_est - wm_true) / np.maximum(wm_true, 1e-9))
            ),
        }
    _write_manifest(out_dir, config, outputs, notes)
    return out_dir


def _train_config(config, seed) -> TrainConfig:
    t = config.get("trainer", {})
    return TrainConfig(
        learning_rate=float(t.get("learning_rate", 1e-3)),
        batch_size=int(t.get("batch_size", 512)),
        epochs=int(t.get("epochs", 10)),
        embedding_dim=int(t.get("embedding_dim", 10)),
        patience=int(t.get("patience", 2)),
        seed=int(seed),
    )


def train_and_score(dataset, labels, splits, oracle, config, seed):
    """Fit one FM on train labels, early-stop on val interest, score test."""
    tr_idx, va_idx, te_idx = splits
    train_set = dataset.subset(tr_idx)
    val_set = dataset.subset(va_idx)
    test_set = dataset.subset(te_idx)
    vocab = build_vocab(train_set)
    tcfg = _train_config(config, seed)
    model = FMModel(vocab, tcfg.embedding_dim, seed=tcfg.seed)
    train(model, train_set, labels[tr_idx], val_set, oracle[va_idx], tcfg)
    return model.score_interactions(test_set)


def run_train_eval(config: dict, seed=None, out=None) -> Path:
    out_dir = _out_dir(config, out)
    data_path = _dataset_path(config, out_dir)
    if not data_path.exists():
        raise ConfigError(f"input dataset not found: {data_path}")
    split_cfg = config.get("split", {})
    fractions = split_cfg.get("fractions")
    if not fractions or len(fractions) != 3:
        raise ConfigError("split.fractions must list train/val/test fractions")
    dataset = ingest_csv(data_path, _schema(config))
    methods = _correction_methods(config)
    run_methods = list(dict.fromkeys(["watch_time", *methods, "oracle"]))

    truth_path = Path(config.get("ground_truth_csv", out_dir / "ground_truth.csv"))
    truth = read_ground_truth_csv(truth_path) if truth_path.exists() else None
    oracle = oracle_labels(dataset, truth).astype(np.float64)

    labels_by_method = {"watch_time": None, "oracle": oracle}
    for m in methods:
        path = out_dir / f"labeled_{m}.csv"
        if not path.exists():
            raise ConfigError(f"labeled dataset missing (run `correct` first): {path}")
        labels_by_method[m] = read_labels_csv(path)
    labels_by_method["watch_time"] = dataset.watch_times / dataset.watch_times.max()

    splits = chronological_split_indices(dataset, fractions)
    te_idx = splits[2]
    test_set = dataset.subset(te_idx)
    test_oracle = oracle[te_idx].astype(np.int64)
    seeds = [int(s) for s in config.get("seeds", [seed if seed is not None else config.get("seed", 0)])]
    ks = tuple(config.get("evaluation", {}).get("ndcg_k", [1, 3, 5]))
    n_ranges = int(config.get("evaluation", {}).get("n_ranges", 3))

    per_seed = {m: [] for m in run_methods}
    for s in seeds:
        for m in run_methods:
            scores = train_and_score(dataset, labels_by_method[m], splits, oracle, config, s)
            per_seed[m].append(evaluate(scores, test_oracle, test_set, m, ks, n_ranges))

    report_path = out_dir / "report.csv"
    with open(report_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "seed", "gauc"] + [f"ndcg@{k}" for k in ks])
        for m in run_methods:
            for s, rep in zip(seeds, per_seed[m]):
                writer.writerow([m, s, repr(float(rep.gauc))]
                                + [repr(float(rep.ndcg_at[k])) for k in ks])
        if len(seeds) > 1:
            for m in run_methods:
                gs = [rep.gauc for rep in per_seed[m]]
                writer.writerow([m, "mean", repr(float(np.mean(gs)))] + [
                    repr(float(np.mean([rep.ndcg_at[k] for rep in per_seed[m]]))) for k in ks
                ])
                writer.writerow([m, "std", repr(float(np.std(gs)))] + [
                    repr(float(np.std([rep.ndcg_at[k] for rep in per_seed[m]]))) for k in ks
                ])

    # Table-3-shaped duration-range breakdown with improve percentage
    breakdown_path = out_dir / "breakdown.csv"
    with open(breakdown_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "seed", "range_lo", "range_hi", "n_rows", "gauc",
                         f"ndcg@{ks[0]}", "improve_pct"])
        for m in run_methods:
            for s, rep in zip(seeds, per_seed[m]):
                wt = per_seed["watch_time"][seeds.index(s)]
                orc = per_seed["oracle"][seeds.index(s)]
                for i, rng in enumerate(rep.ranges):
                    imp = ""
                    v_wt = wt.ranges[i].gauc
                    v_or = orc.ranges[i].gauc
                    if rng.gauc is not None and v_wt is not None and v_or is not None and v_or != v_wt:
                        imp = repr(float(improve_percentage(rng.gauc, v_wt, v_or)))
                    writer.writerow([
                        m, s, repr(rng.duration_lo), repr(rng.duration_hi), rng.n_rows,
                        "" if rng.gauc is None else repr(float(rng.gauc)),
                        "" if rng.ndcg[ks[0]] is None else repr(float(rng.ndcg[ks[0]])),
                        imp,
                    ])

    outputs = {"report.csv": report_path, "breakdown.csv": breakdown_path}

    sweep = config.get("sweep")
    if sweep:
        sweep_path = out_dir / "sweep_gauc.csv"
        _run_sweep(dataset, splits, oracle, test_set, test_oracle, config, sweep,
                   seeds[0], sweep_path)
        outputs["sweep_gauc.csv"] = sweep_path

    _write_manifest(out_dir, config, outputs, notes={"seeds": seeds})
    return out_dir


def _run_sweep(dataset, splits, oracle, test_set, test_oracle, config, sweep, seed, path):
    """GAUC grid over moving-average window x alpha for the exponential
    correction (first seed only)."""
    windows = [int(t) for t in sweep.get("window", [1, 2, 3, 4, 5])]
    alphas = [float(a) for a in sweep.get("alpha", [-0.05, -0.03, -0.01])]
    opts, _ = _estimator_options(config)
    raw = fit_all_groups(dataset, opts)
    counts = compute_stats(dataset).group_counts
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["window", "alpha", "gauc"])
        for T in windows:
            curves = smooth_curves(raw, T, counts)
            for a in alphas:
                params = CorrectionParams(method="d2co_s", curves=curves, alpha=a)
                labels = apply_method(dataset, params).labels
                scores = train_and_score(dataset, labels, splits, oracle, config, seed)
                g = gauc(scores, test_oracle, test_set.user_ids)
                writer.writerow([T, repr(float(a)), repr(float(g))])


def run_report(config: dict, seed=None, out=None) -> Path:
    out_dir = _out_dir(config, out)
    curves_path = out_dir / "curves.csv"
    if not curves_path.exists():
        raise ConfigError(f"curves not found (run `correct` first): {curves_path}")
    data_path = _dataset_path(config, out_dir)
    if not data_path.exists():
        raise ConfigError(f"input dataset not found: {data_path}")
    curves = BiasNoiseCurves.from_csv(curves_path)
    stats = compute_stats(ingest_csv(data_path, _schema(config)))
    bias_err, noise_err = error_decomposition(curves, stats.w_max)
    err_path = out_dir / "error_curves.csv"
    with open(err_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["d", "bias_err", "noise_err"])
        for i, d in enumerate(curves.durations):
            writer.writerow([int(d), repr(float(bias_err[i])), repr(float(noise_err[i]))])

    outputs = {"error_curves.csv": err_path}
    notes = {}
    sweep_path = out_dir / "sweep_gauc.csv"
    if sweep_path.exists():
        outputs["sweep_gauc.csv"] = sweep_path
    else:
        notes["sweep_grid"] = "omitted: no sweep results found"
    _write_manifest(out_dir, config, outputs, notes)
    return out_dir


def _run(fn, config_path, seed, out):
    try:
        config = _load_config(config_path)
        fn(config, seed, out)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    except WatchlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
def main():
    """Watch-time bias/noise correction pipeline."""


def _command(name, fn, help_text):
    @main.command(name=name, help=help_text)
    @click.option("--config", "config_path", required=True, type=click.Path())
    @click.option("--seed", type=int, default=None)
    @click.option("--out", type=click.Path(), default=None)
    def cmd(config_path, seed, out, _fn=fn):
        _run(_fn, config_path, seed, out)
    return cmd


cmd_generate = _command("generate", run_generate,
                        "Write a synthetic dataset plus its ground-truth sidecar.")
cmd_correct = _command("correct", run_correct,
                       "Fit bias/noise curves and write labeled datasets.")
cmd_train_eval = _command("train-eval", run_train_eval,
                          "Train one FM per method and write evaluation reports.")
cmd_report = _command("report", run_report,
                      "Write error-decomposition curves and the sweep grid.")


if __name__ == "__main__":
    main()
