"""Command line interface.

Subcommands cover the whole pipeline: synthesize data, train a
releaser, train a held-out attacker against it, score an operating
point, sweep the privacy weight, compare spectra and quality
indicators, run the house-mismatch study, and audit the exact
small-alphabet bounds.

Every run directory gets a resolved_config.json pinning all defaults,
so a run can be reproduced bit-for-bit from its outputs.  Errors print
one machine-parsable line to stderr,

    error: <category>: <message>

with exit codes 2 (config), 3 (missing-file), 4 (data-format) and
5 (numeric).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .analytics import (
    balanced_accuracy,
    evaluate_operating_point,
    mismatch_sweep,
    peak_preservation,
    pooled_release,
    quality_indicators,
    tradeoff_sweep,
    welch_psd,
    write_mismatch_csv,
    write_tradeoff_csv,
)
from .config import RunConfig, load_config, save_resolved
from .data import generate, load_csv, save_csv, split, with_labels
from .errors import MeterPrivError, MissingFileError, NumericError
from .infotheory import (
    directed_information,
    directed_information_literal,
    joint_pmf,
    random_spec,
    true_posterior_attacker,
    verify_bound_chain,
    verify_xent_bound,
)
from .lstm import load_params, save_params
from .training import (
    TAG_EVAL_NOISE,
    Standardizer,
    attack_predictions,
    draw_noise,
    make_release,
    stream_rng,
    train,
    train_test_attacker,
)

EXIT_CODES = {"config": 2, "missing-file": 3, "data-format": 4, "numeric": 5}

RELEASER_FILE = "releaser.json"
ATTACKER_FILE = "attacker.json"
TEST_ATTACKER_FILE = "test_attacker.json"
STANDARDIZER_FILE = "standardizer.json"
HISTORY_FILE = "history.csv"
DATASET_FILE = "dataset.csv"


def _ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


def _write_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str):
    if not os.path.exists(path):
        raise MissingFileError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=seed))
    return cfg


def _lambda_grid(args, cfg: RunConfig) -> list[float]:
    if getattr(args, "lambda_grid", None):
        return [float(tok) for tok in args.lambda_grid.split(",") if tok.strip() != ""]
    return list(cfg.eval.lambda_grid)


def _load_run_dir(run_dir: str):
    """The releaser and standardizer written by the train command."""
    rel_path = os.path.join(run_dir, RELEASER_FILE)
    std_path = os.path.join(run_dir, STANDARDIZER_FILE)
    for path in (rel_path, std_path):
        if not os.path.exists(path):
            raise MissingFileError(f"file not found: {path}")
    return load_params(rel_path), Standardizer.from_dict(_read_json(std_path))


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, data=replace(cfg.data, seed=args.seed))
    dataset = generate(cfg.data.synthetic_config(), cfg.data.days_per_house)
    dataset = with_labels(dataset, cfg.data.label_mode)
    _ensure_dir(args.out)
    save_csv(dataset, os.path.join(args.out, DATASET_FILE))
    save_resolved(cfg, args.out)
    print(
        f"wrote {dataset.n_days} days from {len(dataset.houses)} houses "
        f"({dataset.seq_len} steps/day, labels={cfg.data.label_mode}) to {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    train_ds, val_ds, _ = split(dataset, seed=cfg.train.seed)
    train_cfg = cfg.train_config()
    result = train(train_cfg, train_ds, val_ds)
    _ensure_dir(args.out)
    save_params(result.releaser, os.path.join(args.out, RELEASER_FILE))
    save_params(result.attacker, os.path.join(args.out, ATTACKER_FILE))
    _write_json(result.standardizer.as_dict(), os.path.join(args.out, STANDARDIZER_FILE))
    result.history.to_csv(os.path.join(args.out, HISTORY_FILE))
    save_resolved(cfg, args.out)
    last = result.history.records[-1]
    print(
        f"trained {train_cfg.iterations} iterations on {train_ds.n_days} days; "
        f"final distortion {last.distortion:.6g}, "
        f"best val loss {result.best_val_loss:.6g} at iteration {result.best_iteration}"
    )
    return 0


def cmd_attack(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    train_ds, val_ds, _ = split(dataset, seed=cfg.train.seed)
    releaser, standardizer = _load_run_dir(args.checkpoint)
    train_cfg = cfg.train_config()
    attacker = train_test_attacker(releaser, standardizer, train_cfg, train_ds, val_ds)
    _ensure_dir(args.out)
    save_params(attacker, os.path.join(args.out, TEST_ATTACKER_FILE))

    rng = stream_rng(train_cfg.seed, TAG_EVAL_NOISE)
    u = draw_noise(rng, val_ds.n_days, val_ds.seq_len, train_cfg.noise_dim)
    x_in = val_ds.x.astype(float) if train_cfg.include_private_in_input else None
    z_val = make_release(releaser, standardizer.apply(val_ds.y), u, x_in)
    acc = balanced_accuracy(
        attack_predictions(attacker, z_val), val_ds.x, val_ds.alphabet_size
    )
    _write_json({"val_balanced_accuracy": acc}, os.path.join(args.out, "attack_report.json"))
    save_resolved(cfg, args.out)
    print(f"test attacker val balanced accuracy {acc:.4f}; wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    _, _, test_ds = split(dataset, seed=cfg.train.seed)
    releaser, standardizer = _load_run_dir(args.checkpoint)
    attacker_path = args.attacker or os.path.join(args.checkpoint, TEST_ATTACKER_FILE)
    if not os.path.exists(attacker_path):
        raise MissingFileError(
            f"file not found: {attacker_path} (run the attack command first)"
        )
    attacker = load_params(attacker_path)
    train_cfg = cfg.train_config()
    point, (y_all, z_all) = evaluate_operating_point(
        releaser,
        attacker,
        standardizer,
        train_cfg,
        test_ds,
        cfg.eval.release_draws,
        return_arrays=True,
    )
    peak = peak_preservation(
        y_all, z_all, cfg.eval.peak_magnitude_tol, cfg.eval.peak_location_tol
    )
    _ensure_dir(args.out)
    report = {
        "lambda": point.lam,
        "ne_2": point.ne_2,
        "ne_4": point.ne_4,
        "balanced_accuracy": point.accuracy,
        "indicator_errors_percent": {
            "mean": point.indicators.mean,
            "skewness": point.indicators.skewness,
            "kurtosis": point.indicators.kurtosis,
            "std_over_mean": point.indicators.std_over_mean,
            "max_over_mean": point.indicators.max_over_mean,
        },
        "peak_preservation": peak,
        "release_draws": cfg.eval.release_draws,
        "test_days": test_ds.n_days,
    }
    _write_json(report, os.path.join(args.out, "eval_report.json"))
    save_resolved(cfg, args.out)
    print(
        f"lambda={point.lam:g} ne_2={point.ne_2:.4f} ne_4={point.ne_4:.4f} "
        f"accuracy={point.accuracy:.4f} peak_preservation={peak:.4f}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    grid = _lambda_grid(args, cfg)
    points = tradeoff_sweep(grid, cfg.train_config(), dataset, cfg.eval.release_draws)
    _ensure_dir(args.out)
    write_tradeoff_csv(points, os.path.join(args.out, "tradeoff.csv"))
    save_resolved(cfg, args.out)
    for p in points:
        print(f"lambda={p.lam:g} ne_2={p.ne_2:.4f} accuracy={p.accuracy:.4f}")
    return 0


def cmd_mismatch(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    grid = _lambda_grid(args, cfg)
    train_cfg = cfg.train_config()
    tables = {}
    for name, scenario in cfg.mismatch.scenarios.items():
        tables[name] = mismatch_sweep(
            grid,
            train_cfg,
            dataset,
            set(scenario.releaser_houses),
            set(scenario.attacker_houses),
            cfg.eval.release_draws,
        )
    _ensure_dir(args.out)
    write_mismatch_csv(tables, os.path.join(args.out, "mismatch.csv"))
    save_resolved(cfg, args.out)
    for name in sorted(tables):
        accs = " ".join(f"{p.accuracy:.4f}" for p in tables[name])
        print(f"{name}: accuracy per lambda [{accs}]")
    return 0


def cmd_psd(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    _, _, test_ds = split(dataset, seed=cfg.train.seed)
    releaser, standardizer = _load_run_dir(args.checkpoint)
    train_cfg = cfg.train_config()
    y_all, z_all, _, _ = pooled_release(
        releaser, standardizer, train_cfg, test_ds, cfg.eval.release_draws
    )
    kwargs = dict(
        segment_len=cfg.eval.psd_segment_len,
        overlap=cfg.eval.psd_overlap,
        window=cfg.eval.psd_window,
    )
    est_y = welch_psd(y_all, **kwargs)
    est_z = welch_psd(z_all, **kwargs)
    _ensure_dir(args.out)
    path = os.path.join(args.out, "psd.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frequency_cycles_per_day,density_original,density_release\n")
        for f, dy, dz in zip(est_y.freqs, est_y.density, est_z.density):
            fh.write(f"{f:.9g},{dy:.9g},{dz:.9g}\n")
    save_resolved(cfg, args.out)
    print(f"wrote {est_y.freqs.size} frequency bins to {path}")
    return 0


def cmd_indicators(args) -> int:
    cfg = _run_config(args)
    dataset = load_csv(args.data)
    _, _, test_ds = split(dataset, seed=cfg.train.seed)
    releaser, standardizer = _load_run_dir(args.checkpoint)
    train_cfg = cfg.train_config()
    y_all, z_all, _, _ = pooled_release(
        releaser, standardizer, train_cfg, test_ds, cfg.eval.release_draws
    )
    errs = quality_indicators(y_all, z_all)
    peak = peak_preservation(
        y_all, z_all, cfg.eval.peak_magnitude_tol, cfg.eval.peak_location_tol
    )
    _ensure_dir(args.out)
    path = os.path.join(args.out, "indicators.csv")
    rows = [
        ("err_mean_percent", errs.mean),
        ("err_skewness_percent", errs.skewness),
        ("err_kurtosis_percent", errs.kurtosis),
        ("err_std_over_mean_percent", errs.std_over_mean),
        ("err_max_over_mean_percent", errs.max_over_mean),
        ("peak_preservation", peak),
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric,value\n")
        for name, value in rows:
            fh.write(f"{name},{value:.9g}\n")
    save_resolved(cfg, args.out)
    for name, value in rows:
        print(f"{name}={value:.6g}")
    return 0


ORACLE_TOL_EQUALITY = 1e-10
ORACLE_TOL_SLACK = -1e-9


def cmd_oracle_verify(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    shapes = [(2, 2, 2, 2), (3, 2, 2, 2), (2, 3, 2, 3), (3, 2, 3, 2), (4, 2, 2, 2)]
    route_gaps, lower_slacks, upper_slacks, xent_slacks, posterior_gaps = [], [], [], [], []
    for i in range(args.specs):
        seq_len, nx, nz, nxhat = shapes[i % len(shapes)]
        spec = random_spec(rng, seq_len=seq_len, nx=nx, nz=nz, nxhat=nxhat)
        joint = joint_pmf(spec)
        route_gaps.append(
            abs(directed_information(joint) - directed_information_literal(joint))
        )
        chain = verify_bound_chain(spec)
        route_gaps.append(abs(chain.ccent_general - chain.ccent_simplified))
        lower_slacks.append(chain.slack_lower)
        upper_slacks.append(chain.slack_upper)
        xent_slacks.append(verify_xent_bound(spec).slack)
        posterior_gaps.append(abs(verify_xent_bound(true_posterior_attacker(spec)).slack))
    report = {
        "specs": args.specs,
        "max_route_gap": max(route_gaps),
        "min_slack_lower": min(lower_slacks),
        "min_slack_upper": min(upper_slacks),
        "min_xent_slack": min(xent_slacks),
        "max_true_posterior_gap": max(posterior_gaps),
    }
    ok = (
        report["max_route_gap"] <= ORACLE_TOL_EQUALITY
        and report["min_slack_lower"] >= ORACLE_TOL_SLACK
        and report["min_slack_upper"] >= ORACLE_TOL_SLACK
        and report["min_xent_slack"] >= ORACLE_TOL_SLACK
        and report["max_true_posterior_gap"] <= 1e-9
    )
    if args.out:
        _ensure_dir(args.out)
        _write_json(report, os.path.join(args.out, "oracle_report.json"))
    for key, value in report.items():
        print(f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}")
    if not ok:
        raise NumericError("bound verification failed; see report values above")
    print(f"verified {args.specs} random specs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meterpriv",
        description="Privacy-preserving smart meter release: train, attack, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, *, config=True, data=False, checkpoint=False, out=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        if config:
            p.add_argument("--config", help="run config JSON (defaults apply if omitted)")
        if data:
            p.add_argument("--data", required=True, help="dataset CSV path")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="train run output directory")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        return p

    add("gen-data", cmd_gen_data, "synthesize a labeled dataset")
    add("train", cmd_train, "train the releaser/attacker pair", data=True)
    add("attack", cmd_attack, "train a held-out attacker on a frozen releaser",
        data=True, checkpoint=True)
    p_eval = add("eval", cmd_eval, "score an operating point on held-out days",
                 data=True, checkpoint=True)
    p_eval.add_argument("--attacker", help="test attacker checkpoint (default: in --checkpoint)")
    p_sweep = add("sweep", cmd_sweep, "retrain across the privacy-weight grid", data=True)
    p_sweep.add_argument("--lambda-grid", help="comma-separated grid, e.g. 0,0.5,1,2")
    p_mismatch = add("mismatch", cmd_mismatch, "house-mismatch study per scenario", data=True)
    p_mismatch.add_argument("--lambda-grid", help="comma-separated grid, e.g. 0,1")
    add("psd", cmd_psd, "spectra of original vs released consumption",
        data=True, checkpoint=True)
    add("indicators", cmd_indicators, "pooled quality indicators and peak preservation",
        data=True, checkpoint=True)
    p_oracle = add("oracle-verify", cmd_oracle_verify,
                   "audit the exact bounds on random small processes", config=False, out=False)
    p_oracle.add_argument("--specs", type=int, default=100, help="number of random specs")
    p_oracle.add_argument("--out", help="optional report directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MeterPrivError as exc:
        category = getattr(exc, "category", "config")
        sys.stderr.write(f"error: {category}: {exc}\n")
        return EXIT_CODES.get(category, 2)


if __name__ == "__main__":
    sys.exit(main())
