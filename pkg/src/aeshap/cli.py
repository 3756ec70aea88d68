"""Command line entry point: ``aeshap <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import data as di
from .autoencoder import load_model, save_model
from .pipeline import (BASELINE, PipelineError, RunConfig, SynthConfig, compare, evaluate_model,
                       explain_attacks, fit_model, load_config, prepare_data,
                       stage, stage_seed, write_curve, write_json)
from .evaluation import classification_report
from .selection import aggregate, read_ranking, top_k, write_ranking
from .shap import read_explanations, write_explanations

log = logging.getLogger("aeshap")


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed, "out_dir": args.out}
    if getattr(args, "jobs", None) is not None:
        overrides["n_jobs"] = args.jobs
    if getattr(args, "top_k", None) is not None:
        overrides["top_k"] = args.top_k
    if args.config is None:
        with stage("config"):
            return RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    return load_config(args.config, **overrides)


def cmd_synth(args) -> int:
    cfg = _config(args)
    s = cfg.synth or SynthConfig()
    out = cfg.output_dir()
    with stage("synth"):
        out.mkdir(parents=True, exist_ok=True)
        ds = di.synth_generate(s.n_train_benign + s.n_test_benign, s.n_attack, s.n_features,
                               s.n_informative, s.shift, stage_seed(cfg.seed, "synth"))
        di.save_dataset(ds.take(np.arange(s.n_train_benign)), out / "train.csv")
        di.save_dataset(ds.take(np.arange(s.n_train_benign, ds.n_rows)), out / "test.csv")
    print(f"wrote {out / 'train.csv'} and {out / 'test.csv'}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = cfg.output_dir()
    data = prepare_data(cfg)
    names = data.train.feature_names
    if args.ranking:
        with stage("select"):
            names = top_k(read_ranking(args.ranking), cfg.top_k)
    model, report = fit_model(data.train, names, cfg)
    with stage("emit"):
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{args.name}.npz"
        save_model(model, path)
        write_json({"loss_history": report.loss_history,
                    "final_validation_mse": report.final_validation_mse,
                    "features": list(names)}, out / f"{args.name}.train.json")
    print(f"wrote {path}")
    return 0


def _load_model(path):
    with stage("load-model"):
        return load_model(path)


def cmd_explain(args) -> int:
    cfg = _config(args)
    model = _load_model(args.model)
    data = prepare_data(cfg)
    _, expl = explain_attacks(model, data, cfg)
    with stage("emit"):
        cfg.output_dir().mkdir(parents=True, exist_ok=True)
        write_explanations(expl, cfg.output_dir() / "explanations.tsv")
    print(f"wrote {cfg.output_dir() / 'explanations.tsv'} ({len(expl)} instances)")
    return 0


def cmd_select(args) -> int:
    out = Path(args.out) if args.out else RunConfig().output_dir()
    with stage("select"):
        ranking = aggregate(read_explanations(args.explanations))
        k = args.top_k if args.top_k is not None else RunConfig().top_k
        names = top_k(ranking, k)
        out.mkdir(parents=True, exist_ok=True)
        write_ranking(ranking, out / "ranking.tsv")
        (out / "selected.txt").write_text("\n".join(names) + "\n", encoding="utf-8")
    print(f"wrote {out / 'ranking.tsv'}; top {k}: {', '.join(names)}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    model = _load_model(args.model)
    data = prepare_data(cfg)
    run = evaluate_model(model, data)
    with stage("emit"):
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        write_json({"feature_count": model.input_dim, "features": list(model.feature_names),
                    "auc": run.curve.auc, "g_mean": run.metrics.g_mean,
                    "optimal_threshold": run.threshold, "metrics": run.metrics.to_dict()},
                   out / "evaluation.json")
        (out / "evaluation.txt").write_text(classification_report(run.metrics), encoding="utf-8")
        write_curve(run.curve, out / "roc.tsv")
    print(f"AUC {run.curve.auc:.4f}  G-mean {run.metrics.g_mean:.4f}  threshold {run.threshold:.6g}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = cfg.output_dir()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    res = compare(cfg, out)
    with stage("emit"):
        save_model(res.baseline.model, out / "model_1.npz")
        save_model(res.optimized.run.model, out / "opt_model.npz")
        write_json({"seed": cfg.seed, "config_hash": cfg.config_hash(),
                    "config": cfg.to_dict(), "started": started,
                    "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")}, out / "run.json")
    sys.stdout.write((out / "report.txt").read_text(encoding="utf-8"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aeshap",
        description="Autoencoder anomaly detection with KernelSHAP feature selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{synth,train,explain,select,evaluate,compare}")

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the global seed")
        sp.add_argument("--out", help="output directory (default $AESHAP_OUT or ./out)")

    sp = sub.add_parser("synth", help="generate a planted-anomaly dataset as train/test CSV")
    common(sp, config_required=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one autoencoder on benign data")
    common(sp)
    sp.add_argument("--ranking", help="ranking.tsv; train on its top-k features only")
    sp.add_argument("--top-k", type=int)
    sp.add_argument("--name", default="model", help="checkpoint base name")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("explain", help="KernelSHAP explanations of attack instances")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--jobs", type=int, help="parallel explanation workers")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("select", help="rank features from explanations.tsv")
    sp.add_argument("--explanations", required=True)
    sp.add_argument("--top-k", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("evaluate", help="ROC, G-mean threshold and classification report")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help=f"full experiment: {BASELINE} vs optimized model")
    common(sp)
    sp.add_argument("--jobs", type=int, help="parallel explanation workers")
    sp.add_argument("--top-k", type=int)
    sp.set_defaults(func=cmd_compare)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineError as e:
        print(f"error {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
