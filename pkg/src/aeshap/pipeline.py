"""Two-model experiment: a baseline autoencoder on every feature and an
optimized one on the top-k features ranked by KernelSHAP over attack
instances. Every stage is also callable on its own (see `cli`)."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import data as di
from .autoencoder import AEConfig, AEModel, TrainReport, init_model, score_batch, train
from .evaluation import (MetricsReport, RocCurve, classification_report, classify,
                         confusion, metrics, optimal_threshold, roc)
from .kmeans import BackgroundSet, kmeans_summarize
from .plots import emit_plots
from .selection import FeatureRanking, aggregate, top_k, write_ranking
from .shap import ExplainerConfig, ShapExplanation, explain_batch, write_explanations

log = logging.getLogger(__name__)

OUT_ENV = "AESHAP_OUT"
BASELINE = "Model_1"
OPTIMIZED = "OPT_Model"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class stage:
    """Re-raise anything escaping the block as a `PipelineError` tagged `name`."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is None or isinstance(exc, PipelineError):
            return False
        if isinstance(exc, (ValueError, ArithmeticError, RuntimeError, OSError, KeyError)):
            raise PipelineError(self.name, str(exc)) from exc
        return False


@dataclass(frozen=True)
class SynthConfig:
    n_train_benign: int = 5000
    n_test_benign: int = 2000
    n_attack: int = 400
    n_features: int = 50
    n_informative: int = 10
    shift: float = 6.0


@dataclass(frozen=True)
class RunConfig:
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: str = di.LABEL_NAME
    benign_label: str = di.DEFAULT_BENIGN_LABEL
    synth: SynthConfig | None = None
    autoencoder: AEConfig = AEConfig()
    explainer: ExplainerConfig = ExplainerConfig()
    background_size: int = 200
    n_explain: int | None = None  # defaults to background_size
    top_k: int = 40
    train_fraction: float = 0.67
    seed: int = 0
    exclude_background_from_test: bool = False
    n_jobs: int = 1
    out_dir: str | None = None

    @property
    def explain_count(self) -> int:
        return self.background_size if self.n_explain is None else self.n_explain

    def output_dir(self) -> Path:
        return Path(self.out_dir or os.environ.get(OUT_ENV) or "out")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["autoencoder"]["hidden_layers"] = list(self.autoencoder.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        if d.get("synth") is not None:
            d["synth"] = SynthConfig(**d["synth"])
        if "autoencoder" in d:
            d["autoencoder"] = AEConfig(**d["autoencoder"])
        if "explainer" in d:
            d["explainer"] = ExplainerConfig(**d["explainer"])
        return cls(**d)

    def config_hash(self) -> str:
        """Hash of every setting that can change a number (not out_dir, not n_jobs)."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("n_jobs")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path, **overrides: Any) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise PipelineError("config", f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise PipelineError("config", f"{path}: {e}") from e
    raw.update({k: v for k, v in overrides.items() if v is not None})
    with stage("config"):
        return RunConfig.from_dict(raw)


# offsets keep the per-stage random streams distinct while one seed drives all
_SEED_OFFSETS = {"synth": 0, "split": 1, "init": 2, "sample": 3, "kmeans": 4, "explain": 5}


def stage_seed(seed: int, name: str) -> int:
    return (int(seed) * 1_000_003 + _SEED_OFFSETS[name]) % (2 ** 31)


@dataclass(frozen=True)
class PreparedData:
    train: di.CleanDataset  # benign training rows, cleaned, unscaled
    test: di.CleanDataset  # labelled test rows, cleaned, unscaled
    background_rows: np.ndarray  # test-row indices of the attack background source
    explain_rows: np.ndarray  # test-row indices of the explained attack instances
    eval_rows: np.ndarray  # test-row indices scored for ROC and metrics


def _ingest_csv(path: str, cfg: RunConfig, need_labels: bool) -> di.CleanDataset:
    raw = di.load_csv(path, cfg.label_column if cfg.label_column else None)
    if need_labels and raw.label_values is None:
        raise ValueError(f"{path}: labels required (column {cfg.label_column!r})")
    with warnings.catch_warnings():
        warnings.simplefilter("always", di.DataWarning)
        return di.clean(raw, cfg.benign_label)


def prepare_data(cfg: RunConfig) -> PreparedData:
    """Ingest and clean both tables and fix the attack sample used by SHAP."""
    with stage("ingest"):
        if cfg.synth is not None:
            s = cfg.synth
            ds = di.synth_generate(s.n_train_benign + s.n_test_benign, s.n_attack, s.n_features,
                                   s.n_informative, s.shift, stage_seed(cfg.seed, "synth"))
            train_ds = ds.take(np.arange(s.n_train_benign))
            test_ds = ds.take(np.arange(s.n_train_benign, ds.n_rows))
        elif cfg.train_csv and cfg.test_csv:
            train_ds = _ingest_csv(cfg.train_csv, cfg, need_labels=False)
            test_ds = _ingest_csv(cfg.test_csv, cfg, need_labels=True)
            if train_ds.labels is not None:
                train_ds = train_ds.take(train_ds.labels == 0)
            test_ds = di.select_columns(test_ds, train_ds.feature_names)
        else:
            raise ValueError("config needs either `synth` or both `train_csv` and `test_csv`")
        if train_ds.n_rows < 2:
            raise ValueError("fewer than two benign training rows")
    with stage("sample"):
        attacks = np.flatnonzero(test_ds.labels == 1)
        if attacks.size == 0:
            raise ValueError("test data contains no attack rows")
        order = attacks[np.random.default_rng(stage_seed(cfg.seed, "sample")).permutation(attacks.size)]
        n_bg = cfg.background_size
        if attacks.size < n_bg:
            log.warning("only %d attack rows for a background of %d; using all", attacks.size, n_bg)
            warnings.warn(f"only {attacks.size} attack rows available for background size {n_bg}")
            n_bg = attacks.size
        bg_rows = np.sort(order[:n_bg])
        ex_rows = np.sort(order[:min(cfg.explain_count, attacks.size)])
    eval_rows = np.arange(test_ds.n_rows)
    if cfg.exclude_background_from_test:
        eval_rows = np.setdiff1d(eval_rows, bg_rows)
    return PreparedData(train_ds, test_ds, bg_rows, ex_rows, eval_rows)


@dataclass
class ModelRun:
    model: AEModel
    train_report: TrainReport
    scores: np.ndarray
    labels: np.ndarray
    metrics: MetricsReport
    curve: RocCurve
    threshold: float

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.model.feature_names


def fit_model(train_ds: di.CleanDataset, names, cfg: RunConfig) -> tuple[AEModel, TrainReport]:
    """Select columns, fit the scaler on all benign training rows, split, train."""
    with stage("train"):
        ds = di.select_columns(train_ds, names)
        ds, scaler = di.fit_standardize(ds)
        tr, va = di.split(ds, cfg.train_fraction, stage_seed(cfg.seed, "split"))
        ae_cfg = replace(cfg.autoencoder, seed=stage_seed(cfg.seed, "init"))
        model = init_model(ae_cfg, ds.n_features, ds.feature_names)
        model, report = train(model, tr, va, ae_cfg)
        model.scaler = scaler
        return model, report


def standardized(model: AEModel, ds: di.CleanDataset) -> di.CleanDataset:
    return di.apply_standardize(di.select_columns(ds, model.feature_names), model.scaler)


def evaluate_model(model: AEModel, data: PreparedData, train_report: TrainReport | None = None
                   ) -> ModelRun:
    with stage("score"):
        test = data.test.take(data.eval_rows)
        scores = score_batch(model, standardized(model, test))
    with stage("evaluate"):
        curve = roc(test.labels, scores)
        t, _ = optimal_threshold(curve, test.labels, scores)
        m = metrics(confusion(test.labels, classify(scores, t)))
    return ModelRun(model, train_report or TrainReport(), scores, test.labels, m, curve, t)


def run_baseline(cfg: RunConfig, data: PreparedData | None = None) -> ModelRun:
    data = data or prepare_data(cfg)
    model, report = fit_model(data.train, data.train.feature_names, cfg)
    return evaluate_model(model, data, report)


def build_background(model: AEModel, data: PreparedData, cfg: RunConfig) -> BackgroundSet:
    with stage("background"):
        src = standardized(model, data.test.take(data.background_rows)).features
        k = min(cfg.explainer.kmeans_k, src.shape[0])
        return kmeans_summarize(src, k, stage_seed(cfg.seed, "kmeans"))


def explainer_config(cfg: RunConfig) -> ExplainerConfig:
    return replace(cfg.explainer, seed=stage_seed(cfg.seed, "explain"))


def explain_attacks(model: AEModel, data: PreparedData, cfg: RunConfig
                    ) -> tuple[BackgroundSet, list[ShapExplanation]]:
    bg = build_background(model, data, cfg)
    with stage("explain"):
        inst = standardized(model, data.test.take(data.explain_rows))
        expl = explain_batch(model, inst, bg, explainer_config(cfg),
                             row_ids=data.explain_rows, n_jobs=cfg.n_jobs)
    return bg, expl


@dataclass
class OptimizedRun:
    ranking: FeatureRanking
    selected: list[str]
    explanations: list[ShapExplanation]
    background: BackgroundSet
    run: ModelRun


def run_optimized(cfg: RunConfig, baseline_model: AEModel, data: PreparedData | None = None
                  ) -> OptimizedRun:
    data = data or prepare_data(cfg)
    bg, expl = explain_attacks(baseline_model, data, cfg)
    with stage("select"):
        ranking = aggregate(expl)
        names = top_k(ranking, cfg.top_k)
    model, report = fit_model(data.train, names, cfg)
    return OptimizedRun(ranking, names, expl, bg, evaluate_model(model, data, report))


def _model_summary(run: ModelRun) -> dict:
    hist = run.train_report.loss_history
    return {
        "feature_count": run.model.input_dim,
        "features": list(run.feature_names),
        "auc": run.curve.auc,
        "g_mean": run.metrics.g_mean,
        "optimal_threshold": run.threshold,
        "metrics": run.metrics.to_dict(),
        "train_loss_first": hist[0] if hist else None,
        "train_loss_final": hist[-1] if hist else None,
        "validation_mse": run.train_report.final_validation_mse,
    }


@dataclass
class ComparisonReport:
    models: dict[str, dict]
    ranking: list[list]
    selected: list[str]
    seed: int
    config_hash: str
    planted: list[str] | None = None

    def metrics_of(self, name: str) -> MetricsReport:
        return MetricsReport.from_dict(self.models[name]["metrics"])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(**d)

    @property
    def planted_recovered(self) -> int | None:
        if self.planted is None:
            return None
        return len(set(self.planted) & set(self.selected))


def build_report(cfg: RunConfig, data: PreparedData, base: ModelRun, opt: OptimizedRun
                 ) -> ComparisonReport:
    planted = None
    if data.train.informative is not None:
        planted = [data.train.feature_names[i] for i in data.train.informative]
    return ComparisonReport(
        models={BASELINE: _model_summary(base), OPTIMIZED: _model_summary(opt.run)},
        ranking=[[e.name, e.importance] for e in opt.ranking.entries],
        selected=list(opt.selected), seed=cfg.seed, config_hash=cfg.config_hash(),
        planted=planted)


def report_text(report: ComparisonReport) -> str:
    lines = [f"seed {report.seed}  config {report.config_hash}", "",
             f"{'Model':<12}{'Features':>10}{'AUC':>10}{'G-mean':>10}{'Threshold':>12}"]
    for name, m in report.models.items():
        lines.append(f"{name:<12}{m['feature_count']:>10d}{m['auc']:>10.3f}"
                     f"{m['g_mean']:>10.3f}{m['optimal_threshold']:>12.4g}")
    if report.planted is not None:
        lines.append("")
        lines.append(f"planted features recovered in selection: "
                     f"{report.planted_recovered}/{len(report.planted)}")
    for name in report.models:
        lines += ["", f"Classification report: {name}", ""]
        lines.append(classification_report(report.metrics_of(name)).rstrip("\n"))
    return "\n".join(lines) + "\n"


def write_json(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def emit_report(report: ComparisonReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report.to_dict(), out / "report.json")
    (out / "report.txt").write_text(report_text(report), encoding="utf-8")
    return [out / "report.json", out / "report.txt"]


def read_report(path: str | Path) -> ComparisonReport:
    return ComparisonReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_curve(curve: RocCurve, path: Path) -> None:
    lines = ["threshold\tfpr\ttpr"]
    lines += [f"{t!r}\t{f!r}\t{p!r}" for t, f, p in curve.points]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class CompareResult:
    report: ComparisonReport
    baseline: ModelRun
    optimized: OptimizedRun
    files: list[Path]


def compare(cfg: RunConfig, out_dir: str | Path | None = None) -> CompareResult:
    """Full experiment; writes reports, tables and SVGs into the output directory."""
    out = Path(out_dir) if out_dir is not None else cfg.output_dir()
    data = prepare_data(cfg)
    base = run_baseline(cfg, data)
    opt = run_optimized(cfg, base.model, data)
    report = build_report(cfg, data, base, opt)
    with stage("emit"):
        out.mkdir(parents=True, exist_ok=True)
        files = emit_report(report, out)
        write_ranking(opt.ranking, out / "ranking.tsv")
        write_explanations(opt.explanations, out / "explanations.tsv")
        write_curve(base.curve, out / "roc_model_1.tsv")
        write_curve(opt.run.curve, out / "roc_opt_model.tsv")
        files += [out / "ranking.tsv", out / "explanations.tsv",
                  out / "roc_model_1.tsv", out / "roc_opt_model.tsv"]
        first = opt.explanations[:1]
        files += emit_plots({BASELINE: base.curve, OPTIMIZED: opt.run.curve}, opt.ranking,
                            cfg.top_k, first, out,
                            {e.instance_index: f"Attack test row {e.instance_index}" for e in first})
    return CompareResult(report, base, opt, files)
