"""Flow-record ingestion: CSV loading, cleaning, scaling, splitting and a
synthetic planted-anomaly generator used for desk-scale runs."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

LABEL_NAME = "Label"
DEFAULT_BENIGN_LABEL = "BENIGN"


class DataError(ValueError):
    pass


class DataWarning(UserWarning):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV. Non-numeric, empty and infinity cells are NaN/inf in `values`.

    The label column (if any) keeps its text in `label_values`; its slot in
    `values` is NaN.
    """

    column_names: tuple[str, ...]
    values: np.ndarray
    label_column: str | None = None
    label_values: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.column_names):
            raise DataError("every row must have exactly len(column_names) cells")
        if self.label_column is not None and self.label_column not in self.column_names:
            raise DataError(f"label column {self.label_column!r} not in header")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ScalerParams:
    means: np.ndarray
    stds: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means))
        object.__setattr__(self, "stds", _frozen(self.stds))
        if np.any(self.stds < 0):
            raise DataError("standard deviations must be non-negative")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.asarray(d["means"], float), np.asarray(d["stds"], float),
                   tuple(d.get("feature_names", ())))


@dataclass(frozen=True)
class CleanDataset:
    features: np.ndarray
    feature_names: tuple[str, ...]
    labels: np.ndarray | None = None
    scaler: ScalerParams | None = None
    # column indices of planted anomalies (synthetic data only)
    informative: tuple[int, ...] | None = None

    def __post_init__(self):
        x = _frozen(self.features)
        if x.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(self.feature_names) != x.shape[1]:
            raise DataError(
                f"{len(self.feature_names)} names for {x.shape[1]} feature columns")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if self.labels is not None:
            y = np.array(self.labels, dtype=np.int64, copy=True)
            if y.shape != (x.shape[0],):
                raise DataError("labels length must equal number of rows")
            if not np.all((y == 0) | (y == 1)):
                raise DataError("labels must be 0 (benign) or 1 (attack)")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
        if self.informative is not None:
            object.__setattr__(self, "informative", tuple(int(i) for i in self.informative))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "CleanDataset":
        """Row subset (index array or boolean mask), metadata kept."""
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        return replace(self, features=self.features[rows], labels=labels)


def _parse_cell(text: str) -> float:
    # float() already accepts inf/Infinity/-inf/NaN in any case
    try:
        return float(text)
    except ValueError:
        return math.nan


def _dedupe(names: Sequence[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for name in names:
        if name in seen:
            seen[name] += 1
            new = f"{name}.{seen[name]}"
            while new in seen:
                seen[name] += 1
                new = f"{name}.{seen[name]}"
            seen[new] = 0
            out.append(new)
        else:
            seen[name] = 0
            out.append(name)
    return out


def load_csv(path: str | Path, label_column: str | None = None) -> RawTable:
    """Read a header-first CSV of flow records.

    Header names are whitespace-stripped (CICIDS2017 files carry leading
    spaces) and repeated names get a ``.1``, ``.2`` suffix. A ragged row raises
    `DataError` naming its 1-based line number.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header line") from None
        names = _dedupe([h.strip() for h in header])
        label_idx = None
        if label_column is not None:
            if label_column not in names:
                raise DataError(f"{path}: label column {label_column!r} not in header")
            label_idx = names.index(label_column)
        rows: list[list[float]] = []
        labels: list[str] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(
                    f"{path}: line {reader.line_num} has {len(row)} cells, "
                    f"expected {len(names)}")
            vals = [_parse_cell(c) for c in row]
            if label_idx is not None:
                labels.append(row[label_idx].strip())
                vals[label_idx] = math.nan
            rows.append(vals)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    log.info("loaded %s: %d rows x %d columns", path, values.shape[0], values.shape[1])
    return RawTable(tuple(names), values, label_column,
                    tuple(labels) if label_idx is not None else None)


def clean(raw: RawTable, benign_label: str = DEFAULT_BENIGN_LABEL) -> CleanDataset:
    """Replace NaN/inf cells by the mean of the finite cells in their column.

    The label column is moved to binary `labels`: `benign_label` -> 0, any
    other text -> 1. A column without a single finite value is filled with
    0.0 and reported through `DataWarning`.
    """
    if raw.n_rows < 1:
        raise DataError("cannot clean an empty table")
    keep = [i for i, n in enumerate(raw.column_names) if n != raw.label_column]
    x = np.array(raw.values[:, keep], dtype=np.float64)
    finite = np.isfinite(x)
    counts = finite.sum(axis=0)
    sums = np.where(finite, x, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        fill = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    names = [raw.column_names[i] for i in keep]
    for j in np.flatnonzero(counts == 0):
        msg = f"column {names[j]!r} has no finite values; filled with 0.0"
        log.warning(msg)
        warnings.warn(msg, DataWarning, stacklevel=2)
    x = np.where(finite, x, fill[None, :])
    labels = None
    if raw.label_values is not None:
        labels = np.array([0 if v == benign_label else 1 for v in raw.label_values])
    return CleanDataset(x, names, labels)


def fit_standardize(ds: CleanDataset) -> tuple[CleanDataset, ScalerParams]:
    if ds.n_rows < 1:
        raise DataError("need at least one row to fit a scaler")
    x = ds.features
    means = x.mean(axis=0)
    # shifting by the first row first keeps constant columns at exactly zero spread
    stds = (x - x[:1]).std(axis=0)
    params = ScalerParams(means, stds, ds.feature_names)
    return apply_standardize(ds, params), params


def apply_standardize(ds: CleanDataset, params: ScalerParams) -> CleanDataset:
    if params.feature_names and tuple(params.feature_names) != ds.feature_names:
        fitted, given = list(params.feature_names), list(ds.feature_names)
        bad = sorted(set(fitted) ^ set(given))
        if not bad:
            bad = [f"{a}!={b}" for a, b in zip(fitted, given) if a != b]
        raise DataError(f"feature names do not match scaler: {bad}")
    if len(params.means) != ds.n_features:
        raise DataError(
            f"scaler fit on {len(params.means)} features, dataset has {ds.n_features}")
    std = params.stds
    safe = np.where(std > 0, std, 1.0)
    z = np.where(std > 0, (ds.features - params.means) / safe, 0.0)
    return replace(ds, features=z, scaler=params)


def invert_standardize(z: np.ndarray, params: ScalerParams) -> np.ndarray:
    return np.asarray(z) * params.stds + params.means


def split_indices(n_rows: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n_rows < 2:
        raise DataError("need at least two rows to split")
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie in (0, 1)")
    # rounding guards against 0.67 * 150000 = 100500.00000000001 style products
    n_train = math.floor(round(train_fraction * n_rows, 9))
    n_train = min(max(n_train, 1), n_rows - 1)
    perm = np.random.default_rng(seed).permutation(n_rows)
    return perm[:n_train], perm[n_train:]


def split(ds: CleanDataset, train_fraction: float = 0.67, seed: int = 0
          ) -> tuple[CleanDataset, CleanDataset]:
    """Shuffle-then-cut split; the train part holds floor(fraction * n) rows."""
    tr, va = split_indices(ds.n_rows, train_fraction, seed)
    return ds.take(tr), ds.take(va)


def select_columns(ds: CleanDataset, names: Sequence[str]) -> CleanDataset:
    names = list(names)
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DataError(f"duplicate column names requested: {dupes}")
    index = {n: i for i, n in enumerate(ds.feature_names)}
    unknown = [n for n in names if n not in index]
    if unknown:
        raise DataError(f"unknown column names: {unknown}")
    cols = [index[n] for n in names]
    scaler = None
    if ds.scaler is not None:
        scaler = ScalerParams(ds.scaler.means[cols], ds.scaler.stds[cols], tuple(names))
    informative = None
    if ds.informative is not None:
        pos = {c: k for k, c in enumerate(cols)}
        informative = tuple(sorted(pos[i] for i in ds.informative if i in pos))
    return CleanDataset(ds.features[:, cols], names, ds.labels, scaler, informative)


def synth_generate(n_benign: int, n_attack: int, n_features: int, n_informative: int,
                   shift: float, seed: int) -> CleanDataset:
    """Planted-anomaly surrogate for flow data.

    Benign rows come from a low-rank factor model (correlated columns) with
    per-column scale and offset. Attack rows use the same generator, except the
    `n_informative` planted columns are redrawn independently of the factors
    and moved by `shift` column standard deviations. With ``shift == 0`` the
    attack rows are drawn from the benign distribution unchanged. Rows are
    ordered benign first, then attack.
    """
    if not 0 < n_informative <= n_features:
        raise DataError("need 0 < n_informative <= n_features")
    rng = np.random.default_rng(seed)
    d = n_features
    rank = max(2, d // 5)
    loadings = rng.normal(size=(d, rank))
    noise = 0.5
    scale = np.exp(rng.normal(0.0, 1.0, size=d))
    offset = rng.normal(0.0, 5.0, size=d)
    col_std = scale * np.sqrt((loadings ** 2).sum(axis=1) + noise ** 2)
    informative = np.sort(rng.permutation(d)[:n_informative])

    def draw(n):
        z = rng.normal(size=(n, rank))
        e = rng.normal(size=(n, d))
        return (z @ loadings.T + noise * e) * scale + offset

    benign = draw(n_benign)
    attack = draw(n_attack)
    if shift != 0.0 and n_attack > 0:
        fresh = rng.normal(size=(n_attack, n_informative))
        attack[:, informative] = offset[informative] + col_std[informative] * (shift + fresh)
    x = np.vstack([benign, attack])
    labels = np.concatenate([np.zeros(n_benign, int), np.ones(n_attack, int)])
    width = len(str(d - 1))
    names = [f"f{i:0{width}d}" for i in range(d)]
    return CleanDataset(x, names, labels, informative=tuple(int(i) for i in informative))


def save_dataset(ds: CleanDataset, path: str | Path) -> Path:
    """Write `ds` as CSV plus a ``<path>.meta.json`` sidecar. Returns the sidecar path."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(ds.feature_names)
        if ds.labels is not None:
            header.append(LABEL_NAME)
        w.writerow(header)
        for i, row in enumerate(ds.features):
            cells = [repr(float(v)) for v in row]
            if ds.labels is not None:
                cells.append(str(int(ds.labels[i])))
            w.writerow(cells)
    meta = {
        "format": 1,
        "feature_names": list(ds.feature_names),
        "has_labels": ds.labels is not None,
        "scaler": None if ds.scaler is None else ds.scaler.to_dict(),
        "informative": None if ds.informative is None else list(ds.informative),
    }
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return side


def load_dataset(path: str | Path) -> CleanDataset:
    path = Path(path)
    side = path.with_name(path.name + ".meta.json")
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    has_labels = meta.get("has_labels")
    raw = load_csv(path, LABEL_NAME if has_labels else None)
    ds = clean(raw, benign_label="0")
    scaler = meta.get("scaler")
    return replace(ds, scaler=None if scaler is None else ScalerParams.from_dict(scaler),
                   informative=None if meta.get("informative") is None
                   else tuple(meta["informative"]))
