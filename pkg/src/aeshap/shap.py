"""KernelSHAP for the reconstruction-error game of an autoencoder.

The game: for a coalition ``S`` of known features, every background point
``b_j`` has its unknown features kept and the known ones overwritten by the
explained instance ``x``; the game value is the background-weighted mean
reconstruction error of those hybrids, divided by the feature count ``d``.

Shapley values are recovered from a kernel-weighted least-squares fit of
coalition values on membership indicators, with the empty and full
coalitions imposed as equality constraints by eliminating the last
coefficient.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autoencoder import AEModel, reconstruction_errors
from .data import CleanDataset
from .kmeans import BackgroundSet

MAX_EXACT_D = 20
JITTER = 1e-10
# hybrid rows evaluated per forward pass
CHUNK_ROWS = 65536

Game = Callable[[np.ndarray], np.ndarray]


class CoalitionDeficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class ExplainerConfig:
    mode: str = "auto"  # exact | sampled | auto (exact while d <= 20)
    sample_budget: int | None = None  # default 2*d + 2048
    kmeans_k: int = 10
    seed: int = 0
    value_scale: str = "per_dimension"

    def __post_init__(self):
        if self.mode not in ("exact", "sampled", "auto"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.value_scale != "per_dimension":
            raise ValueError(f"unknown value_scale {self.value_scale!r}")
        if self.sample_budget is not None and self.sample_budget < 4:
            raise ValueError("sample_budget must be >= 4")
        if self.kmeans_k < 1:
            raise ValueError("kmeans_k must be positive")

    def resolved_mode(self, d: int) -> str:
        if self.mode == "auto":
            return "exact" if d <= MAX_EXACT_D else "sampled"
        return self.mode

    def budget(self, d: int) -> int:
        return self.sample_budget if self.sample_budget is not None else 2 * d + 2048


@dataclass(frozen=True)
class ShapExplanation:
    phi: np.ndarray
    base_value: float
    full_value: float
    instance_index: int = 0
    feature_names: tuple[str, ...] | None = None

    @property
    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + float(self.phi.sum()) - self.full_value)


def shapley_kernel_weight(M: int, s: int) -> float:
    """Shapley kernel (M-1) / (C(M,s) s (M-s)); ``inf`` marks the s=0 and s=M constraints."""
    if M < 2 or not 0 <= s <= M:
        raise ValueError(f"need M >= 2 and 0 <= s <= M, got M={M}, s={s}")
    if s in (0, M):
        return math.inf
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def enumerate_coalitions(d: int) -> np.ndarray:
    """All ``2**d`` masks, row ``r`` holding the bits of integer ``r``."""
    if d > MAX_EXACT_D:
        raise ValueError(
            f"d={d} gives 2**{d} coalitions; exact enumeration is capped at d={MAX_EXACT_D}, "
            "use sampled mode")
    ints = np.arange(2 ** d, dtype=np.int64)
    return ((ints[:, None] >> np.arange(d)) & 1).astype(bool)


def sample_coalitions(d: int, budget: int, seed: int) -> np.ndarray:
    """Seeded coalition sample of (at most) `budget` masks.

    Row 0 is the empty coalition and row 1 the full one. The remaining rows
    are complement pairs whose size is drawn with probability proportional to
    the total kernel mass of that size, members uniform within the size.
    Duplicates are kept. If `budget` covers every mask, the full enumeration
    is returned instead.
    """
    if budget < 4:
        raise ValueError("budget must be >= 4")
    if d <= MAX_EXACT_D and budget >= 2 ** d:
        return enumerate_coalitions(d)
    rng = np.random.default_rng(seed)
    sizes = np.arange(1, d)
    mass = (d - 1) / (sizes * (d - sizes))
    n_pairs = (budget - 2) // 2
    drawn = rng.choice(sizes, size=n_pairs, p=mass / mass.sum())
    ranks = rng.random((n_pairs, d)).argsort(axis=1).argsort(axis=1)
    masks = ranks < drawn[:, None]
    out = np.empty((2 + 2 * n_pairs, d), dtype=bool)
    out[0] = False
    out[1] = True
    out[2::2] = masks
    out[3::2] = ~masks
    return out


def merge_coalitions(masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse duplicate masks; returns unique masks and occurrence counts."""
    uniq, counts = np.unique(np.asarray(masks, dtype=bool), axis=0, return_counts=True)
    return uniq, counts.astype(np.float64)


def coalition_values(model: AEModel, x: np.ndarray, masks: np.ndarray,
                     bg: BackgroundSet) -> np.ndarray:
    """Game value of every row of `masks` for instance `x`."""
    x = np.asarray(x, dtype=np.float64)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    d = x.shape[0]
    if model.input_dim != d or bg.width != d or masks.shape[1] != d:
        raise ValueError(
            f"dimension mismatch: x={d}, model={model.input_dim}, "
            f"background={bg.width}, coalitions={masks.shape[1]}")
    out = np.empty(masks.shape[0])
    full = masks.all(axis=1)
    out[full] = reconstruction_errors(model, x)[0] / d
    rest = np.flatnonzero(~full)
    step = max(1, CHUNK_ROWS // bg.k)
    for start in range(0, rest.size, step):
        sel = rest[start:start + step]
        hyb = np.where(masks[sel, None, :], x[None, None, :], bg.points[None, :, :])
        err = reconstruction_errors(model, hyb.reshape(-1, d)).reshape(sel.size, bg.k)
        out[sel] = err @ bg.weights / d
    return out


def value_function(model: AEModel, x: np.ndarray, S, bg: BackgroundSet) -> float:
    """Game value of one coalition `S` (boolean mask or iterable of indices)."""
    d = np.asarray(x).shape[0]
    S = np.asarray(S)
    if S.dtype != bool:
        idx = S.astype(int)
        S = np.zeros(d, dtype=bool)
        S[idx] = True
    return float(coalition_values(model, x, S[None, :], bg)[0])


def solve_kernel_regression(masks: np.ndarray, values: np.ndarray, weights: np.ndarray,
                            base: float, full: float) -> np.ndarray:
    """Constrained kernel least squares; rows for the empty/full masks are ignored."""
    masks = np.asarray(masks, dtype=bool)
    d = masks.shape[1]
    delta = full - base
    if d == 1:
        return np.array([delta])
    size = masks.sum(axis=1)
    keep = (size > 0) & (size < d)
    z = masks[keep].astype(np.float64)
    w = np.asarray(weights, dtype=np.float64)[keep]
    if z.shape[0] < d - 1:
        raise CoalitionDeficiencyError(
            f"{z.shape[0]} distinct non-trivial coalitions for {d} features; "
            f"need at least {d - 1} (increase the sample budget)")
    y = np.asarray(values, dtype=np.float64)[keep] - base - z[:, -1] * delta
    X = z[:, :-1] - z[:, -1:]
    Xw = X * w[:, None]
    A = X.T @ Xw
    b = Xw.T @ y
    try:
        beta = np.linalg.solve(A, b)
        if not np.all(np.isfinite(beta)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        try:
            beta = np.linalg.solve(A + JITTER * np.eye(d - 1), b)
        except np.linalg.LinAlgError as e:
            raise CoalitionDeficiencyError(
                f"singular kernel regression with {z.shape[0]} coalitions for {d} features "
                "(increase the sample budget)") from e
    return np.append(beta, delta - beta.sum())


def kernel_shap(game: Game, d: int, mode: str = "exact", budget: int | None = None,
                seed: int = 0) -> tuple[np.ndarray, float, float]:
    """Shapley values of an arbitrary vectorized game ``masks -> values``.

    Returns ``(phi, value_of_empty, value_of_full)``.
    """
    if mode == "exact" or (budget is not None and d <= MAX_EXACT_D and budget >= 2 ** d):
        masks = enumerate_coalitions(d)
        size = masks.sum(axis=1)
        weights = np.array([shapley_kernel_weight(d, s) if 0 < s < d else 0.0
                            for s in size]) if d >= 2 else np.zeros(len(masks))
    elif mode == "sampled":
        masks, weights = merge_coalitions(sample_coalitions(d, budget or 2 * d + 2048, seed))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ends = np.zeros((2, d), dtype=bool)
    ends[1] = True
    base, full = (float(v) for v in game(ends))
    values = game(masks)
    phi = solve_kernel_regression(masks, values, weights, base, full)
    return phi, base, full


def explain_instance(model: AEModel, x: np.ndarray, bg: BackgroundSet,
                     cfg: ExplainerConfig | None = None, instance_index: int = 0,
                     feature_names: Sequence[str] | None = None,
                     seed: int | None = None) -> ShapExplanation:
    cfg = cfg or ExplainerConfig()
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    mode = cfg.resolved_mode(d)
    if mode == "exact" and d > MAX_EXACT_D:
        raise ValueError(f"exact mode supports d <= {MAX_EXACT_D}, got d={d}; use sampled mode")
    phi, base, full = kernel_shap(lambda m: coalition_values(model, x, m, bg), d, mode,
                                  cfg.budget(d), cfg.seed if seed is None else seed)
    names = feature_names if feature_names is not None else model.feature_names
    return ShapExplanation(phi, base, full, instance_index,
                           None if names is None else tuple(names))


def explain_batch(model: AEModel, instances: CleanDataset | np.ndarray, bg: BackgroundSet,
                  cfg: ExplainerConfig | None = None, row_ids: Sequence[int] | None = None,
                  n_jobs: int = 1) -> list[ShapExplanation]:
    """Explain every row. Row ``i`` is seeded with ``cfg.seed ^ row_ids[i]``
    (row ids default to positions), so results do not depend on `n_jobs`."""
    cfg = cfg or ExplainerConfig()
    if isinstance(instances, CleanDataset):
        x, names = instances.features, instances.feature_names
    else:
        x, names = np.atleast_2d(np.asarray(instances, dtype=np.float64)), None
    ids = list(range(x.shape[0])) if row_ids is None else [int(r) for r in row_ids]
    if len(ids) != x.shape[0]:
        raise ValueError("row_ids must have one entry per row")

    def one(i: int) -> ShapExplanation:
        return explain_instance(model, x[i], bg, cfg, ids[i], names, cfg.seed ^ ids[i])

    if n_jobs == 1:
        return [one(i) for i in range(x.shape[0])]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(one, range(x.shape[0])))


def brute_force_shapley(game: Game, d: int) -> np.ndarray:
    """Classical Shapley formula over all subsets; a verification oracle."""
    cache: dict[frozenset, float] = {}

    def v(subset: frozenset) -> float:
        if subset not in cache:
            mask = np.zeros((1, d), dtype=bool)
            mask[0, list(subset)] = True
            cache[subset] = float(game(mask)[0])
        return cache[subset]

    phi = np.zeros(d)
    fact = math.factorial
    for i in range(d):
        others = [j for j in range(d) if j != i]
        for r in range(d):
            coef = fact(r) * fact(d - r - 1) / fact(d)
            for combo in itertools.combinations(others, r):
                s = frozenset(combo)
                phi[i] += coef * (v(s | {i}) - v(s))
    return phi


EXPLANATION_COLUMNS = ("instance", "feature_index", "feature", "phi", "base_value", "full_value")


def write_explanations(explanations: Sequence[ShapExplanation], path: str | Path) -> None:
    """One row per (instance, feature), ordered by instance then feature index."""
    rows = sorted(explanations, key=lambda e: e.instance_index)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(EXPLANATION_COLUMNS)
        for e in rows:
            names = e.feature_names or tuple(f"x{i}" for i in range(len(e.phi)))
            for j, p in enumerate(e.phi):
                w.writerow([e.instance_index, j, names[j], repr(float(p)),
                            repr(float(e.base_value)), repr(float(e.full_value))])


def read_explanations(path: str | Path) -> list[ShapExplanation]:
    groups: dict[int, list[list[str]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh, delimiter="\t")
        header = next(r)
        if tuple(header) != EXPLANATION_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in r:
            groups.setdefault(int(row[0]), []).append(row)
    out = []
    for idx in sorted(groups):
        rows = sorted(groups[idx], key=lambda row: int(row[1]))
        out.append(ShapExplanation(np.array([float(row[3]) for row in rows]),
                                   float(rows[0][4]), float(rows[0][5]), idx,
                                   tuple(row[2] for row in rows)))
    return out
