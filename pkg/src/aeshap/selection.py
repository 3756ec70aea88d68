"""Global feature ranking from per-instance Shapley values."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .shap import ShapExplanation


@dataclass(frozen=True)
class RankEntry:
    name: str
    importance: float
    rank: int
    index: int


@dataclass(frozen=True)
class FeatureRanking:
    entries: tuple[RankEntry, ...]
    aggregation: str = "mean_abs"
    n_instances: int = 0

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def importances(self) -> np.ndarray:
        return np.array([e.importance for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def rank_importances(importance: Sequence[float], names: Sequence[str],
                     n_instances: int = 0) -> FeatureRanking:
    imp = np.asarray(importance, dtype=np.float64)
    # lexsort: last key is primary -> descending importance, then ascending index
    order = np.lexsort((np.arange(imp.size), -imp))
    entries = tuple(RankEntry(names[i], float(imp[i]), r + 1, int(i))
                    for r, i in enumerate(order))
    return FeatureRanking(entries, "mean_abs", n_instances)


def aggregate(explanations: Sequence[ShapExplanation]) -> FeatureRanking:
    """Mean absolute Shapley value per feature, highest first."""
    if not explanations:
        raise ValueError("need at least one explanation")
    first = explanations[0]
    d = len(first.phi)
    names = first.feature_names or tuple(f"x{i}" for i in range(d))
    for e in explanations[1:]:
        other = e.feature_names or tuple(f"x{i}" for i in range(len(e.phi)))
        if tuple(other) != tuple(names):
            raise ValueError("explanations do not share the same feature names")
    phi = np.stack([e.phi for e in explanations])
    # sorting makes the mean independent of list order to the last bit
    imp = np.sort(np.abs(phi), axis=0).mean(axis=0)
    return rank_importances(imp, names, len(explanations))


def top_k(ranking: FeatureRanking, k: int) -> list[str]:
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k must be in [1, {len(ranking)}], got {k}")
    return ranking.names[:k]


def write_ranking(ranking: FeatureRanking, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["name", "importance"])
        for e in ranking.entries:
            w.writerow([e.name, repr(e.importance)])


def read_ranking(path: str | Path) -> FeatureRanking:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh, delimiter="\t")
        header = next(r)
        if header != ["name", "importance"]:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [row for row in r if row]
    # file order is rank order; original indices are not stored
    entries = tuple(RankEntry(name, float(imp), i + 1, i) for i, (name, imp) in enumerate(rows))
    return FeatureRanking(entries)
