"""Rank-correlation evaluation and report aggregation.

All computations here are read-only; datasets can be evaluated in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateInputError, InvalidInputError
from .labelmap import LabelMapping, classify, encode


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they cover."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(predictions, golds) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks.

    Raises rather than returning 0 for constant inputs, since a silent zero
    would corrupt multi-dataset averages.
    """
    p = np.asarray(predictions, dtype=float)
    g = np.asarray(golds, dtype=float)
    if p.shape != g.shape or p.ndim != 1:
        raise InvalidInputError(f"length mismatch: {p.shape} vs {g.shape}")
    if p.size < 2:
        raise InvalidInputError("need at least 2 observations")
    if not (np.isfinite(p).all() and np.isfinite(g).all()):
        raise InvalidInputError("rank correlation needs finite inputs")
    if np.all(p == p[0]) or np.all(g == g[0]):
        raise DegenerateInputError("rank correlation undefined for constant input")
    rp = average_ranks(p) - (p.size + 1) / 2.0
    rg = average_ranks(g) - (g.size + 1) / 2.0
    r = float(rp @ rg / np.sqrt((rp @ rp) * (rg @ rg)))
    return min(1.0, max(-1.0, r))  # rounding may leak an ulp past +-1


def cosine(u, v) -> float:
    """cos angle between two nonzero vectors; scale-invariant."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise InvalidInputError("cosine undefined for a zero vector")
    return float(u @ v / (nu * nv))


@dataclass(frozen=True)
class DatasetReport:
    name: str
    spearman: float
    accuracy: float | None = None
    n_pairs: int = 0


@dataclass(frozen=True)
class EvalReport:
    """Per-dataset Spearman scores (plus rounding accuracy where categorical)
    and their arithmetic mean."""

    per_dataset: tuple[DatasetReport, ...]
    average: float

    def to_json_dict(self) -> dict:
        return {
            "datasets": [
                {
                    "name": r.name,
                    "spearman": r.spearman,
                    "accuracy": r.accuracy,
                    "n_pairs": r.n_pairs,
                }
                for r in self.per_dataset
            ],
            "average": self.average,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        rows = tuple(
            DatasetReport(r["name"], r["spearman"], r["accuracy"], r["n_pairs"])
            for r in doc["datasets"]
        )
        return cls(rows, doc["average"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def format_table(self) -> str:
        """Datasets as columns with the average last, one metric per row."""
        names = [r.name for r in self.per_dataset] + ["Avg."]
        widths = [max(len(n), 8) for n in names]
        label_w = max(len("spearman"), len("accuracy"))

        def row(label, values):
            cells = [
                f"{v:>{w}.4f}" if v is not None else f"{'-':>{w}}"
                for v, w in zip(values, widths)
            ]
            return f"{label:<{label_w}}  " + "  ".join(cells)

        header = f"{'':<{label_w}}  " + "  ".join(
            f"{n:>{w}}" for n, w in zip(names, widths)
        )
        lines = [header, row("spearman", [r.spearman for r in self.per_dataset]
                             + [self.average])]
        if any(r.accuracy is not None for r in self.per_dataset):
            lines.append(row("accuracy", [r.accuracy for r in self.per_dataset]
                             + [None]))
        return "\n".join(lines)


def predictions_for(model, dataset: Dataset, use_cosine: bool = False) -> list[float]:
    """Raw model scores for every pair; cosine(u, v) for embedding-only eval."""
    preds = []
    for pair in dataset.pairs:
        if use_cosine:
            preds.append(cosine(model.embed(pair.s1), model.embed(pair.s2)))
        else:
            preds.append(model.predict(pair))
    return preds


def accuracy(model, dataset: Dataset, mapping: LabelMapping) -> float:
    """Fraction of pairs whose rounded prediction hits the gold category."""
    if not dataset.is_categorical:
        raise InvalidInputError(f"{dataset.name} has no categorical labels")
    if len(dataset) == 0:
        raise InvalidInputError("accuracy undefined on an empty dataset")
    for cat in dataset.categories:
        if cat not in mapping.categories:
            raise InvalidInputError(f"category {cat!r} missing from the mapping")
    hits = sum(
        classify(mapping, model.predict(pair)) == pair.label for pair in dataset.pairs
    )
    return hits / len(dataset)


def evaluate(
    model,
    datasets,
    mapping: LabelMapping | None = None,
    use_cosine: bool = False,
) -> EvalReport:
    """Score every dataset and average the Spearman coefficients.

    Categorical datasets are ranked against their mapped node values and also
    get a rounding-classification accuracy.
    """
    datasets = list(datasets)
    if not datasets:
        raise InvalidInputError("no datasets to evaluate")
    rows = []
    for ds in datasets:
        active = mapping if mapping is not None else model.mapping
        if ds.is_categorical:
            if active is None:
                raise InvalidInputError(f"{ds.name} needs a label mapping")
            golds = [encode(active, pair.label) for pair in ds.pairs]
        else:
            golds = [pair.score for pair in ds.pairs]
        preds = predictions_for(model, ds, use_cosine)
        rho = spearman(preds, golds)
        acc = accuracy(model, ds, active) if ds.is_categorical else None
        rows.append(DatasetReport(ds.name, rho, acc, len(ds)))
    average = sum(r.spearman for r in rows) / len(rows)
    return EvalReport(tuple(rows), average)
