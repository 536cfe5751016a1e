"""Corpus ingestion, train/test deduplication, rescaling and merging.

The on-disk format is UTF-8 TSV with no header: ``score<TAB>s1<TAB>s2`` for
continuous corpora or ``label<TAB>s1<TAB>s2`` for categorical ones.  Loaded
datasets are immutable, so loading and filtering different files can safely
run in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataFormatError, InvalidInputError
from .labelmap import LabelMapping

NLI_CATEGORIES = ("contradiction", "neutral", "entailment")
_NLI_VALUES = {"contradiction": 0.0, "neutral": 1.0, "entailment": 2.0}


@dataclass(frozen=True)
class SentencePair:
    """Two sentences plus either a continuous score or a categorical label."""

    s1: str
    s2: str
    score: float | None = None
    label: str | None = None

    def __post_init__(self):
        if (self.score is None) == (self.label is None):
            raise InvalidInputError("exactly one of score/label must be set")


@dataclass(frozen=True)
class Dataset:
    """Named collection of pairs with a declared score range or category set."""

    name: str
    pairs: tuple[SentencePair, ...]
    score_range: tuple[float, float] | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.score_range is not None and self.categories is not None:
            raise InvalidInputError("declare a score range or categories, not both")
        if self.pairs and self.score_range is None and self.categories is None:
            raise InvalidInputError("nonempty dataset needs a range or categories")
        for pair in self.pairs:
            if self.score_range is not None:
                low, high = self.score_range
                if pair.score is None or not low <= pair.score <= high:
                    raise InvalidInputError(
                        f"{self.name}: score {pair.score} outside [{low}, {high}]"
                    )
            elif self.categories is not None and pair.label not in self.categories:
                raise InvalidInputError(f"{self.name}: unknown label {pair.label!r}")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def is_categorical(self) -> bool:
        return self.categories is not None


@dataclass(frozen=True)
class RemovedPair:
    """Audit record: a dropped training pair and the test set that matched it."""

    pair: SentencePair
    test_name: str


def load_tsv(
    path,
    name: str | None = None,
    score_range: tuple[float, float] = (0.0, 5.0),
    categories: tuple[str, ...] | None = None,
) -> Dataset:
    """Parse a TSV corpus; any malformed line rejects the whole file.

    With `categories` the first field is read as a label, otherwise as a
    float score that must fall inside `score_range`.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such data file: {path}")
    name = name if name is not None else path.stem
    pairs = []
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path} is not valid UTF-8: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split("\t")
        if len(fields) < 3:
            raise DataFormatError(
                f"{path}:{lineno}: expected at least 3 tab-separated fields, "
                f"got {len(fields)}"
            )
        first, s1, s2 = fields[0], fields[1], fields[2]
        if categories is not None:
            if first not in categories:
                raise DataFormatError(f"{path}:{lineno}: unknown label {first!r}")
            pairs.append(SentencePair(s1, s2, label=first))
        else:
            try:
                score = float(first)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: score field {first!r} is not a number"
                ) from None
            low, high = score_range
            if not low <= score <= high:
                raise DataFormatError(
                    f"{path}:{lineno}: score {score} outside [{low}, {high}]"
                )
            pairs.append(SentencePair(s1, s2, score=score))
    if categories is not None:
        return Dataset(name, tuple(pairs), categories=tuple(categories))
    return Dataset(name, tuple(pairs), score_range=score_range)


def format_score(score: float) -> str:
    """Shortest exact decimal form, shared by every writer in the package."""
    return repr(float(score))


def save_tsv(dataset: Dataset, path) -> None:
    """Write a dataset back out in the canonical TSV format."""
    lines = []
    for pair in dataset.pairs:
        first = pair.label if pair.label is not None else format_score(pair.score)
        lines.append(f"{first}\t{pair.s1}\t{pair.s2}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def _dedup_key(s1: str, s2: str) -> tuple[str, str]:
    # exact string equality after trimming edge whitespace; no case folding
    return s1.strip(), s2.strip()


def dedup_filter(train: Dataset, tests) -> tuple[Dataset, list[RemovedPair]]:
    """Drop every training pair whose sentences appear in any test set.

    A pair matches in either orientation (s1/s2 same or swapped) and scores
    are ignored entirely.  Test sets are never modified; duplicates within
    the training set itself are kept.  Returns the filtered dataset plus an
    audit list naming the test set each removed pair matched.
    """
    seen: dict[tuple[str, str], str] = {}
    for test in tests:
        for pair in test.pairs:
            seen.setdefault(_dedup_key(pair.s1, pair.s2), test.name)
    kept, removed = [], []
    for pair in train.pairs:
        key = _dedup_key(pair.s1, pair.s2)
        hit = seen.get(key)
        if hit is None:
            hit = seen.get((key[1], key[0]))
        if hit is None:
            kept.append(pair)
        else:
            removed.append(RemovedPair(pair, hit))
    filtered = Dataset(train.name, tuple(kept), train.score_range, train.categories)
    return filtered, removed


def write_removal_audit(removed, path) -> None:
    """One JSON line per removed pair, naming the matching test dataset."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in removed:
            pair = record.pair
            doc = {"s1": pair.s1, "s2": pair.s2, "matched_test": record.test_name}
            if pair.score is not None:
                doc["score"] = pair.score
            else:
                doc["label"] = pair.label
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def rescale_sick(score: float) -> float:
    """Affine rescale of a [1, 5] score onto [0, 5]: 5*(score - 1)/4."""
    if not 1.0 <= score <= 5.0:
        raise InvalidInputError(f"score {score} outside [1, 5]")
    return 5.0 * (score - 1.0) / 4.0


def rescale_sick_dataset(dataset: Dataset) -> Dataset:
    """Apply the [1, 5] -> [0, 5] rescale to every pair of a dataset."""
    if dataset.is_categorical:
        raise InvalidInputError("cannot rescale a categorical dataset")
    pairs = tuple(
        SentencePair(p.s1, p.s2, score=rescale_sick(p.score)) for p in dataset.pairs
    )
    return Dataset(dataset.name, pairs, score_range=(0.0, 5.0))


def merge(datasets) -> Dataset:
    """Concatenate datasets in order; they must agree on the score range."""
    datasets = list(datasets)
    if not datasets:
        return Dataset("merged", ())
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.score_range != first.score_range or ds.categories != first.categories:
            raise InvalidInputError(
                f"cannot merge {ds.name}: range/categories differ from {first.name}"
            )
    pairs = tuple(pair for ds in datasets for pair in ds.pairs)
    name = "+".join(ds.name for ds in datasets)
    return Dataset(name, pairs, first.score_range, first.categories)


def map_nli(label: str) -> float:
    """contradiction -> 0.0, neutral -> 1.0, entailment -> 2.0."""
    try:
        return _NLI_VALUES[label]
    except KeyError:
        raise InvalidInputError(f"unknown NLI label: {label!r}") from None


def map_labels(dataset: Dataset, mapping: LabelMapping) -> Dataset:
    """Convert a categorical dataset to numeric targets via a label mapping."""
    if not dataset.is_categorical:
        raise InvalidInputError(f"{dataset.name} is not categorical")
    pairs = []
    for pair in dataset.pairs:
        idx = mapping.index(pair.label)
        pairs.append(SentencePair(pair.s1, pair.s2, score=mapping.nodes[idx]))
    return Dataset(dataset.name, tuple(pairs), score_range=(mapping.low, mapping.high))


def extract_positive_pairs(dataset: Dataset, threshold: float = 4.0):
    """(s1, s2) of every pair scoring at or above the threshold (inclusive)."""
    if dataset.is_categorical:
        raise InvalidInputError("positive-pair extraction needs continuous scores")
    return [(p.s1, p.s2) for p in dataset.pairs if p.score >= threshold]


def positive_pairs_dataset(dataset: Dataset, threshold: float = 4.0) -> Dataset:
    """Dataset view of extract_positive_pairs, for the contrastive baseline."""
    if dataset.is_categorical:
        raise InvalidInputError("positive-pair extraction needs continuous scores")
    pairs = tuple(p for p in dataset.pairs if p.score >= threshold)
    return Dataset(f"{dataset.name}-positives", pairs, dataset.score_range)
