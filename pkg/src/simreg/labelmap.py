"""Ordered categories mapped to evenly spaced numeric nodes.

A mapping assigns each category (listed in ascending similarity) the value
``start + i * interval``.  Continuous predictions are converted back to
categories by nearest-node rounding; a prediction is classified correctly
whenever it lands within half an interval of the true node.

Instances are immutable and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidInputError

SPACING_TOL = 1e-12


@dataclass(frozen=True)
class LabelMapping:
    """Bidirectional map between category names and numeric nodes."""

    categories: tuple[str, ...]
    nodes: tuple[float, ...]
    d: float = field(init=False)

    def __post_init__(self):
        if len(self.categories) < 2:
            raise InvalidInputError("a mapping needs at least 2 categories")
        if len(self.categories) != len(self.nodes):
            raise InvalidInputError("categories and nodes must align")
        if len(set(self.categories)) != len(self.categories):
            raise InvalidInputError("category names must be unique")
        gaps = [b - a for a, b in zip(self.nodes, self.nodes[1:])]
        if gaps[0] <= 0:
            raise InvalidInputError("nodes must be strictly increasing")
        if any(abs(g - gaps[0]) > SPACING_TOL for g in gaps):
            raise InvalidInputError("nodes must be evenly spaced")
        object.__setattr__(self, "d", gaps[0])

    @property
    def start(self) -> float:
        return self.nodes[0]

    @property
    def low(self) -> float:
        return self.nodes[0]

    @property
    def high(self) -> float:
        return self.nodes[-1]

    def index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise InvalidInputError(f"unknown category: {category!r}") from None

    def to_json_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "start": self.nodes[0],
            "interval": self.d,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LabelMapping":
        return build_mapping(doc["categories"], doc["start"], doc["interval"])


def build_mapping(categories, start: float, d: float) -> LabelMapping:
    """Create a mapping with nodes ``start + i*d``, ascending similarity order."""
    if d <= 0:
        raise InvalidInputError(f"interval must be positive, got {d}")
    cats = tuple(categories)
    nodes = tuple(start + i * d for i in range(len(cats)))
    return LabelMapping(cats, nodes)


def encode(mapping: LabelMapping, category: str) -> float:
    """Numeric node for a category name."""
    return mapping.nodes[mapping.index(category)]


def decode(mapping: LabelMapping, node_index: int) -> str:
    """Category name at a node index (exact inverse of encode)."""
    if not 0 <= node_index < len(mapping.categories):
        raise InvalidInputError(f"node index {node_index} out of range")
    return mapping.categories[node_index]


def classify(mapping: LabelMapping, prediction: float) -> str:
    """Category whose node is nearest to the prediction.

    Exact midpoints round to the higher node, which keeps the classifier a
    non-decreasing step function.  Predictions beyond the terminal nodes map
    to the nearest terminal category.
    """
    if not math.isfinite(prediction):
        raise InvalidInputError(f"prediction must be finite, got {prediction}")
    idx = math.floor((prediction - mapping.start) / mapping.d + 0.5)
    idx = min(max(idx, 0), len(mapping.categories) - 1)
    return mapping.categories[idx]


def correctness_radius(mapping: LabelMapping) -> float:
    """Largest |prediction - node| that still classifies interior nodes correctly."""
    return mapping.d / 2.0
