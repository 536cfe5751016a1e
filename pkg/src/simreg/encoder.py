"""Toy Siamese encoder: embedding table, mean pooling, linear head.

Both sentences of a pair run through the same embedding table (one shared
parameter set), are mean-pooled into vectors u and v, combined into a feature
vector per the configured mode, and fed to a linear head: a single output for
regression or K outputs for the classification baseline.  The backward pass
is derived by hand and returns exact gradients for every parameter.

Parameter updates are single-writer; concurrent forward passes are safe only
against read-only parameter snapshots.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import losses
from .data import SentencePair
from .errors import CheckpointError, InvalidInputError
from .labelmap import LabelMapping
from .losses import LossKind, LossSpec

PAD_TOKEN = "<pad>"
OOV_TOKEN = "<oov>"

_WORD_RE = re.compile(r"\w+")

CHECKPOINT_FORMAT = "simreg-checkpoint"
CHECKPOINT_VERSION = 1


class FeatureMode(str, Enum):
    """How u and v are combined before the head."""

    UV = "uv"
    ABS_DIFF = "absdiff"
    UV_ABS_DIFF = "uv_absdiff"  # default: (u, v, |u - v|)


def feature_dim(mode: FeatureMode, dim: int) -> int:
    if mode is FeatureMode.UV:
        return 2 * dim
    if mode is FeatureMode.ABS_DIFF:
        return dim
    return 3 * dim


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-id map with dense ids; <pad> and <oov> are always present."""

    tokens: tuple[str, ...]
    _ids: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = {t: i for i, t in enumerate(self.tokens)}
        if len(ids) != len(self.tokens):
            raise InvalidInputError("duplicate tokens in vocabulary")
        if OOV_TOKEN not in ids:
            raise InvalidInputError(f"vocabulary is missing {OOV_TOKEN}")
        object.__setattr__(self, "_ids", ids)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def oov_id(self) -> int:
        return self._ids[OOV_TOKEN]

    @property
    def pad_id(self) -> int:
        return self._ids.get(PAD_TOKEN, self.oov_id)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, self._ids[OOV_TOKEN])


def split_tokens(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation boundaries."""
    return _WORD_RE.findall(text.lower())


def build_vocab(texts) -> Vocabulary:
    """Vocabulary from a corpus, most frequent tokens first (ties alphabetical)."""
    counts = Counter()
    for text in texts:
        counts.update(split_tokens(text))
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary((PAD_TOKEN, OOV_TOKEN, *ordered))


def tokenize(text: str, vocab: Vocabulary, max_tokens: int | None = None) -> list[int]:
    """Token ids for a sentence; empty input yields a single OOV token."""
    words = split_tokens(text)
    if max_tokens is not None:
        words = words[:max_tokens]
    if not words:
        return [vocab.oov_id]
    return [vocab.id_of(w) for w in words]


@dataclass
class ModelParams:
    """The complete trainable state.

    head_weights is a vector of length feature_dim for the regression head or
    a (K, feature_dim) matrix for the K-logit classification head; head_bias
    is a 0-d array (regression) or a K-vector.
    """

    embeddings: np.ndarray
    head_weights: np.ndarray
    head_bias: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=float)
        self.head_weights = np.asarray(self.head_weights, dtype=float)
        self.head_bias = np.asarray(self.head_bias, dtype=float)
        if self.embeddings.ndim != 2:
            raise InvalidInputError("embeddings must be a (vocab, dim) matrix")
        if self.head_weights.ndim == 1:
            if self.head_bias.ndim != 0:
                raise InvalidInputError("regression head needs a scalar bias")
        elif self.head_weights.ndim == 2:
            if self.head_bias.shape != (self.head_weights.shape[0],):
                raise InvalidInputError("classification head needs a K-vector bias")
        else:
            raise InvalidInputError("head_weights must be 1- or 2-dimensional")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def is_classifier(self) -> bool:
        return self.head_weights.ndim == 2

    @property
    def n_classes(self) -> int:
        return self.head_weights.shape[0] if self.is_classifier else 1

    @property
    def head_weight_count(self) -> int:
        return int(self.head_weights.size)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.embeddings.copy(), self.head_weights.copy(), self.head_bias.copy()
        )


@dataclass
class Gradients:
    """Same shapes as ModelParams."""

    embeddings: np.ndarray
    head_weights: np.ndarray
    head_bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(
            np.zeros_like(params.embeddings),
            np.zeros_like(params.head_weights),
            np.zeros_like(params.head_bias),
        )


def init_params(
    vocab_size: int,
    dim: int,
    mode: FeatureMode,
    seed: int,
    label_range: tuple[float, float] = (0.0, 5.0),
    n_classes: int | None = None,
) -> ModelParams:
    """Random initial parameters, fully determined by the seed.

    Embeddings start uniform in (-0.05, 0.05); head weights uniform with scale
    1/sqrt(feature_dim).  The regression bias starts at the midpoint of the
    label range so early predictions sit inside it instead of being clamped.
    """
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-0.05, 0.05, size=(vocab_size, dim))
    f = feature_dim(mode, dim)
    scale = f ** -0.5
    if n_classes is None:
        weights = rng.uniform(-scale, scale, size=f)
        bias = np.asarray((label_range[0] + label_range[1]) / 2.0)
    else:
        if n_classes < 2:
            raise InvalidInputError("classification head needs at least 2 classes")
        weights = rng.uniform(-scale, scale, size=(n_classes, f))
        bias = np.zeros(n_classes)
    return ModelParams(emb, weights, bias)


def embed_sentence(token_ids, params: ModelParams) -> np.ndarray:
    """Mean of the token embedding rows (order-free)."""
    if len(token_ids) == 0:
        raise InvalidInputError("cannot embed an empty token sequence")
    return params.embeddings[np.asarray(token_ids, dtype=int)].mean(axis=0)


def features(u: np.ndarray, v: np.ndarray, mode: FeatureMode) -> np.ndarray:
    """Combine the two sentence embeddings for the head."""
    if u.shape != v.shape:
        raise InvalidInputError(f"embedding shape mismatch: {u.shape} vs {v.shape}")
    if mode is FeatureMode.UV:
        return np.concatenate([u, v])
    if mode is FeatureMode.ABS_DIFF:
        return np.abs(u - v)
    return np.concatenate([u, v, np.abs(u - v)])


def _feature_grad(df: np.ndarray, u: np.ndarray, v: np.ndarray, mode: FeatureMode):
    """Split a feature-vector gradient into (du, dv).

    The |u - v| branch back-propagates sign(u - v) element-wise, with the
    standard subgradient 0 wherever u equals v.
    """
    dim = u.shape[0]
    if mode is FeatureMode.UV:
        return df[:dim], df[dim:]
    if mode is FeatureMode.ABS_DIFF:
        s = np.sign(u - v)
        return df * s, -df * s
    s = np.sign(u - v)
    return df[:dim] + df[2 * dim:] * s, df[dim:2 * dim] - df[2 * dim:] * s


@dataclass
class Model:
    """Everything needed to score a sentence pair."""

    vocab: Vocabulary
    params: ModelParams
    feature_mode: FeatureMode = FeatureMode.UV_ABS_DIFF
    mapping: LabelMapping | None = None
    max_tokens: int = 256

    def __post_init__(self):
        expected = feature_dim(self.feature_mode, self.params.dim)
        got = self.params.head_weights.shape[-1]
        if got != expected:
            raise InvalidInputError(
                f"head expects {expected} features for mode "
                f"{self.feature_mode.value}, parameters have {got}"
            )
        if len(self.vocab) != self.params.vocab_size:
            raise InvalidInputError("vocabulary and embedding table sizes differ")

    @classmethod
    def initialize(
        cls,
        vocab: Vocabulary,
        dim: int = 32,
        feature_mode: FeatureMode = FeatureMode.UV_ABS_DIFF,
        seed: int = 0,
        label_range: tuple[float, float] = (0.0, 5.0),
        mapping: LabelMapping | None = None,
        n_classes: int | None = None,
        max_tokens: int = 256,
    ) -> "Model":
        if mapping is not None:
            label_range = (mapping.low, mapping.high)
        params = init_params(len(vocab), dim, feature_mode, seed, label_range, n_classes)
        return cls(vocab, params, feature_mode, mapping, max_tokens)

    def copy(self) -> "Model":
        return Model(
            self.vocab, self.params.copy(), self.feature_mode, self.mapping,
            self.max_tokens,
        )

    def tokenize(self, text: str) -> list[int]:
        return tokenize(text, self.vocab, self.max_tokens)

    def embed(self, text: str) -> np.ndarray:
        return embed_sentence(self.tokenize(text), self.params)

    def predict(self, pair: SentencePair) -> float:
        return predict(pair, self)

    def predict_logits(self, pair: SentencePair) -> np.ndarray:
        if not self.params.is_classifier:
            raise InvalidInputError("model has a regression head, not logits")
        f = features(self.embed(pair.s1), self.embed(pair.s2), self.feature_mode)
        return self.params.head_weights @ f + self.params.head_bias


def predict(pair: SentencePair, model: Model) -> float:
    """Raw similarity score for a pair (no clamping).

    For the classification baseline this is the softmax-expected node value,
    so rank evaluation and rounding classification work for both head kinds.
    """
    p = model.params
    f = features(model.embed(pair.s1), model.embed(pair.s2), model.feature_mode)
    if not p.is_classifier:
        return float(p.head_weights @ f + p.head_bias)
    logits = p.head_weights @ f + p.head_bias
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    if model.mapping is not None:
        nodes = np.asarray(model.mapping.nodes)
    else:
        nodes = np.arange(p.n_classes, dtype=float)
    return float(probs @ nodes)


def forward_backward(
    model: Model,
    batch,
    loss_spec: LossSpec,
    clamp_range: tuple[float, float] | None = None,
) -> tuple[float, Gradients]:
    """Batch-mean loss and exact analytic gradients for all parameters.

    batch is a list of (SentencePair, target) tuples; targets are floats for
    the residual losses, class indices for cross-entropy, and ignored by the
    contrastive loss (each pair is treated as anchor/positive).  Only the
    embedding rows of tokens present in the batch receive nonzero gradients.
    """
    if not batch:
        raise InvalidInputError("batch must be nonempty")
    tokenized = [
        (model.tokenize(pair.s1), model.tokenize(pair.s2), target)
        for pair, target in batch
    ]
    return _forward_backward_ids(
        model.params, tokenized, model.feature_mode, loss_spec, clamp_range
    )


def _forward_backward_ids(params, tokenized, mode, loss_spec, clamp_range,
                          with_grads=True):
    if loss_spec.kind is LossKind.INFO_NCE:
        return _contrastive_pass(params, tokenized, loss_spec)
    if loss_spec.kind is LossKind.CROSS_ENTROPY:
        if not params.is_classifier:
            raise InvalidInputError("cross-entropy needs a classification head")
    elif params.is_classifier:
        raise InvalidInputError("residual losses need a regression head")

    grads = Gradients.zeros_like(params) if with_grads else None
    n = len(tokenized)
    total = 0.0
    for ids1, ids2, target in tokenized:
        u = embed_sentence(ids1, params)
        v = embed_sentence(ids2, params)
        f = features(u, v, mode)
        if loss_spec.kind is LossKind.CROSS_ENTROPY:
            logits = params.head_weights @ f + params.head_bias
            value, d_logits = losses.cross_entropy(logits, int(target))
            if with_grads:
                d_logits /= n
                grads.head_weights += np.outer(d_logits, f)
                grads.head_bias += d_logits
                df = params.head_weights.T @ d_logits
        else:
            raw = float(params.head_weights @ f + params.head_bias)
            if clamp_range is not None:
                pred, passthrough = losses.clamp_value(raw, *clamp_range)
            else:
                pred, passthrough = raw, 1.0
            res = losses.residual(pred, float(target))
            value, dvalue_dx = losses.regression_loss(res.x, loss_spec)
            if with_grads:
                d_pred = dvalue_dx * res.sign * passthrough / n
                grads.head_weights += d_pred * f
                grads.head_bias += d_pred
                df = d_pred * params.head_weights
        total += value / n
        if with_grads:
            du, dv = _feature_grad(df, u, v, mode)
            np.add.at(grads.embeddings, ids1, du / len(ids1))
            np.add.at(grads.embeddings, ids2, dv / len(ids2))
    return total, grads


def _contrastive_pass(params, tokenized, loss_spec):
    anchors = np.stack([embed_sentence(ids1, params) for ids1, _, _ in tokenized])
    positives = np.stack([embed_sentence(ids2, params) for _, ids2, _ in tokenized])
    value, d_anchors, d_positives = losses.info_nce(anchors, positives, loss_spec.tau)
    grads = Gradients.zeros_like(params)
    for i, (ids1, ids2, _) in enumerate(tokenized):
        np.add.at(grads.embeddings, ids1, d_anchors[i] / len(ids1))
        np.add.at(grads.embeddings, ids2, d_positives[i] / len(ids2))
    return value, grads


def save_checkpoint(model: Model, path) -> None:
    """Write a self-describing JSON checkpoint (bit-exact round trip)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "feature_mode": model.feature_mode.value,
        "max_tokens": model.max_tokens,
        "vocab": list(model.vocab.tokens),
        "mapping": model.mapping.to_json_dict() if model.mapping else None,
        "head_kind": "classification" if model.params.is_classifier else "regression",
        "embeddings": model.params.embeddings.tolist(),
        "head_weights": model.params.head_weights.tolist(),
        "head_bias": model.params.head_bias.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        if doc["format"] != CHECKPOINT_FORMAT:
            raise CheckpointError(f"not a model checkpoint: {path}")
        if doc["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc['version']}")
        vocab = Vocabulary(tuple(doc["vocab"]))
        mapping = (
            LabelMapping.from_json_dict(doc["mapping"]) if doc["mapping"] else None
        )
        params = ModelParams(
            np.asarray(doc["embeddings"], dtype=float),
            np.asarray(doc["head_weights"], dtype=float),
            np.asarray(doc["head_bias"], dtype=float),
        )
        return Model(
            vocab, params, FeatureMode(doc["feature_mode"]), mapping,
            int(doc["max_tokens"]),
        )
    except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
