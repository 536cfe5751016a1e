"""Mini-batch training with dev-set checkpoint selection.

Supports single-stage runs and the two-stage workflow used for contrastive
pre-trained encoders: first only the randomly initialized head is updated
while the encoder stays frozen, then everything is trained jointly.  Given a
seed, the whole procedure is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset
from .encoder import Gradients, Model, forward_backward
from .errors import InvalidInputError, TrainingError
from .evaluation import predictions_for, spearman
from .labelmap import LabelMapping, build_mapping
from .losses import LossKind, LossSpec


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 1
    learning_rate: float = 0.1
    seed: int = 0
    eval_every: int = 50
    max_tokens: int = 256
    clamp_predictions: bool = True
    optimizer: str = "sgd"  # or "adam"

    def __post_init__(self):
        for name in ("batch_size", "epochs", "eval_every", "max_tokens"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")


class Stage(Enum):
    HEAD_ONLY = "head_only"  # encoder frozen, only the linear head updates
    JOINT = "joint"


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    train_loss: float | None
    dev_spearman: float | None


@dataclass
class TrainResult:
    best_model: Model
    history: list[HistoryEntry]
    best_dev: float


@dataclass
class TwoStageResult:
    best_model: Model
    stage1: TrainResult
    stage2: TrainResult


_PARAM_FIELDS = ("embeddings", "head_weights", "head_bias")


def _check_shapes(params, grads) -> None:
    for name in _PARAM_FIELDS:
        p, g = getattr(params, name), getattr(grads, name)
        if p.shape != g.shape:
            raise InvalidInputError(f"{name} gradient shape {g.shape} != {p.shape}")


def sgd_step(params, grads, learning_rate: float, stage: Stage):
    """p <- p - lr*g for every unfrozen parameter; frozen ones untouched."""
    _check_shapes(params, grads)
    if stage is Stage.JOINT:
        params.embeddings -= learning_rate * grads.embeddings
    params.head_weights -= learning_rate * grads.head_weights
    params.head_bias -= learning_rate * grads.head_bias
    return params


class AdamOptimizer:
    """Adaptive-moment updates (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = Gradients.zeros_like(params)
        self.v = Gradients.zeros_like(params)
        self.t = 0

    def step(self, params, grads, stage: Stage):
        _check_shapes(params, grads)
        self.t += 1
        for name in _PARAM_FIELDS:
            if stage is Stage.HEAD_ONLY and name == "embeddings":
                continue
            g = getattr(grads, name)
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m[...] = self.beta1 * m + (1 - self.beta1) * g
            v[...] = self.beta2 * v + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            getattr(params, name)[...] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


class SgdOptimizer:
    def __init__(self, learning_rate: float):
        self.lr = learning_rate

    def step(self, params, grads, stage: Stage):
        return sgd_step(params, grads, self.lr, stage)


def _make_optimizer(config: TrainConfig, params):
    if config.optimizer == "adam":
        return AdamOptimizer(params, config.learning_rate)
    return SgdOptimizer(config.learning_rate)


def _mapping_for(dataset: Dataset, mapping: LabelMapping | None):
    if not dataset.is_categorical:
        return mapping
    if mapping is not None and all(c in mapping.categories for c in dataset.categories):
        return mapping
    return build_mapping(dataset.categories, 0.0, 1.0)


def _targets(dataset: Dataset, mapping: LabelMapping | None, kind: LossKind):
    """Pair up sentences with numeric targets (or class indices for CE)."""
    out = []
    for pair in dataset.pairs:
        if kind is LossKind.INFO_NCE:
            out.append((pair, 0.0))
        elif kind is LossKind.CROSS_ENTROPY:
            if pair.label is not None:
                out.append((pair, mapping.index(pair.label)))
            else:
                try:
                    out.append((pair, mapping.nodes.index(pair.score)))
                except (ValueError, AttributeError):
                    raise InvalidInputError(
                        "cross-entropy needs categorical targets"
                    ) from None
        elif pair.label is not None:
            out.append((pair, mapping.nodes[mapping.index(pair.label)]))
        else:
            out.append((pair, pair.score))
    return out


def _numeric_golds(dataset: Dataset, mapping: LabelMapping | None):
    if dataset.is_categorical:
        m = _mapping_for(dataset, mapping)
        return [m.nodes[m.index(pair.label)] for pair in dataset.pairs]
    return [pair.score for pair in dataset.pairs]


def _clamp_range(train_set, mapping, config):
    if not config.clamp_predictions:
        return None
    if train_set.is_categorical:
        return mapping.low, mapping.high
    return train_set.score_range


def _dev_score(model: Model, dev_set: Dataset, golds, use_cosine: bool) -> float:
    # checkpoint selection uses raw (unclamped) predictions
    return spearman(predictions_for(model, dev_set, use_cosine), golds)


def train(
    model: Model,
    train_set: Dataset,
    dev_set: Dataset,
    config: TrainConfig,
    loss_spec: LossSpec,
    stage: Stage = Stage.JOINT,
    mapping: LabelMapping | None = None,
) -> TrainResult:
    """Optimize a copy of the model, returning the best dev checkpoint.

    Shuffles once per epoch under the config seed, evaluates dev Spearman at
    step 0, every `eval_every` steps and at each epoch end, and keeps the
    parameters of the best evaluation (first best wins ties).  The input
    model is never mutated.
    """
    if len(train_set) == 0 or len(dev_set) == 0:
        raise InvalidInputError("training and dev sets must be nonempty")
    mapping = _mapping_for(train_set, mapping if mapping is not None else model.mapping)
    examples = _targets(train_set, mapping, loss_spec.kind)
    dev_golds = _numeric_golds(dev_set, mapping)
    clamp_range = _clamp_range(train_set, mapping, config)
    use_cosine = loss_spec.kind is LossKind.INFO_NCE

    work = model.copy()
    work.max_tokens = config.max_tokens
    optimizer = _make_optimizer(config, work.params)
    rng = np.random.default_rng(config.seed)

    best_dev = _dev_score(work, dev_set, dev_golds, use_cosine)
    best_params = work.params.copy()
    history = [HistoryEntry(0, None, best_dev)]

    step = 0
    n = len(examples)
    batches_per_epoch = math.ceil(n / config.batch_size)
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for b in range(batches_per_epoch):
            idx = perm[b * config.batch_size : (b + 1) * config.batch_size]
            batch = [examples[i] for i in idx]
            try:
                value, grads = forward_backward(work, batch, loss_spec, clamp_range)
            except InvalidInputError as exc:
                # diverged parameters produce non-finite predictions downstream
                raise TrainingError(f"aborted at step {step + 1}: {exc}") from exc
            if not math.isfinite(value):
                raise TrainingError(f"non-finite training loss at step {step + 1}")
            optimizer.step(work.params, grads, stage)
            step += 1
            dev = None
            if step % config.eval_every == 0 or b == batches_per_epoch - 1:
                try:
                    dev = _dev_score(work, dev_set, dev_golds, use_cosine)
                except InvalidInputError as exc:
                    # finite loss but runaway parameters: treat as divergence
                    raise TrainingError(
                        f"dev evaluation failed at step {step}: {exc}"
                    ) from exc
                if dev > best_dev:
                    best_dev = dev
                    best_params = work.params.copy()
            history.append(HistoryEntry(step, value, dev))

    best_model = Model(
        work.vocab, best_params, work.feature_mode, work.mapping, work.max_tokens
    )
    return TrainResult(best_model, history, best_dev)


def two_stage_finetune(
    model: Model,
    nli_set: Dataset,
    sts_set: Dataset,
    dev_set: Dataset,
    config: TrainConfig,
    joint_config: TrainConfig | None = None,
    loss_spec: LossSpec | None = None,
    nli_mapping: LabelMapping | None = None,
) -> TwoStageResult:
    """Freeze-then-joint fine-tuning.

    Stage 1 trains only the head on the categorical corpus; stage 2 starts
    from the stage-1 best checkpoint and trains everything on the similarity
    corpus.  The buffered quadratic loss is used throughout unless another
    spec is supplied.  Because stage 2 re-evaluates its starting point, the
    final dev score can never fall below stage 1's.
    """
    if loss_spec is None:
        loss_spec = LossSpec(LossKind.SMOOTH_K2, k=2.0, x0=0.25, d=1.0)
    stage1 = train(
        model, nli_set, dev_set, config, loss_spec, Stage.HEAD_ONLY, nli_mapping
    )
    stage2 = train(
        stage1.best_model, sts_set, dev_set, joint_config or config, loss_spec,
        Stage.JOINT,
    )
    return TwoStageResult(stage2.best_model, stage1, stage2)


def write_history_csv(history, path) -> None:
    """step,train_loss,dev_spearman with blanks where a value was not taken."""
    lines = ["step,train_loss,dev_spearman\n"]
    for entry in history:
        loss = repr(entry.train_loss) if entry.train_loss is not None else ""
        dev = repr(entry.dev_spearman) if entry.dev_spearman is not None else ""
        lines.append(f"{entry.step},{loss},{dev}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
