"""Finite-difference verification of every analytic gradient.

Builds small random models and compares the hand-derived backward pass
against central differences, parameter by parameter, for every loss kind and
feature mode.  Sampled configurations are redrawn when the forward pass lands
too close to a non-smooth point (the loss knot at x0, the kink of |u - v| at
equal coordinates, the kink of the absolute error at zero), where comparing
slopes is meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (
    FeatureMode,
    Gradients,
    ModelParams,
    _forward_backward_ids,
    build_vocab,
    embed_sentence,
    features,
    init_params,
    tokenize,
)
from .errors import TrainingError
from .losses import LossKind, LossSpec

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
KNOT_MARGIN = 1e-3  # distance kept from non-smooth points of the loss surface
ABS_MARGIN = 1e-4  # min per-coordinate |u - v| when the |u-v| branch is active

ALL_KINDS = (
    LossKind.TRANSLATED_RELU,
    LossKind.SMOOTH_K2,
    LossKind.L1,
    LossKind.MSE,
    LossKind.CROSS_ENTROPY,
    LossKind.INFO_NCE,
)
ALL_MODES = (FeatureMode.UV, FeatureMode.ABS_DIFF, FeatureMode.UV_ABS_DIFF)


@dataclass(frozen=True)
class GradCheckResult:
    seed: int
    kind: LossKind
    mode: FeatureMode
    max_rel_error: float
    n_params: int

    @property
    def label(self) -> str:
        return f"seed={self.seed} loss={self.kind.value} mode={self.mode.value}"


def finite_difference_grads(value_fn, params: ModelParams,
                            step: float = DEFAULT_STEP) -> Gradients:
    """Central-difference gradient of value_fn() over every parameter entry."""
    fd = Gradients.zeros_like(params)
    for name in ("embeddings", "head_weights", "head_bias"):
        arr = getattr(params, name)
        out = getattr(fd, name)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = arr[ix]
            arr[ix] = orig + step
            up = value_fn()
            arr[ix] = orig - step
            down = value_fn()
            arr[ix] = orig
            out[ix] = (up - down) / (2.0 * step)
    return fd


def max_relative_error(analytic: Gradients, fd: Gradients) -> float:
    worst = 0.0
    for name in ("embeddings", "head_weights", "head_bias"):
        a = np.atleast_1d(getattr(analytic, name))
        f = np.atleast_1d(getattr(fd, name))
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def _random_sentences(rng, words, batch):
    sents = []
    for _ in range(2 * batch):
        length = int(rng.integers(1, 6))
        sents.append(" ".join(rng.choice(words, size=length)))
    return [(sents[2 * i], sents[2 * i + 1]) for i in range(batch)]


def _too_close_to_kink(params, tokenized, mode, spec):
    uses_abs = mode in (FeatureMode.ABS_DIFF, FeatureMode.UV_ABS_DIFF)
    for ids1, ids2, target in tokenized:
        u = embed_sentence(ids1, params)
        v = embed_sentence(ids2, params)
        if uses_abs and np.min(np.abs(u - v)) < ABS_MARGIN:
            return True
        if spec.kind in (LossKind.CROSS_ENTROPY, LossKind.INFO_NCE):
            continue
        f = features(u, v, mode)
        pred = float(params.head_weights @ f + params.head_bias)
        x = abs(pred - target)
        if spec.kind in (LossKind.TRANSLATED_RELU, LossKind.SMOOTH_K2):
            if abs(x - spec.x0) < KNOT_MARGIN:
                return True
        if spec.kind in (LossKind.TRANSLATED_RELU, LossKind.L1) and x < KNOT_MARGIN:
            return True
    return False


def check_configuration(
    seed: int,
    kind: LossKind,
    mode: FeatureMode,
    dim_max: int = 8,
    vocab_max: int = 30,
    batch_max: int = 4,
    step: float = DEFAULT_STEP,
) -> GradCheckResult:
    """Gradient-check one randomly drawn (loss, feature-mode) configuration."""
    rng = np.random.default_rng([seed, ALL_KINDS.index(kind), ALL_MODES.index(mode)])
    dim = int(rng.integers(2, dim_max + 1))
    n_words = int(rng.integers(5, vocab_max - 1))
    batch = int(rng.integers(2, batch_max + 1))
    words = [f"w{i}" for i in range(n_words)]
    vocab = build_vocab([" ".join(words)])
    n_classes = int(rng.integers(3, 6)) if kind is LossKind.CROSS_ENTROPY else None
    params = init_params(len(vocab), dim, mode, int(rng.integers(0, 2**31)),
                         label_range=(0.0, 3.0), n_classes=n_classes)
    spec = _random_spec(rng, kind)

    for _ in range(200):
        pairs = _random_sentences(rng, words, batch)
        if kind is LossKind.CROSS_ENTROPY:
            targets = rng.integers(0, n_classes, size=batch).tolist()
        else:
            targets = rng.uniform(0.0, 3.0, size=batch).tolist()
        tokenized = [
            (tokenize(s1, vocab), tokenize(s2, vocab), t)
            for (s1, s2), t in zip(pairs, targets)
        ]
        if not _too_close_to_kink(params, tokenized, mode, spec):
            break
    else:
        raise TrainingError("could not sample a configuration away from kinks")

    _, analytic = _forward_backward_ids(params, tokenized, mode, spec, None)
    fd = finite_difference_grads(
        lambda: _forward_backward_ids(
            params, tokenized, mode, spec, None, with_grads=False
        )[0],
        params,
        step,
    )
    n_params = params.embeddings.size + params.head_weights.size + params.head_bias.size
    return GradCheckResult(seed, kind, mode, max_relative_error(analytic, fd), n_params)


def run_gradient_checks(
    seeds=range(20),
    kinds=ALL_KINDS,
    modes=ALL_MODES,
    dim_max: int = 8,
    vocab_max: int = 30,
    batch_max: int = 4,
    step: float = DEFAULT_STEP,
) -> list[GradCheckResult]:
    """The full sweep: every seed x loss kind x feature mode."""
    return [
        check_configuration(seed, kind, mode, dim_max, vocab_max, batch_max, step)
        for seed in seeds
        for kind in kinds
        for mode in modes
    ]


def _random_spec(rng, kind: LossKind) -> LossSpec:
    if kind is LossKind.INFO_NCE:
        return LossSpec(kind, tau=float(rng.uniform(0.1, 1.0)))
    if kind in (LossKind.TRANSLATED_RELU, LossKind.SMOOTH_K2):
        return LossSpec(
            kind, k=float(rng.uniform(0.5, 3.0)), x0=float(rng.uniform(0.0, 0.5)),
            d=1.0,
        )
    return LossSpec(kind)
