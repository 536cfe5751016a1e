"""Loss functions and their analytic derivatives.

Everything here is stateless and operates on plain floats/arrays, so any
function may be called concurrently.  The two buffered losses share the same
shape: they are identically zero on ``[0, x0)`` (the zero-gradient buffer
zone) and penalize only residuals at or past the threshold:

    translated_relu(x) = max(0, k*(x - x0))          (piecewise linear)
    smooth_k2(x)       = k*(x - x0)**2  for x >= x0  (piecewise quadratic, C1)

Derivatives are taken with respect to the residual x; at the knot x = x0 the
right-sided derivative is used (k for translated_relu, 0 for smooth_k2).
Per-sample losses are averaged, not summed, over a batch so that k keeps the
same meaning regardless of batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .labelmap import LabelMapping


class LossKind(str, Enum):
    TRANSLATED_RELU = "translated_relu"
    SMOOTH_K2 = "smooth_k2"
    L1 = "l1"
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"
    INFO_NCE = "info_nce"


REGRESSION_KINDS = frozenset(
    {LossKind.TRANSLATED_RELU, LossKind.SMOOTH_K2, LossKind.L1, LossKind.MSE}
)


@dataclass(frozen=True)
class LossSpec:
    """Which loss to use plus its hyperparameters.

    k is the slope/curvature coefficient, x0 the buffer-zone threshold, d the
    interval between mapped label nodes (x0 may not exceed d/2), and tau the
    temperature for the contrastive loss.
    """

    kind: LossKind
    k: float = 1.0
    x0: float = 0.0
    d: float = 1.0
    tau: float | None = None

    def __post_init__(self):
        for name in ("k", "x0", "d", "tau"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, float(value))
        if self.k <= 0:
            raise InvalidInputError(f"k must be positive, got {self.k}")
        if self.d <= 0:
            raise InvalidInputError(f"d must be positive, got {self.d}")
        if not 0.0 <= self.x0 <= self.d / 2.0:
            raise InvalidInputError(
                f"x0 must satisfy 0 <= x0 <= d/2 = {self.d / 2.0}, got {self.x0}"
            )
        if self.kind is LossKind.INFO_NCE:
            if self.tau is None or self.tau <= 0:
                raise InvalidInputError("info_nce requires tau > 0")


@dataclass(frozen=True)
class Residual:
    """Absolute prediction error plus the sign needed for the chain rule."""

    x: float
    sign: int  # sign(prediction - label): -1, 0 or +1

    def __post_init__(self):
        if self.x < 0:
            raise InvalidInputError(f"residual must be non-negative, got {self.x}")


def residual(prediction: float, label: float) -> Residual:
    """|prediction - label| together with sign(prediction - label)."""
    if not (math.isfinite(prediction) and math.isfinite(label)):
        raise InvalidInputError("prediction and label must be finite")
    diff = prediction - label
    return Residual(abs(diff), (diff > 0) - (diff < 0))


def translated_relu(x: float, spec: LossSpec) -> tuple[float, float]:
    """max(0, k*(x - x0)) and its derivative in x."""
    _check_residual(x)
    if x < spec.x0:
        return 0.0, 0.0
    return spec.k * (x - spec.x0), spec.k


def smooth_k2(x: float, spec: LossSpec) -> tuple[float, float]:
    """k*(x - x0)**2 past the buffer zone, 0 inside it; C1 at the knot."""
    _check_residual(x)
    if x < spec.x0:
        return 0.0, 0.0
    t = x - spec.x0
    return spec.k * t * t, 2.0 * spec.k * t


def l1_loss(x: float) -> tuple[float, float]:
    """Plain absolute-error baseline: value x, slope 1 (0 at x = 0)."""
    _check_residual(x)
    return x, 0.0 if x == 0 else 1.0


def mse_loss(x: float) -> tuple[float, float]:
    """Squared-error baseline: value x**2, slope 2x."""
    _check_residual(x)
    return x * x, 2.0 * x


def regression_loss(x: float, spec: LossSpec) -> tuple[float, float]:
    """Dispatch to the residual-based loss named by the spec."""
    if spec.kind is LossKind.TRANSLATED_RELU:
        return translated_relu(x, spec)
    if spec.kind is LossKind.SMOOTH_K2:
        return smooth_k2(x, spec)
    if spec.kind is LossKind.L1:
        return l1_loss(x)
    if spec.kind is LossKind.MSE:
        return mse_loss(x)
    raise InvalidInputError(f"{spec.kind.value} is not a residual-based loss")


def clamp_value(prediction: float, low: float, high: float) -> tuple[float, float]:
    """Clamp into [low, high]; second value is the gradient pass-through (1 or 0).

    Predictions outside the range are moved to the boundary and block gradient
    flow, so overshoot past a terminal node costs nothing once the residual
    sits inside the buffer zone.
    """
    if prediction < low:
        return low, 0.0
    if prediction > high:
        return high, 0.0
    return prediction, 1.0


def clamp_to_range(prediction: float, mapping: LabelMapping) -> float:
    """Clamp a prediction into the mapping's [lowest node, highest node]."""
    return clamp_value(prediction, mapping.low, mapping.high)[0]


def cross_entropy(logits, class_index: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy and its gradient with respect to the logits.

    Uses the log-sum-exp stabilized form; gradient is softmax(logits) - onehot.
    """
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise InvalidInputError("logits must be a nonempty vector")
    if not 0 <= class_index < z.size:
        raise InvalidInputError(
            f"class index {class_index} out of range for {z.size} logits"
        )
    m = z.max()
    exp = np.exp(z - m)
    log_norm = m + math.log(exp.sum())
    value = log_norm - z[class_index]
    grad = exp / exp.sum()
    grad[class_index] -= 1.0
    return float(value), grad


def info_nce(anchors, positives, tau: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch-mean contrastive loss over cosine similarities.

    Each anchor is pulled toward its own positive and pushed away from every
    other positive in the batch:

        loss_i = -log( exp(cos(a_i, p_i)/tau) / sum_j exp(cos(a_i, p_j)/tau) )

    Returns the mean loss and gradients for the anchor and positive matrices.
    With a single pair the numerator equals the denominator, so the loss and
    all gradients are exactly zero.
    """
    if tau <= 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    a = np.atleast_2d(np.asarray(anchors, dtype=float))
    p = np.atleast_2d(np.asarray(positives, dtype=float))
    if a.shape[0] == 0:
        raise InvalidInputError("batch must be nonempty")
    if a.shape != p.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {p.shape}")
    na = np.linalg.norm(a, axis=1)
    np_ = np.linalg.norm(p, axis=1)
    if np.any(na == 0) or np.any(np_ == 0):
        raise InvalidInputError("zero-norm embedding in contrastive batch")

    ah = a / na[:, None]
    ph = p / np_[:, None]
    sims = ah @ ph.T  # sims[i, j] = cos(a_i, p_j)
    n = sims.shape[0]

    scaled = sims / tau
    row_max = scaled.max(axis=1, keepdims=True)
    exp = np.exp(scaled - row_max)
    log_norm = row_max[:, 0] + np.log(exp.sum(axis=1))
    value = float(np.mean(log_norm - np.diag(scaled)))

    d_sims = exp / exp.sum(axis=1, keepdims=True)
    d_sims[np.arange(n), np.arange(n)] -= 1.0
    d_sims /= n * tau

    # d cos(a_i, p_j) / d a_i = (ph_j - sims_ij * ah_i) / |a_i|
    row_dot = (d_sims * sims).sum(axis=1, keepdims=True)
    d_anchors = (d_sims @ ph - row_dot * ah) / na[:, None]
    col_dot = (d_sims * sims).sum(axis=0)[:, None]
    d_positives = (d_sims.T @ ah - col_dot * ph) / np_[:, None]
    return value, d_anchors, d_positives


def _check_residual(x: float) -> None:
    if x < 0 or not math.isfinite(x):
        raise InvalidInputError(f"residual must be finite and non-negative, got {x}")
