"""Region-level softmax scorer with a part head, an object head and correlation fusion.

This is the trainable score provider used between graph-cut rounds. Both
heads are linear over the 48-d region histogram features plus a bias and are
trained jointly on part cross-entropy, object cross-entropy and the
cross-entropy of the fused (part x object) probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ScoreMap, _frozen
from .energy import FEATURE_DIM
from .superpixels import SuperPixelPartition

# object head channels
OBJ_BACKGROUND, OBJ_FOREGROUND = 0, 1


@dataclass(frozen=True)
class LossWeights:
    part: float = 1.0
    object: float = 1.0
    refined: float = 1.0


@dataclass(frozen=True)
class ScorerModel:
    part_weights: np.ndarray  # (d+1, K+1), last row is the bias
    object_weights: np.ndarray  # (d+1, 2)
    final_loss: float = float("nan")
    epochs: int = 0
    degenerate: bool = False
    loss_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def num_labels(self) -> int:
        return self.part_weights.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.part_weights.shape[0] - 1

    @classmethod
    def zeros(cls, num_labels: int, feature_dim: int = FEATURE_DIM) -> "ScorerModel":
        return cls(
            _frozen(np.zeros((feature_dim + 1, num_labels))),
            _frozen(np.zeros((feature_dim + 1, 2))),
        )


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((len(x), 1))])


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def object_labels(labels: np.ndarray) -> np.ndarray:
    return (np.asarray(labels) > 0).astype(np.int64)


def joint_loss(
    part_logits: np.ndarray,
    object_logits: np.ndarray,
    labels: np.ndarray,
    weights: LossWeights = LossWeights(),
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Weighted sum of part CE, object CE and fused-map CE, averaged over regions.

    The fused probability of the true label is part(y) * object(fg) for parts
    and part(0) * object(bg) for background; its negative log is taken as is,
    without renormalizing the fused map. Returns gradients w.r.t. both logit
    matrices.
    """
    y = np.asarray(labels, dtype=np.int64)
    n = len(y)
    b = object_labels(y)
    rows = np.arange(n)
    log_p = log_softmax(part_logits)
    log_q = log_softmax(object_logits)
    ce_part = -log_p[rows, y].mean()
    ce_obj = -log_q[rows, b].mean()
    # -log(p * q) summed in log space; identical to the product form
    refined = -(log_p[rows, y] + log_q[rows, b]).mean()
    loss = weights.part * ce_part + weights.object * ce_obj + weights.refined * refined

    grad_p = np.exp(log_p)
    grad_p[rows, y] -= 1.0
    grad_p *= (weights.part + weights.refined) / n
    grad_q = np.exp(log_q)
    grad_q[rows, b] -= 1.0
    grad_q *= (weights.object + weights.refined) / n
    return float(loss), (grad_p, grad_q)


def scorer_objective(
    part_weights: np.ndarray,
    object_weights: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    weights: LossWeights = LossWeights(),
    l2: float = 0.0,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Joint loss plus L2 on the non-bias weights, with gradients w.r.t. both weight matrices."""
    xb = _with_bias(features)
    loss, (gz_p, gz_q) = joint_loss(xb @ part_weights, xb @ object_weights, labels, weights)
    loss += 0.5 * l2 * ((part_weights[:-1] ** 2).sum() + (object_weights[:-1] ** 2).sum())
    g_p = xb.T @ gz_p
    g_q = xb.T @ gz_q
    g_p[:-1] += l2 * part_weights[:-1]
    g_q[:-1] += l2 * object_weights[:-1]
    return loss, (g_p, g_q)


def fit_scorer(
    features: np.ndarray,
    labels: np.ndarray,
    num_labels: int,
    learning_rate: float = 1.0,
    epochs: int = 300,
    l2: float = 1e-4,
    weights: LossWeights = LossWeights(),
) -> ScorerModel:
    """Full-batch gradient descent from zero weights.

    A step that would raise the objective is retried with half the step size,
    so the recorded loss history never increases. Data without both a part
    region and a background region yields the zero model flagged degenerate.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be (n, d) with one label per row")
    d = x.shape[1]
    if not (np.any(y > 0) and np.any(y == 0)):
        return ScorerModel(
            _frozen(np.zeros((d + 1, num_labels))), _frozen(np.zeros((d + 1, 2))), degenerate=True
        )

    wp = np.zeros((d + 1, num_labels))
    wq = np.zeros((d + 1, 2))
    loss, (gp, gq) = scorer_objective(wp, wq, x, y, weights, l2)
    history = [loss]
    step = learning_rate
    for _ in range(epochs):
        while True:
            cand_p, cand_q = wp - step * gp, wq - step * gq
            cand_loss, cand_grad = scorer_objective(cand_p, cand_q, x, y, weights, l2)
            if cand_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        if cand_loss > loss:
            break
        wp, wq, loss, (gp, gq) = cand_p, cand_q, cand_loss, cand_grad
        history.append(loss)
    return ScorerModel(
        _frozen(wp), _frozen(wq), final_loss=loss, epochs=len(history) - 1, loss_history=tuple(history)
    )


def region_probabilities(model: ScorerModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xb = _with_bias(np.asarray(features, dtype=np.float64))
    return softmax(xb @ model.part_weights), softmax(xb @ model.object_weights)


def predict_scores(
    model: ScorerModel, partition: SuperPixelPartition, features: np.ndarray
) -> tuple[ScoreMap, ScoreMap]:
    """Per-region softmax outputs painted onto every pixel of the region."""
    part, obj = region_probabilities(model, features)
    r = partition.region_of
    return ScoreMap(np.moveaxis(part[r], -1, 0)), ScoreMap(np.moveaxis(obj[r], -1, 0))


@dataclass(frozen=True)
class FusedScores:
    raw: np.ndarray  # (K+1, H, W) unnormalized products
    normalized: ScoreMap


def correlation_fuse(part: ScoreMap, obj: ScoreMap) -> FusedScores:
    """Multiply part probabilities by the object probability of the matching side.

    Part channels 1..K are scaled by the foreground probability and channel 0
    by the background probability.
    """
    if part.shape != obj.shape:
        raise ValueError(f"part map {part.shape} and object map {obj.shape} differ in size")
    if obj.channels != 2:
        raise ValueError("object map must have exactly two channels")
    factor = np.concatenate(
        [obj.values[OBJ_BACKGROUND][None], np.repeat(obj.values[OBJ_FOREGROUND][None], part.channels - 1, 0)]
    )
    raw = part.values * factor
    return FusedScores(_frozen(raw), ScoreMap.normalized(raw))
