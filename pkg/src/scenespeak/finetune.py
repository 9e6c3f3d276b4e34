"""Desk-scale two-head training: joint classification/regression loss, SGD,
L2 weight decay, early stopping, and a finite-difference gradient oracle.

The model is deliberately tiny: a shared linear feature layer feeding a
sigmoid class head and a linear distance head. Every loss term and gradient
path of the full objective is exercised while staying cheap enough to verify
against central differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

PREDICTION_CLAMP = 1e-12


class EmptyBatch(ValueError):
    """A loss was asked for zero samples."""


class LengthMismatch(ValueError):
    """Paired arrays differ in length."""


class NonFiniteLoss(ValueError):
    """A NaN or infinite validation loss reached the early-stopping monitor."""


class EmptyDataset(ValueError):
    """Training needs at least one train and one validation sample."""


@dataclass(frozen=True)
class LabeledSample:
    """One training example: features, binary class label, true distance."""

    x: tuple[float, ...]
    y: int
    d: float

    def __post_init__(self) -> None:
        if self.y not in (0, 1):
            raise ValueError(f"class label must be 0 or 1, got {self.y}")
        if self.d <= 0:
            raise ValueError(f"distance must be > 0, got {self.d}")


def load_samples(path: str) -> list[LabeledSample]:
    """Read a dataset file: JSON list of {"x": [...], "y": 0|1, "d": float}."""
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    return [LabeledSample(x=tuple(float(v) for v in r["x"]), y=int(r["y"]), d=float(r["d"])) for r in rows]


def as_arrays(samples: list[LabeledSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not samples:
        raise EmptyBatch("batch must contain at least one sample")
    X = np.array([s.x for s in samples], dtype=np.float64)
    y = np.array([s.y for s in samples], dtype=np.float64)
    d = np.array([s.d for s in samples], dtype=np.float64)
    return X, y, d


@dataclass
class TinyTwoHeadModel:
    """Shared linear features z = Wx + b, class head sigmoid(u.z + c),
    distance head v.z + e; all parameters live in one flat vector."""

    n_features: int
    n_hidden: int
    theta: np.ndarray

    @classmethod
    def initialized(
        cls, n_features: int, n_hidden: int, rng: np.random.Generator, scale: float = 0.5
    ) -> "TinyTwoHeadModel":
        n_params = n_hidden * n_features + 3 * n_hidden + 2
        return cls(n_features, n_hidden, theta=rng.normal(0.0, scale, size=n_params))

    @property
    def param_count(self) -> int:
        return self.n_hidden * self.n_features + 3 * self.n_hidden + 2

    def with_theta(self, theta: np.ndarray) -> "TinyTwoHeadModel":
        return TinyTwoHeadModel(self.n_features, self.n_hidden, np.asarray(theta, dtype=np.float64))

    def unpack(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, np.ndarray, float]:
        h, f = self.n_hidden, self.n_features
        t = self.theta
        W = t[: h * f].reshape(h, f)
        b = t[h * f : h * f + h]
        u = t[h * f + h : h * f + 2 * h]
        c = t[h * f + 2 * h]
        v = t[h * f + 2 * h + 1 : h * f + 3 * h + 1]
        e = t[h * f + 3 * h + 1]
        return W, b, u, c, v, e

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-sample class probabilities, distance predictions, and features."""
        W, b, u, c, v, e = self.unpack()
        Z = X @ W.T + b
        prob = 1.0 / (1.0 + np.exp(-(Z @ u + c)))
        dist = Z @ v + e
        return prob, dist, Z


def classification_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy; predictions are clamped away from 0 and 1."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise EmptyBatch("classification loss needs at least one prediction")
    if p.shape != y.shape:
        raise LengthMismatch(f"got {p.size} predictions for {y.size} labels")
    p = np.clip(p, PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def regression_loss(predicted: np.ndarray, true: np.ndarray) -> float:
    """Mean squared error between predicted and true distances."""
    d_hat = np.asarray(predicted, dtype=np.float64)
    d = np.asarray(true, dtype=np.float64)
    if d_hat.shape != d.shape:
        raise LengthMismatch(f"got {d_hat.size} predictions for {d.size} targets")
    if d.size == 0:
        raise EmptyBatch("regression loss needs at least one sample")
    return float(np.mean((d - d_hat) ** 2))


def combined_loss(model: TinyTwoHeadModel, samples: list[LabeledSample], lam: float) -> float:
    """Classification loss plus lam times regression loss, through the model."""
    X, y, d = as_arrays(samples)
    prob, dist, _ = model.forward(X)
    return classification_loss(prob, y) + lam * regression_loss(dist, d)


def regularized_loss(
    model: TinyTwoHeadModel, samples: list[LabeledSample], lam: float, alpha: float
) -> float:
    """Combined loss plus the L2 penalty (alpha/2) * sum(theta^2)."""
    return combined_loss(model, samples, lam) + 0.5 * alpha * float(np.sum(model.theta**2))


def loss_gradient(
    model: TinyTwoHeadModel, samples: list[LabeledSample], lam: float, alpha: float
) -> np.ndarray:
    """Analytic gradient of the regularized loss with respect to theta."""
    X, y, d = as_arrays(samples)
    W, b, u, c, v, e = model.unpack()
    n = len(samples)
    Z = X @ W.T + b
    prob = 1.0 / (1.0 + np.exp(-(Z @ u + c)))
    dist = Z @ v + e

    # d(cross-entropy)/d(logit) and lam * d(mse)/d(prediction), per sample
    ga = (prob - y) / n
    gr = 2.0 * lam * (dist - d) / n

    grad_u = Z.T @ ga
    grad_c = float(np.sum(ga))
    grad_v = Z.T @ gr
    grad_e = float(np.sum(gr))
    dZ = np.outer(ga, u) + np.outer(gr, v)
    grad_W = dZ.T @ X
    grad_b = dZ.sum(axis=0)

    grad = np.concatenate(
        [grad_W.ravel(), grad_b, grad_u, [grad_c], grad_v, [grad_e]]
    )
    return grad + alpha * model.theta


def sgd_step(theta: np.ndarray, gradient: np.ndarray, learning_rate: float) -> np.ndarray:
    """One descent update: theta - learning_rate * gradient, elementwise."""
    t = np.asarray(theta, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    if t.shape != g.shape:
        raise LengthMismatch(f"theta has {t.size} entries but gradient has {g.size}")
    return t - learning_rate * g


def finite_diff_grad_check(
    model: TinyTwoHeadModel,
    samples: list[LabeledSample],
    lam: float,
    alpha: float,
    step: float = 1e-5,
) -> float:
    """Max relative disagreement between analytic and central-difference gradients.

    Per-coordinate relative error is ill-posed where a gradient coordinate
    crosses zero, so the denominator is floored at a thousandth of the
    gradient's own largest magnitude.
    """
    analytic = loss_gradient(model, samples, lam, alpha)
    numeric = np.empty_like(analytic)
    base = model.theta.copy()
    for j in range(base.size):
        bumped = base.copy()
        bumped[j] = base[j] + step
        hi = regularized_loss(model.with_theta(bumped), samples, lam, alpha)
        bumped[j] = base[j] - step
        lo = regularized_loss(model.with_theta(bumped), samples, lam, alpha)
        numeric[j] = (hi - lo) / (2.0 * step)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float(np.max(np.abs(analytic - numeric) / denom))


class Decision(Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass
class EarlyStopMonitor:
    """Stops once validation loss has not improved for more than ``patience`` epochs."""

    patience: int
    min_delta: float = 1e-9
    best_val_loss: float = math.inf
    epochs_since_improvement: int = 0


def early_stopping_step(monitor: EarlyStopMonitor, val_loss: float) -> Decision:
    """Feed one epoch's validation loss; improvement must beat min_delta."""
    if not math.isfinite(val_loss):
        raise NonFiniteLoss(f"validation loss is {val_loss}")
    if val_loss < monitor.best_val_loss - monitor.min_delta:
        monitor.best_val_loss = val_loss
        monitor.epochs_since_improvement = 0
        return Decision.CONTINUE
    monitor.epochs_since_improvement += 1
    if monitor.epochs_since_improvement > monitor.patience:
        return Decision.STOP
    return Decision.CONTINUE


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    lambda_tradeoff: float = 1.0
    weight_decay: float = 1e-4
    patience: int = 5
    max_epochs: int = 100
    min_delta: float = 1e-9

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.lambda_tradeoff < 0 or self.weight_decay < 0:
            raise ValueError("lambda_tradeoff and weight_decay must be >= 0")
        if self.patience < 0 or self.max_epochs < 1:
            raise ValueError("patience must be >= 0 and max_epochs >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


def train(
    model: TinyTwoHeadModel,
    train_samples: list[LabeledSample],
    val_samples: list[LabeledSample],
    config: TrainingConfig,
) -> tuple[TinyTwoHeadModel, list[EpochRecord]]:
    """Full-batch gradient descent with early stopping on validation loss.

    Returns the final model and one record per epoch; deterministic for a
    fixed initial model and datasets.
    """
    if not train_samples or not val_samples:
        raise EmptyDataset("both train and validation splits must be non-empty")
    lam, alpha = config.lambda_tradeoff, config.weight_decay
    monitor = EarlyStopMonitor(patience=config.patience, min_delta=config.min_delta)
    history: list[EpochRecord] = []
    current = model
    for epoch in range(config.max_epochs):
        grad = loss_gradient(current, train_samples, lam, alpha)
        current = current.with_theta(sgd_step(current.theta, grad, config.learning_rate))
        train_loss = regularized_loss(current, train_samples, lam, alpha)
        val_loss = combined_loss(current, val_samples, lam)
        history.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
        if early_stopping_step(monitor, val_loss) is Decision.STOP:
            break
    return current, history


def write_history_jsonl(history: list[EpochRecord], path: str) -> None:
    """One JSON object per line: epoch, train_loss, val_loss."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(
                json.dumps(
                    {
                        "epoch": record.epoch,
                        "train_loss": record.train_loss,
                        "val_loss": record.val_loss,
                    }
                )
                + "\n"
            )
