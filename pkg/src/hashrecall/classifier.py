"""Category prediction for queries and the per-category recall budgets.

The classifier shares the hashing network's shape (two tanh hidden layers,
linear head) with a softmax output over the k categories, trained with plain
cross-entropy against the k-means assignment of each description's paired
code.  At query time the predicted distribution is turned into budgets

    R_i = max(floor(p_i * (N - k)), 1)

so every category contributes at least one candidate and the budgets total
at most N.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import AdamW, Mlp, flatten_grads, load_mlp, save_mlp
from .store import EmbeddingMatrix


@dataclass
class ClassifierModel:
    """Softmax category classifier over description embeddings."""

    net: Mlp

    @property
    def k(self) -> int:
        return self.net.output_dim

    @property
    def input_dim(self) -> int:
        return self.net.input_dim


@dataclass(frozen=True)
class ClassifierTrainConfig:
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("batch_size must be positive, epochs >= 0")


@dataclass
class ClassifierTrainResult:
    model: ClassifierModel
    loss_curve: list[float]


@dataclass(frozen=True)
class RecallAllocation:
    """Per-category candidate budgets; each >= 1, summing to at most the total."""

    budgets: np.ndarray
    total: int

    def __post_init__(self):
        budgets = np.asarray(self.budgets, dtype=np.int64)
        if (budgets < 1).any():
            raise ValueError("every category budget must be >= 1")
        if int(budgets.sum()) > self.total:
            raise ValueError("budgets exceed the total recall number")
        object.__setattr__(self, "budgets", budgets)

    @property
    def k(self) -> int:
        return self.budgets.shape[0]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_classifier(
    desc: EmbeddingMatrix,
    labels: np.ndarray,
    k: int,
    cfg: ClassifierTrainConfig = ClassifierTrainConfig(),
) -> ClassifierTrainResult:
    """Train on description embeddings against category labels in [0, k)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (desc.count,):
        raise ValueError("labels must align one-to-one with description rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range: labels must be in [0, {k})")
    rng = np.random.default_rng(cfg.seed)
    dim = desc.dim
    model = ClassifierModel(net=Mlp.init([dim, dim, dim, k], rng))
    opt = AdamW(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    data = desc.data.astype(np.float64)
    n = desc.count
    curve: list[float] = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, y = data[idx], labels[idx]
            logits, acts = model.net.forward(x)
            proba = _softmax(logits)
            m = len(idx)
            picked = np.maximum(proba[np.arange(m), y], 1e-300)
            loss = float(-np.log(picked).mean())
            d_logits = proba.copy()
            d_logits[np.arange(m), y] -= 1.0
            d_logits /= m
            grads = model.net.backward(acts, d_logits)
            opt.step(model.net.params(), flatten_grads(grads))
            total += loss
            batches += 1
        curve.append(total / batches)
    return ClassifierTrainResult(model=model, loss_curve=curve)


def predict_proba(
    model: ClassifierModel, query: EmbeddingMatrix | np.ndarray
) -> np.ndarray:
    """Probability distribution over the k categories; rows sum to 1."""
    x = query.data if isinstance(query, EmbeddingMatrix) else np.asarray(query, dtype=np.float64)
    single = x.ndim == 1
    logits, _ = model.net.forward(np.atleast_2d(x))
    proba = _softmax(logits)
    return proba[0] if single else proba


def allocate_recall(p: np.ndarray, total: int) -> RecallAllocation:
    """Budgets R_i = max(floor(p_i * (N - k)), 1) for a probability vector p."""
    p = np.asarray(p, dtype=np.float64)
    k = p.shape[0]
    if total <= k:
        raise ValueError(f"recall budget too small: N={total} must exceed k={k}")
    if (p < 0).any() or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError("p must be a probability vector")
    budgets = np.maximum(np.floor(p * (total - k)).astype(np.int64), 1)
    return RecallAllocation(budgets=budgets, total=total)


def save_classifier(model: ClassifierModel, directory: Path | str) -> None:
    save_mlp(model.net, directory, extra={"kind": "classifier", "k": model.k})


def load_classifier(directory: Path | str) -> ClassifierModel:
    net, descriptor = load_mlp(directory)
    if descriptor.get("kind") != "classifier":
        raise ValueError(f"checkpoint at {directory} is not a classifier")
    return ClassifierModel(net=net)
