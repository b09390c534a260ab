"""Trainable binary hashing of embeddings, one network per modality.

Each network maps an embedding to d soft code values tanh(alpha * H), with H
the linear head's pre-activation.  The sharpness alpha grows every epoch
(default: alpha = epoch number), annealing the soft codes toward +-1 so that
the final binarization sign(H) loses as little as possible.  Code-side and
description-side networks are trained jointly: each batch builds the joint
similarity target from the raw embeddings and both networks descend the same
loss, which compares the three cross/within Gram matrices of the soft codes
against min(mu * target, 1):

    loss = |T - Bc Bd'/d|^2_F + lambda1 |T - Bc Bc'/d|^2_F + lambda2 |T - Bd Bd'/d|^2_F

Binarization maps H > 0 to bit 1 (+1) and H <= 0 to bit 0 (-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .nn import AdamW, Mlp, flatten_grads, load_mlp, save_mlp
from .packed import PackedCodeMatrix, pack_bits, words_per_row
from .similarity import SimilarityConfig, build_target
from .store import EmbeddingMatrix, PairedCorpus


@dataclass
class HashingModel:
    """Hashing network and its code length in bits.

    final_alpha records the sharpness the soft head had reached when training
    stopped; binarization itself only needs the sign of the head.
    """

    net: Mlp
    final_alpha: float | None = None

    @property
    def bits(self) -> int:
        return self.net.output_dim

    @property
    def input_dim(self) -> int:
        return self.net.input_dim


@dataclass(frozen=True)
class HashTrainConfig:
    """Hyperparameters for joint hash training.

    alpha_for_epoch maps the 1-based epoch number to the sharpness alpha and
    must be strictly increasing; the default is the epoch number itself.
    """

    bits: int = 128
    mu: float = 1.5
    lambda1: float = 0.1
    lambda2: float = 0.1
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0
    alpha_for_epoch: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.bits <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("bits and batch_size must be positive, epochs >= 0")

    def alpha(self, epoch: int) -> float:
        if self.alpha_for_epoch is not None:
            return float(self.alpha_for_epoch(epoch))
        return float(epoch)


@dataclass
class HashTrainResult:
    code_model: HashingModel
    desc_model: HashingModel
    loss_curve: list[float]


def forward_soft(
    model: HashingModel, batch: EmbeddingMatrix | np.ndarray, alpha: float
) -> np.ndarray:
    """Soft codes tanh(alpha * H) for each row of the batch."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = batch.data if isinstance(batch, EmbeddingMatrix) else np.asarray(batch)
    head, _ = model.net.forward(np.atleast_2d(x).astype(np.float64))
    return np.tanh(alpha * head)


def binarize(model: HashingModel, vectors: EmbeddingMatrix | np.ndarray) -> PackedCodeMatrix:
    """Hard codes: bit j of row i is 1 iff the head pre-activation is > 0."""
    x = vectors.data if isinstance(vectors, EmbeddingMatrix) else np.asarray(vectors)
    x = np.atleast_2d(x)
    words = np.empty((x.shape[0], words_per_row(model.bits)), dtype=np.uint64)
    block = 16384  # bounds the float64 working set on large corpora
    for start in range(0, x.shape[0], block):
        head, _ = model.net.forward(x[start : start + block].astype(np.float64))
        words[start : start + block] = pack_bits(head > 0.0).words
    return PackedCodeMatrix(words=words, bits=model.bits)


def clipped_target(target: np.ndarray, mu: float) -> np.ndarray:
    """Elementwise min(mu * target, 1), the matrix the Gram terms are pulled to."""
    return np.minimum(mu * np.asarray(target, dtype=np.float64), 1.0)


def hash_loss(
    code_soft: np.ndarray,
    desc_soft: np.ndarray,
    target: np.ndarray,
    cfg: HashTrainConfig,
) -> float:
    """Squared-Frobenius loss of the three Gram matrices against the clipped target."""
    loss, _, _ = _loss_and_code_grads(code_soft, desc_soft, target, cfg)
    return loss


def _loss_and_code_grads(code_soft, desc_soft, target, cfg):
    bc = np.asarray(code_soft, dtype=np.float64)
    bd = np.asarray(desc_soft, dtype=np.float64)
    if bc.shape != bd.shape:
        raise ValueError(f"shape mismatch: {bc.shape} vs {bd.shape}")
    m = bc.shape[0]
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (m, m):
        raise ValueError(f"target must be {(m, m)}, got {target.shape}")
    d = bc.shape[1]
    t = clipped_target(target, cfg.mu)
    e_cross = t - bc @ bd.T / d
    e_code = t - bc @ bc.T / d
    e_desc = t - bd @ bd.T / d
    loss = float(
        (e_cross * e_cross).sum()
        + cfg.lambda1 * (e_code * e_code).sum()
        + cfg.lambda2 * (e_desc * e_desc).sum()
    )
    d_bc = -(2.0 / d) * (e_cross @ bd) - (2.0 / d) * cfg.lambda1 * ((e_code + e_code.T) @ bc)
    d_bd = -(2.0 / d) * (e_cross.T @ bc) - (2.0 / d) * cfg.lambda2 * ((e_desc + e_desc.T) @ bd)
    return loss, d_bc, d_bd


def hash_loss_gradients(
    code_model: HashingModel,
    desc_model: HashingModel,
    code_batch: np.ndarray,
    desc_batch: np.ndarray,
    target: np.ndarray,
    cfg: HashTrainConfig,
    alpha: float,
):
    """Loss plus analytic parameter gradients for both networks on one batch.

    Returns (loss, code_grads, desc_grads) with grads as per-layer (dW, db)
    lists, differentiated through the soft-code head tanh(alpha * H).
    """
    code_head, code_acts = code_model.net.forward(np.asarray(code_batch, dtype=np.float64))
    desc_head, desc_acts = desc_model.net.forward(np.asarray(desc_batch, dtype=np.float64))
    code_soft = np.tanh(alpha * code_head)
    desc_soft = np.tanh(alpha * desc_head)
    loss, d_bc, d_bd = _loss_and_code_grads(code_soft, desc_soft, target, cfg)
    d_code_head = d_bc * (alpha * (1.0 - code_soft * code_soft))
    d_desc_head = d_bd * (alpha * (1.0 - desc_soft * desc_soft))
    code_grads = code_model.net.backward(code_acts, d_code_head)
    desc_grads = desc_model.net.backward(desc_acts, d_desc_head)
    return loss, code_grads, desc_grads


def train_hashing(
    corpus: PairedCorpus,
    sim_cfg: SimilarityConfig = SimilarityConfig(),
    cfg: HashTrainConfig = HashTrainConfig(),
) -> HashTrainResult:
    """Jointly train the code and description hashing networks.

    Deterministic for a fixed seed: one generator drives initialization and
    the per-epoch shuffles.  Both networks start from the same seeded
    initialization and diverge only as the two modalities' data differ, so
    identical code/description embeddings binarize to identical codes.  The
    final partial batch is kept (the target normalization uses the actual
    batch size).  Returns both models and the per-epoch mean batch loss.
    """
    if corpus.count == 0:
        raise ValueError("corpus is empty")
    rng = np.random.default_rng(cfg.seed)
    dim = corpus.code.dim
    dims = [dim, dim, dim, cfg.bits]
    code_model = HashingModel(net=Mlp.init(dims, rng))
    desc_model = HashingModel(net=code_model.net.copy())
    opt_code = AdamW(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    opt_desc = AdamW(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)

    code_data = corpus.code.data.astype(np.float64)
    desc_data = corpus.desc.data.astype(np.float64)
    n = corpus.count
    curve: list[float] = []
    prev_alpha = 0.0
    for epoch in range(1, cfg.epochs + 1):
        alpha = cfg.alpha(epoch)
        if alpha <= prev_alpha:
            raise ValueError("alpha schedule must be strictly increasing")
        prev_alpha = alpha
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xc, xd = code_data[idx], desc_data[idx]
            target = build_target(xc, xd, sim_cfg)
            loss, gc, gd = hash_loss_gradients(
                code_model, desc_model, xc, xd, target, cfg, alpha
            )
            opt_code.step(code_model.net.params(), flatten_grads(gc))
            opt_desc.step(desc_model.net.params(), flatten_grads(gd))
            total += loss
            batches += 1
        curve.append(total / batches)
    code_model.final_alpha = prev_alpha if cfg.epochs else None
    desc_model.final_alpha = code_model.final_alpha
    return HashTrainResult(code_model=code_model, desc_model=desc_model, loss_curve=curve)


def save_hashing_model(model: HashingModel, directory: Path | str) -> None:
    save_mlp(
        model.net,
        directory,
        extra={"kind": "hashing", "bits": model.bits, "alpha": model.final_alpha},
    )


def load_hashing_model(directory: Path | str) -> HashingModel:
    net, descriptor = load_mlp(directory)
    if descriptor.get("kind") != "hashing":
        raise ValueError(f"checkpoint at {directory} is not a hashing model")
    return HashingModel(net=net, final_alpha=descriptor.get("alpha"))
