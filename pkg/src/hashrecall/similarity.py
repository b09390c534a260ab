"""Per-batch joint similarity targets that supervise hash-code training.

The target for a batch of m aligned <code, description> embedding pairs is
built in three steps: blend the two modalities' cosine similarity matrices
(weight beta), mix in a second-order neighborhood term (weight eta), and
force the diagonal to exactly 1 so each pair's own code and description are
pushed to identical hash codes:

    S_mix = beta * S_code + (1 - beta) * S_desc
    S     = (1 - eta) * S_mix + eta * (S_mix @ S_mix.T) / m
    S[i, i] = 1
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .store import EmbeddingMatrix, unit_rows


@dataclass(frozen=True)
class SimilarityConfig:
    """Weights for the joint similarity target; defaults beta=0.6, eta=0.4."""

    beta: float = 0.6
    eta: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must be in [0, 1]")


def cosine_similarity_matrix(v: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    """All-pairs cosine similarity of the rows; zero rows yield zero similarity."""
    data = v.data if isinstance(v, EmbeddingMatrix) else np.asarray(v)
    if data.shape[0] == 0:
        raise ValueError("similarity of an empty matrix is undefined")
    unit = unit_rows(data)
    return unit @ unit.T


def build_target(
    code_batch: EmbeddingMatrix | np.ndarray,
    desc_batch: EmbeddingMatrix | np.ndarray,
    cfg: SimilarityConfig = SimilarityConfig(),
) -> np.ndarray:
    """Joint similarity target for one batch: symmetric, unit diagonal."""
    code = code_batch.data if isinstance(code_batch, EmbeddingMatrix) else np.asarray(code_batch)
    desc = desc_batch.data if isinstance(desc_batch, EmbeddingMatrix) else np.asarray(desc_batch)
    if code.shape[0] != desc.shape[0]:
        raise ValueError(
            f"batch size mismatch: {code.shape[0]} code rows vs {desc.shape[0]} desc rows"
        )
    m = code.shape[0]
    s_code = cosine_similarity_matrix(code)
    s_desc = cosine_similarity_matrix(desc)
    s_mix = cfg.beta * s_code + (1.0 - cfg.beta) * s_desc
    target = (1.0 - cfg.eta) * s_mix + cfg.eta * (s_mix @ s_mix.T) / m
    np.fill_diagonal(target, 1.0)
    return target
