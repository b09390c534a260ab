"""Shared fixtures: small corpora and a trained pipeline reused across tests."""

import numpy as np
import pytest

from hashrecall import (
    ClassifierTrainConfig,
    HashTrainConfig,
    PairedCorpus,
    SimilarityConfig,
    SyntheticSpec,
    build_index,
    generate_synthetic,
    kmeans_fit,
    train_classifier,
    train_hashing,
)


@pytest.fixture(scope="session")
def small_corpus() -> PairedCorpus:
    spec = SyntheticSpec(n_pairs=600, dim=32, n_latent_clusters=6, noise_sigma=0.05, seed=7)
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_spec() -> SyntheticSpec:
    return SyntheticSpec(n_pairs=600, dim=32, n_latent_clusters=6, noise_sigma=0.05, seed=7)


def build_small_index(
    corpus: PairedCorpus,
    k: int = 6,
    bits: int = 64,
    epochs: int = 30,
    learning_rate: float = 1e-3,
    classifier_epochs: int | None = None,
    n_recall: int = 60,
    seed: int = 11,
):
    """Train a compact but functional index; higher lr keeps small runs short."""
    cluster = kmeans_fit(corpus.code, k, seed=seed)
    hashed = train_hashing(
        corpus,
        SimilarityConfig(),
        HashTrainConfig(
            bits=bits, epochs=epochs, learning_rate=learning_rate, seed=seed + 1
        ),
    )
    trained = train_classifier(
        corpus.desc,
        cluster.assignments,
        k,
        ClassifierTrainConfig(
            epochs=classifier_epochs if classifier_epochs is not None else epochs,
            learning_rate=learning_rate,
            seed=seed + 2,
        ),
    )
    index = build_index(
        corpus.code, cluster, hashed.code_model, trained.model, hashed.desc_model,
        default_recall=n_recall,
    )
    return index, hashed, trained


@pytest.fixture(scope="session")
def trained_index(small_corpus):
    index, _, _ = build_small_index(small_corpus)
    return index


@pytest.fixture(scope="session")
def untrained_index(small_corpus):
    """Random-weight models are enough for structural and oracle tests."""
    index, _, _ = build_small_index(small_corpus, epochs=0, classifier_epochs=0)
    return index


def exact_cosine_ranking(code_data: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Independent linear-scan oracle: ids by descending cosine, ties ascending id."""
    code = np.asarray(code_data, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    scores = np.zeros(code.shape[0])
    for i in range(code.shape[0]):
        denom = np.linalg.norm(code[i]) * qn
        scores[i] = (code[i] @ q) / denom if denom > 0 else 0.0
    return np.lexsort((np.arange(code.shape[0]), -scores))
