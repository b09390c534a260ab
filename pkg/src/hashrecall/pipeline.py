"""Offline orchestration: split, cluster, train, and assemble the index.

The test split is held out of clustering, hash training, and classifier
training; the index itself still covers the full corpus (trained models are
applied to every item), mirroring a live codebase that contains documents no
model was fitted on.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ClassifierTrainConfig, train_classifier
from .cluster import kmeans_fit
from .config import PipelineConfig
from .engine import SearchIndex, build_index, save_index
from .hashing import HashTrainConfig, train_hashing
from .similarity import SimilarityConfig
from .store import EmbeddingMatrix, PairedCorpus


@dataclass(frozen=True)
class SplitIds:
    train: np.ndarray
    test: np.ndarray


@dataclass
class BuildArtifacts:
    index: SearchIndex
    split: SplitIds
    hash_loss_curve: list[float]
    classifier_loss_curve: list[float]


def split_corpus(n: int, test_fraction: float, seed: int) -> SplitIds:
    """Seeded held-out split; ids are sorted ascending within each side."""
    rng = np.random.default_rng(seed)
    n_test = int(n * test_fraction)
    test = np.sort(rng.choice(n, size=n_test, replace=False)).astype(np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return SplitIds(train=np.flatnonzero(mask).astype(np.int64), test=test)


def _subset(corpus: PairedCorpus, ids: np.ndarray) -> PairedCorpus:
    return PairedCorpus(
        code=EmbeddingMatrix(corpus.code.data[ids]),
        desc=EmbeddingMatrix(corpus.desc.data[ids]),
    )


@contextmanager
def _stage(name: str):
    """Prefix failures with the pipeline stage they came from."""
    try:
        yield
    except ValueError as exc:
        raise ValueError(f"{name} stage: {exc}") from exc


def build_pipeline(corpus: PairedCorpus, cfg: PipelineConfig) -> BuildArtifacts:
    """Run the full offline stage under one config; deterministic per seed."""
    split = split_corpus(corpus.count, cfg.test_fraction, cfg.sub_seed("split"))
    train = _subset(corpus, split.train)

    with _stage("cluster"):
        cluster_model = kmeans_fit(
            train.code,
            cfg.k,
            max_iter=cfg.kmeans_max_iter,
            seed=cfg.sub_seed("cluster"),
            restarts=cfg.kmeans_restarts,
        )
    with _stage("hashing"):
        hash_result = train_hashing(
            train,
            SimilarityConfig(beta=cfg.beta, eta=cfg.eta),
            HashTrainConfig(
                bits=cfg.bits,
                mu=cfg.mu,
                lambda1=cfg.lambda1,
                lambda2=cfg.lambda2,
                batch_size=cfg.batch_size,
                epochs=cfg.epochs,
                learning_rate=cfg.learning_rate,
                weight_decay=cfg.weight_decay,
                seed=cfg.sub_seed("hashing"),
            ),
        )
    with _stage("classifier"):
        classifier_result = train_classifier(
            train.desc,
            cluster_model.assignments,
            cfg.k,
            ClassifierTrainConfig(
                batch_size=cfg.batch_size,
                epochs=cfg.epochs,
                learning_rate=cfg.learning_rate,
                weight_decay=cfg.weight_decay,
                seed=cfg.sub_seed("classifier"),
            ),
        )
    with _stage("index"):
        index = build_index(
            corpus.code,
            cluster_model,
            hash_result.code_model,
            classifier_result.model,
            hash_result.desc_model,
            default_recall=cfg.n_recall,
        )
    return BuildArtifacts(
        index=index,
        split=split,
        hash_loss_curve=hash_result.loss_curve,
        classifier_loss_curve=classifier_result.loss_curve,
    )


def save_build(artifacts: BuildArtifacts, cfg: PipelineConfig, out_dir: Path | str) -> None:
    """Persist the index next to the split and the training log."""
    out_dir = Path(out_dir)
    save_index(artifacts.index, out_dir)
    with open(out_dir / "split.json", "w") as fh:
        json.dump(
            {
                "train": artifacts.split.train.tolist(),
                "test": artifacts.split.test.tolist(),
            },
            fh,
        )
        fh.write("\n")
    with open(out_dir / "build_log.json", "w") as fh:
        json.dump(
            {
                "config": cfg.as_dict(),
                "hash_loss_curve": artifacts.hash_loss_curve,
                "classifier_loss_curve": artifacts.classifier_loss_curve,
                "kmeans_inertia": artifacts.index.cluster.inertia,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


def load_split(path: Path | str) -> SplitIds:
    with open(path) as fh:
        raw = json.load(fh)
    return SplitIds(
        train=np.asarray(raw["train"], dtype=np.int64),
        test=np.asarray(raw["test"], dtype=np.int64),
    )
