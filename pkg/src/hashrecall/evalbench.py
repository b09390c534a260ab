"""Accuracy, ablation, and timing harness for the two-stage search pipeline.

Accuracy is SuccessRate@k: the fraction of queries whose paired item appears
in the top k of the ranked result (rank is 1-based; a missing item counts as
a miss).  Ablations swap the recall rule while keeping everything else fixed:

    full                    budgets from the classifier's distribution
    without_classification  one global Hamming top-N over the whole corpus
    one_classification      N-k+1 to the argmax category, 1 elsewhere
    ideal_classification    N-k+1 to the true category, 1 elsewhere

The timing harness measures the online stages single-threaded: the vector
similarity stage (full float32 cosine scan for the baseline; classifier +
query hashing + Hamming scan for the hash pipeline) and the sorting stage
(full argsort for the baseline; per-category bounded selection plus the
candidate re-rank for the hash pipeline).  Each measurement is repeated and
the median reported.
"""

from __future__ import annotations

import csv
import enum
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .classifier import ClassifierModel, RecallAllocation, allocate_recall, predict_proba
from .engine import (
    QueryResult,
    SearchIndex,
    _bounded_smallest,
    recall,
    recall_global,
    rerank,
    search,
)
from .hashing import binarize
from .packed import hamming_to_all, pack_bits
from .store import EmbeddingMatrix, unit_rows

METRIC_KS = (1, 5, 10)


class AblationVariant(enum.Enum):
    FULL = "full"
    WITHOUT_CLASSIFICATION = "without_classification"
    ONE_CLASSIFICATION = "one_classification"
    IDEAL_CLASSIFICATION = "ideal_classification"


def success_rate_at_k(
    results: list[np.ndarray], truth: list[int] | np.ndarray, k: int
) -> float:
    """Mean over queries of [1-based rank of the true item <= k]."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(results) != len(truth):
        raise ValueError("results and truth must align")
    if len(results) == 0:
        raise ValueError("no queries")
    hits = 0
    for ranked, want in zip(results, truth):
        top = np.asarray(ranked)[:k]
        if (top == want).any():
            hits += 1
    return hits / len(results)


def exact_ranked_ids(
    index: SearchIndex, queries: np.ndarray, top_n: int
) -> list[np.ndarray]:
    """Full-corpus cosine ranking per query row; the retention baseline."""
    unit_corpus = unit_rows(index.embeddings.data)
    ids = np.arange(index.count)
    out = []
    for q in np.atleast_2d(np.asarray(queries, dtype=np.float64)):
        scores = unit_corpus @ unit_rows(q)
        order = np.lexsort((ids, -scores))
        out.append(order[:top_n].astype(np.int64))
    return out


def _one_hot_budgets(k: int, hot: int, total: int) -> RecallAllocation:
    budgets = np.ones(k, dtype=np.int64)
    budgets[hot] = total - k + 1
    return RecallAllocation(budgets=budgets, total=total)


def variant_query(
    index: SearchIndex,
    query: np.ndarray,
    variant: AblationVariant,
    n_recall: int,
    true_category: int | None = None,
) -> QueryResult:
    """One query under the given recall rule."""
    query = np.asarray(query, dtype=np.float64).ravel()
    if variant is AblationVariant.FULL:
        return search(index, query, n_recall)
    query_code = binarize(index.desc_hash, query.reshape(1, -1))
    if variant is AblationVariant.WITHOUT_CLASSIFICATION:
        ids, dists = recall_global(index, query_code, n_recall)
        return rerank(index, query, ids, None, dists)
    if variant is AblationVariant.ONE_CLASSIFICATION:
        hot = int(np.argmax(predict_proba(index.classifier, query)))
    else:
        if true_category is None:
            raise ValueError("ideal variant requires true category labels")
        hot = int(true_category)
    allocation = _one_hot_budgets(index.k, hot, n_recall)
    ids, dists = recall(index, query_code, allocation)
    return rerank(index, query, ids, allocation.budgets, dists)


@dataclass
class VariantOutcome:
    variant: AblationVariant
    metrics: dict[str, float]
    ranked: list[np.ndarray] = field(repr=False, default_factory=list)


def run_ablation(
    index: SearchIndex,
    queries: EmbeddingMatrix | np.ndarray,
    truth_ids: np.ndarray,
    variant: AblationVariant,
    n_recall: int | None = None,
    true_categories: np.ndarray | None = None,
) -> VariantOutcome:
    """Evaluate one recall rule over a query set with known true items."""
    data = queries.data if isinstance(queries, EmbeddingMatrix) else np.asarray(queries)
    data = np.atleast_2d(data).astype(np.float64)
    truth_ids = np.asarray(truth_ids, dtype=np.int64)
    if data.shape[0] != truth_ids.shape[0]:
        raise ValueError("queries and truth_ids must align")
    total = index.default_recall if n_recall is None else n_recall
    if variant is AblationVariant.IDEAL_CLASSIFICATION and true_categories is None:
        raise ValueError("ideal variant requires true category labels")
    top_n = max(METRIC_KS)
    ranked = []
    for i in range(data.shape[0]):
        cat = int(true_categories[i]) if true_categories is not None else None
        result = variant_query(index, data[i], variant, total, cat)
        ranked.append(result.item_ids[:top_n])
    metrics = {
        f"r{k}": success_rate_at_k(ranked, truth_ids, k) for k in METRIC_KS
    }
    return VariantOutcome(variant=variant, metrics=metrics, ranked=ranked)


def classifier_accuracy(
    model: ClassifierModel,
    desc: EmbeddingMatrix | np.ndarray,
    labels: np.ndarray,
) -> float:
    """Fraction of rows whose argmax predicted category equals the label."""
    proba = predict_proba(model, desc)
    predicted = np.atleast_2d(proba).argmax(axis=1)
    labels = np.asarray(labels, dtype=np.int64)
    return float((predicted == labels).mean())


@dataclass
class StageTiming:
    """Median wall-clock seconds for one mode's online stages."""

    mode: str
    n_queries: int
    repeats: int
    similarity_s: float
    sorting_s: float

    @property
    def total_s(self) -> float:
        return self.similarity_s + self.sorting_s

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_queries": self.n_queries,
            "repeats": self.repeats,
            "similarity_s": self.similarity_s,
            "sorting_s": self.sorting_s,
            "total_s": self.total_s,
            "similarity_per_query_s": self.similarity_s / self.n_queries,
            "sorting_per_query_s": self.sorting_s / self.n_queries,
        }


def _time_baseline(unit_corpus: np.ndarray, queries: np.ndarray) -> tuple[float, float]:
    n_q = queries.shape[0]
    scores = [None] * n_q
    t0 = time.perf_counter()
    for i in range(n_q):
        q = queries[i]
        q = q / max(float(np.linalg.norm(q)), np.finfo(np.float32).tiny)
        scores[i] = unit_corpus @ q
    t1 = time.perf_counter()
    for i in range(n_q):
        np.argsort(-scores[i], kind="quicksort")
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1


def _f32_net(net) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Float32 weight copies for the timed path, prepared outside the clock."""
    return (
        [w.astype(np.float32) for w in net.weights],
        [b.astype(np.float32) for b in net.biases],
    )


def _f32_head(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    h = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        h = np.tanh(z) if i < last else z
    return h


def _softmax64(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def _time_coshc(
    index: SearchIndex, queries: np.ndarray, n_recall: int
) -> tuple[float, float]:
    clf32 = _f32_net(index.classifier.net)
    hash32 = _f32_net(index.desc_hash.net)
    n_q = queries.shape[0]
    staged = [None] * n_q
    t0 = time.perf_counter()
    for i in range(n_q):
        q = queries[i].reshape(1, -1)
        logits = _f32_head(*clf32, q)
        proba = _softmax64(logits[0])
        allocation = allocate_recall(proba, n_recall)
        head = _f32_head(*hash32, q)
        query_words = pack_bits(head > 0.0).words[0]
        dists = [
            hamming_to_all(index.bucket_words[j], query_words)
            for j in range(index.k)
        ]
        staged[i] = (allocation, dists)
    t1 = time.perf_counter()
    for i in range(n_q):
        allocation, dists = staged[i]
        cand: list[int] = []
        for j in range(index.k):
            ids = index.bucket_ids[j]
            if ids.size == 0:
                continue
            cand.extend(
                item
                for _, item in _bounded_smallest(
                    dists[j], ids, int(allocation.budgets[j])
                )
            )
        rerank(index, queries[i].astype(np.float64), np.asarray(cand, dtype=np.int64))
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1


def bench_timing(
    index: SearchIndex,
    queries: EmbeddingMatrix | np.ndarray,
    n_recall: int | None = None,
    mode: str = "coshc",
    repeats: int = 5,
) -> StageTiming:
    """Single-threaded stage timings, median over `repeats` runs."""
    if mode not in ("baseline_linear_scan", "coshc"):
        raise ValueError(f"unknown mode: {mode!r}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    data = queries.data if isinstance(queries, EmbeddingMatrix) else np.asarray(queries)
    data = np.atleast_2d(data)
    total = index.default_recall if n_recall is None else n_recall

    sims, sorts = [], []
    with threadpool_limits(limits=1):
        if mode == "baseline_linear_scan":
            q32 = np.ascontiguousarray(data, dtype=np.float32)
            unit_corpus = unit_rows(index.embeddings.data).astype(np.float32)
            for _ in range(repeats):
                sim, sort = _time_baseline(unit_corpus, q32)
                sims.append(sim)
                sorts.append(sort)
        else:
            q32 = np.ascontiguousarray(data, dtype=np.float32)
            for _ in range(repeats):
                sim, sort = _time_coshc(index, q32, total)
                sims.append(sim)
                sorts.append(sort)
    return StageTiming(
        mode=mode,
        n_queries=data.shape[0],
        repeats=repeats,
        similarity_s=float(np.median(sims)),
        sorting_s=float(np.median(sorts)),
    )


@dataclass
class EvalReport:
    """Everything one evaluation run produced, serializable to JSON and CSV."""

    metadata: dict
    variants: dict[str, dict[str, float]]
    exact: dict[str, float]
    classifier_accuracy: float | None = None
    timings: dict[str, dict] | None = None

    def as_dict(self) -> dict:
        out = {
            "metadata": self.metadata,
            "exact": self.exact,
            "variants": self.variants,
        }
        if self.classifier_accuracy is not None:
            out["classifier_accuracy"] = self.classifier_accuracy
        if self.timings is not None:
            out["timings"] = self.timings
        return out

    def write_json(self, path: Path | str) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv_rows(self) -> list[tuple[str, str, float]]:
        rows = [("exact", f"r{k}", self.exact[f"r{k}"]) for k in METRIC_KS]
        for name, metrics in self.variants.items():
            rows.extend((name, f"r{k}", metrics[f"r{k}"]) for k in METRIC_KS)
        if self.classifier_accuracy is not None:
            rows.append(("classifier", "accuracy", self.classifier_accuracy))
        if self.timings:
            for mode, timing in self.timings.items():
                for key in ("similarity_s", "sorting_s", "total_s"):
                    rows.append((mode, key, timing[key]))
        return rows

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("system", "metric", "value"))
            writer.writerows(self.csv_rows())


def evaluate(
    index: SearchIndex,
    queries: EmbeddingMatrix | np.ndarray,
    truth_ids: np.ndarray,
    variants: list[AblationVariant],
    n_recall: int | None = None,
    timing: bool = False,
    timing_repeats: int = 5,
    metadata: dict | None = None,
) -> EvalReport:
    """Run the exact baseline plus the requested variants into one report."""
    data = queries.data if isinstance(queries, EmbeddingMatrix) else np.asarray(queries)
    data = np.atleast_2d(data).astype(np.float64)
    truth_ids = np.asarray(truth_ids, dtype=np.int64)
    total = index.default_recall if n_recall is None else n_recall
    true_categories = index.assignments[truth_ids]

    exact_lists = exact_ranked_ids(index, data, max(METRIC_KS))
    exact = {f"r{k}": success_rate_at_k(exact_lists, truth_ids, k) for k in METRIC_KS}

    results = {}
    for variant in variants:
        outcome = run_ablation(
            index, data, truth_ids, variant, total, true_categories
        )
        results[variant.value] = outcome.metrics

    accuracy = classifier_accuracy(index.classifier, data, true_categories)
    timings = None
    if timing:
        timings = {
            mode: bench_timing(index, data, total, mode, timing_repeats).as_dict()
            for mode in ("baseline_linear_scan", "coshc")
        }
    meta = {
        "corpus_size": index.count,
        "dim": index.dim,
        "k": index.k,
        "bits": index.bits,
        "n_recall": total,
        "n_queries": int(data.shape[0]),
    }
    if metadata:
        meta.update(metadata)
    return EvalReport(
        metadata=meta,
        variants=results,
        exact=exact,
        classifier_accuracy=accuracy,
        timings=timings,
    )
