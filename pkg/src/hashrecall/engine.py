"""Immutable search index and the two-stage query path.

Offline, the index buckets every item's packed hash code by its k-means
category and keeps the raw embeddings for re-ranking.  Online, a query is
classified into category budgets, hashed, and matched per category: within
each bucket the budgeted number of smallest Hamming distances is selected
with a bounded max-heap (ties broken by ascending item id), then the union
of candidates is re-scored with exact cosine on the original embeddings and
returned in descending score order (score ties again by ascending id).
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import (
    ClassifierModel,
    RecallAllocation,
    allocate_recall,
    load_classifier,
    predict_proba,
    save_classifier,
)
from .cluster import ClusterModel, assign, load_centroids, save_centroids
from .errors import FormatError, InvariantError
from .hashing import HashingModel, binarize, load_hashing_model, save_hashing_model
from .packed import (
    PackedCodeMatrix,
    hamming_distance,
    hamming_to_all,
    read_packed_codes,
    write_packed_codes,
)
from .store import (
    EmbeddingMatrix,
    read_assignments,
    read_embeddings,
    unit_rows,
    write_assignments,
    write_embeddings,
)

__all__ = [
    "SearchIndex",
    "QueryResult",
    "build_index",
    "save_index",
    "load_index",
    "recall",
    "recall_global",
    "rerank",
    "search",
    "hamming_distance",
]

INDEX_FORMAT = "hashrecall-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class SearchIndex:
    """Everything the online stage needs; immutable once built."""

    bits: int
    k: int
    default_recall: int
    embeddings: EmbeddingMatrix
    assignments: np.ndarray
    bucket_ids: list[np.ndarray]
    bucket_words: list[np.ndarray]
    cluster: ClusterModel
    classifier: ClassifierModel
    desc_hash: HashingModel

    @property
    def count(self) -> int:
        return self.embeddings.count

    @property
    def dim(self) -> int:
        return self.embeddings.dim


@dataclass(frozen=True)
class QueryResult:
    """Ranked candidates plus the recall stage's diagnostics."""

    item_ids: np.ndarray
    scores: np.ndarray
    budgets: np.ndarray | None
    candidate_ids: np.ndarray
    candidate_hammings: np.ndarray


def build_index(
    code_embeddings: EmbeddingMatrix,
    cluster_model: ClusterModel,
    code_hash: HashingModel,
    classifier_model: ClassifierModel,
    desc_hash: HashingModel,
    default_recall: int = 100,
) -> SearchIndex:
    """Bucket the corpus by category and pack each item's binary code."""
    dim = code_embeddings.dim
    for name, got in (
        ("cluster centroids", cluster_model.dim),
        ("code hashing network", code_hash.input_dim),
        ("classifier", classifier_model.input_dim),
        ("description hashing network", desc_hash.input_dim),
    ):
        if got != dim:
            raise ValueError(f"dimension mismatch: {name} expects {got}, corpus has {dim}")
    if classifier_model.k != cluster_model.k:
        raise ValueError(
            f"category mismatch: classifier has k={classifier_model.k}, "
            f"clustering has k={cluster_model.k}"
        )
    if code_hash.bits != desc_hash.bits:
        raise ValueError("code and description hashing networks disagree on bits")

    assignments = assign(cluster_model, code_embeddings)
    codes = binarize(code_hash, code_embeddings)
    bucket_ids, bucket_words = [], []
    for j in range(cluster_model.k):
        ids = np.flatnonzero(assignments == j)
        bucket_ids.append(ids.astype(np.int64))
        bucket_words.append(codes.words[ids])
    return SearchIndex(
        bits=code_hash.bits,
        k=cluster_model.k,
        default_recall=default_recall,
        embeddings=code_embeddings,
        assignments=assignments,
        bucket_ids=bucket_ids,
        bucket_words=bucket_words,
        cluster=cluster_model,
        classifier=classifier_model,
        desc_hash=desc_hash,
    )


def _bounded_smallest(
    dists: np.ndarray, ids: np.ndarray, budget: int
) -> list[tuple[int, int]]:
    """The `budget` smallest (distance, id) pairs in ascending order.

    A size-bounded max-heap keeps the current best set; a candidate replaces
    the heap top only when strictly smaller as a (distance, id) tuple, which
    realizes the ascending-id tie-break exactly.
    """
    if budget >= len(ids):
        return sorted(zip(dists.tolist(), ids.tolist()))
    heap: list[tuple[int, int]] = []
    for dist, item in zip(dists.tolist(), ids.tolist()):
        if len(heap) < budget:
            heapq.heappush(heap, (-dist, -item))
        elif (dist, item) < (-heap[0][0], -heap[0][1]):
            heapq.heapreplace(heap, (-dist, -item))
    return sorted((-d, -i) for d, i in heap)


def _query_words(query_code: PackedCodeMatrix | np.ndarray, bits: int) -> np.ndarray:
    if isinstance(query_code, PackedCodeMatrix):
        if query_code.bits != bits:
            raise ValueError(
                f"code length mismatch: query has {query_code.bits} bits, index has {bits}"
            )
        if query_code.count != 1:
            raise ValueError("query code must be a single row")
        return query_code.words[0]
    return np.asarray(query_code, dtype=np.uint64).ravel()


def recall(
    index: SearchIndex,
    query_code: PackedCodeMatrix | np.ndarray,
    allocation: RecallAllocation,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-category Hamming top-R_i candidates, concatenated in category order."""
    if allocation.k != index.k:
        raise ValueError(
            f"allocation has {allocation.k} budgets, index has {index.k} categories"
        )
    q = _query_words(query_code, index.bits)
    out_ids: list[int] = []
    out_dists: list[int] = []
    for j in range(index.k):
        ids = index.bucket_ids[j]
        if ids.size == 0:
            continue
        dists = hamming_to_all(index.bucket_words[j], q)
        for dist, item in _bounded_smallest(dists, ids, int(allocation.budgets[j])):
            out_dists.append(dist)
            out_ids.append(item)
    return np.asarray(out_ids, dtype=np.int64), np.asarray(out_dists, dtype=np.int64)


def recall_global(
    index: SearchIndex, query_code: PackedCodeMatrix | np.ndarray, total: int
) -> tuple[np.ndarray, np.ndarray]:
    """Category-blind Hamming top-N over the whole corpus (ties by ascending id)."""
    q = _query_words(query_code, index.bits)
    all_dists = np.empty(index.count, dtype=np.int64)
    all_ids = np.empty(index.count, dtype=np.int64)
    pos = 0
    for j in range(index.k):
        ids = index.bucket_ids[j]
        if ids.size == 0:
            continue
        all_dists[pos : pos + ids.size] = hamming_to_all(index.bucket_words[j], q)
        all_ids[pos : pos + ids.size] = ids
        pos += ids.size
    pairs = _bounded_smallest(all_dists[:pos], all_ids[:pos], total)
    ids = np.asarray([i for _, i in pairs], dtype=np.int64)
    dists = np.asarray([d for d, _ in pairs], dtype=np.int64)
    return ids, dists


def rerank(
    index: SearchIndex,
    query_embedding: np.ndarray,
    candidate_ids: np.ndarray,
    budgets: np.ndarray | None = None,
    candidate_hammings: np.ndarray | None = None,
) -> QueryResult:
    """Exact cosine scores over the candidates, descending, ties by ascending id."""
    candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
    if candidate_ids.size and (
        candidate_ids.min() < 0 or candidate_ids.max() >= index.count
    ):
        raise ValueError("invalid candidate id")
    query = np.asarray(query_embedding, dtype=np.float64).ravel()
    if query.shape[0] != index.dim:
        raise ValueError(
            f"dimension mismatch: query has dim {query.shape[0]}, index has {index.dim}"
        )
    cand_unit = unit_rows(index.embeddings.data[candidate_ids])
    scores = cand_unit @ unit_rows(query)
    order = np.lexsort((candidate_ids, -scores))
    return QueryResult(
        item_ids=candidate_ids[order],
        scores=scores[order],
        budgets=budgets,
        candidate_ids=candidate_ids,
        candidate_hammings=(
            np.asarray(candidate_hammings, dtype=np.int64)
            if candidate_hammings is not None
            else np.empty(0, dtype=np.int64)
        ),
    )


def search(
    index: SearchIndex, query_embedding: np.ndarray, n_recall: int | None = None
) -> QueryResult:
    """Full online pipeline: classify, budget, hash, recall, re-rank."""
    total = index.default_recall if n_recall is None else n_recall
    query = np.asarray(query_embedding, dtype=np.float64).ravel()
    proba = predict_proba(index.classifier, query)
    allocation = allocate_recall(proba, total)
    query_code = binarize(index.desc_hash, query.reshape(1, -1))
    candidate_ids, hammings = recall(index, query_code, allocation)
    return rerank(index, query, candidate_ids, allocation.budgets, hammings)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_index(index: SearchIndex, directory: Path | str) -> None:
    """Persist the index as a directory; the manifest carries file checksums."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "codes").mkdir(exist_ok=True)

    files: dict[str, str] = {
        "embeddings": "embeddings.cosh",
        "centroids": "centroids.cosh",
        "assignments": "assignments.bin",
    }
    write_embeddings(index.embeddings, directory / files["embeddings"])
    save_centroids(index.cluster, directory / files["centroids"])
    write_assignments(index.assignments, directory / files["assignments"])
    width = len(str(max(index.k - 1, 0)))
    for j in range(index.k):
        name = f"codes/category_{j:0{width}d}.cosb"
        files[f"codes_{j}"] = name
        write_packed_codes(
            PackedCodeMatrix(words=index.bucket_words[j], bits=index.bits),
            directory / name,
        )
    save_classifier(index.classifier, directory / "models" / "classifier")
    save_hashing_model(index.desc_hash, directory / "models" / "desc_hash")
    for sub in ("classifier", "desc_hash"):
        for f in sorted((directory / "models" / sub).iterdir()):
            files[f"model_{sub}_{f.name}"] = f"models/{sub}/{f.name}"

    manifest = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "k": index.k,
        "bits": index.bits,
        "default_recall": index.default_recall,
        "count": index.count,
        "dim": index.dim,
        "inertia": index.cluster.inertia,
        "files": files,
        "sha256": {key: _sha256(directory / rel) for key, rel in sorted(files.items())},
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_index(directory: Path | str, verify: bool = True) -> SearchIndex:
    """Load a persisted index, verifying the manifest checksums by default."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"not an index directory: {directory} has no manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != INDEX_FORMAT:
        raise FormatError(f"bad manifest format: {manifest.get('format')!r}")
    if manifest.get("version") != INDEX_VERSION:
        raise FormatError(f"version mismatch: {manifest.get('version')}")
    files = manifest["files"]
    if verify:
        for key, rel in files.items():
            digest = _sha256(directory / rel)
            if digest != manifest["sha256"][key]:
                raise FormatError(f"checksum mismatch for {rel}")

    embeddings = read_embeddings(directory / files["embeddings"])
    assignments = read_assignments(directory / files["assignments"])
    cluster_model = load_centroids(
        directory / files["centroids"], assignments, inertia=manifest["inertia"]
    )
    classifier_model = load_classifier(directory / "models" / "classifier")
    desc_hash = load_hashing_model(directory / "models" / "desc_hash")

    k, bits = manifest["k"], manifest["bits"]
    bucket_ids, bucket_words = [], []
    total = 0
    for j in range(k):
        codes = read_packed_codes(directory / files[f"codes_{j}"])
        if codes.bits != bits:
            raise FormatError(f"category {j} codes have {codes.bits} bits, expected {bits}")
        ids = np.flatnonzero(assignments == j).astype(np.int64)
        if ids.size != codes.count:
            raise InvariantError(
                f"category {j} has {ids.size} assigned items but {codes.count} stored codes"
            )
        bucket_ids.append(ids)
        bucket_words.append(codes.words)
        total += ids.size
    if total != embeddings.count:
        raise InvariantError(
            f"bucket sizes sum to {total}, corpus has {embeddings.count} items"
        )
    return SearchIndex(
        bits=bits,
        k=k,
        default_recall=manifest["default_recall"],
        embeddings=embeddings,
        assignments=assignments,
        bucket_ids=bucket_ids,
        bucket_words=bucket_words,
        cluster=cluster_model,
        classifier=classifier_model,
        desc_hash=desc_hash,
    )
