"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.  The heavyweight criteria (retention, speedup) build
their corpora once per session; the whole module is expected to finish in a
few minutes on a laptop-class machine.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from hashrecall import (
    AblationVariant,
    EmbeddingMatrix,
    HashTrainConfig,
    PipelineConfig,
    RecallAllocation,
    allocate_recall,
    bench_timing,
    build_index,
    build_target,
    classifier_accuracy,
    generate_synthetic,
    hamming_distance,
    hash_loss,
    hash_loss_gradients,
    kmeans_fit,
    pack_bits,
    recall,
    rerank,
    run_ablation,
    unpack_signs,
    SimilarityConfig,
    SyntheticSpec,
)
from hashrecall.classifier import ClassifierModel
from hashrecall.cli import main
from hashrecall.evalbench import exact_ranked_ids, success_rate_at_k
from hashrecall.hashing import HashingModel
from hashrecall.nn import Mlp, flatten_grads
from hashrecall.packed import hamming_to_all
from hashrecall.pipeline import build_pipeline


@contextmanager
def criterion(number: int, title: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {title}")
        raise
    print(f"[PASS] criterion {number}: {title}")


# --------------------------------------------------------------------------
# Criterion 6 and 7 share one trained pipeline over the reference corpus.
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def retention_artifacts():
    spec = SyntheticSpec(
        n_pairs=10_000, dim=128, n_latent_clusters=10, noise_sigma=0.10, seed=1234
    )
    corpus = generate_synthetic(spec)
    cfg = PipelineConfig(seed=42)
    started = time.perf_counter()
    artifacts = build_pipeline(corpus, cfg)
    build_seconds = time.perf_counter() - started
    return corpus, artifacts, build_seconds


def test_criterion_1_gradient_correctness():
    with criterion(1, "analytic gradients match central finite differences"):
        started = time.perf_counter()
        rng = np.random.default_rng(7)
        cfg = HashTrainConfig(mu=1.5, lambda1=0.1, lambda2=0.1)
        code_model = HashingModel(net=Mlp.init([8, 8, 8, 4], rng))
        desc_model = HashingModel(net=Mlp.init([8, 8, 8, 4], rng))
        xc = rng.standard_normal((3, 8))
        xd = rng.standard_normal((3, 8))
        target = build_target(xc, xd)
        alpha = 2.0

        def full_loss():
            bc = np.tanh(alpha * code_model.net.forward(xc)[0])
            bd = np.tanh(alpha * desc_model.net.forward(xd)[0])
            return hash_loss(bc, bd, target, cfg)

        _, gc, gd = hash_loss_gradients(
            code_model, desc_model, xc, xd, target, cfg, alpha
        )
        step = 1e-4
        worst = 0.0
        checked = 0
        for model, grads in ((code_model, gc), (desc_model, gd)):
            for arr, grad in zip(model.net.params(), flatten_grads(grads)):
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    orig = arr[ix]
                    arr[ix] = orig + step
                    up = full_loss()
                    arr[ix] = orig - step
                    down = full_loss()
                    arr[ix] = orig
                    fd = (up - down) / (2 * step)
                    rel = abs(grad[ix] - fd) / max(1e-8, abs(grad[ix]), abs(fd))
                    worst = max(worst, rel)
                    checked += 1
        elapsed = time.perf_counter() - started
        assert checked == 2 * (8 * 8 + 8 + 8 * 8 + 8 + 8 * 4 + 4)
        assert worst < 1e-3, f"worst relative error {worst:.2e}"
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_criterion_2_hamming_identities():
    with criterion(2, "popcount distance equals bit-loop oracle and (d-dot)/2"):
        started = time.perf_counter()
        rng = np.random.default_rng(11)
        n, d = 10_000, 128
        a_bits = rng.integers(0, 2, size=(n, d), dtype=np.uint8)
        b_bits = rng.integers(0, 2, size=(n, d), dtype=np.uint8)
        a = pack_bits(a_bits)
        b = pack_bits(b_bits)
        a_signs = unpack_signs(a).astype(np.int64)
        b_signs = unpack_signs(b).astype(np.int64)
        for i in range(n):
            got = hamming_distance(a.words[i], b.words[i])
            oracle = sum(
                1 for x, y in zip(a_bits[i].tolist(), b_bits[i].tolist()) if x != y
            )
            assert got == oracle
            assert got == (d - int(a_signs[i] @ b_signs[i])) // 2
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"took {elapsed:.1f}s"


def test_criterion_3_recall_allocation():
    with criterion(3, "recall budgets: floor rule, minimum one, total bound"):
        uniform = allocate_recall(np.full(10, 0.1), 100)
        assert uniform.budgets.tolist() == [9] * 10

        concentrated = np.zeros(10)
        concentrated[0] = 1.0
        spiked = allocate_recall(concentrated, 100)
        assert spiked.budgets.tolist() == [90] + [1] * 9

        rng = np.random.default_rng(13)
        for _ in range(1000):
            k = int(rng.integers(1, 30))
            total = int(rng.integers(k + 1, 300))
            p = rng.dirichlet(np.full(k, rng.uniform(0.1, 3.0)))
            allocation = allocate_recall(p, total)
            assert (allocation.budgets >= 1).all()
            assert int(allocation.budgets.sum()) <= total


def test_criterion_4_target_matrix_properties():
    with criterion(4, "similarity targets symmetric, unit diagonal, exact blend"):
        rng = np.random.default_rng(17)
        for _ in range(100):
            code = rng.standard_normal((8, 16))
            desc = rng.standard_normal((8, 16))
            target = build_target(code, desc, SimilarityConfig(beta=0.6, eta=0.4))
            assert np.abs(target - target.T).max() <= 1e-6
            assert (np.diag(target) == 1.0).all()

            # eta = 0 collapses to the plain convex blend of the two cosines
            plain = build_target(code, desc, SimilarityConfig(beta=0.6, eta=0.0))
            c64 = code / np.linalg.norm(code, axis=1, keepdims=True)
            d64 = desc / np.linalg.norm(desc, axis=1, keepdims=True)
            blend = 0.6 * (c64 @ c64.T) + 0.4 * (d64 @ d64.T)
            np.fill_diagonal(blend, 1.0)
            assert np.abs(plain - blend).max() <= 1e-6


def test_criterion_5_recall_rerank_oracle_equivalence():
    with criterion(5, "bounded-heap recall and cosine re-rank match full sorts"):
        rng = np.random.default_rng(19)
        n, dim, k, bits = 2000, 32, 10, 128
        emb = EmbeddingMatrix(rng.standard_normal((n, dim), dtype=np.float32))
        cluster = kmeans_fit(emb, k, seed=23)
        hasher = HashingModel(net=Mlp.init([dim, dim, dim, bits], rng))
        clf = ClassifierModel(net=Mlp.init([dim, dim, dim, k], rng))
        index = build_index(emb, cluster, hasher, clf, hasher, default_recall=100)

        ids_all = np.arange(n)
        unit = emb.data.astype(np.float64)
        unit = unit / np.linalg.norm(unit, axis=1, keepdims=True)
        for _ in range(200):
            query_bits = rng.integers(0, 2, size=(1, bits), dtype=np.uint8)
            query_code = pack_bits(query_bits)
            budgets = rng.integers(1, 40, size=k).astype(np.int64)
            allocation = RecallAllocation(budgets=budgets, total=int(budgets.sum()))
            got_ids, got_dists = recall(index, query_code, allocation)

            expected = []
            for j in range(k):
                bucket = index.bucket_ids[j]
                dists = hamming_to_all(index.bucket_words[j], query_code.words[0])
                order = np.lexsort((bucket, dists))[: budgets[j]]
                expected.extend(zip(dists[order].tolist(), bucket[order].tolist()))
            assert list(zip(got_dists.tolist(), got_ids.tolist())) == expected

            query_emb = rng.standard_normal(dim)
            result = rerank(index, query_emb, got_ids)
            scores = unit[got_ids] @ (query_emb / np.linalg.norm(query_emb))
            order = np.lexsort((got_ids, -scores))
            assert result.item_ids.tolist() == got_ids[order].tolist()


def test_criterion_6_accuracy_retention(retention_artifacts):
    with criterion(6, "hash recall retains exact-search accuracy at budget 100"):
        corpus, artifacts, build_seconds = retention_artifacts
        index, test_ids = artifacts.index, artifacts.split.test
        queries = corpus.desc.data[test_ids]

        exact_lists = exact_ranked_ids(index, queries, 10)
        exact_r1 = success_rate_at_k(exact_lists, test_ids, 1)
        exact_r10 = success_rate_at_k(exact_lists, test_ids, 10)
        assert exact_r1 > 0, "exact baseline degenerate"

        outcome = run_ablation(index, queries, test_ids, AblationVariant.FULL, 100)
        retention_r1 = outcome.metrics["r1"] / exact_r1
        retention_r10 = outcome.metrics["r10"] / exact_r10
        print(
            f"  exact R@1={exact_r1:.4f} R@10={exact_r10:.4f}; "
            f"pipeline R@1={outcome.metrics['r1']:.4f} R@10={outcome.metrics['r10']:.4f}; "
            f"retention {retention_r1:.1%} / {retention_r10:.1%}; "
            f"offline build {build_seconds:.0f}s"
        )
        assert retention_r1 >= 0.95
        assert retention_r10 >= 0.90
        assert build_seconds < 600


def test_criterion_7_ablation_ordering(retention_artifacts):
    with criterion(7, "ideal routing dominates; argmax routing loses when weak"):
        corpus, artifacts, _ = retention_artifacts
        index, test_ids = artifacts.index, artifacts.split.test
        queries = corpus.desc.data[test_ids]
        true_categories = index.assignments[test_ids]

        full = run_ablation(index, queries, test_ids, AblationVariant.FULL, 100)
        ideal = run_ablation(
            index, queries, test_ids, AblationVariant.IDEAL_CLASSIFICATION, 100,
            true_categories,
        )
        assert ideal.metrics["r10"] >= full.metrics["r10"]

        accuracy = classifier_accuracy(index.classifier, queries, true_categories)
        if accuracy < 0.9:
            one = run_ablation(
                index, queries, test_ids, AblationVariant.ONE_CLASSIFICATION, 100
            )
            assert full.metrics["r10"] >= one.metrics["r10"]
            print(f"  classifier accuracy {accuracy:.3f}: argmax clause exercised")
        else:
            print(f"  classifier accuracy {accuracy:.3f} >= 0.9: argmax clause vacuous")


def test_criterion_8_similarity_stage_speedup():
    with criterion(8, "Hamming similarity stage is <= 20% of the f32 cosine scan"):
        started = time.perf_counter()
        rng = np.random.default_rng(2024)
        emb = EmbeddingMatrix(rng.standard_normal((100_000, 768), dtype=np.float32))
        cluster = kmeans_fit(EmbeddingMatrix(emb.data[:2000]), 10, seed=1)
        hasher = HashingModel(net=Mlp.init([768, 768, 768, 128], rng))
        clf = ClassifierModel(net=Mlp.init([768, 768, 768, 10], rng))
        index = build_index(emb, cluster, hasher, clf, hasher, default_recall=100)

        queries = rng.standard_normal((16, 768), dtype=np.float32)
        base = bench_timing(index, queries, 100, "baseline_linear_scan", repeats=5)
        fast = bench_timing(index, queries, 100, "coshc", repeats=5)
        ratio = fast.similarity_s / base.similarity_s
        elapsed = time.perf_counter() - started
        print(
            f"  baseline similarity {base.similarity_s*1e3:.0f}ms vs "
            f"hash pipeline {fast.similarity_s*1e3:.0f}ms; ratio {ratio:.3f}; "
            f"criterion wall time {elapsed:.0f}s"
        )
        assert base.similarity_s > 0
        assert ratio <= 0.20
        assert elapsed < 300


def test_criterion_9_build_eval_determinism(tmp_path):
    with criterion(9, "fixed seed reproduces index checksums and metrics"):
        corpus_dir = tmp_path / "corpus"
        assert main([
            "--quiet", "generate", "--n", "800", "--dim", "32", "--clusters", "8",
            "--sigma", "0.08", "--seed", "3", "--out-dir", str(corpus_dir),
        ]) == 0
        manifests, reports = [], []
        for run in ("first", "second"):
            index_dir = tmp_path / run
            assert main([
                "--quiet", "build",
                "--code", str(corpus_dir / "code.cosh"),
                "--desc", str(corpus_dir / "desc.cosh"),
                "--out", str(index_dir), "--seed", "5", "--epochs", "4",
            ]) == 0
            assert main([
                "--quiet", "eval", "--index", str(index_dir),
                "--queries", str(corpus_dir / "desc.cosh"), "--variant", "all",
            ]) == 0
            manifest = json.loads((index_dir / "manifest.json").read_text())
            report = json.loads((index_dir / "report.json").read_text())
            manifests.append(manifest["sha256"])
            reports.append((report["exact"], report["variants"]))
        assert manifests[0] == manifests[1]
        assert reports[0] == reports[1]
