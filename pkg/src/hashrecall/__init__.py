"""Two-stage embedding search: clustered binary-hash recall + exact cosine re-rank.

Offline, code embeddings are partitioned with k-means and two small tanh
networks learn binary hash codes that preserve the corpus's cosine structure.
Online, a query embedding is classified into per-category recall budgets,
hashed, matched by Hamming distance within each category, and the recalled
candidates are re-ranked with exact cosine similarity.
"""

from .classifier import (
    ClassifierModel,
    ClassifierTrainConfig,
    RecallAllocation,
    allocate_recall,
    predict_proba,
    train_classifier,
)
from .cluster import ClusterModel, assign, kmeans_fit
from .config import PipelineConfig, load_config
from .engine import (
    QueryResult,
    SearchIndex,
    build_index,
    hamming_distance,
    load_index,
    recall,
    recall_global,
    rerank,
    save_index,
    search,
)
from .errors import FormatError, InvariantError
from .evalbench import (
    AblationVariant,
    EvalReport,
    bench_timing,
    classifier_accuracy,
    evaluate,
    run_ablation,
    success_rate_at_k,
)
from .hashing import (
    HashingModel,
    HashTrainConfig,
    binarize,
    forward_soft,
    hash_loss,
    hash_loss_gradients,
    train_hashing,
)
from .packed import (
    PackedCodeMatrix,
    hamming_to_all,
    pack_bits,
    pack_signs,
    read_packed_codes,
    unpack_bits,
    unpack_signs,
    write_packed_codes,
)
from .pipeline import build_pipeline, load_split, save_build, split_corpus
from .similarity import SimilarityConfig, build_target, cosine_similarity_matrix
from .store import (
    EmbeddingMatrix,
    PairedCorpus,
    SyntheticSpec,
    generate_synthetic,
    l2_normalize,
    read_embeddings,
    synthetic_latent_labels,
    write_embeddings,
)

__version__ = "0.1.0"
