"""Embedding containers, their on-disk format, and synthetic corpus generation.

Embedding file layout (little-endian throughout):

    offset  size  field
    0       4     magic "COSH" (0x43 0x4F 0x53 0x48)
    4       1     format version, currently 1
    5       1     dtype code, 0 = float32
    6       2     zero padding
    8       8     u64 row count
    16      8     u64 dimension
    24      ...   count * dim float32 values, row-major

The 24-byte header is followed by exactly count*dim*4 payload bytes; any
trailing bytes are an error.  Cluster assignments use a bare u64 count
header followed by u32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

EMBEDDING_MAGIC = b"COSH"
EMBEDDING_VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sBBHQQ")


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense row-major matrix of embedding vectors, stored as float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got {arr.ndim}-D")
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def validate_finite(self) -> None:
        """Raise FormatError naming the first non-finite entry, if any."""
        finite = np.isfinite(self.data)
        if not finite.all():
            row, col = np.argwhere(~finite)[0]
            raise FormatError(f"non-finite value at ({row},{col})")

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            (self.data.view(np.uint32) == other.data.view(np.uint32)).all()
        )


@dataclass(frozen=True)
class PairedCorpus:
    """Aligned <description, code> embedding pairs; row i of each side is a pair."""

    code: EmbeddingMatrix
    desc: EmbeddingMatrix
    ids: list[str] | None = None

    def __post_init__(self):
        if self.code.count != self.desc.count:
            raise ValueError(
                f"pair count mismatch: {self.code.count} code rows vs "
                f"{self.desc.count} description rows"
            )
        if self.code.dim != self.desc.dim:
            raise ValueError(
                f"dimension mismatch: code dim {self.code.dim} vs desc dim {self.desc.dim}"
            )
        if self.ids is not None and len(self.ids) != self.code.count:
            raise ValueError("ids length must match pair count")

    @property
    def count(self) -> int:
        return self.code.count


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the synthetic paired-corpus generator."""

    n_pairs: int
    dim: int
    n_latent_clusters: int
    noise_sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs <= 0:
            raise ValueError("n_pairs must be positive")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.n_latent_clusters <= 0:
            raise ValueError("n_latent_clusters must be positive")
        if self.n_latent_clusters > self.n_pairs:
            raise ValueError("n_latent_clusters must not exceed n_pairs")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be ≥ 0")


def write_embeddings(m: EmbeddingMatrix, path) -> None:
    """Write a matrix in the embedding file format; rejects non-finite values."""
    m.validate_finite()
    header = _HEADER.pack(
        EMBEDDING_MAGIC, EMBEDDING_VERSION, DTYPE_F32, 0, m.count, m.dim
    )
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_embeddings(path) -> EmbeddingMatrix:
    """Read an embedding file, reporting bad magic, version, and size errors distinctly."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes, need {_HEADER.size}")
    magic, version, dtype, _pad, count, dim = _HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"bad magic: {magic!r}")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"version mismatch: {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code: {dtype}")
    expected = count * dim * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise FormatError(
            f"truncated payload: {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"trailing bytes: {len(payload) - expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    m = EmbeddingMatrix(data)
    m.validate_finite()
    return m


def write_assignments(assignments, path) -> None:
    """Write category indices as a u64 count header plus u32 values."""
    arr = np.ascontiguousarray(assignments, dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", arr.shape[0]))
        fh.write(arr.tobytes())


def read_assignments(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise FormatError("truncated header: assignments file shorter than 8 bytes")
    (count,) = struct.unpack_from("<Q", raw)
    payload = raw[8:]
    if len(payload) != count * 4:
        raise FormatError(
            f"assignment payload is {len(payload)} bytes, header declares {count * 4}"
        )
    return np.frombuffer(payload, dtype="<u4").astype(np.int64)


def l2_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit Euclidean norm; zero rows pass through unchanged."""
    data = m.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    out = np.zeros_like(data)
    nonzero = norms.ravel() > 0.0
    out[nonzero] = data[nonzero] / norms[nonzero]
    return EmbeddingMatrix(out.astype(np.float32))


def unit_rows(data: np.ndarray) -> np.ndarray:
    """Float64 row normalization used by all cosine scoring; zero rows stay zero."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        nrm = float(np.linalg.norm(data))
        return data / nrm if nrm > 0.0 else np.zeros_like(data)
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    out = np.zeros_like(data)
    nonzero = norms.ravel() > 0.0
    out[nonzero] = data[nonzero] / norms[nonzero]
    return out


def generate_synthetic(spec: SyntheticSpec) -> PairedCorpus:
    """Generate a paired corpus of clustered embeddings with a known latent structure.

    Cluster centers are drawn uniformly on the unit sphere.  Pair i belongs to
    latent cluster i % n_latent_clusters and gets a latent identity vector
    center + sigma*g_i; its code and description rows each add independent
    observation noise of sigma/2 on top of that shared identity.  With
    noise_sigma = 0 both rows collapse to the cluster center exactly; for small
    sigma the shared identity makes exact cosine search rank the paired code
    first with high probability while keeping the latent clusters separable.
    """
    rng = np.random.default_rng(spec.seed)
    n, dim, k, sigma = spec.n_pairs, spec.dim, spec.n_latent_clusters, spec.noise_sigma

    centers = rng.standard_normal((k, dim))
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    centers = centers / np.maximum(norms, np.finfo(np.float64).tiny)

    labels = synthetic_latent_labels(spec)
    latent = centers[labels] + sigma * rng.standard_normal((n, dim))
    code = latent + 0.5 * sigma * rng.standard_normal((n, dim))
    desc = latent + 0.5 * sigma * rng.standard_normal((n, dim))
    return PairedCorpus(
        code=EmbeddingMatrix(code.astype(np.float32)),
        desc=EmbeddingMatrix(desc.astype(np.float32)),
    )


def synthetic_latent_labels(spec: SyntheticSpec) -> np.ndarray:
    """Latent cluster index of every pair produced by generate_synthetic."""
    return np.arange(spec.n_pairs, dtype=np.int64) % spec.n_latent_clusters
