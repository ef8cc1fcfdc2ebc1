"""Embedding providers and exact cosine-similarity top-k search.

Vectors are produced either by the deterministic hashed bag-of-words
provider (tests, fixtures) or loaded from a sidecar file of precomputed
embeddings keyed by content digest (real models, run offline). There is no
in-process model inference and no approximate search: haystacks are a few
hundred sessions, so a full scan is exact and fast.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, DataFormatError, DuplicateDocumentError, MissingEmbeddingError
from .lexical import tokenize
from .fusion import RankedList

EMBED_TRUNCATION_CHARS = 2000

SIDECAR_MAGIC = b"MRSC"
SIDECAR_VERSION = 1
VECTOR_INDEX_MAGIC = b"MRVX"
VECTOR_INDEX_VERSION = 1

_DTYPE_CODES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def truncate_for_embedding(text: str) -> str:
    """First 2,000 characters (Unicode scalar values) of text."""
    return text[:EMBED_TRUNCATION_CHARS]


def content_digest(text: str) -> bytes:
    """SHA-256 of the UTF-8 bytes of text; the sidecar key for embed inputs."""
    return hashlib.sha256(text.encode("utf-8")).digest()


@dataclass(frozen=True)
class ProviderSpec:
    name: str
    dimension: int
    deterministic: bool

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")


class EmbeddingProvider:
    """Contract: embed() truncates, then encodes; dimension is fixed."""

    spec: ProviderSpec

    def embed(self, text: str) -> np.ndarray:
        return self._encode(truncate_for_embedding(text))

    def _encode(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HashedBowProvider(EmbeddingProvider):
    """Deterministic test provider: tokens hashed into d buckets, L2-normalized.

    A pure function of the (truncated) text, identical across runs and
    platforms. Bucket assignment uses SHA-256, never the salted builtin hash.
    """

    def __init__(self, dimension: int = 256) -> None:
        self.spec = ProviderSpec(name="hashed-bow", dimension=dimension, deterministic=True)

    def bucket(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.spec.dimension

    def _encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.spec.dimension, dtype=np.float64)
        for token in tokenize(text):
            vec[self.bucket(token)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


class FileBackedProvider(EmbeddingProvider):
    """Embeddings precomputed offline, loaded from a sidecar file.

    Lookup key is the SHA-256 digest of the truncated input text. A missing
    key is an explicit error, never a silent zero vector.
    """

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)
        dimension, self._vectors = read_sidecar(self.path)
        self.spec = ProviderSpec(name="file", dimension=dimension, deterministic=True)

    def _encode(self, text: str) -> np.ndarray:
        key = content_digest(text)
        vec = self._vectors.get(key)
        if vec is None:
            raise MissingEmbeddingError(
                f"no precomputed embedding for digest {key.hex()} in {self.path}"
            )
        return vec


def provider_from_spec(
    spec: Mapping[str, object] | None, base_dir: Path | str | None = None
) -> EmbeddingProvider | None:
    """Rebuild a provider from its manifest entry; None means lexical-only.

    Relative sidecar paths resolve against ``base_dir`` (typically the store
    directory) so stores stay relocatable.
    """
    if spec is None:
        return None
    name = spec.get("name")
    if name == "hashed-bow":
        return HashedBowProvider(dimension=int(spec["dimension"]))
    if name == "file":
        path = Path(str(spec["path"]))
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return FileBackedProvider(path)
    raise ConfigurationError(f"unknown embedding provider spec: {spec!r}")


def provider_to_spec(provider: EmbeddingProvider | None) -> dict | None:
    if provider is None:
        return None
    entry: dict = {"name": provider.spec.name, "dimension": provider.spec.dimension}
    if isinstance(provider, FileBackedProvider):
        entry["path"] = str(provider.path)
    return entry


class VectorIndex:
    """Exact cosine top-k over per-document embedding vectors."""

    def __init__(self, dimension: int) -> None:
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._entries: dict[str, np.ndarray] = {}
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._order: list[str] = []

    @property
    def doc_count(self) -> int:
        return len(self._entries)

    def doc_ids(self) -> list[str]:
        return list(self._entries)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._entries

    def vector(self, doc_id: str) -> np.ndarray:
        return self._entries[doc_id]

    def add(self, doc_id: str, vector: np.ndarray) -> None:
        if doc_id in self._entries:
            raise DuplicateDocumentError(f"doc id already indexed: {doc_id!r}")
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dimension,):
            raise ConfigurationError(
                f"vector for {doc_id!r} has dimension {vector.shape}, index expects {self.dimension}"
            )
        if not np.all(np.isfinite(vector)):
            raise ValueError(f"vector for {doc_id!r} has non-finite entries")
        self._entries[doc_id] = vector
        self._matrix = None

    def _ensure_matrix(self) -> None:
        if self._matrix is None:
            self._order = list(self._entries)
            self._matrix = np.stack([self._entries[d] for d in self._order]) if self._order else np.zeros((0, self.dimension))
            self._norms = np.linalg.norm(self._matrix, axis=1)

    def search(self, query_vec: np.ndarray, k: int) -> RankedList:
        """Exact top-k by cosine similarity, descending; ties by ascending id.

        A zero-norm query or entry contributes similarity 0.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        query_vec = np.asarray(query_vec, dtype=np.float64)
        if query_vec.shape != (self.dimension,):
            raise ConfigurationError(
                f"query vector dimension {query_vec.shape} does not match index dimension {self.dimension}"
            )
        self._ensure_matrix()
        if not self._order:
            return RankedList(source="cosine")
        qnorm = float(np.linalg.norm(query_vec))
        if qnorm == 0.0:
            sims = np.zeros(len(self._order))
        else:
            dots = self._matrix @ query_vec
            denom = self._norms * qnorm
            sims = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0.0)
        ranked = sorted(zip(self._order, sims.tolist()), key=lambda item: (-item[1], item[0]))
        return RankedList(items=ranked[:k], source="cosine")

    def save(self, path: Path) -> None:
        """Binary snapshot: header, then (id, float64 vector) records."""
        with open(path, "wb") as fh:
            fh.write(VECTOR_INDEX_MAGIC)
            fh.write(struct.pack("<BBHII", VECTOR_INDEX_VERSION, 8, 0, self.dimension, len(self._entries)))
            for doc_id, vec in self._entries.items():
                encoded = doc_id.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(vec.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: Path) -> "VectorIndex":
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) < 16 or data[:4] != VECTOR_INDEX_MAGIC:
            raise DataFormatError(f"{path}: not a vector index file")
        version, dtype_code, _reserved, dimension, count = struct.unpack("<BBHII", data[4:16])
        if version != VECTOR_INDEX_VERSION:
            raise DataFormatError(f"{path}: unsupported vector index version {version}")
        dtype = _DTYPE_CODES.get(dtype_code)
        if dtype is None:
            raise DataFormatError(f"{path}: unknown dtype code {dtype_code}")
        index = cls(dimension)
        offset = 16
        itemsize = dtype.itemsize * dimension
        for _ in range(count):
            if offset + 2 > len(data):
                raise DataFormatError(f"{path}: truncated vector index")
            (id_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            if offset + id_len + itemsize > len(data):
                raise DataFormatError(f"{path}: truncated vector index")
            doc_id = data[offset : offset + id_len].decode("utf-8")
            offset += id_len
            vec = np.frombuffer(data, dtype=dtype, count=dimension, offset=offset).astype(np.float64)
            offset += itemsize
            index.add(doc_id, vec)
        if offset != len(data):
            raise DataFormatError(f"{path}: trailing bytes after vector index records")
        return index


def write_sidecar(path: Path, dimension: int, vectors: Mapping[bytes, np.ndarray], dtype_code: int = 4) -> None:
    """Write a digest -> vector sidecar (see docs/FORMATS.md for the layout)."""
    dtype = _DTYPE_CODES.get(dtype_code)
    if dtype is None:
        raise ValueError(f"unknown dtype code {dtype_code}")
    with open(path, "wb") as fh:
        fh.write(SIDECAR_MAGIC)
        fh.write(struct.pack("<BBHII", SIDECAR_VERSION, dtype_code, 0, dimension, len(vectors)))
        for digest, vec in vectors.items():
            if len(digest) != 32:
                raise ValueError(f"digest must be 32 bytes, got {len(digest)}")
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dimension,):
                raise ValueError(f"vector for {digest.hex()} has shape {arr.shape}, expected ({dimension},)")
            fh.write(digest)
            fh.write(arr.astype(dtype).tobytes())


def read_sidecar(path: Path) -> tuple[int, dict[bytes, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != SIDECAR_MAGIC:
        raise DataFormatError(f"{path}: not an embeddings sidecar file")
    version, dtype_code, _reserved, dimension, count = struct.unpack("<BBHII", data[4:16])
    if version != SIDECAR_VERSION:
        raise DataFormatError(f"{path}: unsupported sidecar version {version}")
    dtype = _DTYPE_CODES.get(dtype_code)
    if dtype is None:
        raise DataFormatError(f"{path}: unknown dtype code {dtype_code}")
    record_size = 32 + dtype.itemsize * dimension
    expected = 16 + record_size * count
    if len(data) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    vectors: dict[bytes, np.ndarray] = {}
    offset = 16
    for _ in range(count):
        digest = data[offset : offset + 32]
        offset += 32
        vec = np.frombuffer(data, dtype=dtype, count=dimension, offset=offset).astype(np.float64)
        offset += dtype.itemsize * dimension
        vectors[digest] = vec
    return dimension, vectors
