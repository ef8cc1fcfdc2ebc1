"""Per-haystack store construction and on-disk persistence.

Each benchmark instance carries its own haystack, so stores are built one
per instance, keyed by instance id under a common root. A store directory
holds four artifacts:

    manifest.json   format/vocabulary versions, provider spec, checksums
    raw.jsonl       lexical index over raw session text
    enriched.jsonl  lexical index over raw text + enrichment terms
    vectors.bin     exact-cosine vector index over truncated raw text

Vectors are always built from *raw* content — enrichment never touches the
embedding side. Checksums are verified on open; a store that fails
verification refuses to load rather than serving corrupt rankings.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import Session, serialize_session
from .enrichment import EnrichmentVocabulary, enrich
from .errors import ConfigurationError, MemrouteError, StoreCorruptionError
from .lexical import LexicalIndex
from .vectors import (
    EmbeddingProvider,
    VectorIndex,
    provider_from_spec,
    provider_to_spec,
)

STORE_FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
RAW_INDEX_FILE = "raw.jsonl"
ENRICHED_INDEX_FILE = "enriched.jsonl"
VECTOR_INDEX_FILE = "vectors.bin"


@dataclass(frozen=True)
class MemoryRecord:
    """One stored session: raw text plus its derived enrichment terms."""

    session_id: str
    raw_content: str
    enrichment_text: str = ""
    timestamp: str | None = None

    @property
    def content_digest(self) -> str:
        return hashlib.sha256(self.raw_content.encode("utf-8")).hexdigest()

    @property
    def enriched_content(self) -> str:
        if not self.enrichment_text:
            return self.raw_content
        return f"{self.raw_content}\n{self.enrichment_text}"


def records_from_sessions(
    sessions: Sequence[Session],
    vocab: EnrichmentVocabulary,
    include_timestamps: bool = True,
) -> list[MemoryRecord]:
    records = []
    for session in sessions:
        raw = serialize_session(session, include_timestamp=include_timestamps)
        records.append(
            MemoryRecord(
                session_id=session.session_id,
                raw_content=raw,
                enrichment_text=enrich(raw, vocab),
                timestamp=session.timestamp,
            )
        )
    return records


@dataclass(frozen=True)
class StoreManifest:
    format_version: int
    vocabulary_version: str
    provider: dict | None
    session_count: int
    checksums: Mapping[str, str]
    store_id: str = ""
    built_at: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "vocabulary_version": self.vocabulary_version,
            "provider": self.provider,
            "session_count": self.session_count,
            "checksums": dict(sorted(self.checksums.items())),
            "store_id": self.store_id,
            "built_at": self.built_at,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: Mapping, origin: str) -> "StoreManifest":
        try:
            return cls(
                format_version=int(raw["format_version"]),
                vocabulary_version=str(raw["vocabulary_version"]),
                provider=raw["provider"],
                session_count=int(raw["session_count"]),
                checksums=dict(raw["checksums"]),
                store_id=str(raw.get("store_id", "")),
                built_at=str(raw.get("built_at", "")),
                seed=raw.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreCorruptionError(f"{origin}: malformed manifest: {exc}") from exc


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_store(
    sessions: Sequence[Session],
    vocab: EnrichmentVocabulary,
    provider: EmbeddingProvider | None,
    out_path: Path | str,
    include_timestamps: bool = True,
    store_id: str = "",
    built_at: str = "",
    seed: int | None = None,
) -> StoreManifest:
    """Build all store artifacts for one haystack.

    ``provider=None`` builds a lexical-only store; embedding pipelines will
    later fail with a configuration error, by design. All embeddings are
    computed before anything is written, so a provider failure on any
    session aborts without leaving a partial store behind.
    """
    out_path = Path(out_path)
    built = build_store_in_memory(
        sessions, vocab, provider, include_timestamps=include_timestamps
    )

    out_path.mkdir(parents=True, exist_ok=True)
    built.raw_index.save(out_path / RAW_INDEX_FILE)
    built.enriched_index.save(out_path / ENRICHED_INDEX_FILE)
    checksums = {
        RAW_INDEX_FILE: _sha256_file(out_path / RAW_INDEX_FILE),
        ENRICHED_INDEX_FILE: _sha256_file(out_path / ENRICHED_INDEX_FILE),
    }
    if built.vector_index is not None:
        built.vector_index.save(out_path / VECTOR_INDEX_FILE)
        checksums[VECTOR_INDEX_FILE] = _sha256_file(out_path / VECTOR_INDEX_FILE)

    manifest = StoreManifest(
        format_version=STORE_FORMAT_VERSION,
        vocabulary_version=vocab.version,
        provider=provider_to_spec(provider),
        session_count=len(built.records),
        checksums=checksums,
        store_id=store_id,
        built_at=built_at,
        seed=seed,
    )
    (out_path / MANIFEST_FILE).write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


@dataclass
class Store:
    """Read-only handle over an opened (or freshly built in-memory) store."""

    raw_index: LexicalIndex
    enriched_index: LexicalIndex
    vector_index: VectorIndex | None = None
    provider: EmbeddingProvider | None = None
    manifest: StoreManifest | None = None
    path: Path | None = None
    records: tuple[MemoryRecord, ...] = field(default_factory=tuple)


def build_store_in_memory(
    sessions: Sequence[Session],
    vocab: EnrichmentVocabulary,
    provider: EmbeddingProvider | None,
    include_timestamps: bool = True,
) -> Store:
    """Same artifacts as build_store, without touching disk."""
    records = records_from_sessions(sessions, vocab, include_timestamps=include_timestamps)
    raw_index = LexicalIndex()
    enriched_index = LexicalIndex()
    for record in records:
        raw_index.add(record.session_id, record.raw_content)
        enriched_index.add(record.session_id, record.enriched_content)
    vector_index = None
    if provider is not None:
        vector_index = VectorIndex(dimension=provider.spec.dimension)
        for record in records:
            try:
                vector_index.add(record.session_id, provider.embed(record.raw_content))
            except MemrouteError as exc:
                raise type(exc)(f"embedding session {record.session_id!r}: {exc}") from exc
    return Store(
        raw_index=raw_index,
        enriched_index=enriched_index,
        vector_index=vector_index,
        provider=provider,
        records=tuple(records),
    )


def open_store(path: Path | str, provider: EmbeddingProvider | None = None) -> Store:
    """Open a store directory, verifying version and artifact checksums.

    ``provider`` overrides the manifest's provider spec (useful when a
    sidecar has moved); by default the provider is reconstructed from the
    manifest, resolving relative sidecar paths against the store directory.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_FILE
    if not manifest_path.is_file():
        raise StoreCorruptionError(f"{path}: no {MANIFEST_FILE}; not a store directory")
    try:
        raw_manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StoreCorruptionError(f"{manifest_path}: unreadable manifest: {exc}") from exc
    manifest = StoreManifest.from_dict(raw_manifest, origin=str(manifest_path))
    if manifest.format_version != STORE_FORMAT_VERSION:
        raise StoreCorruptionError(
            f"{path}: store format version {manifest.format_version} is not "
            f"supported (expected {STORE_FORMAT_VERSION})"
        )
    for name, expected in manifest.checksums.items():
        artifact = path / name
        if not artifact.is_file():
            raise StoreCorruptionError(f"{path}: missing artifact {name}")
        actual = _sha256_file(artifact)
        if actual != expected:
            raise StoreCorruptionError(
                f"{path}: checksum mismatch for {name}: expected {expected}, got {actual}"
            )
    for required in (RAW_INDEX_FILE, ENRICHED_INDEX_FILE):
        if required not in manifest.checksums:
            raise StoreCorruptionError(f"{path}: manifest lists no checksum for {required}")

    raw_index = LexicalIndex.load(path / RAW_INDEX_FILE)
    enriched_index = LexicalIndex.load(path / ENRICHED_INDEX_FILE)
    vector_index = None
    if VECTOR_INDEX_FILE in manifest.checksums:
        vector_index = VectorIndex.load(path / VECTOR_INDEX_FILE)
    if provider is None:
        provider = provider_from_spec(manifest.provider, base_dir=path)
    if vector_index is not None and provider is not None:
        if provider.spec.dimension != vector_index.dimension:
            raise ConfigurationError(
                f"{path}: provider dimension {provider.spec.dimension} does not match "
                f"vector index dimension {vector_index.dimension}"
            )
    return Store(
        raw_index=raw_index,
        enriched_index=enriched_index,
        vector_index=vector_index,
        provider=provider,
        manifest=manifest,
        path=path,
    )
