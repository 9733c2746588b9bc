"""Image store with exact top-m cosine retrieval over unit-normalized embeddings.

Vectors are stored as float32 rows in id order; similarities are computed in
float64 so tie detection is deterministic. Retrieval is an exact scan (no
approximate search): candidate pools at this scale do not justify ANN, and
exactness keeps the brute-force oracle test meaningful.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

import numpy as np

from .errors import XComposeError
from .model import ImageRecord

NORM_TOLERANCE = 1e-6
FORMAT_VERSION = 1


class RepositoryError(XComposeError):
    pass


class DimensionMismatch(RepositoryError):
    pass


class ZeroVector(RepositoryError):
    pass


class EmptyIndex(RepositoryError):
    pass


class ChecksumMismatch(RepositoryError):
    pass


class VersionMismatch(RepositoryError):
    pass


class TruncatedBlob(RepositoryError):
    pass


def _record_id(source_uri: str, normalized: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(source_uri.encode("utf-8"))
    h.update(b"\x00")
    h.update(normalized.astype("<f4").tobytes())
    return "img_" + h.hexdigest()[:16]


class EmbeddingIndex:
    """Id-ordered collection of ImageRecords sharing one embedding dimension.

    Concurrency contract: many readers or one writer. Mutations are guarded
    by a lock and bump ``generation``; reads of a quiescent index are safe to
    share across threads.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        self.generation = 0
        self._records: dict[str, tuple[str, dict, np.ndarray]] = {}
        self._lock = threading.Lock()
        self._matrix: np.ndarray | None = None
        self._matrix_ids: list[str] | None = None

    def __len__(self) -> int:
        return len(self._records)

    def ids(self) -> list[str]:
        return sorted(self._records)

    def record(self, image_id: str) -> ImageRecord:
        uri, metadata, vec = self._records[image_id]
        return ImageRecord(image_id, uri, tuple(float(x) for x in vec), dict(metadata))

    def records(self) -> list[ImageRecord]:
        return [self.record(i) for i in self.ids()]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingIndex):
            return NotImplemented
        return self.dimension == other.dimension and self.records() == other.records()

    def _normalize(self, embedding) -> np.ndarray:
        vec = np.asarray(embedding, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != self.dimension:
            raise DimensionMismatch(f"expected dimension {self.dimension}, got shape {vec.shape}")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ZeroVector("cannot ingest a zero embedding")
        return (vec / norm).astype(np.float32)

    def ingest(self, source_uri: str, embedding, metadata: dict | None = None) -> str:
        """Normalize and store an embedding; idempotent on (source_uri, embedding)."""
        normalized = self._normalize(embedding)
        image_id = _record_id(source_uri, normalized)
        with self._lock:
            if image_id not in self._records:
                self._records[image_id] = (source_uri, dict(metadata or {}), normalized)
                self.generation += 1
                self._matrix = None
        return image_id

    def _dense(self) -> tuple[list[str], np.ndarray]:
        if self._matrix is None:
            ids = self.ids()
            self._matrix = (
                np.stack([self._records[i][2] for i in ids]) if ids else np.zeros((0, self.dimension), np.float32)
            )
            self._matrix_ids = ids
        return self._matrix_ids, self._matrix

    def top_m(self, query, m: int) -> list[tuple[str, float]]:
        """The m most cosine-similar records, ties broken by ascending id.

        Returns min(m, len(index)) (id, similarity) pairs ordered by
        similarity descending. The query is normalized internally, so the
        result is invariant under positive scaling of the query.
        """
        if m < 1:
            raise ValueError("m must be positive")
        if not self._records:
            raise EmptyIndex("cannot query an empty index")
        q = np.asarray(query, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != self.dimension:
            raise DimensionMismatch(f"expected dimension {self.dimension}, got shape {q.shape}")
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise ZeroVector("cannot query with a zero vector")
        q = q / qnorm

        ids, matrix = self._dense()
        sims = matrix.astype(np.float64) @ q
        n = len(ids)
        m = min(m, n)
        if m == n:
            chosen = range(n)
        else:
            # Exact top-m with tie handling: take everything strictly above the
            # m-th similarity, then fill from the tied group by ascending id.
            kth = np.partition(sims, n - m)[n - m]
            above = [i for i in range(n) if sims[i] > kth]
            tied = sorted((i for i in range(n) if sims[i] == kth), key=lambda i: ids[i])
            chosen = above + tied[: m - len(above)]
        ordered = sorted(chosen, key=lambda i: (-sims[i], ids[i]))
        return [(ids[i], float(sims[i])) for i in ordered]

    def save(self, directory) -> tuple[Path, Path]:
        """Write manifest JSON + little-endian f32 blob (rows in manifest id order)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ids, matrix = self._dense()
        blob = matrix.astype("<f4").tobytes()
        manifest = {
            "format_version": FORMAT_VERSION,
            "dimension": self.dimension,
            "count": len(ids),
            "checksum": hashlib.sha256(blob).hexdigest(),
            "dtype": "f32",
            "ids": list(ids),
            "records": {i: {"source_uri": self._records[i][0], "metadata": self._records[i][1]} for i in ids},
        }
        manifest_path = directory / "index.json"
        blob_path = directory / "vectors.f32"
        manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        blob_path.write_bytes(blob)
        return manifest_path, blob_path

    @classmethod
    def load(cls, directory) -> "EmbeddingIndex":
        directory = Path(directory)
        manifest = json.loads((directory / "index.json").read_text(encoding="utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise VersionMismatch(f"unsupported format_version {manifest.get('format_version')}")
        blob = (directory / "vectors.f32").read_bytes()
        dimension = manifest["dimension"]
        count = manifest["count"]
        if len(blob) != count * dimension * 4:
            raise TruncatedBlob(f"expected {count * dimension * 4} bytes, found {len(blob)}")
        if hashlib.sha256(blob).hexdigest() != manifest["checksum"]:
            raise ChecksumMismatch("vector blob does not match manifest checksum")
        matrix = np.frombuffer(blob, dtype="<f4").reshape(count, dimension)
        index = cls(dimension)
        for row, image_id in enumerate(manifest["ids"]):
            entry = manifest["records"][image_id]
            index._records[image_id] = (entry["source_uri"], dict(entry["metadata"]), matrix[row].copy())
        index._matrix = None
        return index
