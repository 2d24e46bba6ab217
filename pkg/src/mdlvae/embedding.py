"""Embedding storage, vector-sum concept building, and semantic metrics.

An :class:`EmbeddingTable` maps terms to fixed-width vectors, optionally
tagging each term with a concept-cluster label. Concepts are built by
summing the vectors of their member terms; the metric functions quantify
how well such combined vectors sit among their members.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ParseError, ShapeError, UnknownTermError
from .numerics import as_vector

__all__ = [
    "EmbeddingTable",
    "ConceptVector",
    "combine_sum",
    "cosine_similarity",
    "semantic_coherence",
    "dispersion",
]


@dataclass(frozen=True)
class ConceptVector:
    """A labeled vector formed from the embeddings of its member terms."""

    label: str
    vector: np.ndarray
    members: tuple[str, ...]


@dataclass(frozen=True)
class EmbeddingTable:
    """Immutable term-to-vector map with optional cluster labels.

    All vectors have length ``dim``; terms are unique, non-empty strings.
    ``clusters`` may label any subset of the terms with a concept group.
    """

    dim: int
    entries: dict[str, np.ndarray]
    clusters: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"embedding dimension must be >= 1, got {self.dim}")
        for term, vec in self.entries.items():
            if not term:
                raise DomainError("terms must be non-empty strings")
            v = as_vector(vec, f"embedding of {term!r}")
            if v.shape[0] != self.dim:
                raise ShapeError(
                    f"embedding of {term!r} has length {v.shape[0]}, expected {self.dim}"
                )
            self.entries[term] = v
        for term in self.clusters:
            if term not in self.entries:
                raise UnknownTermError(term)

    def vector(self, term: str) -> np.ndarray:
        if term not in self.entries:
            raise UnknownTermError(term)
        return self.entries[term]

    def terms(self) -> list[str]:
        return list(self.entries)

    def matrix(self) -> np.ndarray:
        """Stacked embeddings, one row per term in table order."""
        return np.vstack([self.entries[t] for t in self.entries])

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "dim": self.dim,
            "entries": {t: v.tolist() for t, v in self.entries.items()},
            "clusters": dict(self.clusters),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EmbeddingTable":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid embedding JSON: {exc}") from exc
        for key in ("dim", "entries"):
            if key not in payload:
                raise ParseError(f"embedding JSON missing key {key!r}")
        entries = {t: np.asarray(v, dtype=np.float64) for t, v in payload["entries"].items()}
        return cls(
            dim=int(payload["dim"]),
            entries=entries,
            clusters=dict(payload.get("clusters") or {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        return cls.from_json(Path(path).read_text())

    @classmethod
    def from_csv(cls, path, clusters: Mapping[str, str] | None = None) -> "EmbeddingTable":
        """Load a table from CSV: first column term, remaining columns floats."""
        entries: dict[str, np.ndarray] = {}
        dim: int | None = None
        with open(path, newline="") as fh:
            for row_idx, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                term = row[0].strip()
                if not term:
                    raise ParseError("empty term", row=row_idx, col=1)
                if term in entries:
                    raise ParseError(f"duplicate term {term!r}", row=row_idx, col=1)
                values = []
                for col_idx, cell in enumerate(row[1:], start=2):
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise ParseError(
                            f"non-numeric cell {cell!r}", row=row_idx, col=col_idx
                        ) from None
                if dim is None:
                    dim = len(values)
                elif len(values) != dim:
                    raise ParseError(
                        f"expected {dim} values, got {len(values)}", row=row_idx, col=len(row)
                    )
                entries[term] = np.asarray(values)
        if dim is None or dim == 0:
            raise ParseError("embedding CSV holds no vector columns")
        return cls(dim=dim, entries=entries, clusters=dict(clusters or {}))


def combine_sum(table: EmbeddingTable, terms: Sequence[str], label: str) -> ConceptVector:
    """Combine member terms into one concept vector by plain vector sum."""
    if not terms:
        raise DomainError("cannot combine an empty term list")
    total = np.zeros(table.dim)
    for term in terms:
        total = total + table.vector(term)
    return ConceptVector(label=label, vector=total, members=tuple(terms))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine similarity is undefined for zero-norm vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def semantic_coherence(concept: ConceptVector, table: EmbeddingTable) -> float:
    """Mean cosine similarity between a concept vector and its members."""
    sims = [cosine_similarity(concept.vector, table.vector(t)) for t in concept.members]
    return float(np.mean(sims))


def dispersion(vectors: Iterable) -> float:
    """Mean pairwise Euclidean distance over all unordered vector pairs."""
    vecs = [as_vector(v, f"vectors[{i}]") for i, v in enumerate(vectors)]
    if len(vecs) < 2:
        raise DomainError("dispersion needs at least 2 vectors")
    length = vecs[0].shape[0]
    for i, v in enumerate(vecs):
        if v.shape[0] != length:
            raise ShapeError(f"vectors[{i}] has length {v.shape[0]}, expected {length}")
    total = 0.0
    count = 0
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            total += float(np.linalg.norm(vecs[i] - vecs[j]))
            count += 1
    return total / count
