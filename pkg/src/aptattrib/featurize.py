"""Raw-word featurization: tokenize reports, rank a dictionary, emit binary vectors.

Reports are treated as flat text. A token is a maximal run of [A-Za-z0-9_],
case-sensitive, so API names and hexadecimal values survive intact. The
dictionary keeps the top max_size tokens by document frequency after dropping
tokens that appear in every report; a report's feature vector has bit i set
iff the rank-i dictionary token occurs in it.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, CorpusError, LabeledReport

TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")
MAX_TOKEN_LEN = 256  # bytes; alphabet is ASCII so chars == bytes
DEFAULT_VOCAB_SIZE = 50_000

MATRIX_MAGIC = b"APTV"
MATRIX_VERSION = 1


class FormatError(ValueError):
    """Malformed vocabulary or feature-matrix file."""


def tokenize(raw_text: str) -> list[str]:
    """Return maximal alphabet runs in order of appearance, duplicates kept."""
    return [t[:MAX_TOKEN_LEN] for t in TOKEN_RE.findall(raw_text)]


@dataclass(frozen=True)
class Vocabulary:
    """Rank-ordered (token, document frequency) entries built from a corpus."""

    entries: tuple[tuple[str, int], ...]
    corpus_docs: int
    max_size: int

    def __len__(self) -> int:
        return len(self.entries)

    def tokens(self) -> list[str]:
        return [t for t, _ in self.entries]

    def index(self) -> dict[str, int]:
        return {t: i for i, (t, _) in enumerate(self.entries)}


def build_vocabulary(corpus: Corpus, max_size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Rank tokens by document frequency, dropping those present in all reports.

    Ties break by ascending token, so the ranking is a total order.
    """
    if len(corpus) == 0:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    if max_size < 1:
        raise ValueError(f"max_size must be >= 1, got {max_size}")
    doc_freq: dict[str, int] = {}
    for report in corpus.reports:
        for token in set(tokenize(report.raw_text)):
            doc_freq[token] = doc_freq.get(token, 0) + 1
    n_docs = len(corpus)
    kept = [(t, df) for t, df in doc_freq.items() if df < n_docs]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocabulary(entries=tuple(kept[:max_size]), corpus_docs=n_docs, max_size=max_size)


def vectorize(report: LabeledReport, vocab: Vocabulary) -> np.ndarray:
    """Binary presence vector over the vocabulary, dtype uint8, length |vocab|."""
    present = set(tokenize(report.raw_text))
    bits = np.zeros(len(vocab), dtype=np.uint8)
    for i, (token, _) in enumerate(vocab.entries):
        if token in present:
            bits[i] = 1
    return bits


def vectorize_corpus(
    corpus: Corpus, vocab: Vocabulary
) -> tuple[np.ndarray, list[str | None], list[str | None]]:
    """Vectorize every report; returns (matrix, nation labels, family labels) row-aligned."""
    rows = np.zeros((len(corpus), len(vocab)), dtype=np.uint8)
    for i, report in enumerate(corpus.reports):
        rows[i] = vectorize(report, vocab)
    nations = [r.nation for r in corpus.reports]
    families = [r.family for r in corpus.reports]
    return rows, nations, families


def encode_labels(labels: Sequence[str]) -> tuple[list[str], np.ndarray]:
    """Map label strings to class indices by sorted order; returns (classes, indices)."""
    classes = sorted(set(labels))
    lookup = {c: i for i, c in enumerate(classes)}
    return classes, np.array([lookup[label] for label in labels], dtype=np.int64)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    doc = {
        "version": 1,
        "corpus_docs": vocab.corpus_docs,
        "max_size": vocab.max_size,
        "entries": [[t, df] for t, df in vocab.entries],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read vocabulary file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise FormatError(f"vocabulary file {path}: expected version 1")
    try:
        entries = tuple((str(t), int(df)) for t, df in doc["entries"])
        return Vocabulary(
            entries=entries, corpus_docs=int(doc["corpus_docs"]), max_size=int(doc["max_size"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"vocabulary file {path}: malformed entries ({exc})") from exc


def save_matrix(
    path: str | Path,
    rows: np.ndarray,
    nations: Sequence[str | None],
    families: Sequence[str | None],
) -> None:
    """Write the binary feature-matrix file; empty label strings mean unlabeled."""
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    if rows.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {rows.shape}")
    if rows.size and rows.max() > 1:
        raise ValueError("matrix cells must be 0 or 1")
    n, cols = rows.shape
    if len(nations) != n or len(families) != n:
        raise ValueError("label lists must align with matrix rows")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<III", MATRIX_VERSION, n, cols))
        fh.write(rows.tobytes())
        for nation, family in zip(nations, families):
            for label in (nation, family):
                raw = (label or "").encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise ValueError(f"label too long: {label!r}")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)


def load_matrix(path: str | Path) -> tuple[np.ndarray, list[str | None], list[str | None]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if len(magic) != 4:
            raise FormatError(f"feature-matrix file {path}: truncated before magic")
        if magic != MATRIX_MAGIC:
            raise FormatError(
                f"feature-matrix file {path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}"
            )
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError(f"feature-matrix file {path}: truncated header")
        version, n, cols = struct.unpack("<III", header)
        if version != MATRIX_VERSION:
            raise FormatError(
                f"feature-matrix file {path}: version {version}, expected {MATRIX_VERSION}"
            )
        body = fh.read(n * cols)
        if len(body) != n * cols:
            raise FormatError(f"feature-matrix file {path}: truncated matrix body")
        rows = np.frombuffer(body, dtype=np.uint8).reshape(n, cols).copy()
        if rows.size and not np.isin(rows, (0, 1)).all():
            raise FormatError(f"feature-matrix file {path}: cell values must be 0 or 1")
        nations: list[str | None] = []
        families: list[str | None] = []
        for _ in range(n):
            pair: list[str | None] = []
            for _ in range(2):
                len_raw = fh.read(2)
                if len(len_raw) != 2:
                    raise FormatError(f"feature-matrix file {path}: truncated labels")
                (length,) = struct.unpack("<H", len_raw)
                raw = fh.read(length)
                if len(raw) != length:
                    raise FormatError(f"feature-matrix file {path}: truncated labels")
                pair.append(raw.decode("utf-8") if length else None)
            nations.append(pair[0])
            families.append(pair[1])
    return rows, nations, families
