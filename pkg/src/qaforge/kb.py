"""Per-language knowledge graphs parsed from concept assertion dumps.

The accepted dump layout is the public tab-separated assertion format:

    <edge-uri> \t /r/<Relation> \t /c/<lang>/<term>[/...] \t /c/<lang>/<term>[/...] \t <metadata>

Only the language and term segments of the concept URIs are read; edge
weights and metadata are discarded. Multi-sense URIs (trailing
part-of-speech or sense segments) merge on the term segment. Edges whose
two concepts are not both in the requested language are skipped, so every
stored triple is monolingual. Parsing is a single pass with constant
memory per line; after the build the graph is immutable and safe to share
across threads.
"""
from __future__ import annotations

import gzip
import json
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from .textnorm import normalize_term

logger = logging.getLogger(__name__)

SYNONYM_RELATION = "Synonym"

_SNAPSHOT_MAGIC = b"QFKG"
_SNAPSHOT_VERSION = 1


class IngestError(Exception):
    """Raised when a dump cannot be read at all."""


class SnapshotError(Exception):
    """Raised when a graph snapshot is missing, corrupt, or incompatible."""


@dataclass(frozen=True)
class Concept:
    """A concept entity: a language code plus a normalized surface term.

    `term` must already be in canonical form (see textnorm.normalize_term);
    word_count is the number of space-separated tokens, char_count the
    number of Unicode scalars.
    """

    language: str
    term: str

    def __post_init__(self) -> None:
        if not self.term or self.term != normalize_term(self.term):
            raise ValueError(f"concept term not in canonical form: {self.term!r}")

    @property
    def word_count(self) -> int:
        return self.term.count(" ") + 1

    @property
    def char_count(self) -> int:
        return len(self.term)

    @classmethod
    def from_raw(cls, language: str, raw: str) -> "Concept":
        return cls(language, normalize_term(raw))


@dataclass(frozen=True)
class Triple:
    source: Concept
    relation: str
    target: Concept

    def __post_init__(self) -> None:
        if self.source.language != self.target.language:
            raise ValueError("cross-lingual triples are not allowed")


@dataclass
class IngestSummary:
    lines: int = 0
    triples: int = 0
    malformed: int = 0
    skipped_language: int = 0

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "triples": self.triples,
            "malformed": self.malformed,
            "skipped_language": self.skipped_language,
        }


class KnowledgeGraph:
    """Immutable monolingual triple store with forward and backward indexes.

    forward index: (source term, relation) -> lexicographically ordered
    target terms; backward index mirrors it keyed on (target term,
    relation). Synonym-relation edges are additionally tracked as a
    symmetric pair set used by the extraction filters.
    """

    def __init__(
        self,
        language: str,
        forward: dict[tuple[str, str], tuple[str, ...]],
        backward: dict[tuple[str, str], tuple[str, ...]],
        synonym_pairs: frozenset[tuple[str, str]],
        ingest_summary: IngestSummary | None = None,
    ) -> None:
        self.language = language
        self.forward_index = forward
        self.backward_index = backward
        self.synonym_pairs = synonym_pairs
        self.ingest_summary = ingest_summary or IngestSummary()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_triples(
        cls,
        language: str,
        triples: Iterable[tuple[str, str, str]],
        summary: IngestSummary | None = None,
    ) -> "KnowledgeGraph":
        """Build from (source term, relation, target term) string triples.

        Terms must already be normalized. Duplicates collapse; synonym
        pairs are derived from Synonym-relation edges.
        """
        fwd: dict[tuple[str, str], set[str]] = {}
        bwd: dict[tuple[str, str], set[str]] = {}
        syn: set[tuple[str, str]] = set()
        count = 0
        seen: set[tuple[str, str, str]] = set()
        for s, r, t in triples:
            key = (s, r, t)
            if key in seen:
                continue
            seen.add(key)
            count += 1
            fwd.setdefault((s, r), set()).add(t)
            bwd.setdefault((t, r), set()).add(s)
            if r == SYNONYM_RELATION:
                syn.add((s, t) if s <= t else (t, s))
        forward = {k: tuple(sorted(v)) for k, v in fwd.items()}
        backward = {k: tuple(sorted(v)) for k, v in bwd.items()}
        if summary is not None:
            summary.triples = count
        return cls(language, forward, backward, frozenset(syn), summary)

    # -- queries -----------------------------------------------------------

    def concept(self, term: str) -> Concept:
        return Concept.from_raw(self.language, term)

    def query_forward(self, source: Concept, relation: str) -> list[Concept]:
        """All targets t with (source, relation, t), lexicographic order."""
        terms = self.forward_index.get((source.term, relation), ())
        return [Concept(self.language, t) for t in terms]

    def query_backward(self, target: Concept, relation: str) -> list[Concept]:
        """All sources s with (s, relation, target), lexicographic order."""
        terms = self.backward_index.get((target.term, relation), ())
        return [Concept(self.language, t) for t in terms]

    def are_synonyms(self, a: Concept, b: Concept) -> bool:
        pair = (a.term, b.term) if a.term <= b.term else (b.term, a.term)
        return pair in self.synonym_pairs

    def iter_triples(self) -> Iterator[tuple[str, str, str]]:
        for (s, r), targets in self.forward_index.items():
            for t in targets:
                yield (s, r, t)

    @property
    def triple_count(self) -> int:
        return sum(len(v) for v in self.forward_index.values())

    # -- snapshots ---------------------------------------------------------

    def to_snapshot_bytes(self) -> bytes:
        """Compact binary snapshot; deterministic for a given triple set.

        Holds graph content only (no ingest run metadata), so two parses
        of the same dump serialize byte-identically.
        """
        payload = {
            "language": self.language,
            "triples": sorted(self.iter_triples()),
            "synonyms": sorted(self.synonym_pairs),
        }
        raw = json.dumps(payload, ensure_ascii=False, sort_keys=True,
                         separators=(",", ":")).encode("utf-8")
        header = _SNAPSHOT_MAGIC + bytes([_SNAPSHOT_VERSION])
        return header + zlib.compress(raw, 6)

    @classmethod
    def from_snapshot_bytes(cls, blob: bytes) -> "KnowledgeGraph":
        if len(blob) < 5 or blob[:4] != _SNAPSHOT_MAGIC:
            raise SnapshotError("not a graph snapshot (bad magic header)")
        if blob[4] != _SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {blob[4]}")
        try:
            payload = json.loads(zlib.decompress(blob[5:]).decode("utf-8"))
        except (zlib.error, ValueError) as exc:
            raise SnapshotError(f"corrupt snapshot: {exc}") from exc
        return cls.from_triples(payload["language"],
                                [tuple(t) for t in payload["triples"]],
                                IngestSummary())

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_snapshot_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "KnowledgeGraph":
        p = Path(path)
        if not p.exists():
            raise SnapshotError(f"snapshot not found: {p}")
        return cls.from_snapshot_bytes(p.read_bytes())


def _parse_concept_uri(uri: str) -> tuple[str, str] | None:
    """/c/<lang>/<term>[/...] -> (lang, raw term), or None if malformed."""
    if not uri.startswith("/c/"):
        return None
    parts = uri.split("/", 4)
    # parts: ['', 'c', lang, term, rest?]
    if len(parts) < 4 or not parts[2] or not parts[3]:
        return None
    return parts[2], parts[3]


def parse_dump(
    dump_stream: Iterable[Union[bytes, str]],
    language: str,
) -> KnowledgeGraph:
    """Stream-parse an assertion dump into a monolingual graph.

    Well-formed lines have five tab-separated fields; malformed lines are
    counted and skipped, never fatal. Lines in other languages are counted
    separately. Duplicate triples collapse.
    """
    summary = IngestSummary()
    triples: list[tuple[str, str, str]] = []
    try:
        for raw_line in dump_stream:
            summary.lines += 1
            if isinstance(raw_line, bytes):
                try:
                    line = raw_line.decode("utf-8")
                except UnicodeDecodeError:
                    summary.malformed += 1
                    continue
            else:
                line = raw_line
            line = line.rstrip("\r\n")
            if not line:
                summary.malformed += 1
                continue
            fields = line.split("\t", 4)
            if len(fields) < 5:
                summary.malformed += 1
                continue
            rel_uri = fields[1]
            if not rel_uri.startswith("/r/") or len(rel_uri) <= 3:
                summary.malformed += 1
                continue
            start = _parse_concept_uri(fields[2])
            end = _parse_concept_uri(fields[3])
            if start is None or end is None:
                summary.malformed += 1
                continue
            if start[0] != language or end[0] != language:
                summary.skipped_language += 1
                continue
            s_term = normalize_term(start[1])
            t_term = normalize_term(end[1])
            if not s_term or not t_term:
                summary.malformed += 1
                continue
            triples.append((s_term, rel_uri[3:], t_term))
    except OSError as exc:
        raise IngestError(f"unreadable dump stream: {exc}") from exc
    graph = KnowledgeGraph.from_triples(language, triples, summary)
    if summary.malformed:
        logger.warning("ingest skipped %d malformed lines", summary.malformed)
    return graph


def open_dump(path: Union[str, Path]) -> IO[bytes]:
    """Open a dump file for streaming, transparently handling gzip."""
    p = Path(path)
    try:
        fh = open(p, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open dump {p}: {exc}") from exc
    head = fh.read(2)
    fh.seek(0)
    if head == b"\x1f\x8b":
        fh.close()
        return gzip.open(p, "rb")  # type: ignore[return-value]
    return fh
