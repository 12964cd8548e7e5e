"""Corpus access, vocabularies, and word sets.

Corpora are plain text files, one sentence per line, already tokenized:
tokenization here is a pure whitespace split with no lowercasing, no
punctuation stripping, and no length filtering.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SLICE_IDS = ("T0", "T1", "T0+T1")
WORDSET_NAMES = ("SW", "CW", "TEST")


def tokenize_line(line: str) -> list[str]:
    """Split on whitespace. Pure: no normalization of any kind."""
    return line.split()


@dataclass(frozen=True)
class SentenceCorpus:
    """A file-backed, re-iterable corpus for one time slice."""

    slice_id: str
    source: Path
    sentence_count: int

    def __post_init__(self):
        if self.slice_id not in SLICE_IDS:
            raise ValueError(f"unknown slice_id {self.slice_id!r}, expected one of {SLICE_IDS}")

    @classmethod
    def open(cls, slice_id: str, source: str | Path) -> "SentenceCorpus":
        source = Path(source)
        if not source.is_file():
            raise FileNotFoundError(f"corpus file not found: {source}")
        n = 0
        with source.open("r", encoding="utf-8") as fh:
            for _ in fh:
                n += 1
        return cls(slice_id=slice_id, source=source, sentence_count=n)

    def __iter__(self):
        with self.source.open("r", encoding="utf-8") as fh:
            for line in fh:
                yield tokenize_line(line)

    def __len__(self) -> int:
        return self.sentence_count


def merge_corpora(c0: SentenceCorpus, c1: SentenceCorpus, out_path: str | Path) -> SentenceCorpus:
    """Concatenate two slices into a merged corpus file with slice_id "T0+T1"."""
    out_path = Path(out_path)
    with out_path.open("w", encoding="utf-8") as out:
        for c in (c0, c1):
            with c.source.open("r", encoding="utf-8") as fh:
                for line in fh:
                    out.write(line if line.endswith("\n") else line + "\n")
    return SentenceCorpus.open("T0+T1", out_path)


@dataclass
class Vocabulary:
    """Count-thresholded vocabulary with a deterministic entry order.

    Entries are ordered by descending count, ties broken lexicographically.
    ``total_tokens`` is the number of corpus tokens covered by the kept
    entries (dropped-word tokens excluded), which is the denominator used by
    the subsampling schedule downstream.
    """

    words: list[str]
    counts: np.ndarray
    index: dict[str, int]
    total_tokens: int

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def count(self, word: str) -> int:
        return int(self.counts[self.index[word]])


def build_vocabulary(corpus: SentenceCorpus, min_count: int = 5) -> Vocabulary:
    """Count words in ``corpus`` and keep those with count >= min_count."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    raw: dict[str, int] = {}
    for sent in corpus:
        for w in sent:
            raw[w] = raw.get(w, 0) + 1
    kept = [(w, c) for w, c in raw.items() if c >= min_count]
    if not kept:
        raise ValueError(
            f"no word in {corpus.source} reaches min_count={min_count}; vocabulary would be empty"
        )
    kept.sort(key=lambda e: (-e[1], e[0]))
    words = [w for w, _ in kept]
    counts = np.array([c for _, c in kept], dtype=np.int64)
    index = {w: i for i, w in enumerate(words)}
    return Vocabulary(words=words, counts=counts, index=index, total_tokens=int(counts.sum()))


@dataclass(frozen=True)
class WordSet:
    """A named set of words with a record of what was filtered out and why."""

    name: str
    words: frozenset[str]
    provenance: str = ""
    dropped: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.name not in WORDSET_NAMES:
            raise ValueError(f"unknown word-set name {self.name!r}, expected one of {WORDSET_NAMES}")


def common_words(v0: Vocabulary, v1: Vocabulary, exclude: frozenset[str] = frozenset()) -> WordSet:
    """CW: words present in both slice vocabularies, minus ``exclude``."""
    shared = (set(v0.index) & set(v1.index)) - set(exclude)
    return WordSet(
        name="CW",
        words=frozenset(shared),
        provenance="intersection of slice vocabularies"
        + (" minus excluded words" if exclude else ""),
    )


def load_stopwords(path: str | Path, v0: Vocabulary, v1: Vocabulary) -> WordSet:
    """SW: stopwords from ``path`` (one per line) present in both vocabularies.

    Words absent from a slice vocabulary are dropped and recorded, never
    silently discarded. An empty surviving set is an error because SW anchors
    training comparisons downstream.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"stopword file not found: {path}")
    listed: list[str] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            w = line.strip()
            if w and w not in seen:
                listed.append(w)
                seen.add(w)
    kept: list[str] = []
    dropped: list[tuple[str, str]] = []
    for w in listed:
        if w not in v0:
            dropped.append((w, "dropped_T0"))
        elif w not in v1:
            dropped.append((w, "dropped_T1"))
        else:
            kept.append(w)
    if not kept:
        raise ValueError(f"no stopword from {path} survives the vocabulary filter")
    if dropped:
        log.info("stopwords: %d kept, %d dropped by vocabulary filter", len(kept), len(dropped))
    return WordSet(
        name="SW",
        words=frozenset(kept),
        provenance=f"stopword list {path.name} filtered by both slice vocabularies",
        dropped=tuple(dropped),
    )


def load_testset(path: str | Path) -> list[str]:
    """Read the evaluation target words, one per line, order preserved."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"test-set file not found: {path}")
    words: list[str] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            w = line.strip()
            if w and w not in seen:
                words.append(w)
                seen.add(w)
    if not words:
        raise ValueError(f"test-set file {path} is empty")
    return words


def resolve_testset(words: list[str], v0: Vocabulary, v1: Vocabulary) -> WordSet:
    """TEST: target words checked against both vocabularies.

    Dropped words stay visible in the report and are exactly the ones the
    detector will flag as unscorable.
    """
    kept: list[str] = []
    dropped: list[tuple[str, str]] = []
    for w in words:
        if w not in v0:
            dropped.append((w, "dropped_T0"))
        elif w not in v1:
            dropped.append((w, "dropped_T1"))
        else:
            kept.append(w)
    return WordSet(
        name="TEST",
        words=frozenset(kept),
        provenance="evaluation target words filtered by both slice vocabularies",
        dropped=tuple(dropped),
    )


def write_wordset_report(ws: WordSet, path: str | Path) -> None:
    """TSV report: word<TAB>status, status in {kept, dropped_T0, dropped_T1}."""
    rows = [(w, "kept") for w in ws.words]
    rows.extend(ws.dropped)
    rows.sort()
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for w, status in rows:
            fh.write(f"{w}\t{status}\n")
