"""Change scoring and binary labeling of words across two time slices.

A word's change score is the cosine between its two slice vectors brought
into a common coordinate system, either directly (compass slices, or a source
space already rotated onto the target) or through a learned predictive map.
Low cosine = changed. Labels come from population statistics of the scores:
a word is flagged when its score falls strictly below the rule's cutoff.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedder import EmbeddingSpace

log = logging.getLogger(__name__)

METHODS = ("OP", "LR", "FFNN", "TWEC")
TRAINSETS = ("SW", "CW")
ALGORITHMS = ("CBOW", "SG")
RULES = ("MEAN", "MEAN_MINUS_2SIGMA")


@dataclass(frozen=True)
class MethodId:
    """Parsed form of the method grammar METHOD[_TRAINSET]_ALGO."""

    method: str
    trainset: str | None
    algorithm: str

    def __str__(self) -> str:
        if self.trainset is None:
            return f"{self.method}_{self.algorithm}"
        return f"{self.method}_{self.trainset}_{self.algorithm}"


def parse_method_id(s: str) -> MethodId:
    """Validate and split a method id such as OP_SW_CBOW or TWEC_SG.

    TWEC needs no anchor train set (the compass is its own alignment), so a
    trainset token is forbidden there and required everywhere else.
    """
    parts = s.split("_")
    if len(parts) == 2:
        method, algo = parts
        trainset = None
    elif len(parts) == 3:
        method, trainset, algo = parts
    else:
        raise ValueError(f"malformed method id {s!r}, expected METHOD[_TRAINSET]_ALGO")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r} in {s!r}, expected one of {METHODS}")
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r} in {s!r}, expected one of {ALGORITHMS}")
    if method == "TWEC":
        if trainset is not None:
            raise ValueError(f"{s!r}: TWEC takes no anchor set token")
    else:
        if trainset is None:
            raise ValueError(f"{s!r}: method {method} requires an anchor set (SW or CW)")
        if trainset not in TRAINSETS:
            raise ValueError(f"unknown anchor set {trainset!r} in {s!r}, expected SW or CW")
    return MethodId(method=method, trainset=trainset, algorithm=algo)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clipped into [-1, 1]. Zero-norm input is an error."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine of a zero-norm vector is undefined")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


@dataclass
class ChangeScoreTable:
    """Scores per word plus the words that could not be scored at all."""

    method_id: str
    scores: dict[str, float]
    unscorable: frozenset[str] = frozenset()

    def __post_init__(self):
        parse_method_id(self.method_id)
        if self.unscorable & set(self.scores):
            raise ValueError("a word cannot be both scored and unscorable")
        vals = np.fromiter(self.scores.values(), dtype=np.float64, count=len(self.scores))
        if vals.size and not (np.isfinite(vals).all() and vals.min() >= -1.0 and vals.max() <= 1.0):
            raise ValueError("scores must be finite and within [-1, 1]")


def _check_direct_pair(s0: EmbeddingSpace, s1: EmbeddingSpace) -> None:
    for sp in (s0, s1):
        if sp.origin == "compass-slice" and sp.aligned_by is not None:
            raise ValueError(
                f"slice {sp.slice_id}: compass spaces must not additionally be rotated "
                f"by an orthogonal map (aligned_by={sp.aligned_by!r})"
            )
    both_compass = s0.origin == "compass-slice" and s1.origin == "compass-slice"
    one_aligned = s0.aligned_by is not None or s1.aligned_by is not None
    if not both_compass and not one_aligned:
        log.warning(
            "direct scoring of %s/%s spaces that are neither compass-aligned nor "
            "rotated onto each other; cosines are likely meaningless",
            s0.origin, s1.origin,
        )


def score_direct(s0: EmbeddingSpace, s1: EmbeddingSpace, words, method_id: str) -> ChangeScoreTable:
    """Cosine between slice vectors already living in one coordinate system."""
    _check_direct_pair(s0, s1)
    scores: dict[str, float] = {}
    unscorable: set[str] = set()
    for w in words:
        if w not in s0.vocab or w not in s1.vocab:
            unscorable.add(w)
            continue
        u = s0.vector(w)
        v = s1.vector(w)
        if not np.linalg.norm(u) or not np.linalg.norm(v):
            unscorable.add(w)
            continue
        scores[w] = cosine(u, v)
    return ChangeScoreTable(method_id=method_id, scores=scores, unscorable=frozenset(unscorable))


def score_predictive(s0: EmbeddingSpace, s1: EmbeddingSpace, translator, words,
                     method_id: str) -> ChangeScoreTable:
    """Cosine between the translated source vector and the actual target vector.

    ``translator`` is any object with predict(rows) mapping source-slice (T1)
    vectors into the target slice's (T0) coordinates.
    """
    if s1.origin == "compass-slice" or s0.origin == "compass-slice":
        raise ValueError("predictive scoring of compass slices is meaningless; use score_direct")
    scores: dict[str, float] = {}
    unscorable: set[str] = set()
    for w in words:
        if w not in s0.vocab or w not in s1.vocab:
            unscorable.add(w)
            continue
        predicted = translator.predict(s1.vector(w)[None, :])[0]
        actual = s0.vector(w)
        if not np.linalg.norm(predicted) or not np.linalg.norm(actual):
            unscorable.add(w)
            continue
        scores[w] = cosine(predicted, actual)
    return ChangeScoreTable(method_id=method_id, scores=scores, unscorable=frozenset(unscorable))


@dataclass(frozen=True)
class ThresholdStats:
    rule: str
    mean: float
    std: float
    cutoff: float
    population_size: int


def threshold_stats(table: ChangeScoreTable, rule: str,
                    restrict_to=None) -> ThresholdStats:
    """Population mean/std of the scores (ddof=0) and the rule's cutoff.

    By default the population is every scored word; ``restrict_to`` narrows it
    (e.g. to the evaluation targets only).
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}, expected one of {RULES}")
    if restrict_to is None:
        vals = np.fromiter(table.scores.values(), dtype=np.float64, count=len(table.scores))
    else:
        keep = set(restrict_to)
        vals = np.array([s for w, s in table.scores.items() if w in keep])
    if vals.size == 0:
        raise ValueError("threshold population is empty")
    mean = float(vals.mean())
    std = float(vals.std())  # population std
    cutoff = mean if rule == "MEAN" else mean - 2.0 * std
    return ThresholdStats(rule=rule, mean=mean, std=std, cutoff=cutoff,
                          population_size=int(vals.size))


@dataclass
class LabelTable:
    method_id: str
    rule: str
    labels: dict[str, int]
    unscorable: frozenset[str] = frozenset()


def classify(table: ChangeScoreTable, stats: ThresholdStats, test_words) -> LabelTable:
    """Label 1 iff the score is strictly below the cutoff; unscorable words get 0."""
    labels: dict[str, int] = {}
    unscorable: set[str] = set()
    for w in test_words:
        if w in table.scores:
            labels[w] = int(table.scores[w] < stats.cutoff)
        else:
            log.warning("word %r is unscorable under %s; defaulting label to 0",
                        w, table.method_id)
            labels[w] = 0
            unscorable.add(w)
    return LabelTable(method_id=table.method_id, rule=stats.rule, labels=labels,
                      unscorable=frozenset(unscorable))


def rank_ascending(table: ChangeScoreTable) -> list[tuple[str, float]]:
    """All scored words, lowest score first, ties broken lexicographically."""
    return sorted(table.scores.items(), key=lambda kv: (kv[1], kv[0]))


def histogram(table: ChangeScoreTable, bins: int = 40) -> list[tuple[float, float, int]]:
    """Counts over [-1, 1]: right-exclusive bins except the last, which is closed."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    vals = np.fromiter(table.scores.values(), dtype=np.float64, count=len(table.scores))
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(vals, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


# ---------------------------------------------------------------------------
# Delimited output
# ---------------------------------------------------------------------------

def write_scores(table: ChangeScoreTable, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for w in sorted(table.scores):
            fh.write(f"{w}\t{table.scores[w]:.17g}\n")
    return path


def read_scores(path: str | Path, method_id: str) -> ChangeScoreTable:
    path = Path(path)
    scores: dict[str, float] = {}
    with path.open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{i}: expected word<TAB>score")
            if parts[0] in scores:
                raise ValueError(f"{path}:{i}: duplicate word {parts[0]!r}")
            scores[parts[0]] = float(parts[1])
    return ChangeScoreTable(method_id=method_id, scores=scores)


def write_labels(table: LabelTable, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for w in sorted(table.labels):
            fh.write(f"{w}\t{table.labels[w]}\n")
    return path


def read_labels(path: str | Path, method_id: str = "TWEC_CBOW", rule: str = "MEAN") -> LabelTable:
    path = Path(path)
    labels: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ValueError(f"{path}:{i}: expected word<TAB>label with label 0 or 1")
            if parts[0] in labels:
                raise ValueError(f"{path}:{i}: duplicate word {parts[0]!r}")
            labels[parts[0]] = int(parts[1])
    return LabelTable(method_id=method_id, rule=rule, labels=labels)


def write_histogram(rows, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for lo, hi, count in rows:
            fh.write(f"{lo:.17g}\t{hi:.17g}\t{count}\n")
    return path
