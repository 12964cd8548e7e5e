"""Evaluation of change predictions against gold labels.

Metrics per method: accuracy under both threshold rules, the average score
over the stopword anchors (a stability indicator usable without any gold
data), the mean normalized rank of the truly shifted words, and two recall
flavours over the low end of the ranking. A small selection helper picks the
models to submit by the anchor-stability indicator alone, mirroring a setting
where gold labels are unavailable at decision time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .detector import ChangeScoreTable, LabelTable, rank_ascending

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GoldLabels:
    labels: dict[str, int]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("gold labels are empty")
        bad = {w: l for w, l in self.labels.items() if l not in (0, 1)}
        if bad:
            raise ValueError(f"gold labels must be 0 or 1, got {bad}")

    @property
    def shifted(self) -> frozenset[str]:
        return frozenset(w for w, l in self.labels.items() if l == 1)

    @property
    def stable(self) -> frozenset[str]:
        return frozenset(w for w, l in self.labels.items() if l == 0)


def load_gold(path: str | Path) -> GoldLabels:
    """TSV word<TAB>label, label 0 (stable) or 1 (shifted)."""
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
                raise ValueError(f"{path}:{i}: duplicate gold word {parts[0]!r}")
            labels[parts[0]] = int(parts[1])
    return GoldLabels(labels=labels)


def write_gold(gold: GoldLabels, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for w in sorted(gold.labels):
            fh.write(f"{w}\t{gold.labels[w]}\n")
    return path


def accuracy(pred: LabelTable, gold: GoldLabels) -> float:
    """Fraction of gold words labeled correctly.

    A gold word recorded as unscorable counts as predicted 0 (the mandated
    default); a gold word the prediction never saw at all is an error.
    """
    hits = 0
    for w, g in gold.labels.items():
        if w in pred.labels:
            p = pred.labels[w]
        elif w in pred.unscorable:
            p = 0
        else:
            raise ValueError(f"prediction is missing gold word {w!r}")
        hits += int(p == g)
    return hits / len(gold.labels)


def avg_anchor_cosine(table: ChangeScoreTable, anchors) -> float:
    """Mean change score over the anchor words present in the table."""
    vals = [table.scores[w] for w in anchors if w in table.scores]
    if not vals:
        raise ValueError("no anchor word is scored; cannot compute the anchor average")
    missing = [w for w in anchors if w not in table.scores]
    if missing:
        log.warning("%d anchor words missing from %s scores", len(missing), table.method_id)
    return sum(vals) / len(vals)


def mean_normalized_rank(table: ChangeScoreTable, shifted) -> float:
    """(1/|C|) * sum of rank(w)/N over the truly shifted words C.

    Ranks are ascending (rank 1 = lowest score) over all N scored words.
    A shifted word missing from the ranking is charged the worst rank N.
    """
    ranking = rank_ascending(table)
    n = len(ranking)
    if n == 0:
        raise ValueError("cannot rank an empty score table")
    shifted = set(shifted)
    if not shifted:
        raise ValueError("no shifted words given")
    pos = {w: i + 1 for i, (w, _) in enumerate(ranking)}
    total = sum(pos.get(w, n) / n for w in shifted)
    return total / len(shifted)


def recall_at_fraction(table: ChangeScoreTable, shifted, p: float = 0.5) -> float:
    """Recall of the shifted words within the first ceil(p * N) ascending ranks."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    ranking = rank_ascending(table)
    if not ranking:
        raise ValueError("cannot rank an empty score table")
    shifted = set(shifted)
    if not shifted:
        raise ValueError("no shifted words given")
    top = {w for w, _ in ranking[: math.ceil(p * len(ranking))]}
    return len(shifted & top) / len(shifted)


def recall_at_k(table: ChangeScoreTable, shifted, k: int) -> float:
    """Recall of the shifted words within the k lowest-scored words."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranking = rank_ascending(table)
    if not ranking:
        raise ValueError("cannot rank an empty score table")
    shifted = set(shifted)
    if not shifted:
        raise ValueError("no shifted words given")
    top = {w for w, _ in ranking[:k]}
    return len(shifted & top) / len(shifted)


@dataclass(frozen=True)
class EvalReport:
    method_id: str
    cs_avg_sw: float
    acc_mean: float
    acc_2sigma: float
    mu_rank: float
    recall_p: float
    recall_k: float

    def __post_init__(self):
        for name in ("acc_mean", "acc_2sigma", "mu_rank", "recall_p", "recall_k"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not (-1.0 <= self.cs_avg_sw <= 1.0):
            raise ValueError(f"cs_avg_sw must lie in [-1, 1], got {self.cs_avg_sw}")


REPORT_COLUMNS = ("method_id", "cs_avg_sw", "acc_mean", "acc_2sigma",
                  "mu_rank", "recall_p", "recall_k")


def select_models(reports, top_n: int = 4) -> list[EvalReport]:
    """Pick the submission set: highest anchor-average first, id breaks ties.

    Uses cs_avg_sw only, so the selection works with no gold access; the
    result is invariant to the order the reports come in.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    ordered = sorted(reports, key=lambda r: (-r.cs_avg_sw, r.method_id))
    return ordered[:top_n]


def write_report(reports, path: str | Path) -> Path:
    """One TSV row per method with the six metric columns."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(REPORT_COLUMNS) + "\n")
        for r in reports:
            fh.write(
                f"{r.method_id}\t{r.cs_avg_sw:.6f}\t{r.acc_mean:.6f}\t{r.acc_2sigma:.6f}"
                f"\t{r.mu_rank:.6f}\t{r.recall_p:.6f}\t{r.recall_k:.6f}\n"
            )
    return path
