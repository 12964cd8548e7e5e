"""Synthetic twin corpora with injected, known semantic shifts.

The generator samples two corpus slices from one topic-mixture process: each
sentence picks a topic, then mixes topic words (Zipf-distributed within the
topic) with topic-independent stopword fillers. Semantic change is injected
into the second slice only, as a symmetric occurrence swap between a recipient
and a donor word from another topic: the recipient inherits the donor's
contexts and vice versa. Swapping (rather than one-way replacing) keeps both
words' corpus frequencies stable when the pair shares a within-topic rank,
so frequency alone carries no signal about the shift.

Everything is deterministic given ``DriftSpec.seed``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SentenceCorpus
from .evaluator import GoldLabels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriftSpec:
    vocab_size: int = 2000
    topics: int = 10
    sentences_per_slice: int = 60_000
    sentence_length: int = 12
    shift_pairs: tuple[tuple[str, str], ...] = ()
    replace_prob: float = 1.0
    seed: int = 1
    stopword_count: int = 50
    stop_fraction: float = 0.3
    zipf_exponent: float = 1.0
    gold_min_count: int = 20

    def __post_init__(self):
        if self.topics < 1 or self.sentences_per_slice < 1:
            raise ValueError("topics and sentences_per_slice must be >= 1")
        if self.sentence_length < 2:
            raise ValueError("sentence_length must be >= 2 to form context pairs")
        if self.stopword_count < 1:
            raise ValueError("stopword_count must be >= 1")
        if self.vocab_size < self.stopword_count + self.topics:
            raise ValueError("vocab_size must cover the stopwords plus one word per topic")
        if not (0.0 <= self.stop_fraction < 1.0):
            raise ValueError("stop_fraction must lie in [0, 1)")
        if not (0.0 <= self.replace_prob <= 1.0):
            raise ValueError("replace_prob must lie in [0, 1]")
        if self.zipf_exponent < 0.0:
            raise ValueError("zipf_exponent must be >= 0")
        if self.gold_min_count < 1:
            raise ValueError("gold_min_count must be >= 1")
        recipients = [r for r, _ in self.shift_pairs]
        donors = [d for _, d in self.shift_pairs]
        if any(r == d for r, d in self.shift_pairs):
            raise ValueError("a shift pair cannot map a word onto itself")
        if len(set(recipients)) != len(recipients) or len(set(donors)) != len(donors):
            raise ValueError("shift recipients and donors must each be pairwise distinct")
        if set(recipients) & set(donors):
            raise ValueError("a word cannot be both a shift recipient and a donor")

    @property
    def words_per_topic(self) -> int:
        return (self.vocab_size - self.stopword_count) // self.topics


def topic_word(topic: int, rank: int) -> str:
    return f"t{topic:02d}w{rank:03d}"


def stop_word(idx: int) -> str:
    return f"s{idx:03d}"


def default_shift_pairs(spec: DriftSpec, n: int) -> tuple[tuple[str, str], ...]:
    """Rank-matched cross-topic pairs: (topic 2i, topic 2i+1) at rank 2, 3, ...

    Matching ranks keeps each pair's expected frequencies equal, so the swap
    leaves the frequency profile of both slices indistinguishable. Ranks start
    at 2: frequent enough to train well, but not the topic's head words.
    """
    if spec.topics < 2:
        raise ValueError("need at least 2 topics to build cross-topic shift pairs")
    pairs: list[tuple[str, str]] = []
    rank = 2
    while len(pairs) < n:
        if rank >= spec.words_per_topic:
            raise ValueError(f"cannot build {n} shift pairs from {spec.topics} topics "
                             f"of {spec.words_per_topic} words")
        for i in range(spec.topics // 2):
            pairs.append((topic_word(2 * i, rank), topic_word(2 * i + 1, rank)))
            if len(pairs) == n:
                break
        rank += 1
    return tuple(pairs)


def _zipf(n: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.arange(1.0, n + 1.0) ** exponent
    return weights / weights.sum()


@dataclass
class SynthBundle:
    spec: DriftSpec
    out_dir: Path
    corpus_t0: SentenceCorpus
    corpus_t1: SentenceCorpus
    stopword_file: Path
    gold: GoldLabels
    topic_of: dict[str, int]


def generate(spec: DriftSpec, out_dir: str | Path) -> SynthBundle:
    """Write t0.txt, t1.txt, and stopwords.txt under ``out_dir``.

    The returned gold truth labels every shift recipient 1 and every
    sufficiently frequent untouched content word 0. Donor words are excluded
    from the stable pool: their contexts change too, just as genuinely as the
    recipients'. A recipient or donor rarer than ``gold_min_count`` in either
    slice is an error (grow sentences_per_slice or pick lower ranks).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_stop = spec.stopword_count
    per_topic = spec.words_per_topic
    n_content = per_topic * spec.topics
    names = np.array(
        [stop_word(i) for i in range(n_stop)]
        + [topic_word(t, r) for t in range(spec.topics) for r in range(per_topic)]
    )
    name_to_id = {w: i for i, w in enumerate(names)}
    for r, d in spec.shift_pairs:
        for w in (r, d):
            if w not in name_to_id or not w.startswith("t"):
                raise ValueError(f"shift pair word {w!r} is not a generated content word")

    rng = np.random.default_rng(spec.seed)
    stop_probs = _zipf(n_stop, spec.zipf_exponent)
    rank_probs = _zipf(per_topic, spec.zipf_exponent)
    shape = (spec.sentences_per_slice, spec.sentence_length)

    def draw_slice() -> np.ndarray:
        sent_topics = rng.integers(0, spec.topics, spec.sentences_per_slice)
        is_stop = rng.random(shape) < spec.stop_fraction
        stop_ids = rng.choice(n_stop, size=shape, p=stop_probs)
        ranks = rng.choice(per_topic, size=shape, p=rank_probs)
        content_ids = n_stop + sent_topics[:, None] * per_topic + ranks
        return np.where(is_stop, stop_ids, content_ids).astype(np.int32)

    t0 = draw_slice()
    t1 = draw_slice()
    for r, d in spec.shift_pairs:
        rid, did = name_to_id[r], name_to_id[d]
        mask_r = t1 == rid
        mask_d = t1 == did
        if spec.replace_prob < 1.0:
            mask_r &= rng.random(shape) < spec.replace_prob
            mask_d &= rng.random(shape) < spec.replace_prob
        t1[mask_d] = rid
        t1[mask_r] = did

    n_total = n_stop + n_content
    counts0 = np.bincount(t0.ravel(), minlength=n_total)
    counts1 = np.bincount(t1.ravel(), minlength=n_total)

    touched: set[int] = set()
    for r, d in spec.shift_pairs:
        for w in (r, d):
            wid = name_to_id[w]
            touched.add(wid)
            if min(counts0[wid], counts1[wid]) < spec.gold_min_count:
                raise ValueError(
                    f"shift word {w!r} occurs fewer than {spec.gold_min_count} times in a "
                    f"slice; increase sentences_per_slice or use lower ranks"
                )

    labels: dict[str, int] = {r: 1 for r, _ in spec.shift_pairs}
    for wid in range(n_stop, n_total):
        if wid in touched:
            continue
        if min(counts0[wid], counts1[wid]) >= spec.gold_min_count:
            labels[str(names[wid])] = 0
    if not any(v == 0 for v in labels.values()):
        raise ValueError("no content word is frequent enough to serve as stable gold")

    def write_slice(mat: np.ndarray, path: Path) -> None:
        rows = names[mat]
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(" ".join(row) + "\n")

    p0 = out_dir / "t0.txt"
    p1 = out_dir / "t1.txt"
    write_slice(t0, p0)
    write_slice(t1, p1)
    sw_path = out_dir / "stopwords.txt"
    sw_path.write_text("".join(stop_word(i) + "\n" for i in range(n_stop)), encoding="utf-8")

    topic_of = {topic_word(t, r): t for t in range(spec.topics) for r in range(per_topic)}
    log.info("synthetic bundle: %d+%d sentences, vocab %d (%d stop), %d shifts, %d stable gold",
             spec.sentences_per_slice, spec.sentences_per_slice, n_total, n_stop,
             len(spec.shift_pairs), sum(1 for v in labels.values() if v == 0))
    return SynthBundle(
        spec=spec,
        out_dir=out_dir,
        corpus_t0=SentenceCorpus.open("T0", p0),
        corpus_t1=SentenceCorpus.open("T1", p1),
        stopword_file=sw_path,
        gold=GoldLabels(labels=labels),
        topic_of=topic_of,
    )


def emit_testset(bundle: SynthBundle, stable_n: int = 12, shifted_n: int = 6,
                 seed: int | None = None):
    """Sample an evaluation target list: ``shifted_n`` recipients, ``stable_n`` stable.

    Returns (words sorted lexicographically, their GoldLabels). Deterministic
    for a given seed (defaults to the bundle's generation seed).
    """
    shifted_pool = sorted(bundle.gold.shifted)
    stable_pool = sorted(bundle.gold.stable)
    if shifted_n > len(shifted_pool):
        raise ValueError(f"asked for {shifted_n} shifted words, only {len(shifted_pool)} exist")
    if stable_n > len(stable_pool):
        raise ValueError(f"asked for {stable_n} stable words, only {len(stable_pool)} exist")
    rng = np.random.default_rng(bundle.spec.seed if seed is None else seed)
    chosen = list(rng.choice(shifted_pool, size=shifted_n, replace=False))
    chosen += list(rng.choice(stable_pool, size=stable_n, replace=False))
    words = sorted(str(w) for w in chosen)
    return words, GoldLabels(labels={w: bundle.gold.labels[w] for w in words})
