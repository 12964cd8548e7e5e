"""Static word embeddings trained with negative sampling (skip-gram / CBOW).

Two matrices per space: ``target`` (the input/word vectors, the ones used for
all comparisons downstream) and ``context`` (the output matrix). Either matrix
can be frozen during training, which is what makes the compass construction in
:mod:`lexdrift.compass` possible.

The hot loops live in :mod:`lexdrift._sgns`; this module owns the math
contracts and exposes pure numpy reference implementations of the per-pair
objective and its gradients for verification.
"""
from __future__ import annotations

import logging
import math
from array import array
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _sgns
from .corpus import SentenceCorpus, Vocabulary

log = logging.getLogger(__name__)

ALGORITHMS = ("CBOW", "SG")


@dataclass(frozen=True)
class TrainingConfig:
    algorithm: str = "CBOW"
    dim: int = 100
    window: int = 5
    negative: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr: float = 0.0001
    subsample_t: float = 1e-3
    min_count: int = 5
    seed: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.dim < 1 or self.window < 1 or self.epochs < 1 or self.threads < 1:
            raise ValueError("dim, window, epochs and threads must all be >= 1")
        if self.negative < 0:
            raise ValueError("negative must be >= 0")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if not (0.0 < self.min_lr <= self.initial_lr):
            raise ValueError("need 0 < min_lr <= initial_lr")
        if self.subsample_t < 0.0:
            raise ValueError("subsample_t must be >= 0 (0 disables subsampling)")


@dataclass(frozen=True)
class FreezeMask:
    """Which matrix stays untouched during training. Freezing both is useless."""

    freeze_target: bool = False
    freeze_context: bool = False

    def __post_init__(self):
        if self.freeze_target and self.freeze_context:
            raise ValueError("freezing both matrices would make training a no-op")


@dataclass
class EmbeddingSpace:
    """A (vocab, target, context) triple for one slice.

    ``origin`` records how the space was produced ("ind", "compass-base",
    "compass-slice") and ``aligned_by`` the anchor set of any map applied to
    it; the detector uses both to reject meaningless comparisons.
    """

    slice_id: str
    vocab: Vocabulary
    target: np.ndarray
    context: np.ndarray
    origin: str = "ind"
    aligned_by: str | None = None

    def __post_init__(self):
        n = len(self.vocab)
        if self.target.shape != self.context.shape or self.target.shape[0] != n:
            raise ValueError(
                f"matrix shapes {self.target.shape}/{self.context.shape} do not match "
                f"vocabulary size {n}"
            )

    @property
    def dim(self) -> int:
        return int(self.target.shape[1])

    def vector(self, word: str) -> np.ndarray:
        return self.target[self.vocab.index[word]]


def unigram_table(vocab: Vocabulary, power: float = 0.75) -> np.ndarray:
    """Noise distribution: unigram counts raised to ``power``, normalized."""
    counts = vocab.counts.astype(np.float64)
    weights = counts**power
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("vocabulary carries no counts, cannot build a noise distribution")
    return weights / total


def keep_probability(count: int, total_tokens: int, t: float) -> float:
    """Subsampling keep probability p = (sqrt(f/t) + 1) * (t/f), clamped to [0, 1].

    ``t = 0`` disables subsampling entirely. Words with no usable frequency
    (count or total of zero) are always kept.
    """
    if t == 0.0 or count <= 0 or total_tokens <= 0:
        return 1.0
    f = count / total_tokens
    p = (math.sqrt(f / t) + 1.0) * (t / f)
    return min(1.0, max(0.0, p))


def init_space(vocab: Vocabulary, config: TrainingConfig) -> EmbeddingSpace:
    """Seeded init: target uniform in [-0.5/dim, 0.5/dim), context all zeros."""
    rng = np.random.default_rng(config.seed & _sgns._MASK64)
    n = len(vocab)
    target = (rng.random((n, config.dim)) - 0.5) / config.dim
    context = np.zeros((n, config.dim))
    return EmbeddingSpace(slice_id="", vocab=vocab, target=target, context=context)


# ---------------------------------------------------------------------------
# Reference objective and gradients (pure numpy, used by tests and by the
# gradient acceptance checks; the jitted kernels implement the same math).
# ---------------------------------------------------------------------------

def pair_loss(input_vec: np.ndarray, out_rows: np.ndarray, labels: np.ndarray) -> float:
    """Negative-sampling loss for one input vector against output rows.

    L = -sum_d [ y_d * log sigmoid(z_d) + (1 - y_d) * log sigmoid(-z_d) ],
    z_d = input_vec . out_rows[d].
    """
    z = out_rows @ input_vec
    return float(np.sum(np.where(labels == 1.0, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))))


def pair_gradients(input_vec, out_rows, labels):
    """Analytic gradients of :func:`pair_loss` wrt the input vector and output rows."""
    z = out_rows @ input_vec
    err = 1.0 / (1.0 + np.exp(-z)) - labels  # dL/dz
    return err @ out_rows, np.outer(err, input_vec)


def cbow_loss(input_rows: np.ndarray, out_rows: np.ndarray, labels: np.ndarray) -> float:
    """Same objective with the input vector replaced by the mean of ``input_rows``."""
    return pair_loss(input_rows.mean(axis=0), out_rows, labels)


def cbow_gradients(input_rows, out_rows, labels):
    """Gradients of :func:`cbow_loss`: each input row receives d_hidden / n."""
    n = input_rows.shape[0]
    d_hidden, d_out = pair_gradients(input_rows.mean(axis=0), out_rows, labels)
    return np.tile(d_hidden / n, (n, 1)), d_out


# ---------------------------------------------------------------------------
# Training driver
# ---------------------------------------------------------------------------

def _token_stream(corpus: SentenceCorpus, vocab: Vocabulary):
    """Flatten the corpus into vocabulary ids, dropping OOV tokens.

    Returns (ids int32, sentence offsets int64, whether any raw token existed).
    """
    index = vocab.index
    ids = array("i")
    offsets = [0]
    saw_tokens = False
    for sent in corpus:
        if sent:
            saw_tokens = True
        n = 0
        for w in sent:
            i = index.get(w)
            if i is not None:
                ids.append(i)
                n += 1
        if n > 0:
            offsets.append(len(ids))
    tokens = np.frombuffer(ids, dtype=np.int32) if len(ids) else np.empty(0, np.int32)
    return tokens, np.asarray(offsets, dtype=np.int64), saw_tokens


def _chunk_bounds(offsets: np.ndarray, threads: int) -> list[tuple[int, int]]:
    """Split sentences into up to ``threads`` contiguous chunks of similar token mass."""
    n_sent = len(offsets) - 1
    if threads <= 1 or n_sent <= 1:
        return [(0, n_sent)]
    total = offsets[-1]
    cuts = [0]
    for k in range(1, threads):
        s = int(np.searchsorted(offsets, total * k // threads))
        cuts.append(min(max(s, cuts[-1]), n_sent))
    cuts.append(n_sent)
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]


def train(corpus: SentenceCorpus, space: EmbeddingSpace, config: TrainingConfig,
          mask: FreezeMask = FreezeMask()) -> EmbeddingSpace:
    """Run ``config.epochs`` negative-sampling passes of ``corpus`` over ``space``.

    The input space is never mutated; the result holds fresh matrices (frozen
    ones are exact copies). The learning rate decays linearly from initial_lr
    to min_lr over the expected total token count. Single-threaded runs are
    bit-reproducible for a fixed seed; with threads > 1 chunks race on the
    shared matrices and exact reproducibility is not promised.
    """
    target = np.array(space.target, dtype=np.float64, order="C", copy=True)
    context = np.array(space.context, dtype=np.float64, order="C", copy=True)
    tokens, offsets, saw_tokens = _token_stream(corpus, space.vocab)
    if tokens.size == 0:
        if saw_tokens:
            raise ValueError(
                f"corpus {corpus.source} shares no word with the training vocabulary"
            )
        return replace(space, slice_id=corpus.slice_id, target=target, context=context)

    probs = unigram_table(space.vocab)
    noise_cdf = np.cumsum(probs)
    total = space.vocab.total_tokens
    keep = np.array(
        [keep_probability(int(c), total, config.subsample_t) for c in space.vocab.counts]
    )
    stream_tokens = int(tokens.size)
    span = float(max(1, config.epochs * stream_tokens))
    kernel = _sgns.train_epoch_sg if config.algorithm == "SG" else _sgns.train_epoch_cbow
    learn_target = not mask.freeze_target
    learn_context = not mask.freeze_context
    chunks = _chunk_bounds(offsets, config.threads)

    def run_chunk(epoch: int, idx: int, s0: int, s1: int) -> None:
        kernel(
            tokens, offsets[s0 : s1 + 1], target, context, noise_cdf, keep,
            config.window, config.negative,
            float(epoch * stream_tokens + int(offsets[s0])), span,
            config.initial_lr, config.min_lr, learn_target, learn_context,
            _sgns.chunk_state(config.seed, epoch, idx),
        )

    for epoch in range(config.epochs):
        if len(chunks) == 1:
            run_chunk(epoch, 0, *chunks[0])
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                futs = [
                    pool.submit(run_chunk, epoch, i, a, b) for i, (a, b) in enumerate(chunks)
                ]
                for f in futs:
                    f.result()
        if not (np.isfinite(target).all() and np.isfinite(context).all()):
            raise RuntimeError(f"training diverged: non-finite values after epoch {epoch}")

    return replace(space, slice_id=corpus.slice_id, target=target, context=context)


# ---------------------------------------------------------------------------
# Persistence: word2vec text format, context matrix in a sibling .ctx file
# ---------------------------------------------------------------------------

def _write_matrix(path: Path, words: list[str], matrix: np.ndarray) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for w, row in zip(words, matrix):
            fh.write(w + " " + " ".join(f"{x:.17g}" for x in row) + "\n")


def save_space(space: EmbeddingSpace, path: str | Path) -> Path:
    """Write ``path`` (target matrix) and the sibling ``.ctx`` (context matrix).

    First line is ``|V| dim``; each following line is the word and its vector
    in full round-trip precision, in vocabulary order.
    """
    path = Path(path)
    _write_matrix(path, space.vocab.words, space.target)
    _write_matrix(path.with_suffix(".ctx"), space.vocab.words, space.context)
    return path


def _read_matrix(path: Path):
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header {header!r}, expected '|V| dim'")
        try:
            n, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed header {header!r}") from exc
        if n < 1 or dim < 1:
            raise ValueError(f"{path}: bad counts in header ({n} words, dim {dim})")
        words: list[str] = []
        matrix = np.empty((n, dim))
        for i, line in enumerate(fh):
            parts = line.rstrip("\n").split(" ")
            if i >= n or len(parts) != dim + 1:
                raise ValueError(f"{path}: row {i + 2} does not match header dimensions")
            words.append(parts[0])
            matrix[i] = [float(x) for x in parts[1:]]
        if len(words) != n:
            raise ValueError(f"{path}: expected {n} rows, found {len(words)}")
    if len(set(words)) != n:
        raise ValueError(f"{path}: duplicate words in vector file")
    return words, matrix


def load_space(path: str | Path, slice_id: str = "", origin: str = "ind") -> EmbeddingSpace:
    """Load a space saved by :func:`save_space`.

    The text format carries no corpus counts, so the reconstructed vocabulary
    has zero counts: fine for scoring and alignment, but such a space cannot
    seed a new noise distribution for further training. A missing ``.ctx``
    sibling loads as a zero context matrix with a warning.
    """
    path = Path(path)
    words, target = _read_matrix(path)
    ctx_path = path.with_suffix(".ctx")
    if ctx_path.is_file():
        ctx_words, context = _read_matrix(ctx_path)
        if ctx_words != words:
            raise ValueError(f"{ctx_path}: word order differs from {path}")
    else:
        log.warning("%s: no sibling .ctx file, loading a zero context matrix", path)
        context = np.zeros_like(target)
    vocab = Vocabulary(
        words=words,
        counts=np.zeros(len(words), dtype=np.int64),
        index={w: i for i, w in enumerate(words)},
        total_tokens=0,
    )
    return EmbeddingSpace(
        slice_id=slice_id, vocab=vocab, target=target, context=context, origin=origin
    )
