"""Compass-aligned slice training.

A base model is trained on the merged corpus (both slices concatenated). Each
slice is then re-trained from the base with one matrix frozen to the base's
bitwise values, which pins a shared coordinate system: slice target vectors
are directly comparable without any post-hoc alignment.

Default mode freezes the context matrix and re-trains target vectors; the
opposite assignment is available via ``frozen="target"`` as an ablation (in
that mode the trained, comparable matrix is the context one).
"""
from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SentenceCorpus, build_vocabulary, merge_corpora
from .embedder import (
    EmbeddingSpace,
    FreezeMask,
    TrainingConfig,
    _read_matrix,
    _write_matrix,
    init_space,
    load_space,
    save_space,
    train,
)

log = logging.getLogger(__name__)

FROZEN_MODES = ("context", "target")


@dataclass
class CompassModel:
    """Base space plus the per-slice spaces trained against it."""

    base: EmbeddingSpace
    slices: dict[str, EmbeddingSpace]
    frozen: str = "context"

    def validate(self) -> None:
        for sid, sp in self.slices.items():
            if sp.vocab is not self.base.vocab:
                raise ValueError(f"slice {sid} does not share the base vocabulary object")
            if self.frozen == "context":
                same = np.array_equal(sp.context, self.base.context)
            else:
                same = np.array_equal(sp.target, self.base.target)
            if not same:
                raise ValueError(f"slice {sid}: frozen {self.frozen} matrix drifted from base")


def train_compass(merged: SentenceCorpus, config: TrainingConfig) -> EmbeddingSpace:
    """Train the base space on the merged corpus with nothing frozen."""
    if merged.slice_id != "T0+T1":
        raise ValueError(f"compass base expects the merged corpus, got slice {merged.slice_id!r}")
    vocab = build_vocabulary(merged, config.min_count)
    base = train(merged, init_space(vocab, config), config)
    base.origin = "compass-base"
    return base


def train_slice(slice_corpus: SentenceCorpus, base: EmbeddingSpace,
                config: TrainingConfig, frozen: str = "context") -> EmbeddingSpace:
    """Re-train one slice from the base with the chosen matrix frozen."""
    if frozen not in FROZEN_MODES:
        raise ValueError(f"frozen must be one of {FROZEN_MODES}, got {frozen!r}")
    start = EmbeddingSpace(
        slice_id=base.slice_id,
        vocab=base.vocab,
        target=base.target.copy(),
        context=base.context.copy(),
    )
    mask = FreezeMask(freeze_context=True) if frozen == "context" else FreezeMask(freeze_target=True)
    out = train(slice_corpus, start, config, mask)
    out.origin = "compass-slice"
    return out


def compass_pipeline(c0: SentenceCorpus, c1: SentenceCorpus, config: TrainingConfig,
                     workdir: str | Path | None = None,
                     frozen: str = "context") -> CompassModel:
    """Merge, train the base, then train both slices against it."""
    if workdir is None:
        with tempfile.TemporaryDirectory() as tmp:
            merged = merge_corpora(c0, c1, Path(tmp) / "merged.txt")
            base = train_compass(merged, config)
    else:
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        merged = merge_corpora(c0, c1, workdir / "merged.txt")
        base = train_compass(merged, config)
    model = CompassModel(
        base=base,
        slices={
            c0.slice_id: train_slice(c0, base, config, frozen),
            c1.slice_id: train_slice(c1, base, config, frozen),
        },
        frozen=frozen,
    )
    model.validate()
    return model


def save_compass(model: CompassModel, dirpath: str | Path) -> Path:
    """Persist as base.vec + base.ctx plus one .vec per slice.

    Each slice file holds the matrix that slice actually trained: the target
    matrix in the default (frozen-context) mode, the context matrix in the
    ablation mode. The frozen matrix is recoverable from base.vec/base.ctx.
    """
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    save_space(model.base, dirpath / "base.vec")
    for sid, sp in model.slices.items():
        trained = sp.target if model.frozen == "context" else sp.context
        _write_matrix(dirpath / f"{sid.lower()}.vec", sp.vocab.words, trained)
    return dirpath


def load_compass(dirpath: str | Path, frozen: str = "context") -> CompassModel:
    """Load a compass directory written by :func:`save_compass`."""
    if frozen not in FROZEN_MODES:
        raise ValueError(f"frozen must be one of {FROZEN_MODES}, got {frozen!r}")
    dirpath = Path(dirpath)
    base = load_space(dirpath / "base.vec", slice_id="T0+T1", origin="compass-base")
    slices: dict[str, EmbeddingSpace] = {}
    for sid in ("T0", "T1"):
        path = dirpath / f"{sid.lower()}.vec"
        if not path.is_file():
            raise FileNotFoundError(f"compass directory {dirpath} is missing {path.name}")
        words, trained = _read_matrix(path)
        if words != base.vocab.words:
            raise ValueError(f"{path}: vocabulary differs from base.vec")
        if frozen == "context":
            target, context = trained, base.context.copy()
        else:
            target, context = base.target.copy(), trained
        slices[sid] = EmbeddingSpace(
            slice_id=sid, vocab=base.vocab, target=target, context=context,
            origin="compass-slice",
        )
    model = CompassModel(base=base, slices=slices, frozen=frozen)
    model.validate()
    return model
