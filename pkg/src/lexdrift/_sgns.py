"""JIT-compiled inner loops for negative-sampling training.

The kernels walk one epoch chunk sentence by sentence and apply per-pair SGD
updates in place. Randomness comes from an explicit 64-bit LCG carried through
the loop, so a single-threaded run is bit-reproducible and the exact stream a
kernel consumed can be replayed from Python in tests.

Per pair, the forward pass (all sigmoid activations) is computed against the
matrices as they were before the pair's update, then the context rows and the
input row(s) are updated. Frozen matrices are never written.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LCG_MULT = np.uint64(6364136223846793005)
LCG_ADD = np.uint64(1442695040888963407)
_SHIFT = np.uint64(11)
_U53 = 1.0 / 9007199254740992.0  # 2**-53

_MASK64 = (1 << 64) - 1


def lcg_next(state: int) -> int:
    """Python-side replica of the kernel RNG step (used to replay streams)."""
    return (state * 6364136223846793005 + 1442695040888963407) & _MASK64


def lcg_uniform(state: int) -> float:
    """Uniform in [0, 1) derived from a post-step state, as the kernels do."""
    return (state >> 11) * _U53


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def chunk_state(seed: int, epoch: int, chunk: int) -> np.uint64:
    """Deterministic per-(epoch, chunk) RNG state derived from the run seed."""
    mixed = _splitmix64((seed & _MASK64) ^ _splitmix64(epoch * 0x100000001B3 + chunk + 1))
    return np.uint64(mixed)


@njit(cache=True, nogil=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def train_epoch_sg(tokens, offsets, target, context, noise_cdf, keep_prob,
                   window, negative, start_tokens, span_tokens,
                   initial_lr, min_lr, learn_target, learn_context, state):
    """One skip-gram pass over the sentences in ``offsets``; returns the RNG state."""
    dim = target.shape[1]
    n_sent = offsets.shape[0] - 1
    max_len = 0
    for s in range(n_sent):
        ln = offsets[s + 1] - offsets[s]
        if ln > max_len:
            max_len = ln
    kept = np.empty(max_len, np.int64)
    outs = np.empty(negative + 1, np.int64)
    gs = np.empty(negative + 1)
    neu1e = np.empty(dim)
    wu = np.uint64(window)
    lr_range = initial_lr - min_lr
    consumed = 0
    for s in range(n_sent):
        lr = initial_lr - lr_range * ((start_tokens + consumed) / span_tokens)
        if lr < min_lr:
            lr = min_lr
        lo_s = offsets[s]
        hi_s = offsets[s + 1]
        consumed += hi_s - lo_s
        m = 0
        for i in range(lo_s, hi_s):
            w = tokens[i]
            state = state * LCG_MULT + LCG_ADD
            if (state >> _SHIFT) * _U53 < keep_prob[w]:
                kept[m] = w
                m += 1
        for pos in range(m):
            state = state * LCG_MULT + LCG_ADD
            radius = window - np.int64(state % wu)  # uniform in [1, window]
            lo = pos - radius
            if lo < 0:
                lo = 0
            hi = pos + radius
            if hi >= m:
                hi = m - 1
            predicted = kept[pos]
            for pos2 in range(lo, hi + 1):
                if pos2 == pos:
                    continue
                inp = kept[pos2]
                outs[0] = predicted
                n_out = 1
                attempts = 0
                cap = 10 * (negative + 1) + 20
                while n_out < negative + 1 and attempts < cap:
                    state = state * LCG_MULT + LCG_ADD
                    r = (state >> _SHIFT) * _U53
                    idx = np.searchsorted(noise_cdf, r)
                    if idx >= noise_cdf.shape[0]:
                        idx = noise_cdf.shape[0] - 1
                    attempts += 1
                    if idx != predicted:
                        outs[n_out] = idx
                        n_out += 1
                # forward at pre-update parameters
                for d in range(n_out):
                    z = 0.0
                    for j in range(dim):
                        z += target[inp, j] * context[outs[d], j]
                    label = 1.0 if d == 0 else 0.0
                    gs[d] = (label - _sigmoid(z)) * lr
                for j in range(dim):
                    neu1e[j] = 0.0
                for d in range(n_out):
                    g = gs[d]
                    row = outs[d]
                    for j in range(dim):
                        neu1e[j] += g * context[row, j]
                if learn_context:
                    for d in range(n_out):
                        g = gs[d]
                        row = outs[d]
                        for j in range(dim):
                            context[row, j] += g * target[inp, j]
                if learn_target:
                    for j in range(dim):
                        target[inp, j] += neu1e[j]
    return state


@njit(cache=True, nogil=True)
def train_epoch_cbow(tokens, offsets, target, context, noise_cdf, keep_prob,
                     window, negative, start_tokens, span_tokens,
                     initial_lr, min_lr, learn_target, learn_context, state):
    """One CBOW pass; the hidden vector is the mean of the context rows.

    The input-side update divides by the window size, i.e. it applies the true
    gradient of the negative-sampling objective for the mean-input model.
    """
    dim = target.shape[1]
    n_sent = offsets.shape[0] - 1
    max_len = 0
    for s in range(n_sent):
        ln = offsets[s + 1] - offsets[s]
        if ln > max_len:
            max_len = ln
    kept = np.empty(max_len, np.int64)
    ctx = np.empty(max_len, np.int64)
    outs = np.empty(negative + 1, np.int64)
    gs = np.empty(negative + 1)
    l1 = np.empty(dim)
    neu1e = np.empty(dim)
    wu = np.uint64(window)
    lr_range = initial_lr - min_lr
    consumed = 0
    for s in range(n_sent):
        lr = initial_lr - lr_range * ((start_tokens + consumed) / span_tokens)
        if lr < min_lr:
            lr = min_lr
        lo_s = offsets[s]
        hi_s = offsets[s + 1]
        consumed += hi_s - lo_s
        m = 0
        for i in range(lo_s, hi_s):
            w = tokens[i]
            state = state * LCG_MULT + LCG_ADD
            if (state >> _SHIFT) * _U53 < keep_prob[w]:
                kept[m] = w
                m += 1
        for pos in range(m):
            state = state * LCG_MULT + LCG_ADD
            radius = window - np.int64(state % wu)
            lo = pos - radius
            if lo < 0:
                lo = 0
            hi = pos + radius
            if hi >= m:
                hi = m - 1
            cn = 0
            for pos2 in range(lo, hi + 1):
                if pos2 != pos:
                    ctx[cn] = kept[pos2]
                    cn += 1
            if cn == 0:
                continue
            inv = 1.0 / cn
            for j in range(dim):
                acc = 0.0
                for c in range(cn):
                    acc += target[ctx[c], j]
                l1[j] = acc * inv
            predicted = kept[pos]
            outs[0] = predicted
            n_out = 1
            attempts = 0
            cap = 10 * (negative + 1) + 20
            while n_out < negative + 1 and attempts < cap:
                state = state * LCG_MULT + LCG_ADD
                r = (state >> _SHIFT) * _U53
                idx = np.searchsorted(noise_cdf, r)
                if idx >= noise_cdf.shape[0]:
                    idx = noise_cdf.shape[0] - 1
                attempts += 1
                if idx != predicted:
                    outs[n_out] = idx
                    n_out += 1
            for d in range(n_out):
                z = 0.0
                for j in range(dim):
                    z += l1[j] * context[outs[d], j]
                label = 1.0 if d == 0 else 0.0
                gs[d] = (label - _sigmoid(z)) * lr
            for j in range(dim):
                neu1e[j] = 0.0
            for d in range(n_out):
                g = gs[d]
                row = outs[d]
                for j in range(dim):
                    neu1e[j] += g * context[row, j]
            if learn_context:
                for d in range(n_out):
                    g = gs[d]
                    row = outs[d]
                    for j in range(dim):
                        context[row, j] += g * l1[j]
            if learn_target:
                for c in range(cn):
                    row = ctx[c]
                    for j in range(dim):
                        target[row, j] += neu1e[j] * inv
    return state
