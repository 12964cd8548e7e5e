"""Learned translations between embedding spaces: linear and one-hidden-layer.

Both learn x -> y on anchor rows and then translate every row of the source
space. The linear map solves ridge-damped least squares on a bias-augmented
system in closed form. The neural map is a deliberately small feed-forward
network (one tanh hidden layer, linear output, MSE) trained with plain
minibatch SGD from a seeded init, so fits are exactly reproducible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_DAMPING = 1e-8
RANK_RTOL = 1e-10


@dataclass
class LinearMap:
    weights: np.ndarray
    bias: np.ndarray
    anchor_set: str = ""
    has_bias: bool = True
    rank_deficient: bool = False

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias


def _check_anchor_pair(x, y, min_rows):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"anchor matrices must be 2-d with equal row counts, got {x.shape} vs {y.shape}")
    if x.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} anchor rows, got {x.shape[0]}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("anchor matrices contain non-finite values")
    return x, y


def fit_linear(x: np.ndarray, y: np.ndarray, anchor_set: str = "",
               bias: bool = True, damping: float = DEFAULT_DAMPING) -> LinearMap:
    """Closed-form ridge solution of min ||[x|1] theta - y||^2 + damping ||theta||^2.

    Rank deficiency of the (undamped) system is detected and flagged, never
    silently smoothed over: the damping keeps the solve well-posed but the
    caller can see that the anchors did not pin the map down.
    """
    x, y = _check_anchor_pair(x, y, min_rows=1)
    cols = np.hstack([x, np.ones((x.shape[0], 1))]) if bias else x
    gram = cols.T @ cols
    ev = np.linalg.eigvalsh(gram)
    rank_deficient = bool(x.shape[0] < cols.shape[1] or ev[0] <= max(ev[-1], 0.0) * RANK_RTOL)
    if rank_deficient:
        log.warning("linear fit is rank deficient (%d rows, %d unknown columns)",
                    x.shape[0], cols.shape[1])
    theta = np.linalg.solve(gram + damping * np.eye(cols.shape[1]), cols.T @ y)
    if bias:
        weights, b = theta[:-1], theta[-1]
    else:
        weights, b = theta, np.zeros(y.shape[1])
    return LinearMap(weights=weights, bias=b, anchor_set=anchor_set,
                     has_bias=bias, rank_deficient=rank_deficient)


def linear_objective(m: LinearMap, x: np.ndarray, y: np.ndarray,
                     damping: float = DEFAULT_DAMPING) -> float:
    """The quantity :func:`fit_linear` minimizes, for optimality checks."""
    resid = x @ m.weights + m.bias - y
    reg = np.sum(m.weights**2) + (np.sum(m.bias**2) if m.has_bias else 0.0)
    return float(np.sum(resid**2) + damping * reg)


# ---------------------------------------------------------------------------
# Feed-forward map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FfnnConfig:
    hidden_dim: int | None = None  # None: same width as the input dimension
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class NeuralMap:
    layers: list[tuple[np.ndarray, np.ndarray]]
    anchor_set: str = ""
    config: FfnnConfig = field(default_factory=FfnnConfig)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return ffnn_forward(self.layers, np.asarray(x, dtype=np.float64))[-1]


def ffnn_forward(layers, x):
    """All layer activations: tanh on hidden layers, identity on the last."""
    acts = [x]
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = acts[-1] @ w + b
        acts.append(z if i == last else np.tanh(z))
    return acts


def ffnn_loss_and_grads(layers, x, y):
    """Mean squared error (0.5/n scaling) and its gradients by backprop."""
    acts = ffnn_forward(layers, x)
    diff = acts[-1] - y
    n = x.shape[0]
    loss = 0.5 * float(np.sum(diff * diff)) / n
    grads = []
    delta = diff / n
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (1.0 - acts[i] ** 2)
    grads.reverse()
    return loss, grads


def _xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def fit_ffnn(x: np.ndarray, y: np.ndarray, config: FfnnConfig = FfnnConfig(),
             anchor_set: str = "") -> NeuralMap:
    """Train the one-hidden-layer map with minibatch SGD; bit-reproducible per seed."""
    x, y = _check_anchor_pair(x, y, min_rows=1)
    din, dout = x.shape[1], y.shape[1]
    hidden = config.hidden_dim or din
    rng = np.random.default_rng(config.seed & ((1 << 64) - 1))
    layers = [
        (_xavier(rng, din, hidden), np.zeros(hidden)),
        (_xavier(rng, hidden, dout), np.zeros(dout)),
    ]
    n = x.shape[0]
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = ffnn_loss_and_grads(layers, x[idx], y[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"ffnn training diverged (non-finite loss) at epoch {epoch}")
            for (w, b), (dw, db) in zip(layers, grads):
                w -= config.learning_rate * dw
                b -= config.learning_rate * db
    return NeuralMap(layers=layers, anchor_set=anchor_set, config=config)


# ---------------------------------------------------------------------------
# Persistence: text, one shape header per weight block
# ---------------------------------------------------------------------------

def _write_block(fh, matrix):
    for row in np.atleast_2d(matrix):
        fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def _read_block(fh, rows, cols, path):
    block = np.empty((rows, cols))
    for i in range(rows):
        parts = fh.readline().split()
        if len(parts) != cols:
            raise ValueError(f"{path}: expected {cols} floats per row, got {len(parts)}")
        block[i] = [float(p) for p in parts]
    return block


def save_linear_map(m: LinearMap, path: str | Path) -> Path:
    path = Path(path)
    din, dout = m.weights.shape
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"linear {din} {dout} {m.anchor_set or '-'} "
                 f"{int(m.has_bias)} {int(m.rank_deficient)}\n")
        _write_block(fh, m.weights)
        _write_block(fh, m.bias)
    return path


def load_linear_map(path: str | Path) -> LinearMap:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "linear":
            raise ValueError(f"{path}: not a linear map file")
        din, dout = int(header[1]), int(header[2])
        anchor = "" if header[3] == "-" else header[3]
        weights = _read_block(fh, din, dout, path)
        bias = _read_block(fh, 1, dout, path)[0]
    return LinearMap(weights=weights, bias=bias, anchor_set=anchor,
                     has_bias=bool(int(header[4])), rank_deficient=bool(int(header[5])))


def save_neural_map(m: NeuralMap, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"ffnn {len(m.layers)} {m.anchor_set or '-'}\n")
        for w, b in m.layers:
            fh.write(f"{w.shape[0]} {w.shape[1]}\n")
            _write_block(fh, w)
            _write_block(fh, b)
    return path


def load_neural_map(path: str | Path) -> NeuralMap:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "ffnn":
            raise ValueError(f"{path}: not a neural map file")
        n_layers = int(header[1])
        anchor = "" if header[2] == "-" else header[2]
        layers = []
        for _ in range(n_layers):
            shape = fh.readline().split()
            if len(shape) != 2:
                raise ValueError(f"{path}: malformed layer shape header")
            rows, cols = int(shape[0]), int(shape[1])
            w = _read_block(fh, rows, cols, path)
            b = _read_block(fh, 1, cols, path)[0]
            layers.append((w, b))
    return NeuralMap(layers=layers, anchor_set=anchor)
