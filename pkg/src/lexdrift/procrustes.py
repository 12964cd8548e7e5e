"""Orthogonal alignment between independently trained spaces.

The rotation solving min_Q ||W1 Q - W0||_F over orthogonal Q is U V^T, where
U S V^T is the SVD of W1^T W0 computed over anchor rows. Anchor rows are
length-normalized (no centering) before forming the cross-covariance; the
learned map is then applied to every row of the source space.

The SVD is a one-sided Jacobi: plane rotations are applied to column pairs of
a working copy until all column pairs are mutually orthogonal, which yields
A V = U diag(s) directly. No library SVD is involved anywhere in this module.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .embedder import EmbeddingSpace

log = logging.getLogger(__name__)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class OrthogonalMap:
    rotation: np.ndarray
    anchor_set: str = ""
    source_slice: str = "T1"
    target_slice: str = "T0"


@njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):
    """Rotate column pairs of ``a`` (and accumulate into ``v``) until converged.

    Convergence: a full sweep where every column pair satisfies
    |a_p . a_q| <= tol * ||a_p|| * ||a_q||. Returns the sweep count, or
    -1 if max_sweeps was exhausted first.
    """
    m, n = a.shape
    for sweep in range(max_sweeps):
        worst = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q]
                    alpha += ap * ap
                    beta += aq * aq
                    gamma += ap * aq
                if alpha == 0.0 or beta == 0.0:
                    continue
                rel = abs(gamma) / np.sqrt(alpha * beta)
                if rel > worst:
                    worst = rel
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = 1.0 / (zeta - np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q]
                    a[i, p] = c * ap - s * aq
                    a[i, q] = s * ap + c * aq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if worst <= tol:
            return sweep + 1
    return -1


def _complete_columns(u: np.ndarray, start: int) -> None:
    """Fill columns [start, k) with an orthonormal completion of the first ones.

    Deterministic: each new column is the canonical basis vector with the
    largest residual against the span so far, orthogonalized and normalized.
    """
    m, k = u.shape
    for col in range(start, k):
        basis = u[:, :col]
        best = None
        best_norm = -1.0
        for e in range(m):
            cand = -basis @ basis[e, :]
            cand[e] += 1.0
            nrm = float(np.linalg.norm(cand))
            if nrm > best_norm:
                best_norm = nrm
                best = cand
        best -= basis @ (basis.T @ best)  # second pass for numerical safety
        u[:, col] = best / np.linalg.norm(best)


def svd(a: np.ndarray) -> SvdResult:
    """Thin SVD a = u @ diag(s) @ v.T with s sorted non-increasing.

    u is m x k, v is n x k, k = min(m, n); both have orthonormal columns even
    for rank-deficient input (missing directions are completed).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"svd expects a non-empty 2-d array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("svd input contains non-finite values")
    m, n = a.shape
    if m < n:
        r = svd(a.T)
        return SvdResult(u=r.v, singular_values=r.singular_values, v=r.u)

    work = a.copy(order="C")
    v = np.eye(n)
    sweeps = _jacobi_sweeps(work, v, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        # The cap is a safety stop; columns are still near-orthogonal here.
        log.warning(
            "jacobi sweep cap (%d) reached before tolerance %.0e", JACOBI_MAX_SWEEPS, JACOBI_TOL
        )
    s = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    v = v[:, order]
    u = np.zeros((m, n))
    cutoff = s[0] * max(m, n) * np.finfo(np.float64).eps
    rank = int(np.searchsorted(-s, -cutoff, side="right")) if s[0] > 0.0 else 0
    for j in range(rank):
        u[:, j] = work[:, j] / s[j]
    s[rank:] = 0.0
    _complete_columns(u, rank)
    return SvdResult(u=u, singular_values=s, v=v)


def solve_orthogonal(w1_anchor: np.ndarray, w0_anchor: np.ndarray,
                     anchor_set: str = "") -> OrthogonalMap:
    """Learn the rotation taking source-slice anchor rows onto target-slice ones."""
    w1 = np.asarray(w1_anchor, dtype=np.float64)
    w0 = np.asarray(w0_anchor, dtype=np.float64)
    if w1.shape != w0.shape or w1.ndim != 2:
        raise ValueError(f"anchor matrices must share a 2-d shape, got {w1.shape} vs {w0.shape}")
    if w1.shape[0] < 2:
        raise ValueError(f"need at least 2 anchor rows, got {w1.shape[0]}")
    if not (np.isfinite(w1).all() and np.isfinite(w0).all()):
        raise ValueError("anchor matrices contain non-finite values")
    n1 = np.linalg.norm(w1, axis=1)
    n0 = np.linalg.norm(w0, axis=1)
    if (n1 == 0.0).any() or (n0 == 0.0).any():
        raise ValueError("anchor matrices contain zero-norm rows")
    cross = (w1 / n1[:, None]).T @ (w0 / n0[:, None])
    r = svd(cross)
    if r.singular_values[0] <= 1e-12:
        raise ValueError("anchor cross-covariance has rank 0, alignment is undefined")
    return OrthogonalMap(rotation=r.u @ r.v.T, anchor_set=anchor_set)


def apply_map(space: EmbeddingSpace, m: OrthogonalMap) -> EmbeddingSpace:
    """Rotate every row of the space into the target slice's coordinates."""
    if space.slice_id != m.source_slice:
        raise ValueError(
            f"map aligns slice {m.source_slice!r} onto {m.target_slice!r}, "
            f"but the space holds slice {space.slice_id!r}"
        )
    if space.origin == "compass-slice":
        raise ValueError("compass slices are already co-aligned; mapping one is meaningless")
    if m.rotation.shape != (space.dim, space.dim):
        raise ValueError(
            f"rotation shape {m.rotation.shape} does not match space dim {space.dim}"
        )
    return EmbeddingSpace(
        slice_id=space.slice_id,
        vocab=space.vocab,
        target=space.target @ m.rotation,
        context=space.context @ m.rotation,
        origin=space.origin,
        aligned_by=m.anchor_set or "?",
    )


def save_map(m: OrthogonalMap, path: str | Path) -> Path:
    """Text format: ``dim anchor_set_name`` header, then dim rows of dim floats."""
    path = Path(path)
    dim = m.rotation.shape[0]
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{dim} {m.anchor_set or '-'}\n")
        for row in m.rotation:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
    return path


def load_map(path: str | Path, source_slice: str = "T1",
             target_slice: str = "T0") -> OrthogonalMap:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header, expected 'dim anchor_set_name'")
        dim = int(header[0])
        anchor_set = "" if header[1] == "-" else header[1]
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise ValueError(f"{path}: expected a {dim}x{dim} float block")
    rotation = np.array([[float(x) for x in r] for r in rows])
    if np.abs(rotation.T @ rotation - np.eye(dim)).max() > 1e-8:
        raise ValueError(f"{path}: stored matrix is not orthogonal")
    return OrthogonalMap(rotation=rotation, anchor_set=anchor_set,
                         source_slice=source_slice, target_slice=target_slice)
