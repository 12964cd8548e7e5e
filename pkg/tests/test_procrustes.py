"""Hand-rolled SVD against library oracles, rotation recovery, map plumbing."""

import numpy as np
import pytest

from lexdrift.corpus import Vocabulary
from lexdrift.embedder import EmbeddingSpace
from lexdrift.procrustes import (
    OrthogonalMap,
    apply_map,
    load_map,
    save_map,
    solve_orthogonal,
    svd,
)


def make_space(words, target, slice_id="T1", origin="ind", aligned_by=None):
    target = np.asarray(target, dtype=np.float64)
    vocab = Vocabulary(words=list(words),
                       counts=np.full(len(words), 5, dtype=np.int64),
                       index={w: i for i, w in enumerate(words)},
                       total_tokens=5 * len(words))
    return EmbeddingSpace(slice_id=slice_id, vocab=vocab, target=target,
                          context=np.zeros_like(target), origin=origin,
                          aligned_by=aligned_by)


def check_svd(a, r, rtol=1e-8):
    m, n = a.shape
    k = min(m, n)
    assert r.u.shape == (m, k)
    assert r.v.shape == (n, k)
    assert r.singular_values.shape == (k,)
    s = r.singular_values
    assert (np.diff(s) <= 1e-12).all(), "singular values not sorted descending"
    assert (s >= 0.0).all()
    assert np.abs(r.u.T @ r.u - np.eye(k)).max() <= rtol
    assert np.abs(r.v.T @ r.v - np.eye(k)).max() <= rtol
    scale = max(np.linalg.norm(a), 1.0)
    assert np.linalg.norm(r.u @ np.diag(s) @ r.v.T - a) <= rtol * scale


# ---------------------------------------------------------------------------
# SVD
# ---------------------------------------------------------------------------

def test_svd_diagonal_known_values():
    a = np.diag([3.0, 2.0, 1.0])
    r = svd(a)
    assert np.allclose(r.singular_values, [3.0, 2.0, 1.0], atol=1e-12)
    check_svd(a, r)


def test_svd_rank_one_known_values():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    r = svd(a)
    assert np.allclose(r.singular_values, [2.0, 0.0], atol=1e-12)
    check_svd(a, r)  # u and v must still be orthonormal despite rank 1


def test_svd_zero_matrix():
    a = np.zeros((4, 3))
    r = svd(a)
    assert np.allclose(r.singular_values, 0.0)
    assert np.abs(r.u.T @ r.u - np.eye(3)).max() <= 1e-12
    assert np.abs(r.v.T @ r.v - np.eye(3)).max() <= 1e-12


@pytest.mark.parametrize("shape", [(10, 7), (7, 10), (20, 20), (1, 5), (5, 1), (30, 3)])
def test_svd_matches_library_singular_values(shape):
    rng = np.random.default_rng(hash(shape) & 0xFFFF)
    a = rng.standard_normal(shape)
    r = svd(a)
    expected = np.linalg.svd(a, compute_uv=False)
    assert np.allclose(r.singular_values, expected, rtol=1e-10, atol=1e-10)
    check_svd(a, r)


def test_svd_rank_deficient_random():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 9))
    r = svd(a)
    assert np.allclose(r.singular_values[3:], 0.0, atol=1e-8 * r.singular_values[0])
    check_svd(a, r)


def test_svd_input_validation():
    with pytest.raises(ValueError, match="non-empty 2-d"):
        svd(np.zeros((0, 3)))
    with pytest.raises(ValueError, match="non-empty 2-d"):
        svd(np.zeros(4))
    with pytest.raises(ValueError, match="non-finite"):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# Orthogonal alignment
# ---------------------------------------------------------------------------

def random_rotation(dim, seed):
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def test_rotation_recovery_noiseless():
    rng = np.random.default_rng(5)
    w0 = rng.standard_normal((60, 12))
    rot = random_rotation(12, seed=6)
    w1 = w0 @ rot
    m = solve_orthogonal(w1, w0, anchor_set="SW")
    assert np.abs(m.rotation - rot.T).max() <= 1e-9
    assert m.anchor_set == "SW"


def test_rotation_recovery_under_noise():
    rng = np.random.default_rng(9)
    w0 = rng.standard_normal((200, 16))
    w0 /= np.linalg.norm(w0, axis=1, keepdims=True)
    rot = random_rotation(16, seed=10)
    w1 = w0 @ rot + 0.01 * rng.standard_normal(w0.shape)
    m = solve_orthogonal(w1, w0)
    # mapped rows should line up with the originals almost perfectly
    mapped = w1 @ m.rotation
    cos = np.sum(mapped * w0, axis=1) / (
        np.linalg.norm(mapped, axis=1) * np.linalg.norm(w0, axis=1)
    )
    assert cos.mean() > 0.99


def test_solution_beats_every_planar_rotation():
    """Brute force in 2-d: no rotation or reflection does better on the anchors."""
    rng = np.random.default_rng(21)
    w1 = rng.standard_normal((8, 2))
    w0 = rng.standard_normal((8, 2))
    m = solve_orthogonal(w1, w0)
    n1 = w1 / np.linalg.norm(w1, axis=1, keepdims=True)
    n0 = w0 / np.linalg.norm(w0, axis=1, keepdims=True)

    def objective(q):
        return np.linalg.norm(n1 @ q - n0)

    best = objective(m.rotation)
    flip = np.diag([1.0, -1.0])
    for theta in np.linspace(0.0, 2.0 * np.pi, 20001):
        c, s = np.cos(theta), np.sin(theta)
        q = np.array([[c, -s], [s, c]])
        assert best <= objective(q) + 1e-9
        assert best <= objective(q @ flip) + 1e-9


def test_solve_orthogonal_validation():
    ones = np.ones((3, 2))
    with pytest.raises(ValueError, match="share a 2-d shape"):
        solve_orthogonal(ones, np.ones((4, 2)))
    with pytest.raises(ValueError, match="at least 2 anchor rows"):
        solve_orthogonal(np.ones((1, 2)), np.ones((1, 2)))
    with pytest.raises(ValueError, match="non-finite"):
        solve_orthogonal(np.array([[np.inf, 0.0], [0.0, 1.0]]), ones[:2])
    with pytest.raises(ValueError, match="zero-norm"):
        solve_orthogonal(np.array([[0.0, 0.0], [1.0, 0.0]]), ones[:2])


def test_solve_orthogonal_rank_zero():
    # opposite source rows cancel in the cross-covariance: nothing to align
    w1 = np.array([[1.0, 0.0], [-1.0, 0.0]])
    w0 = np.array([[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="rank 0"):
        solve_orthogonal(w1, w0)


def test_different_anchor_sets_give_different_maps():
    rng = np.random.default_rng(33)
    w0 = rng.standard_normal((40, 6))
    w1 = rng.standard_normal((40, 6))
    m_a = solve_orthogonal(w1[:20], w0[:20], anchor_set="SW")
    m_b = solve_orthogonal(w1[20:], w0[20:], anchor_set="CW")
    assert not np.allclose(m_a.rotation, m_b.rotation, atol=1e-3)


def test_apply_map_rotates_rows_and_marks_alignment():
    target = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 4.0]])
    space = make_space(["a", "b", "c"], target, slice_id="T1")
    rot = random_rotation(2, seed=2)
    m = OrthogonalMap(rotation=rot, anchor_set="SW")
    out = apply_map(space, m)
    assert np.allclose(out.target, target @ rot)
    assert np.allclose(np.linalg.norm(out.target, axis=1),
                       np.linalg.norm(target, axis=1))
    assert out.aligned_by == "SW"
    assert out.vocab is space.vocab
    # the input space is untouched
    assert space.aligned_by is None
    assert np.array_equal(space.target, target)


def test_apply_map_slice_and_origin_guards():
    space = make_space(["a", "b"], np.eye(2), slice_id="T0")
    m = OrthogonalMap(rotation=np.eye(2))
    with pytest.raises(ValueError, match="holds slice 'T0'"):
        apply_map(space, m)
    compass = make_space(["a", "b"], np.eye(2), slice_id="T1", origin="compass-slice")
    with pytest.raises(ValueError, match="already co-aligned"):
        apply_map(compass, m)
    small = make_space(["a", "b"], np.eye(2), slice_id="T1")
    with pytest.raises(ValueError, match="does not match space dim"):
        apply_map(small, OrthogonalMap(rotation=np.eye(3)))


def test_map_save_load_roundtrip(tmp_path):
    rot = random_rotation(5, seed=4)
    m = OrthogonalMap(rotation=rot, anchor_set="CW")
    path = save_map(m, tmp_path / "map.txt")
    back = load_map(path)
    assert np.array_equal(back.rotation, m.rotation)  # %.17g round-trips exactly
    assert back.anchor_set == "CW"
    assert back.source_slice == "T1" and back.target_slice == "T0"


def test_load_map_rejects_non_orthogonal(tmp_path):
    bogus = OrthogonalMap(rotation=np.array([[1.0, 1.0], [0.0, 1.0]]))
    path = save_map(bogus, tmp_path / "bad.txt")
    with pytest.raises(ValueError, match="not orthogonal"):
        load_map(path)


def test_load_map_rejects_malformed(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("2\n1 0\n0 1\n", encoding="utf-8")  # header too short
    with pytest.raises(ValueError, match="malformed header"):
        load_map(p)
    p.write_text("3 -\n1 0 0\n0 1 0\n", encoding="utf-8")  # missing a row
    with pytest.raises(ValueError, match="3x3 float block"):
        load_map(p)
