import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsad.codebook import build_codebook, restrict
from vsad.core import PatchManifest
from vsad.encoder import VsadConfig, encode_batch, encode_vsad
from vsad.errors import EmptyImage, InactiveSelected

import oracles

F = np.array([[0.0], [1.0], [3.0]])
P = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])


def test_worked_codebook():
    cb = build_codebook(F, P)
    np.testing.assert_allclose(cb.mass, [1.5, 1.5], atol=1e-15)
    np.testing.assert_allclose(cb.pi, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(cb.mu[:, 0], [1 / 3, 7 / 3], atol=1e-15)
    np.testing.assert_allclose(cb.sigma[:, 0] ** 2, [2 / 9, 8 / 9], atol=1e-15)
    np.testing.assert_allclose(cb.sigma[:, 0], [0.4714045207910317, 0.9428090415820634], atol=1e-12)


def test_one_hot_collapses_to_partition():
    rng = np.random.default_rng(1)
    f = rng.normal(size=(30, 3))
    assign = np.arange(30) % 3
    cb = build_codebook(f, np.eye(3)[assign])
    for k in range(3):
        np.testing.assert_allclose(cb.mu[k], f[assign == k].mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(cb.pi, [1 / 3] * 3, atol=1e-15)


def test_identical_patches_hit_floor():
    cb = build_codebook(np.full((5, 2), 4.0), np.full((5, 2), 0.5), variance_floor=1e-6)
    np.testing.assert_allclose(cb.mu, 4.0, atol=1e-12)
    np.testing.assert_array_equal(cb.sigma, np.sqrt(1e-6))


def test_inactive_codewords():
    p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    cb = build_codebook(np.array([[1.0], [2.0]]), p)
    assert list(cb.active) == [True, True, False]
    assert cb.mu[2, 0] == 0.0
    with pytest.raises(InactiveSelected):
        restrict(cb, [0, 2])


def test_codebook_matches_oracle():
    rng = np.random.default_rng(7)
    f = rng.normal(size=(12, 2))
    p = rng.dirichlet(np.ones(3), size=12)
    cb = build_codebook(f, p)
    mass, pi, mu, var = oracles.semantic_moments(f.tolist(), p.tolist())
    np.testing.assert_allclose(cb.mass, mass, atol=1e-12)
    np.testing.assert_allclose(cb.pi, pi, atol=1e-12)
    np.testing.assert_allclose(cb.mu, mu, atol=1e-12)
    np.testing.assert_allclose(cb.sigma ** 2, var, atol=1e-12)


def test_worked_vsad_vector():
    cb = build_codebook(F, P)
    raw = encode_vsad(np.array([[1.0]]), np.array([[0.5, 0.5]]), VsadConfig(cb, normalize=False))
    np.testing.assert_allclose(raw.data, [1, math.sqrt(2) / 2, -1, math.sqrt(2) / 2], atol=1e-12)
    out = encode_vsad(np.array([[1.0]]), np.array([[0.5, 0.5]]), VsadConfig(cb))
    np.testing.assert_allclose(out.data, [0.5411961001461969, 0.4550898605622274,
                                          -0.5411961001461969, 0.4550898605622274], atol=1e-12)
    assert out.block_dims == (2, 1) and out.layout == "vsad"


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), k=st.integers(1, 3), d=st.integers(1, 3), seed=st.integers(0, 10**6))
def test_vsad_matches_double_loop(n, k, d, seed):
    rng = np.random.default_rng(seed)
    cb = build_codebook(rng.normal(size=(20, d)), rng.dirichlet(np.ones(k), size=20))
    f = rng.normal(size=(n, d))
    p = rng.dirichlet(np.ones(k), size=n)
    got = encode_vsad(f, p, VsadConfig(cb, normalize=False)).data
    want = oracles.fisher_like(f.tolist(), p.tolist(), cb.pi.tolist(), cb.mu.tolist(), cb.sigma.tolist())
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-9)


def test_self_encoding_is_zero():
    rng = np.random.default_rng(11)
    f = rng.normal(size=(300, 5)) * 3 + 1
    p = rng.dirichlet(np.full(6, 0.3), size=300)
    cb = build_codebook(f, p)
    assert np.abs(encode_vsad(f, p, VsadConfig(cb, normalize=False)).data).max() <= 1e-6


def test_permutation_invariance_is_bitwise():
    rng = np.random.default_rng(4)
    f = rng.normal(size=(50, 4))
    p = rng.dirichlet(np.ones(5), size=50)
    cb = build_codebook(f, p)
    perm = rng.permutation(50)
    a = encode_vsad(f, p, VsadConfig(cb)).data
    b = encode_vsad(f[perm], p[perm], VsadConfig(cb)).data
    assert a.tobytes() == b.tobytes()
    assert build_codebook(f[perm], p[perm]).mu.tobytes() == cb.mu.tobytes()


def test_subset_encoding_renormalizes_prior():
    rng = np.random.default_rng(2)
    f = rng.normal(size=(40, 2))
    p = rng.dirichlet(np.ones(4), size=40)
    cb = build_codebook(f, p)
    sub = restrict(cb, [1, 3])
    assert sub.selected_ids == (1, 3)
    assert abs(sub.pi.sum() - 1) <= 1e-15
    np.testing.assert_array_equal(sub.mu, cb.mu[[1, 3]])
    v = encode_vsad(f, p, VsadConfig(cb, selected=(1, 3), normalize=False))
    assert v.data.size == 2 * 2 * 2
    assert np.abs(v.data).max() <= 1e-9  # self-encoding stays zero on the subset
    full = restrict(cb, [1, 3], reuse_full_stats=True)
    np.testing.assert_array_equal(full.pi, cb.pi[[1, 3]])


def test_encode_batch():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(7, 2))
    p = rng.dirichlet(np.ones(3), size=7)
    cb = build_codebook(f, p)
    man = PatchManifest.from_counts(["u", "v"], [3, 4])
    out = encode_batch(f, p, man, VsadConfig(cb))
    assert [i for i, _ in out] == ["u", "v"]
    np.testing.assert_array_equal(out[1][1].data, encode_vsad(f[3:], p[3:], VsadConfig(cb)).data)
    with pytest.raises(EmptyImage):
        encode_batch(f, p, PatchManifest.from_counts(["u", "v"], [7, 0]), VsadConfig(cb))
