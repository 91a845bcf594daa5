import warnings

import numpy as np
import pytest

from vsad.baselines import (
    DiagonalGmm,
    KMeansCodebook,
    avgpool_encode,
    fv_encode,
    gmm_fit,
    hard_assign,
    kmeans_fit,
    pca_fit,
    pca_transform,
    vlad_encode,
)
from vsad.codebook import build_codebook
from vsad.encoder import VsadConfig, encode_vsad
from vsad.errors import RankDeficientWarning

import oracles


def test_kmeans_small_example():
    pts = np.array([[0.0], [1.0], [10.0], [11.0]])
    km = kmeans_fit(pts, 2, seed=0)
    centers, inertia = oracles.best_partition_1d([0.0, 1.0, 10.0, 11.0], 2)
    np.testing.assert_allclose(np.sort(km.centers[:, 0]), centers, atol=1e-12)
    assert km.inertia == pytest.approx(inertia, abs=1e-12)
    assert inertia == 1.0


def test_kmeans_degenerate_cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 3))
    np.testing.assert_allclose(kmeans_fit(x, 1).centers[0], x.mean(axis=0), atol=1e-12)
    assert kmeans_fit(np.ones((6, 2)), 2).inertia == 0.0


def test_kmeans_deterministic_under_seed():
    x = np.random.default_rng(1).normal(size=(200, 4))
    a, b = kmeans_fit(x, 5, seed=3), kmeans_fit(x, 5, seed=3)
    assert a.centers.tobytes() == b.centers.tobytes()


def test_hard_assign_ties_go_low():
    assert list(hard_assign(np.array([[1.0]]), np.array([[0.0], [2.0]]))) == [0]


def test_vlad_examples():
    cb = KMeansCodebook(np.array([[0.0], [2.0]]), 0.0)
    raw = vlad_encode(np.array([[0.5], [2.5]]), cb, normalize=False)
    np.testing.assert_allclose(raw.data, [0.5, 0.5])
    assert not vlad_encode(np.array([[0.0], [2.0]]), cb, normalize=False).data.any()
    only_first = vlad_encode(np.array([[0.3], [-0.1]]), cb, normalize=False).data
    assert only_first[1] == 0.0


def test_one_hot_vsad_is_scaled_vlad_residual():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(60, 3))
    assign = rng.integers(0, 4, size=60)
    assign[:4] = np.arange(4)
    p = np.eye(4)[assign]
    cb = build_codebook(f, p)
    t = rng.normal(size=(15, 3))
    ta = rng.integers(0, 4, size=15)
    v = encode_vsad(t, np.eye(4)[ta], VsadConfig(cb, normalize=False)).data.reshape(4, 2, 3)
    sums = oracles.hard_residual_sums(t.tolist(), ta.tolist(), cb.mu.tolist(), 4)
    for k in range(4):
        want = np.array(sums[k]) / (np.sqrt(cb.pi[k]) * cb.sigma[k])
        np.testing.assert_allclose(v[k, 0], want, rtol=0, atol=1e-9)


def test_fv_single_patch():
    gmm = DiagonalGmm(np.array([1.0]), np.array([[0.0]]), np.array([[1.0]]))
    np.testing.assert_allclose(fv_encode(np.array([[2.0]]), gmm, normalize=False).data, [2.0, 3.0])
    gmm = DiagonalGmm(np.array([0.25, 0.75]), np.array([[0.0, 0.0], [5.0, 5.0]]), np.ones((2, 2)))
    gamma = gmm.posteriors(np.zeros((1, 2)))[0]
    v = fv_encode(np.zeros((1, 2)), gmm, normalize=False).data.reshape(2, 2, 2)
    # patch sits on component 0's mean: zero first order, -gamma/sqrt(pi) second order
    np.testing.assert_array_equal(v[0, 0], [0.0, 0.0])
    np.testing.assert_allclose(v[0, 1], -gamma[0] / np.sqrt(0.25), rtol=1e-12)


def test_fv_matches_brute_force_on_many_instances():
    rng = np.random.default_rng(123)
    for _ in range(200):
        n, k, d = rng.integers(1, 11), rng.integers(1, 4), rng.integers(1, 3)
        gmm = DiagonalGmm(rng.dirichlet(np.ones(k)), rng.normal(size=(k, d)),
                          rng.uniform(0.2, 2.0, size=(k, d)))
        f = rng.normal(size=(n, d))
        got = fv_encode(f, gmm, normalize=False).data
        want = oracles.fisher_like(f.tolist(), gmm.posteriors(f).tolist(), gmm.weights.tolist(),
                                   gmm.means.tolist(), np.sqrt(gmm.variances).tolist())
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)


def test_kernel_unification_is_bitwise():
    rng = np.random.default_rng(9)
    f = rng.normal(size=(80, 4))
    p = rng.dirichlet(np.ones(5), size=80)
    cb = build_codebook(f, p)
    gmm = DiagonalGmm(cb.pi, cb.mu, cb.sigma ** 2)
    t, tp = f[:25], p[:25]
    a = encode_vsad(t, tp, VsadConfig(cb)).data
    b = fv_encode(t, gmm, posteriors=tp).data
    assert a.tobytes() == b.tobytes()


def test_gmm_single_component_and_blobs():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=(300, 2))
    g = gmm_fit(x, 1)
    np.testing.assert_allclose(g.means[0], x.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(g.variances[0], x.var(axis=0), rtol=1e-9)
    blobs = np.concatenate([rng.normal(0, 1, 100), rng.normal(100, 1, 100)])[:, None]
    g = gmm_fit(blobs, 2, seed=1)
    np.testing.assert_allclose(np.sort(g.means[:, 0]), [0, 100], atol=0.5)
    post = g.posteriors(blobs)
    assert np.all(post.max(axis=1) > 1 - 1e-9)


def test_avgpool_examples():
    np.testing.assert_allclose(avgpool_encode(np.array([[0.0, 2.0], [2.0, 0.0]])).data,
                               [2 ** -0.5, 2 ** -0.5], atol=1e-15)
    np.testing.assert_allclose(avgpool_encode(np.array([[4.0, 0.0]])).data, [1.0, 0.0])
    assert not avgpool_encode(np.zeros((3, 2))).data.any()


def test_pca_line_and_full_rank():
    x = np.array([[t, t] for t in np.linspace(-2, 3, 9)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        pca = pca_fit(x, 2)
    np.testing.assert_allclose(np.abs(pca.components[0]), [2 ** -0.5] * 2, atol=1e-12)
    assert abs(pca.explained_variance[1]) <= 1e-12
    rng = np.random.default_rng(0)
    y = rng.normal(size=(50, 4)) @ rng.normal(size=(4, 4))
    z = pca_transform(pca_fit(y, 4), y)
    d1 = np.linalg.norm(y[:, None] - y[None], axis=2)
    d2 = np.linalg.norm(z[:, None] - z[None], axis=2)
    np.testing.assert_allclose(d1, d2, atol=1e-9)


def test_pca_rank_warning_and_whitening():
    x = np.random.default_rng(0).normal(size=(5, 8))
    with pytest.warns(RankDeficientWarning):
        pca_fit(np.vstack([x, x]), 5)
    y = np.random.default_rng(1).normal(size=(200, 3)) * [1, 5, 0.2]
    z = pca_transform(pca_fit(y, 3, whiten=True), y)
    np.testing.assert_allclose(np.cov(z, rowvar=False), np.eye(3), atol=1e-9)
