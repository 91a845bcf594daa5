"""Comparison encoders: k-means + VLAD, diagonal GMM + Fisher vector, average
pooling, and PCA preprocessing of descriptors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import EncodedVector, as_descriptors, canonical_order, normalize as normalize_vector
from .encoder import aggregate, interleave
from .errors import DimMismatch, EmptyImage, RankDeficientWarning, TooFewPoints


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """N x K squared distances from explicit differences (no expansion cancellation)."""
    out = np.empty((x.shape[0], centers.shape[0]))
    for k, c in enumerate(centers):
        r = x - c
        out[:, k] = np.einsum("nd,nd->n", r, r)
    return out


# ---------------------------------------------------------------- k-means

@dataclass(frozen=True)
class KMeansCodebook:
    centers: np.ndarray
    inertia: float
    trace: tuple = field(default=(), repr=False)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def D(self) -> int:
        return self.centers.shape[1]


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = sq_distances(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[j] = x[idx]
        closest = np.minimum(closest, sq_distances(x, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(x, centers, max_iter, tol):
    trace = []
    assign = None
    n, k_count = x.shape[0], centers.shape[0]
    for _ in range(max_iter):
        d2 = sq_distances(x, centers)
        new_assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), new_assign].sum())
        trace.append(inertia)
        if assign is not None and (
            np.array_equal(new_assign, assign) or trace[-2] - inertia <= tol * trace[-2]
        ):
            break
        assign = new_assign
        order = np.argsort(assign, kind="stable")
        counts = np.bincount(assign, minlength=k_count)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        sums = np.add.reduceat(x[order], starts[counts > 0], axis=0)
        centers = centers.copy()
        centers[counts > 0] = sums / counts[counts > 0][:, None]
        point_d2 = d2[np.arange(n), assign]
        for k in np.flatnonzero(counts == 0):
            # re-seed an empty cluster at the currently worst-served point
            far = int(point_d2.argmax())
            centers[k] = x[far]
            point_d2[far] = 0.0
    return centers, trace


def kmeans_fit(desc, K: int, max_iter: int = 100, seed: int = 0, restarts: int = 3,
               tol: float = 1e-4) -> KMeansCodebook:
    """k-means++ seeding and Lloyd iterations, best of ``restarts`` runs.

    A run stops when assignments repeat or the relative inertia decrease falls
    to ``tol``.  ``trace`` holds the inertia after every assignment step of the
    winning run.
    """
    x = as_descriptors(desc)
    if K < 1 or x.shape[0] < K:
        raise TooFewPoints(f"need at least K={K} points, got {x.shape[0]}")
    x = x[canonical_order(x)]
    best = None
    for r in range(max(1, restarts)):
        centers = _kmeanspp(x, K, _rng(seed, r))
        centers, trace = _lloyd(x, centers, max_iter, tol)
        if best is None or trace[-1] < best[1][-1]:
            best = (centers, trace)
    centers, trace = best
    return KMeansCodebook(centers, trace[-1], tuple(trace))


def hard_assign(desc, centers) -> np.ndarray:
    """Nearest center per row; ties go to the lowest index."""
    return sq_distances(desc, centers).argmin(axis=1)


def vlad_encode(desc, codebook: KMeansCodebook, normalize: bool = True) -> EncodedVector:
    f = as_descriptors(desc)
    if f.shape[1] != codebook.D:
        raise DimMismatch(f"descriptor dim {f.shape[1]} != codebook dim {codebook.D}")
    f = f[canonical_order(f)]
    assign = hard_assign(f, codebook.centers)
    blocks = np.zeros_like(codebook.centers)
    for k in range(codebook.K):
        members = f[assign == k]
        if members.size:
            blocks[k] = (members - codebook.centers[k]).sum(axis=0)
    vec = EncodedVector(blocks.reshape(-1), "vlad", (codebook.K, codebook.D))
    return normalize_vector(vec) if normalize else vec


# ---------------------------------------------------------------- GMM / FV

@dataclass(frozen=True)
class DiagonalGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float = float("nan")
    trace: tuple = field(default=(), repr=False)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def D(self) -> int:
        return self.means.shape[1]

    def log_joint(self, x: np.ndarray) -> np.ndarray:
        """N x K matrix of log w_k + log N(x | mean_k, diag var_k)."""
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        out = np.empty((x.shape[0], self.K))
        for k in range(self.K):
            r = x - self.means[k]
            maha = np.einsum("nd,d->n", r * r, 1.0 / self.variances[k])
            log_det = np.log(2.0 * np.pi * self.variances[k]).sum()
            out[:, k] = log_w[k] - 0.5 * (maha + log_det)
        return out

    def posteriors(self, desc) -> np.ndarray:
        x = as_descriptors(desc)
        lj = self.log_joint(x)
        lse = _logsumexp(lj)
        return np.exp(lj - lse[:, None])


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def gmm_fit(desc, K: int, max_iter: int = 100, tol: float = 1e-6, seed: int = 0,
            variance_floor: Optional[float] = None) -> DiagonalGmm:
    """EM for a diagonal-covariance GMM, initialized from k-means.

    ``trace`` is the total data log-likelihood evaluated at the start of
    every iteration (and once after the last M-step); it is non-decreasing.
    Stops once the relative change drops below ``tol``.  The default variance
    floor is 1e-6 times the mean per-dimension variance of the data.
    """
    x = as_descriptors(desc)
    n, d = x.shape
    if K < 1 or n < K:
        raise TooFewPoints(f"need at least K={K} points, got {n}")
    x = x[canonical_order(x)]
    if variance_floor is None:
        variance_floor = 1e-6 * float(x.var(axis=0).mean())
        if variance_floor <= 0:
            variance_floor = 1e-12
    km = kmeans_fit(x, K, seed=seed, restarts=1)
    assign = hard_assign(x, km.centers)
    counts = np.bincount(assign, minlength=K).astype(np.float64)
    means = km.centers.copy()
    variances = np.empty((K, d))
    for k in range(K):
        members = x[assign == k]
        variances[k] = members.var(axis=0) if members.shape[0] > 1 else x.var(axis=0)
    gmm = DiagonalGmm(counts / n, means, np.maximum(variances, variance_floor))

    trace = []
    for _ in range(max_iter):
        lj = gmm.log_joint(x)
        lse = _logsumexp(lj)
        ll = float(lse.sum())
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            break
        resp = np.exp(lj - lse[:, None])
        nk = resp.sum(axis=0)
        means = gmm.means.copy()
        variances = gmm.variances.copy()
        for k in range(K):
            if nk[k] <= 0:
                continue
            means[k] = np.einsum("n,nd->d", resp[:, k], x) / nk[k]
            r = x - means[k]
            variances[k] = np.einsum("n,nd->d", resp[:, k], r * r) / nk[k]
        gmm = DiagonalGmm(nk / nk.sum(), means, np.maximum(variances, variance_floor))
    else:
        trace.append(float(_logsumexp(gmm.log_joint(x)).sum()))
    return DiagonalGmm(gmm.weights, gmm.means, gmm.variances, trace[-1], tuple(trace))


def fv_encode(desc, gmm: DiagonalGmm, posteriors=None, normalize: bool = True) -> EncodedVector:
    """Fisher vector through the same kernel as VSAD, with GMM responsibilities.

    ``posteriors`` overrides the responsibilities (used to check that both
    encoders share one aggregation path).
    """
    f = as_descriptors(desc)
    if f.shape[1] != gmm.D:
        raise DimMismatch(f"descriptor dim {f.shape[1]} != GMM dim {gmm.D}")
    gamma = gmm.posteriors(f) if posteriors is None else np.asarray(posteriors, dtype=np.float64)
    first, second = aggregate(f, gamma, gmm.weights, gmm.means, np.sqrt(gmm.variances),
                              gmm.weights > 0)
    vec = interleave(first, second, "fv")
    return normalize_vector(vec) if normalize else vec


# ---------------------------------------------------------------- pooling

def avgpool_encode(desc, normalize: bool = True) -> EncodedVector:
    f = np.asarray(desc, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] == 0:
        raise EmptyImage("average pooling needs at least one patch")
    f = as_descriptors(f)
    f = f[canonical_order(f)]
    vec = EncodedVector(f.mean(axis=0), "avgpool", (1, f.shape[1]))
    return normalize_vector(vec) if normalize else vec


# ---------------------------------------------------------------- PCA

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    whiten: bool = False

    @property
    def in_dim(self) -> int:
        return self.components.shape[1]

    @property
    def out_dim(self) -> int:
        return self.components.shape[0]


def pca_fit(desc, out_dim: int, whiten: bool = False) -> PcaModel:
    """Principal directions of the centered data via SVD.

    Each component's sign is fixed so its largest-magnitude entry is positive.
    """
    x = as_descriptors(desc)
    n, d = x.shape
    if out_dim < 1 or out_dim > min(n, d):
        raise ValueError(f"out_dim must be in [1, min(N, D)] = [1, {min(n, d)}]")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    tol = s.max(initial=0.0) * max(n, d) * np.finfo(float).eps
    rank = int((s > tol).sum())
    if out_dim > rank:
        warnings.warn(
            f"requested {out_dim} components but data rank is {rank}; "
            "trailing components are an arbitrary orthonormal completion",
            RankDeficientWarning,
            stacklevel=2,
        )
    comps = vt[:out_dim].copy()
    pivots = np.abs(comps).argmax(axis=1)
    comps *= np.sign(comps[np.arange(out_dim), pivots])[:, None]
    ev = s[:out_dim] ** 2 / max(n - 1, 1)
    ev[rank:] = 0.0
    return PcaModel(mean, comps, ev, whiten)


def pca_transform(model: PcaModel, desc) -> np.ndarray:
    x = as_descriptors(desc)
    if x.shape[1] != model.in_dim:
        raise DimMismatch(f"descriptor dim {x.shape[1]} != PCA input dim {model.in_dim}")
    y = (x - model.mean) @ model.components.T
    if model.whiten:
        scale = np.sqrt(model.explained_variance)
        y = y / np.where(scale > 0, scale, 1.0)
    return y
