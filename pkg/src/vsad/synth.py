"""Planted generative stand-in for the patch CNNs.

Each category is a mixture over ``V`` latent objects; every object emits
isotropic Gaussian descriptors around its own mean.  The probability row of
a patch is the exact object posterior under the category-averaged mixture,
softened by a temperature.  Because the ground truth is known, codebooks,
encoders and codeword selection can be checked against it.

Random streams
--------------
All draws come from numpy's PCG64 seeded by ``SeedSequence(seed,
spawn_key=(category, image, stream))``: stream 0 supplies one uniform per
patch (object choice by inverse CDF), stream 1 supplies ``D`` standard
normals per patch (row ``t`` of a C-ordered ``(T, D)`` draw).  Patch ``t`` of
image ``(c, i)`` therefore depends only on ``(seed, c, i, t)``; neither the
order images are generated in nor the number of patches requested changes
its values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PatchManifest
from .errors import InvalidModel

@dataclass(frozen=True)
class PlantedModel:
    category_mixtures: np.ndarray
    object_means: np.ndarray
    object_stddev: float
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        mix = np.asarray(self.category_mixtures, dtype=np.float64)
        means = np.asarray(self.object_means, dtype=np.float64)
        object.__setattr__(self, "category_mixtures", mix)
        object.__setattr__(self, "object_means", means)
        self.validate()

    @property
    def n_categories(self) -> int:
        return self.category_mixtures.shape[0]

    @property
    def n_objects(self) -> int:
        return self.category_mixtures.shape[1]

    @property
    def descriptor_dim(self) -> int:
        return self.object_means.shape[1]

    @property
    def global_mixture(self) -> np.ndarray:
        """Object prior with categories weighted uniformly."""
        return self.category_mixtures.mean(axis=0)

    def validate(self):
        mix, means = self.category_mixtures, self.object_means
        if mix.ndim != 2 or means.ndim != 2:
            raise InvalidModel("mixtures and means must be 2-D")
        if mix.shape[1] != means.shape[0]:
            raise InvalidModel(
                f"{mix.shape[1]} mixture columns but {means.shape[0]} object means"
            )
        if mix.shape[0] < 1 or mix.shape[1] < 1 or means.shape[1] < 1:
            raise InvalidModel("model needs at least one category, object and dimension")
        if not (np.all(np.isfinite(mix)) and np.all(np.isfinite(means))):
            raise InvalidModel("model parameters must be finite")
        if mix.min() < 0 or np.any(np.abs(mix.sum(axis=1) - 1.0) > 1e-9):
            raise InvalidModel("each category mixture must be a distribution")
        if not (self.object_stddev > 0 and np.isfinite(self.object_stddev)):
            raise InvalidModel("object_stddev must be positive and finite")
        if not self.temperature > 0:
            raise InvalidModel("temperature must be positive")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise InvalidModel("seed must fit in an unsigned 64-bit integer")


def _log_posterior_logits(model: PlantedModel, f: np.ndarray, stddev=None) -> np.ndarray:
    sigma = model.object_stddev if stddev is None else stddev
    with np.errstate(divide="ignore"):
        log_prior = np.log(model.global_mixture)
    means = model.object_means
    m2 = np.einsum("vd,vd->v", means, means)
    f2 = np.einsum("nd,nd->n", f, f)
    sq = np.maximum(f2[:, None] - 2.0 * (f @ means.T) + m2[None, :], 0.0)
    return log_prior - sq / (2.0 * sigma**2)


def _softmax_rows(logits: np.ndarray, temperature: float) -> np.ndarray:
    if np.isinf(temperature):
        alive = np.isfinite(logits)
        return alive / alive.sum(axis=1, keepdims=True)
    scaled = logits / temperature
    scaled -= scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=1, keepdims=True)


def posterior(model: PlantedModel, f, stddev=None) -> np.ndarray:
    """Tempered object posterior for one descriptor (D,) or a batch (N, D)."""
    f = np.asarray(f, dtype=np.float64)
    single = f.ndim == 1
    f2 = f[None, :] if single else f
    if f2.shape[1] != model.descriptor_dim:
        raise InvalidModel(
            f"descriptor has dimension {f2.shape[1]}, model expects {model.descriptor_dim}"
        )
    p = _softmax_rows(_log_posterior_logits(model, f2, stddev), model.temperature)
    return p[0] if single else p


def _image_streams(seed: int, category: int, image: int):
    return [
        np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(category, image, s)))
        )
        for s in (0, 1)
    ]


def image_id(category: int, image: int) -> str:
    return f"c{category:03d}_i{image:05d}"


def generate(model: PlantedModel, images_per_category: int, patches_per_image: int,
             return_objects: bool = False):
    """Sample a labeled bundle: descriptors, posteriors and a manifest.

    Images are laid out category-major.  With ``return_objects`` the latent
    object index of every patch is returned as a fourth element.
    """
    if images_per_category < 1 or patches_per_image < 1:
        raise InvalidModel("images_per_category and patches_per_image must be >= 1")
    T, D = patches_per_image, model.descriptor_dim
    cdf = np.cumsum(model.category_mixtures, axis=1)
    ids, labels, descs, objs = [], [], [], []
    for c in range(model.n_categories):
        for i in range(images_per_category):
            pick, noise = _image_streams(model.seed, c, i)
            v = np.searchsorted(cdf[c], pick.random(T), side="right")
            v = np.minimum(v, model.n_objects - 1)
            z = noise.standard_normal((T, D))
            descs.append(model.object_means[v] + model.object_stddev * z)
            objs.append(v)
            ids.append(image_id(c, i))
            labels.append(c)
    desc = np.vstack(descs)
    prob = posterior(model, desc)
    manifest = PatchManifest.from_counts(ids, [T] * len(ids), labels)
    if return_objects:
        return desc, prob, manifest, np.concatenate(objs)
    return desc, prob, manifest


def entropy_bits(prob: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(prob > 0, prob * np.log2(prob), 0.0)
    return -terms.sum(axis=1)


def calibrate_stddev(category_mixtures, object_means, temperature: float,
                     target_bits: float = 2.0, n_samples: int = 4000, seed: int = 0) -> float:
    """Object stddev whose tempered posteriors have mean entropy ``target_bits``.

    Bisection on log(stddev) with common random numbers, so the answer is a
    deterministic function of the inputs.
    """
    mix = np.asarray(category_mixtures, dtype=np.float64)
    means = np.asarray(object_means, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2**31,))))
    g = mix.mean(axis=0)
    v = np.minimum(np.searchsorted(np.cumsum(g), rng.random(n_samples), side="right"),
                   len(g) - 1)
    z = rng.standard_normal((n_samples, means.shape[1]))
    probe = PlantedModel(mix, means, 1.0, temperature, seed)

    def mean_entropy(log_sigma):
        sigma = float(np.exp(log_sigma))
        f = means[v] + sigma * z
        p = _softmax_rows(_log_posterior_logits(probe, f, sigma), temperature)
        return entropy_bits(p).mean()

    lo, hi = np.log(1e-4), np.log(1e4)
    if not mean_entropy(lo) < target_bits < mean_entropy(hi):
        raise InvalidModel(f"entropy target {target_bits} bits is not attainable")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mean_entropy(mid) < target_bits:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def make_planted_model(n_categories: int, n_objects: int, dim: int, *,
                       stddev=None, temperature: float = 1.0, seed: int = 0,
                       concentration: float = 0.5, target_entropy_bits: float = 2.0,
                       active_fraction: float = 1.0, tail_weight: float = 0.01,
                       tail_scale: float = 1.0) -> PlantedModel:
    """Random planted model: N(0, I) object means, Dirichlet category mixtures.

    A random ``active_fraction`` of the objects gets Dirichlet parameter
    ``concentration``; the remaining objects get ``concentration *
    tail_weight`` and so are rarely seen in any category.  Tail means are
    multiplied by ``tail_scale``; values above 1 push those objects away from
    the bulk of scene content, like object classes that seldom respond on
    scenes.  When ``stddev`` is None it is calibrated to ``target_entropy_bits``.
    """
    if min(n_categories, n_objects, dim) < 1:
        raise InvalidModel("counts must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2**32,))))
    means = rng.standard_normal((n_objects, dim))
    n_active = max(1, int(round(active_fraction * n_objects)))
    alpha = np.full(n_objects, concentration * tail_weight)
    active = rng.permutation(n_objects)[:n_active]
    alpha[active] = concentration
    tail = np.ones(n_objects, dtype=bool)
    tail[active] = False
    means[tail] *= tail_scale
    mix = rng.dirichlet(alpha, size=n_categories)
    mix /= mix.sum(axis=1, keepdims=True)
    if stddev is None:
        stddev = calibrate_stddev(mix, means, temperature, target_entropy_bits, seed=seed)
    return PlantedModel(mix, means, float(stddev), float(temperature), int(seed))


def make_signature_model(n_categories: int, n_objects: int, dim: int, k: int, *,
                         signature_mass: float = 0.9, stddev=None, temperature: float = 1.0,
                         seed: int = 0, target_entropy_bits: float = 2.0):
    """Model where each category puts ``signature_mass`` on its own k/C objects.

    Returns ``(model, planted)`` with ``planted`` the sorted signature objects.
    Objects outside every signature share the remaining mass uniformly.
    """
    per = k // n_categories
    if per < 1 or per * n_categories != k:
        raise InvalidModel("k must be a positive multiple of n_categories")
    if k >= n_objects:
        raise InvalidModel("need more objects than signature objects")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2**33,))))
    order = rng.permutation(n_objects)
    signatures = order[:k].reshape(n_categories, per)
    background = order[k:]
    mix = np.zeros((n_categories, n_objects))
    for c in range(n_categories):
        mix[c, signatures[c]] = signature_mass / per
        mix[c, background] = (1.0 - signature_mass) / background.size
    mix /= mix.sum(axis=1, keepdims=True)
    means = rng.standard_normal((n_objects, dim))
    if stddev is None:
        stddev = calibrate_stddev(mix, means, temperature, target_entropy_bits, seed=seed)
    model = PlantedModel(mix, means, float(stddev), float(temperature), int(seed))
    return model, np.sort(signatures.ravel())


@dataclass(frozen=True)
class BenchmarkSpec:
    """The seeded synthetic scene benchmark used for trend checks."""

    n_categories: int = 10
    n_objects: int = 50
    dim: int = 16
    train_per_category: int = 40
    test_per_category: int = 20
    patches_per_image: int = 100
    temperature: float = 2.0
    target_entropy_bits: float = 2.0
    concentration: float = 3.0
    active_fraction: float = 0.4
    tail_weight: float = 0.01
    tail_scale: float = 3.0
    seed: int = 0

    def model(self) -> PlantedModel:
        return make_planted_model(
            self.n_categories, self.n_objects, self.dim,
            temperature=self.temperature, seed=self.seed,
            concentration=self.concentration,
            active_fraction=self.active_fraction,
            tail_weight=self.tail_weight,
            tail_scale=self.tail_scale,
            target_entropy_bits=self.target_entropy_bits,
        )


@dataclass
class Split:
    desc: np.ndarray
    prob: np.ndarray
    manifest: PatchManifest
    objects: np.ndarray = field(default=None, repr=False)


def generate_split(model: PlantedModel, train_per_category: int, test_per_category: int,
                   patches_per_image: int):
    """Train/test bundles: the first images of each category train, the rest test."""
    desc, prob, man, objs = generate(
        model, train_per_category + test_per_category, patches_per_image, return_objects=True
    )
    per_cat = train_per_category + test_per_category
    train_idx = [i for i in range(len(man)) if i % per_cat < train_per_category]
    test_idx = [i for i in range(len(man)) if i % per_cat >= train_per_category]

    def take(idx):
        rows = np.concatenate([np.arange(*man.patch_ranges[i]) for i in idx])
        sub = PatchManifest.from_counts(
            [man.image_ids[i] for i in idx],
            [patches_per_image] * len(idx),
            [man.labels[i] for i in idx],
        )
        return Split(desc[rows], prob[rows], sub, objs[rows])

    return take(train_idx), take(test_idx)
