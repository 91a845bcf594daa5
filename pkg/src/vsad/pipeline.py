"""End-to-end experiment driver: data -> codebook -> select -> encode -> train -> eval.

A run is described by one JSON document (see :data:`DEFAULTS`).  Every random
step takes its seed from the config, so rerunning a config reproduces the
same metrics and the same artifact bytes.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from . import formats
from .baselines import (
    DiagonalGmm,
    KMeansCodebook,
    PcaModel,
    avgpool_encode,
    fv_encode,
    gmm_fit,
    kmeans_fit,
    pca_fit,
    pca_transform,
    vlad_encode,
)
from .classifier import EvalReport, LinearOvaModel, evaluate, svm_train
from .codebook import build_codebook
from .core import PatchManifest, validate_bundle
from .encoder import VsadConfig, encode_batch, encode_vsad
from .errors import PipelineError, VsadError
from .sampling import patch_count
from .selection import aggregate_responses, random_selection, select_codewords
from .synth import Split, generate_split, make_planted_model

log = logging.getLogger(__name__)

METHODS = ("vsad", "fv", "vlad", "avgpool")

# operating points: 256 selected codewords, 9 scales on a 10x10 grid with
# flips, linear SVM with C=1; the synthetic source is scaled down to desk size
DEFAULTS = {
    "source": {
        "kind": "synth",
        "categories": 10,
        "objects": 1000,
        "dim": 100,
        "stddev": None,
        "temperature": 1.0,
        "target_entropy_bits": 2.0,
        "concentration": 0.5,
        "active_fraction": 0.25,
        "tail_weight": 0.01,
        "tail_scale": 1.0,
        "train_per_category": 8,
        "test_per_category": 4,
        "patches_per_image": 200,
        "seed": 0,
        # bundle sources
        "bundle": None,
        "manifest": None,
        "train_manifest": None,
        "test_manifest": None,
    },
    "sampling": {
        "image_side": 256,
        "scales": [64, 80, 96, 112, 128, 144, 160, 176, 192],
        "grid": 10,
        "flips": True,
    },
    "encoder": {
        "method": "vsad",
        "codebook_size": 256,
        "pca_dim": None,
        "variance_floor": 1e-8,
        "activation_threshold": 1e-8,
        "normalize": True,
        "reuse_full_stats": False,
    },
    "fit": {
        "max_samples": 20000,
        "kmeans_restarts": 3,
        "max_iter": 100,
        "seed": 0,
    },
    "selection": {"k": 256, "strategy": "semantic", "seed": 0},
    "classifier": {"c": 1.0, "tol": 1e-6, "max_epochs": 1000, "seed": 0},
    "output_dir": "runs/default",
    "cache": True,
}

# the seeded trend benchmark: 10 categories, 50 objects, 16-d descriptors,
# 40/20 images per category, 100 patches each, temperature 2, ~2-bit posteriors.
# Scenes draw on 20 of the objects; the other 30 are rare and sit away from
# scene content, like object classes that seldom fire on scene images.
BENCHMARK_OVERRIDES = {
    "source": {
        "objects": 50,
        "dim": 16,
        "temperature": 2.0,
        "concentration": 3.0,
        "active_fraction": 0.4,
        "tail_weight": 0.01,
        "tail_scale": 3.0,
        "train_per_category": 40,
        "test_per_category": 20,
        "patches_per_image": 100,
    },
    "encoder": {"codebook_size": 50},
    "fit": {"max_samples": 10000},
    "selection": {"k": None},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in out:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class PipelineConfig:
    doc: dict

    @classmethod
    def from_dict(cls, override=None, base=None) -> "PipelineConfig":
        cfg = cls(_merge(base or DEFAULTS, override or {}))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(formats.read_json(path))

    @classmethod
    def paper_defaults(cls, **override) -> "PipelineConfig":
        return cls.from_dict(override)

    @classmethod
    def benchmark(cls, seed: int = 0, override=None) -> "PipelineConfig":
        doc = _merge(DEFAULTS, BENCHMARK_OVERRIDES)
        doc["source"]["seed"] = seed
        doc["fit"]["seed"] = seed
        return cls.from_dict(override or {}, base=doc)

    def __getitem__(self, key):
        return self.doc[key]

    def with_overrides(self, override: dict) -> "PipelineConfig":
        return PipelineConfig.from_dict(override, base=self.doc)

    def check(self):
        enc = self.doc["encoder"]
        if enc["method"] not in METHODS:
            raise ValueError(f"encoder.method must be one of {METHODS}")
        src = self.doc["source"]
        if src["kind"] not in ("synth", "bundle"):
            raise ValueError("source.kind must be 'synth' or 'bundle'")
        if src["kind"] == "bundle":
            for key in ("bundle", "manifest", "train_manifest", "test_manifest"):
                if not src.get(key):
                    raise ValueError(f"bundle sources need source.{key}")
        if self.doc["selection"]["strategy"] not in ("semantic", "random"):
            raise ValueError("selection.strategy must be 'semantic' or 'random'")

    def section_hash(self, *keys) -> str:
        part = {k: self.doc[k] for k in keys}
        return hashlib.sha256(json.dumps(part, sort_keys=True).encode()).hexdigest()

    @property
    def hash(self) -> str:
        return self.section_hash(*sorted(k for k in self.doc if k not in ("output_dir", "cache")))

    def dumps(self) -> str:
        return formats.dumps(self.doc)


class StageCache:
    """npz files keyed by content hash under ``<output_dir>/cache``."""

    def __init__(self, root, enabled=True):
        self.root = os.path.join(root, "cache")
        self.enabled = enabled

    def _path(self, key):
        return os.path.join(self.root, f"{key}.npz")

    def get(self, key):
        if not self.enabled or not os.path.exists(self._path(key)):
            return None
        with np.load(self._path(key), allow_pickle=False) as z:
            return {k: z[k] for k in z.files}

    def put(self, key, **arrays):
        if not self.enabled:
            return
        os.makedirs(self.root, exist_ok=True)
        tmp = self._path(key) + ".tmp.npz"
        np.savez(tmp, **arrays)
        os.replace(tmp, self._path(key))


def _hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p).tobytes())
        else:
            h.update(json.dumps(p, sort_keys=True, default=str).encode())
    return h.hexdigest()[:32]


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except (VsadError, ValueError, OSError, KeyError) as exc:
                raise PipelineError(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


def _take(desc, prob, manifest: PatchManifest, split) -> Split:
    """Rows of the images named by ``split = (ids, labels)``, in split order."""
    split_ids, split_labels = split
    index = {iid: i for i, iid in enumerate(manifest.image_ids)}
    rows, counts, labels = [], [], []
    for n, iid in enumerate(split_ids):
        if iid not in index:
            raise KeyError(f"image {iid!r} is not in the bundle manifest")
        i = index[iid]
        start, end = manifest.patch_ranges[i]
        rows.append(np.arange(start, end))
        counts.append(end - start)
        lab = split_labels[n] if split_labels[n] is not None else (
            manifest.labels[i] if manifest.labels else None)
        labels.append(lab)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return Split(desc[rows], prob[rows], PatchManifest.from_counts(split_ids, counts, labels))


@_stage("data")
def load_data(config: PipelineConfig, cache: StageCache):
    src = config["source"]
    if src["kind"] == "bundle":
        desc, prob = formats.read_bundle(src["bundle"])
        manifest = formats.read_manifest(src["manifest"])
        prob = validate_bundle(desc, prob, manifest).prob
        train = _take(desc, prob, manifest, formats.read_split(src["train_manifest"]))
        test = _take(desc, prob, manifest, formats.read_split(src["test_manifest"]))
        return train, test, {"kind": "bundle"}

    patches = src["patches_per_image"]
    if patches is None:
        smp = config["sampling"]
        patches = patch_count(smp["scales"], smp["grid"], smp["flips"])
    key = _hash("data", src, patches)
    hit = cache.get(key)
    model = make_planted_model(
        src["categories"], src["objects"], src["dim"],
        stddev=src["stddev"], temperature=src["temperature"], seed=src["seed"],
        concentration=src["concentration"],
        active_fraction=src["active_fraction"], tail_weight=src["tail_weight"],
        tail_scale=src["tail_scale"],
        target_entropy_bits=src["target_entropy_bits"],
    )
    info = {"kind": "synth", "object_stddev": model.object_stddev, "patches_per_image": patches}
    if hit is not None:
        splits = []
        for name in ("train", "test"):
            man = formats.parse_manifest(str(hit[f"{name}_manifest"]))
            splits.append(Split(hit[f"{name}_desc"], hit[f"{name}_prob"], man))
        return splits[0], splits[1], info
    train, test = generate_split(model, src["train_per_category"], src["test_per_category"],
                                 patches)
    cache.put(
        key,
        train_desc=train.desc, train_prob=train.prob,
        train_manifest=np.array(formats.manifest_text(train.manifest)),
        test_desc=test.desc, test_prob=test.prob,
        test_manifest=np.array(formats.manifest_text(test.manifest)),
    )
    return train, test, info


def _fit_sample(desc, config):
    fit = config["fit"]
    n = desc.shape[0]
    if fit["max_samples"] is None or n <= fit["max_samples"]:
        return desc
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(fit["seed"]),
                                                                     spawn_key=(11,))))
    return desc[np.sort(rng.choice(n, size=fit["max_samples"], replace=False))]


@_stage("pca")
def apply_pca(train: Split, test: Split, config: PipelineConfig, out_dir):
    dim = config["encoder"]["pca_dim"]
    if not dim:
        return train, test, None
    model = pca_fit(_fit_sample(train.desc, config), int(dim))
    formats.write_model(model, os.path.join(out_dir, "pca.json"), "vsad-pca")
    return (Split(pca_transform(model, train.desc), train.prob, train.manifest),
            Split(pca_transform(model, test.desc), test.prob, test.manifest), model)


@_stage("codebook")
def fit_codebook(train: Split, config: PipelineConfig, out_dir):
    enc, fit = config["encoder"], config["fit"]
    method = enc["method"]
    if method == "vsad":
        cb = build_codebook(train.desc, train.prob, enc["variance_floor"],
                            enc["activation_threshold"], provenance="pipeline:train")
        formats.write_codebook(cb, os.path.join(out_dir, "codebook.json"))
        return cb
    if method == "fv":
        gmm = gmm_fit(_fit_sample(train.desc, config), enc["codebook_size"],
                      max_iter=fit["max_iter"], seed=fit["seed"])
        formats.write_model(gmm, os.path.join(out_dir, "gmm.json"), "vsad-gmm")
        return gmm
    if method == "vlad":
        km = kmeans_fit(_fit_sample(train.desc, config), enc["codebook_size"],
                        max_iter=fit["max_iter"], seed=fit["seed"],
                        restarts=fit["kmeans_restarts"])
        formats.write_model(km, os.path.join(out_dir, "kmeans.json"), "vsad-kmeans")
        return km
    return None


@_stage("select")
def choose_codewords(train: Split, codebook, config: PipelineConfig, out_dir):
    sel = config["selection"]
    if config["encoder"]["method"] != "vsad" or not sel["k"]:
        return None
    if sel["strategy"] == "random":
        chosen = random_selection(codebook.K, sel["k"], sel["seed"], codebook.active)
    else:
        table = aggregate_responses(train.prob, train.manifest)
        chosen = select_codewords(table, sel["k"]).selected
    formats.write_selection(chosen, os.path.join(out_dir, "selection.txt"))
    return chosen


def encoder_for(method, codebook, selected=None, normalize=True, reuse_full_stats=False):
    """``(encode_fn, cfg)`` usable with :func:`encode_batch`."""
    if method == "vsad":
        cfg = VsadConfig(codebook, None if selected is None else tuple(selected),
                         normalize, reuse_full_stats)
        return encode_vsad, cfg
    if method == "fv":
        return (lambda d, p, c: fv_encode(d, c, normalize=normalize)), codebook
    if method == "vlad":
        return (lambda d, p, c: vlad_encode(d, c, normalize=normalize)), codebook
    if method == "avgpool":
        return (lambda d, p, c: avgpool_encode(d, normalize=normalize)), None
    raise ValueError(f"unknown method {method!r}")


@_stage("encode")
def encode_split(split: Split, method, codebook, selected, config, cache, tag):
    enc = config["encoder"]
    key = _hash("encode", tag, method, enc, selected, split.desc, split.prob,
                None if codebook is None else formats.dumps(
                    formats.codebook_dict(codebook) if method == "vsad"
                    else formats.dataclass_to_dict(codebook, method)))
    hit = cache.get(key)
    if hit is not None:
        return hit["x"]
    fn, cfg = encoder_for(method, codebook, selected, enc["normalize"], enc["reuse_full_stats"])
    x = np.vstack([v.data for _, v in encode_batch(split.desc, split.prob, split.manifest,
                                                   cfg, fn)])
    cache.put(key, x=x)
    return x


@_stage("train")
def train_classifier(x, labels, config) -> LinearOvaModel:
    clf = config["classifier"]
    return svm_train(x, labels, C=clf["c"], tol=clf["tol"], max_epochs=clf["max_epochs"],
                     seed=clf["seed"])


def run_pipeline(config: PipelineConfig, out_dir=None):
    """Run every stage; returns ``(EvalReport, report_dict)`` and writes artifacts."""
    out_dir = out_dir or config["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    cache = StageCache(out_dir, config["cache"])
    formats.atomic_write(os.path.join(out_dir, "config.json"), config.dumps().encode())
    timings = {}
    method = config["encoder"]["method"]

    def timed(name, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        timings[name] = time.perf_counter() - t0
        return out

    train, test, info = timed("data", load_data, config, cache)
    train, test, _ = timed("pca", apply_pca, train, test, config, out_dir)
    codebook = timed("codebook", fit_codebook, train, config, out_dir)
    selected = timed("select", choose_codewords, train, codebook, config, out_dir)
    x_train = timed("encode_train", encode_split, train, method, codebook, selected, config,
                    cache, "train")
    x_test = timed("encode_test", encode_split, test, method, codebook, selected, config,
                   cache, "test")
    y_train = train.manifest.label_array()
    y_test = test.manifest.label_array()
    formats.write_features(train.manifest.image_ids, x_train,
                           os.path.join(out_dir, "features_train.vsbn"), y_train)
    formats.write_features(test.manifest.image_ids, x_test,
                           os.path.join(out_dir, "features_test.vsbn"), y_test)
    model = timed("train", train_classifier, x_train, y_train, config)
    formats.write_model(model, os.path.join(out_dir, "model.json"), "vsad-linear-ova")
    try:
        result: EvalReport = evaluate(model, x_test, y_test)
    except VsadError as exc:
        raise PipelineError("eval", exc) from exc

    report = {
        "config_hash": config.hash,
        "method": method,
        "source": info,
        "seeds": {
            "source": config["source"]["seed"],
            "fit": config["fit"]["seed"],
            "selection": config["selection"]["seed"],
            "classifier": config["classifier"]["seed"],
        },
        "selected": None if selected is None else list(selected),
        "n_train": int(x_train.shape[0]),
        "n_test": int(x_test.shape[0]),
        "feature_dim": int(x_train.shape[1]),
        "metrics": result.as_dict(),
        "timings": timings,
    }
    formats.write_json(report, os.path.join(out_dir, "report.json"))
    log.info("%s accuracy %.4f", method, result.overall_accuracy)
    return result, report


def report_body(report: dict) -> str:
    """The deterministic part of a run report (everything except timings)."""
    return formats.dumps({k: v for k, v in report.items() if k != "timings"})


def compare_encoders(config: PipelineConfig, methods=METHODS, out_dir=None):
    """Run the pipeline once per method on shared data; rows sorted by accuracy."""
    out_dir = out_dir or config["output_dir"]
    rows = []
    for order, method in enumerate(methods):
        cfg = config.with_overrides({"encoder": {"method": method}})
        t0 = time.perf_counter()
        result, _ = run_pipeline(cfg, os.path.join(out_dir, method))
        rows.append({"method": method, "accuracy": result.overall_accuracy,
                     "runtime": time.perf_counter() - t0, "_order": order})
    rows.sort(key=lambda r: (-r["accuracy"], r["_order"]))
    for r in rows:
        del r["_order"]
    lines = ["method\taccuracy\truntime_s\n"] + [
        f"{r['method']}\t{r['accuracy']:.6f}\t{r['runtime']:.3f}\n" for r in rows]
    os.makedirs(out_dir, exist_ok=True)
    formats.atomic_write(os.path.join(out_dir, "compare.tsv"), "".join(lines).encode())
    return rows
