"""Command-line entry point: ``vsad <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import formats
from .baselines import (
    DiagonalGmm,
    KMeansCodebook,
    PcaModel,
    gmm_fit,
    kmeans_fit,
    pca_fit,
    pca_transform,
)
from .classifier import (
    LinearOvaModel,
    average_reports,
    evaluate,
    predict_batch,
    svm_train,
)
from .codebook import build_codebook
from .core import validate_bundle
from .encoder import encode_batch
from .errors import MissingLabels, PipelineError, VsadError
from .pipeline import METHODS, PipelineConfig, compare_encoders, encoder_for, run_pipeline
from .sampling import DEFAULT_SCALES, sample_grid
from .selection import aggregate_responses, random_selection, select_codewords
from .synth import generate, make_planted_model

GMM_KIND, KMEANS_KIND, PCA_KIND, MODEL_KIND = (
    "vsad-gmm", "vsad-kmeans", "vsad-pca", "vsad-linear-ova")


def _ints(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _load_bundle(args):
    desc, prob = formats.read_bundle(args.bundle)
    manifest = formats.read_manifest(args.manifest) if getattr(args, "manifest", None) else None
    report = validate_bundle(desc, prob, manifest)
    if report.n_renormalized:
        logging.info("renormalized %d probability rows", report.n_renormalized)
    return desc, report.prob, manifest


def cmd_synth(args):
    model = make_planted_model(
        args.categories, args.objects, args.dim, stddev=args.stddev,
        temperature=args.temp, seed=args.seed, concentration=args.concentration,
        active_fraction=args.active_fraction, target_entropy_bits=args.entropy_bits,
    )
    desc, prob, manifest = generate(model, args.images_per_cat, args.patches)
    formats.write_bundle(desc, prob, args.out)
    formats.write_manifest(manifest, args.manifest)
    print(f"wrote {desc.shape[0]} patches of {len(manifest)} images "
          f"(stddev {model.object_stddev:.6g})")


def cmd_sample_grid(args):
    rects = sample_grid(args.image_side, _ints(args.scales), args.grid, args.flips)
    out = sys.stdout
    for r in rects:
        out.write(f"{r.scale_index} {r.x} {r.y} {r.side} {int(r.flipped)}\n")


def cmd_build_codebook(args):
    desc, prob, _ = _load_bundle(args)
    cb = build_codebook(desc, prob, args.variance_floor, args.activation_threshold,
                        provenance=f"bundle:{os.path.basename(args.bundle)}")
    formats.write_codebook(cb, args.out)
    print(f"codebook K={cb.K} D={cb.D}, {int(cb.active.sum())} active")


def cmd_select(args):
    _, prob, manifest = _load_bundle(args)
    if args.random:
        chosen = random_selection(prob.shape[1], args.k, args.seed)
    else:
        chosen = select_codewords(aggregate_responses(prob, manifest), args.k).selected
    formats.write_selection(chosen, args.out)
    print(f"selected {len(chosen)} codewords")


def _fit_input(args):
    desc, _ = formats.read_bundle(args.bundle)
    return desc


def cmd_kmeans_fit(args):
    km = kmeans_fit(_fit_input(args), args.k, max_iter=args.max_iter, seed=args.seed,
                    restarts=args.restarts)
    formats.write_model(km, args.out, KMEANS_KIND)
    print(f"k-means inertia {km.inertia:.6g} after {len(km.trace)} iterations")


def cmd_gmm_fit(args):
    gmm = gmm_fit(_fit_input(args), args.k, max_iter=args.max_iter, tol=args.tol,
                  seed=args.seed, variance_floor=args.variance_floor)
    formats.write_model(gmm, args.out, GMM_KIND)
    print(f"GMM log-likelihood {gmm.log_likelihood:.6g} after {len(gmm.trace)} evaluations")


def cmd_pca_fit(args):
    pca = pca_fit(_fit_input(args), args.dim, whiten=args.whiten)
    formats.write_model(pca, args.out, PCA_KIND)
    print(f"PCA {pca.in_dim} -> {pca.out_dim}")


def cmd_encode(args):
    desc, prob, manifest = _load_bundle(args)
    if args.pca:
        desc = pca_transform(formats.read_model(PcaModel, args.pca, PCA_KIND), desc)
    method = args.method
    codebook = None
    if method == "vsad":
        codebook = formats.read_codebook(args.codebook)
    elif method == "fv":
        codebook = formats.read_model(DiagonalGmm, args.codebook, GMM_KIND)
    elif method == "vlad":
        codebook = formats.read_model(KMeansCodebook, args.codebook, KMEANS_KIND)
    selected = formats.read_selection(args.selected) if args.selected else None
    fn, cfg = encoder_for(method, codebook, selected, not args.no_normalize)
    encoded = encode_batch(desc, prob, manifest, cfg, fn)
    x = np.vstack([v.data for _, v in encoded])
    formats.write_features([i for i, _ in encoded], x, args.out, manifest.labels)
    print(f"encoded {x.shape[0]} images into {x.shape[1]}-d {method} vectors")


def _features(path, split=None, need_labels=True):
    """``(matrix, labels, ids)`` for a feature set, optionally restricted to a split."""
    rows, x = formats.read_features(path)
    labels = rows.label_array() if rows.has_labels else None
    if labels is None and need_labels:
        raise MissingLabels(f"{path} carries no labels")
    if split is None:
        return x, labels, list(rows.image_ids)
    ids, _ = formats.read_split(split)
    index = {iid: i for i, iid in enumerate(rows.image_ids)}
    try:
        idx = np.array([index[i] for i in ids], dtype=np.int64)
    except KeyError as exc:
        raise VsadError(f"image {exc} of {split} has no feature row") from exc
    return x[idx], None if labels is None else labels[idx], ids


def cmd_train(args):
    x, y, _ = _features(args.features, args.manifest)
    model = svm_train(x, y, C=args.c, tol=args.tol, max_epochs=args.max_epochs, seed=args.seed)
    formats.write_model(model, args.out, MODEL_KIND)
    print(f"trained {model.n_classes} one-vs-all classifiers on {x.shape[0]} examples")


def cmd_predict(args):
    model = formats.read_model(LinearOvaModel, args.model, MODEL_KIND)
    x, _, ids = _features(args.features, args.manifest, need_labels=False)
    for iid, c in zip(ids, predict_batch(model, x)):
        print(f"{iid}\t{int(c)}")


def cmd_eval(args):
    if args.splits:
        reports = []
        for pair in args.splits:
            train_path, test_path = pair.split(":")
            x, y, _ = _features(args.features, train_path)
            model = svm_train(x, y, C=args.c, tol=args.tol, seed=args.seed)
            xt, yt, _ = _features(args.features, test_path)
            rep = evaluate(model, xt, yt)
            reports.append(rep)
            print(f"{test_path}\taccuracy\t{rep.overall_accuracy:.6f}")
        summary = average_reports(reports)
        print(f"mean\taccuracy\t{summary['mean_accuracy']:.6f}\tstd\t{summary['std_accuracy']:.6f}")
        if args.out:
            formats.write_json({**summary, "per_split": [r.as_dict() for r in reports]}, args.out)
        return
    if not args.model:
        raise VsadError("eval needs --model or --splits")
    model = formats.read_model(LinearOvaModel, args.model, MODEL_KIND)
    x, y, _ = _features(args.features, args.manifest)
    rep = evaluate(model, x, y)
    print(f"accuracy\t{rep.overall_accuracy:.6f}\tmean_class_accuracy\t{rep.mean_class_accuracy:.6f}")
    if args.out:
        formats.write_json(rep.as_dict(), args.out)


def _config(args):
    if args.config:
        cfg = PipelineConfig.load(args.config)
    elif args.benchmark is not None:
        cfg = PipelineConfig.benchmark(args.benchmark)
    else:
        cfg = PipelineConfig.paper_defaults()
    if args.out:
        cfg = cfg.with_overrides({"output_dir": args.out})
    return cfg


def cmd_run(args):
    cfg = _config(args)
    if args.method:
        cfg = cfg.with_overrides({"encoder": {"method": args.method}})
    result, _ = run_pipeline(cfg)
    print(f"{cfg['encoder']['method']}\taccuracy\t{result.overall_accuracy:.6f}")


def cmd_compare(args):
    cfg = _config(args)
    rows = compare_encoders(cfg, args.methods.split(","))
    print("method\taccuracy\truntime_s")
    for r in rows:
        print(f"{r['method']}\t{r['accuracy']:.6f}\t{r['runtime']:.3f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vsad", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a planted synthetic bundle")
    s.add_argument("--categories", type=int, required=True)
    s.add_argument("--objects", type=int, required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--stddev", type=float, default=None,
                   help="object stddev; calibrated to --entropy-bits when omitted")
    s.add_argument("--temp", type=float, default=1.0)
    s.add_argument("--images-per-cat", type=int, required=True)
    s.add_argument("--patches", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--concentration", type=float, default=0.5)
    s.add_argument("--active-fraction", type=float, default=1.0)
    s.add_argument("--entropy-bits", type=float, default=2.0)
    s.add_argument("--out", required=True)
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("sample-grid", help="print the dense multi-scale patch grid")
    s.add_argument("--image-side", type=int, default=256)
    s.add_argument("--scales", default=",".join(map(str, DEFAULT_SCALES)))
    s.add_argument("--grid", type=int, default=10)
    s.add_argument("--flips", action=argparse.BooleanOptionalAction, default=True)
    s.set_defaults(func=cmd_sample_grid)

    s = sub.add_parser("build-codebook", help="semantic codebook from a bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--variance-floor", type=float, default=1e-8)
    s.add_argument("--activation-threshold", type=float, default=1e-8)
    s.set_defaults(func=cmd_build_codebook)

    s = sub.add_parser("select", help="select discriminative codewords")
    s.add_argument("--bundle", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--k", type=int, default=256)
    s.add_argument("--random", action="store_true", help="uniformly random baseline")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("kmeans-fit", help="k-means codebook for VLAD")
    s.add_argument("--bundle", required=True)
    s.add_argument("--k", type=int, default=256)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--restarts", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kmeans_fit)

    s = sub.add_parser("gmm-fit", help="diagonal GMM for Fisher vectors")
    s.add_argument("--bundle", required=True)
    s.add_argument("--k", type=int, default=256)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--variance-floor", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gmm_fit)

    s = sub.add_parser("pca-fit", help="PCA projection of descriptors")
    s.add_argument("--bundle", required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--whiten", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pca_fit)

    s = sub.add_parser("encode", help="encode images into feature vectors")
    s.add_argument("--bundle", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--method", choices=METHODS, default="vsad")
    s.add_argument("--codebook", help="codebook (vsad), GMM (fv) or k-means (vlad) file")
    s.add_argument("--selected")
    s.add_argument("--pca")
    s.add_argument("--no-normalize", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("train", help="train the one-vs-all linear SVM")
    s.add_argument("--features", required=True)
    s.add_argument("--manifest", help="split list; first column holds the image ids")
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-epochs", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict classes for feature rows")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="accuracy of a model, or averaged over splits")
    s.add_argument("--features", required=True)
    s.add_argument("--model")
    s.add_argument("--manifest")
    s.add_argument("--splits", nargs="+", metavar="TRAIN.tsv:TEST.tsv")
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    for name, fn in (("run", cmd_run), ("compare", cmd_compare)):
        s = sub.add_parser(name, help=f"{name} the full pipeline from a config")
        g = s.add_mutually_exclusive_group()
        g.add_argument("--config")
        g.add_argument("--paper-defaults", action="store_true")
        g.add_argument("--benchmark", type=int, metavar="SEED",
                       help="the seeded synthetic trend benchmark")
        s.add_argument("--out", help="output directory (overrides the config)")
        if name == "run":
            s.add_argument("--method", choices=METHODS)
        else:
            s.add_argument("--methods", default=",".join(METHODS))
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (VsadError, ValueError, OSError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
