"""One-vs-all linear SVM (hinge loss, dual coordinate descent) and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EncodedVector, canonical_order
from .errors import DimMismatch, EmptyFeatures, SingleClass


@dataclass(frozen=True)
class LinearOvaModel:
    weights: np.ndarray          # C x F
    biases: np.ndarray           # C
    c_param: float = 1.0
    training_meta: dict = field(default_factory=dict, repr=False)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray
    mean_class_accuracy: float

    def as_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "mean_class_accuracy": self.mean_class_accuracy,
            "per_class_accuracy": [float(a) for a in self.per_class_accuracy],
            "confusion": self.confusion.tolist(),
        }


def as_feature_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        x = np.asarray(features, dtype=np.float64)
    else:
        rows = [f.data if isinstance(f, EncodedVector) else np.asarray(f, dtype=np.float64)
                for f in features]
        if not rows:
            raise EmptyFeatures("no feature vectors given")
        x = np.vstack(rows)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyFeatures("features must be a non-empty 2-D matrix")
    return x


def _binary_dcd(x, y, C, tol, max_epochs, rng):
    """Dual coordinate descent for  min 0.5|w|^2 + C sum_i max(0, 1 - y_i w.x_i).

    ``x`` already carries the constant bias column.  Returns ``w`` and the
    per-epoch trace of (dual objective in minimization form, primal objective);
    the dual column never increases.
    """
    n = x.shape[0]
    alpha = np.zeros(n)
    w = np.zeros(x.shape[1])
    qii = np.einsum("nf,nf->n", x, x)
    trace = []
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            if qii[i] == 0.0:
                continue
            xi = x[i]
            g = y[i] * xi.dot(w) - 1.0
            a = alpha[i]
            if (a == 0.0 and g >= 0.0) or (a == C and g <= 0.0):
                continue
            new = min(max(a - g / qii[i], 0.0), C)
            if new != a:
                w += (new - a) * y[i] * xi
                alpha[i] = new
        ww = w.dot(w)
        dual = 0.5 * ww - alpha.sum()
        primal = 0.5 * ww + C * np.maximum(0.0, 1.0 - y * (x @ w)).sum()
        trace.append((dual, primal))
        if primal + dual <= tol * abs(primal):
            break
    return w, trace


def svm_train(features, labels, C: float = 1.0, tol: float = 1e-6, max_epochs: int = 1000,
              seed: int = 0, bias_scale: float = 1.0) -> LinearOvaModel:
    """Train one class-vs-rest hinge-loss SVM per class.

    The bias is learned as the weight of a constant feature ``bias_scale`` and
    is therefore regularized like every other weight.  Training examples are
    first put in a content-defined order, then visited in a seeded random
    permutation each epoch, so the model does not depend on input order.
    Stops when the relative duality gap is at most ``tol``.
    """
    x = as_feature_matrix(features)
    y_all = np.asarray(labels, dtype=np.int64)
    if y_all.shape != (x.shape[0],):
        raise DimMismatch(f"{x.shape[0]} feature rows but {y_all.size} labels")
    classes = np.unique(y_all)
    if classes.size < 2:
        raise SingleClass("need at least two classes to train")
    if classes.min() < 0:
        raise ValueError("labels must be non-negative")
    n_classes = int(classes.max()) + 1
    order = canonical_order(x, y_all.astype(np.float64))
    x, y_all = x[order], y_all[order]
    xa = np.hstack([x, np.full((x.shape[0], 1), float(bias_scale))])

    weights = np.zeros((n_classes, x.shape[1]))
    biases = np.zeros(n_classes)
    traces = {}
    for c in range(n_classes):
        y = np.where(y_all == c, 1.0, -1.0)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(c,))))
        w, trace = _binary_dcd(xa, y, float(C), tol, max_epochs, rng)
        weights[c] = w[:-1]
        biases[c] = w[-1] * bias_scale
        traces[c] = trace
    meta = {
        "seed": int(seed),
        "tol": tol,
        "max_epochs": max_epochs,
        "epochs": [len(traces[c]) for c in range(n_classes)],
        "dual_objective": [[t[0] for t in traces[c]] for c in range(n_classes)],
        "primal_objective": [[t[1] for t in traces[c]] for c in range(n_classes)],
    }
    return LinearOvaModel(weights, biases, float(C), meta)


def decision_scores(model: LinearOvaModel, features) -> np.ndarray:
    x = as_feature_matrix(features)
    if x.shape[1] != model.n_features:
        raise DimMismatch(f"feature dim {x.shape[1]} != model dim {model.n_features}")
    return x @ model.weights.T + model.biases


def predict(model: LinearOvaModel, feature):
    """Class with the highest one-vs-all score (lowest index on ties) and all scores."""
    x = feature.data if isinstance(feature, EncodedVector) else np.asarray(feature, dtype=np.float64)
    scores = decision_scores(model, x.reshape(1, -1))[0]
    return int(np.argmax(scores)), scores


def predict_batch(model: LinearOvaModel, features) -> np.ndarray:
    return decision_scores(model, features).argmax(axis=1)


def evaluate(model: LinearOvaModel, features, labels) -> EvalReport:
    y = np.asarray(labels, dtype=np.int64)
    pred = predict_batch(model, features)
    if pred.size != y.size:
        raise DimMismatch(f"{pred.size} feature rows but {y.size} labels")
    return report_from_predictions(y, pred, max(model.n_classes, int(y.max()) + 1))


def report_from_predictions(y_true, y_pred, n_classes: int) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    present = support > 0
    return EvalReport(
        overall_accuracy=float(np.trace(confusion) / max(y_true.size, 1)),
        per_class_accuracy=per_class,
        confusion=confusion,
        mean_class_accuracy=float(per_class[present].mean()) if present.any() else float("nan"),
    )


def average_reports(reports) -> dict:
    """Mean and standard deviation of accuracy across splits."""
    acc = np.array([r.overall_accuracy for r in reports])
    mca = np.array([r.mean_class_accuracy for r in reports])
    return {
        "splits": len(reports),
        "mean_accuracy": float(acc.mean()),
        "std_accuracy": float(acc.std()),
        "mean_class_accuracy": float(mca.mean()),
    }
