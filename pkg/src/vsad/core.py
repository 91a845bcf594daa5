"""Shared data model, bundle validation and the image-level normalization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateRow,
    InconsistentDim,
    MismatchedRows,
    NonFinite,
)

LAYOUTS = ("vsad", "fv", "vlad", "avgpool")

# probability rows whose sum falls in this window are renormalized, others rejected
RENORM_LOW, RENORM_HIGH = 0.5, 2.0
NEGATIVE_TOL = 1e-9
# rows closer to 1 than this are left untouched
ROW_SUM_TOL = 1e-12


def as_descriptors(x) -> np.ndarray:
    """Return ``x`` as a finite float64 N x D matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InconsistentDim(f"descriptor matrix must be 2-D, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise InconsistentDim("descriptor dimension must be >= 1")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("descriptor matrix contains NaN or Inf")
    return arr


def as_probabilities(p) -> np.ndarray:
    """Return ``p`` as a float64 N x K matrix, checking finiteness and sign only."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InconsistentDim(f"probability matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("probability matrix contains NaN or Inf")
    if arr.size and arr.min() < -NEGATIVE_TOL:
        raise DegenerateRow("probability matrix has negative entries")
    return arr


@dataclass(frozen=True)
class PatchManifest:
    """Maps images to half-open row ranges of a patch bundle."""

    image_ids: tuple
    patch_ranges: tuple
    labels: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "image_ids", tuple(str(i) for i in self.image_ids))
        object.__setattr__(
            self, "patch_ranges", tuple((int(a), int(b)) for a, b in self.patch_ranges)
        )
        if self.labels is not None:
            object.__setattr__(
                self,
                "labels",
                tuple(None if lab is None else int(lab) for lab in self.labels),
            )
        if len(self.image_ids) != len(self.patch_ranges):
            raise MismatchedRows("one patch range per image id is required")
        if self.labels is not None and len(self.labels) != len(self.image_ids):
            raise MismatchedRows("one label per image id is required")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError("duplicate image ids in manifest")
        prev_end = 0
        for start, end in self.patch_ranges:
            if start != prev_end or end < start:
                raise MismatchedRows(
                    f"patch ranges must be sorted, disjoint and contiguous from 0; "
                    f"got [{start}, {end}) after {prev_end}"
                )
            prev_end = end
        if self.labels is not None and any(
            lab is not None and lab < 0 for lab in self.labels
        ):
            raise ValueError("labels must be non-negative")

    def __len__(self):
        return len(self.image_ids)

    @property
    def n_patches(self) -> int:
        return self.patch_ranges[-1][1] if self.patch_ranges else 0

    @property
    def has_labels(self) -> bool:
        return self.labels is not None and all(lab is not None for lab in self.labels)

    def label_array(self) -> np.ndarray:
        if not self.has_labels:
            raise ValueError("manifest is missing labels")
        return np.asarray(self.labels, dtype=np.int64)

    def rows(self, i: int) -> slice:
        start, end = self.patch_ranges[i]
        return slice(start, end)

    @classmethod
    def from_counts(cls, image_ids, counts, labels=None) -> "PatchManifest":
        ranges, start = [], 0
        for n in counts:
            ranges.append((start, start + int(n)))
            start += int(n)
        return cls(tuple(image_ids), tuple(ranges), None if labels is None else tuple(labels))

    def subset(self, image_ids: Sequence[str]) -> "PatchManifest":
        """Manifest for a subset of images with one row per image (feature-file view)."""
        index = {iid: n for n, iid in enumerate(self.image_ids)}
        missing = [i for i in image_ids if i not in index]
        if missing:
            raise KeyError(f"unknown image ids: {missing[:5]}")
        labels = None
        if self.labels is not None:
            labels = [self.labels[index[i]] for i in image_ids]
        return PatchManifest.from_counts(image_ids, [1] * len(image_ids), labels)


@dataclass
class ValidationReport:
    n_patches: int
    dim: int
    n_classes: int
    renormalized_rows: np.ndarray
    max_row_drift: float
    prob: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return True

    @property
    def n_renormalized(self) -> int:
        return int(self.renormalized_rows.size)


def validate_bundle(desc, prob, manifest: Optional[PatchManifest] = None) -> ValidationReport:
    """Check a descriptor/probability bundle and renormalize slightly-off rows.

    Rows whose sum lies in [0.5, 2] are divided by their sum and reported in
    ``renormalized_rows``; the cleaned matrix is returned as ``report.prob``.
    """
    desc_arr = np.asarray(desc, dtype=np.float64)
    prob_arr = np.asarray(prob, dtype=np.float64)
    if desc_arr.ndim != 2 or prob_arr.ndim != 2:
        raise InconsistentDim("descriptor and probability matrices must be 2-D")
    if not np.all(np.isfinite(desc_arr)) or not np.all(np.isfinite(prob_arr)):
        raise NonFinite("bundle contains NaN or Inf")
    n = desc_arr.shape[0]
    if prob_arr.shape[0] != n:
        raise MismatchedRows(f"descriptor rows {n} != probability rows {prob_arr.shape[0]}")
    if manifest is not None and manifest.n_patches != n:
        raise MismatchedRows(f"manifest covers {manifest.n_patches} rows, bundle has {n}")

    if prob_arr.size and prob_arr.min() < -NEGATIVE_TOL:
        bad = int(np.argwhere(prob_arr < -NEGATIVE_TOL)[0, 0])
        raise DegenerateRow(f"probability row {bad} has a negative entry")
    sums = prob_arr.sum(axis=1)
    if n and prob_arr.shape[1]:
        low = np.flatnonzero((sums < RENORM_LOW) | (sums > RENORM_HIGH))
        if low.size:
            raise DegenerateRow(
                f"probability row {int(low[0])} sums to {sums[low[0]]:.6g}, "
                f"outside [{RENORM_LOW}, {RENORM_HIGH}]"
            )
    drift = np.abs(sums - 1.0) if prob_arr.shape[1] else np.zeros(n)
    renorm = np.flatnonzero(drift > ROW_SUM_TOL)
    cleaned = np.clip(prob_arr, 0.0, None)
    if renorm.size:
        cleaned = cleaned.copy()
        cleaned[renorm] /= cleaned[renorm].sum(axis=1, keepdims=True)
    return ValidationReport(
        n_patches=n,
        dim=desc_arr.shape[1],
        n_classes=prob_arr.shape[1],
        renormalized_rows=renorm,
        max_row_drift=float(drift.max()) if drift.size else 0.0,
        prob=cleaned,
    )


@dataclass(frozen=True)
class EncodedVector:
    """An image-level representation together with its block layout."""

    data: np.ndarray
    layout: str
    block_dims: Optional[tuple] = None
    normalized: bool = False

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "data", data)
        if self.block_dims is not None:
            k, d = (int(x) for x in self.block_dims)
            object.__setattr__(self, "block_dims", (k, d))
            expected = {"vsad": 2 * k * d, "fv": 2 * k * d, "vlad": k * d, "avgpool": d}
            if data.size != expected[self.layout]:
                raise InconsistentDim(
                    f"{self.layout} vector with blocks {(k, d)} must have length "
                    f"{expected[self.layout]}, got {data.size}"
                )

    def __len__(self):
        return self.data.size


def power_l2(x: np.ndarray) -> np.ndarray:
    """Signed square root followed by a global L2 normalization."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFinite("cannot normalize a vector with NaN or Inf")
    y = np.sign(x) * np.sqrt(np.abs(x))
    norm = np.linalg.norm(y)
    if norm == 0.0:
        return np.zeros_like(y)
    return y / norm


def normalize(v: EncodedVector) -> EncodedVector:
    return replace(v, data=power_l2(v.data), normalized=True)


def concat_blocks(blocks, layout: str = "vsad") -> EncodedVector:
    """Interleave per-codeword (first-order, second-order) pairs as S1|G1|...|SK|GK."""
    blocks = list(blocks)
    if not blocks:
        raise InconsistentDim("cannot concatenate an empty block list")
    parts = []
    dim = None
    for s, g in blocks:
        s = np.asarray(s, dtype=np.float64).reshape(-1)
        g = np.asarray(g, dtype=np.float64).reshape(-1)
        if dim is None:
            dim = s.size
        if s.size != dim or g.size != dim:
            raise InconsistentDim("all blocks must share the same dimension")
        parts.extend((s, g))
    return EncodedVector(np.concatenate(parts), layout, (len(blocks), dim))


def split_blocks(v: EncodedVector):
    """Inverse of :func:`concat_blocks`: a list of (S_k, G_k) pairs."""
    if v.layout not in ("vsad", "fv") or v.block_dims is None:
        raise InconsistentDim("vector has no (S, G) block layout")
    k, d = v.block_dims
    pairs = v.data.reshape(k, 2, d)
    return [(pairs[i, 0].copy(), pairs[i, 1].copy()) for i in range(k)]


def canonical_order(*arrays) -> np.ndarray:
    """Row permutation that sorts rows by their raw float64 bit patterns.

    Summing in this order makes accumulations independent of how the caller
    happened to order the rows.
    """
    cols = []
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        if a.ndim == 1:
            a = a[:, None]
        cols.append(a.view(np.uint64))
    keys = np.hstack(cols)
    if keys.shape[0] <= 1:
        return np.arange(keys.shape[0])
    return np.lexsort(keys.T[::-1])
