"""VSAD encoding: probability-weighted first- and second-order residual statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codebook import SemanticCodebook, restrict
from .core import (
    EncodedVector,
    PatchManifest,
    as_descriptors,
    as_probabilities,
    canonical_order,
    normalize as normalize_vector,
)
from .errors import DimMismatch, EmptyImage, MismatchedRows


def aggregate(desc: np.ndarray, weights: np.ndarray, prior: np.ndarray, mean: np.ndarray,
              sigma: np.ndarray, active: Optional[np.ndarray] = None):
    """Shared FV/VSAD kernel.

    For each codeword k, with ``z = (f_t - mean_k) / sigma_k`` elementwise::

        S_k = sum_t w_tk * z / sqrt(prior_k)
        G_k = sum_t w_tk * (z**2 - 1) / sqrt(prior_k)

    Inactive codewords give zero blocks.  Returns two K x D arrays.
    """
    n_codes, dim = mean.shape
    if weights.shape != (desc.shape[0], n_codes):
        raise DimMismatch(
            f"weights shape {weights.shape} does not match {desc.shape[0]} patches "
            f"x {n_codes} codewords"
        )
    if desc.shape[1] != dim:
        raise DimMismatch(f"descriptor dim {desc.shape[1]} != codebook dim {dim}")
    order = canonical_order(desc, weights)
    f, w = desc[order], weights[order]
    first = np.zeros((n_codes, dim))
    second = np.zeros((n_codes, dim))
    for k in range(n_codes):
        if active is not None and not active[k]:
            continue
        scale = 1.0 / np.sqrt(prior[k])
        z = (f - mean[k]) / sigma[k]
        first[k] = np.einsum("t,td->d", w[:, k], z) * scale
        second[k] = np.einsum("t,td->d", w[:, k], z * z - 1.0) * scale
    return first, second


def interleave(first: np.ndarray, second: np.ndarray, layout: str) -> EncodedVector:
    k, d = first.shape
    data = np.stack([first, second], axis=1).reshape(-1)
    return EncodedVector(data, layout, (k, d))


@dataclass(frozen=True)
class VsadConfig:
    codebook: SemanticCodebook
    selected: Optional[tuple] = None
    normalize: bool = True
    reuse_full_stats: bool = False

    def effective_codebook(self) -> SemanticCodebook:
        if self.selected is None:
            return self.codebook
        return restrict(self.codebook, self.selected, self.reuse_full_stats)


def _columns_for(codebook: SemanticCodebook, prob: np.ndarray) -> np.ndarray:
    if prob.shape[1] == codebook.K:
        return prob
    if codebook.selected_ids is not None and prob.shape[1] > max(codebook.selected_ids):
        return prob[:, list(codebook.selected_ids)]
    raise DimMismatch(
        f"probability rows have {prob.shape[1]} classes, codebook has {codebook.K}"
    )


def encode_vsad(desc, prob, cfg) -> EncodedVector:
    """Encode one image's patches; ``cfg`` is a VsadConfig or a bare codebook."""
    if isinstance(cfg, SemanticCodebook):
        cfg = VsadConfig(cfg)
    f = as_descriptors(desc)
    p = as_probabilities(prob)
    if f.shape[0] != p.shape[0]:
        raise MismatchedRows(f"{f.shape[0]} descriptors but {p.shape[0]} probability rows")
    if f.shape[0] == 0:
        raise EmptyImage("cannot encode an image without patches")
    cb = cfg.effective_codebook()
    if f.shape[1] != cb.D:
        raise DimMismatch(f"descriptor dim {f.shape[1]} != codebook dim {cb.D}")
    p = _columns_for(cb, p)
    first, second = aggregate(f, p, cb.pi, cb.mu, cb.sigma, cb.active)
    vec = interleave(first, second, "vsad")
    return normalize_vector(vec) if cfg.normalize else vec


def encode_batch(desc, prob, manifest: PatchManifest, cfg, encoder=None):
    """Encode every image of ``manifest``; returns ``[(image_id, EncodedVector)]``.

    ``encoder`` defaults to :func:`encode_vsad`; any callable taking
    ``(desc_rows, prob_rows, cfg)`` can be supplied.
    """
    encoder = encoder or encode_vsad
    desc = np.asarray(desc, dtype=np.float64)
    prob = None if prob is None else np.asarray(prob, dtype=np.float64)
    if manifest.n_patches != desc.shape[0]:
        raise MismatchedRows(
            f"manifest covers {manifest.n_patches} rows, bundle has {desc.shape[0]}"
        )
    out = []
    for i, iid in enumerate(manifest.image_ids):
        rows = manifest.rows(i)
        if rows.stop == rows.start:
            raise EmptyImage(f"image {iid!r} has no patches")
        out.append((iid, encoder(desc[rows], None if prob is None else prob[rows], cfg)))
    return out
