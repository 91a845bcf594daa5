"""Scene/object response aggregation and discriminative codeword selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PatchManifest, as_probabilities
from .errors import KTooLarge, MismatchedRows, MissingLabels


@dataclass(frozen=True)
class ResponseTable:
    per_image: np.ndarray      # I x V
    per_category: np.ndarray   # C x V
    global_: np.ndarray        # V

    @property
    def n_classes(self) -> int:
        return self.global_.size


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple
    T_final: int
    o_data: tuple
    o_category: tuple


def aggregate_responses(prob, manifest: PatchManifest, n_categories=None) -> ResponseTable:
    """Sum patch probabilities into image, category and dataset responses."""
    p = as_probabilities(prob)
    if manifest.n_patches != p.shape[0]:
        raise MismatchedRows(f"manifest covers {manifest.n_patches} rows, bundle has {p.shape[0]}")
    if not manifest.has_labels:
        raise MissingLabels("every image needs a category label for selection")
    labels = manifest.label_array()
    n_cat = int(labels.max()) + 1 if n_categories is None else int(n_categories)
    per_image = np.zeros((len(manifest), p.shape[1]))
    for i in range(len(manifest)):
        per_image[i] = p[manifest.rows(i)].sum(axis=0)
    per_category = np.zeros((n_cat, p.shape[1]))
    for i, c in enumerate(labels):
        per_category[c] += per_image[i]
    return ResponseTable(per_image, per_category, per_category.sum(axis=0))


def rank_desc(values) -> np.ndarray:
    """Indices by descending value, ties broken by ascending index."""
    values = np.asarray(values, dtype=np.float64)
    return np.lexsort((np.arange(values.size), -values))


def select_codewords(table: ResponseTable, K: int) -> SelectionResult:
    """Pick K classes that rank high both dataset-wide and within some category.

    The dataset-level candidates are the top 2K classes by total response.
    The per-category depth T grows from 1 until the union of every category's
    top-T classes shares at least K members with those candidates; a surplus
    is trimmed by dataset response.
    """
    V = table.n_classes
    if K < 1 or 2 * K > V:
        raise KTooLarge(f"need 1 <= K and 2K <= {V}, got K={K}")
    data_rank = rank_desc(table.global_)
    o_data = data_rank[: 2 * K]
    in_data = np.zeros(V, dtype=bool)
    in_data[o_data] = True
    cat_ranks = [rank_desc(row) for row in table.per_category]

    in_cat = np.zeros(V, dtype=bool)
    for T in range(1, V + 1):
        for ranks in cat_ranks:
            in_cat[ranks[T - 1]] = True
        if np.count_nonzero(in_cat & in_data) >= K:
            break
    chosen = in_cat & in_data
    if np.count_nonzero(chosen) > K:
        keep = [c for c in data_rank if chosen[c]][:K]
        chosen = np.zeros(V, dtype=bool)
        chosen[keep] = True
    return SelectionResult(
        selected=tuple(int(c) for c in np.flatnonzero(chosen)),
        T_final=T,
        o_data=tuple(int(c) for c in o_data),
        o_category=tuple(int(c) for c in np.flatnonzero(in_cat)),
    )


def random_selection(n_classes: int, K: int, seed: int, active=None) -> tuple:
    """Uniformly random K classes (baseline for the selection procedure)."""
    pool = np.arange(n_classes) if active is None else np.flatnonzero(active)
    if K < 1 or K > pool.size:
        raise KTooLarge(f"cannot draw {K} of {pool.size} classes")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(7,))))
    return tuple(int(c) for c in np.sort(rng.choice(pool, size=K, replace=False)))
