"""Semantic codebook: probability-weighted prior, mean and deviation per codeword."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import as_descriptors, as_probabilities, canonical_order
from .errors import EmptyPopulation, InactiveSelected, MismatchedRows

DEFAULT_VARIANCE_FLOOR = 1e-8
DEFAULT_ACTIVATION_THRESHOLD = 1e-8


@dataclass(frozen=True)
class SemanticCodebook:
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    mass: np.ndarray
    active: np.ndarray
    total_mass: float
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    provenance: str = ""
    selected_ids: Optional[tuple] = None

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def D(self) -> int:
        return self.mu.shape[1]


def weighted_moments(desc: np.ndarray, weights: np.ndarray):
    """Per-column mass, weighted mean and weighted per-dimension variance.

    Rows are visited in :func:`canonical_order` and summed with einsum's own
    loops (no BLAS), so results do not depend on row order or thread count.
    ``mean``/``var`` are NaN-free but meaningless where ``mass`` is zero.
    """
    order = canonical_order(desc, weights)
    f, w = desc[order], weights[order]
    mass = np.einsum("nk->k", w)
    wf = np.einsum("nk,nd->kd", w, f)
    safe = np.where(mass > 0, mass, 1.0)[:, None]
    mean = wf / safe
    var = np.empty_like(mean)
    for k in range(w.shape[1]):
        r = f - mean[k]
        var[k] = np.einsum("n,nd->d", w[:, k], r * r) / safe[k]
    return mass, mean, var


def build_codebook(desc, prob, variance_floor: float = DEFAULT_VARIANCE_FLOOR,
                   activation_threshold: float = DEFAULT_ACTIVATION_THRESHOLD,
                   provenance: str = "") -> SemanticCodebook:
    """Codebook from a patch population and its semantic probabilities.

    ``mass_k = sum_i p_ik``, ``pi_k = mass_k / N``, ``mu_k`` the p-weighted mean
    and ``sigma_k`` the square root of the diagonal of the p-weighted
    covariance, floored at ``variance_floor``.  Codewords whose mass is below
    ``activation_threshold * N`` are kept but marked inactive with zero mean.
    """
    f = as_descriptors(desc)
    p = as_probabilities(prob)
    if f.shape[0] != p.shape[0]:
        raise MismatchedRows(f"{f.shape[0]} descriptors but {p.shape[0]} probability rows")
    n = f.shape[0]
    if n == 0:
        raise EmptyPopulation("cannot build a codebook from zero patches")
    mass, mean, var = weighted_moments(f, p)
    active = mass >= activation_threshold * n
    var = np.maximum(var, variance_floor)
    mean[~active] = 0.0
    var[~active] = variance_floor
    return SemanticCodebook(
        pi=mass / n,
        mu=mean,
        sigma=np.sqrt(var),
        mass=mass,
        active=active,
        total_mass=float(n),
        variance_floor=float(variance_floor),
        provenance=provenance,
    )


def restrict(codebook: SemanticCodebook, selected, reuse_full_stats: bool = False
             ) -> SemanticCodebook:
    """Codebook over the ``selected`` columns only (ascending original order).

    Mass, mean and deviation of a codeword depend on its own probability
    column alone, so restricting the columns leaves them unchanged; only the
    priors are renormalized to sum to one over the subset.  With
    ``reuse_full_stats`` the priors keep their full-codebook values.
    """
    sel = np.unique(np.asarray(selected, dtype=np.int64))
    if sel.size == 0:
        raise InactiveSelected("selection is empty")
    if sel.min() < 0 or sel.max() >= codebook.K:
        raise InactiveSelected(f"selected index out of range [0, {codebook.K})")
    inactive = sel[~codebook.active[sel]]
    if inactive.size:
        raise InactiveSelected(f"codewords {inactive.tolist()} are inactive")
    mass = codebook.mass[sel]
    pi = codebook.pi[sel] if reuse_full_stats else mass / mass.sum()
    return replace(
        codebook,
        pi=pi,
        mu=codebook.mu[sel],
        sigma=codebook.sigma[sel],
        mass=mass,
        active=codebook.active[sel],
        total_mass=codebook.total_mass if reuse_full_stats else float(mass.sum()),
        selected_ids=tuple(int(s) for s in sel),
    )
