"""Positive-sample selection and the false-negative-aware contrastive loss.

Positives are the strongest metapath neighbors of each anchor (plus the
anchor itself); every other node is a negative. The tailored loss scales
each negative's similarity by (1 - mask entry), so pairs the affinity
matrix flags as likely same-class contribute almost nothing, which makes
the loss a provably tighter bound than the unmasked variant whenever
similarities are nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError
from .hetgraph import HeteroGraph, MetapathSpec, total_strength
from .selfexpr import CLOSED_FORM, NETWORK

BOUND_SLACK = 1e-10


@dataclass(frozen=True)
class ContrastConfig:
    """Contrastive loss settings."""

    tau: float = 0.7
    k_pos: int = 8
    clamp_sim_nonneg: bool = False
    min_strength: Optional[int] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValidationError("tau must be positive")
        if self.k_pos < 1:
            raise ValidationError("k_pos must be >= 1")
        if self.min_strength is not None and self.min_strength < 1:
            raise ValidationError("min_strength must be >= 1 when set")


@dataclass(frozen=True)
class PositiveSets:
    """Per-node positive index sets and the equivalent dense 0/1 mask."""

    sets: tuple[np.ndarray, ...]
    mask: np.ndarray

    @property
    def n(self) -> int:
        return self.mask.shape[0]

    @classmethod
    def from_sets(cls, sets: Sequence[np.ndarray], n: int) -> "PositiveSets":
        mask = np.zeros((n, n), dtype=np.float64)
        frozen = []
        for i, members in enumerate(sets):
            members = np.unique(np.asarray(members, dtype=np.int64))
            if i not in members:
                raise ValidationError(f"positive set of node {i} must contain the node itself")
            mask[i, members] = 1.0
            frozen.append(members)
        return cls(tuple(frozen), mask)


def select_positives(graph: HeteroGraph, specs: Sequence[MetapathSpec],
                     k_pos: int, min_strength: Optional[int] = None) -> PositiveSets:
    """Pick each node's strongest metapath neighbors as positives.

    Nodes are ranked by total connection strength summed over all
    metapaths; the top ``k_pos`` with strictly positive strength join the
    anchor's set (ties broken by ascending index). Nodes with fewer
    connected peers take all of them; isolated nodes keep only themselves.
    """
    if k_pos < 1:
        raise ValidationError("k_pos must be >= 1")
    total = total_strength(graph, specs).tocsr()
    n = graph.n_targets
    sets = []
    indptr, indices, data = total.indptr, total.indices, total.data
    for i in range(n):
        js = indices[indptr[i]:indptr[i + 1]]
        strengths = data[indptr[i]:indptr[i + 1]]
        if min_strength is not None:
            keep = strengths >= min_strength
            js, strengths = js[keep], strengths[keep]
        if js.size:
            order = np.lexsort((js, -strengths))
            chosen = js[order[:k_pos]]
        else:
            chosen = np.empty(0, dtype=np.int64)
        sets.append(np.append(chosen, i))
    return PositiveSets.from_sets(sets, n)


def _pair_loss_terms(sim: Tensor, fn_mask_matrix: np.ndarray,
                     pos_mask: np.ndarray, tau: float) -> Tensor:
    """Sum over anchors of -log(pos / (pos + neg)) for one direction."""
    neg_mask = 1.0 - pos_mask
    pos_terms = ad.mul(ad.exp(ad.scale(sim, 1.0 / tau)), Tensor(pos_mask))
    damped = ad.mul(sim, Tensor(1.0 - fn_mask_matrix))
    neg_terms = ad.mul(ad.exp(ad.scale(damped, 1.0 / tau)), Tensor(neg_mask))
    pos = ad.rowsum(pos_terms)
    neg = ad.rowsum(neg_terms)
    return ad.reduce_sum(ad.sub(ad.log(ad.add(pos, neg)), ad.log(pos)))


def contrastive_loss_s(view_u: Tensor, view_v: Tensor, fn_mask_matrix: np.ndarray,
                       positives: PositiveSets, tau: float,
                       clamp_sim_nonneg: bool = False) -> Tensor:
    """False-negative-aware contrastive loss between two views.

    Cosine similarities enter positive terms at full strength; negative
    terms are damped entrywise by (1 - mask). Both anchor directions are
    averaged. ``clamp_sim_nonneg`` floors similarities at zero, the regime
    in which the masked loss is guaranteed to lower-bound the plain one.
    """
    view_u, view_v = ad.as_tensor(view_u), ad.as_tensor(view_v)
    n = view_u.shape[0]
    if view_v.shape[0] != n or positives.n != n:
        raise ValidationError("views and positive sets disagree on node count")
    fn_mask_matrix = np.asarray(fn_mask_matrix, dtype=np.float64)
    if fn_mask_matrix.shape != (n, n):
        raise ValidationError("mask must be N x N")
    sim = ad.cosine_similarity_matrix(view_u, view_v)
    if clamp_sim_nonneg:
        sim = ad.relu(sim)
    loss_u = _pair_loss_terms(sim, fn_mask_matrix, positives.mask, tau)
    loss_v = _pair_loss_terms(ad.transpose(sim), fn_mask_matrix, positives.mask, tau)
    return ad.scale(ad.add(loss_u, loss_v), 1.0 / (2.0 * n))


def baseline_loss(view_u: Tensor, view_v: Tensor, positives: PositiveSets,
                  tau: float, clamp_sim_nonneg: bool = False) -> Tensor:
    """Plain contrastive loss: every negative at full similarity."""
    n = ad.as_tensor(view_u).shape[0]
    return contrastive_loss_s(view_u, view_v, np.zeros((n, n)), positives, tau,
                              clamp_sim_nonneg=clamp_sim_nonneg)


def pretrain_loss(view1: Tensor, view2: Tensor, self_view: Optional[Tensor],
                  fn_mask_matrix: np.ndarray, positives: PositiveSets, tau: float,
                  variant: str, self_expr_loss: Optional[Tensor] = None,
                  mu: float = 0.0, clamp_sim_nonneg: bool = False) -> Tensor:
    """Full pretraining objective.

    Both variants contrast the two augmented views and, when a purified
    self-expressive view is supplied, also contrast the first view against
    it. The network variant additionally adds mu times the self-expression
    loss, which trains the coefficient MLPs jointly.
    """
    if variant not in (NETWORK, CLOSED_FORM):
        raise ValidationError(f"unknown variant {variant!r}")
    total = contrastive_loss_s(view1, view2, fn_mask_matrix, positives, tau,
                               clamp_sim_nonneg=clamp_sim_nonneg)
    if self_view is not None:
        total = ad.add(total, contrastive_loss_s(
            view1, self_view, fn_mask_matrix, positives, tau,
            clamp_sim_nonneg=clamp_sim_nonneg))
    if variant == NETWORK:
        if self_expr_loss is None:
            raise ValidationError("network variant requires the self-expression loss")
        total = ad.add(total, ad.scale(self_expr_loss, mu))
    return total


def loss_bound_check(view_u, view_v, fn_mask_matrix: np.ndarray,
                   positives: PositiveSets, tau: float) -> tuple[float, float, bool]:
    """Evaluate both losses and whether the masked one is no larger.

    Returns (plain loss, masked loss, holds) where holds allows 1e-10
    slack. Evaluated off-tape; inputs are treated as constants.
    """
    u = Tensor(np.asarray(view_u, dtype=np.float64)
               if not isinstance(view_u, Tensor) else view_u.data)
    v = Tensor(np.asarray(view_v, dtype=np.float64)
               if not isinstance(view_v, Tensor) else view_v.data)
    plain = baseline_loss(u, v, positives, tau).item()
    masked = contrastive_loss_s(u, v, fn_mask_matrix, positives, tau).item()
    return plain, masked, masked <= plain + BOUND_SLACK
