"""Multi-view self-expressive matrix: solvers, post-processing, and the
derived false-negative mask and purified view.

Each node is expressed as a linear combination of the others in every
metapath view; the consensus coefficient matrix is an affinity estimate
used two ways downstream: entries above a high percentile flag likely
false negatives in the contrastive loss, and a sparsified row-normalized
copy synthesizes an extra homophilous view of the features.

Two solvers are provided. The network solver parameterizes coefficients
with per-view MLPs plus a learnable soft threshold and is trained jointly
with the encoder. The closed-form solver minimizes the ridge-regularized
objective exactly; a low-rank identity (the concatenated embeddings have
rank at most M*d << N) reduces the N x N inverse to an Md x Md solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import xavier_normal
from .errors import NumericalError, ValidationError

NETWORK = "network"
CLOSED_FORM = "closed_form"
SOLVERS = (NETWORK, CLOSED_FORM)


@dataclass(frozen=True)
class SelfExprConfig:
    """Settings shared by both solvers and the derived matrices."""

    solver: str = CLOSED_FORM
    alpha: float = 1.0
    lam1: float = 0.1
    lam2: float = 0.1
    eta: float = 0.9          # elastic-net balance between L1 and L2
    mu: float = 0.5           # weight of the self-expression loss (network solver)
    eps1: float = 0.9         # percentile level for the false-negative mask
    eps2: float = 0.9         # percentile level for purification
    delta: int = 1            # strength-indicator threshold
    k_sim: int = 10           # top-k attribute-similarity neighbors
    percentile_scope: str = "global"   # "global" or "row"
    purify_keep_high: bool = True      # False flips the comparison
    recompute_stride: int = 1          # epochs between closed-form solves
    hidden_dim: Optional[int] = None   # network solver MLP width (default d)
    phi_init: float = 0.1

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValidationError(f"unknown solver {self.solver!r}")
        if min(self.alpha, self.lam1, self.lam2) < 0:
            raise ValidationError("regularization weights must be nonnegative")
        if self.alpha + self.lam1 + self.lam2 <= 0:
            raise ValidationError("alpha + lam1 + lam2 must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError("eta must be in [0, 1]")
        if self.mu < 0:
            raise ValidationError("mu must be nonnegative")
        for name, eps in (("eps1", self.eps1), ("eps2", self.eps2)):
            if not 0.0 <= eps <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.percentile_scope not in ("global", "row"):
            raise ValidationError("percentile_scope must be 'global' or 'row'")
        if self.delta < 1 or self.k_sim < 1 or self.recompute_stride < 1:
            raise ValidationError("delta, k_sim and recompute_stride must be >= 1")


@dataclass(frozen=True)
class SelfExpressiveMatrix:
    """Raw solver output and everything derived from it."""

    raw: np.ndarray
    processed: np.ndarray
    fn_mask: np.ndarray
    purified: np.ndarray


def solve_closed_form(per_metapath: Sequence[np.ndarray], beta: np.ndarray,
                      strength_indicator: np.ndarray, topk_similarity: np.ndarray,
                      config: SelfExprConfig) -> np.ndarray:
    """Exact minimizer of the ridge self-expression objective.

    The per-view embeddings are concatenated with sqrt(beta) weights into
    H (N x Md); the minimizer of
    sum_m beta_m ||H_m - S H_m||^2 + alpha ||S||^2 + lam1 ||S - P||^2 + lam2 ||S - K||^2
    is (H H^T + g I)^{-1} (H H^T + lam1 P + lam2 K) with g = alpha+lam1+lam2.
    The N x N inverse is rewritten through the low-rank identity as
    g^{-1} [M - H (g I_Md + H^T H)^{-1} H^T M], costing O(N^2 Md + (Md)^3).
    """
    h_cat = _concat_weighted(per_metapath, beta)
    gamma = config.alpha + config.lam1 + config.lam2
    gram = h_cat @ h_cat.T
    target = gram + config.lam1 * strength_indicator + config.lam2 * topk_similarity
    inner = gamma * np.eye(h_cat.shape[1]) + h_cat.T @ h_cat
    try:
        correction = h_cat @ np.linalg.solve(inner, h_cat.T @ target)
    except np.linalg.LinAlgError as err:  # unreachable for gamma > 0
        raise NumericalError(f"inner {h_cat.shape[1]}x{h_cat.shape[1]} system singular") from err
    s = (target - correction) / gamma
    if not np.isfinite(s).all():
        raise NumericalError("closed-form solver produced non-finite coefficients")
    return s


def solve_closed_form_naive(per_metapath: Sequence[np.ndarray], beta: np.ndarray,
                            strength_indicator: np.ndarray, topk_similarity: np.ndarray,
                            config: SelfExprConfig) -> np.ndarray:
    """Reference solver taking the N x N inverse directly (test oracle)."""
    h_cat = _concat_weighted(per_metapath, beta)
    gamma = config.alpha + config.lam1 + config.lam2
    gram = h_cat @ h_cat.T
    target = gram + config.lam1 * strength_indicator + config.lam2 * topk_similarity
    n = gram.shape[0]
    return np.linalg.solve(gram + gamma * np.eye(n), target)


def _concat_weighted(per_metapath: Sequence[np.ndarray], beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if len(per_metapath) != beta.shape[0]:
        raise ValidationError("one attention weight per view is required")
    blocks = [np.sqrt(b) * np.asarray(h, dtype=np.float64)
              for b, h in zip(beta, per_metapath)]
    return np.concatenate(blocks, axis=1)


@dataclass
class SelfExprNetworkParams:
    """Per-view coefficient MLPs plus the shared learnable soft threshold.

    The threshold is kept nonnegative by storing its softplus preimage.
    The parameter count does not depend on the number of nodes.
    """

    layers: list[tuple[Tensor, Tensor, Tensor, Tensor]]  # (W1, b1, W2, b2) per view
    phi_raw: Tensor

    @classmethod
    def init(cls, n_views: int, dim: int, rng: np.random.Generator,
             hidden_dim: Optional[int] = None,
             phi_init: float = 0.1) -> "SelfExprNetworkParams":
        hidden = hidden_dim or dim
        layers = []
        for _ in range(n_views):
            layers.append((
                Tensor(xavier_normal(rng, dim, hidden), requires_grad=True),
                Tensor(np.zeros(hidden), requires_grad=True),
                Tensor(xavier_normal(rng, hidden, dim), requires_grad=True),
                Tensor(np.zeros(dim), requires_grad=True),
            ))
        if phi_init <= 0:
            raise ValidationError("phi_init must be positive")
        raw = float(np.log(np.expm1(phi_init)))
        return cls(layers=layers, phi_raw=Tensor(np.asarray(raw), requires_grad=True))

    def phi(self) -> Tensor:
        return ad.softplus(self.phi_raw)

    def parameters(self) -> list[Tensor]:
        out = []
        for w1, b1, w2, b2 in self.layers:
            out.extend([w1, b1, w2, b2])
        out.append(self.phi_raw)
        return out

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def soft_threshold(values: Tensor, phi: Tensor) -> Tensor:
    """sgn(t) * max(0, |t| - phi), built from differentiable pieces."""
    return ad.sub(ad.relu(ad.sub(values, phi)), ad.relu(ad.sub(ad.scale(values, -1.0), phi)))


def network_coefficients(per_metapath: Sequence[Tensor],
                         params: SelfExprNetworkParams,
                         beta: np.ndarray) -> tuple[list[Tensor], Tensor]:
    """Per-view coefficient matrices and their attention-weighted consensus.

    Each view's embeddings pass through that view's MLP; coefficients are
    soft-thresholded inner products scaled by 1/d_z on the way out (inner
    products of tanh outputs grow with the width; the output scale keeps
    coefficients in [-1, 1] and commensurate with the binary priors), with
    the diagonal forced to zero. The attention weights are treated as
    constants here.
    """
    if len(per_metapath) != len(params.layers):
        raise ValidationError("one MLP per view is required")
    beta = np.asarray(beta, dtype=np.float64)
    phi = params.phi()
    n = per_metapath[0].shape[0]
    off_diagonal = Tensor(1.0 - np.eye(n))
    views = []
    for h, (w1, b1, w2, b2) in zip(per_metapath, params.layers):
        hidden = ad.relu(ad.add(ad.matmul(h, w1), b1))
        z = ad.tanh(ad.add(ad.matmul(hidden, w2), b2))
        coeff = ad.scale(soft_threshold(ad.matmul(z, ad.transpose(z)), phi),
                         1.0 / z.shape[1])
        views.append(ad.mul(coeff, off_diagonal))
    consensus = None
    for b, s_view in zip(beta, views):
        term = ad.scale(s_view, float(b))
        consensus = term if consensus is None else ad.add(consensus, term)
    return views, consensus


def self_expression_loss(per_metapath: Sequence[Tensor], view_coeffs: Sequence[Tensor],
                         consensus: Tensor, strength_indicator: np.ndarray,
                         topk_similarity: np.ndarray, beta: np.ndarray,
                         config: SelfExprConfig) -> Tensor:
    """Reconstruction plus elastic net plus prior-matching regularizers.

    sum_m beta_m (||H_m - S_m H_m||^2 + alpha (eta |S_m| + (1-eta)/2 S_m^2))
    + lam1 ||S - P||^2 + lam2 ||S - K||^2, all squared-Frobenius.
    """
    if len(per_metapath) != len(view_coeffs):
        raise ValidationError("need one coefficient matrix per view")
    beta = np.asarray(beta, dtype=np.float64)
    total = None
    for b, h, s_view in zip(beta, per_metapath, view_coeffs):
        residual = ad.sub(h, ad.matmul(s_view, h))
        term = ad.sum_squares(residual)
        if config.alpha > 0:
            penalty = ad.add(
                ad.scale(ad.reduce_sum(ad.absval(s_view)), config.eta),
                ad.scale(ad.sum_squares(s_view), (1.0 - config.eta) / 2.0),
            )
            term = ad.add(term, ad.scale(penalty, config.alpha))
        term = ad.scale(term, float(b))
        total = term if total is None else ad.add(total, term)
    if config.lam1 > 0:
        total = ad.add(total, ad.scale(
            ad.sum_squares(ad.sub(consensus, Tensor(strength_indicator))), config.lam1))
    if config.lam2 > 0:
        total = ad.add(total, ad.scale(
            ad.sum_squares(ad.sub(consensus, Tensor(topk_similarity))), config.lam2))
    return total


def postprocess(raw: np.ndarray) -> np.ndarray:
    """Row min-max normalization followed by symmetrization.

    The diagonal is structurally zero and excluded from each row's min/max;
    a constant row maps to zeros rather than fabricating uniform affinity.
    The result is symmetric with entries in [0, 1] and a zero diagonal.
    """
    s = np.array(raw, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError("expected a square coefficient matrix")
    n = s.shape[0]
    if n < 2:
        return np.zeros_like(s)
    np.fill_diagonal(s, np.nan)
    row_min = np.nanmin(s, axis=1, keepdims=True)
    row_max = np.nanmax(s, axis=1, keepdims=True)
    span = row_max - row_min
    with np.errstate(invalid="ignore"):
        scaled = np.where(span > 0, (s - row_min) / np.where(span > 0, span, 1.0), 0.0)
    np.fill_diagonal(scaled, 0.0)
    scaled = np.clip(scaled, 0.0, 1.0)
    out = 0.5 * (np.abs(scaled) + np.abs(scaled.T))
    assert not out.diagonal().any() and out.min() >= 0.0 and out.max() <= 1.0
    return out


def _off_diagonal_values(s: np.ndarray) -> np.ndarray:
    n = s.shape[0]
    return s[~np.eye(n, dtype=bool)]


def _percentile_cut(s: np.ndarray, level: float, scope: str) -> np.ndarray:
    """Percentile threshold over off-diagonal entries, global or per row."""
    if scope == "global":
        cut = np.quantile(_off_diagonal_values(s), level)
        return np.full((s.shape[0], 1), cut)
    n = s.shape[0]
    masked = np.array(s, dtype=np.float64)
    np.fill_diagonal(masked, np.nan)
    return np.nanquantile(masked, level, axis=1, keepdims=True)


def fn_mask(processed: np.ndarray, eps1: float, scope: str = "global") -> np.ndarray:
    """Saturate likely-false-negative entries to one.

    Entries at or above the eps1 percentile (computed over off-diagonal
    entries) become exactly 1; the rest keep their value. Zero-affinity
    entries are never flagged: when the matrix is sparser than the
    percentile level the cut lands on the zero bulk, and saturating there
    would neutralize every negative. The output is entrywise >= the input.
    """
    if not 0.0 <= eps1 <= 1.0:
        raise ValidationError("eps1 must be in [0, 1]")
    cut = _percentile_cut(processed, eps1, scope)
    return np.where((processed >= cut) & (processed > 0), 1.0, processed)


def purify(processed: np.ndarray, eps2: float, keep_high: bool = True,
           scope: str = "global") -> np.ndarray:
    """Sparsify the affinity matrix and L1-normalize its nonzero rows.

    With ``keep_high`` (the default) entries below the eps2 percentile are
    zeroed and strong links survive; ``keep_high=False`` flips the
    comparison for callers that want the opposite convention.
    """
    if not 0.0 <= eps2 <= 1.0:
        raise ValidationError("eps2 must be in [0, 1]")
    cut = _percentile_cut(processed, eps2, scope)
    keep = processed >= cut if keep_high else processed < cut
    out = np.where(keep, processed, 0.0)
    np.fill_diagonal(out, 0.0)
    sums = out.sum(axis=1, keepdims=True)
    return np.divide(out, sums, out=np.zeros_like(out), where=sums > 0)


def derive_matrices(raw: np.ndarray, config: SelfExprConfig) -> SelfExpressiveMatrix:
    """Post-process a raw solve and derive the mask and purified matrices."""
    processed = postprocess(raw)
    return SelfExpressiveMatrix(
        raw=np.array(raw, dtype=np.float64),
        processed=processed,
        fn_mask=fn_mask(processed, config.eps1, config.percentile_scope),
        purified=purify(processed, config.eps2, config.purify_keep_high,
                        config.percentile_scope),
    )


def self_expressive_view(purified: np.ndarray, projected: Tensor) -> Tensor:
    """Synthesize the extra view H_S = S_hat @ X_hat.

    The purified matrix is a constant; gradients flow only through the
    projected features.
    """
    purified = np.asarray(purified, dtype=np.float64)
    if purified.ndim != 2 or purified.shape[1] != projected.shape[0]:
        raise ValidationError(
            f"shape mismatch: {purified.shape} @ {projected.shape}")
    return ad.matmul(Tensor(purified), projected)


def block_affinity_ratio(processed: np.ndarray, labels: np.ndarray) -> float:
    """Mean intra-class over mean inter-class affinity (diagonal excluded)."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(labels.shape[0], dtype=bool)
    intra = processed[same & off].mean()
    inter = processed[~same].mean()
    if inter <= 0:
        return np.inf if intra > 0 else 1.0
    return float(intra / inter)
