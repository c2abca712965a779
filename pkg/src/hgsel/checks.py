"""Self-contained executable checks exposed through the CLI.

The gradient check differentiates the three composite losses through the
full encoder on a small synthetic instance and compares against central
finite differences. The bound check draws random inputs in the regime
where the masked contrastive loss provably lower-bounds the plain one
(nonnegative similarities) and verifies the inequality numerically.
"""

from __future__ import annotations

import numpy as np

from .augment import identity_view, make_view, AugmentConfig
from .encoder import EncoderParams, encode
from .errors import CheckFailedError
from .gradcheck import check_gradients
from .objective import (PositiveSets, contrastive_loss_s, pretrain_loss,
                        select_positives, loss_bound_check)
from .rng import stream
from .selfexpr import (CLOSED_FORM, NETWORK, SelfExprConfig,
                       SelfExprNetworkParams, derive_matrices,
                       network_coefficients, self_expression_loss,
                       self_expressive_view, solve_closed_form)
from .hetgraph import build_strength_indicator, build_topk_similarity
from .synth import AttributeTypeSpec, SyntheticSpec, synth_generate

GRAD_TOLERANCE = 1e-4


def _small_instance(seed: int, n_nodes: int = 20):
    spec = SyntheticSpec(
        n_classes=2,
        n_targets=n_nodes,
        attributes=(
            AttributeTypeSpec("a", 12, 0.5, 0.15),
            AttributeTypeSpec("b", 8, 0.6, 0.2),
        ),
        feature_dim=6,
        class_separation=1.0,
        feature_noise=0.5,
        seed=seed,
    )
    return synth_generate(spec)


def run_grad_check(seed: int = 0, n_nodes: int = 20, dim: int = 5,
                   tolerance: float = GRAD_TOLERANCE) -> dict:
    """Finite-difference check of the composite losses through the encoder.

    Attention weights and the derived affinity matrices are frozen as
    constants for the check, exactly as they are treated by the training
    loop's gradient path.
    """
    graph, specs = _small_instance(seed, n_nodes)
    base_view = identity_view(graph, specs)
    view1 = make_view(graph, specs, AugmentConfig(drop_ratio=0.3, seed=seed),
                      stream(seed, "gc-view1"))
    view2 = make_view(graph, specs, AugmentConfig(drop_ratio=0.3, seed=seed + 1),
                      stream(seed, "gc-view2"))

    enc = EncoderParams.init(graph.features.shape[1], dim,
                             stream(seed, "gc-enc"), activation="elu")
    net = SelfExprNetworkParams.init(len(specs), dim, stream(seed, "gc-net"))
    se_cfg = SelfExprConfig(solver=NETWORK, alpha=0.5, lam1=0.2, lam2=0.2,
                            eps1=0.8, eps2=0.8)
    positives = select_positives(graph, specs, k_pos=3)
    strength_ind = build_strength_indicator(graph, specs, se_cfg.delta)
    topk_sim = build_topk_similarity(graph.features, 3)
    tau = 0.6

    # Frozen constants: attention weights and the derived matrices.
    emb0 = encode(base_view, enc)
    beta0 = emb0.beta.data.copy()
    _, consensus0 = network_coefficients(emb0.per_metapath, net, beta0)
    matrices = derive_matrices(consensus0.data, se_cfg)

    def self_expression_objective():
        emb = encode(base_view, enc)
        coeffs, consensus = network_coefficients(emb.per_metapath, net, beta0)
        return self_expression_loss(emb.per_metapath, coeffs, consensus,
                                    strength_ind, topk_sim, beta0, se_cfg)

    def masked_contrastive_objective():
        e1 = encode(view1, enc)
        e2 = encode(view2, enc)
        return contrastive_loss_s(e1.fused, e2.fused, matrices.fn_mask,
                                  positives, tau)

    def pretraining_objective():
        e1 = encode(view1, enc)
        e2 = encode(view2, enc)
        e0 = encode(base_view, enc)
        extra = self_expressive_view(matrices.purified, e0.projected)
        return pretrain_loss(e1.fused, e2.fused, extra, matrices.fn_mask,
                             positives, tau, CLOSED_FORM)

    params = enc.parameters()
    errors = {
        "self_expression_loss": check_gradients(self_expression_objective,
                                                params + net.parameters()),
        "masked_contrastive_loss": check_gradients(masked_contrastive_objective,
                                                   params),
        "pretraining_loss": check_gradients(pretraining_objective, params),
    }
    worst = max(errors.values())
    return {
        "per_loss_max_relative_error": errors,
        "max_relative_error": worst,
        "tolerance": tolerance,
        "passed": bool(worst <= tolerance),
    }


def random_bound_instance(rng: np.random.Generator, n_nodes: int, dim: int):
    """One random (U, V, mask, positives, tau) draw with nonnegative sims.

    Nonnegative embeddings keep every cosine similarity in [0, 1], the
    regime in which the masked negative term never exceeds the plain one.
    """
    u = np.abs(rng.normal(size=(n_nodes, dim)))
    v = np.abs(rng.normal(size=(n_nodes, dim)))
    mask = rng.uniform(0.0, 1.0, size=(n_nodes, n_nodes))
    mask = 0.5 * (mask + mask.T)
    saturate = rng.uniform(size=(n_nodes, n_nodes)) < 0.05
    mask[saturate | saturate.T] = 1.0
    np.fill_diagonal(mask, 0.0)
    k = int(rng.integers(1, 4))
    sets = []
    for i in range(n_nodes):
        others = np.delete(np.arange(n_nodes), i)
        sets.append(np.append(rng.choice(others, size=k, replace=False), i))
    positives = PositiveSets.from_sets(sets, n_nodes)
    tau = float(rng.uniform(0.5, 1.0))
    return u, v, mask, positives, tau


def run_bound_check(trials: int = 1000, n_nodes: int = 40, dim: int = 8,
                      seed: int = 0) -> dict:
    """Verify masked <= plain loss over random draws; raise on violation."""
    rng = stream(seed, "bound-check")
    worst_gap = -np.inf
    violations = 0
    for _ in range(trials):
        u, v, mask, positives, tau = random_bound_instance(rng, n_nodes, dim)
        plain, masked, holds = loss_bound_check(u, v, mask, positives, tau)
        worst_gap = max(worst_gap, masked - plain)
        if not holds:
            violations += 1
    report = {
        "trials": trials,
        "n_nodes": n_nodes,
        "violations": violations,
        "worst_masked_minus_plain": worst_gap,
        "passed": violations == 0,
    }
    if violations:
        raise CheckFailedError(
            f"masked loss exceeded plain loss in {violations}/{trials} draws "
            f"(worst gap {worst_gap:.3e})")
    return report
