"""Homophily-aware heterogeneous graph contrastive learning with
multi-view self-expression.

The package covers the full pipeline at desk scale: heterogeneous graph
analytics (metapath composition, homophily ratios, connection strengths),
homophily-enhancing augmentation, a metapath encoder with semantic
attention, two self-expressive solvers (a coefficient network and an
exact closed form with a low-rank inverse), a false-negative-aware
contrastive objective, and downstream evaluation.
"""

from .augment import (AugmentConfig, AugmentedView, augmentation_mhr_study,
                      he_drop, mp_drop, node_feature_drop,
                      retention_probability, topology_attack)
from .errors import (CheckFailedError, DataFormatError, EdgelessGraphError,
                     HgselError, NumericalError, ValidationError)
from .hetgraph import (HeteroGraph, MetapathSpec, MetapathSubgraph,
                       RelationMatrix, build_strength_indicator,
                       build_topk_similarity, compose_metapath,
                       mcs_homophily_profile, mhr)
from .objective import (ContrastConfig, PositiveSets, baseline_loss,
                        contrastive_loss_s, pretrain_loss, select_positives,
                        loss_bound_check)
from .selfexpr import (SelfExprConfig, SelfExpressiveMatrix,
                       SelfExprNetworkParams, derive_matrices, fn_mask,
                       network_coefficients, postprocess, purify,
                       self_expression_loss, self_expressive_view,
                       solve_closed_form, solve_closed_form_naive)
from .synth import AttributeTypeSpec, SyntheticSpec, synth_generate
from .train import RunConfig, TrainRun, apply_ablation, train

__version__ = "0.1.0"

__all__ = [
    "AttributeTypeSpec", "AugmentConfig", "AugmentedView", "CheckFailedError",
    "ContrastConfig", "DataFormatError", "EdgelessGraphError", "HeteroGraph",
    "HgselError", "MetapathSpec", "MetapathSubgraph", "NumericalError",
    "PositiveSets", "RelationMatrix", "RunConfig", "SelfExprConfig",
    "SelfExpressiveMatrix", "SelfExprNetworkParams", "SyntheticSpec",
    "TrainRun", "ValidationError", "apply_ablation", "augmentation_mhr_study",
    "baseline_loss", "build_strength_indicator", "build_topk_similarity",
    "compose_metapath", "contrastive_loss_s", "derive_matrices", "fn_mask",
    "he_drop", "mcs_homophily_profile", "mhr", "mp_drop",
    "network_coefficients", "node_feature_drop", "postprocess",
    "pretrain_loss", "purify", "retention_probability", "select_positives",
    "self_expression_loss", "self_expressive_view", "solve_closed_form",
    "solve_closed_form_naive", "synth_generate", "loss_bound_check",
    "topology_attack", "train",
]
