"""Training orchestration: configuration, the pretraining loop, and run output.

Each epoch draws two augmented views, encodes them plus the unaugmented
graph, solves (or reuses) the self-expressive matrix, derives the
false-negative mask and the purified extra view, and optimizes the
combined contrastive objective. The plain-vs-masked loss inequality is
evaluated and logged every epoch. A fixed seed with serial execution
reproduces the trace and all exports bit for bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .augment import MP_RANDOM, AugmentConfig, identity_view, make_view
from .autodiff import Adam, Tape, backward
from .data import load_dataset
from .encoder import EncoderParams, encode
from .errors import EdgelessGraphError, NumericalError, ValidationError
from .evaluate import kmeans_cluster, linear_probe, make_split
from .hetgraph import (HeteroGraph, MetapathSpec, build_strength_indicator,
                       build_topk_similarity, mhr)
from .objective import (ContrastConfig, pretrain_loss, select_positives,
                        loss_bound_check)
from .rng import stream
from .selfexpr import (NETWORK, SelfExprConfig,
                       SelfExpressiveMatrix, SelfExprNetworkParams,
                       derive_matrices, network_coefficients,
                       self_expression_loss, self_expressive_view,
                       solve_closed_form)
from .synth import SyntheticSpec, synth_generate

ABLATIONS = ("none", "hga", "sev", "fnf", "sev_fnf")


@dataclass(frozen=True)
class EvalConfig:
    """Downstream evaluation settings."""

    n_per_class: int = 20
    n_val: int = 150
    n_test: int = 150
    probe_epochs: int = 200
    probe_lr: float = 0.01
    kmeans_restarts: int = 10
    run_probe: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class RunConfig:
    """Everything one pretraining run needs, serializable to JSON."""

    dataset_path: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    dim: int = 64
    proj_depth: int = 1
    activation: str = "elu"
    attention_dropout: float = 0.0
    augment1: AugmentConfig = field(default_factory=AugmentConfig)
    augment2: AugmentConfig = field(default_factory=AugmentConfig)
    selfexpr: SelfExprConfig = field(default_factory=SelfExprConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    lr: float = 5e-4
    epochs: int = 100
    seed: int = 0
    use_self_expressive_view: bool = True
    use_fn_mask: bool = True
    export_matrices: bool = False
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ValidationError("exactly one of dataset_path or synthetic is required")
        if not 1e-4 <= self.lr <= 1e-3:
            raise ValidationError("lr must be in [1e-4, 1e-3]")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.dim < 1 or self.proj_depth < 1:
            raise ValidationError("dim and proj_depth must be >= 1")

    def to_dict(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "dim": self.dim,
            "proj_depth": self.proj_depth,
            "activation": self.activation,
            "attention_dropout": self.attention_dropout,
            "augment1": dataclasses.asdict(self.augment1),
            "augment2": dataclasses.asdict(self.augment2),
            "selfexpr": dataclasses.asdict(self.selfexpr),
            "contrast": dataclasses.asdict(self.contrast),
            "lr": self.lr,
            "epochs": self.epochs,
            "seed": self.seed,
            "use_self_expressive_view": self.use_self_expressive_view,
            "use_fn_mask": self.use_fn_mask,
            "export_matrices": self.export_matrices,
            "eval": self.eval.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if d.get("synthetic"):
            d["synthetic"] = SyntheticSpec.from_dict(d["synthetic"])
        for key, factory in (("augment1", AugmentConfig), ("augment2", AugmentConfig),
                             ("selfexpr", SelfExprConfig), ("contrast", ContrastConfig),
                             ("eval", EvalConfig)):
            if isinstance(d.get(key), dict):
                d[key] = factory(**d[key])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def apply_ablation(config: RunConfig, name: str) -> RunConfig:
    """Return the config with one of the standard components disabled.

    ``hga`` swaps heterogeneous edge dropping for metapath-level random
    dropping, ``sev`` drops the self-expressive-view loss term, ``fnf``
    zeroes the false-negative mask, ``sev_fnf`` does both.
    """
    if name not in ABLATIONS:
        raise ValidationError(f"unknown ablation {name!r}; choose from {ABLATIONS}")
    if name == "none":
        return config
    if name == "hga":
        return replace(config,
                       augment1=replace(config.augment1, strategy=MP_RANDOM),
                       augment2=replace(config.augment2, strategy=MP_RANDOM))
    if name == "sev":
        return replace(config, use_self_expressive_view=False)
    if name == "fnf":
        return replace(config, use_fn_mask=False)
    return replace(config, use_self_expressive_view=False, use_fn_mask=False)


@dataclass
class TrainRun:
    """Everything a finished run produced."""

    config: RunConfig
    trace: list[dict]
    encoder: EncoderParams
    network: Optional[SelfExprNetworkParams]
    embeddings: np.ndarray
    matrices: Optional[SelfExpressiveMatrix]
    metrics: dict


def resolve_dataset(config: RunConfig) -> tuple[HeteroGraph, list[MetapathSpec]]:
    if config.synthetic is not None:
        return synth_generate(config.synthetic)
    return load_dataset(config.dataset_path)


def _view_mhr(view, labels) -> float:
    if labels is None:
        return float("nan")
    values = []
    for sub in view.subgraphs:
        try:
            values.append(mhr(sub, labels))
        except EdgelessGraphError:
            continue
    return float(np.mean(values)) if values else float("nan")


def train(config: RunConfig, graph: Optional[HeteroGraph] = None,
          specs: Optional[Sequence[MetapathSpec]] = None) -> TrainRun:
    """Run the full pretraining loop and downstream evaluation.

    A pre-built (graph, specs) pair overrides the config's dataset, which
    lets callers train on perturbed copies of a graph.
    """
    if graph is None:
        graph, specs = resolve_dataset(config)
    elif specs is None:
        raise ValidationError("metapath specs are required alongside a graph")
    specs = list(specs)
    seed = config.seed
    se_cfg = config.selfexpr
    ct_cfg = config.contrast

    encoder_params = EncoderParams.init(
        graph.features.shape[1], config.dim, stream(seed, "encoder-init"),
        depth=config.proj_depth, activation=config.activation,
        attention_dropout=config.attention_dropout)
    trainable = encoder_params.parameters()
    network_params = None
    if se_cfg.solver == NETWORK:
        network_params = SelfExprNetworkParams.init(
            len(specs), config.dim, stream(seed, "selfexpr-init"),
            hidden_dim=se_cfg.hidden_dim, phi_init=se_cfg.phi_init)
        trainable = trainable + network_params.parameters()
    optimizer = Adam(trainable, lr=config.lr)

    positives = select_positives(graph, specs, ct_cfg.k_pos, ct_cfg.min_strength)
    strength_ind = build_strength_indicator(graph, specs, se_cfg.delta)
    topk_sim = build_topk_similarity(graph.features, se_cfg.k_sim)
    base_view = identity_view(graph, specs)
    n = graph.n_targets
    zero_mask = np.zeros((n, n))

    trace: list[dict] = []
    cached_matrices: Optional[SelfExpressiveMatrix] = None
    for epoch in range(config.epochs):
        view1 = make_view(graph, specs, config.augment1,
                          stream(seed, "view1", epoch), epoch)
        view2 = make_view(graph, specs, config.augment2,
                          stream(seed, "view2", epoch), epoch)
        optimizer.zero_grad()
        with Tape() as tape:
            emb1 = encode(view1, encoder_params,
                          rng=stream(seed, "dropout1", epoch), training=True)
            emb2 = encode(view2, encoder_params,
                          rng=stream(seed, "dropout2", epoch), training=True)
            emb0 = encode(base_view, encoder_params, training=False)

            se_loss = None
            if se_cfg.solver == NETWORK:
                # the coefficient network trains against frozen embeddings;
                # the encoder's own gradient comes from the contrastive terms
                frozen = [t.detach() for t in emb0.per_metapath]
                view_coeffs, consensus = network_coefficients(
                    frozen, network_params, emb0.beta.data)
                se_loss = self_expression_loss(
                    frozen, view_coeffs, consensus,
                    strength_ind, topk_sim, emb0.beta.data, se_cfg)
                matrices = derive_matrices(consensus.data, se_cfg)
            else:
                if cached_matrices is None or epoch % se_cfg.recompute_stride == 0:
                    raw = solve_closed_form(
                        [t.data for t in emb0.per_metapath], emb0.beta.data,
                        strength_ind, topk_sim, se_cfg)
                    cached_matrices = derive_matrices(raw, se_cfg)
                matrices = cached_matrices
            if not np.isfinite(matrices.raw).all():
                raise NumericalError(
                    f"{se_cfg.solver} solver produced non-finite coefficients "
                    f"at epoch {epoch}")

            fn_matrix = matrices.fn_mask if config.use_fn_mask else zero_mask
            self_view = None
            if config.use_self_expressive_view:
                self_view = self_expressive_view(matrices.purified, emb0.projected)
            loss = pretrain_loss(
                emb1.fused, emb2.fused, self_view, fn_matrix, positives,
                ct_cfg.tau, se_cfg.solver, self_expr_loss=se_loss,
                mu=se_cfg.mu, clamp_sim_nonneg=ct_cfg.clamp_sim_nonneg)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise NumericalError(f"non-finite loss {loss_value} at epoch {epoch}")
        backward(tape, loss)
        optimizer.step()

        plain, masked, holds = loss_bound_check(
            emb1.fused.data, emb2.fused.data, fn_matrix, positives, ct_cfg.tau)
        beta = emb0.beta.data
        trace.append({
            "epoch": epoch,
            "loss": loss_value,
            "plain_loss": plain,
            "masked_loss": masked,
            "gap": plain - masked,
            "bound_holds": bool(holds),
            "beta": [float(b) for b in beta],
            "view1_mhr": _view_mhr(view1, graph.labels),
            "view2_mhr": _view_mhr(view2, graph.labels),
        })

    final = encode(base_view, encoder_params, training=False)
    embeddings = final.fused.data.copy()
    if se_cfg.solver == NETWORK:
        view_coeffs, consensus = network_coefficients(
            final.per_metapath, network_params, final.beta.data)
        matrices = derive_matrices(consensus.data, se_cfg)
    else:
        raw = solve_closed_form([t.data for t in final.per_metapath],
                                final.beta.data, strength_ind, topk_sim, se_cfg)
        matrices = derive_matrices(raw, se_cfg)

    metrics = evaluate_embeddings(embeddings, graph, config)
    return TrainRun(config=config, trace=trace, encoder=encoder_params,
                    network=network_params, embeddings=embeddings,
                    matrices=matrices, metrics=metrics)


def evaluate_embeddings(embeddings: np.ndarray, graph: HeteroGraph,
                        config: RunConfig) -> dict:
    """Probe classification and k-means clustering when labels exist."""
    if graph.labels is None:
        return {}
    labels = graph.labels
    n_classes = int(labels.max()) + 1
    ev = config.eval
    out: dict = {}
    cluster = kmeans_cluster(embeddings, n_classes, ev.kmeans_restarts, labels,
                             stream(config.seed, "kmeans"))
    out.update(cluster.to_dict())
    if not ev.run_probe:
        return out
    try:
        split = make_split(labels, ev.n_per_class, ev.n_val, ev.n_test,
                           stream(config.seed, "split"), seed=config.seed)
    except ValidationError:
        return out  # graph too small for the configured split
    probe = linear_probe(embeddings, labels, split, epochs=ev.probe_epochs,
                         lr=ev.probe_lr, rng=stream(config.seed, "probe"))
    out.update(probe.to_dict())
    return out


def write_run(run: TrainRun, out_dir) -> Path:
    """Write run.json, trace.tsv, metrics.json, embeddings, and matrices."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = run.config
    (out / "run.json").write_text(json.dumps({
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "epochs_completed": len(run.trace),
    }, sort_keys=True, indent=2) + "\n")

    n_beta = len(run.trace[0]["beta"]) if run.trace else 0
    header = ["epoch", "loss", "plain_loss", "masked_loss", "gap", "bound_holds",
              *(f"beta_{m}" for m in range(n_beta)), "view1_mhr", "view2_mhr"]
    lines = ["\t".join(header)]
    for row in run.trace:
        lines.append("\t".join([
            str(row["epoch"]),
            f"{row['loss']:.10g}", f"{row['plain_loss']:.10g}",
            f"{row['masked_loss']:.10g}", f"{row['gap']:.10g}",
            str(int(row["bound_holds"])),
            *(f"{b:.10g}" for b in row["beta"]),
            f"{row['view1_mhr']:.10g}", f"{row['view2_mhr']:.10g}",
        ]))
    (out / "trace.tsv").write_text("\n".join(lines) + "\n")

    (out / "metrics.json").write_text(json.dumps({
        "metrics": run.metrics,
        "config_hash": config.config_hash(),
        "seed": config.seed,
    }, sort_keys=True, indent=2) + "\n")

    np.savetxt(out / "embeddings.tsv", run.embeddings, delimiter="\t", fmt="%.10g")
    if config.export_matrices and run.matrices is not None:
        np.savetxt(out / "s_processed.tsv", run.matrices.processed,
                   delimiter="\t", fmt="%.10g")
        np.savetxt(out / "s_fn_mask.tsv", run.matrices.fn_mask,
                   delimiter="\t", fmt="%.10g")
        np.savetxt(out / "s_purified.tsv", run.matrices.purified,
                   delimiter="\t", fmt="%.10g")
    return out
