"""Command-line interface.

Subcommands front the package operations: graph analytics, augmentation
studies, pretraining, evaluation, the topology-attack study, and the
executable correctness checks. Every command accepts ``--seed`` and
``--out``; commands that need one take ``--config`` with a JSON file.
Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 failed check.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, STRATEGIES, augmentation_mhr_study, topology_attack
from .data import load_dataset, save_dataset
from .errors import CheckFailedError, HgselError, ValidationError
from .hetgraph import compose_metapath, mcs_homophily_profile, mhr
from .rng import stream
from .synth import SyntheticSpec, synth_generate
from .train import (EvalConfig, RunConfig, apply_ablation, evaluate_embeddings,
                    resolve_dataset, train, write_run)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON ({err})") from None


def _write_text(path, text: str) -> None:
    out = Path(path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)


def _run_config(args) -> RunConfig:
    config = RunConfig.from_dict(_load_json(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def cmd_synth(args) -> int:
    spec = SyntheticSpec.from_dict(_load_json(args.config)) if args.config \
        else SyntheticSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    graph, specs = synth_generate(spec)
    save_dataset(graph, specs, args.out)
    print(f"wrote synthetic dataset ({graph.n_targets} target nodes, "
          f"{len(specs)} metapaths) to {args.out}")
    return 0


def cmd_analyze_mhr(args) -> int:
    graph, specs = load_dataset(args.data)
    if graph.labels is None:
        raise ValidationError("analyze-mhr needs labels.tsv")
    lines = ["metapath\tedges\tmhr"]
    for spec in specs:
        sub = compose_metapath(graph, spec)
        lines.append(f"{spec.name}\t{sub.n_edges}\t{mhr(sub, graph.labels):.6f}")
    text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    print(text, end="")
    return 0


def cmd_mcs_profile(args) -> int:
    graph, specs = load_dataset(args.data)
    if graph.labels is None:
        raise ValidationError("mcs-profile needs labels.tsv")
    thresholds = [int(t) for t in args.buckets.split(",")]
    lines = ["metapath\tbucket\tedges\tmhr"]
    for spec in specs:
        sub = compose_metapath(graph, spec)
        for bucket in mcs_homophily_profile(sub, graph.labels, thresholds):
            ratio = "" if bucket.mhr is None else f"{bucket.mhr:.6f}"
            lines.append(f"{spec.name}\t{bucket.label}\t{bucket.edge_count}\t{ratio}")
    text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    print(text, end="")
    return 0


def cmd_augment_study(args) -> int:
    graph, specs = load_dataset(args.data)
    if graph.labels is None:
        raise ValidationError("augment-study needs labels.tsv")
    settings = _load_json(args.config) if args.config else {}
    strategies = settings.get("strategies", ["he_random", "mp_random"])
    ratios = settings.get("ratios", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    trials = int(settings.get("trials", args.trials))
    seed = args.seed if args.seed is not None else int(settings.get("seed", 0))
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {strategy!r}")
    lines = ["metapath\tstrategy\tratio\tmean_mhr\tstd_mhr\tskipped\tbase_mhr"]
    for spec in specs:
        base = mhr(compose_metapath(graph, spec), graph.labels)
        for strategy in strategies:
            for ratio in ratios:
                config = AugmentConfig(strategy=strategy, drop_ratio=float(ratio),
                                       feature_drop_ratio=0.0, seed=seed)
                result = augmentation_mhr_study(graph, spec, graph.labels,
                                                config, trials)
                lines.append(
                    f"{spec.name}\t{strategy}\t{ratio}\t{result.mean:.6f}"
                    f"\t{result.std:.6f}\t{result.skipped}\t{base:.6f}")
    text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    print(text, end="")
    return 0


def cmd_pretrain(args) -> int:
    config = _run_config(args)
    run = train(config)
    out = write_run(run, args.out)
    bounds_ok = all(row["bound_holds"] for row in run.trace)
    print(f"trained {len(run.trace)} epochs; bound held every epoch: {bounds_ok}")
    if run.metrics:
        print(json.dumps(run.metrics, sort_keys=True))
    print(f"outputs in {out}")
    if not bounds_ok:
        raise CheckFailedError("loss bound violated during training")
    return 0


def cmd_evaluate(args) -> int:
    graph, _ = load_dataset(args.data)
    if graph.labels is None:
        raise ValidationError("evaluate needs labels.tsv")
    embeddings = np.loadtxt(args.embeddings, delimiter="\t", ndmin=2)
    if embeddings.shape[0] != graph.n_targets:
        raise ValidationError(
            f"embeddings rows ({embeddings.shape[0]}) != target nodes "
            f"({graph.n_targets})")
    eval_cfg = EvalConfig(**_load_json(args.config)) if args.config else EvalConfig()
    seed = args.seed if args.seed is not None else 0
    # evaluate_embeddings only needs the seed and eval settings from its config
    shim = RunConfig(synthetic=SyntheticSpec(), seed=seed, eval=eval_cfg)
    metrics = evaluate_embeddings(embeddings, graph, shim)
    payload = json.dumps({"metrics": metrics, "seed": seed}, sort_keys=True, indent=2)
    _write_text(args.out, payload + "\n")
    print(payload)
    return 0


def cmd_attack_eval(args) -> int:
    config = _run_config(args)
    ratios = [float(r) for r in args.ratios.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    base_graph, base_specs = resolve_dataset(config)
    lines = ["ratio\tvariant\tseed\tnmi\tari"]
    summaries = {}
    for ratio in ratios:
        for variant, cfg in (("full", config),
                             ("no_self_expression", apply_ablation(config, "sev_fnf"))):
            nmis = []
            for seed in seeds:
                attacked = base_graph if ratio == 0 else topology_attack(
                    base_graph, ratio, stream(seed, "attack", int(ratio * 1000)))
                run_cfg = dataclasses.replace(cfg, seed=seed)
                run = train(run_cfg, graph=attacked, specs=base_specs)
                nmi = run.metrics.get("nmi", float("nan"))
                ari = run.metrics.get("ari", float("nan"))
                nmis.append(nmi)
                lines.append(f"{ratio}\t{variant}\t{seed}\t{nmi:.6f}\t{ari:.6f}")
            summaries[(ratio, variant)] = float(np.mean(nmis))
    text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    print(text, end="")
    for (ratio, variant), value in sorted(summaries.items()):
        print(f"mean nmi ratio={ratio} {variant}: {value:.4f}")
    return 0


def cmd_grad_check(args) -> int:
    from .checks import run_grad_check

    seed = args.seed if args.seed is not None else 0
    report = run_grad_check(seed=seed)
    payload = json.dumps(report, sort_keys=True, indent=2)
    _write_text(args.out, payload + "\n")
    print(payload)
    if not report["passed"]:
        raise CheckFailedError(
            f"gradient check failed: max relative error "
            f"{report['max_relative_error']:.3e}")
    return 0


def cmd_theorem_check(args) -> int:
    from .checks import run_bound_check

    seed = args.seed if args.seed is not None else 0
    report = run_bound_check(trials=args.trials, n_nodes=args.nodes, seed=seed)
    payload = json.dumps(report, sort_keys=True, indent=2)
    _write_text(args.out, payload + "\n")
    print(payload)
    return 0


def cmd_export_heatmap(args) -> int:
    config = _run_config(args)
    run = train(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph, _ = resolve_dataset(config)
    if graph.labels is not None:
        order = np.argsort(graph.labels, kind="stable")
    else:
        order = np.arange(run.embeddings.shape[0])
    np.savetxt(out / "order.tsv", order[:, None], delimiter="\t", fmt="%d")
    for name, matrix in (("s_processed", run.matrices.processed),
                         ("s_fn_mask", run.matrices.fn_mask),
                         ("s_purified", run.matrices.purified)):
        np.savetxt(out / f"{name}.tsv", matrix[np.ix_(order, order)],
                   delimiter="\t", fmt="%.10g")
    print(f"wrote label-ordered affinity matrices to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgsel",
        description="Homophily-aware heterogeneous graph contrastive learning")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required,
                       help="path to a JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", required=True, help="output file or directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze-mhr", help="per-metapath homophily ratios")
    p.add_argument("--data", required=True, help="dataset directory")
    common(p)
    p.set_defaults(func=cmd_analyze_mhr)

    p = sub.add_parser("mcs-profile", help="homophily by connection-strength bucket")
    p.add_argument("--data", required=True)
    p.add_argument("--buckets", default="1,2,3",
                   help="comma-separated increasing strength thresholds")
    common(p)
    p.set_defaults(func=cmd_mcs_profile)

    p = sub.add_parser("augment-study", help="mean view MHR under augmentation")
    p.add_argument("--data", required=True)
    p.add_argument("--trials", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_augment_study)

    p = sub.add_parser("pretrain", help="run the full pretraining pipeline")
    common(p, config_required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("evaluate", help="probe + clustering on stored embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True, help="embeddings TSV")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("attack-eval", help="robustness under edge rewiring")
    p.add_argument("--ratios", default="0,0.1,0.2,0.3")
    p.add_argument("--seeds", default="0,1,2,3,4")
    common(p, config_required=True)
    p.set_defaults(func=cmd_attack_eval)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    common(p)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("theorem-check", help="masked <= plain loss on random draws")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--nodes", type=int, default=40)
    common(p)
    p.set_defaults(func=cmd_theorem_check)

    p = sub.add_parser("export-heatmap", help="label-ordered affinity matrices")
    common(p, config_required=True)
    p.set_defaults(func=cmd_export_heatmap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HgselError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
