"""Command-line entry point: homophily, train, eval, embed, ablate.

Subcommand handlers import numpy-heavy modules lazily so that --threads can
pin the BLAS thread pools through environment variables before numpy loads.
Every command writes a run manifest next to its primary output listing
content hashes of config, inputs, and produced artifacts; timestamps live
only in the manifest, so reports and checkpoints stay byte-reproducible.

Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys

from . import __version__
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    NumericError,
    ShapeError,
    SignaError,
)

ABLATE_VARIANTS = (
    "none",
    "no_dropout",
    "nfm",
    "no_stoch_mask",
    "all_mask",
    "jsd",
    "info_nce",
    "all_off",
)


# ---------------------------------------------------------------------------
# small helpers


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(
    primary_out: str,
    command: str,
    started: str,
    seed,
    inputs: list[str],
    outputs: list[str],
    config_path: str | None = None,
    extra: dict | None = None,
) -> str:
    doc = {
        "command": command,
        "toolkit_version": __version__,
        "seed": seed,
        "config": None
        if config_path is None
        else {"path": config_path, "sha256": _sha256(config_path)},
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs],
        "outputs": [{"path": p, "sha256": _sha256(p)} for p in outputs],
        "started_at": started,
        "finished_at": _now(),
    }
    if extra:
        doc.update(extra)
    path = primary_out + ".manifest.json"
    _write_json(path, doc)
    return path


def _load_config_dict(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


def _mean_std(values: list[float]) -> tuple[float, float | None]:
    """Population std; None when fewer than two runs."""
    import numpy as np

    mean = float(np.mean(values))
    std = float(np.std(values)) if len(values) >= 2 else None
    return mean, std


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_homophily(args) -> int:
    from .graphdata import global_homophily, load_graph, local_homophily

    started = _now()
    graph = load_graph(args.edges, args.features, args.labels)
    global_ratio = global_homophily(graph)
    report = local_homophily(graph)

    doc = report.to_json_dict()
    _write_json(args.out_json, doc)
    with open(args.out_csv, "w", encoding="utf-8") as fh:
        fh.write("histogram,bin,count\n")
        bins = doc["count_hist_bins"]
        for label, count in zip(bins, doc["count_hist"]):
            fh.write(f"count,{label},{count}\n")
        edges = doc["ratio_hist_edges"]
        for i, count in enumerate(doc["ratio_hist"]):
            fh.write(f"ratio,[{edges[i]:.2f};{edges[i + 1]:.2f}),{count}\n")

    _write_manifest(
        args.out_json,
        "homophily",
        started,
        seed=None,
        inputs=[args.edges, args.features, args.labels],
        outputs=[args.out_json, args.out_csv],
    )
    if not args.quiet:
        print(f"global homophily {global_ratio:.6f}  ({report.num_isolated} isolated nodes)")
    return 0


def _effective_config(args, raw: dict):
    """Apply flag overrides (flag > config > default) and validate."""
    from .trainer import TrainConfig

    raw = json.loads(json.dumps(raw))  # deep copy, JSON-only types
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.precision is not None:
        raw["precision"] = args.precision
    if getattr(args, "ablation", None) is not None:
        raw["ablation"] = args.ablation
    if args.quiet:
        raw["log_every"] = 0
    return TrainConfig.from_dict(raw)


def _cmd_train(args) -> int:
    from . import diffcore as dc
    from .graphdata import load_graph
    from .trainer import apply_ablation, save_checkpoint, train

    started = _now()
    config = _effective_config(args, _load_config_dict(args.config))
    dc.set_precision(config.precision)
    graph = load_graph(args.edges, args.features)
    state, curve = train(graph, config)
    save_checkpoint(state, config, args.out_checkpoint, final_loss=curve[-1])

    outputs = [args.out_checkpoint]
    if args.out_loss_curve:
        with open(args.out_loss_curve, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss\n")
            for epoch, value in enumerate(curve):
                fh.write(f"{epoch},{value:.17g}\n")
        outputs.append(args.out_loss_curve)

    plan = apply_ablation(config)
    _write_manifest(
        args.out_checkpoint,
        "train",
        started,
        seed=config.seed,
        inputs=[args.edges, args.features],
        outputs=outputs,
        config_path=args.config,
        extra={
            "effective": {
                "mask_rate": plan.mask_rate,
                "dropout_p": plan.model.dropout_p,
                "nfm_p_feat": plan.nfm_p_feat,
                "estimator_kind": plan.estimator.kind,
            }
        },
    )
    if not args.quiet:
        print(f"trained {config.num_epochs} epochs, final loss {curve[-1]:.6f}")
    return 0


def _load_for_eval(args, need_labels: bool):
    from . import diffcore as dc
    from .errors import CheckpointError
    from .graphdata import load_graph
    from .trainer import load_checkpoint

    dc.set_precision(args.precision or "f64")
    state, config = load_checkpoint(args.checkpoint)
    labels = getattr(args, "labels", None)
    if need_labels and labels is None:
        raise ConfigError("this mode requires --labels")
    graph = load_graph(args.edges, args.features, labels)
    if graph.num_features != state.num_features:
        raise CheckpointError(
            f"checkpoint expects {state.num_features} features, graph has {graph.num_features}"
        )
    return state, config, graph


def _cmd_eval(args) -> int:
    import numpy as np

    from . import diffcore as dc
    from .encoder import ModelSpec, inference_embeddings
    from .evaluate import (
        ProbeConfig,
        kmeans,
        homogeneity,
        linear_probe,
        make_splits,
        nmi,
        similarity_histograms,
        timing_harness,
    )

    started = _now()
    need_labels = args.mode in ("classify", "cluster")
    state, config, graph = _load_for_eval(args, need_labels)
    seed = args.seed if args.seed is not None else config.seed
    report: dict = {
        "mode": args.mode,
        "seed": seed,
        "checkpoint_sha256": _sha256(args.checkpoint),
        "config": config.to_dict(),
    }
    outputs = [args.out]

    if args.mode in ("classify", "cluster", "histograms"):
        emb = inference_embeddings(state, state.spec, graph).data

    if args.mode == "classify":
        splits = make_splits(graph.labels, num_runs=args.runs, rng=dc.RngStream(seed, "split"))
        f1s, accs = [], []
        for split in splits:
            f1, acc = linear_probe(emb, graph.labels, split, ProbeConfig())
            f1s.append(f1)
            accs.append(acc)
        f1_mean, f1_std = _mean_std(f1s)
        acc_mean, acc_std = _mean_std(accs)
        report.update(
            {
                "runs": args.runs,
                "micro_f1": {"per_run": f1s, "mean": f1_mean, "std": f1_std},
                "accuracy": {"per_run": accs, "mean": acc_mean, "std": acc_std},
            }
        )
    elif args.mode == "cluster":
        result = kmeans(emb, graph.num_classes, rng=dc.RngStream(seed, "kmeans"))
        report.update(
            {
                "k": graph.num_classes,
                "nmi": nmi(result.assignments, graph.labels),
                "homogeneity": homogeneity(result.assignments, graph.labels),
                "inertia": result.inertia,
            }
        )
    elif args.mode == "histograms":
        if args.out_csv is None:
            raise ConfigError("histograms mode requires --out-csv")
        rng = dc.RngStream(seed, "split") if args.subsample_pairs else None
        hists = similarity_histograms(
            emb, graph, bins=args.bins, subsample_pairs=args.subsample_pairs, rng=rng
        )
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write("population,bin_lo,bin_hi,count\n")
            populations = [("neighbor", hists.neighbor), ("non_neighbor", hists.non_neighbor)]
            if hists.same_label is not None:
                populations += [("same_label", hists.same_label), ("diff_label", hists.diff_label)]
            for name, counts in populations:
                for i, count in enumerate(counts):
                    fh.write(
                        f"{name},{hists.bin_edges[i]:.6f},{hists.bin_edges[i + 1]:.6f},{count}\n"
                    )
        outputs.append(args.out_csv)
        report.update(
            {
                "bins": args.bins,
                "num_pairs": hists.num_pairs,
                "subsampled": hists.subsampled,
                "neighbor_total": int(hists.neighbor.sum()),
                "non_neighbor_total": int(hists.non_neighbor.sum()),
            }
        )
    else:  # timing
        base = state.spec.to_dict()
        spec_mlp = ModelSpec(**{**base, "base_encoder": "linear"})
        spec_gconv = ModelSpec(**{**base, "base_encoder": "gconv"})
        timing = timing_harness(graph, spec_mlp, spec_gconv, repeats=args.repeats)
        report.update(
            {
                "repeats": timing.repeats,
                "entries": [
                    {"encoder_kind": e.encoder_kind, "wall_millis": e.wall_millis}
                    for e in timing.entries
                ],
                "ratio_gconv_over_linear": timing.ratio_gconv_over_linear,
            }
        )

    _write_json(args.out, report)
    inputs = [args.checkpoint, args.edges, args.features]
    if args.labels:
        inputs.append(args.labels)
    _write_manifest(args.out, "eval", started, seed=seed, inputs=inputs, outputs=outputs)
    if not args.quiet:
        print(f"wrote {args.mode} report to {args.out}")
    return 0


def _cmd_embed(args) -> int:
    from .trainer import export_embeddings

    started = _now()
    state, config, graph = _load_for_eval(args, need_labels=False)
    export_embeddings(state, state.spec, graph, args.out)
    _write_manifest(
        args.out,
        "embed",
        started,
        seed=config.seed,
        inputs=[args.checkpoint, args.edges, args.features],
        outputs=[args.out],
    )
    if not args.quiet:
        print(f"wrote embeddings to {args.out}")
    return 0


def _variant_config_dict(raw: dict, variant: str) -> dict:
    """Rewrite a base config dict for one ablation-table variant."""
    doc = json.loads(json.dumps(raw))
    doc.setdefault("estimator", {})
    if variant in ("no_dropout", "nfm", "no_stoch_mask", "all_mask"):
        doc["ablation"] = variant
    elif variant in ("jsd", "info_nce"):
        doc["estimator"]["kind"] = variant
    elif variant == "all_off":
        doc["ablation"] = "no_dropout"
        doc["mask_rate"] = 0.0
        doc["estimator"]["kind"] = "jsd"
    return doc


def _cmd_ablate(args) -> int:
    from . import diffcore as dc
    from .encoder import inference_embeddings
    from .evaluate import ProbeConfig, linear_probe, make_splits
    from .graphdata import load_graph
    from .trainer import TrainConfig, train

    started = _now()
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in ABLATE_VARIANTS]
    if bad:
        raise ConfigError(f"unknown ablation variants: {', '.join(bad)} (choose from {ABLATE_VARIANTS})")
    raw = _load_config_dict(args.config)
    base_seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    seeds = (
        [int(s) for s in args.seeds.split(",")]
        if args.seeds
        else [base_seed + i for i in range(args.num_seeds)]
    )

    graph = load_graph(args.edges, args.features, args.labels)
    os.makedirs(args.out_dir, exist_ok=True)

    rows = []
    details: dict = {}
    for variant in variants:
        per_seed_f1, per_seed_acc = [], []
        try:
            for seed in seeds:
                doc = _variant_config_dict(raw, variant)
                doc["seed"] = seed
                if args.precision is not None:
                    doc["precision"] = args.precision
                if args.quiet:
                    doc["log_every"] = 0
                config = TrainConfig.from_dict(doc)
                dc.set_precision(config.precision)
                state, _curve = train(graph, config)
                emb = inference_embeddings(state, state.spec, graph).data
                splits = make_splits(
                    graph.labels, num_runs=args.probe_runs, rng=dc.RngStream(seed, "split")
                )
                f1s, accs = [], []
                for split in splits:
                    f1, acc = linear_probe(emb, graph.labels, split, ProbeConfig())
                    f1s.append(f1)
                    accs.append(acc)
                per_seed_f1.append(float(sum(f1s) / len(f1s)))
                per_seed_acc.append(float(sum(accs) / len(accs)))
            f1_mean, f1_std = _mean_std(per_seed_f1)
            acc_mean, acc_std = _mean_std(per_seed_acc)
            rows.append((variant, "ok", f1_mean, f1_std, acc_mean, acc_std, ""))
            details[variant] = {
                "status": "ok",
                "seeds": seeds,
                "micro_f1_per_seed": per_seed_f1,
                "accuracy_per_seed": per_seed_acc,
            }
        except SignaError as exc:
            rows.append((variant, "error", None, None, None, None, str(exc)))
            details[variant] = {"status": "error", "error": str(exc)}
            if not args.quiet:
                print(f"variant {variant} failed: {exc}", file=sys.stderr)

    def fmt(v) -> str:
        return "" if v is None else f"{v:.6f}"

    table_path = os.path.join(args.out_dir, "ablation_table.csv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("variant,status,micro_f1_mean,micro_f1_std,accuracy_mean,accuracy_std,error\n")
        for variant, status, f1m, f1s_, accm, accs_, err in rows:
            fh.write(f"{variant},{status},{fmt(f1m)},{fmt(f1s_)},{fmt(accm)},{fmt(accs_)},{err}\n")
    report_path = os.path.join(args.out_dir, "ablation_report.json")
    _write_json(report_path, {"seeds": seeds, "variants": details, "base_config": raw})

    _write_manifest(
        report_path,
        "ablate",
        started,
        seed=seeds,
        inputs=[args.edges, args.features, args.labels],
        outputs=[table_path, report_path],
        config_path=args.config,
    )
    if not args.quiet:
        print(f"wrote ablation table to {table_path}")
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config/default seed")
    common.add_argument("--precision", choices=("f32", "f64"), default=None)
    common.add_argument("--threads", type=int, default=None, help="pin BLAS thread pools")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(
        prog="signa",
        description="Single-view graph contrastive learning with soft neighborhood awareness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("homophily", parents=[common], help="global/local homophily report")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", required=True)

    p = sub.add_parser("train", parents=[common], help="unsupervised training run")
    p.add_argument("--config", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-loss-curve", default=None)
    p.add_argument("--ablation", choices=("none", "no_dropout", "nfm", "no_stoch_mask", "all_mask"))

    p = sub.add_parser("eval", parents=[common], help="evaluate a frozen checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--mode", required=True, choices=("classify", "cluster", "histograms", "timing"))
    p.add_argument("--runs", type=int, default=20, help="probe splits (classify mode)")
    p.add_argument("--repeats", type=int, default=20, help="timing repeats (timing mode)")
    p.add_argument("--bins", type=int, default=50, help="histogram bins (histograms mode)")
    p.add_argument("--subsample-pairs", type=int, default=None)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--out-csv", default=None, help="histogram CSV path (histograms mode)")

    p = sub.add_parser("embed", parents=[common], help="export inference embeddings as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", parents=[common], help="train+probe a variant table")
    p.add_argument("--config", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--variants", default="none,no_dropout,nfm,no_stoch_mask,all_mask,jsd,info_nce,all_off")
    p.add_argument("--seeds", default=None, help="comma-separated; overrides --num-seeds")
    p.add_argument("--num-seeds", type=int, default=3)
    p.add_argument("--probe-runs", type=int, default=3)
    p.add_argument("--out-dir", required=True)
    return parser


_HANDLERS = {
    "homophily": _cmd_homophily,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "embed": _cmd_embed,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; fold into the config bucket
        return 0 if exc.code == 0 else 1

    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 1
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def run() -> None:
    sys.exit(main())
