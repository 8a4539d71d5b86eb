"""Command-line entry point: ``posebranch <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness as H
from . import probes as P
from . import topology as T
from .synth import DataConfig, generate_dataset, load_manifest
from .textconfig import parse_key_values


def _overrides(pairs) -> str:
    return "\n".join(p.replace("=", " = ", 1) for p in pairs or [])


def _experiment(args) -> H.ExperimentConfig:
    text = Path(args.config).read_text() if args.config else ""
    base = parse_key_values(text, allowed=H.ExperimentConfig.__dataclass_fields__)
    extra = parse_key_values(_overrides(args.set), allowed=H.ExperimentConfig.__dataclass_fields__)
    base.update(extra)
    if getattr(args, "data", None):
        base["dataset_path"] = args.data
    if getattr(args, "out", None) and args.command == "train":
        base["out_dir"] = args.out
    cfg = H.ExperimentConfig.from_text("\n".join(f"{k} = {v}" for k, v in base.items()))
    if not cfg.dataset_path:
        raise SystemExit("no dataset: set dataset_path in the config or pass --data")
    return cfg


def _print_row(row: dict) -> None:
    print(",".join(row))
    print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row.values()))


def cmd_generate_data(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    text += "\n" + _overrides(args.set)
    cfg = DataConfig.from_text(text)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    m = generate_dataset(cfg, args.out)
    print(f"wrote {len(m)} views to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _experiment(args)
    manifest = load_manifest(cfg.dataset_path)
    result = H.train(cfg, manifest)
    _print_row(H.evaluate(result.model, manifest, "test", cfg.pose_rule))
    if cfg.out_dir:
        print(f"checkpoints and logs in {cfg.out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.data)
    row = H.evaluate(args.model, manifest, args.split, args.rule,
                     exclude_degenerate=not args.include_degenerate)
    _print_row(row)
    if args.out:
        H.write_results(args.out, [row])
    return 0


def cmd_probe(args) -> int:
    manifest = load_manifest(args.data)
    layers = "all" if args.layers == "all" else [s.strip() for s in args.layers.split(",") if s.strip()]
    probes = tuple(args.probes.split(",")) if args.probes else P.PROBES
    report = P.run_layer_sweep(args.model, manifest, probes=probes, layers=layers,
                               train_stride=args.train_stride, include_input=args.include_input,
                               exclude_degenerate=not args.include_degenerate)
    report.to_csv(args.out)
    print(f"wrote {len(report.rows)} layer rows to {args.out}")
    return 0


def cmd_count_params(args) -> int:
    labels = T.LabelSpace(args.categories, args.pose_bins)
    spec = T.build_topology(args.kind, labels, T.profile_from_name(args.profile), ebm_width=args.ebm_width)
    print(T.count_parameters(spec, include_bias=args.with_bias))
    if args.table:
        for name, shape, n in T.parameter_table(spec, include_bias=args.with_bias):
            print(f"{name:<24} {'x'.join(map(str, shape)):<20} {n}")
    return 0


def cmd_lambda_sweep(args) -> int:
    cfg = _experiment(args)
    rows = H.lambda_sweep(cfg, load_manifest(cfg.dataset_path))
    H.write_lambda_table(args.out, rows)
    for r in rows:
        print(f"lambda1={r['lambda1']:g} lambda2={r['lambda2']:g} category={r['categorization']:.2f} pose={r['pose']:.2f}")
    print(f"selected: {H.select_lambda(rows) or 'no dominating point'}")
    return 0


def cmd_convergence_compare(args) -> int:
    cfg = _experiment(args)
    manifest = load_manifest(cfg.dataset_path)
    configs = {k: replace(cfg, model_kind=k, out_dir=None) for k in args.kinds.split(",")}
    curves, summary = H.convergence_compare(configs, manifest, args.threshold)
    H.write_curves(args.out, curves)
    summary_path = args.summary or str(Path(args.out).with_name(Path(args.out).stem + "_summary.csv"))
    H.write_summary(summary_path, summary)
    for s in summary:
        print(f"{s['model']}: {s['iterations_to_threshold']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="posebranch", description="Joint category and pose networks on synthetic multi-view data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, out_help):
        sp.add_argument("--config", help="key = value experiment config file")
        sp.add_argument("--data", help="dataset directory (overrides dataset_path)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--out", help=out_help)

    g = sub.add_parser("generate-data", help="render the synthetic multi-view dataset")
    g.add_argument("--config", help="key = value data config file")
    g.add_argument("--set", action="append", metavar="KEY=VALUE")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train one model")
    with_config(t, "output directory for checkpoints and logs")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a split")
    e.add_argument("--model", required=True, help="checkpoint (.pbl with sibling .topo)")
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--rule", default="both", choices=H.POSE_RULES)
    e.add_argument("--include-degenerate", action="store_true")
    e.add_argument("--out", help="results CSV")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("probe", help="layer-by-layer probe report")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--layers", default="all", help="'all' or comma-separated layer names")
    pr.add_argument("--probes", help=f"comma-separated subset of {','.join(P.PROBES)}")
    pr.add_argument("--train-stride", type=int, default=1, help="keep every n-th training view")
    pr.add_argument("--include-input", action="store_true", help="also probe the raw pixels")
    pr.add_argument("--include-degenerate", action="store_true")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_probe)

    c = sub.add_parser("count-params", help="weight count of a topology (biases excluded by default)")
    c.add_argument("--kind", required=True, choices=T.MODEL_KINDS)
    c.add_argument("--profile", default="full", choices=("full", "desk"))
    c.add_argument("--categories", type=int, default=51)
    c.add_argument("--pose-bins", type=int, default=16)
    c.add_argument("--ebm-width", type=int, default=4096)
    c.add_argument("--with-bias", action="store_true")
    c.add_argument("--table", action="store_true", help="also print the per-layer breakdown")
    c.set_defaults(func=cmd_count_params)

    ls = sub.add_parser("lambda-sweep", help="train the (1,1), (1,2), (2,1) loss-weight grid")
    with_config(ls, "table CSV")
    ls.set_defaults(func=cmd_lambda_sweep)

    cc = sub.add_parser("convergence-compare", help="validation curves of several model kinds")
    with_config(cc, "aligned curve CSV")
    cc.add_argument("--kinds", default="pm,cpm,lbm,ebm")
    cc.add_argument("--threshold", type=float, default=0.8, help="validation pose AAAI threshold")
    cc.add_argument("--summary", help="iterations-to-threshold CSV (default: <out>_summary.csv)")
    cc.set_defaults(func=cmd_convergence_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("lambda-sweep", "convergence-compare") and not args.out:
        raise SystemExit(f"{args.command} needs --out")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
