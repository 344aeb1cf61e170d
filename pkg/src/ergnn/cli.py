"""Command-line interface: ``gen-data``, ``train``, ``eval`` and ``bench``.

Exit codes: 0 on success, 1 for invalid input (bad config, dataset or
checkpoint), 2 for I/O failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import bench
from .config import RunConfig, build_config, read_config_file
from .errors import ValidationError
from .graph import MultiRelationGraph, generate_synthetic, load_dataset, save_dataset
from .trainer import evaluate, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("ergnn")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve_config(args) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {"seed": args.seed, "preset": getattr(args, "preset", None)}
    if getattr(args, "dataset", None):
        overrides["dataset"] = args.dataset
    return build_config(file_values, overrides)


def _load_graph(cfg: RunConfig) -> MultiRelationGraph:
    if cfg.dataset:
        return load_dataset(cfg.dataset, cfg.synthetic.train_frac, cfg.synthetic.val_frac, cfg.seed)
    return generate_synthetic(cfg.synthetic)


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    graph = generate_synthetic(cfg.synthetic)
    out = Path(args.out)
    files = save_dataset(graph, out)
    manifest = {
        "synthetic_config": {k: (list(v) if isinstance(v, tuple) else v)
                             for k, v in vars(cfg.synthetic).items()},
        "files": {p.name: _sha256(p) for p in files},
        "fingerprint": graph.fingerprint(),
    }
    _dump_json(out / "manifest.json", manifest)
    print(f"wrote {len(files)} dataset files and manifest.json to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    graph = _load_graph(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def show(rep):
        ps = " ".join(f"p{c['layer']}.{c['relation']}={c['p']:.2f}" for c in rep.controllers)
        auc = rep.val_metrics["auc"] if rep.val_metrics else None
        auc_s = "n/a" if auc is None else f"{auc:.4f}"
        print(f"epoch {rep.epoch:3d}  L_total={rep.loss_total:.4f}  L_gnn={rep.loss_gnn:.4f}  "
              f"L_d={rep.loss_d:.4f}  val_auc={auc_s}  {ps}")

    model, reports = train(cfg.train, graph, on_epoch=None if args.quiet else show)
    save_checkpoint(out / "checkpoint.json", model, cfg.train, graph)
    report = {
        "config": cfg.train.to_dict(),
        "dataset": graph.fingerprint(),
        "epochs": [r.to_dict() for r in reports],
        "controllers": [
            {"layer": l, "relation": r, **c.to_dict()}
            for l, row in enumerate(model.controllers, start=1)
            for r, c in enumerate(row)
        ],
    }
    _dump_json(out / "train_report.json", report)
    print(f"wrote checkpoint.json and train_report.json to {out}")
    return 0


def cmd_eval(args) -> int:
    model, ckpt_config, _ = load_checkpoint(args.checkpoint)
    cfg = _resolve_config(args)
    graph = _load_graph(cfg)
    model.check_graph(graph)
    nodes = graph.test_nodes()
    metrics = evaluate(model, graph, nodes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "eval_report.json", {
        "checkpoint": str(args.checkpoint),
        "dataset": graph.fingerprint(),
        "split": "test",
        "num_nodes": int(nodes.size),
        "metrics": metrics.to_dict(),
    })
    auc = "n/a" if metrics.auc is None else f"{metrics.auc:.4f}"
    print(f"test  F1={metrics.f1:.4f}  recall={metrics.recall:.4f}  precision={metrics.precision:.4f}  "
          f"accuracy={metrics.accuracy:.4f}  AUC={auc}")
    return 0


def cmd_bench(args) -> int:
    cfg = _resolve_config(args)
    kinds = args.kinds.split(",") if args.kinds else (cfg.kinds or [k.value for k in bench.ALL_KINDS])
    kinds = [bench.BaselineKind.parse(k) for k in kinds]
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",")]
        except ValueError:
            raise ValidationError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    else:
        seeds = list(cfg.seeds or [cfg.seed])
    dataset = load_dataset(cfg.dataset, cfg.synthetic.train_frac, cfg.synthetic.val_frac, cfg.seed) \
        if cfg.dataset else cfg.synthetic

    def show(rec):
        if not args.quiet:
            print(f"{rec.kind:<17} seed={rec.seed}  F1={rec.metrics.f1:.4f}  AUC={rec.metrics.auc}  "
                  f"({rec.wall_time_seconds:.1f}s)")

    result = bench.run_benchmark(dataset, kinds, seeds, cfg.train, on_run=show)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "bench_report.json", result.to_json_obj())
    (out / "bench_report.csv").write_text(result.to_csv(), encoding="utf-8")
    table = result.to_text()
    (out / "bench_table.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ergnn", description="Fraud detection on multi-relation graphs.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, preset=True, dataset=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        if preset:
            p.add_argument("--preset", choices=["synthetic", "amazon-format"])
        if dataset:
            p.add_argument("--dataset", help="dataset directory (default: synthetic data from the config)")
        p.add_argument("-q", "--quiet", action="store_true")

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    common(p, preset=False, dataset=False)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train ER-GNN and write checkpoint + report")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset's test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="compare baselines and ablations over seeds")
    common(p)
    p.add_argument("--kinds", help="comma-separated model kinds (default: all)")
    p.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
