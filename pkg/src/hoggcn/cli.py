"""Command-line entry point: train, sweep, analyze, generate, splits.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .analysis import degree_distribution, theorem_check, write_embeddings
from .datasets import DatasetError, load_dataset, save_dataset, save_splits
from .graph import GraphError, generate_splits, generate_synthetic, homophily_ratio
from .model import ModelConfig, load_checkpoint
from .trainer import (TrainSettings, run_protocol, sweep, write_report, write_sweep)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
# config keys that differ from the dataclass field names
ALIASES = {"lambda": "lam"}
RUN_KEYS = {"data": str, "out": str, "splits": int, "split_seed": int, "workers": int}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _field_types() -> dict[str, type]:
    types = {}
    for cls in (ModelConfig, TrainSettings):
        for f in fields(cls):
            types[f.name] = {"int": int, "float": float, "bool": _parse_bool,
                             "str": str}[f.type if isinstance(f.type, str) else f.type.__name__]
    types.update(RUN_KEYS)
    return types


def read_config_file(path) -> dict:
    """Flat `key = value` lines; `#` starts a comment."""
    types = _field_types()
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key not in types:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = types[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return out


def format_config(values: dict) -> str:
    lines = []
    for key in sorted(values):
        v = values[key]
        name = "lambda" if key == "lam" else key
        lines.append(f"{name} = {v:.9g}" if isinstance(v, float) else f"{name} = {v}")
    return "\n".join(lines) + "\n"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="run directory")
    p.add_argument("--splits", type=int, help="number of splits to use (default: all)")
    p.add_argument("--split-seed", type=int, help="regenerate splits with this seed")
    p.add_argument("--workers", type=int, help="parallel split workers")
    for cls in (ModelConfig, TrainSettings):
        for f in fields(cls):
            flag = "--lambda" if f.name == "lam" else "--" + f.name.replace("_", "-")
            if f.name == "seed" and cls is TrainSettings:
                continue
            kind = f.type if isinstance(f.type, str) else f.type.__name__
            conv = {"int": int, "float": float, "bool": _parse_bool, "str": str}[kind]
            p.add_argument(flag, dest=f.name, type=conv, default=None)


def resolve_config(args) -> tuple[ModelConfig, TrainSettings, dict]:
    """Defaults, then the config file, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    types = _field_types()
    for key in types:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    model_keys = {f.name for f in fields(ModelConfig)}
    train_keys = {f.name for f in fields(TrainSettings)}
    try:
        config = ModelConfig(**{k: v for k, v in values.items() if k in model_keys})
        settings = TrainSettings(**{k: v for k, v in values.items() if k in train_keys})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    run = {k: values.get(k) for k in RUN_KEYS}
    if not run["data"]:
        raise UsageError("--data is required")
    effective = {**asdict(config), **{k: v for k, v in asdict(settings).items() if k != "seed"},
                 **{k: v for k, v in run.items() if v is not None}}
    return config, settings, effective


def _load_graph(run: dict):
    graph = load_dataset(run["data"])
    if run.get("split_seed") is not None:
        graph = graph.with_splits(generate_splits(graph, run.get("splits") or 10,
                                                  run["split_seed"]))
    splits = list(graph.splits)
    if run.get("splits"):
        splits = splits[:run["splits"]]
    return graph, splits


def cmd_train(args) -> int:
    config, settings, effective = resolve_config(args)
    graph, splits = _load_graph(effective)
    out = Path(effective.get("out") or Path("runs") / (graph.name or "run"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(effective), encoding="utf-8")
    report, models = run_protocol(graph, config, settings, splits, effective.get("workers"),
                                  keep_models=True)
    write_report(report, out, models)
    print(f"{graph.name}: mean accuracy {report.mean_acc:.9g} +/- {report.std_acc:.9g} "
          f"over {len(report.records)} splits -> {out}")
    return EXIT_OK


def parse_grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"invalid grid {text!r}")
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def cmd_sweep(args) -> int:
    config, settings, effective = resolve_config(args)
    if args.axis == "k":
        lo, hi = args.from_, args.to
        if lo is None or hi is None or lo < 1 or hi < lo:
            raise UsageError("k sweep needs 1 <= --from <= --to")
        values = list(range(lo, hi + 1))
    else:
        values = parse_grid(args.grid or "0:1:0.2")
    graph, splits = _load_graph(effective)
    out = Path(effective.get("out") or Path("runs") / f"{graph.name or 'run'}-sweep-{args.axis}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config({**effective, "axis": args.axis}),
                                    encoding="utf-8")
    rows = sweep(graph, config, settings, args.axis, values, splits, effective.get("workers"))
    write_sweep(rows, out / "sweep.tsv")
    for point, report in rows:
        label = " ".join(f"{k}={v:g}" for k, v in point.items())
        print(f"{label}\t{report.mean_acc:.9g} +/- {report.std_acc:.9g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise FileNotFoundError(f"{ckpt}: checkpoint not found")
    graph = load_dataset(args.data)
    model = load_checkpoint(ckpt, graph)
    out = Path(args.out or ckpt.parent)
    out.mkdir(parents=True, exist_ok=True)
    result = model.forward(np.empty(0, dtype=np.int64))
    H = result.H.value
    dist = degree_distribution(H, graph.labels, model.support)
    (out / "degree_dist.json").write_text(json.dumps(dist.to_dict(), indent=2) + "\n",
                                          encoding="utf-8")
    thm = theorem_check(result.Z.value, H, model.support, max_iter=args.max_iter, tol=args.tol)
    thm = {k: (float(f"{v:.9g}") if isinstance(v, float) else v) for k, v in thm.items()}
    (out / "theorem1.json").write_text(json.dumps(thm, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    write_embeddings(result.Z.value, graph.labels, out / "embeddings.tsv")
    print(f"intra-class mean H {dist.intra_mean:.9g}, inter-class mean H {dist.inter_mean:.9g}; "
          f"fixed-point residual {thm['residual']:.3g} after {thm['iterations']} iterations")
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        graph = generate_synthetic(args.n, args.classes, args.h, args.degree, args.features,
                                   args.signal, args.seed, split_count=args.splits)
    except GraphError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out or f"synthetic-h{args.h:g}-s{args.seed}")
    save_dataset(graph, out)
    print(f"wrote {out}: n={graph.n} edges={graph.num_edges} "
          f"homophily={homophily_ratio(graph):.9g}")
    return EXIT_OK


def cmd_splits(args) -> int:
    graph = load_dataset(args.data)
    splits = generate_splits(graph, args.count, args.seed)
    target = Path(args.out) if args.out else Path(args.data) / "splits.json"
    save_splits(splits, target)
    print(f"wrote {len(splits)} splits to {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hoggcn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train on every split and report mean +/- std accuracy")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="grid over k or alpha x beta")
    _add_config_flags(p)
    p.add_argument("--axis", choices=("k", "alphabeta"), required=True)
    p.add_argument("--from", dest="from_", type=int, default=1)
    p.add_argument("--to", type=int, default=6)
    p.add_argument("--grid", help="start:stop:step for alpha and beta (default 0:1:0.2)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="homophily-degree histograms, fixed point, embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("generate", help="write a synthetic dataset directory")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--h", type=float, default=0.5)
    p.add_argument("--degree", type=float, default=8.0)
    p.add_argument("--features", type=int, default=32)
    p.add_argument("--signal", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("splits", help="regenerate splits.json for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: <data>/splits.json)")
    p.set_defaults(func=cmd_splits)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hoggcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, GraphError, FileNotFoundError, ValueError, RuntimeError,
            OSError) as exc:
        print(f"hoggcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
