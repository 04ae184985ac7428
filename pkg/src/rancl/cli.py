"""Command-line front end: generate | train | detect | sweep | report.

Settings come from an optional JSON config (``--config``) whose fields can
each be overridden by a flag of the same name. The root seed is taken from,
in increasing priority: the config, the ``RCL_SEED`` environment variable,
``--seed``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from rancl import binarize as bz
from rancl import datagen, evaluate, graph, identify, twotower
from rancl.errors import SchemaError, StructuralError, TrainingError, UndefinedMetricError
from rancl.metrics import f1_binary

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DEFAULT_BINARIZERS = ["sparsemax", "threshold:tuned", "topk:auto", "quantile:auto"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class ExperimentConfig:
    spec: datagen.ConflictModelSpec = field(default_factory=datagen.default_topology)
    hp: twotower.Hyperparams = field(default_factory=twotower.Hyperparams)
    binarizers: list[str] = field(default_factory=lambda: list(DEFAULT_BINARIZERS))
    n_runs: int = 20
    output_dir: str = "out"
    targets: dict = field(default_factory=lambda: {"f1": 1.0, "accuracy": 0.8, "auc": 0.8})
    length: int = evaluate.DEFAULT_LENGTH
    seed: int = 0
    match: str = "strict"
    max_path_len: int = 2
    jobs: int | None = None


_CONFIG_KEYS = {"spec", "hp", "binarizers", "n_runs", "output_dir", "targets", "length", "seed", "match",
                "max_path_len", "jobs"}


def load_config(path) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown config fields {sorted(unknown)}")
    if "spec" in obj and obj["spec"] != "default":
        cfg.spec = datagen.ConflictModelSpec.from_json(obj["spec"])
    if "hp" in obj:
        try:
            cfg.hp = twotower.hyperparams_from_dict(obj["hp"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: hp: {exc}") from None
    if "targets" in obj:
        cfg.targets = {**cfg.targets, **obj["targets"]}
    for key in ("binarizers", "n_runs", "output_dir", "length", "seed", "match", "max_path_len", "jobs"):
        if key in obj:
            setattr(cfg, key, obj[key])
    return cfg


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    env = os.environ.get("RCL_SEED")
    if env is not None:
        try:
            cfg.seed = int(env)
        except ValueError:
            raise UsageError(f"RCL_SEED must be an integer, got {env!r}") from None
    for key in ("n_runs", "length", "seed", "match", "max_path_len", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "output", None) is not None:
        cfg.output_dir = args.output
    if getattr(args, "binarizer", None):
        cfg.binarizers = list(args.binarizer)
    hp_over = {k: getattr(args, k) for k in ("epochs", "learning_rate", "latent_dim", "hidden")
               if getattr(args, k, None) is not None}
    cfg.hp = replace(cfg.hp, **hp_over).validate()
    if cfg.seed < 0:
        raise UsageError("seed must be >= 0")
    if cfg.match not in ("strict", "agents"):
        raise UsageError(f"unknown match mode {cfg.match!r}")
    return cfg


def _print(msg=""):
    print(msg, flush=True)


# -- subcommands ---------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig, args) -> int:
    spec = cfg.spec.with_seed(cfg.seed)
    ds = datagen.generate(spec, cfg.length)
    out = datagen.write_dataset(ds, cfg.output_dir)
    d = ds.dims
    density = float(np.mean(ds.labels))
    _print(f"wrote {out}: {d.n_agents} agents, {d.n_params} params, {d.n_kpis} KPIs, "
           f"L={ds.length}, label density {density:.4f}")
    return EXIT_OK


def _check_binarizer(name):
    if name in ("threshold:tuned", "topk:auto", "quantile:auto"):
        return
    try:
        bz.parse_binarizer(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _train(ds, cfg: ExperimentConfig):
    return twotower.train(ds, replace(cfg.hp, seed=cfg.seed))


def cmd_train(cfg: ExperimentConfig, args) -> int:
    ds = datagen.read_dataset(args.dataset)
    params, trace = _train(ds, cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    twotower.save_params(params, out / "model.json")
    trace.write_csv(out / "trace.csv", append=False)
    last = trace.records[-1] if trace.records else None
    summary = "no epochs run" if last is None else (
        f"epoch {last.epoch}: loss {last.loss:.6g}, accuracy {last.accuracy:.4f}, auc {last.auc:.4f}")
    _print(f"wrote {out / 'model.json'} and {out / 'trace.csv'} ({summary})")
    return EXIT_OK


def cmd_detect(cfg: ExperimentConfig, args) -> int:
    ds = datagen.read_dataset(args.dataset)
    if len(cfg.binarizers) != 1:
        raise UsageError("detect takes exactly one --binarizer")
    name = cfg.binarizers[0]
    _check_binarizer(name)
    if name in ("threshold:tuned", "topk:auto", "quantile:auto"):
        method = evaluate.resolve_binarizers([name], ds.spec, cfg.hp, cfg.seed, ds.length)[0]
    else:
        method = bz.parse_binarizer(name)
    if args.model is not None:
        params = twotower.load_params(args.model)
    else:
        params, _ = _train(ds, cfg)
    s = twotower.score_matrix(ds, params)
    learned = bz.binarize(s, method)
    full = graph.boxplus_augment(learned, ds.known)
    found = identify.identify_conflicts(full, cfg.max_path_len)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph.write_score_csv(out / "scores.csv", s)
    graph.write_learned_csv(out / "learned.csv", learned, ds.dims)
    graph.write_full_csv(out / "full.csv", full)
    identify.write_conflicts(out / "conflicts.csv", found, ds.dims)
    truth = identify.ground_truth_conflicts(ds.spec, cfg.max_path_len)
    f1_graph = f1_binary(learned.matrix, ds.truth_learned.matrix)[2]
    parts = [f"graph F1 {f1_graph:.4f}"]
    for kind in identify.ConflictKind:
        p, t = found.of_kind(kind), truth.of_kind(kind)
        f1 = f1_binary(p.agent_pairs(), t.agent_pairs())[2] if cfg.match == "agents" else f1_binary(set(p), set(t))[2]
        parts.append(f"{kind} {len(p)} found, F1 {f1:.4f}")
    _print(f"{method}: " + "; ".join(parts))
    _print(f"wrote scores.csv, learned.csv, full.csv, conflicts.csv to {out}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    for name in cfg.binarizers:
        _check_binarizer(name)
    result = evaluate.run_sweep(
        cfg.spec, cfg.hp, cfg.n_runs, cfg.binarizers, root_seed=cfg.seed, length=cfg.length,
        jobs=cfg.jobs if cfg.jobs is not None else (os.cpu_count() or 1), match=cfg.match,
        max_path_len=cfg.max_path_len, f1_target=cfg.targets["f1"],
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluate.write_sweep_csv(out / "sweep.csv", result)
    rows = result.summary()
    evaluate.write_summary_csv(out / "summary.csv", rows)
    for run_id, epoch in sorted(result.failures.items()):
        _print(f"run {run_id} diverged at epoch {epoch}")
    _print(render_summary(rows))
    _print(f"wrote {out / 'sweep.csv'} and {out / 'summary.csv'}")
    return EXIT_OK


def render_summary(rows) -> str:
    """Aligned text table of summary rows; unreached medians show as NA."""
    def num(x):
        return "NA" if not math.isfinite(x) else f"{x:g}"

    table = [["binarizer", "task", "median", "q1", "q3", "reached"]]
    for r in rows:
        table.append([r.binarizer, r.task, num(r.median_epochs), num(r.q1), num(r.q3), f"{r.n_reached}/{r.n_runs}"])
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        cells = [c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def cmd_report(cfg: ExperimentConfig, args) -> int:
    path = Path(args.summary) if args.summary else Path(cfg.output_dir) / "summary.csv"
    try:
        rows = evaluate.read_summary_csv(path)
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    _print(render_summary(rows))
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rancl", description="Learn parameter/KPI interaction graphs and detect agent conflicts.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *, hp=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--output", "--output-dir", dest="output", help="output directory")
        p.add_argument("--seed", type=int, help="root seed (overrides RCL_SEED and the config)")
        if hp:
            p.add_argument("--epochs", type=int, help="training epochs")
            p.add_argument("--learning-rate", type=float, help="Adam learning rate")
            p.add_argument("--latent-dim", type=int, help="embedding dimension H")
            p.add_argument("--hidden", type=int, help="hidden layer width")

    p = sub.add_parser("generate", help="write a synthetic dataset directory")
    common(p, hp=False)
    p.add_argument("--length", type=int, help="samples per entity (L)")

    p = sub.add_parser("train", help="train the two-tower model on a dataset")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory")

    p = sub.add_parser("detect", help="score, binarize and identify conflicts")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--model", help="model JSON; trains afresh when omitted")
    p.add_argument("--binarizer", action="append",
                   help="sparsemax | sparsemax:masked | threshold:<tau> | topk:<k> | quantile:<q> "
                        "| threshold:tuned | topk:auto | quantile:auto (default sparsemax)")
    p.add_argument("--max-path-len", dest="max_path_len", type=int, help="longest implicit chain (default 2)")
    p.add_argument("--match", choices=["strict", "agents"], help="conflict matching for the F1 printout")

    p = sub.add_parser("sweep", help="multi-seed epochs-to-target experiment")
    common(p)
    p.add_argument("--n-runs", "--runs", dest="n_runs", type=int, help="number of seeded runs")
    p.add_argument("--length", type=int, help="samples per entity (L)")
    p.add_argument("--binarizer", action="append", help="repeatable; same forms as for detect")
    p.add_argument("--jobs", type=int, help="parallel runs (default: available cores)")
    p.add_argument("--match", choices=["strict", "agents"], help="conflict matching: full witness or agent pair")
    p.add_argument("--max-path-len", dest="max_path_len", type=int, help="longest implicit chain (default 2)")

    p = sub.add_parser("report", help="print summary.csv as an aligned table")
    common(p, hp=False)
    p.add_argument("--summary", help="summary.csv path (default <output>/summary.csv)")
    return parser


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "detect": cmd_detect, "sweep": cmd_sweep,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "detect" and not getattr(args, "binarizer", None) and cfg.binarizers == DEFAULT_BINARIZERS:
            cfg.binarizers = ["sparsemax"]
        if args.command == "sweep" and (cfg.n_runs is None or cfg.n_runs < 1):
            raise UsageError("n_runs must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rancl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"rancl: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (SchemaError, StructuralError, UndefinedMetricError, ValueError, TypeError) as exc:
        print(f"rancl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rancl: I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
