"""Command-line entry points: run, ablate, aggregate, similarity, heatmap.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import params as P
from . import runio
from .ablation import VARIANTS, run_ablation
from .engine import RunConfig, aggregate_elites, train
from .errors import ConfigurationError, EmptyArchiveError, UndefinedSimilarityError
from .tasks import build_suite, evaluate_all

log = logging.getLogger("cycleqd")

DEFAULT_ABLATION_SEEDS = (1, 2, 3, 4, 5)


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def load_config(args) -> RunConfig:
    """Defaults <- config file <- flag overrides."""
    data: dict = {}
    if args.config:
        try:
            data = runio.read_json(Path(args.config))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if "config" in data and isinstance(data["config"], dict):
            # a run manifest can be replayed directly
            data = data["config"]
    data = json.loads(json.dumps(data))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        _set_path(data, key, _parse_value(value))
    if args.seed is not None:
        data["seed"] = args.seed
    if args.generations is not None:
        data["generations"] = args.generations
    if getattr(args, "mutation", None):
        data["mutation_mode"] = args.mutation
    if getattr(args, "sampling", None):
        _set_path(data, "sampling.mode", args.sampling)
    if getattr(args, "cycle", None):
        data["cycle"] = args.cycle
    if getattr(args, "workers", None):
        data["eval_workers"] = args.workers
    if "num_tasks" not in data and "suite" in data and "num_tasks" in data["suite"]:
        data["num_tasks"] = data["suite"]["num_tasks"]
    if "bins" not in data:
        data["bins"] = [15] * int(data.get("num_tasks", 3))
    return RunConfig.from_dict(data)


def suite_for(config: RunConfig, seed: int | None = None):
    desc = dict(config.suite)
    desc.setdefault("num_tasks", config.num_tasks)
    if desc["num_tasks"] != config.num_tasks:
        raise ConfigurationError(f"suite has {desc['num_tasks']} tasks but config K={config.num_tasks}")
    return build_suite(desc, default_seed=config.seed if seed is None else seed)


def _out_dir(args, name: str, config: RunConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    tag = f"-seed{config.seed}" if config is not None else ""
    return runio.default_out_root() / f"{name}{tag}"


def cmd_run(args) -> int:
    config = load_config(args)
    out = _out_dir(args, "run", config)
    suite = suite_for(config)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config.to_dict()}
    runio.write_json(out / "manifest.json", manifest)
    runio.write_json(out / "suite.json", suite.descriptor)
    P.save(suite.base, out / "base.json")

    def on_snapshot(t, archives):
        runio.write_snapshot(runio.snapshot_dir(out, t), archives)
        runio.write_heatmaps(runio.heatmap_dir(out, t), archives)

    writer = runio.GenerationLogWriter(out)
    try:
        result = train(config, suite.experts, suite.base, suite.tasks, on_snapshot=on_snapshot, on_generation=writer)
    finally:
        writer.close()
    manifest["bin_spec"] = result.bin_spec.to_dict()
    manifest["evaluations"] = result.evaluations
    runio.write_json(out / "manifest.json", manifest)

    (out / "result").mkdir(exist_ok=True)
    P.save(result.aggregated, out / "result" / "aggregated.json")
    summary = runio.summarize(result.aggregated, result.archives, suite.tasks, config.generations)
    summary["experts"] = [list(g.fitness) for g in result.expert_genomes]
    summary["average_merge_fitness"] = list(evaluate_all(suite.average_merge(), suite.tasks))
    runio.write_json(out / "result" / "summary.json", summary)
    if not args.quiet:
        print(f"mean fitness {summary['mean_fitness']:.6f}  per task {', '.join(f'{f:.4f}' for f in summary['fitness'])}")
        print(f"outputs in {out}")
    return 0


def cmd_ablate(args) -> int:
    config = load_config(args)
    seeds = args.seeds or list(DEFAULT_ABLATION_SEEDS)
    out = _out_dir(args, "ablate")
    out.mkdir(parents=True, exist_ok=True)
    rows = run_ablation(config, lambda s: suite_for(config, s), seeds)
    with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "variant", "seed", "mean_fitness"] + [f"fitness_task{k}" for k in range(config.num_tasks)])
        for r in rows:
            w.writerow([r["trial"], r["variant"], r["seed"], runio.fmt(r["mean_fitness"])] + [runio.fmt(f) for f in r["fitness"]])
    runio.write_json(out / "manifest.json", {"config": config.to_dict(), "seeds": list(seeds)})
    if not args.quiet:
        for v in VARIANTS:
            vals = [r["mean_fitness"] for r in rows if r["trial"] == v.trial]
            print(f"{v.trial}  {v.label:<48s} mean over seeds {sum(vals) / len(vals):.6f}")
    return 0


def cmd_aggregate(args) -> int:
    snap = Path(args.snapshot_dir)
    run = Path(args.run_dir) if args.run_dir else snap.parent.parent
    try:
        archives = runio.read_snapshot(snap)
        base = P.load(run / "base.json")
        suite_desc = runio.read_json(run / "suite.json")
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"cannot read snapshot {snap}: {exc}") from exc
    try:
        merged = aggregate_elites(base, archives)
    except EmptyArchiveError as exc:
        raise CommandError(1, str(exc)) from exc
    suite = build_suite(suite_desc)
    out = Path(args.out) if args.out else snap
    out.mkdir(parents=True, exist_ok=True)
    P.save(merged, out / "aggregated.json")
    summary = runio.summarize(merged, archives, suite.tasks)
    runio.write_json(out / "summary.json", summary)
    if not args.quiet:
        print(f"mean fitness {summary['mean_fitness']:.6f}  beta {', '.join(f'{b:.4f}' for b in summary['beta'])}")
    return 0


def cmd_similarity(args) -> int:
    try:
        a, b, base = (P.load(p) for p in (args.model_a, args.model_b, args.base))
        tva, tvb = P.compute_task_vector(a, base), P.compute_task_vector(b, base)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"cannot load parameter sets: {exc}") from exc
    try:
        per_entry = P.similarity_breakdown(tva, tvb)
        s = P.model_similarity(tva, tvb)
    except UndefinedSimilarityError as exc:
        raise CommandError(1, f"{exc}; similarity is only defined over weight matrices with both dimensions > 1") from exc
    out = Path(args.out) if args.out else Path(".")
    runio.write_json(out / "similarity.json", {"similarity": s, "entries": per_entry})
    if not args.quiet:
        print(f"similarity {s:.6f}")
        for name, c in per_entry.items():
            print(f"  {name:<24s} {c:.6f}")
    return 0


def cmd_heatmap(args) -> int:
    snap = Path(args.snapshot_dir)
    try:
        archives = runio.read_snapshot(snap)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"cannot read snapshot {snap}: {exc}") from exc
    out = Path(args.out) if args.out else snap
    runio.write_heatmaps(out, archives)
    if not args.quiet:
        for a in archives:
            print(f"archive {a.quality_task}: {len(a)} of {a.lattice_size} cells occupied")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (a run manifest also works)")
    common.add_argument("--out", help="output directory (default: $CYCLEQD_OUT_ROOT/<command>...)")
    common.add_argument("--seed", type=int)
    common.add_argument("--generations", type=int)
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="cycleqd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one experiment")
    ablate = sub.add_parser("ablate", parents=[common], help="run the five ablation variants")
    for p in (run, ablate):
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (dotted path)")
        p.add_argument("--mutation", choices=["svd", "gaussian", "none"])
        p.add_argument("--sampling", choices=["elite", "random"])
        p.add_argument("--cycle", help="'cyclic' or 'fixed:<k>'")
        p.add_argument("--workers", type=int, help="parallel task evaluations per child")
    run.set_defaults(func=cmd_run)
    ablate.add_argument("--seeds", type=int, nargs="+")
    ablate.set_defaults(func=cmd_ablate)

    agg = sub.add_parser("aggregate", parents=[common], help="aggregate the elites of a snapshot")
    agg.add_argument("snapshot_dir")
    agg.add_argument("--run-dir", help="run directory holding base.json and suite.json")
    agg.set_defaults(func=cmd_aggregate)

    sim = sub.add_parser("similarity", parents=[common], help="singular-value similarity of two models")
    sim.add_argument("model_a")
    sim.add_argument("model_b")
    sim.add_argument("base")
    sim.set_defaults(func=cmd_similarity)

    heat = sub.add_parser("heatmap", parents=[common], help="export archive heatmap CSVs from a snapshot")
    heat.add_argument("snapshot_dir")
    heat.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
