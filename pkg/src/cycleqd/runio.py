"""On-disk experiment layout.

    <run>/manifest.json
    <run>/suite.json
    <run>/base.json
    <run>/logs/generations.csv
    <run>/logs/timing.csv
    <run>/snapshots/gen-<t>/archive-<k>.json
    <run>/heatmaps/gen-<t>/archive-<k>.csv
    <run>/result/aggregated.json
    <run>/result/summary.json

Everything except ``logs/timing.csv`` is a deterministic function of the
manifest.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from . import params as P
from .archive import Archive, Genome, archive_from_dict, archive_to_dict, elite_of
from .engine import GenerationLog
from .operators import softmax_weights

# task vectors larger than this are written to their own file
INLINE_LIMIT = 100_000
EMPTY = "NA"

LOG_HEADER = ["generation", "active_task", "parent1", "parent2", "child", "fitness", "placements", "error"]


def write_json(path: Path, data, indent: int | None = 2) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=indent)
        fh.write("\n")


def read_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def fmt(x: float) -> str:
    return repr(float(x))


def snapshot_dir(run: Path, t: int) -> Path:
    return run / "snapshots" / f"gen-{t}"


def heatmap_dir(run: Path, t: int) -> Path:
    return run / "heatmaps" / f"gen-{t}"


def write_snapshot(directory: Path, archives: Sequence[Archive], inline_limit: int = INLINE_LIMIT) -> None:
    directory.mkdir(parents=True, exist_ok=True)

    def payload(g: Genome) -> dict:
        if g.tv.size <= inline_limit:
            return {"inline": g.tv.to_json_dict()}
        ref = f"tv/{g.id}.json"
        target = directory / ref
        if not target.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
            P.save(g.tv, target)
        return {"ref": ref}

    for a in archives:
        write_json(directory / f"archive-{a.quality_task}.json", archive_to_dict(a, payload), indent=None)


def read_snapshot(directory: Path) -> list[Archive]:
    directory = Path(directory)
    files = sorted(directory.glob("archive-*.json"), key=lambda p: int(p.stem.split("-")[1]))
    if not files:
        raise FileNotFoundError(f"no archive-<k>.json files in {directory}")

    def resolve(ref: dict):
        if "inline" in ref:
            return P.from_json_dict(ref["inline"])
        return P.load(directory / ref["ref"])

    archives = [archive_from_dict(read_json(f), resolve) for f in files]
    for k, a in enumerate(archives):
        if a.quality_task != k:
            raise ValueError(f"{directory}: archive files are not numbered 0..K-1")
    return archives


def heatmap_rows(archive: Archive) -> tuple[list[str], list[list[str]]]:
    header = [f"bin_task{k}" for k in archive.bc_tasks] + ["quality", "genome_id"]
    rows = []
    for cell in archive.all_cells():
        g = archive.cells.get(cell)
        tail = [EMPTY, EMPTY] if g is None else [fmt(archive.quality(g)), str(g.id)]
        rows.append([str(i) for i in cell] + tail)
    return header, rows


def write_heatmaps(directory: Path, archives: Sequence[Archive]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for a in archives:
        header, rows = heatmap_rows(a)
        with open(directory / f"archive-{a.quality_task}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


def log_row(entry: GenerationLog) -> list[str]:
    fit = "" if entry.fitness is None else ";".join(fmt(f) for f in entry.fitness)
    return [
        str(entry.generation), str(entry.active_task), str(entry.parent_ids[0]), str(entry.parent_ids[1]),
        str(entry.child_id), fit, ";".join(entry.placements), entry.error,
    ]


class GenerationLogWriter:
    """Append-only CSV writer, flushed per row so a crash keeps completed generations."""

    def __init__(self, run: Path):
        (run / "logs").mkdir(parents=True, exist_ok=True)
        self._log = open(run / "logs" / "generations.csv", "w", encoding="utf-8", newline="")
        self._timing = open(run / "logs" / "timing.csv", "w", encoding="utf-8", newline="")
        self._w = csv.writer(self._log, lineterminator="\n")
        self._tw = csv.writer(self._timing, lineterminator="\n")
        self._w.writerow(LOG_HEADER)
        self._tw.writerow(["generation", "elapsed_s"])

    def __call__(self, entry: GenerationLog) -> None:
        self._w.writerow(log_row(entry))
        self._tw.writerow([entry.generation, f"{entry.elapsed:.6f}"])
        self._log.flush()
        self._timing.flush()

    def close(self):
        self._log.close()
        self._timing.close()


def read_generation_log(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(aggregated: P.ParameterSet, archives: Sequence[Archive], tasks, generation: int | None = None) -> dict:
    from .tasks import evaluate_all

    elites = [elite_of(a) for a in archives]
    qualities = [a.quality(g) for a, g in zip(archives, elites)]
    fit = evaluate_all(aggregated, tasks)
    out = {
        "fitness": list(fit),
        "mean_fitness": float(np.mean(fit)),
        "elites": [
            {"archive": a.quality_task, "genome_id": g.id, "birth_generation": g.birth_generation, "quality": q}
            for a, g, q in zip(archives, elites, qualities)
        ],
        "beta": softmax_weights(qualities).tolist(),
    }
    if generation is not None:
        out["generation"] = generation
    return out


def default_out_root() -> Path:
    return Path(os.environ.get("CYCLEQD_OUT_ROOT", "runs"))
