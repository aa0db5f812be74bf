import csv
import json
from pathlib import Path

import numpy as np
import pytest

from cycleqd import params as P
from cycleqd import runio
from cycleqd.ablation import VARIANTS, split_budget, variant_configs
from cycleqd.cli import main
from cycleqd.engine import RunConfig, train
from cycleqd.tasks import build_suite, evaluate_all, make_analytic_suite


def cli(*argv):
    return main([str(a) for a in argv] + ["--quiet"])


def tree(root: Path, skip=("logs/timing.csv",)) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and str(p.relative_to(root)) not in skip
    }


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "r"
    assert cli("run", "--out", out, "--seed", 2, "--generations", 12, "--set", "snapshot_every=5") == 0
    return out


class TestRun:
    def test_layout(self, short_run):
        for rel in ["manifest.json", "suite.json", "base.json", "logs/generations.csv", "logs/timing.csv",
                    "result/aggregated.json", "result/summary.json"]:
            assert (short_run / rel).is_file(), rel
        gens = sorted(int(p.name.split("-")[1]) for p in (short_run / "snapshots").iterdir())
        assert gens == [0, 5, 10, 12]
        assert len(list((short_run / "snapshots" / "gen-12").glob("archive-*.json"))) == 3

    def test_generation_log(self, short_run):
        rows = runio.read_generation_log(short_run / "logs" / "generations.csv")
        assert [int(r["generation"]) for r in rows] == list(range(1, 13))
        assert [int(r["active_task"]) for r in rows] == [(t - 1) % 3 for t in range(1, 13)]

    def test_matches_in_process(self, short_run):
        cfg = RunConfig(seed=2, generations=12, snapshot_every=5)
        suite = make_analytic_suite(seed=2)
        res = train(cfg, suite.experts, suite.base, suite.tasks)
        assert P.load(short_run / "result" / "aggregated.json").equals(res.aggregated)

    def test_zero_generations(self, tmp_path):
        assert cli("run", "--out", tmp_path, "--generations", 0) == 0
        assert sorted(p.name for p in (tmp_path / "snapshots").iterdir()) == ["gen-0"]
        summary = runio.read_json(tmp_path / "result" / "summary.json")
        assert len(summary["fitness"]) == 3

    def test_deterministic_bytes(self, tmp_path):
        for d, w in (("a", 1), ("b", 1), ("c", 3)):
            assert cli("run", "--out", tmp_path / d, "--seed", 4, "--generations", 9, "--workers", w) == 0
        a = tree(tmp_path / "a")
        assert a == tree(tmp_path / "b")
        c = tree(tmp_path / "c")
        # the worker count is recorded in the manifest; everything else must agree
        assert {k: v for k, v in a.items() if k != "manifest.json"} == {k: v for k, v in c.items() if k != "manifest.json"}

    def test_mutation_override_recorded(self, tmp_path):
        assert cli("run", "--out", tmp_path, "--generations", 3, "--mutation", "gaussian") == 0
        assert runio.read_json(tmp_path / "manifest.json")["config"]["mutation_mode"] == "gaussian"

    def test_manifest_replay(self, short_run, tmp_path):
        assert cli("run", "--config", short_run / "manifest.json", "--out", tmp_path) == 0
        assert tree(tmp_path) == tree(short_run)

    def test_bad_config_exit_2(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bins": [0, 0, 0]}))
        assert cli("run", "--config", cfg, "--out", tmp_path / "o") == 2
        assert cli("run", "--set", "cycle=fixed:7", "--out", tmp_path / "o") == 2
        assert cli("run", "--config", tmp_path / "missing.json", "--out", tmp_path / "o") == 2


class TestSnapshots:
    def test_round_trip(self, short_run):
        suite = make_analytic_suite(seed=2)
        res = train(RunConfig(seed=2, generations=12), suite.experts, suite.base, suite.tasks)
        back = runio.read_snapshot(short_run / "snapshots" / "gen-12")
        for a, b in zip(res.archives, back):
            assert a.cells.keys() == b.cells.keys()
            for c in a.cells:
                assert a.cells[c].fitness == b.cells[c].fitness
                assert a.cells[c].tv.equals(b.cells[c].tv)

    def test_external_refs(self, tmp_path, short_run):
        archives = runio.read_snapshot(short_run / "snapshots" / "gen-12")
        runio.write_snapshot(tmp_path, archives, inline_limit=10)
        assert any((tmp_path / "tv").iterdir())
        data = runio.read_json(tmp_path / "archive-0.json")
        assert all("ref" in c["task_vector"] for c in data["cells"])
        back = runio.read_snapshot(tmp_path)
        for a, b in zip(archives, back):
            assert all(a.cells[c].tv.equals(b.cells[c].tv) for c in a.cells)


class TestAggregate:
    def test_summary_matches_reevaluation(self, short_run, tmp_path):
        snap = short_run / "snapshots" / "gen-5"
        assert cli("aggregate", snap, "--out", tmp_path) == 0
        merged = P.load(tmp_path / "aggregated.json")
        suite = build_suite(runio.read_json(short_run / "suite.json"))
        summary = runio.read_json(tmp_path / "summary.json")
        assert summary["fitness"] == list(evaluate_all(merged, suite.tasks))
        assert sum(summary["beta"]) == pytest.approx(1.0, abs=1e-12)

    def test_final_snapshot_reproduces_result(self, short_run, tmp_path):
        assert cli("aggregate", short_run / "snapshots" / "gen-12", "--out", tmp_path) == 0
        assert P.load(tmp_path / "aggregated.json").equals(P.load(short_run / "result" / "aggregated.json"))

    def test_empty_archive_exit_1(self, short_run, tmp_path):
        snap = tmp_path / "snap"
        snap.mkdir()
        for k in range(3):
            data = runio.read_json(short_run / "snapshots" / "gen-0" / f"archive-{k}.json")
            data["cells"] = []
            runio.write_json(snap / f"archive-{k}.json", data)
        assert cli("aggregate", snap, "--run-dir", short_run, "--out", tmp_path / "o") == 1

    def test_missing_snapshot_exit_2(self, tmp_path):
        assert cli("aggregate", tmp_path / "nope", "--run-dir", tmp_path) == 2


class TestSimilarity:
    def test_matches_in_process(self, short_run, tmp_path):
        suite = make_analytic_suite(seed=2)
        paths = []
        for i in (0, 1):
            paths.append(tmp_path / f"m{i}.json")
            P.save(suite.experts[i], paths[-1])
        assert cli("similarity", *paths, short_run / "base.json", "--out", tmp_path) == 0
        got = runio.read_json(tmp_path / "similarity.json")
        tvs = [P.compute_task_vector(e, suite.base) for e in suite.experts[:2]]
        assert got["similarity"] == P.model_similarity(*tvs)
        assert set(got["entries"]) == {"layer0.weight", "layer1.weight"}

    def test_no_matrices_exit_1(self, tmp_path):
        for name, v in (("a", 1.0), ("b", 2.0), ("base", 0.0)):
            P.save(P.ParameterSet((("bias", np.full(3, v)), ("row", np.full((1, 4), v)))), tmp_path / f"{name}.json")
        assert cli("similarity", tmp_path / "a.json", tmp_path / "b.json", tmp_path / "base.json", "--out", tmp_path) == 1


class TestHeatmap:
    def test_cells_and_quality(self, short_run, tmp_path):
        snap = short_run / "snapshots" / "gen-12"
        assert cli("heatmap", snap, "--out", tmp_path) == 0
        for k in range(3):
            with open(tmp_path / f"archive-{k}.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
            assert len(rows) == 15 * 15
            data = runio.read_json(snap / f"archive-{k}.json")
            by_cell = {tuple(c["cell"]): c for c in data["cells"]}
            bc = [t for t in range(3) if t != k]
            filled = 0
            for r in rows:
                cell = tuple(int(r[f"bin_task{t}"]) for t in bc)
                if cell in by_cell:
                    filled += 1
                    assert float(r["quality"]) == by_cell[cell]["fitness"][k]
                    assert int(r["genome_id"]) == by_cell[cell]["genome_id"]
                else:
                    assert r["quality"] == "NA"
            assert filled == len(by_cell)

    def test_matches_run_heatmap(self, short_run, tmp_path):
        assert cli("heatmap", short_run / "snapshots" / "gen-5", "--out", tmp_path) == 0
        for k in range(3):
            assert (tmp_path / f"archive-{k}.csv").read_bytes() == (short_run / "heatmaps" / "gen-5" / f"archive-{k}.csv").read_bytes()


class TestAblate:
    def test_split_budget(self):
        assert split_budget(300, 3) == [100, 100, 100]
        assert split_budget(10, 3) == [4, 3, 3]
        assert sum(split_budget(7, 4)) == 7

    def test_variant_configs(self):
        cfg = RunConfig(generations=10)
        fixed = variant_configs(cfg, VARIANTS[0])
        assert [c.cycle for c in fixed] == ["fixed:0", "fixed:1", "fixed:2"]
        assert sum(c.generations for c in fixed) == 10
        assert all(c.mutation_mode == "none" and c.sampling.mode == "random" for c in fixed)
        last = variant_configs(cfg, VARIANTS[4])
        assert len(last) == 1 and last[0].mutation_mode == "svd" and last[0].sampling.mode == "elite"

    def test_csv_and_cyclic_equivalence(self, tmp_path):
        assert cli("ablate", "--out", tmp_path / "abl", "--generations", 6, "--seeds", 1, 2) == 0
        with open(tmp_path / "abl" / "ablation.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5 * 2
        assert {r["variant"] for r in rows} == {v.label for v in VARIANTS}
        # the last trial is exactly the default run
        assert cli("run", "--out", tmp_path / "run", "--generations", 6, "--seed", 2) == 0
        summary = runio.read_json(tmp_path / "run" / "result" / "summary.json")
        row = next(r for r in rows if r["trial"] == "4" and r["seed"] == "2")
        assert float(row["mean_fitness"]) == summary["mean_fitness"]
        assert [float(row[f"fitness_task{k}"]) for k in range(3)] == summary["fitness"]
