"""Cyclic multi-archive MAP-Elites driver.

The loop seeds one archive per task with the experts, then for each
generation picks the active archive, samples two parents from it, merges
and mutates them, evaluates the child on every task and offers it to all
archives. The final model is the softmax aggregate of the per-archive elites.
"""
from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .archive import (
    Archive,
    BinSpec,
    Genome,
    SamplingParams,
    elite_of,
    sample_parents,
    seed_with_experts,
    update_archive,
)
from .errors import ConfigurationError, DegenerateBoundsError
from .operators import (
    CrossoverParams,
    MutationParams,
    aggregate,
    crossover,
    gaussian_mutate,
    svd_mutate,
)
from .params import ParameterSet, TaskVector, add_scaled, compute_task_vector

log = logging.getLogger(__name__)

MUTATION_MODES = ("svd", "gaussian", "none")
LOWER_FRACTION = 0.85
UPPER_FRACTION = 1.15


def derive_stream(master_seed: int, purpose: str, generation: int) -> np.random.Generator:
    """Independent generator keyed by (seed, purpose, generation)."""
    tag = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")
    ss = np.random.SeedSequence([master_seed & (2**64 - 1), tag, int(generation)])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RunConfig:
    num_tasks: int = 3
    generations: int = 300
    bins: tuple[int, ...] = (15, 15, 15)
    # None means the 85%/115% rule over expert scores
    bounds: tuple[tuple[float, float], ...] | None = None
    crossover: CrossoverParams = field(default_factory=CrossoverParams)
    mutation: MutationParams = field(default_factory=MutationParams)
    mutation_mode: str = "svd"
    sampling: SamplingParams = field(default_factory=SamplingParams)
    cycle: str = "cyclic"
    seed: int = 0
    snapshot_every: int = 100
    eval_workers: int = 1
    suite: dict = field(default_factory=lambda: {"family": "analytic"})

    def __post_init__(self):
        if self.num_tasks < 2:
            raise ConfigurationError("num_tasks must be at least 2")
        if self.generations < 0:
            raise ConfigurationError("generations must be >= 0")
        bins = self.bins
        if isinstance(bins, int):
            bins = (bins,) * self.num_tasks
        bins = tuple(int(b) for b in bins)
        if len(bins) != self.num_tasks or min(bins) < 1:
            raise ConfigurationError(f"need {self.num_tasks} positive bin counts, got {bins}")
        object.__setattr__(self, "bins", bins)
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != self.num_tasks or any(lo >= hi for lo, hi in bounds):
                raise ConfigurationError(f"need {self.num_tasks} (lower < upper) bound pairs, got {bounds}")
            object.__setattr__(self, "bounds", bounds)
        if self.mutation_mode not in MUTATION_MODES:
            raise ConfigurationError(f"mutation_mode must be one of {MUTATION_MODES}")
        self.fixed_task  # validates cycle
        if self.snapshot_every < 1:
            raise ConfigurationError("snapshot_every must be >= 1")
        if self.eval_workers < 1:
            raise ConfigurationError("eval_workers must be >= 1")

    @property
    def fixed_task(self) -> int | None:
        if self.cycle == "cyclic":
            return None
        if self.cycle.startswith("fixed:"):
            try:
                k = int(self.cycle.split(":", 1)[1])
            except ValueError:
                raise ConfigurationError(f"bad cycle mode {self.cycle!r}") from None
            if not 0 <= k < self.num_tasks:
                raise ConfigurationError(f"fixed task {k} out of range for K={self.num_tasks}")
            return k
        raise ConfigurationError(f"cycle must be 'cyclic' or 'fixed:<k>', got {self.cycle!r}")

    def active_task(self, t: int) -> int:
        """Active archive for generation ``t`` (1-based); tasks are 0-based."""
        k = self.fixed_task
        return (t - 1) % self.num_tasks if k is None else k

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bins"] = list(self.bins)
        d["bounds"] = None if self.bounds is None else [list(b) for b in self.bounds]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "crossover" in data:
                data["crossover"] = CrossoverParams(**data["crossover"])
            if "mutation" in data:
                data["mutation"] = MutationParams(**data["mutation"])
            if "sampling" in data:
                data["sampling"] = SamplingParams(**data["sampling"])
            if isinstance(data.get("bins"), list):
                data["bins"] = tuple(data["bins"])
            if data.get("bounds") is not None:
                data["bounds"] = tuple(tuple(b) for b in data["bounds"])
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def auto_bounds(expert_fitness, bins: Sequence[int] | int = 15) -> BinSpec:
    """Bin bounds from 85% of the weakest and 115% of the strongest expert score per task."""
    f = np.atleast_2d(np.asarray(expert_fitness, dtype=np.float64))
    if f.shape[0] < 1:
        raise ConfigurationError("auto_bounds needs at least one expert")
    k = f.shape[1]
    if isinstance(bins, int):
        bins = (bins,) * k
    lower = LOWER_FRACTION * f.min(axis=0)
    upper = UPPER_FRACTION * f.max(axis=0)
    for i, (lo, hi) in enumerate(zip(lower, upper)):
        if not lo < hi:
            raise DegenerateBoundsError(
                f"task {i}: expert scores give empty bin range [{lo}, {hi}]; set explicit bounds in the config"
            )
    return BinSpec(tuple(lower), tuple(upper), tuple(bins))


@dataclass
class GenerationLog:
    generation: int
    active_task: int
    parent_ids: tuple[int, int]
    child_id: int
    fitness: tuple[float, ...] | None
    placements: tuple[str, ...]
    elapsed: float = 0.0
    error: str = ""


class Evaluator:
    """Evaluates a task vector on every task, optionally in parallel.

    Results are collected in task order, so they do not depend on the
    number of workers.
    """

    def __init__(self, base: ParameterSet, tasks: Sequence, workers: int = 1):
        self.base = base
        self.tasks = list(tasks)
        self.workers = workers
        self.calls = 0
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def __call__(self, tv: TaskVector) -> tuple[float, ...]:
        model = add_scaled(self.base, [(1.0, tv)])
        self.calls += len(self.tasks)
        if self._pool is None:
            scores = [task.evaluate(model) for task in self.tasks]
        else:
            scores = list(self._pool.map(lambda task: task.evaluate(model), self.tasks))
        return tuple(float(s) for s in scores)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def mutate(child: TaskVector, config: RunConfig, rng: np.random.Generator) -> TaskVector:
    if config.mutation_mode == "svd":
        return svd_mutate(child, config.mutation, rng)
    if config.mutation_mode == "gaussian":
        return gaussian_mutate(child, config.mutation, rng)
    return child


def qd_step(
    archives: Sequence[Archive],
    active: int,
    config: RunConfig,
    evaluate: Callable[[TaskVector], tuple[float, ...]],
    generation: int,
    child_id: int,
) -> tuple[Genome | None, GenerationLog]:
    """One generation: sample, merge, mutate, evaluate, offer to every archive."""
    start = time.perf_counter()
    p1, p2 = sample_parents(archives[active], config.sampling, derive_stream(config.seed, "sampling", generation))
    child_tv = crossover(p1.tv, p2.tv, config.crossover, derive_stream(config.seed, "crossover", generation))
    child_tv = mutate(child_tv, config, derive_stream(config.seed, "mutation", generation))
    try:
        fitness = evaluate(child_tv)
        child = Genome(child_tv, fitness, generation, child_id)
    except Exception as exc:  # noqa: BLE001 - a failed evaluation only drops this child
        log.warning("generation %d: child %d discarded: %s", generation, child_id, exc)
        return None, GenerationLog(
            generation, active, (p1.id, p2.id), child_id, None,
            ("discarded",) * len(archives), time.perf_counter() - start, str(exc),
        )
    placements = tuple("placed" if update_archive(a, child) else "rejected" for a in archives)
    return child, GenerationLog(
        generation, active, (p1.id, p2.id), child_id, fitness, placements, time.perf_counter() - start
    )


@dataclass
class TrainResult:
    archives: list[Archive]
    aggregated: ParameterSet
    logs: list[GenerationLog]
    bin_spec: BinSpec
    expert_genomes: list[Genome]
    evaluations: int
    snapshots: list[tuple[int, list[Archive]]] = field(default_factory=list)

    def elites(self) -> list[Genome]:
        return [elite_of(a) for a in self.archives]


def aggregate_elites(base: ParameterSet, archives: Sequence[Archive]) -> ParameterSet:
    elites = [elite_of(a) for a in archives]
    return aggregate(base, [(g.tv, a.quality(g)) for g, a in zip(elites, archives)])


def snapshot_generations(config: RunConfig) -> list[int]:
    gens = list(range(0, config.generations + 1, config.snapshot_every))
    if gens[-1] != config.generations:
        gens.append(config.generations)
    return gens


def train(
    config: RunConfig,
    experts: Sequence[ParameterSet],
    base: ParameterSet,
    tasks: Sequence,
    on_snapshot: Callable[[int, list[Archive]], None] | None = None,
    on_generation: Callable[[GenerationLog], None] | None = None,
    keep_snapshots: bool = False,
) -> TrainResult:
    if not experts:
        raise ConfigurationError("at least one expert is required")
    if len(tasks) != config.num_tasks:
        raise ConfigurationError(f"config has K={config.num_tasks} but {len(tasks)} task evaluators were given")
    for e in experts:
        if not e.compatible_with(base):
            raise ConfigurationError("experts and base are not shape-compatible")

    evaluate = Evaluator(base, tasks, config.eval_workers)
    try:
        expert_genomes = []
        for i, e in enumerate(experts):
            tv = compute_task_vector(e, base)
            expert_genomes.append(Genome(tv, evaluate(tv), 0, i))
        if config.bounds is None:
            spec = auto_bounds([g.fitness for g in expert_genomes], config.bins)
        else:
            spec = BinSpec(
                tuple(lo for lo, _ in config.bounds), tuple(hi for _, hi in config.bounds), config.bins
            )
        archives = [Archive(k, spec) for k in range(config.num_tasks)]
        seed_with_experts(archives, expert_genomes)

        snap_at = set(snapshot_generations(config))
        snapshots = []

        def snapshot(t):
            copies = [a.copy() for a in archives]
            if keep_snapshots:
                snapshots.append((t, copies))
            if on_snapshot is not None:
                on_snapshot(t, copies)

        if 0 in snap_at:
            snapshot(0)
        logs = []
        next_id = len(expert_genomes)
        for t in range(1, config.generations + 1):
            active = config.active_task(t)
            _, entry = qd_step(archives, active, config, evaluate, t, next_id)
            next_id += 1
            logs.append(entry)
            if on_generation is not None:
                on_generation(entry)
            if t in snap_at:
                snapshot(t)
        aggregated = aggregate_elites(base, archives)
        return TrainResult(archives, aggregated, logs, spec, expert_genomes, evaluate.calls, snapshots)
    finally:
        evaluate.close()
