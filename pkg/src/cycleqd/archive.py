"""Per-task MAP-Elites archives and parent sampling."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import EmptyArchiveError
from .params import TaskVector


@dataclass(frozen=True, eq=False)
class Genome:
    tv: TaskVector
    fitness: tuple[float, ...]
    birth_generation: int
    id: int

    def __post_init__(self):
        fit = tuple(float(f) for f in self.fitness)
        if not all(math.isfinite(f) for f in fit):
            raise ValueError(f"genome {self.id} has non-finite fitness {fit}")
        if self.birth_generation < 0:
            raise ValueError("birth_generation must be >= 0")
        object.__setattr__(self, "fitness", fit)

    @property
    def order_key(self) -> tuple[int, int]:
        return (self.birth_generation, self.id)


@dataclass(frozen=True)
class BinSpec:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    bins: tuple[int, ...]

    def __post_init__(self):
        lo, hi, d = tuple(map(float, self.lower)), tuple(map(float, self.upper)), tuple(map(int, self.bins))
        if not len(lo) == len(hi) == len(d):
            raise ValueError("lower, upper and bins must have one value per task")
        for k, (a, b, n) in enumerate(zip(lo, hi, d)):
            if not a < b:
                raise ValueError(f"task {k}: lower bound {a} must be below upper bound {b}")
            if n < 1:
                raise ValueError(f"task {k}: bin count must be >= 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "bins", d)

    @property
    def num_tasks(self) -> int:
        return len(self.bins)

    def task(self, k: int) -> tuple[float, float, int]:
        return self.lower[k], self.upper[k], self.bins[k]

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "bins": list(self.bins)}

    @classmethod
    def from_dict(cls, data) -> "BinSpec":
        return cls(tuple(data["lower"]), tuple(data["upper"]), tuple(data["bins"]))


def bin_index(f: float, lower: float, upper: float, bins: int) -> int:
    width = (upper - lower) / bins
    idx = math.floor((f - lower) / width)
    return min(max(idx, 0), bins - 1)


@dataclass(frozen=True)
class SamplingParams:
    alpha_low: float = 0.5
    alpha_high: float = 0.8
    mode: str = "elite"

    def __post_init__(self):
        if not 0 <= self.alpha_low <= self.alpha_high:
            raise ValueError(f"need 0 <= alpha_low <= alpha_high, got {self.alpha_low}, {self.alpha_high}")
        if self.mode not in ("elite", "random"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")


@dataclass
class Archive:
    quality_task: int
    spec: BinSpec
    cells: dict[tuple[int, ...], Genome] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.quality_task < self.spec.num_tasks:
            raise ValueError(f"quality task {self.quality_task} out of range")

    @property
    def bc_tasks(self) -> list[int]:
        return [k for k in range(self.spec.num_tasks) if k != self.quality_task]

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        return tuple(self.spec.bins[k] for k in self.bc_tasks)

    @property
    def lattice_size(self) -> int:
        return math.prod(self.lattice_shape)

    def all_cells(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(d) for d in self.lattice_shape))

    def cell_of(self, fitness: Sequence[float]) -> tuple[int, ...]:
        return tuple(bin_index(fitness[k], *self.spec.task(k)) for k in self.bc_tasks)

    def quality(self, g: Genome) -> float:
        return g.fitness[self.quality_task]

    def __len__(self) -> int:
        return len(self.cells)

    def occupied(self) -> list[tuple[tuple[int, ...], Genome]]:
        """Occupied cells in lexicographic cell order."""
        return sorted(self.cells.items())

    def genomes(self) -> list[Genome]:
        return [g for _, g in self.occupied()]

    def copy(self) -> "Archive":
        return Archive(self.quality_task, self.spec, dict(self.cells))


def update_archive(archive: Archive, g: Genome) -> bool:
    """Try to place ``g``; returns True when it was inserted."""
    if len(g.fitness) != archive.spec.num_tasks:
        raise ValueError(f"genome {g.id} has {len(g.fitness)} fitness values, expected {archive.spec.num_tasks}")
    cell = archive.cell_of(g.fitness)
    incumbent = archive.cells.get(cell)
    if incumbent is None or archive.quality(g) > archive.quality(incumbent):
        archive.cells[cell] = g
        return True
    return False


def seed_with_experts(archives: Sequence[Archive], experts: Sequence[Genome]) -> list[list[bool]]:
    """Place every expert into every archive; returns placed flags [archive][expert]."""
    return [[update_archive(a, g) for g in experts] for a in archives]


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    if hi == lo:
        return np.full_like(col, 0.5)
    return (col - lo) / (hi - lo)


def sampling_weights(archive: Archive, params: SamplingParams) -> np.ndarray:
    """Selection probabilities aligned with :meth:`Archive.occupied`."""
    genomes = archive.genomes()
    if not genomes:
        raise EmptyArchiveError(f"archive {archive.quality_task} is empty")
    n = len(genomes)
    if params.mode == "random":
        return np.full(n, 1.0 / n)
    fit = np.array([g.fitness for g in genomes])
    gamma = np.ones(n)
    for k in range(fit.shape[1]):
        gamma *= params.alpha_low + _minmax(fit[:, k]) * (params.alpha_high - params.alpha_low)
    total = gamma.sum()
    if total == 0.0:
        # only possible with alpha_low == 0; fall back to uniform
        return np.full(n, 1.0 / n)
    return gamma / total


def sample_parents(archive: Archive, params: SamplingParams, rng: np.random.Generator) -> tuple[Genome, Genome]:
    genomes = archive.genomes()
    p = sampling_weights(archive, params)
    i, j = rng.choice(len(genomes), size=2, replace=True, p=p)
    return genomes[i], genomes[j]


def elite_of(archive: Archive) -> Genome:
    if not archive.cells:
        raise EmptyArchiveError(f"archive {archive.quality_task} is empty")
    return max(archive.cells.values(), key=lambda g: (archive.quality(g), g.birth_generation, g.id))


def archive_to_dict(archive: Archive, payload: Callable[[Genome], dict]) -> dict:
    return {
        "quality_task": archive.quality_task,
        "bins": archive.spec.to_dict(),
        "lattice_shape": list(archive.lattice_shape),
        "cells": [
            {
                "cell": list(cell),
                "genome_id": g.id,
                "fitness": list(g.fitness),
                "birth_generation": g.birth_generation,
                "task_vector": payload(g),
            }
            for cell, g in archive.occupied()
        ],
    }


def archive_from_dict(data: dict, resolve: Callable[[dict], TaskVector]) -> Archive:
    archive = Archive(int(data["quality_task"]), BinSpec.from_dict(data["bins"]))
    for c in data["cells"]:
        g = Genome(resolve(c["task_vector"]), tuple(c["fitness"]), int(c["birth_generation"]), int(c["genome_id"]))
        archive.cells[tuple(c["cell"])] = g
    return archive
