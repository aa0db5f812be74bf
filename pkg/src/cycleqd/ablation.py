"""The five ablation trials: fixed-quality QD versus cyclic, mutation and sampling variants."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .archive import elite_of
from .engine import RunConfig, train
from .operators import aggregate
from .params import ParameterSet
from .tasks import Suite, evaluate_all


@dataclass(frozen=True)
class Variant:
    trial: int
    label: str
    cyclic: bool
    mutation_mode: str
    sampling_mode: str


VARIANTS = (
    Variant(0, "QD + No mutation + Random sampling", False, "none", "random"),
    Variant(1, "CycleQD + No mutation + Random sampling", True, "none", "random"),
    Variant(2, "CycleQD + Gaussian mutation + Random sampling", True, "gaussian", "random"),
    Variant(3, "CycleQD + SVD mutation + Random sampling", True, "svd", "random"),
    Variant(4, "CycleQD + SVD mutation + Elite sampling", True, "svd", "elite"),
)


def split_budget(generations: int, parts: int) -> list[int]:
    q, r = divmod(generations, parts)
    return [q + (1 if k < r else 0) for k in range(parts)]


def variant_configs(config: RunConfig, variant: Variant) -> list[RunConfig]:
    """Concrete run configs for a variant.

    The fixed-quality variant is K separate runs, run ``k`` using task ``k``
    as quality, that together spend the same number of generations as one
    cyclic run.
    """
    cfg = replace(
        config,
        mutation_mode=variant.mutation_mode,
        sampling=replace(config.sampling, mode=variant.sampling_mode),
        cycle="cyclic",
    )
    if variant.cyclic:
        return [cfg]
    budgets = split_budget(config.generations, config.num_tasks)
    return [replace(cfg, cycle=f"fixed:{k}", generations=n) for k, n in enumerate(budgets)]


def run_variant(config: RunConfig, variant: Variant, suite: Suite) -> tuple[ParameterSet, tuple[float, ...]]:
    configs = variant_configs(config, variant)
    if variant.cyclic:
        result = train(configs[0], suite.experts, suite.base, suite.tasks)
        merged = result.aggregated
    else:
        elites = []
        for k, cfg in enumerate(configs):
            result = train(cfg, suite.experts, suite.base, suite.tasks)
            g = elite_of(result.archives[k])
            elites.append((g.tv, g.fitness[k]))
        merged = aggregate(suite.base, elites)
    return merged, evaluate_all(merged, suite.tasks)


def run_ablation(config: RunConfig, suite_for_seed, seeds) -> list[dict]:
    """One row per (variant, seed) with the aggregated model's fitness."""
    rows = []
    for seed in seeds:
        suite = suite_for_seed(seed)
        cfg = replace(config, seed=seed)
        for v in VARIANTS:
            _, fit = run_variant(cfg, v, suite)
            rows.append({"trial": v.trial, "variant": v.label, "seed": seed, "mean_fitness": float(np.mean(fit)), "fitness": fit})
    return rows
