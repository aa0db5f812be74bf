"""Genome-producing operators: merging crossover, mutations and aggregation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateCrossoverError,
    IncompatibleParametersError,
    InvalidFitnessError,
)
from .params import (
    ParameterSet,
    TaskVector,
    add_scaled,
    combine,
    is_mutable_matrix,
    svd_entry,
)

MAX_OMEGA_DRAWS = 100


@dataclass(frozen=True)
class CrossoverParams:
    mu: float = 1.0
    sigma: float = 0.03
    degenerate_threshold: float = 1e-6

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.degenerate_threshold > 0:
            raise ValueError(f"degenerate_threshold must be positive, got {self.degenerate_threshold}")


@dataclass(frozen=True)
class MutationParams:
    w_max: float = 0.3
    gaussian_sigma: float = 0.01

    def __post_init__(self):
        if not self.w_max > 0:
            raise ValueError(f"w_max must be positive, got {self.w_max}")
        if not self.gaussian_sigma > 0:
            raise ValueError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")


def merge_pair(p1: TaskVector, p2: TaskVector, omega1: float, omega2: float) -> TaskVector:
    """Merge two task vectors with weights normalised to sum to one."""
    if not p1.compatible_with(p2):
        raise IncompatibleParametersError("parents are not shape-compatible")
    if p1.base_id != p2.base_id:
        raise IncompatibleParametersError(f"parents have different bases: {p1.base_id} vs {p2.base_id}")
    total = omega1 + omega2
    c1 = omega1 / total
    # c2 is taken as the complement so the pair sums to exactly 1
    c2 = 1.0 - c1
    return combine([(c1, p1), (c2, p2)])


def draw_omegas(params: CrossoverParams, rng: np.random.Generator) -> tuple[float, float]:
    for _ in range(MAX_OMEGA_DRAWS):
        w1, w2 = rng.normal(params.mu, params.sigma, size=2)
        if abs(w1 + w2) >= params.degenerate_threshold:
            return float(w1), float(w2)
    raise DegenerateCrossoverError(
        f"|w1 + w2| stayed below {params.degenerate_threshold} for {MAX_OMEGA_DRAWS} draws"
    )


def crossover(p1: TaskVector, p2: TaskVector, params: CrossoverParams, rng: np.random.Generator) -> TaskVector:
    w1, w2 = draw_omegas(params, rng)
    return merge_pair(p1, p2, w1, w2)


def scale_spectrum(child: TaskVector, weights: Mapping[str, np.ndarray]) -> TaskVector:
    """Rescale each mutable matrix's singular values by the given weights.

    Entries without a weight vector, 1-D entries and matrices with a unit
    dimension are returned unchanged.
    """
    out = []
    for name, t in child.entries:
        if is_mutable_matrix(t) and name in weights:
            f = svd_entry(name, t)
            w = np.asarray(weights[name], dtype=np.float64)
            if w.shape != f.s.shape:
                raise ValueError(f"{name}: expected {f.s.shape[0]} weights, got {w.shape}")
            out.append((name, f.reconstruct(w)))
        else:
            out.append((name, t))
    return TaskVector(tuple(out), base_id=child.base_id)


def svd_mutate(child: TaskVector, params: MutationParams, rng: np.random.Generator) -> TaskVector:
    weights = {}
    for name, t in child.entries:
        if is_mutable_matrix(t):
            weights[name] = rng.uniform(0.0, params.w_max, size=min(t.shape))
    return scale_spectrum(child, weights)


def gaussian_mutate(child: TaskVector, params: MutationParams, rng: np.random.Generator) -> TaskVector:
    out = [(n, t + rng.normal(0.0, params.gaussian_sigma, size=t.shape)) for n, t in child.entries]
    return TaskVector(tuple(out), base_id=child.base_id)


def softmax_weights(fitnesses: Sequence[float]) -> np.ndarray:
    f = np.asarray(fitnesses, dtype=np.float64)
    if f.size == 0:
        raise InvalidFitnessError("no fitness values")
    if not np.all(np.isfinite(f)):
        raise InvalidFitnessError(f"non-finite fitness in {f.tolist()}")
    z = np.exp(f - f.max())
    return z / z.sum()


def aggregate(base: ParameterSet, elites: Sequence[tuple[TaskVector, float]]) -> ParameterSet:
    """Softmax-weighted sum of elite task vectors on top of ``base``."""
    if not elites:
        raise ValueError("aggregate() needs at least one elite")
    beta = softmax_weights([f for _, f in elites])
    return add_scaled(base, [(b, tv) for b, (tv, _) in zip(beta, elites)])
