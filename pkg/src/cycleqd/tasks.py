"""Synthetic multi-task suites used as stand-ins for expert models and benchmarks.

Two families share one evaluator contract (``evaluate(params) -> [0, 1]``):

* analytic: Gaussian bumps around per-task centre parameter sets;
* network: small two-layer tanh regressors trained by gradient descent, scored
  by ``exp(-mse)`` on a fixed grid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigurationError, TrainingFailureError
from .params import ParameterSet, TaskVector, add_scaled, compute_task_vector


class TaskEvaluator(Protocol):
    task_id: int

    def evaluate(self, params: ParameterSet) -> float: ...


def evaluate_all(candidate: ParameterSet, evaluators: Sequence[TaskEvaluator]) -> tuple[float, ...]:
    return tuple(float(e.evaluate(candidate)) for e in evaluators)


@dataclass(frozen=True, eq=False)
class AnalyticTask:
    task_id: int
    center: ParameterSet
    width: float

    def evaluate(self, params: ParameterSet) -> float:
        if not params.compatible_with(self.center):
            raise ValueError("candidate layout does not match task centre")
        d2 = float(np.sum((params.flatten() - self.center.flatten()) ** 2))
        return math.exp(-d2 / (2.0 * self.width**2))


@dataclass
class Suite:
    base: ParameterSet
    experts: list[ParameterSet]
    tasks: list
    descriptor: dict = field(default_factory=dict)

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def expert_task_vectors(self) -> list[TaskVector]:
        return [compute_task_vector(e, self.base) for e in self.experts]

    def average_merge(self) -> ParameterSet:
        """Equal-weight mean of the expert task vectors added to the base."""
        tvs = self.expert_task_vectors()
        return add_scaled(self.base, [(1.0 / len(tvs), tv) for tv in tvs])


def _layout(layers: int, width: int) -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for l in range(layers):
        out.append((f"layer{l}.weight", (width, width)))
        out.append((f"layer{l}.bias", (width,)))
    return out


@dataclass(frozen=True)
class AnalyticSuiteConfig:
    num_tasks: int = 3
    layers: int = 2
    width: int = 8
    seed: int = 0
    perturbation: float = 0.05
    inter_center_fitness: float = 0.1
    # task signal in the weight matrices, relative to the biases; 0 means the
    # matrices only ever carry expert drift
    matrix_scale: float = 0.0
    # bias component common to every centre; sets the centre norm and hence
    # how much the relative expert perturbation costs
    shared_scale: float = 6.0


def make_analytic_suite(
    num_tasks: int = 3,
    layers: int = 2,
    width: int = 8,
    seed: int = 0,
    perturbation: float = 0.05,
    inter_center_fitness: float = 0.1,
    matrix_scale: float = 0.0,
    shared_scale: float = 6.0,
) -> Suite:
    """Analytic suite with zero base and experts at perturbed task centres.

    The Gaussian width is chosen so that, on average, one task's centre scores
    ``inter_center_fitness`` on another task. Each expert is its centre plus
    isotropic noise whose norm is ``perturbation`` times the centre norm.
    """
    if num_tasks < 2:
        raise ConfigurationError("an analytic suite needs at least 2 tasks")
    cfg = AnalyticSuiteConfig(
        num_tasks, layers, width, seed, perturbation, inter_center_fitness, matrix_scale, shared_scale
    )
    rng = np.random.default_rng(seed)
    layout = _layout(layers, width)
    base = ParameterSet(tuple((n, np.zeros(s)) for n, s in layout))

    shared = {n: shared_scale * rng.standard_normal(s) for n, s in layout if len(s) == 1}
    centers = []
    for _ in range(num_tasks):
        entries = []
        for name, shape in layout:
            scale = matrix_scale if len(shape) == 2 else 1.0
            entries.append((name, scale * rng.standard_normal(shape) + shared.get(name, 0.0)))
        centers.append(ParameterSet(tuple(entries)))

    flat = np.stack([c.flatten() for c in centers])
    d2 = [np.sum((flat[i] - flat[j]) ** 2) for i in range(num_tasks) for j in range(i + 1, num_tasks)]
    width_s = math.sqrt(float(np.mean(d2)) / (2.0 * math.log(1.0 / inter_center_fitness)))

    experts = []
    for c in centers:
        noise = [rng.standard_normal(t.shape) for _, t in c.entries]
        noise_norm = math.sqrt(sum(float(np.sum(z**2)) for z in noise))
        k = perturbation * float(np.linalg.norm(c.flatten())) / noise_norm
        experts.append(ParameterSet(tuple((n, t + k * z) for (n, t), z in zip(c.entries, noise))))

    tasks = [AnalyticTask(i, c, width_s) for i, c in enumerate(centers)]
    descriptor = {"family": "analytic", **asdict(cfg), "gaussian_width": width_s}
    return Suite(base, experts, tasks, descriptor)


def analytic_average_merge_fitness(suite: Suite) -> tuple[float, ...]:
    """Closed-form fitness of the equal-weight merge on an analytic suite.

    With a zero base the merge is the mean of the expert vectors, so each
    task's score follows from the squared distance between that mean and the
    task centre.
    """
    merged = np.mean([e.flatten() for e in suite.experts], axis=0)
    out = []
    for t in suite.tasks:
        d2 = float(np.sum((merged - t.center.flatten()) ** 2))
        out.append(math.exp(-d2 / (2.0 * t.width**2)))
    return tuple(out)


# --- network family -------------------------------------------------------


def network_layout(d_in: int, hidden: int) -> list[tuple[str, tuple[int, ...]]]:
    return [("fc1.weight", (hidden, d_in)), ("fc1.bias", (hidden,)), ("fc2.weight", (1, hidden)), ("fc2.bias", (1,))]


def forward(params: ParameterSet, x: np.ndarray) -> np.ndarray:
    h = np.tanh(x @ params["fc1.weight"].T + params["fc1.bias"])
    return (h @ params["fc2.weight"].T + params["fc2.bias"])[:, 0]


def mse_and_grad(params: ParameterSet, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    w1, b1, w2, b2 = (params[n] for n in ("fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"))
    h = np.tanh(x @ w1.T + b1)
    pred = (h @ w2.T + b2)[:, 0]
    r = pred - y
    n = x.shape[0]
    # a diverging run overflows here; the caller checks finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(r**2))
    g_pred = (2.0 / n) * r
    g_w2 = g_pred[None, :] @ h
    g_b2 = np.array([g_pred.sum()])
    g_h = g_pred[:, None] * w2
    g_z = g_h * (1.0 - h**2)
    g_w1 = g_z.T @ x
    g_b1 = g_z.sum(axis=0)
    return loss, {"fc1.weight": g_w1, "fc1.bias": g_b1, "fc2.weight": g_w2, "fc2.bias": g_b2}


@dataclass(frozen=True, eq=False)
class NetworkTask:
    task_id: int
    inputs: np.ndarray
    targets: np.ndarray

    def loss(self, params: ParameterSet) -> float:
        return float(np.mean((forward(params, self.inputs) - self.targets) ** 2))

    def evaluate(self, params: ParameterSet) -> float:
        loss = self.loss(params)
        if not math.isfinite(loss):
            return 0.0
        return math.exp(-loss)


@dataclass(frozen=True)
class NetworkTaskFamily:
    num_tasks: int = 3
    d_in: int = 2
    hidden: int = 8
    grid_points: int = 64
    seed: int = 0

    def make_tasks(self) -> list[NetworkTask]:
        """Each task is a random sum of sinusoids on [-1, 1]^d_in, sampled on a fixed grid."""
        rng = np.random.default_rng([self.seed, 1])
        tasks = []
        for k in range(self.num_tasks):
            x = rng.uniform(-1.0, 1.0, size=(self.grid_points, self.d_in))
            freq = rng.normal(0.0, 2.0, size=(3, self.d_in))
            phase = rng.uniform(0.0, 2 * math.pi, size=3)
            amp = rng.normal(0.0, 0.6, size=3)
            y = np.sin(x @ freq.T + phase) @ amp
            tasks.append(NetworkTask(k, x, y))
        return tasks

    def init_params(self) -> ParameterSet:
        rng = np.random.default_rng([self.seed, 2])
        entries = []
        for name, shape in network_layout(self.d_in, self.hidden):
            fan_in = shape[-1] if len(shape) == 2 else 1
            scale = 1.0 / math.sqrt(fan_in) if len(shape) == 2 else 0.0
            entries.append((name, scale * rng.standard_normal(shape)))
        return ParameterSet(tuple(entries))


def gradient_descent(params: ParameterSet, task: NetworkTask, steps: int, step_size: float) -> tuple[ParameterSet, list[float]]:
    losses = []
    for _ in range(steps):
        loss, grads = mse_and_grad(params, task.inputs, task.targets)
        if not math.isfinite(loss):
            raise TrainingFailureError(f"task {task.task_id}: loss diverged")
        losses.append(loss)
        params = params.map(lambda n, t: t - step_size * grads[n])
    return params, losses


def train_network_experts(
    family: NetworkTaskFamily | None = None,
    steps: int = 300,
    step_size: float = 0.1,
    seed: int | None = None,
) -> Suite:
    """Full-batch gradient-descent experts, one per task, from a shared init."""
    if steps < 0:
        raise ConfigurationError("steps must be >= 0")
    family = family or NetworkTaskFamily()
    if seed is not None:
        family = NetworkTaskFamily(family.num_tasks, family.d_in, family.hidden, family.grid_points, seed)
    tasks = family.make_tasks()
    base = family.init_params()
    experts = [gradient_descent(base, t, steps, step_size)[0] for t in tasks]
    descriptor = {"family": "network", **asdict(family), "steps": steps, "step_size": step_size}
    return Suite(base, experts, tasks, descriptor)


def build_suite(descriptor: dict, default_seed: int = 0) -> Suite:
    """Construct a suite from a descriptor (as stored in suite.json or a run config)."""
    d = dict(descriptor)
    family = d.pop("family", "analytic")
    d.pop("gaussian_width", None)
    if d.get("seed") is None:
        d["seed"] = default_seed
    try:
        if family == "analytic":
            return make_analytic_suite(**d)
        if family == "network":
            steps = d.pop("steps", 300)
            step_size = d.pop("step_size", 0.1)
            return train_network_experts(NetworkTaskFamily(**d), steps=steps, step_size=step_size)
    except TypeError as exc:
        raise ConfigurationError(f"bad suite options: {exc}") from exc
    raise ConfigurationError(f"unknown suite family {family!r}")
