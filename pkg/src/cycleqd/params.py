"""Named-tensor parameter sets, task-vector arithmetic and SVD helpers.

A :class:`ParameterSet` is the genotype substrate: an ordered list of named
float64 tensors of rank 1 or 2. A :class:`TaskVector` has the same layout and
holds a delta relative to a base parameter set.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    IncompatibleParametersError,
    InvalidCoefficientError,
    NumericalFailureError,
    UndefinedSimilarityError,
)

# Singular values below this fraction of the leading one are flagged, never dropped.
NEGLIGIBLE_RTOL = 1e-10


def _freeze(name: str, value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim not in (1, 2):
        raise IncompatibleParametersError(f"entry {name!r} has rank {arr.ndim}; only 1 and 2 are supported")
    if not np.all(np.isfinite(arr)):
        raise IncompatibleParametersError(f"entry {name!r} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParameterSet:
    entries: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        frozen = tuple((str(n), _freeze(n, t)) for n, t in self.entries)
        names = [n for n, _ in frozen]
        if len(set(names)) != len(names):
            raise IncompatibleParametersError(f"duplicate entry names in {names}")
        object.__setattr__(self, "entries", frozen)

    @classmethod
    def from_dict(cls, tensors: Mapping[str, object]):
        return cls(tuple(tensors.items()))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [t.shape for _, t in self.entries]

    @property
    def layout(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((n, t.shape) for n, t in self.entries)

    @property
    def size(self) -> int:
        return sum(t.size for _, t in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.entries)

    def __getitem__(self, name: str) -> np.ndarray:
        for n, t in self.entries:
            if n == name:
                return t
        raise KeyError(name)

    def compatible_with(self, other: "ParameterSet") -> bool:
        return self.layout == other.layout

    def flatten(self) -> np.ndarray:
        if not self.entries:
            return np.zeros(0)
        return np.concatenate([t.ravel() for _, t in self.entries])

    def map(self, fn: Callable[[str, np.ndarray], np.ndarray]):
        """Apply ``fn`` entrywise, returning an object of the same type."""
        return self._rebuild(tuple((n, fn(n, t)) for n, t in self.entries))

    def _rebuild(self, entries):
        return ParameterSet(entries)

    def equals(self, other: "ParameterSet") -> bool:
        """Exact (bitwise for finite values) equality of layout and contents."""
        return self.compatible_with(other) and all(
            np.array_equal(a, b) for (_, a), (_, b) in zip(self.entries, other.entries)
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for n, t in self.entries:
            h.update(n.encode())
            h.update(repr(t.shape).encode())
            h.update(np.ascontiguousarray(t).tobytes())
        return h.hexdigest()[:16]

    def to_json_dict(self) -> dict:
        return {
            "kind": "parameter_set",
            "entries": [_entry_json(n, t) for n, t in self.entries],
        }


@dataclass(frozen=True, eq=False)
class TaskVector(ParameterSet):
    base_id: str = field(default="")

    def _rebuild(self, entries):
        return TaskVector(entries, base_id=self.base_id)

    def to_json_dict(self) -> dict:
        return {
            "kind": "task_vector",
            "base_id": self.base_id,
            "entries": [_entry_json(n, t) for n, t in self.entries],
        }


def zeros_like(ps: ParameterSet) -> ParameterSet:
    return ParameterSet(tuple((n, np.zeros(t.shape)) for n, t in ps.entries))


def _entry_json(name: str, t: np.ndarray) -> dict:
    # float repr is the shortest string that round-trips to the same double
    return {"name": name, "shape": list(t.shape), "values": [float(x) for x in t.ravel()]}


def from_json_dict(data: Mapping) -> ParameterSet:
    entries = tuple(
        (e["name"], np.asarray(e["values"], dtype=np.float64).reshape(e["shape"]))
        for e in data["entries"]
    )
    if data.get("kind") == "task_vector":
        return TaskVector(entries, base_id=data.get("base_id", ""))
    return ParameterSet(entries)


def dumps(ps: ParameterSet) -> str:
    return json.dumps(ps.to_json_dict())


def loads(text: str) -> ParameterSet:
    return from_json_dict(json.loads(text))


def save(ps: ParameterSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(ps))


def load(path) -> ParameterSet:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _check_compatible(a: ParameterSet, b: ParameterSet, what: str = "parameter sets") -> None:
    if not a.compatible_with(b):
        raise IncompatibleParametersError(f"{what} are not shape-compatible: {a.layout} vs {b.layout}")


def compute_task_vector(model: ParameterSet, base: ParameterSet) -> TaskVector:
    _check_compatible(model, base)
    entries = tuple((n, m - b) for (n, m), (_, b) in zip(model.entries, base.entries))
    return TaskVector(entries, base_id=base.fingerprint())


def add_scaled(base: ParameterSet, terms: Iterable[tuple[float, TaskVector]]) -> ParameterSet:
    """Return ``base + sum(c * tv)`` accumulated entrywise in term order."""
    acc = [np.array(t) for _, t in base.entries]
    for coef, tv in terms:
        coef = float(coef)
        if not math.isfinite(coef):
            raise InvalidCoefficientError(f"coefficient {coef} is not finite")
        _check_compatible(base, tv, "base and task vector")
        for i, (_, t) in enumerate(tv.entries):
            acc[i] += coef * t
    return ParameterSet(tuple((n, a) for (n, _), a in zip(base.entries, acc)))


def combine(terms: Sequence[tuple[float, TaskVector]]) -> TaskVector:
    """Linear combination of task vectors sharing a base."""
    if not terms:
        raise ValueError("combine() needs at least one term")
    first = terms[0][1]
    zero = zeros_like(first)
    out = add_scaled(zero, terms)
    return TaskVector(out.entries, base_id=first.base_id)


def is_mutable_matrix(t: np.ndarray) -> bool:
    return t.ndim == 2 and min(t.shape) > 1


@dataclass(frozen=True)
class SvdEntry:
    u: np.ndarray | None  # m x r
    s: np.ndarray | None  # length r, descending
    v: np.ndarray | None  # n x r
    passthrough: bool = False

    @property
    def negligible(self) -> np.ndarray:
        if self.s is None:
            return np.zeros(0, dtype=bool)
        top = self.s[0] if self.s.size else 0.0
        return self.s < NEGLIGIBLE_RTOL * top

    def reconstruct(self, scale: np.ndarray | None = None) -> np.ndarray:
        s = self.s if scale is None else self.s * scale
        return (self.u * s) @ self.v.T


@dataclass(frozen=True)
class SvdFactorization:
    entries: dict[str, SvdEntry]

    def __getitem__(self, name: str) -> SvdEntry:
        return self.entries[name]


def svd_entry(name: str, t: np.ndarray) -> SvdEntry:
    if not is_mutable_matrix(t):
        return SvdEntry(None, None, None, passthrough=True)
    try:
        u, s, vt = np.linalg.svd(t, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(name, str(exc)) from exc
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s)) and np.all(np.isfinite(vt))):
        raise NumericalFailureError(name, "non-finite factors")
    return SvdEntry(u, s, vt.T)


def svd_factorize(tv: ParameterSet) -> SvdFactorization:
    return SvdFactorization({n: svd_entry(n, t) for n, t in tv.entries})


def singular_value_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two non-negative singular-value vectors; two zero vectors give 1."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if np.array_equal(a, b):
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), 0.0, 1.0))


def similarity_breakdown(a: TaskVector, b: TaskVector) -> dict[str, float]:
    """Cosine of singular-value vectors for every entry with min(m, n) > 1."""
    _check_compatible(a, b, "task vectors")
    out = {}
    for (name, ta), (_, tb) in zip(a.entries, b.entries):
        if is_mutable_matrix(ta):
            sa = np.linalg.svd(ta, compute_uv=False)
            sb = np.linalg.svd(tb, compute_uv=False)
            out[name] = singular_value_cosine(sa, sb)
    return out


def model_similarity(a: TaskVector, b: TaskVector) -> float:
    per_entry = similarity_breakdown(a, b)
    if not per_entry:
        raise UndefinedSimilarityError("no weight matrix with rank greater than 1 to compare")
    return sum(per_entry.values()) / len(per_entry)
