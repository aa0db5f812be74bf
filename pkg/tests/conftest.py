import numpy as np
import pytest
from hypothesis import settings

from cycleqd.archive import Genome
from cycleqd.params import ParameterSet, TaskVector, compute_task_vector

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile("default")

# acceptance outcomes collected for the terminal summary
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def tv(**entries) -> TaskVector:
    return TaskVector(tuple(entries.items()), base_id="b")


def genome(fitness, gid=0, gen=0, value=None) -> Genome:
    value = float(gid) if value is None else value
    return Genome(tv(w=np.full((2, 2), value)), tuple(fitness), gen, gid)


def random_pset(rng, shapes=(("w", (4, 3)), ("b", (3,)))) -> ParameterSet:
    return ParameterSet(tuple((n, rng.uniform(-10, 10, size=s)) for n, s in shapes))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair_tvs(rng):
    base = random_pset(rng)
    return compute_task_vector(random_pset(rng), base), compute_task_vector(random_pset(rng), base)
