import pytest
from hypothesis import HealthCheck, settings, strategies as st

from quasiwalk.group import FreeAbelianGroup, FreeGroup
from quasiwalk.measure import FiniteMeasure
from quasiwalk.quasimorphism import BrooksQuasimorphism

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

F2 = FreeGroup(["a", "b"])
Z1 = FreeAbelianGroup(["t"])


def free_words(G=F2, max_size=12):
    letters = [s for i in range(1, G.rank + 1) for s in (i, -i)]
    return st.lists(st.sampled_from(letters), max_size=max_size).map(G.reduce)


def abelian_vectors(G, bound=20):
    return st.lists(st.integers(-bound, bound), min_size=G.rank, max_size=G.rank).map(tuple)


@pytest.fixture
def f2():
    return F2


@pytest.fixture
def srw():
    return FiniteMeasure.simple_random_walk(F2)


@pytest.fixture
def phi_ab():
    return BrooksQuasimorphism(F2, F2.parse("a b"))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
