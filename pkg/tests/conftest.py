import numpy as np
import pytest

from curvegraph.graph import (add_loops, complete_graph, cycle_graph, from_edges,
                              random_graph, torus_graph)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def edge():
    """Single unit edge a-b, unit measure."""
    return from_edges([("a", "b", 1.0)])


@pytest.fixture(scope="session")
def c6():
    return cycle_graph(6, "degree")


@pytest.fixture(scope="session")
def torus12():
    return torus_graph(12, "degree")


@pytest.fixture(scope="session")
def k5():
    return complete_graph(5, "degree")


@pytest.fixture(scope="session")
def looped_triangle():
    return add_loops(complete_graph(3), 1.0).with_measure("degree")


def random_graphs(seed, count, max_n=12, **kw):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(2, max_n + 1))
        out.append(random_graph(rng, n, **kw))
    return out


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(key)
        if prev is None or prev[0] == "PASS":
            status = "PASS" if report.outcome == "passed" else "FAIL"
            _CRITERIA[key] = (status, props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[key]
        line = f"criterion {key:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
