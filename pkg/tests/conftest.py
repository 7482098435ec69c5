import numpy as np
import pytest

from netdiag.dataset import AttributeSchema, Dataset

_acceptance = {}



def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            item.user_properties.append(("acceptance", mark.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "acceptance" not in props:
        return
    number, title = props["acceptance"]
    entry = _acceptance.setdefault(number, [title, True, 0])
    entry[2] += report.when == "call"
    if report.failed:
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok, n = _acceptance[number]
        status = "PASS" if ok and n else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}")


@pytest.fixture
def small_schema():
    return AttributeSchema("kpi", {"rtt": ("a", "b"), "radio": ("r1", "r2")}, ("tech",))


@pytest.fixture
def small_dataset(small_schema):
    rng = np.random.default_rng(7)
    n = 40
    a = rng.uniform(10, 100, n)
    return Dataset(
        np.arange(n),
        {
            "kpi": 1e4 / a + rng.normal(0, 1, n),
            "a": a,
            "b": rng.uniform(0, 1, n),
            "r1": rng.normal(-90, 5, n),
            "r2": rng.normal(10, 2, n),
        },
        {"tech": np.array(["LTE", "UMTS"] * (n // 2), dtype=object)},
        schema=small_schema,
    )
