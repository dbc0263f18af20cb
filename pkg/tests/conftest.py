import numpy as np
import pytest

from rwtree.env_model import reference_law
from rwtree.quenched import frozen_tree


@pytest.fixture(scope="session")
def law():
    return reference_law()


@pytest.fixture(scope="session")
def small_tree(law):
    return frozen_tree(law, 11, 5)


@pytest.fixture(scope="session")
def renewal(law):
    from rwtree.onedim import renewal_table

    return renewal_table(law, replicas=50_000, seed=3)


def ks_pvalue(x, y) -> float:
    from scipy.stats import ks_2samp

    return float(ks_2samp(np.asarray(x), np.asarray(y)).pvalue)


@pytest.fixture(scope="session")
def quick_constants(law):
    from rwtree.limits import build_constants

    return build_constants(law, seed=0, quick=True)


# -- acceptance verdicts: one line per criterion at the end of the run ---------------

VERDICTS: dict[int, tuple[str, str]] = {}
DETAILS: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    k = mark.args[0]
    VERDICTS[k] = ("PASS" if rep.passed else "FAIL", DETAILS.get(k, ""))


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        status, detail = VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {detail}")
