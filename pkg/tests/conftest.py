import numpy as np
import pytest

from gridrisk.attack import all_overload_attacks
from gridrisk.grid import build_measurement_model, default_scenarios, ieee14, statistical_peak, three_bus
from gridrisk.mtd import mtd_protection_sweep


@pytest.fixture(scope="session")
def net14():
    return ieee14()


@pytest.fixture(scope="session")
def model14(net14):
    return build_measurement_model(net14)


@pytest.fixture(scope="session")
def peak14(model14):
    return statistical_peak(default_scenarios(model14), 3)


@pytest.fixture(scope="session")
def attacks14(model14, net14, peak14):
    return all_overload_attacks(model14, net14, peak14)


@pytest.fixture(scope="session")
def profile14(model14, net14, peak14, attacks14):
    return mtd_protection_sweep(model14, net14, peak14, attacks14, seed=0)


@pytest.fixture(scope="session")
def net3():
    return three_bus()


@pytest.fixture(scope="session")
def model3(net3):
    return build_measurement_model(net3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

_VERDICTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _VERDICTS[num] = ("PASS" if rep.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_VERDICTS):
        verdict, text = _VERDICTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {text}")
