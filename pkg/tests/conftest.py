import numpy as np
import pytest

from fasthand.model import ModelConfig, build_fasthand


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_model():
    return build_fasthand(ModelConfig(), seed=0)


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(
        stem_channels=8,
        low_channels=8,
        high_channels=(8, 8, 8),
        decoder_channels=(8, 8, 8),
        repeats=(1, 1, 1),
        middle_depth=1,
    )


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    return build_fasthand(tiny_config, seed=3)


_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    failed_setup = rep.when == "setup" and rep.failed
    if rep.when == "call" or failed_setup:
        reason = "" if rep.passed else " :: " + (rep.longrepr.reprcrash.message.splitlines()[0]
                                                   if hasattr(rep.longrepr, "reprcrash") else str(rep.longrepr)[:200])
        _ACCEPTANCE.append(f"{'PASS' if rep.passed else 'FAIL'}  {marker.args[0]}{reason}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
