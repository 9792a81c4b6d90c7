import numpy as np
import pytest

from webly.fixtures import build_pipeline_fixture
from webly.pipeline import PipelineConfig

# Small counts keep image-stage tests fast; the acceptance suite uses the defaults.
SMALL = dict(images_per_variation=40, elda_keep=32, positives_train=20, positives_val=10,
             negatives_train=20, negatives_val=20, svm_epochs=100)


@pytest.fixture(scope="session")
def pipeline_fixture(tmp_path_factory):
    return build_pipeline_fixture(tmp_path_factory.mktemp("e2e"))


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    return build_pipeline_fixture(tmp_path_factory.mktemp("small"), images_per_variation=40,
                                  outliers=4, ambiguous=4)


def config_for(fx, **overrides):
    d = dict(concept="horse", corpus=str(fx.corpus), docs=str(fx.docs), images=str(fx.images),
             negatives=str(fx.negatives), labels=str(fx.labels))
    d.update(overrides)
    return PipelineConfig(**d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ----------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    crit = _CRITERIA.get(report.nodeid)
    if crit is not None:
        crit["outcome"] = "PASS" if report.passed else "FAIL"


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = {"number": m.args[0], "name": m.args[1], "outcome": None}


def pytest_terminal_summary(terminalreporter):
    ran = [c for c in _CRITERIA.values() if c["outcome"] is not None]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ran, key=lambda c: c["number"]):
        terminalreporter.write_line(f"criterion {c['number']} {c['name']}: {c['outcome']}")
