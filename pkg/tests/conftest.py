from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from subbandnet import data

REPO = Path(__file__).resolve().parent.parent
MNIST_CANDIDATES = (REPO / "data" / "mnist", Path("/root/data/mnist"))
CIFAR_CANDIDATES = (REPO / "data" / "cifar10", Path("/root/data/cifar10"))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--mnist-dir", default=None, help="directory holding the four MNIST IDX files")
    parser.addoption("--cifar-dir", default=None, help="directory holding the CIFAR-10 binary batches")


def _locate(option, candidates, name):
    dirs = [Path(option)] if option else list(candidates)
    for d in dirs:
        try:
            data.load_dataset(name, d, "test").head(1)
            return d
        except data.MissingDataset:
            continue
    return None


@pytest.fixture(scope="session")
def mnist_dir(request):
    d = _locate(request.config.getoption("--mnist-dir"), MNIST_CANDIDATES, "mnist")
    if d is None:
        pytest.skip("MNIST files not found; pass --mnist-dir")
    return d


@pytest.fixture(scope="session")
def cifar_dir_or_none(request):
    return _locate(request.config.getoption("--cifar-dir"), CIFAR_CANDIDATES, "cifar10")


@pytest.fixture(scope="session")
def cifar_dir(cifar_dir_or_none):
    if cifar_dir_or_none is None:
        pytest.skip("CIFAR-10 binary batches not found; pass --cifar-dir")
    return cifar_dir_or_none


# -- one verdict line per acceptance criterion --------------------------------

_verdicts = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        if "criterion" not in props:
            return
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = props.get("detail", "")
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2].removeprefix("Skipped: ")
        _verdicts[props["criterion"]] = f"criterion {props['criterion']:>2} {verdict}  {props['title']}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_verdicts):
            terminalreporter.write_line(_verdicts[key])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            item.user_properties += [("criterion", number), ("title", title)]
