import numpy as np
import pytest

from mgtd.corpus import Document

# criterion number -> (title, outcome); filled while test_acceptance runs
CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, status = CRITERIA[number]
        terminalreporter.write_line(f"{status}  criterion {number:>2}: {title}")


def make_doc(i, text, label=None, **kw):
    return Document(id=f"d{i}", text=text, label=label, **kw)


def base_model_logits(n, n_models=2, acc=0.8, shared=0.5, seed=0):
    """Two-class logits whose argmax is right for a fraction ``acc`` of rows.

    A share ``shared`` of each model's correctness draws comes from a common
    stream, so errors are partially correlated across models.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    common = rng.random(n)
    blocks = []
    for _ in range(n_models):
        u = np.where(rng.random(n) < shared, common, rng.random(n))
        pred = np.where(u < acc, y, 1 - y)
        margin = rng.uniform(0.1, 2.0, n)
        z = np.zeros((n, 2))
        z[np.arange(n), pred] = margin / 2
        z[np.arange(n), 1 - pred] = -margin / 2
        z += rng.normal(0.0, 0.1, (n, 1))  # common shift keeps the argmax
        blocks.append(z)
    return blocks, y
