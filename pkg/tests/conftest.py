import numpy as np
import pytest

from geomret.signature import GaussianSignature, GmmModel


def random_spd(rng, d, cond=None):
    """Random SPD matrix; with ``cond`` its eigenvalues span [1, cond]."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if cond is None:
        a = rng.standard_normal((d, 2 * d + 2))
        return a @ a.T / (2 * d + 2) + 0.05 * np.eye(d)
    lam = np.geomspace(1.0, cond, d)
    return (q * lam) @ q.T


def random_signature(rng, d, scale=1.0):
    return GaussianSignature(scale * rng.standard_normal(d), random_spd(rng, d))


def random_gmm(rng, k, d):
    w = rng.dirichlet(np.ones(k))
    return GmmModel(w, 2.0 * rng.standard_normal((k, d)), rng.uniform(0.3, 3.0, (k, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.append((mark.args[0], mark.args[1], rep.outcome.upper(), rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration in sorted(_CRITERIA):
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}  {verdict}  {title}  ({duration:.1f}s)")
