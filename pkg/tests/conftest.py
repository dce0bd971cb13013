import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from piestab.pde import load_family
from piestab.quadrature import QuadratureRule
from piestab.stability import bisect_margin

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

WELL_POSED = [
    "diffusion_dirichlet",
    "diffusion_mixed",
    "diffusion_variable",
    "diffusion_coupled3",
    "transport_coupled",
    "eb_beam",
    "timoshenko",
    "wave_hyperbolic",
    "wave_damped_boundary",
]

# (bundled example, parameter, lower end, upper end) of each bisected margin
MARGIN_RUNS = {
    "example1": ("diffusion_dirichlet", "lambda", 1.0, 20.0),
    "example2": ("diffusion_mixed", "lambda", 1.0, 4.0),
    "example3": ("diffusion_variable", "lambda", 1.0, 8.0),
    "example5": ("transport_coupled", "sigma2", 0.2, 2.0),
}

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


def pytest_runtest_logreport(report):
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry = _criteria.setdefault(marks, {"passed": 0, "failed": 0, "xfail": 0})
        if hasattr(report, "wasxfail"):
            entry["xfail"] += 1
        elif report.passed:
            entry["passed"] += 1
        elif report.failed:
            entry["failed"] += 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = int(mark.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        ok = e["failed"] == 0 and e["xfail"] == 0 and e["passed"] > 0
        note = f" ({e['xfail']} known failure(s), see README)" if e["xfail"] else ""
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}{note}")


@pytest.fixture(scope="session")
def rule():
    return QuadratureRule(0.0, 1.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def margins():
    """Degree-1 bisections at tolerance 1e-2, computed once per session."""
    out = {}
    for key, (name, param, lo, hi) in MARGIN_RUNS.items():
        out[key] = bisect_margin(load_family(name), param, lo, hi, tol=1e-2, d=1)
    return out
