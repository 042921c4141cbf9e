"""Shared fixtures and the acceptance reporter.

The expensive solves (k=40 fields, long survival marches, large simulations)
are session-scoped here so the acceptance module and the property tests can
share them.  `record_acceptance` collects one PASS/FAIL line per acceptance
check; the collected lines are printed again in a terminal summary section so
they are visible in any pytest run.
"""

import time
import types

import numpy as np
import pytest

from firstexit.meshing import BoxDomain
from firstexit.models import builtin_model, model_from_expressions
from firstexit.montecarlo import SimulationConfig, simulate_exit
from firstexit.solvers import mean_exit_time, survival_function

ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail):
    """Collect and print one acceptance line; returns ``passed``."""
    line = f"ACCEPTANCE {criterion} {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# models and domains

@pytest.fixture(scope="session")
def rumor_model():
    return builtin_model("rumor")


@pytest.fixture(scope="session")
def rumor_domain():
    return BoxDomain([0.7, 0.1], [0.9, 0.3])


@pytest.fixture(scope="session")
def gonorrhea_domain():
    return BoxDomain([8500.0, 500.0], [9500.0, 1500.0])


@pytest.fixture(scope="session")
def sir_model():
    return builtin_model("sir")


@pytest.fixture(scope="session")
def sir_domain():
    return BoxDomain([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def tumor_model():
    return builtin_model("tumor")


@pytest.fixture(scope="session")
def tumor_domain_d1():
    return BoxDomain([0.0, 0.0, 0.0], [4.0, 2.0, 2.0])


@pytest.fixture(scope="session")
def tumor_domain_d2():
    return BoxDomain([0.0, 0.0, 0.0], [4.0, 2.0, 4.0])


# ---------------------------------------------------------------------------
# elliptic fields (mean exit time), k=40 unless noted

@pytest.fixture(scope="session")
def rumor_elliptic(rumor_model, rumor_domain):
    field, seconds = _timed(mean_exit_time, rumor_model, rumor_domain, 40)
    return types.SimpleNamespace(field=field, seconds=seconds)


@pytest.fixture(scope="session")
def gonorrhea_elliptic(gonorrhea_domain):
    model = builtin_model("gonorrhea")  # alpha = 1.5e-5
    field, seconds = _timed(mean_exit_time, model, gonorrhea_domain, 40)
    return types.SimpleNamespace(field=field, seconds=seconds, model=model)


@pytest.fixture(scope="session")
def gonorrhea_hi_elliptic(gonorrhea_domain):
    model = builtin_model("gonorrhea", {"alpha": 1e-4})
    field, seconds = _timed(mean_exit_time, model, gonorrhea_domain, 40)
    return types.SimpleNamespace(field=field, seconds=seconds, model=model)


@pytest.fixture(scope="session")
def sir_elliptic(sir_model, sir_domain):
    field, seconds = _timed(mean_exit_time, sir_model, sir_domain, 40)
    return types.SimpleNamespace(field=field, seconds=seconds)


@pytest.fixture(scope="session")
def tumor_elliptic_d1(tumor_model, tumor_domain_d1):
    field, seconds = _timed(mean_exit_time, tumor_model, tumor_domain_d1, 40)
    return types.SimpleNamespace(field=field, seconds=seconds)


@pytest.fixture(scope="session")
def tumor_elliptic_d2(tumor_model, tumor_domain_d2):
    field, seconds = _timed(mean_exit_time, tumor_model, tumor_domain_d2, 40)
    return types.SimpleNamespace(field=field, seconds=seconds)


@pytest.fixture(scope="session")
def torsion_elliptic():
    # A = I, B = 0 on the unit square; mean exit time of standard Brownian
    # motion, comparable to the truncated eigenfunction series
    model = model_from_expressions(
        "torsion", ("x", "y"), ["0", "0"], [["1", "0"], ["1"]])
    domain = BoxDomain([0.0, 0.0], [1.0, 1.0])
    field, seconds = _timed(mean_exit_time, model, domain, 80)
    return types.SimpleNamespace(field=field, seconds=seconds)


# ---------------------------------------------------------------------------
# survival curves

@pytest.fixture(scope="session")
def rumor_curve(rumor_model, rumor_domain):
    curve, seconds = _timed(
        survival_function, rumor_model, rumor_domain, 40, 2.5e-5, 0.06,
        (0.8, 0.2))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


@pytest.fixture(scope="session")
def rumor_curve_half_step(rumor_model, rumor_domain):
    curve, seconds = _timed(
        survival_function, rumor_model, rumor_domain, 40, 1.25e-5, 0.005,
        (0.8, 0.2))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


@pytest.fixture(scope="session")
def gonorrhea_curve(gonorrhea_elliptic, gonorrhea_domain):
    curve, seconds = _timed(
        survival_function, gonorrhea_elliptic.model, gonorrhea_domain, 40,
        0.25, 45.0, (9000.0, 1000.0))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


@pytest.fixture(scope="session")
def gonorrhea_hi_curve(gonorrhea_hi_elliptic, gonorrhea_domain):
    curve, seconds = _timed(
        survival_function, gonorrhea_hi_elliptic.model, gonorrhea_domain, 40,
        6e-3, 1.2, (9000.0, 1000.0))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


@pytest.fixture(scope="session")
def sir_curve(sir_model, sir_domain):
    curve, seconds = _timed(
        survival_function, sir_model, sir_domain, 40, 5e-4, 0.1,
        (0.8, 0.1, 0.1))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


@pytest.fixture(scope="session")
def tumor_curve_d1(tumor_model, tumor_domain_d1):
    curve, seconds = _timed(
        survival_function, tumor_model, tumor_domain_d1, 40, 2.5e-3, 2.5,
        (3.0, 1.5, 1.0))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


@pytest.fixture(scope="session")
def tumor_curve_d2(tumor_model, tumor_domain_d2):
    curve, seconds = _timed(
        survival_function, tumor_model, tumor_domain_d2, 40, 2.5e-3, 3.5,
        (3.0, 1.5, 1.0))
    return types.SimpleNamespace(curve=curve, seconds=seconds)


# ---------------------------------------------------------------------------
# simulations

@pytest.fixture(scope="session")
def rumor_mc(rumor_model, rumor_domain):
    config = SimulationConfig(dt=2e-6, n_paths=20000, seed=12345, time_cap=0.5)
    stats, seconds = _timed(
        simulate_exit, rumor_model, rumor_domain, (0.8, 0.2), config,
        workers=4)
    return types.SimpleNamespace(stats=stats, seconds=seconds, config=config)


@pytest.fixture(scope="session")
def gonorrhea_mc(gonorrhea_elliptic, gonorrhea_domain):
    config = SimulationConfig(dt=1e-3, n_paths=20000, seed=12345,
                              time_cap=100.0)
    stats, seconds = _timed(
        simulate_exit, gonorrhea_elliptic.model, gonorrhea_domain,
        (9000.0, 1000.0), config, workers=4)
    return types.SimpleNamespace(stats=stats, seconds=seconds, config=config)


# ---------------------------------------------------------------------------
# collections for the property suites

@pytest.fixture(scope="session")
def all_elliptic_fields(rumor_elliptic, gonorrhea_elliptic,
                        gonorrhea_hi_elliptic, sir_elliptic,
                        tumor_elliptic_d1, tumor_elliptic_d2,
                        torsion_elliptic):
    return [
        ("rumor", rumor_elliptic.field),
        ("gonorrhea", gonorrhea_elliptic.field),
        ("gonorrhea alpha=1e-4", gonorrhea_hi_elliptic.field),
        ("sir", sir_elliptic.field),
        ("tumor D1", tumor_elliptic_d1.field),
        ("tumor D2", tumor_elliptic_d2.field),
        ("torsion", torsion_elliptic.field),
    ]


@pytest.fixture(scope="session")
def all_survival_curves(rumor_curve, rumor_curve_half_step, gonorrhea_curve,
                        gonorrhea_hi_curve, sir_curve, tumor_curve_d1,
                        tumor_curve_d2):
    return [
        ("rumor", rumor_curve.curve),
        ("rumor eta/2", rumor_curve_half_step.curve),
        ("gonorrhea", gonorrhea_curve.curve),
        ("gonorrhea alpha=1e-4", gonorrhea_hi_curve.curve),
        ("sir", sir_curve.curve),
        ("tumor D1", tumor_curve_d1.curve),
        ("tumor D2", tumor_curve_d2.curve),
    ]


def curve_value_at(curve, t):
    """Curve value at the step closest to time t."""
    idx = int(round(t / curve.eta)) - 1
    if not 0 <= idx < curve.values.size:
        raise ValueError(f"time {t} outside the recorded range")
    return float(curve.values[idx])
