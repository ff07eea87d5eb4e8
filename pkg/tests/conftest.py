"""Session-cached reference runs and the acceptance summary printed at the end of pytest."""
import time

import pytest

from kahler_surgery import estimates as est
from kahler_surgery import flow
from kahler_surgery.geometry import RadialGrid, reference_profiles
from kahler_surgery.gh import DirectionSet, convergence_series

ACCEPTANCE = {}


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def params2():
    return flow.FlowParams(n=2, a0=1.0, b0=4.0, N=400)


@pytest.fixture(scope="session")
def run2(params2):
    return _timed(flow.run_to_T, params2)


@pytest.fixture(scope="session")
def run3():
    return _timed(flow.run_to_T, flow.FlowParams(n=3, a0=2.0, b0=8.0, N=400))


@pytest.fixture(scope="session")
def limit2(run2):
    return flow.limit_profile(run2[0])


@pytest.fixture(scope="session")
def cont2(params2, limit2):
    return flow.continue_on_Y(params2, limit2)


@pytest.fixture(scope="session")
def report2(run2, cont2, params2):
    p = params2
    refs = reference_profiles(RadialGrid(p.N), p.n, p.a0, p.b0, p.kappa, 0.1)
    return est.run_report(run2[0], est.References(refs.initial, refs.pullback, p.n), cont2.merged)


@pytest.fixture(scope="session")
def gh2(run2, limit2, cont2):
    return _timed(convergence_series, run2[0], limit2, DirectionSet.sample(2, 24, 0), cont2.merged, 60)


@pytest.fixture
def record():
    """record(criterion, ok, detail): prints one PASS/FAIL line and keeps it for the terminal summary."""
    def _record(cid, ok, detail):
        line = f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE[cid] = line
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[cid])
