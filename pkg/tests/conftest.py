import numpy as np
import pytest
from hypothesis import strategies as st

from cdfilter.equilibrium import SteadyKnowns, solve_steady_state
from cdfilter.linearize import build_continuous, discretize
from cdfilter.model import PlantParams


@pytest.fixture(scope="session")
def params():
    return PlantParams()


@pytest.fixture(scope="session")
def op(params):
    return solve_steady_state(params, SteadyKnowns())


@pytest.fixture(scope="session")
def lin(params, op):
    return build_continuous(params, op)


@pytest.fixture(scope="session")
def dm(lin):
    return discretize(lin, 0.1)


def real(lo, hi):
    return st.floats(lo, hi, allow_subnormal=False)


@st.composite
def steady_knowns(draw, p_atm=101_300.0):
    return SteadyKnowns(
        omega_ss=draw(real(0.01, 2.0)),
        p_v_ss=draw(real(0.0, 0.99 * p_atm)),
        c_r_ss=draw(real(0.0, 200.0)),
        c_in_ss=draw(real(1.0, 500.0)),
        f_out_ss=draw(real(1e-3, 0.5)),
        q_air_out_ss=draw(real(0.0, 0.5)),
    )


def random_knowns(rng, count, p_atm=101_300.0):
    """Vectorized counterpart of ``steady_knowns`` for large sweeps."""
    return [
        SteadyKnowns(
            omega_ss=rng.uniform(0.01, 2.0),
            p_v_ss=rng.uniform(0.0, 0.99 * p_atm),
            c_r_ss=rng.uniform(0.0, 200.0),
            c_in_ss=rng.uniform(1.0, 500.0),
            f_out_ss=rng.uniform(1e-3, 0.5),
            q_air_out_ss=rng.uniform(0.0, 0.5),
        )
        for _ in range(count)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def fig3():
    from cdfilter.scenario import ScenarioFile

    return ScenarioFile()


@pytest.fixture(scope="session")
def fig3_runs(fig3):
    """Default-scenario trajectories for both controllers, computed once."""
    from cdfilter.scenario import build_scenario
    from cdfilter.simulate import run_closed_loop

    runs = {}
    for kind in ("pi", "mpc"):
        params, sc = build_scenario(fig3, kind)
        runs[kind] = run_closed_loop(params, sc)
    return runs


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
