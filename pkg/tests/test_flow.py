import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahler_surgery import flow
from kahler_surgery.errors import DegenerateMetricError, PreconditionError, ReduceEpsError
from kahler_surgery.geometry import Profile, RadialGrid, fubini_study, linear_profile


# ---------------------------------------------------------------- params

def test_params_derived_times():
    p = flow.FlowParams(n=2, a0=1.0, b0=4.0)
    assert (p.T, p.kappa, p.T_Y, p.T_prime) == pytest.approx((1.0, 1.0, 4 / 3, 7 / 6))
    assert p.eps_stop == pytest.approx(1e-2) and p.snapshot_dt == pytest.approx(1 / 200)
    q = flow.FlowParams(n=3, a0=2.0, b0=8.0)
    assert (q.T, q.kappa, q.T_Y) == pytest.approx((1.0, 4.0, 2.0))


def test_boundary_values():
    p = flow.FlowParams(n=2, a0=1.0, b0=4.0)
    assert p.boundary(0.5, flow.BEFORE_T) == pytest.approx((0.5, 2.5))
    assert p.boundary(1.1, flow.AFTER_T) == pytest.approx((0.0, 0.7))
    assert p.boundary(p.T, flow.BEFORE_T) == pytest.approx(p.boundary(p.T, flow.AFTER_T))


@pytest.mark.parametrize("kw", [dict(a0=0.0), dict(a0=-1.0), dict(a0=5.0, b0=4.0), dict(n=1),
                                dict(dt_safety=1.5), dict(continuation_eps_list=(1e-3, 1e-2)),
                                dict(eps_stop=2.0)])
def test_params_rejected(kw):
    with pytest.raises(PreconditionError):
        flow.FlowParams(**kw)


def test_params_contraction_inequality():
    flow.FlowParams(n=2, a0=1.0, b0=4.0).require_contraction()
    with pytest.raises(PreconditionError):
        flow.FlowParams(n=2, a0=1.0, b0=3.0).require_contraction()


def test_params_dict_roundtrip_and_unknown_keys():
    p = flow.FlowParams(n=3, a0=2.0, b0=8.0, N=100)
    assert flow.FlowParams.from_dict(p.to_dict()) == p
    with pytest.raises(PreconditionError):
        flow.FlowParams.from_dict({"n": 2, "mystery": 1})


# ------------------------------------------------------------------- rhs

@pytest.mark.parametrize("n", [2, 3, 5])
def test_fs_rhs_exact(n):
    g = RadialGrid(300)
    r = flow.reduced_rhs(fubini_study(g, 1.7), n)
    assert np.allclose(r, -(n + 1) * g.s, atol=1e-11)


@pytest.mark.parametrize("n", [2, 4])
def test_euclidean_model_is_static(n):
    # phi = e^rho = s/(1-s) is the flat metric; its rhs vanishes.  Only the
    # bottom half is checked because the top stencil needs the infinite value at s = 1.
    g = RadialGrid(2000)
    phi = g.s / (1 - g.s)
    r, _ = flow._rhs(g, phi, 0.0, 1e30, n)
    m = g.s <= 0.5
    assert np.max(np.abs(r[m])) < 1e-5


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.05, 2.0), beta=st.floats(0.5, 3.0), frac=st.floats(-0.9, 0.9), n=st.integers(2, 4))
def test_reduced_rhs_matches_logdet_oracle(a, beta, frac, n):
    """phi = a + beta s + c s(1-s) comes from u = a rho + beta log(1+e^rho) + c s."""
    c = frac * beta
    g = RadialGrid(400)
    p = Profile(g, a + beta * g.s + c * g.jac, a, a + beta)

    def u(r):
        return a * r + beta * math.log1p(math.exp(r)) + c / (1 + math.exp(-r))

    idx = np.random.default_rng(0).choice(g.N, 100, replace=False)
    rho, h = g.rho[idx], 5e-3
    oracle = (flow.oracle_logdet(u, rho + h, n, 1e-2) - flow.oracle_logdet(u, rho - h, n, 1e-2)) / (2 * h)
    assert np.max(np.abs(oracle - flow.reduced_rhs(p, n)[idx])) <= 1e-4


def test_oracle_detects_degenerate_hessian():
    # u = rho^2/2 has u' = rho <= 0 for rho <= 0: the fiber eigenvalue is not positive.
    with pytest.raises(DegenerateMetricError):
        flow.oracle_logdet(lambda r: 0.5 * r * r, [-1.0], 2)


def test_oracle_step_underflow():
    with pytest.raises(DegenerateMetricError):
        flow.oracle_logdet(lambda r: r, [-2000.0], 2)


def test_reduced_rhs_rejects_vanishing_phi():
    g = RadialGrid(20)
    p = Profile(g, np.concatenate(([0.0], g.s[1:])), 0.0, 1.0)
    with pytest.raises(DegenerateMetricError):
        flow.reduced_rhs(p, 2)


# -------------------------------------------------------------- stepping

def _fs_state(N=200):
    params = flow.FlowParams(n=2, a0=1.0, b0=4.0, N=N)  # kappa = 1: FS on P^2 after T
    return params, flow.FlowState(params.T, fubini_study(RadialGrid(N), params.kappa), flow.AFTER_T)


def test_fs_one_step():
    params, state = _fs_state()
    dt = flow.stable_dt(state.profile.grid, state.profile.phi, 0.0, params.kappa, params.dt_safety)
    new = flow.step(state, dt, params)
    b = params.kappa - 3 * (new.t - params.T)
    assert np.max(np.abs(new.profile.phi - b * new.profile.grid.s)) <= 1e-8


def test_fs_tracking():
    params, state = _fs_state()
    g = state.profile.grid
    end = params.T + 0.1
    while state.t < end - 1e-15:
        dt = min(flow.stable_dt(g, state.profile.phi, *params.boundary(state.t, flow.AFTER_T), 0.4), end - state.t)
        state = flow.step(state, dt, params)
    b = params.kappa - 3 * 0.1
    assert state.profile.b == pytest.approx(b)
    assert np.max(np.abs(state.profile.phi - b * g.s)) <= 1e-6


def test_step_diverges_when_class_is_empty():
    params = flow.FlowParams(n=2, a0=1.0, b0=4.0, N=50)
    state = flow.FlowState(1.34, fubini_study(RadialGrid(50), 0.1), flow.AFTER_T)  # b(1.34) < 0
    with pytest.raises(flow.DivergedError) as info:
        flow.step(state, 1e-3, params)
    assert info.value.last_state is state


def test_snapshot_schedule():
    t = flow.snapshot_schedule(1.0, 1.1, 0.025, [1.01, 1.05])
    assert t == sorted(set(t))
    assert t[0] == pytest.approx(1.01) and t[-1] == pytest.approx(1.1)
    assert len(t) == 5


# ------------------------------------------------------------------ runs

@pytest.fixture(scope="module")
def small_run():
    return flow.run_to_T(flow.FlowParams(n=2, a0=1.0, b0=4.0, N=80))


def test_run_lands_on_snapshot_times(small_run):
    p = small_run.params
    assert small_run.terminal_reason == flow.REACHED_T
    assert small_run.times[-1] == pytest.approx(p.t_stop, abs=1e-12)
    for st_ in small_run.snapshots:
        assert st_.profile.a == pytest.approx(p.boundary(st_.t, flow.BEFORE_T)[0])


def test_run_is_deterministic(small_run):
    again = flow.run_to_T(small_run.params)
    assert np.array_equal(again.phis, small_run.phis)
    assert again.steps == small_run.steps


def test_run_requires_contraction():
    with pytest.raises(PreconditionError):
        flow.run_to_T(flow.FlowParams(n=2, a0=1.0, b0=3.0, N=40))


def test_trajectory_persistence(tmp_path, small_run):
    flow.save_trajectory(small_run, tmp_path)
    back = flow.load_trajectory(tmp_path)
    assert np.array_equal(back.phis, small_run.phis)
    assert np.array_equal(back.times, small_run.times)
    assert back.params == small_run.params and back.terminal_reason == small_run.terminal_reason


def test_limit_profile_shape(small_run):
    lim = flow.limit_profile(small_run, tol=1e-2)
    assert lim.a == 0 and lim.b == pytest.approx(small_run.params.kappa)
    assert np.all(np.diff(lim.phi) > 0)


# --------------------------------------------------------- continuation

def test_regularize_initial():
    g = RadialGrid(100)
    lim = fubini_study(g, 1.0)
    assert flow.regularize_initial(lim, 0.0) is lim
    r = flow.regularize_initial(lim, 1e-2)
    assert np.allclose(r.phi - lim.phi, 1e-2 * g.jac)
    with pytest.raises(PreconditionError):
        flow.regularize_initial(linear_profile(g, 0.5, 1.0), 1e-2)
    with pytest.raises(PreconditionError):
        flow.regularize_initial(lim, -1.0)
    with pytest.raises(ReduceEpsError):
        flow.regularize_initial(lim, 5.0)


def test_continuation_from_fs_tracks_exact_solution():
    params, state = _fs_state(N=100)
    res = flow.continue_on_Y(params, state.profile, eps_list=(1e-3, 1e-4), t_end=params.T + 0.1, window_start=0.0)
    assert res.ok
    assert res.merged.terminal_reason == flow.REACHED_TY
    last = res.merged.snapshots[-1]
    b = params.kappa - 0.3
    assert np.max(np.abs(last.profile.phi - b * last.profile.grid.s)) < 2e-4
    for d in flow.CONTINUATION_MARKS:
        assert res.merged.at(params.T + d).t == pytest.approx(params.T + d, abs=1e-12)
