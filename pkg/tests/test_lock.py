import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import LL_LOOP, PI_LOOP, SIN, TRI, TWO_PI, ll_model, pi_model, zero_pd
from pll_lockin import (
    Branch,
    DegenerateError,
    EventKind,
    IntegrationConfig,
    InterpolationError,
    LockInDomain,
    LockStatus,
    Method,
    ModelState,
    ParameterError,
    PhaseModel,
    Stability,
    classify_grid,
    detect_cycle_slip,
    detect_lock,
    in_lock_in_domain,
    integrate,
    integrate_with_events,
    make_active_pi,
    settle,
    trace_branch,
    trace_separatrices,
)
from pll_lockin.lock import saddle_directions, seed_offset, slip_events


def run(m, s0, t_max, **kw):
    return integrate_with_events(m, ModelState(*s0), IntegrationConfig(t_max=t_max, **kw))


# -- slips -------------------------------------------------------------------


def test_constant_trajectory_does_not_slip():
    tr = run(pi_model(), (0.0, 0.0), 5.0)
    v = detect_cycle_slip(tr)
    assert not v.slipped and v.excursion == 0.0 and v.slip_time is None


def test_linear_phase_slips_at_two_pi():
    m = PhaseModel(make_active_pi(1.0, 1.0), zero_pd(), 1.0, 1.0)
    tr = run(m, (0.0, 0.3), 7.0)
    v = detect_cycle_slip(tr)
    assert v.slipped
    assert v.slip_time == pytest.approx(TWO_PI, abs=1e-9)
    assert v.excursion == pytest.approx(7.0, abs=1e-9)


def test_slip_time_from_terminal_event():
    m = PhaseModel(make_active_pi(1.0, 1.0), zero_pd(), 1.0, -1.0)
    tr = integrate_with_events(m, ModelState(0.0, 0.3), IntegrationConfig(t_max=7.0), slip_events(0.3, TWO_PI))
    v = detect_cycle_slip(tr)
    assert v.slipped and v.slip_time == pytest.approx(TWO_PI, abs=1e-9)
    assert tr.events[0].kind is EventKind.SLIP_CROSSING


def dense_oracle(tr, period):
    # 10x the step resolution, evaluated on the interpolant
    t = tr.step_times
    fine = np.concatenate([np.linspace(a, b, 11)[:-1] for a, b in zip(t[:-1], t[1:])] + [t[-1:]])
    th = tr.states_at(fine)[:, 1]
    return bool(np.max(np.abs(th - tr.initial.theta_e)) >= period)


def test_slip_detector_matches_dense_oracle():
    rng = np.random.default_rng(12)
    disagreements = 0
    for _ in range(200):
        tau1 = 10 ** rng.uniform(-1, 0.5)
        tau2 = tau1 * rng.uniform(0.05, 0.9)
        k = 10 ** rng.uniform(0, 1.5)
        pd = SIN if rng.random() < 0.5 else TRI
        if rng.random() < 0.5:
            m = pi_model(tau1, tau2, k, 0.0, pd)
        else:
            m = ll_model(tau1, tau2, k, 0.0, pd)
        m = m.with_omega(rng.uniform(-1.2, 1.2) * k * 0.5)
        s0 = (rng.normal(), rng.uniform(-math.pi, math.pi))
        tr = run(m, s0, 10.0 / m.natural_frequency)
        disagreements += detect_cycle_slip(tr).slipped != dense_oracle(tr, m.period)
    assert disagreements == 0


def test_slip_verdict_invariant():
    m = ll_model(0.5, 0.1, 20.0, 8.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        tr = run(m, (rng.normal(), rng.uniform(-3, 3)), 3.0)
        v = detect_cycle_slip(tr)
        assert v.slipped == (v.excursion >= m.period)


# -- lock --------------------------------------------------------------------


def test_lock_from_equilibrium():
    m = pi_model(**PI_LOOP)
    eq = m.stable_equilibrium
    tr = run(m, eq.state, 20 / m.slow_rate)
    rep = detect_lock(tr, eq)
    assert rep.status is LockStatus.LOCKED and rep.t_lock == 0.0


def test_rotating_trajectory_does_not_lock():
    m = ll_model(k=1.0)
    tr = run(m.with_omega(1.5), (0.0, 0.0), 50.0)
    assert detect_lock(tr, m.stable_equilibrium, dwell=1.0).status is LockStatus.UNDECIDED


def test_detect_lock_rejects_bad_tolerances():
    m = pi_model()
    tr = run(m, (0.0, 0.0), 1.0)
    with pytest.raises(ParameterError):
        detect_lock(tr, m.stable_equilibrium, eps=0.0)
    with pytest.raises(ParameterError):
        detect_lock(tr, m.stable_equilibrium, dwell=-1.0)


def test_pi_loop_step_of_50_locks():
    m = pi_model(**PI_LOOP)
    start = m.stable_equilibrium.state
    stepped = m.with_omega(50.0)
    res = settle(stepped, start)
    assert res.lock.status is LockStatus.LOCKED
    assert not res.slip.slipped
    assert res.lock.target.theta == pytest.approx(stepped.stable_equilibrium.theta)


def test_lock_on_other_lift_reports_that_lift():
    m = pi_model(**PI_LOOP)
    # far above the domain: the trajectory slips once before settling
    res = settle(m, ModelState(0.8, 0.0), stop_on_slip=False)
    assert res.slip.slipped
    assert res.lock and abs(res.lock.target.theta) >= TWO_PI - 1e-9


# -- separatrices ------------------------------------------------------------


def saddle_of(m):
    return next(e for e in m.equilibria if e.stability is Stability.SADDLE)


def test_seed_lies_on_eigenvector():
    m = ll_model(**LL_LOOP, omega=30.0)
    sad = saddle_of(m)
    lam_s, v_s, lam_u, v_u = saddle_directions(m, sad)
    assert lam_s < 0 < lam_u
    for s in trace_separatrices(m, sad):
        p0 = s.curve[0]
        d = np.array([p0[1] - sad.x, p0[0] - sad.theta])
        assert np.linalg.norm(d) == pytest.approx(seed_offset(sad), rel=1e-6)
        v = v_s if s.branch.stable else v_u
        assert abs(abs(d @ v) / np.linalg.norm(d) - 1.0) < 1e-9


def test_reintegration_residual():
    m = ll_model(**LL_LOOP, omega=40.0)
    sad = saddle_of(m)
    for s in trace_separatrices(m, sad):
        t = s.trajectory.step_times
        ys = s.trajectory.step_states
        sign = -1.0 if s.branch.stable else 1.0
        scale = max(1.0, float(np.max(np.abs(ys))))
        for i in range(0, len(t) - 1, max(1, len(t) // 40)):
            h = abs(t[i + 1] - t[i])
            sol = solve_ivp(
                lambda _t, y: [sign * v for v in m.rhs(y[0], y[1])], (0, h), ys[i],
                method="DOP853", rtol=1e-13, atol=1e-14,
            )
            assert np.max(np.abs(sol.y[:, -1] - ys[i + 1])) < 1e-7 * scale


def test_window_covers_two_periods():
    m = ll_model(**LL_LOOP)
    sad = saddle_of(m)
    s = trace_branch(m, sad, Branch.UNSTABLE_RIGHT)
    # the unstable branch falls into the stable equilibrium inside the window
    assert s.trajectory.theta.max() < sad.theta + 2 * TWO_PI
    up = trace_branch(m, sad, Branch.STABLE_UPPER)
    assert up.curve[-1, 0] == pytest.approx(sad.theta + 2 * TWO_PI, abs=1e-9)


def test_pi_stable_branches_are_mirror_images():
    m = pi_model(**PI_LOOP)
    d = LockInDomain(m)
    for th in np.linspace(-3.0, 3.0, 13):
        assert d.upper.x_at(th) == pytest.approx(-d.lower.x_at(-th), abs=1e-6)


def test_pi_vertical_shift_of_branches():
    m0 = pi_model(**PI_LOOP)
    d0 = LockInDomain(m0)
    for om in (-40.0, 25.0, 66.0):
        d = LockInDomain(m0.with_omega(om))
        shift = om / (m0.k_vco * m0.filter.c)
        for th in np.linspace(-2.5, 2.5, 11):
            assert d.upper.x_at(th) == pytest.approx(d0.upper.x_at(th) + shift, abs=1e-7)
            assert d.lower.x_at(th) == pytest.approx(d0.lower.x_at(th) + shift, abs=1e-7)


def test_pi_loop_branch_value_is_converged():
    m = pi_model(**PI_LOOP)
    sad = LockInDomain(m).left_saddle
    base = trace_branch(m, sad, Branch.STABLE_UPPER).x_at(0.0)
    tight = IntegrationConfig(rel_tol=1e-12, abs_tol=1e-15, t_max=10.0)
    ref = trace_branch(m, sad, Branch.STABLE_UPPER, tight, offset=0.5 * seed_offset(sad)).x_at(0.0)
    assert base == pytest.approx(ref, abs=1e-5)
    assert 0.4 < base < 0.6


def test_x_at_outside_window():
    m = pi_model(**PI_LOOP)
    s = trace_branch(m, saddle_of(m), Branch.STABLE_UPPER)
    with pytest.raises(InterpolationError):
        s.x_at(100.0)


def test_degenerate_saddle_rejected():
    m = ll_model(**LL_LOOP)
    m = m.with_omega(m.k_vco * m.pd.maximum * m.filter.dc_gain)
    (node,) = m.equilibria
    assert node.stability is Stability.SADDLE_NODE
    with pytest.raises(DegenerateError):
        trace_separatrices(m, node)


# -- domain membership ------------------------------------------------------


@pytest.mark.parametrize("method", list(Method))
def test_domain_examples(method):
    m = ll_model(**LL_LOOP, omega=30.0)
    d = LockInDomain(m)
    assert in_lock_in_domain(m, m.stable_equilibrium.state, method, domain=d)
    assert not in_lock_in_domain(m, d.right_saddle.state, Method.SEPARATRIX, domain=d)
    _, upper = d.bounds(0.0)
    assert not in_lock_in_domain(m, ModelState(upper + 2.0, 0.0), method, domain=d)


def test_far_point_slips():
    m = ll_model(**LL_LOOP)
    res = settle(m, ModelState(3.0, 0.0))
    assert res.slip.slipped and res.trajectory.events[-1].kind is EventKind.SLIP_CROSSING


def test_domain_requires_stable_equilibrium():
    m = ll_model(**LL_LOOP)
    m = m.with_omega(1.5 * m.k_vco * m.pd.maximum)
    with pytest.raises(ParameterError):
        LockInDomain(m)


def test_membership_is_periodic():
    m = ll_model(**LL_LOOP, omega=20.0)
    d = LockInDomain(m)
    for th in (-2.0, 0.3, 2.5):
        assert d.bounds(th) == pytest.approx(d.bounds(th + 3 * TWO_PI), abs=1e-12)


@pytest.mark.parametrize(
    "m",
    [
        pi_model(**PI_LOOP),
        pi_model(**PI_LOOP, omega=55.0),
        ll_model(**LL_LOOP),
        ll_model(**LL_LOOP, omega=-45.0),
        ll_model(0.5, 0.1, 20.0, 6.0, TRI),
    ],
    ids=["pi", "pi-shifted", "lead-lag", "lead-lag-shifted", "lead-lag-tri"],
)
def test_methods_agree_on_grid(m):
    d = LockInDomain(m)
    ths = np.linspace(d.theta_left, d.theta_right, 42)[1:-1]
    bounds = np.array([d.bounds(t) for t in ths])
    span = bounds[:, 1].max() - bounds[:, 0].min()
    xs = np.linspace(bounds[:, 0].min() - 0.3 * span, bounds[:, 1].max() + 0.3 * span, 40)
    sep = classify_grid(m, ths, xs, Method.SEPARATRIX)
    sim = classify_grid(m, ths, xs, Method.SIMULATION)
    X = xs[:, None]
    near = (np.abs(X - bounds[:, 0]) < 1e-3 * span) | (np.abs(X - bounds[:, 1]) < 1e-3 * span)
    assert np.mean(sim == "undecided") < 0.02
    decided = (sim != "undecided") & ~near
    assert np.all(sep[decided] == sim[decided])
    assert np.any(sep == "in") and np.any(sep == "out")


@settings(max_examples=25, deadline=None)
@given(
    st.floats(-0.9, 0.9),
    st.floats(-3.0, 3.0),
    st.floats(-1.0, 1.0),
)
def test_membership_odd_symmetry(frac, th, x):
    m = ll_model(**LL_LOOP)
    om = frac * m.k_vco * m.pd.maximum
    d_pos = LockInDomain(m.with_omega(om))
    d_neg = LockInDomain(m.with_omega(-om))
    lo, hi = d_pos.bounds(th)
    lo_n, hi_n = d_neg.bounds(-th)
    assert lo == pytest.approx(-hi_n, abs=1e-6)
    assert hi == pytest.approx(-lo_n, abs=1e-6)


def test_integrate_convenience_has_no_events():
    tr = integrate(pi_model(), ModelState(0.1, 0.1), IntegrationConfig(t_max=1.0))
    assert tr.events == []
