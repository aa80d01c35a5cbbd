import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from pll_lockin import (
    Direction,
    EventKind,
    EventSpec,
    IntegrationConfig,
    IntegrationError,
    LockInDomain,
    ModelState,
    ParameterError,
    PdCharacteristic,
    PhaseModel,
    Termination,
    integrate,
    integrate_batch,
    integrate_with_events,
    make_active_pi,
    make_lead_lag,
)
from conftest import LL_LOOP, SIN, TRI, ll_model, pi_model, zero_pd

TWO_PI = 2 * math.pi


def scipy_reference(m, s0, t_eval):
    sol = solve_ivp(
        lambda t, y: m.rhs(y[0], y[1]), (0, t_eval[-1]), list(s0), method="DOP853",
        rtol=1e-13, atol=1e-14, t_eval=t_eval,
    )
    return sol.y.T


def slip_event(theta0, terminal=False, sign=1):
    return EventSpec(lambda t, x, th: th - theta0 - sign * TWO_PI, EventKind.SLIP_CROSSING, terminal)


def test_config_validation():
    for bad in (dict(rel_tol=0), dict(abs_tol=-1), dict(t_max=0), dict(max_steps=0), dict(dense_stride=0)):
        with pytest.raises(ParameterError):
            IntegrationConfig(**bad)


def test_linear_flow_without_coupling():
    # zero characteristic and x0 = 0 leave theta' = omega
    m = PhaseModel(make_active_pi(1.0, 1.0), zero_pd(), 5.0, 3.0)
    tr = integrate(m, ModelState(0.0, 0.7), IntegrationConfig(t_max=2.0))
    assert abs(tr.at(2.0).theta_e - (0.7 + 6.0)) < 1e-10
    assert tr.final.x == 0.0


def test_matches_scipy_dop853():
    rng = np.random.default_rng(3)
    for pd in (SIN, TRI):
        m = ll_model(0.2, 0.05, 30.0, 4.0, pd)
        s0 = ModelState(rng.normal(), rng.uniform(-3, 3))
        tr = integrate(m, s0, IntegrationConfig(t_max=3.0, rel_tol=1e-11, abs_tol=1e-13))
        t = np.linspace(0, 3, 61)
        ref = scipy_reference(m, s0, t)
        assert np.max(np.abs(tr.states_at(t) - ref)) < 1e-8


def test_reversibility():
    m = pi_model(0.3, 0.2, 5.0, 1.0)
    s0 = ModelState(0.3, 1.0)
    cfg = IntegrationConfig(t_max=0.05, rel_tol=1e-12, abs_tol=1e-14)
    fwd = integrate(m, s0, cfg)
    back = integrate_with_events(
        m, fwd.final, IntegrationConfig(t_max=0.05, rel_tol=1e-12, abs_tol=1e-14, direction=Direction.BACKWARD), t0=0.05
    )
    assert back.t_final == pytest.approx(0.0, abs=1e-15)
    assert np.max(np.abs(np.subtract(back.final, s0))) < 1e-7


def test_backward_times_decrease():
    m = ll_model(1, 0.1, 2, 0.3)
    tr = integrate(m, ModelState(0.1, 0.1), IntegrationConfig(t_max=1.0, direction=Direction.BACKWARD))
    assert tr.t_final == -1.0
    assert np.all(np.diff(tr.step_times) < 0)
    assert np.all(np.diff(tr.t) < 0)


def test_self_convergence():
    m = ll_model(**LL_LOOP, omega=20.0)
    s0 = ModelState(0.4, -1.0)
    tol = 1e-8
    a = integrate(m, s0, IntegrationConfig(t_max=0.5, rel_tol=tol, abs_tol=tol * 1e-3)).final
    b = integrate(m, s0, IntegrationConfig(t_max=0.5, rel_tol=tol / 2, abs_tol=tol * 5e-4)).final
    scale = max(1.0, abs(a.theta_e))
    assert max(abs(a.x - b.x), abs(a.theta_e - b.theta_e)) < 10 * tol * scale


def test_global_error_scales_with_tolerance():
    # linear characteristic: exact solution by matrix exponential
    pd = PdCharacteristic.custom(lambda t: 0.5 * t, lambda t: 0.5)
    m = PhaseModel(make_lead_lag(1.0, 0.2), pd, 4.0, 0.0)
    f = m.filter
    A = np.array([[f.a, 0.5 * f.b], [-m.k_vco * f.c, -m.k_vco * f.h * 0.5]])
    s0 = np.array([0.3, 1.0])
    exact = expm(A * 5.0) @ s0
    errs = []
    for tol in (1e-6, 1e-8, 1e-10):
        y = integrate(m, ModelState(*s0), IntegrationConfig(t_max=5.0, rel_tol=tol, abs_tol=tol)).final
        errs.append(np.max(np.abs(np.array(y) - exact)))
        assert errs[-1] < 100 * tol
    assert errs[2] < errs[0]


def test_samples_monotone_and_reproduced():
    m = pi_model(**dict(tau1=0.0633, tau2=0.0225, k=250.0), omega=50.0)
    tr = integrate(m, ModelState(0.0, 0.0), IntegrationConfig(t_max=0.4))
    t = tr.t
    assert np.all(np.diff(t) > 0)
    assert t[0] == 0.0 and t[-1] == tr.t_final
    assert np.array_equal(tr.states_at(t), np.column_stack([tr.x, tr.theta]))
    # continuous extension hits the step states
    st = tr.states_at(tr.step_times)
    assert np.max(np.abs(st - tr.step_states)) < 1e-12


def test_custom_stride():
    tr = integrate(ll_model(), ModelState(0, 0.5), IntegrationConfig(t_max=1.0, dense_stride=0.25))
    assert np.allclose(tr.t, [0, 0.25, 0.5, 0.75, 1.0])


def test_determinism():
    m = ll_model(**LL_LOOP, omega=30.0)
    s0 = ModelState(0.7, 0.2)
    a = integrate(m, s0, IntegrationConfig(t_max=0.3))
    b = integrate(m, s0, IntegrationConfig(t_max=0.3))
    assert np.array_equal(a.step_states, b.step_states)
    assert np.array_equal(a.samples(), b.samples())


def test_step_limit():
    tr = integrate(ll_model(), ModelState(0, 1), IntegrationConfig(t_max=100.0, max_steps=5))
    assert tr.terminated_by is Termination.STEP_LIMIT
    assert tr.n_steps == 5


def test_non_finite_state():
    pd = PdCharacteristic.custom(lambda t: math.inf if t > 1 else t)
    m = PhaseModel(make_active_pi(1, 1), pd, 1.0, 10.0)
    with pytest.raises(IntegrationError):
        integrate(m, ModelState(0, 0), IntegrationConfig(t_max=1.0))
    with pytest.raises(IntegrationError):
        integrate(ll_model(), ModelState(math.nan, 0), IntegrationConfig())


# -- events --------------------------------------------------------------------


def test_slip_event_root():
    # step from the +80 rad/s equilibrium to -80 rad/s: the phase error runs down a full period
    m = pi_model(**dict(tau1=0.0633, tau2=0.0225, k=250.0), omega=-80.0)
    up = m.with_omega(80.0).stable_equilibrium
    tr = integrate_with_events(m, up.state, IntegrationConfig(t_max=1.0), [slip_event(up.theta, sign=-1)])
    hits = [e for e in tr.events if e.kind is EventKind.SLIP_CROSSING]
    assert len(hits) == 1
    assert abs(tr.at(hits[0].t).theta_e - up.theta + TWO_PI) < 1e-9
    assert abs(hits[0].state.theta_e - up.theta + TWO_PI) < 1e-9


def test_no_event():
    tr = integrate_with_events(ll_model(), ModelState(0, 0.5), IntegrationConfig(t_max=2.0), [slip_event(0.5)])
    assert tr.events == [] and tr.terminated_by is Termination.TIME_LIMIT


def test_terminal_event_truncates():
    m = PhaseModel(make_active_pi(1.0, 1.0), zero_pd(), 1.0, 2.0)
    tr = integrate_with_events(m, ModelState(0, 0), IntegrationConfig(t_max=10.0), [slip_event(0.0, True)])
    assert tr.terminated_by is Termination.EVENT
    assert tr.t_final == pytest.approx(math.pi, abs=1e-11)
    assert tr.final.theta_e == pytest.approx(TWO_PI, abs=1e-10)


def test_event_direction_filter():
    m = PhaseModel(make_active_pi(1.0, 1.0), zero_pd(), 1.0, 2.0)
    down = EventSpec(lambda t, x, th: th - 1.0, EventKind.DOMAIN_EXIT, direction=-1)
    up = EventSpec(lambda t, x, th: th - 1.0, EventKind.DOMAIN_EXIT, direction=1)
    tr = integrate_with_events(m, ModelState(0, 0), IntegrationConfig(t_max=1.0), [down, up])
    assert [e.index for e in tr.events] == [1]


def test_step_callback_stops():
    calls = []

    def cb(t, x, th):
        calls.append(t)
        return t > 0.5

    tr = integrate_with_events(ll_model(), ModelState(0, 1), IntegrationConfig(t_max=5.0), step_callback=cb)
    assert tr.terminated_by is Termination.EVENT
    assert tr.t_final == calls[-1] and tr.t_final > 0.5


def slips_from(m, x0):
    events = [slip_event(0.0, True), slip_event(0.0, True, sign=-1)]
    tr = integrate_with_events(m, ModelState(x0, 0.0), IntegrationConfig(t_max=1.0), events)
    return any(e.kind is EventKind.SLIP_CROSSING for e in tr.events)


def test_large_initial_x_slips_and_threshold_matches_separatrix():
    m = ll_model(**LL_LOOP)
    assert slips_from(m, 3.0)
    assert not slips_from(m, 0.0)
    lo, hi = 0.0, 3.0
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if slips_from(m, mid) else (mid, hi)
    # the slip threshold on theta = 0 is where the upper separatrix crosses it
    assert LockInDomain(m).bounds(0.0)[1] == pytest.approx(0.5 * (lo + hi), abs=1e-5)


# -- batch ---------------------------------------------------------------------


def kink_reference(m, s0, t_end):
    """DOP853 restarted at every detector corner, so no step straddles a kink."""
    sp = m.pd.corner_spacing
    t, y = 0.0, np.array(s0, float)
    while t < t_end:
        n = math.floor(y[1] / sp - 0.5)
        up = lambda t, y, n=n: y[1] - (n + 1.5) * sp
        down = lambda t, y, n=n: y[1] - (n + 0.5) * sp
        up.terminal = down.terminal = True
        sol = solve_ivp(
            lambda t, y: m.rhs(y[0], y[1]), (t, t_end), y, method="DOP853",
            rtol=1e-13, atol=1e-14, events=[up, down],
        )
        t, y = sol.t[-1], sol.y[:, -1].copy()
        if sol.status == 1:
            y[1] += 1e-13 if sol.t_events[0].size else -1e-13
    return y


def test_batch_matches_single():
    m = ll_model(0.5, 0.1, 20.0, 3.0)
    rng = np.random.default_rng(8)
    x0 = rng.normal(size=12)
    th0 = rng.uniform(-3, 3, size=12)
    res = integrate_batch(m, x0, th0, 2.0, rel_tol=1e-11, abs_tol=1e-13)
    assert res.t_end == 2.0
    for i in range(12):
        ref = scipy_reference(m, (x0[i], th0[i]), np.array([0.0, 2.0]))[-1]
        assert abs(res.x[i] - ref[0]) < 1e-8 and abs(res.theta[i] - ref[1]) < 1e-8


def test_triangular_kinks():
    m = ll_model(0.5, 0.1, 20.0, 3.0, TRI)
    rng = np.random.default_rng(8)
    x0 = rng.normal(size=12)
    th0 = rng.uniform(-3, 3, size=12)
    cfg = IntegrationConfig(rel_tol=1e-11, abs_tol=1e-13, t_max=2.0)
    res = integrate_batch(m, x0, th0, 2.0, rel_tol=1e-11, abs_tol=1e-13)
    for i in range(12):
        ref = kink_reference(m, (x0[i], th0[i]), 2.0)
        tr = integrate_with_events(m, ModelState(x0[i], th0[i]), cfg)
        # single trajectories step onto corners; shared batch steps straddle them
        assert abs(tr.x[-1] - ref[0]) < 1e-8 and abs(tr.theta[-1] - ref[1]) < 1e-8
        assert abs(res.x[i] - ref[0]) < 1e-6 and abs(res.theta[i] - ref[1]) < 1e-6


def test_batch_monitor_freezes_states():
    m = PhaseModel(make_active_pi(1.0, 1.0), zero_pd(), 1.0, 1.0)
    th0 = np.array([0.0, 1.0, 2.0])

    def mon(t, x, th, idx):
        return th >= 2.5

    res = integrate_batch(m, np.zeros(3), th0, 5.0, monitor=mon)
    assert res.done.all()
    assert np.all(res.theta >= 2.5)
    # each state is frozen at the step where the monitor fired
    assert np.allclose(res.theta, th0 + res.t_done, atol=1e-12)
