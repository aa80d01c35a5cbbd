"""Lock-in and pull-in frequency estimation.

The lock-in frequency is found by bisection on the size of an abrupt frequency
step. From the locked state at zero deviation the deviation jumps to
``+delta``; once locked there it jumps to ``-delta``. The loop passes if both
transients lock onto the corresponding equilibrium without slipping a cycle.
The same boundary follows geometrically by asking whether the ``+delta``
equilibrium lies inside the local lock-in domain of the ``-delta`` system.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateError,
    InterpolationError,
    ParameterError,
    PllError,
    ViolationError,
)
from .integrator import IntegrationConfig, integrate, integrate_batch
from .lock import LockInDomain, LockStatus, default_dwell, default_t_max, settle, DEFAULT_EPS
from .loop_filter import FilterKind, make_active_pi, make_lead_lag
from .model import Equilibrium, ModelState, PhaseModel, equilibrium_lift
from .pd import PdCharacteristic


class StepOutcome(enum.Enum):
    LOCKED_NO_SLIP = "locked-no-slip"
    SLIPPED = "slipped"
    NO_LOCK = "no-lock"
    UNDECIDED = "undecided"


class RangeKind(enum.Enum):
    LOCK_IN = "lock-in"
    PULL_IN = "pull-in"


class RangeMethod(enum.Enum):
    STEP_SIMULATION = "step-simulation"
    SEPARATRIX = "separatrix"
    ANALYTIC = "analytic"
    SCALED = "scaled"


@dataclass(frozen=True)
class RangeResult:
    frequency: float
    kind: RangeKind
    method: RangeMethod
    bracket: tuple[float, float]
    tolerance: float
    unbounded: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo, hi = self.bracket
        if not self.unbounded and not (lo <= self.frequency <= hi):
            raise ValueError("frequency outside its bracket")


# -- the two-leg step test ---------------------------------------------------


def _leg(m: PhaseModel, start: ModelState, t_max_scale: float, eps: float) -> StepOutcome:
    eq = m.stable_equilibrium
    if eq is None:
        return StepOutcome.NO_LOCK
    target = equilibrium_lift(eq, m.period, start[1])
    res = settle(m, start, target, t_max=default_t_max(m) * t_max_scale, eps=eps)
    if res.slip.slipped:
        return StepOutcome.SLIPPED
    if res.lock.status is LockStatus.LOCKED:
        if abs(res.lock.target.theta - target.theta) < 0.5 * m.period:
            return StepOutcome.LOCKED_NO_SLIP
        # settled on another lift: the phase error moved by a full period in the limit
        return StepOutcome.SLIPPED
    return StepOutcome.UNDECIDED


def _combine(outcomes: Sequence[StepOutcome]) -> StepOutcome:
    for o in (StepOutcome.SLIPPED, StepOutcome.NO_LOCK, StepOutcome.UNDECIDED):
        if o in outcomes:
            return o
    return StepOutcome.LOCKED_NO_SLIP


def zero_deviation_equilibrium(model: PhaseModel) -> Equilibrium:
    eq = model.with_omega(0.0).stable_equilibrium
    if eq is None:
        raise ParameterError("the zero-deviation model has no stable equilibrium")
    return equilibrium_lift(eq, model.period, 0.0)


def step_slip_test(
    model: PhaseModel,
    delta: float,
    *,
    t_max_scale: float = 1.0,
    eps: float = DEFAULT_EPS,
    first_sign: int = 1,
) -> StepOutcome:
    """Run the ``0 -> +delta -> -delta`` frequency-step experiment.

    ``model.omega_e_free`` is ignored. ``first_sign=-1`` steps down first.
    """
    if not (delta >= 0 and math.isfinite(delta)):
        raise ParameterError(f"delta must be a non-negative number, got {delta!r}")
    eq0 = zero_deviation_equilibrium(model)
    if delta == 0:
        return StepOutcome.LOCKED_NO_SLIP
    m1 = model.with_omega(first_sign * delta)
    m2 = model.with_omega(-first_sign * delta)
    eq1, eq2 = m1.stable_equilibrium, m2.stable_equilibrium
    if eq1 is None or eq2 is None:
        return StepOutcome.NO_LOCK
    out1 = _leg(m1, eq0.state, t_max_scale, eps)
    if out1 in (StepOutcome.SLIPPED, StepOutcome.NO_LOCK):
        return out1
    start2 = equilibrium_lift(eq1, model.period, eq0.theta).state
    out2 = _leg(m2, start2, t_max_scale, eps)
    return _combine([out1, out2])


# -- bisection drivers ---------------------------------------------------------


def _natural_scale(model: PhaseModel) -> float:
    return model.with_omega(0.0).natural_frequency


def _existence_bound(model: PhaseModel) -> float:
    """Largest deviation with equilibria (infinite for the integrating filter)."""
    if model.filter.kind is FilterKind.ACTIVE_PI:
        return math.inf
    return model.k_vco * model.pd.maximum * model.filter.dc_gain


def _bisect(
    passes: Callable[[float], bool],
    model: PhaseModel,
    tol: float,
    max_iter: int,
    diag: dict,
) -> tuple[float, float]:
    hi = _existence_bound(model)
    lo = 0.0
    if math.isinf(hi):
        guess = _natural_scale(model)
        for _ in range(60):
            if passes(guess):
                lo, guess = guess, 2.0 * guess
            else:
                hi = guess
                break
        else:
            raise ConvergenceError("no failing frequency found while expanding the bracket")
    it = 0
    while hi - lo > tol:
        if it >= max_iter:
            raise ConvergenceError(f"bracket [{lo}, {hi}] wider than tol={tol} after {max_iter} bisections")
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
        it += 1
    diag["bisections"] = it
    return lo, hi


def estimate_lock_in(
    model: PhaseModel,
    tol: float,
    *,
    max_iter: int = 200,
    retries: int = 2,
    probes: int = 8,
    eps: float = DEFAULT_EPS,
    first_sign: int = 1,
) -> RangeResult:
    """Lock-in frequency by bisection on the step test.

    Undecided outcomes are rerun with a 4x longer horizon up to ``retries``
    times and otherwise count as failures, so the lower bracket end is never
    raised on an unverified outcome. After convergence ``probes`` evenly spaced
    steps below the boundary are re-checked; a failing probe lowers the upper
    bracket to that probe and bisection restarts beneath it.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    diag = {"simulations": 0, "undecided": 0, "unresolved": 0, "monotone": True}

    def passes(delta: float) -> bool:
        scale = 1.0
        for attempt in range(retries + 1):
            out = step_slip_test(model, delta, t_max_scale=scale, eps=eps, first_sign=first_sign)
            diag["simulations"] += 1
            if out is not StepOutcome.UNDECIDED:
                return out is StepOutcome.LOCKED_NO_SLIP
            diag["undecided"] += 1
            scale *= 4.0
        diag["unresolved"] += 1
        return False

    lo, hi = _bisect(passes, model, tol, max_iter, diag)
    for _ in range(4):
        failing = [d for d in (lo * k / (probes + 1) for k in range(1, probes + 1)) if d > 0 and not passes(d)]
        if not failing:
            break
        diag["monotone"] = False
        cap = min(failing)
        lo, hi = _bisect_below(passes, cap, tol, max_iter, diag)
    return RangeResult(lo, RangeKind.LOCK_IN, RangeMethod.STEP_SIMULATION, (lo, hi), tol, False, diag)


def _bisect_below(passes, hi, tol, max_iter, diag):
    lo = 0.0
    it = 0
    while hi - lo > tol:
        if it >= max_iter:
            raise ConvergenceError("bracket did not shrink to tolerance")
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
        it += 1
    return lo, hi


def separatrix_step_check(model: PhaseModel, delta: float, cfg: IntegrationConfig | None = None) -> bool:
    """Geometric version of the step test via local lock-in domains."""
    if delta == 0:
        return True
    eq0 = zero_deviation_equilibrium(model)
    mp, mm = model.with_omega(delta), model.with_omega(-delta)
    eqp, eqm = mp.stable_equilibrium, mm.stable_equilibrium
    if eqp is None or eqm is None:
        return False
    eqp = equilibrium_lift(eqp, model.period, eq0.theta)
    if not LockInDomain(mp, cfg).contains(eq0.state):
        return False
    return LockInDomain(mm, cfg).contains(eqp.state)


def estimate_lock_in_separatrix(
    model: PhaseModel, tol: float, cfg: IntegrationConfig | None = None, *, max_iter: int = 200
) -> RangeResult:
    """Lock-in frequency from separatrix geometry (second-order models, odd characteristic)."""
    if not tol > 0:
        raise ParameterError("tol must be positive")
    diag = {"traces": 0, "degenerate": 0}

    def passes(delta: float) -> bool:
        diag["traces"] += 1
        try:
            return separatrix_step_check(model, delta, cfg)
        except (DegenerateError, InterpolationError):
            diag["degenerate"] += 1
            return False

    lo, hi = _bisect(passes, model, tol, max_iter, diag)
    return RangeResult(lo, RangeKind.LOCK_IN, RangeMethod.SEPARATRIX, (lo, hi), tol, False, diag)


# -- pull-in -------------------------------------------------------------------


@dataclass(frozen=True)
class LyapunovReport:
    n_trajectories: int
    max_increase: float
    max_rate_error: float
    passed: bool
    violations: list = field(default_factory=list)


def lyapunov_pi(model: PhaseModel, x, theta):
    """``V = (K tau1 / 2)(x - omega/K)^2 + int_0^theta v``."""
    k, tau1 = model.k_vco, model.filter.tau1
    return 0.5 * k * tau1 * (np.asarray(x) - model.omega_e_free / k) ** 2 + model.pd.integral(theta)


def lyapunov_pi_rate(model: PhaseModel, theta):
    """Closed-form derivative ``-K (tau2/tau1) v(theta)^2`` along solutions."""
    f = model.filter
    return -model.k_vco * (f.tau2 / f.tau1) * model.pd(theta) ** 2


def verify_lyapunov_pi(
    model: PhaseModel,
    n_trajectories: int = 100,
    *,
    seed: int = 0,
    t_max: float | None = None,
    n_samples: int = 4001,
    segments: int = 20,
    monotone_tol: float = 1e-6,
    rate_tol: float = 1e-4,
    strict: bool = True,
) -> LyapunovReport:
    """Check the PI Lyapunov function numerically along random trajectories.

    (a) V sampled along each trajectory never increases by more than
    ``monotone_tol * V(0)``; (b) the change of V over each of ``segments``
    windows matches the Simpson integral of the closed-form rate to
    ``rate_tol`` relative to the total decrease.
    """
    if model.filter.kind is not FilterKind.ACTIVE_PI:
        raise ParameterError("the Lyapunov check applies to the active PI filter")
    rng = np.random.default_rng(seed)
    x_s = model.omega_e_free / model.k_vco
    spread = 2.0 * model.natural_frequency / model.k_vco
    t_max = 20.0 / model.slow_rate if t_max is None else t_max
    cfg = IntegrationConfig(rel_tol=1e-11, abs_tol=1e-13, t_max=t_max)
    n_samples += (n_samples + 1) % 2  # odd count for Simpson
    per_seg = (n_samples - 1) // segments
    per_seg -= per_seg % 2
    worst_inc, worst_rate = 0.0, 0.0
    violations = []
    for i in range(n_trajectories):
        s0 = ModelState(x_s + spread * rng.uniform(-1, 1), rng.uniform(-math.pi, math.pi) * model.period / (2 * math.pi))
        tr = integrate(model, s0, cfg)
        t = np.linspace(0.0, tr.t_final, per_seg * segments + 1)
        ys = tr.states_at(t)
        v = lyapunov_pi(model, ys[:, 0], ys[:, 1])
        rate = lyapunov_pi_rate(model, ys[:, 1])
        scale = max(abs(v[0]), 1e-300)
        inc = float(np.max(np.diff(v))) / scale
        worst_inc = max(worst_inc, inc)
        if inc > monotone_tol:
            j = int(np.argmax(np.diff(v)))
            violations.append((i, float(t[j]), "increase"))
        dt = t[1] - t[0]
        total = abs(v[-1] - v[0])
        for sgm in range(segments):
            a, b = sgm * per_seg, (sgm + 1) * per_seg
            r = rate[a : b + 1]
            simpson = dt / 3.0 * (r[0] + r[-1] + 4.0 * r[1:-1:2].sum() + 2.0 * r[2:-1:2].sum())
            err = abs((v[b] - v[a]) - simpson) / max(total, 1e-300)
            worst_rate = max(worst_rate, err)
            if total > 1e-14 * scale and err > rate_tol:
                violations.append((i, float(t[a]), "rate"))
    report = LyapunovReport(n_trajectories, worst_inc, worst_rate, not violations, violations)
    if strict and violations:
        i, t_bad, what = violations[0]
        raise ViolationError(f"trajectory {i}: Lyapunov {what} check failed near t={t_bad:.6g}")
    return report


def _pull_in_grid(model: PhaseModel, grid: tuple[int, int], margin: float):
    n_th, n_x = grid
    p = model.period
    thetas = -0.5 * p + p * np.arange(n_th) / n_th
    f = model.filter
    bound = model.pd.maximum * abs(f.b / f.a) if f.a else model.pd.maximum
    xs = np.linspace(-bound - margin, bound + margin, n_x)
    TH, X = np.meshgrid(thetas, xs)
    return X.ravel(), TH.ravel()


class _ReturnMap:
    """Tracks returns to the section ``theta = ref (mod period)`` for a set of states.

    Crossing points use cubic Hermite interpolation of ``x`` against ``theta``.
    A state whose successive returns agree to ``rtol`` after ``min_returns``
    revolutions sits on a rotating periodic orbit and will never lock.
    """

    def __init__(self, m: PhaseModel, x0, th0, ref: float, rtol: float = 1e-7, min_returns: int = 3):
        self.m, self.ref, self.rtol, self.min_returns = m, ref, rtol, min_returns
        self.x, self.th = np.array(x0, dtype=float), np.array(th0, dtype=float)
        self.dx, self.dth = m.rhs_array(self.x, self.th)
        self.rev = np.floor((self.th - ref) / m.period)
        self.last = np.full(self.x.size, np.nan)
        self.count = np.zeros(self.x.size, dtype=int)

    def update(self, x, th, idx) -> np.ndarray:
        """Advance to the new states; returns a mask of states found on a rotating orbit."""
        m, p = self.m, self.m.period
        dx, dth = m.rhs_array(x, th)
        rev = np.floor((th - self.ref) / p)
        crossed = rev != self.rev[idx]
        cycling = np.zeros(x.size, dtype=bool)
        if crossed.any():
            j = np.nonzero(crossed)[0]
            g = idx[j]
            tha, thb = self.th[g], th[j]
            xa, xb = self.x[g], x[j]
            level = self.ref + p * np.maximum(rev[j], self.rev[g])
            span = thb - tha
            s = (level - tha) / span
            with np.errstate(divide="ignore", invalid="ignore"):
                ma = np.where(self.dth[g] != 0, self.dx[g] / self.dth[g], 0.0) * span
                mb = np.where(dth[j] != 0, dx[j] / dth[j], 0.0) * span
            h00 = (1 + 2 * s) * (1 - s) ** 2
            h10 = s * (1 - s) ** 2
            h01 = s * s * (3 - 2 * s)
            h11 = s * s * (s - 1)
            xc = h00 * xa + h10 * ma + h01 * xb + h11 * mb
            close = np.abs(xc - self.last[g]) <= self.rtol * (1.0 + np.abs(xc))
            self.count[g] = np.where(close, self.count[g] + 1, 0)
            self.last[g] = xc
            cycling[j] = self.count[g] >= self.min_returns
        self.x[idx], self.th[idx], self.dx[idx], self.dth[idx], self.rev[idx] = x, th, dx, dth, rev
        return cycling


def grid_locks(
    model: PhaseModel,
    x0: np.ndarray,
    th0: np.ndarray,
    t_max: float,
    eps: float = DEFAULT_EPS,
    *,
    stop_on_cycle: bool = False,
) -> tuple[np.ndarray, bool]:
    """Per initial state: True when it settles on any lift of the stable equilibrium.

    The second value reports whether some state was found on a rotating
    periodic orbit; with ``stop_on_cycle`` the run ends at that moment.
    """
    x0 = np.asarray(x0, dtype=float)
    th0 = np.asarray(th0, dtype=float)
    eq = model.stable_equilibrium
    if eq is None:
        return np.zeros(x0.size, dtype=bool), False
    dwell = default_dwell(model)
    scale = model.k_vco / model.natural_frequency
    p = model.period
    entry = np.full(x0.size, np.nan)
    locked = np.zeros(x0.size, dtype=bool)
    returns = _ReturnMap(model, x0, th0, eq.theta + 0.5 * p)
    found = [False]

    def monitor(t, x, th, idx):
        n = np.round((th - eq.theta) / p)
        d = np.abs(th - eq.theta - n * p) + np.abs(x - eq.x) * scale
        inside = d < eps
        e = entry[idx]
        e = np.where(inside, np.where(np.isnan(e), t, e), np.nan)
        entry[idx] = e
        lock = inside & (t - e >= dwell)
        locked[idx[lock]] = True
        cyc = returns.update(x, th, idx)
        if cyc.any():
            found[0] = True
            if stop_on_cycle:
                return np.ones(idx.size, dtype=bool)
        return lock | cyc

    integrate_batch(model, x0, th0, t_max, rel_tol=1e-10, abs_tol=1e-12, monitor=monitor)
    return locked, found[0]


def estimate_pull_in(
    model: PhaseModel,
    grid: tuple[int, int] = (32, 32),
    tol: float | None = None,
    *,
    retries: int = 2,
    lyapunov_trajectories: int = 8,
    max_iter: int = 200,
) -> RangeResult:
    """Pull-in frequency.

    For the PI filter the range is unbounded; the result carries a Lyapunov
    check as evidence. For the lead-lag filter it is the largest deviation for
    which every state of a ``grid`` over one period and the absorbing x-band
    locks; this is a numerical estimate that cannot exclude hidden
    oscillations outside the sampled states.
    """
    if min(grid) < 32:
        raise ParameterError("pull-in grid must be at least 32x32")
    if model.filter.kind is FilterKind.ACTIVE_PI:
        report = verify_lyapunov_pi(model.with_omega(_natural_scale(model)), lyapunov_trajectories, strict=False)
        return RangeResult(
            math.inf,
            RangeKind.PULL_IN,
            RangeMethod.ANALYTIC,
            (math.inf, math.inf),
            0.0 if tol is None else tol,
            True,
            {"lyapunov": report},
        )
    hi = _existence_bound(model)
    tol = 1e-3 * hi if tol is None else tol
    margin = 0.5 * model.pd.maximum
    x0, th0 = _pull_in_grid(model, grid, margin)
    diag = {"grid": tuple(grid), "undecided": 0, "cycles": 0, "caveat": "numerical estimate; hidden oscillations are not excluded"}

    def passes(omega: float) -> bool:
        m = model.with_omega(omega)
        if m.stable_equilibrium is None:
            return False
        pending = np.ones(x0.size, dtype=bool)
        t_max = default_t_max(m)
        for _ in range(retries + 1):
            ok, cycle = grid_locks(m, x0[pending], th0[pending], t_max, stop_on_cycle=True)
            if cycle:
                diag["cycles"] += 1
                return False
            idx = np.nonzero(pending)[0]
            pending[idx[ok]] = False
            if not pending.any():
                return True
            diag["undecided"] += int(pending.sum())
            t_max *= 4.0
        return False

    lo = 0.0
    if not passes(0.0):
        return RangeResult(0.0, RangeKind.PULL_IN, RangeMethod.STEP_SIMULATION, (0.0, 0.0), tol, False, diag)
    it = 0
    while hi - lo > tol:
        if it >= max_iter:
            raise ConvergenceError("pull-in bracket did not shrink to tolerance")
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
        it += 1
    return RangeResult(lo, RangeKind.PULL_IN, RangeMethod.STEP_SIMULATION, (lo, hi), tol, False, diag)


# -- closed forms and scaling -----------------------------------------------------


def analytic_lock_in_estimate(tau1: float, tau2: float, k_vco: float) -> float:
    """Three-term series estimate of the PI lock-in frequency (printed form)."""
    if tau1 <= 0 or tau2 < 0 or k_vco <= 0:
        raise ParameterError("tau1 and k_vco must be positive and tau2 non-negative")
    r = k_vco / tau1
    return (
        math.sqrt(r) / math.sqrt(2.0)
        + r / 6.0
        + tau2**2 * (5.0 - 6.0 * math.log(2.0)) / (math.sqrt(2.0) * 36.0 * tau1) * r**1.5
    )


def scale_lock_in(tau2: float, k_over_tau1: float, base: Callable[[float, float], float]) -> float:
    """PI lock-in at ``tau2`` from a function evaluated at ``tau2 = 1``."""
    if not tau2 > 0:
        raise ParameterError("tau2 must be positive")
    return base(1.0, k_over_tau1 * tau2**2) / tau2


@dataclass(frozen=True)
class Reduction:
    """Reduced model and the maps between original and reduced variables.

    ``x_reduced = x_scale * x``, ``t_reduced = t / time_scale`` and
    ``omega_reduced = omega_scale * omega``.
    """

    model: PhaseModel
    x_scale: float
    time_scale: float
    omega_scale: float

    def to_reduced(self, s: ModelState) -> ModelState:
        return ModelState(self.x_scale * s[0], s[1])

    def from_reduced(self, s: ModelState) -> ModelState:
        return ModelState(s[0] / self.x_scale, s[1])

    def reduced_time(self, t: float) -> float:
        return t / self.time_scale

    def reduced_omega(self, omega: float) -> float:
        return self.omega_scale * omega

    def original_omega(self, omega_reduced: float) -> float:
        return omega_reduced / self.omega_scale


def reduce_parameters(model: PhaseModel) -> Reduction:
    """Remove ``tau1`` from the model.

    PI: ``x -> tau1 x`` leaves ``x' = v``, ``theta' = omega - (K/tau1)(x + tau2 v)``.
    Lead-lag: ``t -> t tau1`` leaves a model in ``K tau1`` and ``tau2/tau1`` with
    deviation ``tau1 omega``.
    """
    f = model.filter
    if f.kind is FilterKind.ACTIVE_PI:
        reduced = PhaseModel(make_active_pi(1.0, f.tau2), model.pd, model.k_vco / f.tau1, model.omega_e_free)
        return Reduction(reduced, f.tau1, 1.0, 1.0)
    reduced = PhaseModel(
        make_lead_lag(1.0, f.tau2 / f.tau1), model.pd, model.k_vco * f.tau1, model.omega_e_free * f.tau1
    )
    return Reduction(reduced, 1.0, f.tau1, f.tau1)


# -- diagram sweeps ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """Grid for a lock-in frequency diagram.

    The axis is ``K/tau1`` for the PI filter and ``K tau1`` for the lead-lag
    filter; the family parameter is ``tau2`` and ``tau2/tau1`` respectively.
    Points are evaluated with ``tau1 = 1``. ``rel_tol`` is relative to the
    natural frequency (PI) or to ``K * max v`` (lead-lag).
    """

    filter_kind: FilterKind
    pd: PdCharacteristic
    axis: tuple[float, ...]
    family: tuple[float, ...]
    rel_tol: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "filter_kind", FilterKind(self.filter_kind))
        object.__setattr__(self, "axis", tuple(float(a) for a in self.axis))
        object.__setattr__(self, "family", tuple(float(f) for f in self.family))
        if not self.axis or not self.family:
            raise ParameterError("sweep axis and family must be non-empty")
        if any(b <= a for a, b in zip(self.axis, self.axis[1:])):
            raise ParameterError("sweep axis must be strictly increasing")
        if any(a <= 0 for a in self.axis):
            raise ParameterError("sweep axis values must be positive")
        if any(not 0.0 <= f <= 1.0 for f in self.family):
            raise ParameterError("family values must lie in [0, 1]")
        if not self.rel_tol > 0:
            raise ParameterError("rel_tol must be positive")

    def model(self, axis: float, family: float) -> PhaseModel:
        if self.filter_kind is FilterKind.ACTIVE_PI:
            flt = make_active_pi(1.0, family)
        else:
            flt = make_lead_lag(1.0, family)
        return PhaseModel(flt, self.pd, axis, 0.0)

    def tolerance(self, model: PhaseModel) -> float:
        if self.filter_kind is FilterKind.ACTIVE_PI:
            return self.rel_tol * _natural_scale(model)
        return self.rel_tol * _existence_bound(model)


@dataclass(frozen=True)
class SweepRow:
    axis: float
    family: float
    omega_lockin: float
    omega_normalized: float
    error: str | None = None


def _sweep_point(spec: SweepSpec, axis: float, family: float) -> SweepRow:
    try:
        m = spec.model(axis, family)
        res = estimate_lock_in(m, spec.tolerance(m))
    except PllError as exc:
        return SweepRow(axis, family, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    # tau1 = 1, so omega*tau1/K (PI) and omega/K (lead-lag) coincide
    return SweepRow(axis, family, res.frequency, res.frequency / axis)


def sweep_threads() -> int:
    env = os.environ.get("PLL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParameterError(f"PLL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def sweep_diagram(spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """One lock-in estimate per (family, axis) point, ordered family-major."""
    points = [(a, f) for f in spec.family for a in spec.axis]
    workers = sweep_threads() if workers is None else workers
    if workers <= 1 or len(points) == 1:
        return [_sweep_point(spec, a, f) for a, f in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_point, spec, a, f) for a, f in points]
        return [fut.result() for fut in futures]


def monotone_families(rows: Sequence[SweepRow]) -> dict[float, bool]:
    """Per family value: whether the lock-in frequency is non-decreasing along the axis."""
    out: dict[float, bool] = {}
    for fam in sorted({r.family for r in rows}):
        vals = [r.omega_lockin for r in sorted(rows, key=lambda r: r.axis) if r.family == fam]
        out[fam] = all(b >= a for a, b in zip(vals, vals[1:]))
    return out
