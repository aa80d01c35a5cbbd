"""Adaptive Dormand-Prince 5(4) integration of the planar model.

The single-trajectory integrator works on Python floats (the state is only two
numbers, so array overhead would dominate) and keeps the stage derivatives of
every accepted step so that the solution can be evaluated anywhere through the
pair's quartic continuous extension. Step size follows a PI controller.

``integrate_batch`` advances many initial states at once with a shared step
size; it has no dense output and is used for grid classification.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationError, ParameterError
from .model import ModelState, PhaseModel

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between the 5th and embedded 4th order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# continuous extension: y(t0 + s h) = y0 + h * sum_i k_i * (P[i] . [s, s^2, s^3, s^4])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

# PI step-size controller (Hairer & Wanner, DOPRI5 defaults)
_SAFETY = 0.9
_ALPHA = 0.17
_BETA = 0.04
_FAC_MIN, _FAC_MAX = 0.2, 10.0


class Direction(enum.Enum):
    FORWARD = 1
    BACKWARD = -1


class Termination(enum.Enum):
    TIME_LIMIT = "time-limit"
    EVENT = "event"
    STEP_LIMIT = "step-limit"


class EventKind(enum.Enum):
    SLIP_CROSSING = "slip-crossing"
    EQUILIBRIUM_ENTRY = "equilibrium-entry"
    DOMAIN_EXIT = "domain-exit"


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    t_max: float = 10.0
    max_steps: int = 10**7
    direction: Direction = Direction.FORWARD
    dense_stride: float | None = None
    first_step: float | None = None
    max_step: float = math.inf

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ParameterError("integration tolerances must be positive")
        if not (self.t_max > 0):
            raise ParameterError(f"t_max must be positive, got {self.t_max!r}")
        if not (self.max_steps > 0):
            raise ParameterError("max_steps must be positive")
        if self.dense_stride is not None and not self.dense_stride > 0:
            raise ParameterError("dense_stride must be positive")


@dataclass(frozen=True)
class EventSpec:
    """Root of ``fn(t, x, theta)`` marks an event.

    ``direction`` restricts detection to rising (+1) or falling (-1) crossings.
    """

    fn: Callable[[float, float, float], float]
    kind: EventKind
    terminal: bool = False
    direction: int = 0


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    state: ModelState
    index: int = 0


def default_stride(m: PhaseModel) -> float:
    """Sampling interval: 1/256 of the slowest linearized period, clamped to [1e-5, 1e-2] s."""
    eq = m.stable_equilibrium
    mags = [abs(l) for l in eq.eigenvalues] if eq is not None else []
    mags = [v for v in mags if v > 0]
    slowest = min(mags) if mags else m.natural_frequency
    if not slowest > 0:
        return 1e-2
    return min(max(2 * math.pi / slowest / 256, 1e-5), 1e-2)


class Trajectory:
    """Dense record of one integration.

    Times are physical; for backward runs they decrease. Step data are kept so
    that :meth:`at` evaluates the continuous extension of the step containing
    ``t``; :attr:`samples` are produced by that same routine.
    """

    def __init__(
        self,
        initial: ModelState,
        t0: float,
        sign: int,
        s_old: np.ndarray,
        h: np.ndarray,
        y_old: np.ndarray,
        k: np.ndarray,
        s_final: float,
        y_final: tuple[float, float],
        events: list[Event],
        terminated_by: Termination,
        stride: float,
        model: PhaseModel | None = None,
    ):
        self.model = model
        self.initial = initial
        self.t0 = t0
        self.sign = sign
        self._s_old = s_old
        self._h = h
        self._y_old = y_old
        self._k = k
        self._s_final = s_final
        self.final = ModelState(*y_final)
        self.events = events
        self.terminated_by = terminated_by
        self.stride = stride

    @property
    def n_steps(self) -> int:
        return len(self._h)

    @property
    def t_final(self) -> float:
        return self.t0 + self.sign * self._s_final

    @property
    def duration(self) -> float:
        return self._s_final

    @cached_property
    def _q(self) -> np.ndarray:
        # (n, 2, 4): per step and component, polynomial coefficients in sigma
        if not len(self._h):
            return np.zeros((0, 2, 4))
        return np.einsum("nik,ij->nkj", self._k, _P)

    @cached_property
    def step_times(self) -> np.ndarray:
        """Times of step boundaries (initial time included, final time last)."""
        s = np.append(self._s_old, self._s_final) if len(self._h) else np.array([0.0])
        return self.t0 + self.sign * s

    @cached_property
    def step_states(self) -> np.ndarray:
        """States at the step boundaries, shape ``(n + 1, 2)``."""
        if not len(self._h):
            return np.array([self.initial], dtype=float)
        return np.vstack([self._y_old, np.asarray(self.final, dtype=float)])

    def _interp(self, s: np.ndarray) -> np.ndarray:
        n = len(self._h)
        if n == 0:
            return np.repeat(np.asarray(self.initial, dtype=float)[None, :], len(s), axis=0)
        s_end = self._s_old + self._h
        idx = np.clip(np.searchsorted(s_end, s, side="left"), 0, n - 1)
        h = self._h[idx]
        sig = (s - self._s_old[idx]) / h
        q = self._q[idx]
        sig = sig[:, None]
        poly = sig * (q[:, :, 0] + sig * (q[:, :, 1] + sig * (q[:, :, 2] + sig * q[:, :, 3])))
        return self._y_old[idx] + h[:, None] * poly

    def states_at(self, t) -> np.ndarray:
        """Interpolated states, shape ``(len(t), 2)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = self.sign * (t - self.t0)
        if np.any(s < -1e-12 * max(1.0, self._s_final)) or np.any(s > self._s_final * (1 + 1e-12) + 1e-300):
            raise ValueError("requested time outside the integrated interval")
        return self._interp(np.clip(s, 0.0, self._s_final))

    def at(self, t: float) -> ModelState:
        x, th = self.states_at([t])[0]
        return ModelState(float(x), float(th))

    def sample_times(self, stride: float | None = None) -> np.ndarray:
        stride = self.stride if stride is None else stride
        n = int(math.floor(self._s_final / stride + 1e-9))
        s = np.arange(n + 1) * stride
        if s[-1] < self._s_final:
            s = np.append(s, self._s_final)
        return self.t0 + self.sign * s

    def samples(self, stride: float | None = None) -> np.ndarray:
        """``(t, x, theta)`` rows on a uniform grid plus the final time."""
        t = self.sample_times(stride)
        return np.column_stack([t, self.states_at(t)])

    @cached_property
    def _default_samples(self) -> np.ndarray:
        return self.samples()

    @property
    def t(self) -> np.ndarray:
        return self._default_samples[:, 0]

    @property
    def x(self) -> np.ndarray:
        return self._default_samples[:, 1]

    @property
    def theta(self) -> np.ndarray:
        return self._default_samples[:, 2]

    def theta_polynomials(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Per-step ``(t_start, h, theta_start, coeffs)`` of theta(sigma) in physical time."""
        return self.t0 + self.sign * self._s_old, self._h, self._y_old[:, 1], self._q[:, 1, :]


def _initial_step(f, x, th, fx, ft, rtol, atol, span):
    sx = atol + rtol * abs(x)
    st = atol + rtol * abs(th)
    d0 = max(abs(x) / sx, abs(th) / st)
    d1 = max(abs(fx) / sx, abs(ft) / st)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    x1, t1 = x + h0 * fx, th + h0 * ft
    gx, gt = f(x1, t1)
    d2 = max(abs(gx - fx) / sx, abs(gt - ft) / st) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def _locate(interp, g, sig_lo, sig_hi, g_lo, t_of, t_tol):
    """Bisection for a sign change of ``g`` on the step interpolant."""
    for _ in range(200):
        if (sig_hi - sig_lo) * abs(t_of(1.0) - t_of(0.0)) <= t_tol:
            break
        mid = 0.5 * (sig_lo + sig_hi)
        x, th = interp(mid)
        gm = g(t_of(mid), x, th)
        if gm == 0.0:
            return mid
        if (gm > 0) == (g_lo > 0):
            sig_lo, g_lo = mid, gm
        else:
            sig_hi = mid
    return 0.5 * (sig_lo + sig_hi)


def _corner_index(theta: float, spacing: float) -> int:
    # odd in theta, so mirrored trajectories make mirrored cuts
    y = theta / spacing
    k = math.floor(abs(y) + 0.5)
    return k if y >= 0 else -k


def _corner_crossing(spacing, th0, th1, kt, h):
    """Fraction of the step at which theta passes a breakpoint, slightly overshot.

    Returns None when no breakpoint lies inside the step or the crossing is
    already at its end.
    """
    n0 = _corner_index(th0, spacing)
    if n0 == _corner_index(th1, spacing):
        return None
    c = (n0 + 0.5 if th1 > th0 else n0 - 0.5) * spacing
    g_lo = th0 - c
    if g_lo == 0.0:
        return None
    q = np.asarray(kt) @ _P
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g = th0 + h * mid * (q[0] + mid * (q[1] + mid * (q[2] + mid * q[3]))) - c
        if g == 0.0:
            hi = mid
            break
        if (g > 0) == (g_lo > 0):
            lo, g_lo = mid, g
        else:
            hi = mid
    sig = hi * (1 + 1e-9) + 1e-12
    if sig >= 1.0 - 1e-6:
        return None
    return sig


def integrate_with_events(
    m: PhaseModel,
    s0: ModelState,
    cfg: IntegrationConfig,
    events: Sequence[EventSpec] = (),
    step_callback: Callable[[float, float, float], bool] | None = None,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate from ``s0`` for ``cfg.t_max`` seconds in ``cfg.direction``.

    Event roots are bracketed by sign changes between accepted steps and refined
    by bisection on the interpolant down to ``1e-12 * t_max``. A terminal event
    truncates the trajectory at its root. ``step_callback(t, x, theta)`` runs
    after every accepted step and stops the run (``Termination.EVENT``) when it
    returns true. Steps that would cross a detector corner are shortened to end
    just past it.
    """
    f = m.rhs
    sign = cfg.direction.value
    if sign == 1:
        fs = f
    else:

        def fs(x, th):
            a, b = f(x, th)
            return -a, -b

    rtol, atol, span = cfg.rel_tol, cfg.abs_tol, cfg.t_max
    x, th = float(s0[0]), float(s0[1])
    if not (math.isfinite(x) and math.isfinite(th)):
        raise IntegrationError(f"non-finite initial state {s0!r}")
    k1x, k1t = fs(x, th)
    h = cfg.first_step or _initial_step(fs, x, th, k1x, k1t, rtol, atol, span)
    h = min(h, cfg.max_step)
    t_tol = 1e-12 * span

    s = 0.0
    err_old = 1e-4
    rejected = False
    s_old_l: list[float] = []
    h_l: list[float] = []
    y_l: list[tuple[float, float]] = []
    k_l: list[tuple] = []
    found: list[Event] = []
    g_prev = [ev.fn(t0, x, th) for ev in events]
    term = Termination.TIME_LIMIT
    s_final, y_final = None, None
    n_steps = 0
    corners = m.pd.corner_spacing
    last_cut = False
    h_resume = None

    while s < span:
        if n_steps >= cfg.max_steps:
            term = Termination.STEP_LIMIT
            break
        last = False
        if s + h >= span:
            h = span - s
            last = True
        a2x, a2t = fs(x + h * _A21 * k1x, th + h * _A21 * k1t)
        a3x, a3t = fs(x + h * (_A31 * k1x + _A32 * a2x), th + h * (_A31 * k1t + _A32 * a2t))
        a4x, a4t = fs(
            x + h * (_A41 * k1x + _A42 * a2x + _A43 * a3x),
            th + h * (_A41 * k1t + _A42 * a2t + _A43 * a3t),
        )
        a5x, a5t = fs(
            x + h * (_A51 * k1x + _A52 * a2x + _A53 * a3x + _A54 * a4x),
            th + h * (_A51 * k1t + _A52 * a2t + _A53 * a3t + _A54 * a4t),
        )
        a6x, a6t = fs(
            x + h * (_A61 * k1x + _A62 * a2x + _A63 * a3x + _A64 * a4x + _A65 * a5x),
            th + h * (_A61 * k1t + _A62 * a2t + _A63 * a3t + _A64 * a4t + _A65 * a5t),
        )
        xn = x + h * (_B1 * k1x + _B3 * a3x + _B4 * a4x + _B5 * a5x + _B6 * a6x)
        tn = th + h * (_B1 * k1t + _B3 * a3t + _B4 * a4t + _B5 * a5t + _B6 * a6t)
        a7x, a7t = fs(xn, tn)
        ex = h * (_E1 * k1x + _E3 * a3x + _E4 * a4x + _E5 * a5x + _E6 * a6x + _E7 * a7x)
        et = h * (_E1 * k1t + _E3 * a3t + _E4 * a4t + _E5 * a5t + _E6 * a6t + _E7 * a7t)
        err = max(
            abs(ex) / (atol + rtol * max(abs(x), abs(xn))),
            abs(et) / (atol + rtol * max(abs(th), abs(tn))),
        )
        if not (err <= 1.0):
            if not math.isfinite(err) and h < 1e-14 * max(span, 1.0):
                raise IntegrationError(f"non-finite state near t={t0 + sign * s!r}")
            fac = _FAC_MIN if not math.isfinite(err) else max(_FAC_MIN, _SAFETY * err**-0.2)
            h *= fac
            rejected = True
            if h < 1e-15 * max(span, 1.0):
                raise IntegrationError(f"step size underflow at t={t0 + sign * s!r}")
            continue
        if not (math.isfinite(xn) and math.isfinite(tn)):
            raise IntegrationError(f"non-finite state at t={t0 + sign * (s + h)!r}")
        if corners is not None and not last_cut:
            sig = _corner_crossing(corners, th, tn, (k1t, a2t, a3t, a4t, a5t, a6t, a7t), h)
            if sig is not None:
                # land just past the breakpoint so no step straddles a kink
                h_resume = h
                h *= sig
                last_cut = True
                continue
        last_cut = False

        n_steps += 1
        s_old_l.append(s)
        h_l.append(h)
        y_l.append((x, th))
        k_l.append((k1x, k1t, a2x, a2t, a3x, a3t, a4x, a4t, a5x, a5t, a6x, a6t, a7x, a7t))
        s_new = span if last else s + h

        stop_sig = None
        if events:
            t_new = t0 + sign * s_new
            step_t0, step_h, step_s = t0 + sign * s, h, s
            kk = k_l[-1]
            qx = np.array(kk[0::2]) @ _P
            qt = np.array(kk[1::2]) @ _P
            y0x, y0t = x, th

            def interp(sig, qx=qx, qt=qt, y0x=y0x, y0t=y0t, step_h=step_h):
                px = sig * (qx[0] + sig * (qx[1] + sig * (qx[2] + sig * qx[3])))
                pt = sig * (qt[0] + sig * (qt[1] + sig * (qt[2] + sig * qt[3])))
                return y0x + step_h * px, y0t + step_h * pt

            def t_of(sig, step_s=step_s, step_h=step_h):
                return t0 + sign * (step_s + sig * step_h)

            hits = []
            for i, ev in enumerate(events):
                g_new = ev.fn(t_new, xn, tn)
                g_old = g_prev[i]
                g_prev[i] = g_new
                if g_old == 0.0 or (g_old > 0) == (g_new > 0) and g_new != 0.0:
                    continue
                rising = g_new > g_old
                if ev.direction and (ev.direction > 0) != rising:
                    continue
                sig = 1.0 if g_new == 0.0 else _locate(interp, ev.fn, 0.0, 1.0, g_old, t_of, t_tol)
                hits.append((sig, i))
            for sig, i in sorted(hits):
                if stop_sig is not None and sig > stop_sig:
                    break
                ex_, et_ = interp(sig)
                found.append(Event(t_of(sig), events[i].kind, ModelState(ex_, et_), i))
                if events[i].terminal:
                    stop_sig = sig
            if stop_sig is not None:
                s_final = step_s + stop_sig * step_h
                y_final = interp(stop_sig) if stop_sig < 1.0 else (xn, tn)
                term = Termination.EVENT
                break

        if step_callback is not None and step_callback(t0 + sign * s_new, xn, tn):
            s_final, y_final = s_new, (xn, tn)
            term = Termination.EVENT
            s, x, th = s_new, xn, tn
            break

        s, x, th = s_new, xn, tn
        k1x, k1t = a7x, a7t
        err_c = max(err, 1e-10)
        fac = _SAFETY * err_c**-_ALPHA * err_old**_BETA
        fac = min(_FAC_MAX, max(_FAC_MIN, fac))
        if rejected:
            fac = min(fac, 1.0)
        if h_resume is not None:
            # a step shortened to a breakpoint says nothing about the step size
            h, fac, h_resume = h_resume, min(fac, 1.0), None
        h = min(h * fac, cfg.max_step)
        err_old = max(err, 1e-4)
        rejected = False

    if s_final is None:
        s_final, y_final = s, (x, th)

    n = len(h_l)
    k_arr = np.array(k_l, dtype=float).reshape(n, 7, 2) if n else np.zeros((0, 7, 2))
    stride = cfg.dense_stride or default_stride(m)
    return Trajectory(
        initial=ModelState(float(s0[0]), float(s0[1])),
        t0=t0,
        sign=sign,
        s_old=np.array(s_old_l, dtype=float),
        h=np.array(h_l, dtype=float),
        y_old=np.array(y_l, dtype=float).reshape(n, 2),
        k=k_arr,
        s_final=float(s_final),
        y_final=(float(y_final[0]), float(y_final[1])),
        events=found,
        terminated_by=term,
        stride=stride,
        model=m,
    )


def integrate(m: PhaseModel, s0: ModelState, cfg: IntegrationConfig) -> Trajectory:
    return integrate_with_events(m, s0, cfg)


@dataclass
class BatchResult:
    x: np.ndarray
    theta: np.ndarray
    done: np.ndarray
    t_done: np.ndarray
    t_end: float
    n_steps: int = 0
    steps_limited: bool = field(default=False)


def integrate_batch(
    m: PhaseModel,
    x0,
    theta0,
    t_max: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    monitor: Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None,
    max_steps: int = 10**6,
    observer: Callable[[float, np.ndarray, np.ndarray, np.ndarray], None] | None = None,
) -> BatchResult:
    """Advance many initial states with a shared adaptive step.

    ``monitor(t, x, theta, idx)`` receives the active states after each step and
    returns a boolean mask of those that are finished; finished states are
    frozen and removed from the active set. ``observer`` sees every accepted
    step (before the monitor) and returns nothing. Shared steps are not cut at
    detector corners, so piecewise-linear characteristics lose a few digits
    compared with ``integrate_with_events``.
    """
    x = np.array(x0, dtype=float).ravel().copy()
    th = np.array(theta0, dtype=float).ravel().copy()
    n = x.size
    done = np.zeros(n, dtype=bool)
    t_done = np.full(n, np.nan)
    out_x, out_t = x.copy(), th.copy()
    idx = np.arange(n)
    f = m.rhs_array
    fl, k, om, pd = m.filter, m.k_vco, m.omega_e_free, m.pd

    def rhs(xx, tt):
        v = pd(tt)
        return fl.a * xx + fl.b * v, om - k * (fl.c * xx + fl.h * v)

    k1x, k1t = rhs(x, th)
    h = _initial_step(
        lambda a, b: tuple(float(np.max(np.abs(z))) for z in rhs(np.array([a]), np.array([b]))),
        float(np.max(np.abs(x))),
        float(np.max(np.abs(th))),
        float(np.max(np.abs(k1x))),
        float(np.max(np.abs(k1t))),
        rel_tol,
        abs_tol,
        t_max,
    )
    t, err_old, rejected, steps = 0.0, 1e-4, False, 0
    while t < t_max and idx.size:
        if steps >= max_steps:
            break
        h = min(h, t_max - t)
        a2x, a2t = rhs(x + h * _A21 * k1x, th + h * _A21 * k1t)
        a3x, a3t = rhs(x + h * (_A31 * k1x + _A32 * a2x), th + h * (_A31 * k1t + _A32 * a2t))
        a4x, a4t = rhs(
            x + h * (_A41 * k1x + _A42 * a2x + _A43 * a3x),
            th + h * (_A41 * k1t + _A42 * a2t + _A43 * a3t),
        )
        a5x, a5t = rhs(
            x + h * (_A51 * k1x + _A52 * a2x + _A53 * a3x + _A54 * a4x),
            th + h * (_A51 * k1t + _A52 * a2t + _A53 * a3t + _A54 * a4t),
        )
        a6x, a6t = rhs(
            x + h * (_A61 * k1x + _A62 * a2x + _A63 * a3x + _A64 * a4x + _A65 * a5x),
            th + h * (_A61 * k1t + _A62 * a2t + _A63 * a3t + _A64 * a4t + _A65 * a5t),
        )
        xn = x + h * (_B1 * k1x + _B3 * a3x + _B4 * a4x + _B5 * a5x + _B6 * a6x)
        tn = th + h * (_B1 * k1t + _B3 * a3t + _B4 * a4t + _B5 * a5t + _B6 * a6t)
        a7x, a7t = rhs(xn, tn)
        ex = h * (_E1 * k1x + _E3 * a3x + _E4 * a4x + _E5 * a5x + _E6 * a6x + _E7 * a7x)
        et = h * (_E1 * k1t + _E3 * a3t + _E4 * a4t + _E5 * a5t + _E6 * a6t + _E7 * a7t)
        err = float(
            max(
                np.max(np.abs(ex) / (abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(xn)))),
                np.max(np.abs(et) / (abs_tol + rel_tol * np.maximum(np.abs(th), np.abs(tn)))),
            )
        )
        if not (err <= 1.0):
            h *= _FAC_MIN if not math.isfinite(err) else max(_FAC_MIN, _SAFETY * err**-0.2)
            rejected = True
            if h < 1e-15 * max(t_max, 1.0):
                raise IntegrationError(f"step size underflow at t={t!r}")
            continue
        steps += 1
        t += h
        x, th, k1x, k1t = xn, tn, a7x, a7t
        if observer is not None:
            observer(t, x, th, idx)
        if monitor is not None:
            fin = np.asarray(monitor(t, x, th, idx), dtype=bool)
            if fin.any():
                gi = idx[fin]
                done[gi] = True
                t_done[gi] = t
                out_x[gi], out_t[gi] = x[fin], th[fin]
                keep = ~fin
                idx, x, th, k1x, k1t = idx[keep], x[keep], th[keep], k1x[keep], k1t[keep]
        fac = _SAFETY * max(err, 1e-10) ** -_ALPHA * err_old**_BETA
        fac = min(_FAC_MAX, max(_FAC_MIN, fac))
        if rejected:
            fac = min(fac, 1.0)
        h *= fac
        err_old = max(err, 1e-4)
        rejected = False
    out_x[idx], out_t[idx] = x, th
    return BatchResult(out_x, out_t, done, t_done, t, steps, steps >= max_steps)
