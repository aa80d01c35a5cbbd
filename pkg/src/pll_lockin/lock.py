"""Cycle-slip and lock detection, separatrix tracing and lock-in domains."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateError,
    InterpolationError,
    ParameterError,
    SeedError,
    UndecidedError,
)
from .integrator import (
    Direction,
    EventKind,
    EventSpec,
    IntegrationConfig,
    Termination,
    Trajectory,
    integrate_batch,
    integrate_with_events,
)
from .model import Equilibrium, ModelState, PhaseModel, Stability, jacobian

DEFAULT_EPS = 1e-3


# -- cycle slipping --------------------------------------------------------


@dataclass(frozen=True)
class SlipVerdict:
    slipped: bool
    excursion: float
    slip_time: float | None = None


def _step_extrema(h, th0, q, sig_end, ref):
    """Per-step max and min of theta over sigma in [0, sig_end].

    Interior extrema come from the roots of the quartic's derivative. Only
    steps whose interior could exceed the best endpoint excursion from ``ref``
    are solved; the interior can differ from the start value by at most
    ``h * sum|q|``.
    """

    def value(sig):
        return th0 + h * sig * (q[:, 0] + sig * (q[:, 1] + sig * (q[:, 2] + sig * q[:, 3])))

    end = value(sig_end)
    hi = np.maximum(th0, end)
    lo = np.minimum(th0, end)
    ends = np.maximum(hi - ref, ref - lo)
    reach = np.abs(th0 - ref) + h * np.abs(q).sum(axis=1)
    for i in np.nonzero(reach > ends.max())[0]:
        for r in np.roots([4 * q[i, 3], 3 * q[i, 2], 2 * q[i, 1], q[i, 0]]):
            if abs(r.imag) < 1e-12 and 0.0 < r.real < sig_end[i]:
                v = value_at(th0[i], h[i], q[i], r.real)
                hi[i] = max(hi[i], v)
                lo[i] = min(lo[i], v)
    return hi, lo


def value_at(th0, h, q, sig):
    return th0 + h * sig * (q[0] + sig * (q[1] + sig * (q[2] + sig * q[3])))


def detect_cycle_slip(traj: Trajectory, period: float | None = None) -> SlipVerdict:
    """Evaluate ``sup_t |theta(t) - theta(0)| >= period`` on the dense solution."""
    if period is None:
        period = traj.model.period
    theta0 = traj.initial.theta_e
    # a located slip-crossing root sits on the threshold only up to the root tolerance
    crossings = [
        e.t
        for e in traj.events
        if e.kind is EventKind.SLIP_CROSSING
        and abs(abs(e.state.theta_e - theta0) - period) <= 1e-9 * max(1.0, period)
    ]
    if crossings:
        exc = max(period, float(np.max(np.abs(traj.step_states[:, 1] - theta0))))
        return SlipVerdict(True, exc, crossings[0])
    t_start, h, th0, q = traj.theta_polynomials()
    if not len(h):
        return SlipVerdict(False, 0.0, None)
    s_start = traj.sign * (t_start - traj.t0)
    sig_end = np.minimum(1.0, (traj.duration - s_start) / h)
    hi, lo = _step_extrema(h, th0, q, sig_end, theta0)
    step_exc = np.maximum(hi - theta0, theta0 - lo)
    excursion = float(step_exc.max())
    if excursion < period:
        return SlipVerdict(False, excursion, None)
    i = int(np.argmax(step_exc >= period))

    def g(sig):
        return abs(value_at(th0[i], h[i], q[i], sig) - theta0) - period

    # first point in the step where the excursion reaches the period
    grid = np.linspace(0.0, sig_end[i], 257)
    vals = np.array([g(s) for s in grid])
    j = int(np.argmax(vals >= 0))
    if j == 0:
        sig = 0.0
    else:
        a, b = grid[j - 1], grid[j]
        for _ in range(80):
            mid = 0.5 * (a + b)
            if g(mid) >= 0:
                b = mid
            else:
                a = mid
        sig = b
    return SlipVerdict(True, excursion, float(t_start[i] + traj.sign * sig * h[i]))


def slip_events(theta0: float, period: float, terminal: bool = True) -> list[EventSpec]:
    return [
        EventSpec(lambda t, x, th: th - theta0 - period, EventKind.SLIP_CROSSING, terminal),
        EventSpec(lambda t, x, th: th - theta0 + period, EventKind.SLIP_CROSSING, terminal),
    ]


# -- lock detection --------------------------------------------------------


class LockStatus(enum.Enum):
    LOCKED = "locked"
    NOT_LOCKED = "not-locked"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class LockReport:
    status: LockStatus
    t_lock: float | None = None
    target: Equilibrium | None = None

    def __bool__(self) -> bool:
        return self.status is LockStatus.LOCKED


def default_dwell(m: PhaseModel) -> float:
    return 10.0 / m.slow_rate


def _nearest_lift_distance(m: PhaseModel, eq: Equilibrium, x, theta):
    p = m.period
    n = np.round((theta - eq.theta) / p)
    d = np.abs(theta - eq.theta - n * p) + np.abs(x - eq.x) * (m.k_vco / m.natural_frequency)
    return d, n


class LockMonitor:
    """Step callback that stops once the state has stayed ``eps``-close to a lift of ``eq`` for ``dwell``."""

    def __init__(self, m: PhaseModel, eq: Equilibrium, eps: float, dwell: float, t0: float = 0.0):
        self.m, self.eq, self.eps, self.dwell = m, eq, eps, dwell
        self.entry: float | None = None
        self.t0 = t0

    def __call__(self, t: float, x: float, th: float) -> bool:
        d, _ = _nearest_lift_distance(self.m, self.eq, x, th)
        if d < self.eps:
            if self.entry is None:
                self.entry = t
            return t - self.entry >= self.dwell
        self.entry = None
        return False


def detect_lock(
    traj: Trajectory,
    eq: Equilibrium,
    eps: float = DEFAULT_EPS,
    dwell: float | None = None,
) -> LockReport:
    """Whether ``traj`` enters the ``eps`` ball of some lift of ``eq`` and stays for ``dwell``.

    The distance is the mixed norm ``|dtheta| + |dx| K / omega_n``. The reported
    target is the lift the trajectory settled on.
    """
    m = traj.model
    if eps <= 0:
        raise ParameterError("eps must be positive")
    dwell = default_dwell(m) if dwell is None else dwell
    if dwell <= 0:
        raise ParameterError("dwell must be positive")
    t = traj.step_times
    ys = traj.step_states
    d, n = _nearest_lift_distance(m, eq, ys[:, 0], ys[:, 1])
    inside = d < eps
    # run starts: inside now and (first point or outside before)
    starts = np.nonzero(inside & np.concatenate([[True], ~inside[:-1]]))[0]
    for s in starts:
        e = s
        while e + 1 < len(inside) and inside[e + 1]:
            e += 1
        if abs(t[e] - t[s]) >= dwell * (1 - 1e-12):
            target = Equilibrium(
                ModelState(eq.x, eq.theta + n[s] * m.period), eq.stability, eq.eigenvalues
            )
            return LockReport(LockStatus.LOCKED, float(t[s]), target)
    if traj.terminated_by is Termination.EVENT:
        return LockReport(LockStatus.NOT_LOCKED)
    return LockReport(LockStatus.UNDECIDED)


@dataclass(frozen=True)
class SettleResult:
    trajectory: Trajectory
    slip: SlipVerdict
    lock: LockReport

    @property
    def on_target(self) -> bool:
        return bool(self.lock) and not self.slip.slipped


def default_t_max(m: PhaseModel) -> float:
    """Time budget for one settling run.

    ``200 / omega_n`` covers saddle lingering; ``60 / |Re lambda_slow|`` covers
    slow exponential approach plus the dwell window on lightly damped loops.
    """
    return min(max(200.0 / m.natural_frequency, 60.0 / m.slow_rate, 1.0), 1e7)


def settle(
    m: PhaseModel,
    s0: ModelState,
    eq: Equilibrium | None = None,
    *,
    t_max: float | None = None,
    eps: float = DEFAULT_EPS,
    dwell: float | None = None,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    stop_on_slip: bool = True,
) -> SettleResult:
    """Simulate from ``s0`` until lock (dwell satisfied), a slip, or ``t_max``."""
    if eq is None:
        eq = m.stable_equilibrium
        if eq is None:
            raise ParameterError("model has no stable equilibrium")
    dwell = default_dwell(m) if dwell is None else dwell
    t_max = default_t_max(m) if t_max is None else t_max
    cfg = IntegrationConfig(rel_tol=rel_tol, abs_tol=abs_tol, t_max=t_max)
    events = slip_events(s0[1], m.period) if stop_on_slip else []
    mon = LockMonitor(m, eq, eps, dwell)
    traj = integrate_with_events(m, s0, cfg, events, step_callback=mon)
    return SettleResult(traj, detect_cycle_slip(traj, m.period), detect_lock(traj, eq, eps, dwell))


# -- separatrices ----------------------------------------------------------


class Branch(enum.Enum):
    STABLE_UPPER = "stable-upper"
    STABLE_LOWER = "stable-lower"
    UNSTABLE_LEFT = "unstable-left"
    UNSTABLE_RIGHT = "unstable-right"

    @property
    def stable(self) -> bool:
        return self in (Branch.STABLE_UPPER, Branch.STABLE_LOWER)


@dataclass(frozen=True)
class Separatrix:
    saddle: Equilibrium
    branch: Branch
    trajectory: Trajectory = field(repr=False)
    seed_offset: float = 0.0

    @property
    def curve(self) -> np.ndarray:
        """``(theta, x)`` rows at the step boundaries, starting at the seed."""
        ys = self.trajectory.step_states
        return np.column_stack([ys[:, 1], ys[:, 0]])

    def x_at(self, theta: float) -> float:
        """``x`` where the branch first reaches ``theta`` (walking away from the saddle)."""
        tr = self.trajectory
        th_steps = tr.step_states[:, 1]
        g = th_steps - theta
        hit = np.nonzero((g[:-1] == 0) | (np.sign(g[:-1]) != np.sign(g[1:])))[0]
        if not len(hit):
            raise InterpolationError(
                f"theta={theta!r} not reached by the {self.branch.value} branch"
            )
        i = int(hit[0])
        if g[i] == 0:
            return float(tr.step_states[i, 0])
        t = tr.step_times
        a, b = t[i], t[i + 1]
        ga = g[i]
        for _ in range(100):
            mid = 0.5 * (a + b)
            gm = tr.at(mid).theta_e - theta
            if gm == 0 or abs(b - a) <= 1e-15 * max(1.0, abs(mid)):
                break
            if (gm > 0) == (ga > 0):
                a, ga = mid, gm
            else:
                b = mid
        return float(tr.at(0.5 * (a + b)).x)


def seed_offset(saddle: Equilibrium) -> float:
    return 1e-7 * (1.0 + math.hypot(*saddle.state))


def saddle_directions(m: PhaseModel, saddle: Equilibrium) -> tuple[float, np.ndarray, float, np.ndarray]:
    """``(lambda_s, v_s, lambda_u, v_u)`` with unit eigenvectors.

    ``v_s`` is oriented toward increasing ``x`` and ``v_u`` toward increasing theta.
    """
    if saddle.stability is Stability.SADDLE_NODE:
        raise DegenerateError("saddle-node equilibrium has a zero eigenvalue")
    if saddle.stability is not Stability.SADDLE:
        raise ParameterError(f"expected a saddle, got {saddle.stability.value}")
    try:
        lam, vec = np.linalg.eig(jacobian(m, saddle.state))
    except np.linalg.LinAlgError as exc:
        raise SeedError(str(exc)) from exc
    if np.any(np.abs(lam.imag) > 0) or not np.all(np.isfinite(vec)):
        raise SeedError("saddle eigen-decomposition is not real")
    lam = lam.real
    if np.min(np.abs(lam)) <= 1e-14 * np.max(np.abs(lam)):
        raise DegenerateError("saddle has a zero eigenvalue")
    i_s = int(np.argmin(lam))
    i_u = 1 - i_s
    v_s = vec[:, i_s].real / np.linalg.norm(vec[:, i_s].real)
    v_u = vec[:, i_u].real / np.linalg.norm(vec[:, i_u].real)
    if v_s[0] < 0 or (v_s[0] == 0 and v_s[1] < 0):
        v_s = -v_s
    if v_u[1] < 0 or (v_u[1] == 0 and v_u[0] < 0):
        v_u = -v_u
    return float(lam[i_s]), v_s, float(lam[i_u]), v_u


def default_trace_config(m: PhaseModel, saddle: Equilibrium) -> IntegrationConfig:
    lam_s, _, lam_u, _ = saddle_directions(m, saddle)
    t_max = 40.0 / min(abs(lam_s), abs(lam_u)) + 200.0 / m.natural_frequency
    return IntegrationConfig(rel_tol=1e-10, abs_tol=1e-13, t_max=t_max)


def trace_branch(
    m: PhaseModel,
    saddle: Equilibrium,
    branch: Branch,
    cfg: IntegrationConfig | None = None,
    *,
    offset: float | None = None,
    x_bound: float | None = None,
    window: float | None = None,
) -> Separatrix:
    """Integrate one manifold branch from a seed ``offset`` away from the saddle."""
    lam_s, v_s, lam_u, v_u = saddle_directions(m, saddle)
    if cfg is None:
        cfg = default_trace_config(m, saddle)
    offset = seed_offset(saddle) if offset is None else offset
    if branch.stable:
        vec = v_s if branch is Branch.STABLE_UPPER else -v_s
        direction = Direction.BACKWARD
    else:
        vec = v_u if branch is Branch.UNSTABLE_RIGHT else -v_u
        direction = Direction.FORWARD
    seed = ModelState(saddle.x + offset * vec[0], saddle.theta + offset * vec[1])
    p = m.period
    window = 2.0 * p if window is None else window
    lo_th, hi_th = saddle.theta - window, saddle.theta + window
    x_bound = 1e3 * (1.0 + abs(saddle.x)) if x_bound is None else x_bound
    events = [
        EventSpec(lambda t, x, th: th - lo_th, EventKind.DOMAIN_EXIT, True),
        EventSpec(lambda t, x, th: hi_th - th, EventKind.DOMAIN_EXIT, True),
        EventSpec(lambda t, x, th: x_bound - abs(x), EventKind.DOMAIN_EXIT, True),
    ]
    run_cfg = IntegrationConfig(
        rel_tol=cfg.rel_tol,
        abs_tol=cfg.abs_tol,
        t_max=cfg.t_max,
        max_steps=cfg.max_steps,
        direction=direction,
        dense_stride=cfg.dense_stride,
    )
    traj = integrate_with_events(m, seed, run_cfg, events)
    return Separatrix(saddle, branch, traj, offset)


def trace_separatrices(
    m: PhaseModel, saddle: Equilibrium, cfg: IntegrationConfig | None = None, **kwargs
) -> list[Separatrix]:
    """All four manifold branches of a nondegenerate saddle."""
    return [trace_branch(m, saddle, b, cfg, **kwargs) for b in Branch]


# -- local lock-in domain ---------------------------------------------------


class Method(enum.Enum):
    SEPARATRIX = "separatrix"
    SIMULATION = "simulation"


class LockInDomain:
    """Local lock-in domain of the stable equilibrium in one period cell.

    The cell runs from the saddle left of the stable equilibrium to the saddle
    on its right. Inside the cell the domain lies below the upper stable branch
    of the left saddle and above the lower stable branch of the right saddle.
    Points are mapped into the cell by whole periods; the equilibrium lift of
    their own cell is the target.
    """

    def __init__(self, m: PhaseModel, cfg: IntegrationConfig | None = None):
        eq = m.stable_equilibrium
        if eq is None:
            raise ParameterError("model has no stable equilibrium")
        saddles = [e for e in m.equilibria if e.stability is not Stability.STABLE]
        if not saddles:
            raise ParameterError("model has no saddle bounding the lock-in domain")
        p = m.period
        left = []
        for s in saddles:
            th = s.theta - p * math.floor((s.theta - eq.theta) / p)
            left.append(th - p)  # lift in (theta_s - p, theta_s]
        k = int(np.argmax(left))
        sad = saddles[k]
        self.m, self.eq, self.period = m, eq, p
        self.theta_left = left[k]
        self.theta_right = min(l + p for l in left)
        self.left_saddle = Equilibrium(ModelState(sad.x, self.theta_left), sad.stability, sad.eigenvalues)
        rk = int(np.argmin([l + p for l in left]))
        rs = saddles[rk]
        self.right_saddle = Equilibrium(ModelState(rs.x, self.theta_right), rs.stability, rs.eigenvalues)
        self.cfg = cfg
        self._upper: Separatrix | None = None
        self._lower: Separatrix | None = None

    @property
    def upper(self) -> Separatrix:
        if self._upper is None:
            self._upper = trace_branch(self.m, self.left_saddle, Branch.STABLE_UPPER, self.cfg)
        return self._upper

    @property
    def lower(self) -> Separatrix:
        if self._lower is None:
            self._lower = trace_branch(self.m, self.right_saddle, Branch.STABLE_LOWER, self.cfg)
        return self._lower

    def cell_shift(self, theta: float) -> int:
        return math.floor((theta - self.theta_left) / self.period)

    def target(self, theta: float) -> Equilibrium:
        n = self.cell_shift(theta)
        return Equilibrium(
            ModelState(self.eq.x, self.eq.theta + n * self.period), self.eq.stability, self.eq.eigenvalues
        )

    def bounds(self, theta: float) -> tuple[float, float]:
        """``(lower, upper)`` x-limits at ``theta`` (mapped into the cell)."""
        q = theta - self.cell_shift(theta) * self.period
        tiny = 1e-12 * max(1.0, abs(self.theta_left))
        upper = self.left_saddle.x if q - self.theta_left <= tiny else self.upper.x_at(q)
        lower = self.right_saddle.x if self.theta_right - q <= tiny else self.lower.x_at(q)
        return lower, upper

    def contains(self, p: ModelState) -> bool:
        lower, upper = self.bounds(p[1])
        return lower < p[0] < upper

    def simulate(self, p: ModelState, t_max: float | None = None) -> bool:
        res = settle(self.m, p, self.target(p[1]), t_max=t_max)
        if res.slip.slipped:
            return False
        if res.lock.status is LockStatus.UNDECIDED:
            raise UndecidedError(f"no verdict for {p!r} within the time budget")
        return bool(res.lock) and abs(res.lock.target.theta - self.target(p[1]).theta) < 0.5 * self.period


def in_lock_in_domain(
    m: PhaseModel,
    p: ModelState,
    method: Method = Method.SEPARATRIX,
    *,
    domain: LockInDomain | None = None,
    t_max: float | None = None,
) -> bool:
    """Membership of ``p`` in the local lock-in domain of its cell's stable equilibrium."""
    domain = LockInDomain(m) if domain is None else domain
    if Method(method) is Method.SEPARATRIX:
        return domain.contains(p)
    return domain.simulate(p, t_max)


def classify_grid(
    m: PhaseModel,
    thetas,
    xs,
    method: Method = Method.SEPARATRIX,
    *,
    t_max: float | None = None,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Verdicts ``'in'``, ``'out'`` or ``'undecided'`` on the grid ``thetas x xs``.

    Result has shape ``(len(xs), len(thetas))``.
    """
    thetas = np.asarray(thetas, dtype=float)
    xs = np.asarray(xs, dtype=float)
    TH, X = np.meshgrid(thetas, xs)
    domain = LockInDomain(m)
    if Method(method) is Method.SEPARATRIX:
        out = np.empty(TH.shape, dtype=object)
        cache: dict[float, tuple[float, float]] = {}
        for idx in np.ndindex(TH.shape):
            th = TH[idx]
            if th not in cache:
                cache[th] = domain.bounds(th)
            lo, hi = cache[th]
            out[idx] = "in" if lo < X[idx] < hi else "out"
        return out

    th0 = TH.ravel()
    x0 = X.ravel()
    shifts = np.floor((th0 - domain.theta_left) / m.period)
    tgt_th = domain.eq.theta + shifts * m.period
    t_max = default_t_max(m) if t_max is None else t_max
    dwell = default_dwell(m)
    scale = m.k_vco / m.natural_frequency
    p = m.period
    entry = np.full(th0.size, np.nan)
    slipped = np.zeros(th0.size, dtype=bool)
    locked = np.zeros(th0.size, dtype=bool)

    def monitor(t, x, th, idx):
        slip = np.abs(th - th0[idx]) >= p
        n = np.round((th - tgt_th[idx]) / p)
        d = np.abs(th - tgt_th[idx] - n * p) + np.abs(x - domain.eq.x) * scale
        inside = d < eps
        e = entry[idx]
        e = np.where(inside, np.where(np.isnan(e), t, e), np.nan)
        entry[idx] = e
        lock = inside & (t - e >= dwell)
        slipped[idx[slip]] = True
        on_target = lock & (n == 0)
        locked[idx[on_target]] = True
        # locking onto another lift means a full period was travelled
        slipped[idx[lock & (n != 0)]] = True
        return slip | lock

    integrate_batch(m, x0, th0, t_max, monitor=monitor)
    out = np.where(slipped, "out", np.where(locked, "in", "undecided")).astype(object)
    return out.reshape(TH.shape)
