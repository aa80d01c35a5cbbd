"""Planar phase-space model of the second-order loop.

State is the filter state ``x`` and the unwrapped phase error ``theta``::

    x'     = a x + b v(theta)
    theta' = omega - K (c x + h v(theta))

where ``(a, b, c, h)`` is the loop-filter realization, ``v`` the phase-detector
characteristic, ``K`` the VCO gain and ``omega`` the free-running frequency
deviation (reference minus VCO free-running frequency).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

from .errors import CornerError, ParameterError, SymmetryError
from .loop_filter import FilterKind, FilterRealization
from .pd import PdCharacteristic, PdKind


class ModelState(NamedTuple):
    x: float
    theta_e: float


class Stability(enum.Enum):
    STABLE = "stable"
    SADDLE = "saddle"
    SADDLE_NODE = "saddle-node"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class Equilibrium:
    state: ModelState
    stability: Stability
    eigenvalues: tuple[complex, complex]

    @property
    def degenerate(self) -> bool:
        return self.stability is Stability.SADDLE_NODE

    @property
    def theta(self) -> float:
        return self.state.theta_e

    @property
    def x(self) -> float:
        return self.state.x


@dataclass(frozen=True)
class PhaseModel:
    filter: FilterRealization
    pd: PdCharacteristic
    k_vco: float
    omega_e_free: float = 0.0

    def __post_init__(self):
        if not (self.k_vco > 0 and math.isfinite(self.k_vco)):
            raise ParameterError(f"k_vco must be positive, got {self.k_vco!r}")
        if not math.isfinite(self.omega_e_free):
            raise ParameterError(f"omega_e_free must be finite, got {self.omega_e_free!r}")

    @property
    def period(self) -> float:
        return self.pd.period

    def with_omega(self, omega: float) -> PhaseModel:
        return replace(self, omega_e_free=float(omega))

    @cached_property
    def rhs(self) -> Callable[[float, float], tuple[float, float]]:
        """Scalar vector field ``(x, theta) -> (x', theta')`` specialised for speed."""
        a, b, c, h = self.filter.a, self.filter.b, self.filter.c, self.filter.h
        k, om = self.k_vco, self.omega_e_free
        kc, kh = k * c, k * h
        pd = self.pd
        if pd.kind is PdKind.SINUSOIDAL:
            amp, w, sin = 0.5 * pd.amplitude_scale, pd._freq, math.sin

            def f(x, th):
                v = amp * sin(w * th)
                return a * x + b * v, om - kc * x - kh * v

        else:

            def f(x, th):
                v = pd(th)
                return a * x + b * v, om - kc * x - kh * v

        return f

    def rhs_array(self, x, theta):
        """Vectorised vector field on arrays."""
        v = self.pd(theta)
        fl = self.filter
        return fl.a * x + fl.b * v, self.omega_e_free - self.k_vco * (fl.c * x + fl.h * v)

    @cached_property
    def equilibria(self) -> tuple[Equilibrium, ...]:
        return tuple(equilibria(self))

    @cached_property
    def stable_equilibrium(self) -> Equilibrium | None:
        for eq in self.equilibria:
            if eq.stability is Stability.STABLE:
                return eq
        return None

    @cached_property
    def natural_frequency(self) -> float:
        """``sqrt(det J)`` at the stable equilibrium, or a gain-based fallback."""
        eq = self.stable_equilibrium
        if eq is not None:
            lam = eq.eigenvalues
            det = (lam[0] * lam[1]).real
            if det > 0:
                return math.sqrt(det)
        return math.sqrt(self.k_vco * self.pd.maximum * abs(self.filter.b) * max(self.filter.c, 1e-300))

    @cached_property
    def slow_rate(self) -> float:
        """``|Re lambda|`` of the slowest mode at the stable equilibrium."""
        eq = self.stable_equilibrium
        if eq is None:
            return self.natural_frequency
        return min(abs(l.real) for l in eq.eigenvalues)

    def distance(self, x, theta, eq: Equilibrium):
        """Mixed norm ``|dtheta| + |dx| K / omega_n`` to ``eq`` (no wrapping)."""
        return np.abs(theta - eq.theta) + np.abs(x - eq.x) * (self.k_vco / self.natural_frequency)


def wrap_angle(theta: float, period: float) -> float:
    """Representative of ``theta`` in ``[-period/2, period/2)``."""
    half = 0.5 * period
    w = (theta + half) % period - half
    return -half if w >= half else w


def vector_field(m: PhaseModel, s: ModelState) -> tuple[float, float]:
    return m.rhs(s[0], s[1])


def jacobian(m: PhaseModel, s: ModelState) -> np.ndarray:
    slope = m.pd.slope(s[1])
    if slope.corner:
        raise CornerError(f"characteristic is not differentiable at theta={s[1]!r}")
    f, k = m.filter, m.k_vco
    dv = slope.value
    return np.array([[f.a, f.b * dv], [-k * f.c, -k * f.h * dv]])


def _classify(m: PhaseModel, state: ModelState) -> Equilibrium:
    try:
        jac = jacobian(m, state)
    except CornerError:
        return Equilibrium(state, Stability.SADDLE_NODE, (0j, 0j))
    lam = np.linalg.eigvals(jac).astype(complex)
    lam = tuple(sorted(lam, key=lambda z: (z.real, z.imag)))
    det = float(np.linalg.det(jac))
    scale = max(float(np.max(np.abs(jac))) ** 2, 1e-300)
    if abs(det) <= 1e-13 * scale:
        stab = Stability.SADDLE_NODE
    elif det < 0:
        stab = Stability.SADDLE
    elif max(z.real for z in lam) < 0:
        stab = Stability.STABLE
    else:
        stab = Stability.UNSTABLE
    return Equilibrium(state, stab, lam)


def _level_roots(pd: PdCharacteristic, level: float) -> list[float]:
    """Solutions of ``pd(theta) == level`` with theta in ``[-period/2, period/2)``."""
    period = pd.period
    if pd.kind is PdKind.CUSTOM:
        grid = np.linspace(-0.5 * period, 0.5 * period, 1025)
        g = pd(grid) - level
        roots = [float(t) for t, v in zip(grid[:-1], g[:-1]) if v == 0.0]
        for i in np.nonzero(g[:-1] * g[1:] < 0)[0]:
            roots.append(
                optimize.brentq(lambda t: pd(t) - level, grid[i], grid[i + 1], xtol=1e-12, rtol=4 * np.finfo(float).eps)
            )
        return sorted({wrap_angle(r, period) for r in roots})

    amp = pd.amplitude_scale * (0.5 if pd.kind is PdKind.SINUSOIDAL else 1.0)
    s = level / amp
    if abs(s) > 1.0:
        return []
    if pd.kind is PdKind.SINUSOIDAL:
        u1 = math.asin(s)
    else:
        u1 = 0.5 * math.pi * s
    us = [u1] if abs(s) == 1.0 else [u1, math.pi - u1]
    scale = period / (2 * math.pi)
    return sorted(wrap_angle(u * scale, period) for u in us)


def equilibria(m: PhaseModel) -> list[Equilibrium]:
    """All equilibria within one period, classified by their Jacobian."""
    f, k, om = m.filter, m.k_vco, m.omega_e_free
    if f.kind is FilterKind.ACTIVE_PI or f.a == 0:
        level = 0.0
        thetas = _level_roots(m.pd, level)
        xs = [om / (k * f.c) for _ in thetas]
    else:
        level = om / (k * f.dc_gain)
        thetas = _level_roots(m.pd, level)
        xs = [-f.b * m.pd(t) / f.a for t in thetas]
    out = [_classify(m, ModelState(x, t)) for x, t in zip(xs, thetas)]
    return sorted(out, key=lambda e: e.state.theta_e)


def equilibrium_lift(eq: Equilibrium, period: float, near: float) -> Equilibrium:
    """Copy of ``eq`` shifted by a whole number of periods to lie nearest ``near``."""
    n = round((near - eq.theta) / period)
    if n == 0:
        return eq
    return replace(eq, state=ModelState(eq.x, eq.theta + n * period))


def apply_odd_symmetry(m: PhaseModel) -> tuple[PhaseModel, Callable[[ModelState], ModelState]]:
    """Model with ``omega`` negated and the state involution ``(x, theta) -> (-x, -theta)``."""
    if not m.pd.is_odd:
        raise SymmetryError("odd-symmetry transformation needs an odd characteristic")

    def mirror(s: ModelState) -> ModelState:
        return ModelState(-s[0], -s[1])

    return m.with_omega(-m.omega_e_free), mirror


def normalize_gains(
    k_p: float, k_pd: float, m: PhaseModel
) -> tuple[PhaseModel, Callable[[float], float]]:
    """Absorb detector gains ``k_pd * v(k_p * theta)`` into ``omega`` and ``K``.

    ``m`` carries the unit-gain characteristic ``v``. In the variables
    ``(x / k_pd, k_p * theta)`` the loop is the returned unit-gain model; the
    second value maps a frequency of that model back to the original one.
    """
    for name, g in (("k_p", k_p), ("k_pd", k_pd)):
        if not (g > 0 and math.isfinite(g)):
            raise ParameterError(f"{name} must be positive, got {g!r}")
    normalized = replace(m, k_vco=k_p * k_pd * m.k_vco, omega_e_free=k_p * m.omega_e_free)
    return normalized, lambda omega: omega / k_p
