"""First-order loop filters in state-space form.

Both filters are realized as ``x' = a x + b u``, ``y = c x + h u`` with scalar
coefficients, and the transfer function is ``H(s) = -c (a - s)^-1 b + h``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ParameterError, PoleError


class FilterKind(enum.Enum):
    LEAD_LAG = "leadlag"
    ACTIVE_PI = "pi"


@dataclass(frozen=True)
class FilterRealization:
    a: float
    b: float
    c: float
    h: float
    tau1: float
    tau2: float
    kind: FilterKind

    def closed_form(self, s: complex) -> complex:
        """Transfer function evaluated from its rational form."""
        if self.kind is FilterKind.LEAD_LAG:
            den = 1 + s * self.tau1
        else:
            den = s * self.tau1
        if den == 0:
            raise PoleError(f"s={s!r} is a pole of the {self.kind.value} filter")
        return (1 + s * self.tau2) / den

    @property
    def dc_gain(self) -> float:
        """``H(0)``; infinite for the integrating filter."""
        return math.inf if self.a == 0 else self.h - self.c * (self.b / self.a)


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v!r}")


def make_lead_lag(tau1: float, tau2: float) -> FilterRealization:
    """Passive lead-lag filter ``(1 + s tau2) / (1 + s tau1)``, ``tau1 > tau2 >= 0``."""
    _check_finite(tau1=tau1, tau2=tau2)
    if tau1 <= 0:
        raise ParameterError(f"tau1 must be positive, got {tau1!r}")
    if tau2 < 0 or tau2 >= tau1:
        raise ParameterError(f"tau2 must satisfy 0 <= tau2 < tau1, got tau2={tau2!r}, tau1={tau1!r}")
    h = tau2 / tau1
    return FilterRealization(
        a=-1.0 / tau1,
        b=1.0 / tau1,
        c=1.0 - h,
        h=h,
        tau1=float(tau1),
        tau2=float(tau2),
        kind=FilterKind.LEAD_LAG,
    )


def make_active_pi(tau1: float, tau2: float) -> FilterRealization:
    """Active proportional-integral filter ``(1 + s tau2) / (s tau1)``."""
    _check_finite(tau1=tau1, tau2=tau2)
    if tau1 <= 0:
        raise ParameterError(f"tau1 must be positive, got {tau1!r}")
    if tau2 <= 0:
        raise ParameterError(f"tau2 must be positive, got {tau2!r}")
    return FilterRealization(
        a=0.0,
        b=1.0 / tau1,
        c=1.0,
        h=tau2 / tau1,
        tau1=float(tau1),
        tau2=float(tau2),
        kind=FilterKind.ACTIVE_PI,
    )


def make_filter(kind: str | FilterKind, tau1: float, tau2: float) -> FilterRealization:
    kind = FilterKind(kind)
    if kind is FilterKind.LEAD_LAG:
        return make_lead_lag(tau1, tau2)
    return make_active_pi(tau1, tau2)


def transfer_function_at(f: FilterRealization, s: complex) -> complex:
    """``H(s)`` computed from the realization."""
    if s == f.a:
        raise PoleError(f"s={s!r} is the pole of the realization")
    return -f.c * (f.b / (f.a - s)) + f.h


def filter_output(f: FilterRealization, state: float, value: float) -> float:
    return f.c * state + f.h * value
