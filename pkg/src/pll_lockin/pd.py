"""Phase-detector characteristics.

A characteristic maps the phase error to the averaged detector output. The two
built-in waveforms are the sinusoid ``0.5 * sin(theta)`` produced by a
multiplier with sinusoidal inputs, and the odd triangular wave (slope ``2/pi``
through the origin, peak 1 at ``pi/2``) produced by square-wave inputs. Both
are rescaled when a period other than ``2*pi`` is requested, so that Costas-type
detectors with period ``pi`` are covered by the same code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import ParameterError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# Tolerance (in normalized radians) for deciding that a point sits on a corner
# of the triangular wave.
_CORNER_TOL = 1e-12


class PdKind(enum.Enum):
    SINUSOIDAL = "sin"
    TRIANGULAR = "tri"
    CUSTOM = "custom"


class PdSlope(NamedTuple):
    """Derivative value and whether it was taken at a breakpoint (left limit)."""

    value: float
    corner: bool


def _tri_unit(u):
    """Odd triangular wave of period 2*pi, amplitude 1 (odd by construction)."""
    if np.ndim(u) == 0:
        w = abs(u) % TWO_PI
        if w <= HALF_PI:
            v = w / HALF_PI
        elif w <= 3 * HALF_PI:
            v = 2.0 - w / HALF_PI
        else:
            v = w / HALF_PI - 4.0
        return -v if u < 0 else v
    u = np.asarray(u, dtype=float)
    w = np.mod(np.abs(u), TWO_PI)
    v = np.where(w <= HALF_PI, w / HALF_PI, np.where(w <= 3 * HALF_PI, 2.0 - w / HALF_PI, w / HALF_PI - 4.0))
    return np.where(u < 0, -v, v)


def _tri_unit_integral(u):
    """Antiderivative of ``_tri_unit`` vanishing at 0 (periodic, even)."""
    w = np.mod(np.asarray(u, dtype=float) + HALF_PI, TWO_PI) - HALF_PI
    rising = w * w / math.pi
    falling = math.pi / 4 + 2.0 * (w - HALF_PI) - (w * w - math.pi**2 / 4) / math.pi
    out = np.where(w <= HALF_PI, rising, falling)
    return float(out) if np.ndim(u) == 0 else out


@dataclass(frozen=True)
class PdCharacteristic:
    """Periodic phase-detector characteristic ``v_e(theta)``.

    Parameters
    ----------
    kind : PdKind
        Waveform family.
    period : float
        Period in radians (default ``2*pi``).
    amplitude_scale : float
        Multiplies the built-in waveform.
    rule : callable, optional
        For ``PdKind.CUSTOM``: ``rule(theta) -> value``. It must accept floats;
        numpy arrays are passed when available and fall back to element-wise
        evaluation otherwise.
    derivative_rule : callable, optional
        Exact derivative for custom rules. Central differences are used when
        omitted.
    """

    kind: PdKind = PdKind.SINUSOIDAL
    period: float = TWO_PI
    amplitude_scale: float = 1.0
    rule: Callable | None = field(default=None, compare=False)
    derivative_rule: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ParameterError(f"pd_period must be positive, got {self.period!r}")
        if not (self.amplitude_scale > 0 and math.isfinite(self.amplitude_scale)):
            raise ParameterError(
                f"amplitude_scale must be positive, got {self.amplitude_scale!r}"
            )
        if self.kind is PdKind.CUSTOM and self.rule is None:
            raise ParameterError("a custom characteristic needs an evaluation rule")

    @classmethod
    def sinusoidal(cls, period: float = TWO_PI) -> PdCharacteristic:
        return cls(PdKind.SINUSOIDAL, period)

    @classmethod
    def triangular(cls, period: float = TWO_PI) -> PdCharacteristic:
        return cls(PdKind.TRIANGULAR, period)

    @classmethod
    def custom(cls, rule, derivative=None, period: float = TWO_PI) -> PdCharacteristic:
        return cls(PdKind.CUSTOM, period, 1.0, rule, derivative)

    @classmethod
    def from_name(cls, name: str, period: float = TWO_PI) -> PdCharacteristic:
        try:
            kind = PdKind(name)
        except ValueError:
            raise ParameterError(f"pd must be 'sin' or 'tri', got {name!r}") from None
        if kind is PdKind.CUSTOM:
            raise ParameterError("pd must be 'sin' or 'tri'; custom rules are code-only")
        return cls(kind, period)

    @property
    def name(self) -> str:
        return self.kind.value

    @cached_property
    def _freq(self) -> float:
        # maps theta to the normalized 2*pi-periodic argument
        return TWO_PI / self.period

    def __call__(self, theta):
        """Evaluate ``v_e(theta)``; accepts scalars and arrays."""
        if self.kind is PdKind.SINUSOIDAL:
            amp = 0.5 * self.amplitude_scale
            if np.ndim(theta) == 0:
                return amp * math.sin(self._freq * theta)
            return amp * np.sin(self._freq * np.asarray(theta, dtype=float))
        if self.kind is PdKind.TRIANGULAR:
            return self.amplitude_scale * _tri_unit(self._freq * theta)
        return self._custom(theta)

    def _custom(self, theta):
        if np.ndim(theta) == 0:
            return self.amplitude_scale * float(self.rule(float(theta)))
        arr = np.asarray(theta, dtype=float)
        try:
            out = np.asarray(self.rule(arr), dtype=float)
            if out.shape != arr.shape:
                raise ValueError
        except (TypeError, ValueError):
            out = np.array([float(self.rule(float(t))) for t in arr.ravel()]).reshape(arr.shape)
        return self.amplitude_scale * out

    def slope(self, theta: float) -> PdSlope:
        """Derivative at a scalar ``theta``; left limit and ``corner=True`` at breakpoints."""
        theta = float(theta)
        if self.kind is PdKind.SINUSOIDAL:
            amp = 0.5 * self.amplitude_scale * self._freq
            return PdSlope(amp * math.cos(self._freq * theta), False)
        if self.kind is PdKind.TRIANGULAR:
            w = (self._freq * theta + HALF_PI) % TWO_PI - HALF_PI
            k = self.amplitude_scale * self._freq / HALF_PI
            if abs(w - HALF_PI) < _CORNER_TOL:
                return PdSlope(k, True)
            if abs(w + HALF_PI) < _CORNER_TOL or abs(w - 1.5 * math.pi) < _CORNER_TOL:
                return PdSlope(-k, True)
            return PdSlope(k if w < HALF_PI else -k, False)
        if self.derivative_rule is not None:
            return PdSlope(self.amplitude_scale * float(self.derivative_rule(theta)), False)
        step = 1e-6 * max(1.0, abs(theta))
        return PdSlope((self(theta + step) - self(theta - step)) / (2 * step), False)

    def derivative(self, theta):
        """Derivative values (array friendly; corners resolve to the left limit)."""
        if np.ndim(theta) == 0:
            return self.slope(theta).value
        return np.array([self.slope(t).value for t in np.ravel(theta)]).reshape(np.shape(theta))

    def integral(self, theta):
        """``integral_0^theta v_e(s) ds``."""
        if self.kind is PdKind.SINUSOIDAL:
            amp = 0.5 * self.amplitude_scale / self._freq
            return amp * (1.0 - np.cos(self._freq * np.asarray(theta, dtype=float)))
        if self.kind is PdKind.TRIANGULAR:
            return self.amplitude_scale / self._freq * _tri_unit_integral(self._freq * np.asarray(theta, dtype=float))
        vals = [integrate.quad(self, 0.0, float(t), limit=200)[0] for t in np.ravel(theta)]
        return vals[0] if np.ndim(theta) == 0 else np.reshape(vals, np.shape(theta))

    @cached_property
    def maximum(self) -> float:
        if self.kind is PdKind.SINUSOIDAL:
            return 0.5 * self.amplitude_scale
        if self.kind is PdKind.TRIANGULAR:
            return self.amplitude_scale
        grid = np.linspace(0.0, self.period, 4097)
        vals = self(grid)
        i = int(np.argmax(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(
            lambda t: -self(t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}
        )
        return float(max(vals[i], -res.fun))

    @property
    def corner_spacing(self) -> float | None:
        """Breakpoints sit at ``(k + 1/2) * corner_spacing``; None when smooth."""
        if self.kind is PdKind.TRIANGULAR:
            return 0.5 * self.period
        return None

    @cached_property
    def is_odd(self) -> bool:
        if self.kind is not PdKind.CUSTOM:
            return True
        grid = np.linspace(-self.period, self.period, 513)
        scale = max(1.0, float(np.max(np.abs(self(grid)))))
        return bool(np.max(np.abs(self(grid) + self(-grid))) <= 1e-12 * scale)


def eval_pd(pd: PdCharacteristic, theta):
    return pd(theta)


def pd_derivative(pd: PdCharacteristic, theta: float) -> PdSlope:
    return pd.slope(theta)


def pd_max(pd: PdCharacteristic) -> float:
    return pd.maximum
