"""Deterministic SVG output for phase portraits and lock-in diagrams.

Everything is written by hand with fixed number formatting, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .lock import Separatrix
from .model import Equilibrium, PhaseModel, Stability

WIDTH, HEIGHT = 640, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 20, 50

BRANCH_STYLE = {
    "stable-upper": 'stroke="#1f5fbf" stroke-width="1.6"',
    "stable-lower": 'stroke="#1f5fbf" stroke-width="1.6" stroke-dasharray="6 3"',
    "unstable-left": 'stroke="#c0392b" stroke-width="1.2"',
    "unstable-right": 'stroke="#c0392b" stroke-width="1.2" stroke-dasharray="6 3"',
}
PALETTE = ("#1f5fbf", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#16a085", "#7f8c8d", "#2c3e50")


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    def __init__(self, xlim, ylim, xlog=False):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.xlog = xlog
        self.w = WIDTH - LEFT - RIGHT
        self.h = HEIGHT - TOP - BOTTOM

    def px(self, v):
        v = np.asarray(v, dtype=float)
        if self.xlog:
            return LEFT + self.w * (np.log10(v) - math.log10(self.x0)) / (math.log10(self.x1) - math.log10(self.x0))
        return LEFT + self.w * (v - self.x0) / (self.x1 - self.x0)

    def py(self, v):
        v = np.asarray(v, dtype=float)
        return TOP + self.h * (self.y1 - v) / (self.y1 - self.y0)


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        '<defs><clipPath id="plot">'
        f'<rect x="{LEFT}" y="{TOP}" width="{WIDTH - LEFT - RIGHT}" height="{HEIGHT - TOP - BOTTOM}"/>'
        "</clipPath></defs>",
    ]


def _axes(fr: _Frame, xticks, yticks, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<rect x="{LEFT}" y="{TOP}" width="{fr.w}" height="{fr.h}" fill="none" stroke="black"/>',
    ]
    yb = TOP + fr.h
    for v, label in xticks:
        p = _f(float(fr.px(v)))
        out.append(f'<line x1="{p}" y1="{yb}" x2="{p}" y2="{yb + 5}" stroke="black"/>')
        out.append(f'<text x="{p}" y="{yb + 18}" text-anchor="middle">{escape(label)}</text>')
    for v, label in yticks:
        p = _f(float(fr.py(v)))
        out.append(f'<line x1="{LEFT - 5}" y1="{p}" x2="{LEFT}" y2="{p}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{p}" text-anchor="end" dominant-baseline="middle">{escape(label)}</text>')
    out.append(f'<text x="{LEFT + fr.w / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{TOP + fr.h / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {TOP + fr.h / 2:.2f})">{escape(ylabel)}</text>'
    )
    return out


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[tuple[float, str]]:
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10)), key=lambda s: abs(s - raw))
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * step:
        ticks.append((v, f"{v:.6g}" if abs(v) > 1e-12 * step else "0"))
        v += step
    return ticks


def _polyline_segments(theta, x, period: float) -> list[np.ndarray]:
    """Wrap ``theta`` into one period and split where the wrap jumps."""
    w = (np.asarray(theta) + 0.5 * period) % period - 0.5 * period
    x = np.asarray(x)
    jumps = np.nonzero(np.abs(np.diff(w)) > 0.5 * period)[0] + 1
    return [np.column_stack([a, b]) for a, b in zip(np.split(w, jumps), np.split(x, jumps)) if len(a) > 1]


def _path(fr: _Frame, seg: np.ndarray) -> str:
    xs, ys = fr.px(seg[:, 0]), fr.py(seg[:, 1])
    return " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(xs, ys))


def default_x_range(model: PhaseModel, equilibria: Sequence[Equilibrium], trajectories=()) -> tuple[float, float]:
    xs = [e.x for e in equilibria]
    for tr in trajectories:
        xs.extend(np.asarray(tr[1], dtype=float).tolist())
    centre = float(np.mean([e.x for e in equilibria])) if equilibria else 0.0
    half = 3.0 * model.natural_frequency / model.k_vco
    if xs:
        half = max(half, 1.1 * max(abs(v - centre) for v in xs))
    return centre - half, centre + half


def render_portrait_svg(
    model: PhaseModel,
    trajectories: Iterable[tuple[Sequence[float], Sequence[float]]],
    separatrices: Iterable[Separatrix],
    equilibria: Sequence[Equilibrium],
    path: str | Path,
    *,
    x_range: tuple[float, float] | None = None,
    shading: tuple[Sequence[float], Sequence[float], np.ndarray] | None = None,
    title: str = "phase portrait",
) -> None:
    """Phase portrait over one period of ``theta``.

    ``trajectories`` are ``(theta, x)`` sample sequences. ``shading`` is an
    optional ``(thetas, xs, verdicts)`` grid as produced by ``classify_grid``;
    cells marked ``'in'`` are filled.
    """
    trajectories = list(trajectories)
    separatrices = list(separatrices)
    p = model.period
    x_range = default_x_range(model, equilibria, [(t, x) for t, x in trajectories]) if x_range is None else x_range
    fr = _Frame((-0.5 * p, 0.5 * p), x_range)
    out = _header(title)
    out.append('<g clip-path="url(#plot)">')
    if shading is not None:
        ths, xs, verdicts = shading
        ths, xs = np.asarray(ths, float), np.asarray(xs, float)
        dth = (ths[1] - ths[0]) if len(ths) > 1 else p
        dx = (xs[1] - xs[0]) if len(xs) > 1 else x_range[1] - x_range[0]
        cw = abs(float(fr.px(dth) - fr.px(0.0)))
        ch = abs(float(fr.py(0.0) - fr.py(dx)))
        for j, xv in enumerate(xs):
            for i, tv in enumerate(ths):
                if verdicts[j][i] != "in":
                    continue
                w = (tv + 0.5 * p) % p - 0.5 * p
                out.append(
                    f'<rect x="{_f(float(fr.px(w)) - cw / 2)}" y="{_f(float(fr.py(xv)) - ch / 2)}" '
                    f'width="{_f(cw)}" height="{_f(ch)}" fill="#cfe3f7" stroke="none"/>'
                )
    for theta, x in trajectories:
        for seg in _polyline_segments(theta, x, p):
            out.append(f'<polyline points="{_path(fr, seg)}" fill="none" stroke="#555555" stroke-width="0.8"/>')
    for s in separatrices:
        c = s.curve
        style = BRANCH_STYLE[s.branch.value]
        for seg in _polyline_segments(c[:, 0], c[:, 1], p):
            out.append(f'<polyline class="separatrix" points="{_path(fr, seg)}" fill="none" {style}/>')
    for e in equilibria:
        w = (e.theta + 0.5 * p) % p - 0.5 * p
        fill = "black" if e.stability is Stability.STABLE else "white"
        out.append(
            f'<circle class="equilibrium" cx="{_f(float(fr.px(w)))}" cy="{_f(float(fr.py(e.x)))}" r="4" '
            f'fill="{fill}" stroke="black"/>'
        )
    out.append("</g>")
    k = 2 * math.pi / p
    labels = ("-π", "-π/2", "0", "π/2", "π")
    xticks = [(q * math.pi / k, lab) for q, lab in zip((-1, -0.5, 0, 0.5, 1), labels)]
    out += _axes(fr, xticks, _nice_ticks(*x_range), "θe", "x")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def render_sweep_svg(rows, path: str | Path, *, axis_label: str = "axis", title: str = "lock-in diagram") -> None:
    """Normalized lock-in frequency against the sweep axis, one curve per family value."""
    rows = list(rows)
    axis = np.array(sorted({r.axis for r in rows}))
    xlog = len(axis) > 1 and axis[-1] / axis[0] >= 50
    ys = [r.omega_normalized for r in rows if math.isfinite(r.omega_normalized)]
    ytop = 1.1 * max(ys) if ys and max(ys) > 0 else 1.0
    if len(axis) > 1:
        xlim = (axis[0], axis[-1])
    else:
        xlim = (axis[0] * 0.5, axis[0] * 1.5) if axis[0] else (-1.0, 1.0)
    fr = _Frame(xlim, (0.0, ytop), xlog)
    out = _header(title)
    out.append('<g clip-path="url(#plot)">')
    families = sorted({r.family for r in rows})
    for n, fam in enumerate(families):
        pts = sorted((r.axis, r.omega_normalized) for r in rows if r.family == fam and math.isfinite(r.omega_normalized))
        if not pts:
            continue
        seg = np.array(pts)
        colour = PALETTE[n % len(PALETTE)]
        if len(seg) > 1:
            out.append(f'<polyline points="{_path(fr, seg)}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        for a, b in zip(fr.px(seg[:, 0]), fr.py(seg[:, 1])):
            out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="2.5" fill="{colour}"/>')
    out.append("</g>")
    for n, fam in enumerate(families):
        y = TOP + 14 + 16 * n
        colour = PALETTE[n % len(PALETTE)]
        out.append(f'<line x1="{WIDTH - RIGHT - 90}" y1="{y}" x2="{WIDTH - RIGHT - 70}" y2="{y}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT - 64}" y="{y + 4}">{fam:.4g}</text>')
    if xlog:
        lo, hi = math.floor(math.log10(xlim[0])), math.ceil(math.log10(xlim[1]))
        xticks = [(10.0**e, f"1e{e}") for e in range(lo, hi + 1) if xlim[0] <= 10.0**e <= xlim[1]]
    else:
        xticks = _nice_ticks(*xlim)
    out += _axes(fr, xticks, _nice_ticks(0.0, ytop), axis_label, "normalized lock-in frequency")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
