"""Fixed-header CSV tables.

Numbers are written with 9 significant digits, ``.`` as decimal separator and
``\\n`` line endings. Reading a file back yields the values exactly as they
were rounded on write.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyTableError, ParameterError

TRAJECTORY = ("t", "x", "theta_e")
SWEEP = ("axis", "family", "omega_lockin", "omega_normalized")
DOMAIN = ("theta", "x", "verdict")
EQUILIBRIA = ("theta_e", "x", "stability", "eig1_re", "eig1_im", "eig2_re", "eig2_im")
SEPARATRIX = ("branch", "theta_e", "x")
RANGE = ("kind", "method", "frequency", "lo", "hi", "tolerance", "unbounded")

HEADERS = {
    "trajectory": TRAJECTORY,
    "sweep": SWEEP,
    "domain": DOMAIN,
    "equilibria": EQUILIBRIA,
    "separatrix": SEPARATRIX,
    "range": RANGE,
}


@dataclass(frozen=True)
class Table:
    kind: str
    rows: tuple[tuple, ...]

    def __post_init__(self):
        if self.kind not in HEADERS:
            raise ParameterError(f"unknown table kind {self.kind!r}")
        width = len(HEADERS[self.kind])
        rows = tuple(tuple(r) for r in self.rows)
        for r in rows:
            if len(r) != width:
                raise ParameterError(f"{self.kind} rows need {width} fields, got {len(r)}")
        object.__setattr__(self, "rows", rows)

    @property
    def header(self) -> tuple[str, ...]:
        return HEADERS[self.kind]

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [r[i] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


def format_number(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = format(v, ".9g")
    return "0" if s == "-0" else s


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return format_number(v)


def _parse(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return float(v)
    except ValueError:
        return v


def write_csv(table: Table, path: str | Path) -> None:
    if not table.rows:
        raise EmptyTableError(f"refusing to write an empty {table.kind} table to {path}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        w.writerows([_cell(v) for v in r] for r in table.rows)


def read_csv(path: str | Path) -> Table:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyTableError(f"{path} is empty")
    header = tuple(rows[0])
    for kind, h in HEADERS.items():
        if h == header:
            return Table(kind, tuple(tuple(_parse(v) for v in r) for r in rows[1:]))
    raise ParameterError(f"{path}: unrecognised header {','.join(header)!r}")


def rounded(v: float) -> float:
    """Value as it reads back from a written table."""
    return float(format_number(v))


# -- builders ------------------------------------------------------------------


def trajectory_table(t: Sequence[float], x: Sequence[float], theta: Sequence[float]) -> Table:
    return Table("trajectory", tuple(zip(np.asarray(t, float), np.asarray(x, float), np.asarray(theta, float))))


def sweep_table(rows: Iterable) -> Table:
    return Table("sweep", tuple((r.axis, r.family, r.omega_lockin, r.omega_normalized) for r in rows))


def domain_table(thetas, xs, verdicts) -> Table:
    """Rows for a verdict grid of shape ``(len(xs), len(thetas))``."""
    verdicts = np.asarray(verdicts, dtype=object)
    return Table(
        "domain",
        tuple((th, x, str(verdicts[j, i])) for j, x in enumerate(xs) for i, th in enumerate(thetas)),
    )


def equilibria_table(eqs) -> Table:
    rows = []
    for e in eqs:
        l1, l2 = e.eigenvalues
        rows.append((e.theta, e.x, e.stability.value, l1.real, l1.imag, l2.real, l2.imag))
    return Table("equilibria", tuple(rows))


def separatrix_table(branches) -> Table:
    rows = []
    for s in branches:
        rows.extend((s.branch.value, th, x) for th, x in s.curve)
    return Table("separatrix", tuple(rows))


def range_table(results) -> Table:
    return Table(
        "range",
        tuple(
            (r.kind.value, r.method.value, r.frequency, r.bracket[0], r.bracket[1], r.tolerance, r.unbounded)
            for r in results
        ),
    )
