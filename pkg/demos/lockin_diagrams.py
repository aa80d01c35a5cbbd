"""
Lock-in diagrams
================

Normalized lock-in frequency against loop gain, one curve per zero/pole
ratio. Points are computed with ``tau1 = 1``; set ``PLL_THREADS`` to spread
the grid over several processes.
"""

# %%
from pathlib import Path

import numpy as np

from pll_lockin import FilterKind, PdCharacteristic, SweepSpec, render_sweep_svg, sweep_diagram, write_csv
from pll_lockin.ranges import monotone_families
from pll_lockin.tables import sweep_table

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

# %%
# Lead-lag loop, both detectors. At small ``K tau1`` the ratio approaches the
# detector maximum, 1/2 for the sine and 1 for the triangle.
gains = tuple(np.round(np.geomspace(0.01, 10.0, 7), 6))
for name, pd in (("sin", PdCharacteristic.sinusoidal()), ("tri", PdCharacteristic.triangular())):
    spec = SweepSpec(FilterKind.LEAD_LAG, pd, gains, (0.1, 0.5), rel_tol=5e-3)
    rows = sweep_diagram(spec)
    write_csv(sweep_table(rows), out / f"leadlag_{name}.csv")
    render_sweep_svg(rows, out / f"leadlag_{name}.svg", axis_label="K tau1", title=f"lead-lag, {name}")
    for r in rows:
        print(f"{name} K*tau1={r.axis:<8g} tau2/tau1={r.family:<4g} omega/K={r.omega_normalized:.4f}")

# %%
# PI loop: the lock-in frequency grows without bound with ``K/tau1`` but its
# ratio to the gain shrinks.
spec = SweepSpec(FilterKind.ACTIVE_PI, PdCharacteristic.sinusoidal(), (0.01, 0.1, 1.0, 10.0), (0.25, 1.0), rel_tol=5e-3)
rows = sweep_diagram(spec)
write_csv(sweep_table(rows), out / "pi_sin.csv")
render_sweep_svg(rows, out / "pi_sin.svg", axis_label="K/tau1", title="PI, sin")
print("monotone in K/tau1:", monotone_families(rows))
