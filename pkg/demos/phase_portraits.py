"""
Phase portraits on the cylinder
===============================

Equilibria, saddle separatrices and the local lock-in domain for a lead-lag
loop and an active PI loop, drawn over one period of the phase error.
"""

# %%
# A lead-lag loop with a sinusoidal detector. For ``omega = 0`` there is one
# stable equilibrium and one saddle per period.
from pathlib import Path

import numpy as np

from pll_lockin import (
    ModelState,
    PdCharacteristic,
    PhaseModel,
    Stability,
    classify_grid,
    integrate,
    IntegrationConfig,
    make_active_pi,
    make_lead_lag,
    render_portrait_svg,
    trace_separatrices,
)
from pll_lockin.svg import default_x_range

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

sin = PdCharacteristic.sinusoidal()
lead_lag = PhaseModel(make_lead_lag(0.0633, 0.0185), sin, 250.0)
for e in lead_lag.equilibria:
    print(f"theta={e.theta:+.4f}  x={e.x:+.4f}  {e.stability.value}")

# %%
# Four branches leave the saddle. The two stable ones, traced backwards in
# time, bound the set of states that settle without slipping a cycle.


def portrait(m, name, starts=()):
    saddles = [e for e in m.equilibria if e.stability is Stability.SADDLE]
    seps = [s for sad in saddles for s in trace_separatrices(m, sad)]
    cfg = IntegrationConfig(t_max=0.3, dense_stride=1e-3)
    trajs = [(tr.theta, tr.x) for tr in (integrate(m, ModelState(*s), cfg) for s in starts)]
    x_range = default_x_range(m, m.equilibria)
    ths = np.linspace(-np.pi, np.pi, 90, endpoint=False) + np.pi / 90
    xs = np.linspace(*x_range, 60)
    shading = (ths, xs, classify_grid(m, ths, xs))
    path = out / f"{name}.svg"
    render_portrait_svg(m, trajs, seps, m.equilibria, path, x_range=x_range, shading=shading, title=name)
    print(f"{name}: {len(m.equilibria)} equilibria, {len(seps)} branches -> {path.name}")


portrait(lead_lag, "leadlag_omega0", starts=[(0.8, -2.5), (-0.8, 2.5)])

# %%
# A nonzero deviation tilts the picture: the stable point moves right and the
# domain narrows on one side.
portrait(lead_lag.with_omega(60.0), "leadlag_omega60", starts=[(1.2, -3.0)])

# %%
# The PI loop. Its equilibria sit at ``x = omega / K`` and changing ``omega``
# only shifts the portrait vertically, so a step in frequency moves the
# equilibrium relative to the unchanged domain shape.
pi = PhaseModel(make_active_pi(0.0633, 0.0225), sin, 250.0)
for om in (0.0, 50.0, 66.0):
    portrait(pi.with_omega(om), f"pi_omega{om:g}")
