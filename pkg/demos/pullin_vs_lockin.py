"""
Pull-in against lock-in
=======================

The pull-in frequency asks for lock from every initial state, slips allowed.
For the PI loop a Lyapunov function shows it is infinite; for the lead-lag
loop it is finite and sits above the lock-in frequency.
"""

# %%
from pll_lockin import (
    PdCharacteristic,
    PhaseModel,
    estimate_lock_in,
    estimate_pull_in,
    make_active_pi,
    make_lead_lag,
    verify_lyapunov_pi,
)

sin = PdCharacteristic.sinusoidal()

# %%
# PI: along every trajectory ``V`` decreases at the rate ``-K (tau2/tau1) v^2``.
pi = PhaseModel(make_active_pi(0.0633, 0.0225), sin, 250.0, 40.0)
rep = verify_lyapunov_pi(pi, 50, seed=1)
print(f"Lyapunov check on {rep.n_trajectories} runs: max rate error {rep.max_rate_error:.1e}")
print("PI pull-in unbounded:", estimate_pull_in(pi).unbounded)

# %%
# Lead-lag: bisection on a 32x32 grid of initial states over one period and
# the band the filter state is confined to. Past the pull-in frequency some
# states end on a rotating cycle instead of an equilibrium.
for k in (0.5, 2.0, 5.0):
    m = PhaseModel(make_lead_lag(1.0, 0.1), sin, k)
    tol = 1e-3 * k
    lock = estimate_lock_in(m, tol).frequency
    pull = estimate_pull_in(m, tol=tol)
    print(f"K tau1={k:<4g} lock-in/K={lock / k:.4f}  pull-in/K={pull.frequency / k:.4f}  cycles seen={pull.diagnostics['cycles']}")
print(pull.diagnostics["caveat"])
