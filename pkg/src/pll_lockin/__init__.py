"""Phase-space analysis of second-order phase-locked loops.

Models with a lead-lag or active PI loop filter and a sinusoidal or
triangular phase detector, an adaptive integrator with event location, cycle
slip and lock detection, separatrix tracing and lock-in / pull-in range
estimation.
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    CornerError,
    DegenerateError,
    EmptyTableError,
    IntegrationError,
    InterpolationError,
    ParameterError,
    PllError,
    PoleError,
    SeedError,
    SymmetryError,
    UndecidedError,
    ViolationError,
)
from .integrator import (
    BatchResult,
    Direction,
    Event,
    EventKind,
    EventSpec,
    IntegrationConfig,
    Termination,
    Trajectory,
    integrate,
    integrate_batch,
    integrate_with_events,
)
from .lock import (
    Branch,
    LockInDomain,
    LockReport,
    LockStatus,
    Method,
    Separatrix,
    SlipVerdict,
    classify_grid,
    detect_cycle_slip,
    detect_lock,
    in_lock_in_domain,
    settle,
    trace_branch,
    trace_separatrices,
)
from .loop_filter import (
    FilterKind,
    FilterRealization,
    filter_output,
    make_active_pi,
    make_filter,
    make_lead_lag,
    transfer_function_at,
)
from .model import (
    Equilibrium,
    ModelState,
    PhaseModel,
    Stability,
    apply_odd_symmetry,
    equilibria,
    jacobian,
    normalize_gains,
    vector_field,
    wrap_angle,
)
from .pd import PdCharacteristic, PdKind, eval_pd, pd_derivative, pd_max
from .ranges import (
    RangeKind,
    RangeMethod,
    RangeResult,
    StepOutcome,
    SweepRow,
    SweepSpec,
    analytic_lock_in_estimate,
    estimate_lock_in,
    estimate_lock_in_separatrix,
    estimate_pull_in,
    reduce_parameters,
    scale_lock_in,
    step_slip_test,
    sweep_diagram,
    verify_lyapunov_pi,
)
from .svg import render_portrait_svg, render_sweep_svg
from .tables import Table, read_csv, write_csv

__version__ = "0.1.0"
