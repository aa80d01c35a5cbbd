"""Command-line front end.

Every subcommand reads an optional flat JSON configuration (``--config``);
flags given on the command line override file values. Exit codes: 0 on
success, 2 for configuration errors, 3 when an estimate does not converge or a
simulation stays undecided.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import ranges, tables
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateError,
    IntegrationError,
    InterpolationError,
    PllError,
    SeedError,
    UndecidedError,
)
from .integrator import IntegrationConfig, integrate
from .lock import Method, classify_grid, default_t_max, detect_cycle_slip, detect_lock, trace_separatrices
from .loop_filter import FilterKind, make_filter
from .model import ModelState, PhaseModel, Stability
from .pd import PdCharacteristic
from .svg import default_x_range, render_portrait_svg, render_sweep_svg

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3

NUMBER_KEYS = {
    "tau1", "tau2", "k_vco", "pd_period", "omega_e_free", "rel_tol", "abs_tol",
    "t_max", "x0", "theta0", "tol", "sweep_rel_tol", "eps", "stride",
}
STRING_KEYS = {"filter", "pd", "method", "out", "svg"}
LIST_KEYS = {"grid", "axis", "family"}
KNOWN_KEYS = NUMBER_KEYS | STRING_KEYS | LIST_KEYS

# flag dest -> config key
FLAG_KEYS = {
    "filter": "filter", "tau1": "tau1", "tau2": "tau2", "kvco": "k_vco", "pd": "pd",
    "pd_period": "pd_period", "omega": "omega_e_free", "rtol": "rel_tol", "atol": "abs_tol",
    "t_max": "t_max", "x0": "x0", "theta0": "theta0", "tol": "tol", "method": "method",
    "grid": "grid", "axis": "axis", "family": "family", "rel_tol": "sweep_rel_tol",
    "out": "out", "svg": "svg", "eps": "eps", "stride": "stride",
}

DEFAULT_OUT = {
    "simulate": "trajectory.csv",
    "portrait": "portrait.svg",
    "separatrix": "separatrix.csv",
    "domain": "domain.csv",
    "sweep": "sweep.csv",
}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def validate_config(cfg: dict) -> dict:
    """Type-check a flat configuration; unknown keys are rejected by name."""
    for key, v in cfg.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if key in NUMBER_KEYS:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{key!r} must be a finite number, got {v!r}")
        elif key in STRING_KEYS:
            if not isinstance(v, str):
                raise ConfigError(f"{key!r} must be a string, got {v!r}")
        elif not isinstance(v, list) or not v or any(
            isinstance(e, bool) or not isinstance(e, (int, float)) for e in v
        ):
            raise ConfigError(f"{key!r} must be a non-empty list of numbers, got {v!r}")
    if "grid" in cfg:
        g = cfg["grid"]
        if len(g) != 2 or any(int(n) != n or n < 2 for n in g):
            raise ConfigError(f"'grid' must be two integers >= 2, got {g!r}")
    return cfg


def require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing configuration key {key!r}")
    return cfg[key]


def build_model(cfg: dict) -> PhaseModel:
    try:
        kind = FilterKind(cfg.get("filter", "pi"))
    except ValueError:
        raise ConfigError(f"'filter' must be 'pi' or 'leadlag', got {cfg.get('filter')!r}") from None
    flt = make_filter(kind, float(require(cfg, "tau1")), float(require(cfg, "tau2")))
    pd = PdCharacteristic.from_name(cfg.get("pd", "sin"), float(cfg.get("pd_period", 2 * math.pi)))
    return PhaseModel(flt, pd, float(require(cfg, "k_vco")), float(cfg.get("omega_e_free", 0.0)))


def _integration_config(cfg: dict, m: PhaseModel) -> IntegrationConfig:
    return IntegrationConfig(
        rel_tol=float(cfg.get("rel_tol", 1e-9)),
        abs_tol=float(cfg.get("abs_tol", 1e-12)),
        t_max=float(cfg.get("t_max", default_t_max(m) if m.stable_equilibrium else 100.0 / m.natural_frequency)),
        dense_stride=cfg.get("stride"),
    )


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    m = build_model(cfg)
    s0 = ModelState(float(cfg.get("x0", 0.0)), float(cfg.get("theta0", 0.0)))
    tr = integrate(m, s0, _integration_config(cfg, m))
    out = cfg.get("out", DEFAULT_OUT["simulate"])
    tables.write_csv(tables.trajectory_table(tr.t, tr.x, tr.theta), out)
    slip = detect_cycle_slip(tr, m.period)
    line = f"t_final={tr.t_final:.9g} x={tr.final.x:.9g} theta_e={tr.final.theta_e:.9g} slipped={slip.slipped}"
    eq = m.stable_equilibrium
    if eq is not None:
        lock = detect_lock(tr, eq, float(cfg.get("eps", 1e-3)))
        line += f" lock={lock.status.value}"
    print(line)
    print(f"wrote {out}")
    return EXIT_OK


def _all_separatrices(m: PhaseModel):
    seps, skipped = [], 0
    for e in m.equilibria:
        if e.stability is not Stability.SADDLE:
            skipped += e.degenerate
            continue
        seps.extend(trace_separatrices(m, e))
    return seps, skipped


def cmd_portrait(cfg: dict) -> int:
    m = build_model(cfg)
    eqs = m.equilibria
    seps, skipped = _all_separatrices(m)
    trajs = []
    if "x0" in cfg or "theta0" in cfg:
        s0 = ModelState(float(cfg.get("x0", 0.0)), float(cfg.get("theta0", 0.0)))
        tr = integrate(m, s0, _integration_config(cfg, m))
        trajs.append((tr.theta, tr.x))
    x_range = default_x_range(m, eqs, [(t, x) for t, x in trajs])
    shading = None
    if "grid" in cfg and m.stable_equilibrium is not None and seps:
        n_th, n_x = (int(n) for n in cfg["grid"])
        p = m.period
        ths = -0.5 * p + p * (np.arange(n_th) + 0.5) / n_th
        xs = np.linspace(*x_range, n_x)
        shading = (ths, xs, classify_grid(m, ths, xs, Method(cfg.get("method", "separatrix"))))
    out = cfg.get("out", DEFAULT_OUT["portrait"])
    render_portrait_svg(m, trajs, seps, eqs, out, x_range=x_range, shading=shading)
    print(f"equilibria={len(eqs)} separatrices={len(seps)} degenerate={skipped}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_equilibria(cfg: dict) -> int:
    m = build_model(cfg)
    eqs = m.equilibria
    if not eqs:
        print("no equilibria")
    for e in eqs:
        print(f"theta_e={e.theta:.9g} x={e.x:.9g} {e.stability.value}")
    if "out" in cfg and eqs:
        tables.write_csv(tables.equilibria_table(eqs), cfg["out"])
        print(f"wrote {cfg['out']}")
    return EXIT_OK


def cmd_separatrix(cfg: dict) -> int:
    m = build_model(cfg)
    seps, skipped = _all_separatrices(m)
    if not seps:
        raise DegenerateError("no nondegenerate saddle to trace")
    out = cfg.get("out", DEFAULT_OUT["separatrix"])
    tables.write_csv(tables.separatrix_table(seps), out)
    print(f"branches={len(seps)} wrote {out}")
    return EXIT_OK


def cmd_domain(cfg: dict) -> int:
    m = build_model(cfg)
    n_th, n_x = (int(n) for n in cfg.get("grid", [64, 48]))
    p = m.period
    ths = -0.5 * p + p * (np.arange(n_th) + 0.5) / n_th
    xs = np.linspace(*default_x_range(m, m.equilibria), n_x)
    verdicts = classify_grid(m, ths, xs, Method(cfg.get("method", "separatrix")), t_max=cfg.get("t_max"))
    out = cfg.get("out", DEFAULT_OUT["domain"])
    tables.write_csv(tables.domain_table(ths, xs, verdicts), out)
    counts = {k: int(np.sum(verdicts == k)) for k in ("in", "out", "undecided")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    print(f"wrote {out}")
    return EXIT_OK


def _default_tol(m: PhaseModel) -> float:
    bound = ranges._existence_bound(m)
    return 1e-3 * (bound if math.isfinite(bound) else m.with_omega(0.0).natural_frequency)


def cmd_lockin(cfg: dict) -> int:
    m = build_model(cfg)
    tol = float(cfg.get("tol", _default_tol(m)))
    method = cfg.get("method", "step")
    if method == "step":
        res = ranges.estimate_lock_in(m, tol)
    elif method == "separatrix":
        res = ranges.estimate_lock_in_separatrix(m, tol)
    else:
        raise ConfigError(f"'method' for lockin must be 'step' or 'separatrix', got {method!r}")
    print(f"lock-in {res.frequency:.9g} rad/s bracket [{res.bracket[0]:.9g}, {res.bracket[1]:.9g}]")
    if "out" in cfg:
        tables.write_csv(tables.range_table([res]), cfg["out"])
        print(f"wrote {cfg['out']}")
    return EXIT_OK


def cmd_pullin(cfg: dict) -> int:
    m = build_model(cfg)
    grid = tuple(int(n) for n in cfg.get("grid", [32, 32]))
    res = ranges.estimate_pull_in(m, grid, cfg.get("tol"))
    if res.unbounded:
        print("pull-in unbounded")
    else:
        print(f"pull-in {res.frequency:.9g} rad/s bracket [{res.bracket[0]:.9g}, {res.bracket[1]:.9g}] (numerical estimate)")
    if "out" in cfg:
        tables.write_csv(tables.range_table([res]), cfg["out"])
        print(f"wrote {cfg['out']}")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    spec = ranges.SweepSpec(
        FilterKind(cfg.get("filter", "pi")),
        PdCharacteristic.from_name(cfg.get("pd", "sin"), float(cfg.get("pd_period", 2 * math.pi))),
        tuple(require(cfg, "axis")),
        tuple(require(cfg, "family")),
        float(cfg.get("sweep_rel_tol", 1e-3)),
    )
    rows = ranges.sweep_diagram(spec)
    out = cfg.get("out", DEFAULT_OUT["sweep"])
    tables.write_csv(tables.sweep_table(rows), out)
    for r in rows:
        if r.error:
            print(f"axis={r.axis:.9g} family={r.family:.9g}: {r.error}", file=sys.stderr)
    if "svg" in cfg:
        label = "K/tau1" if spec.filter_kind is FilterKind.ACTIVE_PI else "K tau1"
        render_sweep_svg(rows, cfg["svg"], axis_label=label)
        print(f"wrote {cfg['svg']}")
    print(f"points={len(rows)} failed={sum(r.error is not None for r in rows)} wrote {out}")
    return EXIT_OK


def cmd_estimate(cfg: dict) -> int:
    v = ranges.analytic_lock_in_estimate(
        float(require(cfg, "tau1")), float(require(cfg, "tau2")), float(require(cfg, "k_vco"))
    )
    print(f"{v:.6g}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "integrate one trajectory and write it as CSV"),
    "portrait": (cmd_portrait, "draw equilibria, separatrices and an optional trajectory as SVG"),
    "equilibria": (cmd_equilibria, "list equilibria and their stability"),
    "separatrix": (cmd_separatrix, "trace all saddle separatrices to CSV"),
    "domain": (cmd_domain, "classify a grid against the local lock-in domain"),
    "lockin": (cmd_lockin, "estimate the lock-in frequency"),
    "pullin": (cmd_pullin, "estimate the pull-in frequency"),
    "sweep": (cmd_sweep, "lock-in diagram over a parameter grid"),
    "estimate": (cmd_estimate, "closed-form lock-in estimate for the PI loop"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON configuration file")
    common.add_argument("--filter", choices=[k.value for k in FilterKind])
    common.add_argument("--tau1", type=float)
    common.add_argument("--tau2", type=float)
    common.add_argument("--kvco", type=float, help="VCO gain K")
    common.add_argument("--pd", help="phase detector: sin or tri")
    common.add_argument("--pd-period", type=float)
    common.add_argument("--omega", type=float, help="free-running frequency deviation, rad/s")
    common.add_argument("--rtol", type=float)
    common.add_argument("--atol", type=float)
    common.add_argument("--t-max", "--tmax", dest="t_max", type=float)
    common.add_argument("--stride", type=float, help="output sampling interval, s")
    common.add_argument("--x0", type=float)
    common.add_argument("--theta0", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--tol", type=float, help="bracket tolerance, rad/s")
    common.add_argument("--method")
    common.add_argument("--grid", type=int, nargs=2, metavar=("NTHETA", "NX"))
    common.add_argument("--axis", type=float, nargs="+")
    common.add_argument("--family", type=float, nargs="+")
    common.add_argument("--rel-tol", type=float, help="sweep tolerance relative to the loop scale")
    common.add_argument("--out")
    common.add_argument("--svg")

    parser = argparse.ArgumentParser(prog="pll-lockin", description="Lock-in and pull-in analysis of second-order PLL models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def resolve_config(ns: argparse.Namespace) -> dict:
    cfg = load_config(ns.config)
    validate_config(cfg)
    for dest, key in FLAG_KEYS.items():
        v = getattr(ns, dest, None)
        if v is not None:
            cfg[key] = list(v) if isinstance(v, list) else v
    return validate_config(cfg)


def run_cli(args: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(args)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve_config(ns)
        return COMMANDS[ns.command][0](cfg)
    except (ConvergenceError, UndecidedError, IntegrationError, DegenerateError, SeedError, InterpolationError) as exc:
        print(f"error: {ns.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (PllError, ValueError) as exc:
        print(f"error: {ns.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {ns.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
