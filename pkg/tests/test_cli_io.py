import json
import math
import re
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import LL_LOOP, ll_model, pi_model
from pll_lockin import EmptyTableError, Stability, Table, read_csv, render_portrait_svg, trace_separatrices, write_csv
from pll_lockin.cli import run_cli
from pll_lockin.tables import SWEEP, TRAJECTORY, format_number, rounded, trajectory_table

SVG_NS = "{http://www.w3.org/2000/svg}"


def cli(capsys, *args):
    code = run_cli([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


# -- CSV ---------------------------------------------------------------------


def test_empty_table_rejected(tmp_path):
    with pytest.raises(EmptyTableError):
        write_csv(Table("trajectory", ()), tmp_path / "t.csv")


def test_single_sample_line(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(trajectory_table([0.0], [1.0], [2.0]), path)
    assert path.read_bytes() == b"t,x,theta_e\n0,1,2\n"


def test_nine_significant_digits(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(trajectory_table([math.pi], [-1e-12 / 3], [12345.678901234]), path)
    assert path.read_text().splitlines()[1] == "3.14159265,-3.33333333e-13,12345.6789"


def test_negative_zero_written_as_zero():
    assert format_number(-0.0) == "0"


def test_sweep_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rows = [tuple(v) for v in rng.normal(size=(20, 4)) * 10.0 ** rng.integers(-8, 8, size=(20, 4))]
    table = Table("sweep", rows)
    path = tmp_path / "s.csv"
    write_csv(table, path)
    back = read_csv(path)
    assert back.kind == "sweep" and back.header == SWEEP
    for a, b in zip(table.rows, back.rows):
        assert tuple(rounded(v) for v in a) == b


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_rounding_is_idempotent(v):
    r = rounded(v)
    assert rounded(r) == r
    if v != 0:
        assert abs(r - v) <= 5e-9 * abs(v)


def test_row_width_checked():
    with pytest.raises(ValueError):
        Table("trajectory", [(1.0, 2.0)])


def test_unknown_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)


# -- SVG ---------------------------------------------------------------------


def circles(path):
    root = ET.parse(path).getroot()
    return [c for c in root.iter(f"{SVG_NS}circle") if c.get("class") == "equilibrium"]


def separatrix_strokes(path):
    root = ET.parse(path).getroot()
    return [p for p in root.iter(f"{SVG_NS}polyline") if p.get("class") == "separatrix"]


def test_one_equilibrium_one_dot(tmp_path):
    m = pi_model()
    eq = m.stable_equilibrium
    path = tmp_path / "p.svg"
    render_portrait_svg(m, [], [], [eq], path)
    assert len(circles(path)) == 1
    assert separatrix_strokes(path) == []


def test_ll_loop_portrait_counts(tmp_path):
    m = ll_model(**LL_LOOP)
    eqs = m.equilibria
    assert len(eqs) == 2
    (saddle,) = [e for e in eqs if e.stability is Stability.SADDLE]
    seps = trace_separatrices(m, saddle)
    path = tmp_path / "ll_loop.svg"
    render_portrait_svg(m, [], seps, eqs, path)
    assert len(circles(path)) == 2
    assert len({s.branch for s in seps}) == 4
    # curves that wrap around the cylinder are split into several strokes
    assert len(separatrix_strokes(path)) >= 4


def test_portrait_is_deterministic(tmp_path):
    m = ll_model(**LL_LOOP, omega=30.0)
    saddle = next(e for e in m.equilibria if e.stability is Stability.SADDLE)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    for path in (a, b):
        seps = trace_separatrices(m, saddle)
        render_portrait_svg(m, [([0.0, 1.0, 2.0], [0.0, 0.1, 0.0])], seps, m.equilibria, path)
    assert a.read_bytes() == b.read_bytes()


# -- CLI ---------------------------------------------------------------------


def test_estimate_command(capsys):
    code, out, _ = cli(capsys, "estimate", "--tau1", 1, "--tau2", 0, "--kvco", 2)
    assert code == 0 and out.strip() == "1.33333"


def test_lead_lag_tau2_rejected(capsys):
    code, _, err = cli(capsys, "lockin", "--filter", "leadlag", "--tau1", 1, "--tau2", 1, "--kvco", 2)
    assert code == 2 and "tau2" in err


def test_sweep_two_points(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("PLL_THREADS", "1")
    out = tmp_path / "sweep.csv"
    svg = tmp_path / "sweep.svg"
    code, _, _ = cli(
        capsys, "sweep", "--filter", "leadlag", "--pd", "tri", "--axis", 0.5, 1.0, "--family", 0.1,
        "--rel-tol", 1e-2, "--out", out, "--svg", svg,
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "axis,family,omega_lockin,omega_normalized" and len(lines) == 3
    ET.parse(svg)


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tau1": 1, "tau2": 0.5, "k_vco": 1, "kvco_typo": 3}))
    code, _, err = cli(capsys, "equilibria", "--config", cfg)
    assert code == 2 and "kvco_typo" in err


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tau1": 1, "tau2": 0.5, "k_vco": 1, "omega_e_free": 0.0}))
    code, out, _ = cli(capsys, "equilibria", "--config", cfg, "--omega", 0.25)
    assert code == 0
    xs = [float(v) for v in re.findall(r"x=(\S+)", out)]
    assert len(xs) == 2 and xs == pytest.approx([0.25, 0.25])


@pytest.mark.parametrize(
    "args, needle",
    [
        (["equilibria", "--tau1", 1, "--tau2", 0.5], "k_vco"),
        (["equilibria", "--tau1", 1, "--tau2", 0.5, "--kvco", -1], "k_vco"),
        (["equilibria", "--tau1", -1, "--tau2", 0.5, "--kvco", 1], "tau1"),
        (["equilibria", "--tau1", 1, "--tau2", 0.5, "--kvco", 1, "--pd", "square"], "square"),
        (["lockin", "--tau1", 1, "--tau2", 0.5, "--kvco", 1, "--tol", 0], "tol"),
        (["lockin", "--tau1", 1, "--tau2", 0.5, "--kvco", 1, "--method", "guess"], "method"),
        (["pullin", "--tau1", 1, "--tau2", 0.5, "--kvco", 1, "--filter", "leadlag", "--grid", 8, 8], "32"),
        (["sweep", "--axis", 2, 1, "--family", 0.1], "increasing"),
        (["sweep", "--axis", 1, "--family", 2], "family"),
        (["simulate", "--config", "/nonexistent/c.json"], "c.json"),
    ],
)
def test_configuration_errors(capsys, args, needle):
    code, _, err = cli(capsys, *args)
    assert code == 2
    assert needle in err


def test_bad_flag_value_exits_two(capsys):
    code, _, _ = cli(capsys, "estimate", "--tau1", "abc")
    assert code == 2


def test_degenerate_separatrix_exits_three(capsys):
    # lead-lag at the existence threshold: a single saddle-node
    m = ll_model(**LL_LOOP)
    om = m.k_vco * m.pd.maximum * m.filter.dc_gain
    code, _, err = cli(capsys, "separatrix", "--filter", "leadlag", *("--tau1", LL_LOOP["tau1"], "--tau2", LL_LOOP["tau2"]),
                       "--kvco", LL_LOOP["k"], "--omega", repr(om))
    assert code == 3 and "saddle" in err


def test_simulate_writes_trajectory(capsys, tmp_path):
    out = tmp_path / "t.csv"
    code, text, _ = cli(capsys, "simulate", "--tau1", 0.0633, "--tau2", 0.0225, "--kvco", 250, "--omega", 50,
                        "--t-max", 0.5, "--stride", 0.01, "--out", out)
    assert code == 0 and "slipped=False" in text
    table = read_csv(out)
    assert table.header == TRAJECTORY
    t = np.array(table.column("t"))
    assert t[0] == 0 and t[-1] == pytest.approx(0.5) and np.all(np.diff(t) > 0)


def test_portrait_command(capsys, tmp_path):
    out = tmp_path / "p.svg"
    code, text, _ = cli(capsys, "portrait", "--filter", "leadlag", "--tau1", LL_LOOP["tau1"], "--tau2", LL_LOOP["tau2"],
                        "--kvco", LL_LOOP["k"], "--x0", 0.5, "--theta0", -2, "--grid", 16, 12, "--out", out)
    assert code == 0 and "equilibria=2 separatrices=4" in text
    assert len(circles(out)) == 2


def test_domain_command(capsys, tmp_path):
    out = tmp_path / "d.csv"
    code, text, _ = cli(capsys, "domain", "--tau1", 0.0633, "--tau2", 0.0225, "--kvco", 250, "--grid", 8, 6,
                        "--method", "simulation", "--out", out)
    assert code == 0
    table = read_csv(out)
    assert table.header == ("theta", "x", "verdict") and len(table) == 48
    assert set(table.column("verdict")) <= {"in", "out", "undecided"}


def test_lockin_and_pullin_commands(capsys, tmp_path):
    out = tmp_path / "r.csv"
    base = ["--tau1", 0.0633, "--tau2", 0.0225, "--kvco", 250]
    code, text, _ = cli(capsys, "lockin", *base, "--method", "separatrix", "--tol", 0.1, "--out", out)
    assert code == 0 and text.startswith("lock-in 60.9")
    assert read_csv(out).column("kind") == ["lock-in"]
    code, text, _ = cli(capsys, "pullin", *base)
    assert code == 0 and "unbounded" in text


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "pll_lockin", "estimate", "--tau1", "1", "--tau2", "0", "--kvco", "0.5"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "0.583333"
