import csv
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from richards_dd.cli import emit_csv, main
from richards_dd.config import DEFAULT_CONFIG, ConfigError, OutputOptions, format_config, parse_config
from richards_dd.constitutive import SoilParams
from richards_dd.lsolver import LschemeConfig
from richards_dd.timestepper import MeshSpec, Scenario

SMALL = DEFAULT_CONFIG.replace("n_cells = 100", "n_cells = 20").replace("N = 50", "N = 4").replace(
    "T = 0.25", "T = 0.05")

LINEAR = """\
[soil]
model = linear
[mesh]
n_cells = 10
[time]
T = 1
N = 1
[bc]
u0 = sin(pi*x)
bottom = 0
top = 0
"""


# ------------------------------------------------------------------ parsing

def test_default_config_values():
    sc, out = parse_config(DEFAULT_CONFIG)
    assert sc.solver.L is None and sc.solver.atol == 1e-10
    assert sc.soil.b == pytest.approx(0.6) and sc.soil.c == pytest.approx(5.0 / 3.0)
    assert sc.mesh.n_cells == 100 and sc.N == 50
    assert sc.bc_map == {"bottom": "0", "top": "ustar"}
    assert out == OutputOptions()


def test_round_trip_default():
    sc, out = parse_config(DEFAULT_CONFIG)
    assert parse_config(format_config(sc, out)) == (sc, out)


@settings(max_examples=40, deadline=None)
@given(b=st.floats(0.0, 0.95), c=st.floats(1.0, 4.0), m=st.floats(0.3, 0.95), n=st.integers(1, 500),
       T=st.floats(1e-3, 10.0), L=st.one_of(st.none(), st.floats(0.5, 10.0)), eps=st.floats(0.0, 1.0),
       dim=st.sampled_from([1, 2]), fields=st.booleans())
def test_round_trip_random(b, c, m, n, T, L, eps, dim, fields):
    mesh = MeshSpec(dim=dim, n_cells=n, nx=3, ny=2)
    bc = {t: "0.5*ustar" for t in mesh.tags}
    sc = Scenario(soil=SoilParams(b=b, c=c, a=1.0, m=m), mesh=mesh, T=T, N=n, bc=bc, u0="0.5*ustar",
                  source="0.1*sin(t)", epsilon=eps, solver=LschemeConfig(L=L))
    out = OutputOptions(fields=fields, field_every=2)
    assert parse_config(format_config(sc, out)) == (sc, out)


def test_round_trip_linear_model():
    sc, out = parse_config(LINEAR)
    assert sc.model == "linear" and sc.soil is None
    assert parse_config(format_config(sc, out)) == (sc, out)


@pytest.mark.parametrize("old, new, line, message", [
    ("b = 3/5", "b = 1.5", 3, r"b must lie in \[0,1\)"),
    ("a = 5/3", "a = 9", 5, "removability exponent"),
    ("n_cells = 100", "n_cells = 1.5", 13, "integer"),
    ("n_cells = 100", "cells = 100", 13, "unknown key"),
    ("[mesh]", "[grid]", 11, "unknown section"),
    ("top = ustar", "top = ustar +", 21, "end of expression"),
    ("top = ustar", "left = 0", 21, "does not exist"),
    ("L = auto", "L = -1", 25, "L must be positive"),
    ("b = 3/5", "b = x", 3, "unknown name"),
])
def test_line_numbered_errors(old, new, line, message):
    text = DEFAULT_CONFIG.replace(old, new)
    with pytest.raises(ConfigError, match=message) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="missing"):
        parse_config(DEFAULT_CONFIG.replace("m = 0.6\n", ""))
    with pytest.raises(ConfigError, match=r"\[time\]"):
        parse_config(DEFAULT_CONFIG.replace("N = 50\n", ""))
    with pytest.raises(ConfigError, match="boundary data"):
        parse_config(DEFAULT_CONFIG.replace("bottom = 0\n", ""))
    # constitutive-only commands do not need time or boundary data
    sc, _ = parse_config("[soil]\nb = 0.5\nc = 2\na = 1.5\nm = 0.6\n", require_time=False)
    assert sc.soil.b == 0.5


def test_duplicates_and_stray_lines():
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config(DEFAULT_CONFIG.replace("m = 0.6", "m = 0.6\nm = 0.7"))
    with pytest.raises(ConfigError, match="outside"):
        parse_config("b = 1\n" + DEFAULT_CONFIG)
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(DEFAULT_CONFIG + "nonsense\n")


def test_comments_and_booleans():
    text = DEFAULT_CONFIG + "physical_bounds = off  # trailing comment\n[output]\nfields = yes\nfield_every = 5\n"
    sc, out = parse_config(text)
    assert sc.physical_bounds is False and out.fields and out.field_every == 5


# ------------------------------------------------------------------ csv

def test_emit_csv_empty_table(tmp_path):
    path = emit_csv(["a", "b"], [], tmp_path / "t.csv")
    assert path.read_text() == "a,b\n"


def test_emit_csv_precision_and_round_trip(tmp_path):
    rows = [(1, 0.1, True, "x"), (2, 1.0 / 3.0, False, "y")]
    path = emit_csv(["i", "v", "flag", "s"], rows, tmp_path / "t.csv")
    with path.open() as fh:
        read = list(csv.reader(fh))
    assert read[0] == ["i", "v", "flag", "s"]
    assert float(read[2][1]) == 1.0 / 3.0
    assert read[1][1] == "0.10000000000000001"
    assert read[1][2] == "1"


def test_emit_csv_errors(tmp_path):
    with pytest.raises(ValueError, match="columns"):
        emit_csv(["a"], [(1, 2)], tmp_path / "t.csv")
    with pytest.raises(OSError, match="missing"):
        emit_csv(["a"], [], tmp_path / "missing" / "t.csv")


# ------------------------------------------------------------------ cli

def _write(tmp_path, text, name="case.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_writes_artifacts(tmp_path):
    cfg = _write(tmp_path, SMALL + "[output]\nfields = true\nfield_every = 2\n")
    out = tmp_path / "results"
    assert main(["run", cfg, "--out", str(out)]) == 0
    for name in ("trajectory_summary.csv", "iterations.csv", "bounds_report.csv", "fields_0.csv",
                 "fields_2.csv", "fields_4.csv", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"] == (tmp_path / "case.cfg").read_text()
    assert manifest["exit_code"] == 0 and "run" in manifest["timings_s"]
    assert {"numpy", "scipy", "python"} <= set(manifest["versions"])
    with (out / "trajectory_summary.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5 and rows[0]["step"] == "0"


def test_run_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for d in ("a", "b"):
        assert main(["run", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("trajectory_summary.csv", "iterations.csv", "bounds_report.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_certify_and_plot(tmp_path):
    cfg = _write(tmp_path, DEFAULT_CONFIG)
    assert main(["certify", cfg, "--out", str(tmp_path), "--probes", "2000"]) == 0
    with (tmp_path / "certification.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["passed"] == "1" for r in rows)
    assert main(["plot-constitutive", cfg, "--out", str(tmp_path), "--samples", "101"]) == 0
    data = np.genfromtxt(tmp_path / "constitutive.csv", delimiter=",", names=True)
    assert data.dtype.names == ("eta", "theta", "theta_prime", "K", "Kbar_z", "Kbar1_z")
    assert data.size == 101
    assert np.all(np.diff(data["theta"]) >= 0)


def test_sweep_tau_rows(tmp_path):
    cfg = _write(tmp_path, LINEAR)
    assert main(["sweep-tau", cfg, "--taus", "8", "--out", str(tmp_path)]) == 0
    with (tmp_path / "tau_study.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert [int(r["N"]) for r in rows] == [2**k for k in range(8)]


@pytest.mark.filterwarnings("ignore:L = .* is below L_theta")
def test_sweep_eps_and_lscheme(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["sweep-eps", cfg, "--eps", "0.1", "0.01", "--out", str(tmp_path)]) == 0
    assert main(["sweep-lscheme", cfg, "--step", "2", "--out", str(tmp_path)]) == 0
    with (tmp_path / "lscheme_rates.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["L_over_L_theta"]) for r in rows] == [0.55, 0.75, 1.0, 2.0, 4.0]
    assert (tmp_path / "eps_study.csv").exists()


def test_mms_command(tmp_path):
    assert main(["mms", "--n-cells", "100", "--levels", "2", "--out", str(tmp_path)]) == 0
    with (tmp_path / "mms_study.csv").open() as fh:
        assert len(list(csv.reader(fh))) == 3


def test_exit_code_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, DEFAULT_CONFIG.replace("b = 3/5", "b = 1.5"))
    assert main(["run", cfg, "--out", str(tmp_path)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2


def test_exit_code_usage(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_exit_code_non_convergence(tmp_path):
    cfg = _write(tmp_path, SMALL.replace("L = auto", "L = auto\nmax_iters = 1"))
    assert main(["run", cfg, "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "manifest.json").read_text())["exit_code"] == 1


def test_exit_code_bad_initial_data(tmp_path):
    cfg = _write(tmp_path, SMALL.replace("u0 = 0", "u0 = 3*ustar"))
    assert main(["run", cfg, "--out", str(tmp_path)]) == 2


def test_manifest_reproduces_run(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    again = _write(tmp_path, manifest["config"], "again.cfg")
    assert main(["run", again, "--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a" / "trajectory_summary.csv").read_bytes()
            == (tmp_path / "b" / "trajectory_summary.csv").read_bytes())


def test_scenario_equality_ignores_dict_order():
    sc, _ = parse_config(DEFAULT_CONFIG)
    assert replace(sc, bc={"top": "ustar", "bottom": "0"}) == sc
