import json

import numpy as np
import pytest

from swlw.cli import main
from swlw.config import load_config, parse_config
from swlw.errors import IOFailure, ValidationError
from swlw.galerkin import SolverConfig, run, to_eulerian
from swlw.io import content_hash, read_csv, read_snapshot, write_monitors, write_snapshot, write_sweep
from swlw.invariants import MONITOR_COLUMNS
from swlw.sweep import SWEEP_COLUMNS, make_plan, run_sweep

SMALL_RUN = """\
seed: 3
output: {dir: out, snapshot_format: %s}
params: {epsilon: 0.1, alpha: 0.177827941, beta: 0.0316227766, delta: 0.0316227766}
solver: {n: 16, dt: 1.0e-3, t_end: 0.05, monitor_every: 10, snapshot_every: 25}
limit: {cells: 100, t_end: 0.05, samples: 2, nls_nodes: 64, nls_dt: 1.0e-3}
entropy: {samples: 2000}
"""

SMALL_SWEEP = """\
params: {epsilon: 0.1}
solver: {n: 16, dt: 1.0e-3}
sweep: {eps_ladder: [0.1, 0.05, 0.025], t_end: 0.05, samples: 10, n_compare: 5, compare_cells: 50,
        reference_cells: 200, nls_nodes: 64, nls_dt: 1.0e-3}
"""


def _violations(text):
    with pytest.raises(ValidationError) as exc:
        load_config(text)
    return exc.value.violations


# --------------------------------------------------------------------------
# configuration


def test_minimal_config_defaults():
    cfg = load_config("params: {gamma: 2.0}\n")
    assert cfg.params.gamma == 2.0 and cfg.solver.n == SolverConfig().n
    assert cfg.seed == 0 and cfg.output.snapshot_format == "binary"


def test_empty_document_is_default():
    assert load_config("").solver == SolverConfig()


def test_gamma_one_rejected():
    assert any("gamma > 1 required" in v for v in _violations("params: {gamma: 1}\n"))


def test_alpha_exponent_rejected():
    v = _violations("sweep: {alpha_exp: 0.4}\n")
    assert any("alpha_exp > 1/2 required" in s for s in v)


def test_all_violations_reported_together():
    v = _violations("params: {gamma: 1}\nfoo: 2\nsolver: {n: 0}\n")
    assert any("gamma" in s for s in v)
    assert any("unknown key foo (line 2)" in s for s in v)
    assert len(v) >= 3


def test_unknown_nested_key_line():
    assert any("unknown key solver.foo (line 2)" in s for s in _violations("solver:\n  foo: 1\n"))


def test_type_mismatch():
    assert any("solver.n must be an integer" in s for s in _violations("solver: {n: 3.5}\n"))


def test_parse_error_line():
    v = _violations("params: {gamma: 2\nsolver: [\n")
    assert v[0].startswith("parse error at line")


def test_large_gamma_needs_flags():
    assert any("gamma > 3" in s for s in _violations("params: {gamma: 3.5}\n"))


def test_missing_file_is_io_failure(tmp_path):
    with pytest.raises(IOFailure):
        parse_config(tmp_path / "nope.yaml")


def test_sweep_plan_from_config():
    plan = load_config(SMALL_SWEEP).sweep_plan()
    assert [r.eps for r in plan.rows] == [0.1, 0.05, 0.025]
    assert plan.rows[0].alpha == pytest.approx(0.1**0.75)


# --------------------------------------------------------------------------
# serialization


@pytest.fixture(scope="module")
def snap():
    cfg = SolverConfig(n=8, dt=1e-3, t_end=0.01)
    res = run(cfg)
    return to_eulerian(res.final, cfg, np.linspace(0.0, 0.9, 17))


@pytest.mark.parametrize("fmt_", ["binary", "csv"])
def test_snapshot_round_trip_bit_exact(tmp_path, snap, fmt_):
    back = read_snapshot(write_snapshot(tmp_path / f"s.{fmt_}", snap, fmt_))
    assert back.frame == snap.frame and back.t == snap.t
    for k in ("coord", "rho", "u", "w", "h", "theta", "psi"):
        a, b = np.asarray(getattr(snap, k)), getattr(back, k)
        assert a.shape == b.shape and np.array_equal(a, b)


def test_bad_snapshot_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"garbage\n")
    with pytest.raises(IOFailure):
        read_snapshot(p)


def test_empty_monitors_header_only(tmp_path):
    p = write_monitors(tmp_path / "m.csv", [])
    assert p.read_text() == ",".join(MONITOR_COLUMNS) + "\n"


def test_sweep_csv_rows(tmp_path):
    plan = make_plan([0.1, 0.05, 0.025], base=SolverConfig(n=16, dt=1e-3), t_end=0.05, samples=10,
                     n_compare=5, compare_cells=50, reference_cells=200, nls_nodes=64, nls_dt=1e-3)
    p = write_sweep(tmp_path / "s.csv", run_sweep(plan).rows)
    lines = p.read_text().splitlines()
    assert len(lines) == 4 and lines[0] == ",".join(SWEEP_COLUMNS)
    rows = read_csv(p)
    assert float(rows[1]["eps"]) == 0.05


def test_content_hash_is_git_blob():
    # git hash-object of '{"a":1}'
    assert content_hash({"a": 1}) == "daa5053ecf5f9a37b2de733d0751cc1ab53ac010"
    assert content_hash({"b": 2, "a": 1}) == content_hash({"a": 1, "b": 2})
    assert content_hash({"a": 1}) != content_hash({"a": 2})


# --------------------------------------------------------------------------
# command line


def _write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("fmt_,ext", [("binary", ".bin"), ("csv", ".csv")])
def test_simulate_outputs(tmp_path, fmt_, ext):
    assert main(["simulate", _write(tmp_path, SMALL_RUN % fmt_)]) == 0
    out = tmp_path / "out"
    snaps = sorted(out.glob("snapshot_*" + ext))
    assert len(snaps) == 3
    mon = read_csv(out / "monitors.csv")
    assert list(mon[0]) == list(MONITOR_COLUMNS)
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["command"] == "simulate" and len(man["config_hash"]) == 40
    assert read_snapshot(snaps[-1]).frame == "lagrangian"


def test_check_invariants_passes(tmp_path, capsys):
    assert main(["check-invariants", _write(tmp_path, SMALL_RUN % "binary")]) == 0
    rows = read_csv(tmp_path / "out" / "invariants.csv")
    assert all(r["passed"] == "1" for r in rows)
    assert "PASS" in capsys.readouterr().out


def test_check_invariants_failure_exit_1(tmp_path):
    text = SMALL_RUN % "binary" + "checks: {energy_tol: 1.0e-30, mass_tol: 1.0e-30}\n"
    assert main(["check-invariants", _write(tmp_path, text)]) == 1


@pytest.mark.parametrize("zeta", ["+1", "s2"])
def test_entropy_diag(tmp_path, zeta):
    assert main(["entropy-diag", _write(tmp_path, SMALL_RUN % "binary"), "--zeta", zeta]) == 0
    assert (tmp_path / "out" / f"entropy_diag_{zeta}.csv").exists()


def test_limit_run(tmp_path):
    assert main(["limit-run", _write(tmp_path, SMALL_RUN % "binary")]) == 0
    rows = read_csv(tmp_path / "out" / "limit.csv")
    assert len(rows) >= 2 and float(rows[-1]["min_rho"]) > 0


def test_validation_exit_2(tmp_path, capsys):
    assert main(["simulate", _write(tmp_path, "params: {gamma: 1}\nfoo: 2\n")]) == 2
    err = capsys.readouterr().err
    assert "gamma > 1 required" in err and "unknown key foo (line 2)" in err


def test_numerical_exit_3(tmp_path):
    text = "params: {epsilon: 1.0}\nsolver: {n: 16, dt: 1.0, t_end: 20.0, integrator: rk4}\n"
    assert main(["simulate", _write(tmp_path, text)]) == 3
    assert (tmp_path / "out" / "monitors.csv").exists()


def test_io_exit_4(tmp_path):
    assert main(["simulate", str(tmp_path / "missing.yaml")]) == 4


def test_output_root_env(tmp_path, monkeypatch):
    root = tmp_path / "root"
    monkeypatch.setenv("SWLW_OUTPUT_ROOT", str(root))
    assert main(["simulate", _write(tmp_path, SMALL_RUN % "binary")]) == 0
    assert (root / "out" / "monitors.csv").exists()


def test_sweep_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL_SWEEP)
    assert main(["sweep", cfg, "-o", str(tmp_path / "a")]) == 0
    assert main(["sweep", cfg, "-o", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "sweep.csv" in names and len(names) == 4
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
