"""End-to-end tests of the command-line interface, one or more per flag."""

import functools
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from freeconv import cli, ovconv
from freeconv.cli import EXIT_CONVERGENCE, EXIT_FILE, EXIT_INPUT, EXIT_OK, RunConfig, main
from freeconv.linearize import Linearization, verify_linearization
from freeconv.measures import DensityEstimate, MarchenkoPastur, Semicircle
from freeconv.ncpoly import parse_polynomial
from freeconv.scalarconv import free_add_convolve

LAWS = {"x": {"type": "semicircle"}, "y": {"type": "marchenko_pastur", "ratio": 4}}
MIXED = "x*y+y*x+x^2"


@pytest.fixture
def laws_file(tmp_path):
    path = tmp_path / "laws.json"
    path.write_text(json.dumps(LAWS))
    return str(path)


@pytest.fixture
def ens_file(tmp_path):
    path = tmp_path / "ens.json"
    path.write_text(json.dumps({"x": {"kind": "gue", "n": 100, "seed": 1},
                                "y": {"kind": "wishart", "n": 100, "m": 400, "seed": 2}}))
    return str(path)


def read_csv(path):
    return DensityEstimate.from_csv(path)


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------- density


def test_density_mixed_command(tmp_path, laws_file, capsys):
    out = tmp_path / "mixed.csv"
    code, _, _ = run_cli(["density", MIXED, laws_file, "--grid", "-4:12:0.01", "--eps", "1e-3",
                          "-o", str(out)], capsys)
    assert code == EXIT_OK
    head = out.read_text().splitlines()[0]
    assert head == "t,density"
    rho = read_csv(out)
    assert rho.grid.size == 1601 and rho.grid[0] == -4 and rho.grid[-1] == pytest.approx(12)
    assert np.all(rho.density >= 0)
    expected = ovconv.polynomial_density(parse_polynomial(MIXED), {"x": Semicircle(),
                                         "y": MarchenkoPastur(4)}, rho.grid, 1e-3)
    assert np.allclose(rho.density, expected.density, rtol=0, atol=1e-12)


def test_density_to_stdout_and_inline_laws(capsys):
    code, out, _ = run_cli(["density", "x", json.dumps({"x": {"type": "semicircle"}}),
                            "--grid", "-1:1:0.5", "--eps", "1e-6"], capsys)
    assert code == EXIT_OK
    rows = [line.split(",") for line in out.strip().splitlines()[1:]]
    t = np.array([float(r[0]) for r in rows])
    d = np.array([float(r[1]) for r in rows])
    assert np.allclose(d, Semicircle().density(t), atol=1e-5)


def test_density_several_eps_extrapolates(tmp_path, laws_file, capsys):
    out = tmp_path / "ext.csv"
    code, _, _ = run_cli(["density", "x + y", laws_file, "--grid", "-1:8:0.5",
                          "--eps", "1e-3", "5e-4", "--tol", "1e-11", "--out", str(out)], capsys)
    assert code == EXIT_OK
    rho = read_csv(out)
    ref = free_add_convolve(Semicircle(), MarchenkoPastur(4), rho.grid, 1e-6)
    assert np.max(np.abs(rho.density - ref.density)) <= 2e-3


def test_density_z_eps_and_method_flags(tmp_path, laws_file, capsys):
    paths = {}
    for method in ("spectral", "quadrature"):
        paths[method] = tmp_path / f"{method}.csv"
        code, _, _ = run_cli(["density", "x + y", laws_file, "--grid", "0:4:1", "--eps", "1e-2",
                              "--z-eps", "2e-2", "--method", method, "-o", str(paths[method])],
                             capsys)
        assert code == EXIT_OK
    a, b = read_csv(paths["spectral"]), read_csv(paths["quadrature"])
    assert np.allclose(a.density, b.density, atol=1e-8)
    # the (1,1) height is what --z-eps sets, so it must change the output
    plain = ovconv.polynomial_density(parse_polynomial("x + y"), {"x": Semicircle(),
                                      "y": MarchenkoPastur(4)}, a.grid, 1e-2)
    assert np.max(np.abs(plain.density - a.density)) > 1e-4


def _short_budget(monkeypatch):
    real = ovconv.polynomial_density
    monkeypatch.setattr(cli, "polynomial_density", functools.partial(real, max_iter=3))


def test_density_nonconvergence_exit_code(tmp_path, laws_file, capsys, monkeypatch):
    _short_budget(monkeypatch)
    out = tmp_path / "bad.csv"
    code, _, err = run_cli(["density", MIXED, laws_file, "--grid", "0:1:0.5", "-o", str(out)], capsys)
    assert code == EXIT_CONVERGENCE
    assert "did not converge" in err
    assert not out.exists()


def test_density_skip_bad_writes_nan(tmp_path, laws_file, capsys, monkeypatch):
    _short_budget(monkeypatch)
    out = tmp_path / "skip.csv"
    code, _, _ = run_cli(["density", MIXED, laws_file, "--grid", "0:1:0.5", "--skip-bad",
                          "-o", str(out)], capsys)
    assert code == EXIT_OK
    body = out.read_text().splitlines()[1:]
    assert len(body) == 3 and all(line.endswith("nan") for line in body)


# ---------------------------------------------------------------- convolve


def test_convolve_semicircles(tmp_path, capsys):
    laws = tmp_path / "two.json"
    laws.write_text(json.dumps({"a": {"type": "semicircle"}, "b": {"type": "semicircle"}}))
    out = tmp_path / "conv.csv"
    code, _, _ = run_cli(["convolve", str(laws), "--grid", "-2.7:2.7:0.1", "--eps", "1e-6",
                          "-o", str(out)], capsys)
    assert code == EXIT_OK
    rho = read_csv(out)
    exact = np.sqrt(np.clip(8 - rho.grid ** 2, 0, None)) / (4 * np.pi)
    assert np.max(np.abs(rho.density - exact)) <= 1e-3


def test_convolve_richardson_and_tol(tmp_path, capsys):
    laws = json.dumps({"a": {"type": "semicircle"}, "b": {"type": "semicircle"}})
    grid = "-2:2:0.25"
    outs = {}
    for flag in ([], ["--richardson"]):
        path = tmp_path / f"c{len(flag)}.csv"
        code, _, _ = run_cli(["convolve", laws, "--grid", grid, "--eps", "1e-2", "--tol", "1e-12",
                              *flag, "-o", str(path)], capsys)
        assert code == EXIT_OK
        outs[len(flag)] = read_csv(path)
    exact = np.sqrt(np.clip(8 - outs[0].grid ** 2, 0, None)) / (4 * np.pi)
    err_plain = np.max(np.abs(outs[0].density - exact))
    err_rich = np.max(np.abs(outs[1].density - exact))
    assert err_rich < err_plain / 10


def test_convolve_rejects_wrong_number_of_laws(capsys):
    code, _, err = run_cli(["convolve", json.dumps(LAWS | {"z": {"type": "semicircle"}}),
                            "--grid", "0:1:0.5"], capsys)
    assert code == EXIT_INPUT and "exactly two" in err


# ---------------------------------------------------------------- cumulants


def test_cumulants_semicircle_prefix(capsys):
    code, out, _ = run_cli(["cumulants", "--moments", "[0,1,0,2]"], capsys)
    assert code == EXIT_OK and out.strip() == "[0,1,0,0]"


def test_cumulants_inverse_and_classical(tmp_path, capsys):
    code, out, _ = run_cli(["cumulants", "--moments", "[0,1,0,0]", "--inverse"], capsys)
    assert out.strip() == "[0,1,0,2]"
    # standard Gaussian: moments 0,1,0,3 have classical cumulants 0,1,0,0
    code, out, _ = run_cli(["cumulants", "--moments", "[0,1,0,3]", "--classical"], capsys)
    assert out.strip() == "[0,1,0,0]"
    path = tmp_path / "m.json"
    path.write_text("[0,1,0,0]")
    target = tmp_path / "c.json"
    code, _, _ = run_cli(["cumulants", "--moments", str(path), "--classical", "--inverse",
                          "-o", str(target)], capsys)
    assert code == EXIT_OK and target.read_text().strip() == "[0,1,0,3]"


def test_cumulants_bad_input(capsys):
    code, _, _ = run_cli(["cumulants", "--moments", '{"a": 1}'], capsys)
    assert code == EXIT_INPUT
    code, _, _ = run_cli(["cumulants", "--moments", "[0, 1,"], capsys)
    assert code == EXIT_INPUT


# ---------------------------------------------------------------- linearize


def test_linearize_json_verifies(tmp_path, capsys):
    out = tmp_path / "lin.json"
    code, _, _ = run_cli(["linearize", MIXED, "--format", "json", "--verify", "-o", str(out)], capsys)
    assert code == EXIT_OK
    data = json.loads(out.read_text())
    assert data["residual"] <= 1e-9
    L = Linearization.from_json(data)
    assert set(L.variables) == {"x", "y"}
    for a in [L.constant, *L.coefficients.values()]:
        assert np.allclose(a, a.conj().T)
    assert verify_linearization(parse_polynomial(MIXED), L) <= 1e-9


def test_linearize_text(capsys):
    code, out, _ = run_cli(["linearize", MIXED], capsys)
    assert code == EXIT_OK
    assert out.startswith("b0 =") and "a_x =" in out and "a_y =" in out
    code, out, _ = run_cli(["linearize", MIXED, "--format", "text", "--verify"], capsys)
    residual = float(out.strip().splitlines()[-1].split("=")[1])
    assert residual <= 1e-9


def test_linearize_rejects_non_selfadjoint(capsys):
    code, _, err = run_cli(["linearize", "x*y"], capsys)
    assert code == EXIT_INPUT and "selfadjoint" in err


# ---------------------------------------------------------------- mc-compare


def test_mc_compare_histogram_and_ks(tmp_path, laws_file, ens_file, capsys):
    dens = tmp_path / "x.csv"
    code, _, _ = run_cli(["density", "x", laws_file, "--grid", "-2.2:2.2:0.01", "--eps", "1e-6",
                          "-o", str(dens)], capsys)
    assert code == EXIT_OK
    hist = tmp_path / "hist.csv"
    code, out, _ = run_cli(["mc-compare", "x", ens_file, "--n", "300", "--trials", "3",
                            "--bins", "40", "--density", str(dens), "-o", str(hist)], capsys)
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["n"] == 300 and report["trials"] == 3
    assert report["kolmogorov_distance"] <= 0.05
    lines = hist.read_text().splitlines()
    assert lines[0] == "left,right,density" and len(lines) == 41
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.sum((rows[:, 1] - rows[:, 0]) * rows[:, 2]) == pytest.approx(1.0)


def test_mc_compare_stdout_keeps_report_on_stderr(ens_file, capsys, tmp_path):
    dens = tmp_path / "sc.csv"
    grid = np.arange(-2.2, 2.2001, 0.01)
    DensityEstimate(grid, Semicircle().density(grid)).to_csv(dens)
    code, out, err = run_cli(["mc-compare", "x", ens_file, "--bins", "10", "--trials", "1",
                              "--density", str(dens)], capsys)
    assert code == EXIT_OK
    assert out.splitlines()[0] == "left,right,density"
    assert "kolmogorov_distance" in json.loads(err)


def test_mc_compare_missing_ensemble(ens_file, capsys):
    code, _, err = run_cli(["mc-compare", "x + z", ens_file], capsys)
    assert code == EXIT_INPUT and "z" in err


# ---------------------------------------------------------------- freeness


def test_freeness_table(tmp_path, ens_file, capsys):
    out = tmp_path / "free.csv"
    code, _, _ = run_cli(["freeness", ens_file, "--word", "x,y,x,y", "--n", "50", "100",
                          "--trials", "4", "-o", str(out)], capsys)
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "n,mean,stderr"
    rows = [line.split(",") for line in lines[1:]]
    assert [int(r[0]) for r in rows] == [50, 100]
    assert all(abs(float(r[1])) < 0.2 and float(r[2]) >= 0 for r in rows)


def test_freeness_power_groups_and_errors(ens_file, capsys):
    code, out, _ = run_cli(["freeness", ens_file, "--word", "x^2,y,x^2,y", "--trials", "2"], capsys)
    assert code == EXIT_OK and out.splitlines()[1].startswith("100,")
    code, _, _ = run_cli(["freeness", ens_file, "--word", "x,x"], capsys)
    assert code == EXIT_INPUT


# ---------------------------------------------------------------- exit codes and files


@pytest.mark.parametrize("argv", [
    ["density", "x +* y", json.dumps(LAWS), "--grid", "0:1:0.5"],
    ["density", "x", json.dumps(LAWS), "--grid", "0:1"],
    ["density", "x", json.dumps(LAWS), "--grid", "1:0:0.5"],
    ["density", "x", json.dumps(LAWS), "--grid", "0:1:0.5", "--eps", "1e-3", "1e-2"],
    ["density", "x", json.dumps(LAWS), "--grid", "0:1:0.5", "--eps", "-1"],
    ["density", "x", json.dumps(LAWS), "--grid", "0:1:0.5", "--tol", "0"],
    ["density", "w", json.dumps(LAWS), "--grid", "0:1:0.5"],
    ["density", "x", '{"x": {"type": "nope"}}', "--grid", "0:1:0.5"],
    ["mc-compare", "x", '{"x": {"kind": "gue", "n": 10}}', "--trials", "0"],
])
def test_input_errors_exit_2(argv, capsys):
    code, _, err = run_cli(argv, capsys)
    assert code == EXIT_INPUT
    assert err.startswith("error:")


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["density", "x"])
    assert info.value.code == EXIT_INPUT


def test_file_errors_exit_3(tmp_path, laws_file, capsys):
    code, _, _ = run_cli(["density", "x", str(tmp_path / "missing.json"), "--grid", "0:1:0.5"], capsys)
    assert code == EXIT_FILE
    code, _, _ = run_cli(["density", "x", laws_file, "--grid", "0:1:0.5",
                          "-o", str(tmp_path / "no" / "such" / "dir.csv")], capsys)
    assert code == EXIT_FILE


def test_outputs_are_byte_identical(tmp_path, laws_file, ens_file, capsys):
    def twice(args):
        blobs = []
        for k in range(2):
            path = tmp_path / f"rep{k}.out"
            assert main(args + ["-o", str(path)]) == EXIT_OK
            blobs.append(path.read_bytes())
        capsys.readouterr()
        return blobs

    a, b = twice(["density", MIXED, laws_file, "--grid", "-2:6:0.5", "--eps", "1e-2"])
    assert a == b
    a, b = twice(["mc-compare", MIXED, ens_file, "--n", "60", "--trials", "2", "--bins", "15"])
    assert a == b
    a, b = twice(["freeness", ens_file, "--word", "x,y,x,y", "--n", "30", "--trials", "3"])
    assert a == b


def test_atomic_write_leaves_no_temp_files(tmp_path, capsys):
    target = tmp_path / "out.json"
    target.write_text("old")
    code, _, _ = run_cli(["cumulants", "--moments", "[1,2]", "-o", str(target)], capsys)
    assert code == EXIT_OK
    assert target.read_text().strip() == "[1,1]"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.json"]


def test_failed_run_keeps_previous_output(tmp_path, laws_file, capsys, monkeypatch):
    _short_budget(monkeypatch)
    target = tmp_path / "keep.csv"
    target.write_text("previous\n")
    code, _, _ = run_cli(["density", MIXED, laws_file, "--grid", "0:1:0.5", "-o", str(target)], capsys)
    assert code == EXIT_CONVERGENCE
    assert target.read_text() == "previous\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["keep.csv", "laws.json"]


def test_thread_cap_does_not_change_results(tmp_path, laws_file, capsys, monkeypatch):
    outputs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("FREECONV_THREADS", threads)
        assert ovconv.default_threads() == int(threads)
        path = tmp_path / f"t{threads}.csv"
        assert main(["density", MIXED, laws_file, "--grid", "-2:6:0.25", "--eps", "1e-2",
                     "-o", str(path)]) == EXIT_OK
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
    monkeypatch.setenv("FREECONV_THREADS", "junk")
    assert ovconv.default_threads() == 1


def test_run_config_validation():
    cfg = RunConfig(command="density", polynomial="x", laws="{}", grid="0:1:0.5", eps=(1e-3,))
    cfg.validate()
    with pytest.raises(ValueError):
        RunConfig(command="density", grid="0:1:0.5", eps=(0.0,)).validate()


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "freeconv", "cumulants", "--moments", "[0,1,0,2]"],
                          capture_output=True, text=True, env=env, timeout=60)
    assert proc.returncode == 0 and proc.stdout.strip() == "[0,1,0,0]"
    proc = subprocess.run([sys.executable, "-m", "freeconv", "linearize", "x*y"],
                          capture_output=True, text=True, env=env, timeout=60)
    assert proc.returncode == EXIT_INPUT
    proc = subprocess.run([sys.executable, "-m", "freeconv", "--help"],
                          capture_output=True, text=True, env=env, timeout=60)
    assert "t,density" in proc.stdout and "FREECONV_THREADS" in proc.stdout
