"""Driver subcommands exercised in-process through cli.main."""

import numpy as np

from beliefmix.cli import main

BASE = """\
seed = 3

[mixture]
N = 12
C = 2
v = 0.15
"""

ENCODE = BASE + """
[model]
alpha = 0.5
"""

DECIMATE = BASE + """
[model]
alpha = 0.5

[run]
rho_grid = [0.0, 0.4]
n_seeds = 2
max_iters = 400
tol = 1e-8
"""

CENSUS = BASE + """
[census]
alphas = [0.05, 0.6]
n_starts = 6
"""

OPTIMIZE = BASE + """
[model]
mode = "geometric"

[optimize]
q_parts = 1
max_evals = 10
sigma0 = 0.4
max_iters = 200
tol = 1e-6
"""


def write_cfg(tmp_path, body, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def test_generate_writes_mixture_table(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    out = tmp_path / "gen"
    assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "mixture.csv").read_text().splitlines()
    assert lines[0] == "component,variable,p1,x_opt"
    assert len(lines) == 1 + 2 * 12
    manifest = (out / "manifest.txt").read_text()
    assert manifest.startswith("command: beliefmix generate")
    assert "package version:" in manifest
    assert "wall time s:" in manifest
    assert "outputs: mixture.csv" in manifest
    # the config body is echoed so the run can be reproduced from the manifest
    assert "N = 12" in manifest


def test_stats_reruns_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["stats", "--config", cfg, "--out", str(a)]) == 0
    assert main(["stats", "--config", cfg, "--out", str(b)]) == 0
    blob = (a / "stats.csv").read_bytes()
    assert blob == (b / "stats.csv").read_bytes()
    assert blob.startswith(b"# singles")


def test_encode_outputs_model_and_couplings(tmp_path):
    cfg = write_cfg(tmp_path, ENCODE)
    out = tmp_path / "enc"
    assert main(["encode", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "couplings.csv").read_text().splitlines()
    assert lines[0] == "i,j,bj"
    assert len(lines) == 1 + 12 * 11 // 2
    assert (out / "model.toml").exists()


def test_decimate_thread_count_does_not_change_bytes(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, DECIMATE)
    blobs = []
    for name, threads in (("t1", "1"), ("t2", "2")):
        monkeypatch.setenv("BELIEFMIX_THREADS", threads)
        out = tmp_path / name
        assert main(["decimate", "--config", cfg, "--out", str(out)]) == 0
        blobs.append((out / "decimation.csv").read_bytes())
    header = blobs[0].decode().splitlines()[0]
    assert header == "rho,R,R0,E,DKL,n_converged,n_runs"
    assert blobs[0] == blobs[1]
    manifest = (tmp_path / "t2" / "manifest.txt").read_text()
    assert "threads: 2" in manifest


def test_fixed_points_census_csv(tmp_path):
    cfg = write_cfg(tmp_path, CENSUS)
    out = tmp_path / "fp"
    assert main(["fixed-points", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "census.csv").read_text().splitlines()
    assert lines[0] == "alpha,recovered_frac,spurious_prob,distinct_spurious"
    assert len(lines) == 3


def test_mean_field_flags_only(tmp_path):
    out = tmp_path / "mf"
    code = main(["mean-field", "--eta", "0.04", "--beta", "1.25",
                 "--v", "0.15", "--rho-grid", "0.3,0.6", "--out", str(out)])
    assert code == 0
    lines = (out / "mf_dkl.csv").read_text().splitlines()
    assert lines[0] == "rho,dkl_mf"
    assert len(lines) == 3


def test_mean_field_requires_parameters(tmp_path, capsys):
    code = main(["mean-field", "--eta", "0.04", "--out", str(tmp_path / "x")])
    assert code == 1
    assert "mean-field needs --config or --beta" in capsys.readouterr().err


def test_phase_single_eta(tmp_path):
    out = tmp_path / "ph"
    assert main(["phase", "--eta-grid", "0.04", "--out", str(out)]) == 0
    lines = (out / "phase.csv").read_text().splitlines()
    assert lines[0] == "eta,Tg,TM"
    eta, tg, tm = map(float, lines[1].split(","))
    assert eta == 0.04
    assert abs(tg - 1.2) < 1e-3
    assert tm < tg


def test_optimize_trace_and_model(tmp_path):
    cfg = write_cfg(tmp_path, OPTIMIZE)
    out = tmp_path / "opt"
    assert main(["optimize", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == "generation,best,median,sigma"
    assert len(lines) >= 2
    assert (out / "model.toml").exists()


def test_compare_joins_on_shared_rho(tmp_path):
    cfg = write_cfg(tmp_path, DECIMATE)
    dec = tmp_path / "dec"
    assert main(["decimate", "--config", cfg, "--out", str(dec)]) == 0
    mf = tmp_path / "mfc"
    assert main(["mean-field", "--eta", "0.18", "--beta", "2.0", "--v", "0.15",
                 "--rho-grid", "0.4,0.9", "--out", str(mf)]) == 0
    out = tmp_path / "cmp"
    code = main(["compare", "--bp", str(dec / "decimation.csv"),
                 "--mf", str(mf / "mf_dkl.csv"), "--out", str(out)])
    assert code == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0] == "rho,dkl_bp,dkl_mf,gap"
    # only rho = 0.4 is shared between the two grids
    assert len(lines) == 2
    r, b, m, gap = map(float, lines[1].split(","))
    assert r == 0.4
    assert abs(gap - abs(b - m)) < 1e-15
    summary = (out / "summary.txt").read_text()
    assert "n_rows=1" in summary
    assert "max_gap=" in summary


def test_compare_disjoint_grids_is_usage_error(tmp_path, capsys):
    bp = tmp_path / "b.csv"
    bp.write_text("rho,R,R0,E,DKL,n_converged,n_runs\n0.1,1,1,0,0.2,4,4\n")
    mf = tmp_path / "m.csv"
    mf.write_text("rho,dkl_mf\n0.7,0.1\n")
    code = main(["compare", "--bp", str(bp), "--mf", str(mf),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "no shared rho values" in capsys.readouterr().err


def test_missing_seed_names_the_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[mixture]\nN = 8\nC = 2\nv = 0.15\n")
    code = main(["stats", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "missing config field: seed" in capsys.readouterr().err


def test_missing_config_file_is_usage_error(tmp_path, capsys):
    code = main(["stats", "--config", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "config file not found" in capsys.readouterr().err


def test_overfull_rho_grid_is_numerical_failure(tmp_path, capsys):
    body = BASE + "\n[model]\nalpha = 0.5\n\n[run]\nrho_grid = [0.95]\nn_seeds = 1\n"
    cfg = write_cfg(tmp_path, body)
    code = main(["decimate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "numerical failure" in capsys.readouterr().err


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "subcommand" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1
