import json
import os

import numpy as np
import pytest

from covprior import cli
from covprior.errors import ConfigError

FAST = ["--warmup", "100", "--samples", "50", "--chains", "2"]


def _read(path):
    with open(path) as fh:
        return fh.read()


def _listing(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


def test_prior_sample_deterministic(tmp_path):
    args = ["prior-sample", "--prior", "iw", "--d", "2", "--n", "1000", "--seed", "7"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = _read(tmp_path / "a" / "prior_samples.csv").splitlines()
    b = _read(tmp_path / "b" / "prior_samples.csv").splitlines()
    assert a[1:] == b[1:]
    assert a[1] == "prior,draw,sigma1,sigma2,rho12"
    assert len(a) == 2 + 1000
    assert cli.main(["prior-sample", "--prior", "iw", "--n", "5", "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert _read(tmp_path / "c" / "prior_samples.csv").splitlines()[2] != a[2]


def test_first_line_records_resolved_config(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["prior-sample", "--priors", "siw,bmm", "--d", "3", "--n", "4", "--seed", "11", "--out", str(out)]) == 0
    first = _read(out / "prior_samples.csv").splitlines()[0]
    assert first.startswith("# covprior ")
    cfg = json.loads(first[len("# covprior "):])
    assert cfg == {"command": "prior-sample", "seed": 11, "out": str(out), "priors": "siw,bmmmu", "d": 3, "n": 4,
                   "mode": "prior_study", "verbose": False}
    # the recorded configuration reproduces the file
    again = tmp_path / "again"
    assert cli.main(["prior-sample", "--priors", cfg["priors"], "--d", "3", "--n", "4", "--seed", "11",
                     "--mode", cfg["mode"], "--out", str(again)]) == 0
    assert _read(again / "prior_samples.csv").splitlines()[1:] == _read(out / "prior_samples.csv").splitlines()[1:]


def test_simulate_row_accounting(tmp_path):
    out = tmp_path / "sim"
    code = cli.main(["simulate", "--d", "2", "--n", "10", "--sigma", "0.01", "--rho", "0.99", "--priors", "iw,bmm",
                     "--seed", "1", "--out", str(out)] + FAST)
    assert code == 0
    lines = _read(out / "simulation_results.csv").splitlines()
    assert lines[0].startswith("# covprior ")
    assert len(lines) == 2 + 2 * 5 * 2
    rows = [ln.split(",") for ln in lines[2:]]
    assert {r[5] for r in rows} == {"iw", "bmmmu"}
    assert sorted({r[4] for r in rows}) == ["0", "1", "2", "3", "4"]
    bias = _read(out / "bias_summary.csv").splitlines()
    assert len(bias) == 2 + 2


def test_fit_outputs(tmp_path):
    rng = np.random.default_rng(0)
    data = tmp_path / "y.csv"
    data.write_text("a,b\n" + "\n".join(f"{x:.6f},{y:.6f}" for x, y in rng.normal(size=(30, 2))) + "\n")
    out = tmp_path / "fit"
    assert cli.main(["fit", "--data", str(data), "--header", "--priors", "iw,siw", "--out", str(out)] + FAST) == 0
    assert _listing(out) == ["draws_iw.csv", "draws_siw.csv", "fit_iw.json", "fit_siw.json"]
    body = _read(out / "fit_siw.json").splitlines()
    assert body[0].startswith("# covprior ")
    rep = json.loads("\n".join(body[1:]))
    assert rep["spec"]["kind"] == "siw" and rep["config"]["num_chains"] == 2
    draws = _read(out / "draws_iw.csv").splitlines()
    assert draws[1].startswith("chain,iter,sigma1,sigma2,rho12") and len(draws) == 2 + 2 * 50


def test_config_file_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"seed": 5, "n": 3, "d": 4}))
    cfg = cli.resolve(["prior-sample", "--config", str(conf), "--n", "9"])
    assert (cfg.seed, cfg.options["n"], cfg.options["d"]) == (5, 9, 4)
    assert cfg.options["priors"] == "iw,siw,hiwht,bmmmu" and cfg.out == "covprior_out"
    conf.write_text(json.dumps({"warmup": 12, "samples": 34}))
    cfg = cli.resolve(["fit", "--config", str(conf), "--data", "x.csv", "--samples", "56"])
    assert cfg.chain.warmup_iters == 12 and cfg.chain.sample_iters == 56 and cfg.chain.num_chains == 3


def test_zero_config_uses_defaults():
    cfg = cli.resolve(["simulate"])
    grid = cli.build_grid(cfg.options)
    assert grid.dims[2].n == (10, 50, 250) and grid.dims[2].replicates == 5
    assert cfg.chain.warmup_iters == 1000 and cfg.chain.sample_iters == 1000 and cfg.chain.num_chains == 3
    assert set(cli.build_grid(cli.resolve(["simulate", "--full"]).options).dims) == {2, 10}


def test_unknown_config_key_rejected(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"sede": 1}))
    with pytest.raises(ConfigError):
        cli.resolve(["prior-sample", "--config", str(conf)])
    assert cli.main(["prior-sample", "--config", str(conf), "--out", str(tmp_path / "o")]) == 1
    assert "unknown config keys" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["prior-sample", "--prior", "lkj"],
        ["prior-sample", "--d", "1"],
        ["prior-sample", "--n", "abc"],
        ["fit"],
        ["birds"],
        ["simulate", "--rho", "1.5"],
        ["nonsense"],
        ["simulate", "--jobs", "0"],
        ["fit", "--data", "/nonexistent/file.csv"],
    ],
)
def test_invalid_input_exits_1(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path / "o")] if argv != ["nonsense"] else argv) == 1
    assert capsys.readouterr().err.strip()


def test_runtime_failure_exits_2(tmp_path, monkeypatch, capsys):
    data = tmp_path / "y.csv"
    data.write_text("1,2\n3,1\n0,1\n")

    def boom(*a, **k):
        raise RuntimeError("sampler exploded")

    monkeypatch.setattr(cli, "nuts_fit", boom)
    assert cli.main(["fit", "--data", str(data), "--out", str(tmp_path / "o")]) == 2
    assert "sampler exploded" in capsys.readouterr().err


def test_simulate_failed_cells_exit_2(tmp_path, monkeypatch):
    from covprior import simulation

    def boom(*a, **k):
        raise FloatingPointError("bad cell")

    monkeypatch.setattr(simulation, "nuts_fit", boom)
    out = tmp_path / "s"
    code = cli.main(["simulate", "--n", "10", "--sigma", "1", "--rho", "0", "--replicates", "1", "--priors", "iw",
                     "--out", str(out)] + FAST)
    assert code == 2
    assert "bad cell" in _read(out / "failed_cells.csv")


def test_birds_synth(tmp_path):
    out = tmp_path / "b"
    code = cli.main(["birds", "--synth", "--priors", "iw", "--responses", "mean", "--mode", "joint",
                     "--out", str(out)] + FAST)
    assert code == 0
    lines = _read(out / "bird_correlations.csv").splitlines()
    assert lines[1].startswith("response,mode,species_a")
    assert len(lines) == 2 + 45
    counts = _read(out / "bird_counts.csv").splitlines()
    assert counts[0].startswith("# covprior ") and len(counts) == 2 + 19


def test_no_writes_outside_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["prior-sample", "--n", "3", "--out", "here"]) == 0
    assert cli.main(["simulate", "--n", "10", "--sigma", "1", "--rho", "0", "--replicates", "1", "--priors", "bmm",
                     "--out", "here"] + FAST) == 0
    assert os.listdir(tmp_path) == ["here"]
    assert _listing(tmp_path / "here") == ["bias_summary.csv", "prior_samples.csv", "simulation_results.csv"]
    od = cli.OutputDir(tmp_path / "here", "x")
    with pytest.raises(ConfigError):
        od.path("../escape.csv")
    with pytest.raises(ConfigError):
        od.path("/etc/passwd")


def test_check_quick_writes_report(tmp_path, monkeypatch):
    from covprior import checks

    monkeypatch.setattr(checks, "run_checks",
                        lambda seed, quick, progress: [progress(checks.CheckResult("dummy", True, "ok")) or
                                                       checks.CheckResult("dummy", True, "ok")])
    out = tmp_path / "chk"
    assert cli.main(["check", "--out", str(out)]) == 0
    assert _read(out / "check_report.txt").splitlines()[1] == "PASS dummy: ok"


def test_check_clean_build_exits_0(tmp_path):
    out = tmp_path / "chk"
    assert cli.main(["check", "--out", str(out)]) == 0
    report = _read(out / "check_report.txt").splitlines()
    assert len(report) == 1 + 13 and all(ln.startswith("PASS") for ln in report[1:])


def test_grid_overrides_recorded_as_numbers(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"rho": [0.0, 0.5], "n": "10,50"}))
    cfg = cli.resolve(["simulate", "--config", str(conf), "--sigma", "0.01,1"])
    assert (cfg.options["n"], cfg.options["sigma"], cfg.options["rho"]) == ([10, 50], [0.01, 1.0], [0.0, 0.5])
    g = cli.build_grid(cfg.options).dims[2]
    assert (g.n, g.sigma, g.rho) == ((10, 50), (0.01, 1.0), (0.0, 0.5))
    with pytest.raises(ConfigError):
        cli.resolve(["simulate", "--n", "ten"])
