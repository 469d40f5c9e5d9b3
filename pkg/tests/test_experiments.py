import csv
import json
import textwrap

import pytest

from mbmatch.cli import main
from mbmatch.experiments import ConfigError, ExperimentConfig, dumps, execute, run
from mbmatch.sampling import Fixed, SampleSpec, sample_pair, write_csv
from mbmatch.selftest import CASES, replay, selftest


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


QUICK = """
kind = "beta_scan"
dim = 3
sizes = [20, 40, 80, 160]
trials = 6
seed = 1
csv = true
"""


def test_valid_config_round_trip(tmp_path):
    cfg = ExperimentConfig.load(write(tmp_path, QUICK))
    assert cfg.dims == [3] and cfg.trials == 6
    assert cfg.echo()["sizes"] == [20, 40, 80, 160]
    assert "workers" not in cfg.echo() and "depths" not in cfg.echo()


@pytest.mark.parametrize("body", [
    'kind = "beta_scan"\ndim = 3\nsizes = [20, 40, 80, 160]\ntrials = 1',
    'kind = "beta_scan"\ndim = 2\nsizes = [20, 40, 80, 160]\ntrials = 4',
    'kind = "beta_scan"\ndim = 3\nsizes = [20, 40, 30, 160]\ntrials = 4',
    'kind = "beta_scan"\ndim = 3\nsizes = [20, 40, 80]\ntrials = 4',
    'kind = "beta_scan"\ndim = 3\nsizes = [20, 40, 80, 160]\ntrials = 4\nfoo = 1',
    'kind = "sorting"\ntrials = 4',
    'kind = "anomalous_scaling"\ndims = [3]\nsizes = [64, 128]\ntrials = 4',
    'kind = "random_link"\nsizes = [4, 8]\ntrials = 4\ndistribution = "normal"',
    'kind = "decimation_audit"\ndim = 3\nsizes = [64]\ndepths = [11]\ntrials = 4',
    'kind = "subadditivity"\ndim = 3\nsizes = [64]\ntrials = 4',
    'kind = "concentration"\ndim = 3\nsizes = [100]\ntrials = 4\nt_grid = [0.0]',
    'kind = "beta_scan"\ndim = 3\nsizes = [20, 40, 80, 160]\ntrials = [4, 4]',
    'this is not toml',
])
def test_invalid_configs(tmp_path, body):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, body))


def test_cli_config_error_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    p = write(tmp_path, QUICK.replace("trials = 6", "trials = 1"))
    assert main(["run", str(p), "--output", str(out)]) == 2
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config_error"


def test_run_outputs_and_determinism(tmp_path):
    p = write(tmp_path, QUICK)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(p), "--output", str(a), "--workers", "1"])
    main(["run", str(p), "--output", str(b), "--workers", "3"])
    ra, rb = (a / "report.json").read_bytes(), (b / "report.json").read_bytes()
    assert ra == rb
    assert (a / "trials.csv").read_bytes() == (b / "trials.csv").read_bytes()
    rep = json.loads(ra)
    assert rep["results"]["by_dim"]["3"]["beta_hat"] > 0
    assert len(rep["results"]["by_dim"]["3"]["stabilization"]) == 4
    man = json.loads((a / "manifest.json").read_text())
    assert man["instances"] == 24 and man["config"]["workers"] == 1
    assert set(man["checks"]) == set(rep["checks"])
    assert all(v in ("pass", "fail", "skipped") for v in man["checks"].values())
    rows = list(csv.reader(open(a / "trials.csv")))
    assert rows[0] == ["N", "dim", "trial", "seed", "length"] and len(rows) == 25


def test_exit_status_follows_checks(tmp_path):
    p = write(tmp_path, QUICK)
    status = main(["run", str(p), "--output", str(tmp_path / "o")])
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert status == (0 if rep["passed"] else 1)
    assert rep["passed"] == all(v != "fail" for v in rep["checks"].values())


def test_seed_precedence(tmp_path, monkeypatch):
    body = QUICK.replace("seed = 1\n", "")
    monkeypatch.setenv("MBMATCH_SEED", "17")
    assert ExperimentConfig.load(write(tmp_path, body)).seed == 17
    assert ExperimentConfig.load(write(tmp_path, QUICK)).seed == 1
    cfg = ExperimentConfig.load(write(tmp_path, QUICK)).with_overrides(seed=5)
    assert cfg.seed == 5
    monkeypatch.setenv("MBMATCH_SEED", "x")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, body))


def test_override_validation():
    cfg = ExperimentConfig.from_dict({"kind": "random_link", "sizes": [2, 4], "trials": 5})
    with pytest.raises(ConfigError):
        cfg.with_overrides(trials=1)


@pytest.mark.parametrize("body", [
    'kind = "concentration"\ndim = 3\nsizes = [30]\ntrials = 20',
    'kind = "subadditivity"\ndim = 3\nsizes = [64]\nm_values = [2]\ntrials = 8\n'
    'poisson_lambdas = [10]\npoisson_trials = 100\ndepoissonization = [[3, 20]]',
    'kind = "decimation_audit"\ndims = [2, 3]\nsizes = [32]\ndepths = [1, 2]\nm_values = [3]\n'
    'trials = 4\ngrowth_sizes = [16, 32, 64, 128]\ngrowth_trials = 3',
    'kind = "anomalous_scaling"\ndims = [1, 2]\nsizes = [16, 32, 64, 160]\ntrials = 10',
    'kind = "random_link"\nsizes = [2, 4, 8]\ntrials = 200',
])
def test_every_kind_runs_deterministically(body):
    cfg = ExperimentConfig.from_dict(_toml(body))
    a, _ = execute(cfg.with_overrides(workers=1))
    b, _ = execute(cfg.with_overrides(workers=2))
    assert dumps(a) == dumps(b)
    assert a["checks"] and all(v in ("pass", "fail", "skipped") for v in a["checks"].values())


def _toml(text):
    from mbmatch.experiments import tomllib
    return tomllib.loads(text)


def test_decimation_audit_checks_pass():
    cfg = ExperimentConfig.from_dict(_toml(
        'kind = "decimation_audit"\ndim = 2\nsizes = [64]\ndepths = [1, 2, 3]\nm_values = [3]\ntrials = 5'))
    rep, _ = execute(cfg)
    assert rep["passed"]
    assert rep["results"]["d2.N64"]["recursive"]["3"]["instances"] == 5


def test_solve_and_decimate_commands(tmp_path, capsys):
    x, y = sample_pair(SampleSpec(2, Fixed(12), 3), SampleSpec(2, Fixed(9), 4))
    write_csv(x, tmp_path / "x.csv")
    write_csv(y, tmp_path / "y.csv")
    assert main(["solve", str(tmp_path / "x.csv"), str(tmp_path / "y.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["pairs"]) == 9 and len(out["unmatched_x"]) == 3
    assert main(["decimate", str(tmp_path / "x.csv"), str(tmp_path / "y.csv"), "--depth", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bounds"]["ok"] and out["decimation"]["unmatched"] == 3
    assert main(["solve", str(tmp_path / "x.csv"), str(tmp_path / "missing.csv")]) == 2


def test_selftest_passes_and_fault_is_caught():
    rep = selftest(seed=0)
    assert rep.passed and rep.wall_time_s < 60
    bad = selftest(seed=0, fault=True)
    assert bad.checks["heuristic_dominance"] == "pass"
    assert bad.checks["recursive_upper_bound"] == "fail"
    assert {k for k, v in bad.checks.items() if v == "fail"} == {"recursive_upper_bound"}
    s = bad.failures["recursive_upper_bound"]["examples"][0]["seed"]
    assert replay("recursive_upper_bound", s, fault=True) == replay("recursive_upper_bound", s, fault=True)
    assert replay("recursive_upper_bound", s, fault=True)[0] is False
    assert replay("recursive_upper_bound", s)[0] is True


def test_selftest_cli(capsys):
    assert main(["selftest", "--replay", "sort_1d:5"]) == 0
    assert main(["selftest", "--replay", "nope:5"]) == 2
    assert set(CASES) >= {"oracle_equivalence", "fit_recovery"}
