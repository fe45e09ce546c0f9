import json

import pytest

from noisysvd import cli
from noisysvd.config import parse_config
from noisysvd.errors import ConfigError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_fills_defaults():
    cfg = parse_config("bound", "eps: 0.1\nn: 4\nk: 1\nsigma1: [1]\n")
    assert cfg["gamma"] == 1.0 and cfg["beta"] == 0.25 and cfg["sigma1"] == [1.0]


def test_parse_reports_field_and_line():
    with pytest.raises(ConfigError) as err:
        parse_config("bound", "eps: 0.1\nn: 4\nk: 1\nsigma1: [1]\nbeta: 0.6\n")
    msg = str(err.value)
    assert "line 5" in msg and "`beta`" in msg and "(0, 1/2)" in msg


@pytest.mark.parametrize("text, field", [
    ("eps: 0.1\nn: 4\nk: 1\nsigma1: [1]\nbogus: 1\n", "bogus"),
    ("eps: 0.1\nn: 4\nk: 1\n", "sigma1"),
    ("eps: 0.1\nn: 4\nk: 2\nsigma1: [1]\n", "sigma1"),
    ("eps: 0.1\nn: 4\nk: 4\nsigma1: [1, 1, 1, 1]\n", "k"),
    ("eps: x\nn: 4\nk: 1\nsigma1: [1]\n", "eps"),
    ("eps: 0.1\nn: 4.5\nk: 1\nsigma1: [1]\n", "n"),
    ("eps: 0.1\nn: 4\nk: 1\nsigma1: {a: 1}\n", "sigma1"),
])
def test_parse_errors_name_field(text, field):
    with pytest.raises(ConfigError) as err:
        parse_config("bound", text)
    assert err.value.field == field


def test_parse_rejects_non_mapping_and_bad_yaml():
    with pytest.raises(ConfigError):
        parse_config("plan", "- 1\n- 2\n")
    with pytest.raises(ConfigError) as err:
        parse_config("plan", "a: [1\n")
    assert err.value.line is not None


def test_overrides_win_and_are_validated():
    assert parse_config("classify", "seed: 1\n", {"seed": 9})["seed"] == 9
    with pytest.raises(ConfigError):
        parse_config("classify", "", {"seed": -1})


def test_classify_noise_exclusive():
    with pytest.raises(ConfigError):
        parse_config("classify", "N0: 0.1\nsnr_db: 3\n")


def test_verify_spectrum_order():
    with pytest.raises(ConfigError) as err:
        parse_config("verify", "n: 10\nk: 2\nspectrum: [1, 2]\neps: 0.01\n")
    assert err.value.field == "spectrum"


BOUND = "eps: 0.1\nn: 4\nk: 1\nsigma1: [1.0]\ngamma: 0\nbeta: 0.25\n"


def test_bound_command(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["bound", "--config", str(write(tmp_path, "b.yaml", BOUND)), "--out", str(out)]) == 0
    rep = json.loads((out / "bound_report.json").read_text())
    assert rep["e4"] == pytest.approx(0.18) and rep["valid"] is True
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "bound" and man["config"]["eps"] == 0.1
    assert "rhs=" in capsys.readouterr().out


def test_bound_precondition_exit(tmp_path):
    cfg = write(tmp_path, "b.yaml", "eps: 2\nn: 10\nk: 1\nsigma1: [1.0]\n")
    assert cli.main(["bound", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_PRECONDITION
    rep = json.loads((tmp_path / "o" / "bound_report.json").read_text())
    assert rep["rhs"] is None and rep["violated_conditions"]


def test_config_error_exit(tmp_path, capsys):
    cfg = write(tmp_path, "b.yaml", BOUND.replace("beta: 0.25", "beta: 0.7"))
    assert cli.main(["bound", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "`beta`" in err and "line 6" in err


def test_missing_config_file_exit(tmp_path):
    assert cli.main(["bound", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 1


VERIFY = "n: 20\nk: 2\nspectrum: [2, 1]\neps: 0.001\ntrials: 6\n"


def test_verify_outputs_are_deterministic(tmp_path):
    cfg = write(tmp_path, "v.yaml", VERIFY)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["verify", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["verify", "--config", str(cfg), "--out", str(b), "--jobs", "3"]) == 0
    for name in ("trials.csv", "summary.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = (a / "trials.csv").read_text().splitlines()
    assert len(rows) == 7
    summary = json.loads((a / "summary.json").read_text())
    assert summary["coverage"]["verdict"] == "SKIPPED_VACUOUS"


def test_verify_flags_override(tmp_path):
    cfg = write(tmp_path, "v.yaml", VERIFY)
    out = tmp_path / "o"
    cli.main(["verify", "--config", str(cfg), "--out", str(out), "--trials", "3", "--seed", "5",
              "--format", "csv"])
    assert len((out / "trials.csv").read_text().splitlines()) == 4
    assert not (out / "summary.json").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 5 and man["config"]["noise_seed"] == 5


def test_verify_coverage_fail_exit(tmp_path, monkeypatch):
    from noisysvd import montecarlo

    def always_fail(records, floor):
        return montecarlo.CoverageReport(0.0, "FAIL", floor, 0.0, len(records))

    monkeypatch.setattr(montecarlo, "coverage_report", always_fail)
    cfg = write(tmp_path, "v.yaml", VERIFY)
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_COVERAGE


def test_plan_mpsk(tmp_path, capsys):
    cfg = write(tmp_path, "p.yaml", "alpha: 0.2\n")
    assert cli.main(["plan", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "L ≥ 100" in capsys.readouterr().out
    assert json.loads((tmp_path / "plan.json").read_text())["min_L"] == 100


def test_plan_matrix_infeasible_still_succeeds(tmp_path, capsys):
    cfg = write(tmp_path, "p.yaml", "eps: 0.9\nn: 100\n")
    assert cli.main(["plan", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "INFEASIBLE" in capsys.readouterr().out
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert plan["verdict"] == "INFEASIBLE" and plan["margin"] > 1


def test_classify(tmp_path):
    cfg = write(tmp_path, "c.yaml", "M_order: 8\nsnr_db: 15\nN_sym: 120\n")
    assert cli.main(["classify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "points.csv").read_text().splitlines()
    assert lines[0] == "x,y,true_theta_index,assigned_mode" and len(lines) == 121
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["M_hat"] == 8 and s["feasibility"] == "FEASIBLE" and s["predicted_radius"] > 0


def test_classify_invalid_scenario_exit(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", "L: 20\n")
    assert cli.main(["classify", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "divides" in capsys.readouterr().err


def test_sweep(tmp_path):
    cfg = write(tmp_path, "s.yaml", "snr_grid: [10, -10]\norders: [2]\nN_sym: 60\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--trials", "2"]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "M_order,snr_db,runs,successes,rate"
    assert lines[1].startswith("2,10.0,2,2,")


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "noisysvd", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"


def test_bound_zero_eps_and_check_vector_replay(tmp_path):
    from noisysvd import bounds

    cfg = write(tmp_path, "z.yaml", "eps: 0\nn: 4\nk: 1\nsigma1: [1.0]\n")
    assert cli.main(["bound", "--config", str(cfg), "--out", str(tmp_path / "z")]) == 0
    assert json.loads((tmp_path / "z" / "bound_report.json").read_text())["rhs"] == 0.0
    cfg = write(tmp_path, "b.yaml", BOUND)
    cli.main(["bound", "--config", str(cfg), "--out", str(tmp_path / "b")])
    rep = json.loads((tmp_path / "b" / "bound_report.json").read_text())
    ref = bounds.theorem_bound(bounds.BoundInputs(eps=0.1, n=4, k=1, sigma1=[1.0], gamma=0.0,
                                                  beta=0.25)).to_dict()
    assert rep == json.loads(json.dumps(ref))


def test_verify_single_zero_eps_trial(tmp_path):
    cfg = write(tmp_path, "v.yaml", "n: 10\nk: 1\nspectrum: [1]\neps: 0\ntrials: 1\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "trials.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].split(",")[3] == "true"


def test_verify_documented_scenario(tmp_path):
    cfg = write(tmp_path, "v.yaml", "n: 200\nk: 2\nspectrum: [2, 1]\neps: 0.001\nbeta: 0.45\n"
                                    "gamma: 1.0\ntrials: 100\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path), "--jobs", "4"]) == 0
    cov = json.loads((tmp_path / "summary.json").read_text())["coverage"]
    assert cov["verdict"] == "PASS" and cov["coverage"] >= cov["prob_floor"] - cov["slack"]


def test_plan_zero_eps(tmp_path):
    assert cli.main(["plan", "--out", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert plan["verdict"] == "FEASIBLE" and plan["margin"] == 0.0


def test_classify_replay_and_noiseless(tmp_path):
    cfg = write(tmp_path, "c.yaml", "M_order: 4\nsnr_db: 10\nf_c: 1.0e9\nT: 1.0e-7\nL: 21\nN_sym: 200\n")
    assert cli.main(["classify", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["predicted_radius"] == pytest.approx(2.45 * (2 * s["N0"] * 0.99 / 4200) ** 0.5)
    assert s["feasibility"] in ("FEASIBLE", "INFEASIBLE")
    assert cli.main(["classify", "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["M_hat"] == 4


def test_sweep_nine_rows(tmp_path):
    cfg = write(tmp_path, "s.yaml", "snr_grid: [10, 0, -5]\nruns: 10\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 10


def test_unsigned_exponents_parse_as_numbers():
    cfg = parse_config("classify", "f_c: 1e9\nT: 1.0e-7\n")
    assert cfg["f_c"] == 1e9 and cfg["T"] == 1e-7
    with pytest.raises(ConfigError):
        parse_config("classify", "f_c: fast\n")
    with pytest.raises(ConfigError):
        parse_config("classify", "f_c: .inf\n")
