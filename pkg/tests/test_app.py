import json
from pathlib import Path

import pandas as pd
import pytest

from rough_portfolio import app
from rough_portfolio.models.report import ExperimentReport

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fake_report():
    return ExperimentReport(
        "stability",
        points=[{"seed": 0, "delta_or_n": 0.125, "err_phi_sup": 0.5}],
        acceptance={"err_phi_sup": True},
    )


class TestParser:
    def test_requires_command(self):
        with pytest.raises(SystemExit):
            app.build_parser().parse_args([])

    def test_repeated_set(self):
        args = app.build_parser().parse_args(["stability", "--set", "p=2.4", "--set", "seeds=1,2"])
        assert args.overrides == ["p=2.4", "seeds=1,2"]
        assert args.experiment == "stability"

    def test_discretize_sets_experiment(self):
        assert app.build_parser().parse_args(["discretize"]).experiment == "discretization"


class TestPathCommands:
    def test_gen_noise_to_file(self, tmp_path, capsys):
        target = tmp_path / "w.csv"
        assert app.run(["gen-noise", "--level", "4", "--d", "2", "--seed", "3", "--out", str(target)]) == 0
        frame = pd.read_csv(target)
        assert list(frame.columns) == ["t", "x1", "x2"]
        assert len(frame) == 17
        assert str(target) in capsys.readouterr().out

    def test_gen_noise_to_directory(self, tmp_path):
        assert app.run(["gen-noise", "--level", "3", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "noise.csv").exists()

    def test_lift_with_diagnostic(self, tmp_path):
        code = app.run(["lift", "--level", "8", "--n-max", "4", "--out", str(tmp_path)])
        assert code in (app.EXIT_OK, app.EXIT_ACCEPTANCE)
        assert (tmp_path / "lift.csv").exists()
        rie = pd.read_csv(tmp_path / "rie.csv")
        assert list(rie["level"]) == [1, 2, 3, 4]

    def test_solve(self, tmp_path):
        assert app.run(["solve", "--level", "6", "--out", str(tmp_path)]) == 0
        frame = pd.read_csv(tmp_path / "price.csv")
        assert list(frame.columns) == ["t", "S1"]
        assert frame.loc[0, "S1"] == 1.0

    def test_portfolio_bs(self, tmp_path):
        code = app.run(
            ["portfolio", "--level", "6", "--set", "model=bs", "--set", "family=bs.const", "--out", str(tmp_path)]
        )
        assert code == 0
        frame = pd.read_csv(tmp_path / "portfolio.csv")
        assert list(frame.columns) == ["t", "phi0", "phi1", "kappa", "V", "Vhat"]
        assert frame.loc[0, "Vhat"] == pytest.approx(1.0)


class TestExperimentCommands:
    def test_stability_writes_report(self, tmp_path, mocker, fake_report, capsys):
        run = mocker.patch("rough_portfolio.app.lab.run_experiment", return_value=fake_report)
        assert app.run(["stability", "--set", "seeds=0,1", "--out", str(tmp_path)]) == app.EXIT_OK
        cfg = run.call_args.args[0]
        assert cfg.experiment == "stability"
        assert cfg.seeds == (0, 1)
        assert json.loads((tmp_path / "report.json").read_text())["passed"] is True
        assert "stability: passed" in capsys.readouterr().out

    def test_config_file(self, tmp_path, mocker, fake_report):
        run = mocker.patch("rough_portfolio.app.lab.run_experiment", return_value=fake_report)
        app.run(["discretize", "--config", str(FIXTURES / "sample_sweep.cfg"), "--set", "levels=2..5", "--out", str(tmp_path)])
        cfg = run.call_args.args[0]
        assert cfg.experiment == "discretization"
        assert cfg.family == "lv.tanh"
        assert cfg.levels == (2, 3, 4, 5)

    def test_acceptance_failure(self, tmp_path, mocker, fake_report, capsys):
        fake_report.acceptance["err_phi_sup"] = False
        mocker.patch("rough_portfolio.app.lab.run_experiment", return_value=fake_report)
        assert app.run(["stability", "--out", str(tmp_path)]) == app.EXIT_ACCEPTANCE
        assert "stability: FAILED" in capsys.readouterr().out

    def test_selftest_quick(self, tmp_path, mocker, fake_report):
        selftest = mocker.patch("rough_portfolio.app.lab.selftest", return_value=fake_report)
        app.run(["selftest", "--quick", "--seed", "4", "--out", str(tmp_path)])
        selftest.assert_called_once_with(4, 20, ito_level=12, algebra_level=10, consistency_level=10, merton_level=12)


class TestErrors:
    def test_config_error_exit_code(self, tmp_path, capsys):
        assert app.run(["stability", "--set", "model=heston", "--out", str(tmp_path)]) == app.EXIT_ERROR
        assert "rough-portfolio: error: model" in capsys.readouterr().err

    def test_malformed_override(self, tmp_path, capsys):
        assert app.run(["stability", "--set", "oops", "--out", str(tmp_path)]) == app.EXIT_ERROR
        assert "key=value" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert app.run(["stability", "--config", str(tmp_path / "nope.cfg")]) == app.EXIT_ERROR
