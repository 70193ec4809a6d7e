import pytest

from rough_portfolio.models.noise import NoiseSpec
from rough_portfolio.models.report import ExperimentReport, RieReport, SewingReport
from rough_portfolio.models.sweep import ConfigError, SweepConfig


class TestSweepConfig:
    def test_defaults_valid(self):
        cfg = SweepConfig()
        assert cfg.experiment == "stability"
        assert cfg.noise == NoiseSpec()

    @pytest.mark.parametrize(
        "kwargs, key",
        [
            ({"experiment": "calibration"}, "experiment"),
            ({"model": "heston"}, "model"),
            ({"model": "bs"}, "family"),
            ({"seeds": (1, 1)}, "seeds"),
            ({"seeds": ()}, "seeds"),
            ({"s0": 0.0}, "s0"),
            ({"clock": "periodic:0"}, "clock"),
            ({"scheme": "random"}, "scheme"),
            ({"deltas": (3, 4, 5)}, "deltas"),
            ({"deltas": (3, 5, 4, 6)}, "deltas"),
            ({"p": 3.0, "p_prime": 3.5}, "p, p_prime"),
            ({"p_prime": 2.4}, "p, p_prime"),
            ({"q": 1.9}, "q"),
            ({"beta": 0.5}, "beta"),
            ({"epsilon": 1.0}, "epsilon"),
            ({"det_floor": 0.0}, "det_floor"),
            ({"sewing_constant": -1.0}, "sewing_constant"),
            ({"pair_cap": 1}, "pvar_cap, pair_cap"),
            ({"workers": 0}, "workers"),
        ],
    )
    def test_invalid(self, kwargs, key):
        with pytest.raises(ConfigError, match=f"^{key}"):
            SweepConfig(**kwargs)

    def test_levels_checked_for_discretization(self):
        with pytest.raises(ConfigError, match="^levels"):
            SweepConfig(experiment="discretization", levels=(6, 7, 8))

    def test_deltas_ignored_for_discretization(self):
        cfg = SweepConfig(experiment="discretization", deltas=())
        assert cfg.levels == (6, 7, 8, 9, 10, 11, 12)

    def test_periodic_clock(self):
        assert SweepConfig(clock="periodic:12").clock == "periodic:12"


class TestReports:
    def test_experiment_report_passed(self):
        report = ExperimentReport("x", acceptance={"a": True, "b": False})
        assert not report.passed
        assert report.summary()["passed"] is False

    def test_empty_acceptance_passes(self):
        assert ExperimentReport("x").passed

    def test_sewing_holds(self):
        assert SewingReport((0.0,), (1.0,), (0.1,), (0.2,)).holds
        assert not SewingReport((0.0,), (1.0,), (0.3,), (0.2,)).holds

    def test_rie_records(self):
        report = RieReport("dyadic", (1, 2), (0.5, 0.25), (1.0, 1.1), True)
        assert report.to_records()[1] == {"level": 2, "part2_sup_err": 0.25, "part3_sup_stat": 1.1}
