import numpy as np
import pytest

from rough_portfolio.models.noise import NoiseSpec
from rough_portfolio.models.sweep import SweepConfig
from rough_portfolio.services import lab
from rough_portfolio.services.report_service import dumps_report


def stability_config(**kwargs):
    defaults = {
        "experiment": "stability",
        "model": "lv",
        "family": "lv.const",
        "noise": NoiseSpec(master_level=8),
        "deltas": (3, 4, 5, 6),
    }
    return SweepConfig(**{**defaults, **kwargs})


def discretization_config(**kwargs):
    defaults = {
        "experiment": "discretization",
        "model": "lv",
        "family": "lv.tanh",
        "noise": NoiseSpec(master_level=8),
        "levels": (2, 3, 4, 5),
    }
    return SweepConfig(**{**defaults, **kwargs})


@pytest.fixture(scope="module")
def small_selftest():
    return lab.selftest(seed=0, ito_seeds=2, ito_level=10, algebra_level=8, consistency_level=8, merton_level=8)


class TestRateFit:
    def test_halving_errors(self):
        fit = lab.rate_fit([1, 2, 4], [1.0, 0.5, 0.25], min_points=3)
        assert fit.slope == pytest.approx(-1.0)
        assert fit.half_width == pytest.approx(0.0, abs=1e-12)

    def test_constant_errors(self):
        fit = lab.rate_fit([1, 2, 4, 8], [0.3] * 4)
        assert fit.slope == 0.0
        assert fit.half_width == 0.0

    def test_square_root_rate(self):
        x = [4, 16, 64, 256]
        fit = lab.rate_fit(x, [2.0 * v**-0.5 for v in x])
        assert fit.slope == pytest.approx(-0.5)
        assert fit.intercept == pytest.approx(1.0)

    def test_too_few_points(self):
        with pytest.raises(lab.RateFitError, match="at least 4"):
            lab.rate_fit([1, 2, 4], [1.0, 0.5, 0.25])

    def test_non_positive(self):
        with pytest.raises(lab.RateFitError, match="positive"):
            lab.rate_fit([1, 2, 4, 8], [1.0, 0.0, 0.5, 0.1])

    def test_duplicate_x(self):
        with pytest.raises(lab.RateFitError, match="distinct"):
            lab.rate_fit([1, 2, 2, 8], [1.0, 0.5, 0.4, 0.1])


class TestTheory:
    def test_uniform_exponent(self):
        r = 1 - 2.5 / 2.9
        assert lab.theoretical_exponent("uniform", 2.5, 2.9, 1.5, 0.55, 0.1) == pytest.approx(0.25 * r)

    def test_dyadic_exponent(self):
        r = 1 - 2.5 / 2.9
        assert lab.theoretical_exponent("dyadic", 2.5, 2.9, 1.5, 0.55, 0.1) == pytest.approx(r / 3)

    def test_unknown_kind(self):
        with pytest.raises(lab.SweepError, match="Unknown partition kind"):
            lab.theoretical_exponent("random", 2.5, 2.9, 1.5, 0.55, 0.1)

    @pytest.mark.parametrize(
        "slope, half_width, verdict",
        [
            (-0.01, 0.001, "bound violated"),
            (-1.0, 0.1, "faster than bound"),
            (-0.03, 0.01, "consistent"),
        ],
    )
    def test_classify_slope(self, slope, half_width, verdict):
        assert lab.classify_slope(slope, half_width, 0.03) == verdict


class TestMakeClock:
    def test_kinds(self):
        times = np.linspace(0, 1, 9)
        assert lab.make_clock("terminal", times).total == 1.0
        assert lab.make_clock("linear", times).jump_times == ()
        assert lab.make_clock("periodic:4", times).total == 4.0

    @pytest.mark.parametrize("text", ["weekly", "periodic:x", "terminal:2"])
    def test_unknown(self, text):
        with pytest.raises(lab.SweepError, match="Unknown consumption clock"):
            lab.make_clock(text, np.linspace(0, 1, 9))


class TestStability:
    def test_zero_perturbation_is_exact(self):
        case = lab.StabilityCase.build(stability_config(), 0)
        assert case.errors(0.0) == dict.fromkeys(lab.ERROR_METRICS, 0.0)

    def test_bs_zero_perturbation_is_exact(self):
        case = lab.StabilityCase.build(stability_config(model="bs", family="bs.const"), 1)
        assert all(v == 0.0 for v in case.errors(0.0).values())
        assert "inverse_price_sup" in case.constants

    def test_constants_carry_sewing_bound(self):
        loose = lab.StabilityCase.build(stability_config(sewing_constant=10.0), 0).constants["sewing"]
        tight = lab.StabilityCase.build(stability_config(sewing_constant=2.5), 0).constants["sewing"]
        assert loose["constant"] == 10.0
        assert tight["constant"] == 2.5
        assert loose["max_bound"] == pytest.approx(4 * tight["max_bound"])
        assert loose["max_error"] == tight["max_error"]
        assert isinstance(loose["holds"], bool)

    def test_sewing_constant_reaches_report(self, mocker):
        sewing = mocker.spy(lab.controlled, "sewing_report")
        lab.StabilityCase.build(stability_config(sewing_constant=7.0), 0)
        assert sewing.call_args.kwargs["sewing_constant"] == 7.0

    def test_errors_shrink_with_delta(self):
        case = lab.StabilityCase.build(stability_config(), 0)
        coarse, fine = case.errors(2.0**-3), case.errors(2.0**-6)
        for metric in lab.STABILITY_CHECKED:
            assert fine[metric] < coarse[metric]

    def test_sweep_report(self):
        report = lab.stability_sweep(stability_config(seeds=(0, 1)))
        assert report.name == "stability"
        assert len(report.points) == 8
        assert [row["delta_or_n"] for row in report.points[:4]] == [0.125, 0.0625, 0.03125, 0.015625]
        assert set(report.slopes) == {"seed=0", "seed=1"}
        fit = report.slopes["seed=0"]["err_phi_sup"]
        assert fit["status"] == "fitted"
        assert 0.75 <= fit["slope"] <= 1.25
        assert len(report.metadata["config_hash"]) == 64
        assert report.theory["expected_slope"] == 1.0
        assert "M" in report.constants["seed=0"]

    def test_wrong_experiment(self):
        with pytest.raises(lab.SweepError, match="discretization config"):
            lab.stability_sweep(discretization_config())


class TestDiscretization:
    def test_check_refinement_gap(self):
        cfg = discretization_config(levels=(3, 4, 5, 6))
        with pytest.raises(lab.InsufficientRefinementError, match="finer"):
            lab.check_refinement(cfg)

    def test_check_refinement_divisibility(self):
        cfg = discretization_config(scheme="uniform", levels=(3, 4, 5, 6))
        with pytest.raises(lab.InsufficientRefinementError, match="does not divide"):
            lab.check_refinement(cfg)

    def test_check_refinement_ok(self):
        assert lab.check_refinement(discretization_config()).kind == "dyadic"

    def test_sweep_report(self):
        report = lab.discretization_sweep(discretization_config())
        assert [row["delta_or_n"] for row in report.points] == [2, 3, 4, 5]
        row = report.points[0]
        assert row["err_W_sup"] > 0
        assert row["err_lift_sup"] > 0
        assert report.theory["bound_slope"] == pytest.approx(-report.theory["exponent"])
        assert report.theory["smooth_window"] is None
        assert set(report.acceptance) == set(lab.DISCRETIZATION_CHECKED)
        for fit in report.slopes["seed=0"].values():
            if fit["status"] == "fitted":
                assert fit["verdict"] in {"bound violated", "faster than bound", "consistent"}

    def test_constants_carry_sewing_bound(self):
        report = lab.discretization_sweep(discretization_config(sewing_constant=4.0))
        assert report.constants["seed=0"]["sewing"]["constant"] == 4.0

    def test_errors_shrink_with_level(self):
        report = lab.discretization_sweep(discretization_config())
        errors = [row["err_kappa_sup"] for row in report.points]
        assert errors[-1] < errors[0]

    def test_bs_rows_carry_coefficient_gaps(self):
        report = lab.discretization_sweep(discretization_config(model="bs", family="bs.const"))
        assert all(row["coefficient_gap"] == 0.0 for row in report.points)

    def test_smooth_noise_window(self):
        report = lab.discretization_sweep(discretization_config(noise=NoiseSpec(kind="identity", master_level=8)))
        assert report.theory["smooth_window"] == [-1.15, -0.85]

    def test_run_experiment_dispatch(self, mocker):
        sweep = mocker.patch("rough_portfolio.services.lab.discretization_sweep")
        cfg = discretization_config()
        lab.run_experiment(cfg)
        sweep.assert_called_once_with(cfg)


class TestFitMetric:
    def test_exact(self):
        assert lab._fit_metric([1, 2, 4, 8], [0.0] * 4)["status"] == "exact"

    def test_degenerate(self):
        assert lab._fit_metric([1, 2, 4, 8], [1.0, 0.0, 0.5, 0.1])["status"] == "degenerate"

    def test_local_slopes(self):
        fit = lab._fit_metric([1, 2, 4, 8], [1.0, 0.5, 0.25, 0.125])
        assert fit["local_slopes"] == pytest.approx([-1.0, -1.0, -1.0])


class TestSelftest:
    def test_check_names(self, small_selftest):
        names = [check["check"] for check in small_selftest.points]
        assert names == [
            "chen_residual",
            "product_remainder",
            "associativity",
            "polarization",
            "pvar_brute_force",
            "two_param_brute_force",
            "ito_calibration",
            "merton_fraction",
            "merton_kappa",
            "bs_stability_oracle",
            "exponential_representation",
            "euler_vs_staircase_rde",
            "master_level_discretization",
            "noise_determinism",
            "noise_refinement",
        ]

    @pytest.mark.parametrize(
        "name",
        [
            "chen_residual",
            "product_remainder",
            "associativity",
            "polarization",
            "pvar_brute_force",
            "two_param_brute_force",
            "merton_fraction",
            "merton_kappa",
            "bs_stability_oracle",
            "exponential_representation",
            "euler_vs_staircase_rde",
            "master_level_discretization",
            "noise_determinism",
            "noise_refinement",
        ],
    )
    def test_deterministic_checks_pass(self, small_selftest, name):
        assert small_selftest.acceptance[name]

    def test_reproducible(self, small_selftest):
        again = lab.selftest(seed=0, ito_seeds=2, ito_level=10, algebra_level=8, consistency_level=8, merton_level=8)
        assert dumps_report(again) == dumps_report(small_selftest)
        assert again.points == small_selftest.points
