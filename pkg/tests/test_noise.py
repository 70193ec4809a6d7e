import numpy as np
import pytest

from rough_portfolio.models.noise import NoiseError, NoiseSpec
from rough_portfolio.models.paths import PartitionScheme
from rough_portfolio.services.noise import generate, master_times, noise_lift, rie_report


class TestNoiseSpec:
    def test_defaults(self):
        spec = NoiseSpec()
        assert spec.kind == "brownian"
        assert spec.size == 2**12 + 1

    def test_deterministic_prefix(self):
        assert NoiseSpec(kind="deterministic:SIN").kind == "sin"

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"kind": "levy"}, "Unknown noise kind"),
            ({"dimension": 0}, "dimension"),
            ({"horizon": 0.0}, "horizon"),
            ({"master_level": 21}, "master level"),
            ({"seed": -1}, "seed"),
        ],
    )
    def test_invalid(self, kwargs, message):
        with pytest.raises(NoiseError, match=message):
            NoiseSpec(**kwargs)

    def test_with_seed_and_level(self):
        spec = NoiseSpec(master_level=5).with_seed(9).with_level(7)
        assert (spec.seed, spec.master_level) == (9, 7)


class TestGenerate:
    def test_deterministic_across_runs(self):
        spec = NoiseSpec(dimension=2, master_level=10, seed=42)
        assert np.array_equal(generate(spec).values, generate(spec).values)

    def test_seeds_differ(self):
        a = generate(NoiseSpec(master_level=6, seed=1))
        b = generate(NoiseSpec(master_level=6, seed=2))
        assert not np.array_equal(a.values, b.values)

    def test_refinement_keeps_coarse_points(self):
        coarse = generate(NoiseSpec(master_level=7, seed=4))
        fine = generate(NoiseSpec(master_level=9, seed=4))
        assert np.array_equal(fine.values[::4], coarse.values)

    def test_starts_at_zero(self):
        path = generate(NoiseSpec(dimension=3, master_level=5))
        assert path.values.shape == (33, 3)
        assert np.all(path.values[0] == 0.0)

    def test_quadratic_variation_near_horizon(self):
        path = generate(NoiseSpec(horizon=2.0, master_level=14, seed=7))
        qv = np.sum(np.diff(path.values[:, 0]) ** 2)
        assert qv == pytest.approx(2.0, rel=0.1)

    def test_master_times(self):
        times = master_times(NoiseSpec(horizon=3.0, master_level=3))
        assert times[-1] == 3.0
        assert times[1] == pytest.approx(0.375)

    def test_closed_forms(self):
        times = master_times(NoiseSpec(master_level=4))
        assert np.all(generate(NoiseSpec(kind="zero", master_level=4)).values == 0.0)
        np.testing.assert_array_equal(generate(NoiseSpec(kind="identity", master_level=4)).values[:, 0], times)
        sin = generate(NoiseSpec(kind="sin", master_level=4)).values[:, 0]
        assert sin[4] == pytest.approx(1.0)


class TestLift:
    def test_noise_lift_is_time_augmented(self):
        lift = noise_lift(NoiseSpec(dimension=2, master_level=5))
        assert lift.dim == 3
        assert lift.noise_dim == 2

    def test_rie_report(self):
        spec = NoiseSpec(master_level=8, seed=1)
        report = rie_report(spec, PartitionScheme("dyadic"), 2.5, 6)
        assert report.levels == (1, 2, 3, 4, 5, 6)

    def test_rie_report_horizon_mismatch(self):
        with pytest.raises(NoiseError, match="horizon"):
            rie_report(NoiseSpec(master_level=4), PartitionScheme("dyadic", 2.0), 2.5, 2)
