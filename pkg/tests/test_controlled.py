import numpy as np
import pytest

from rough_portfolio.models.controlled_path import ControlledPath, ControlledPathError
from rough_portfolio.models.paths import PartitionScheme, SampledPath
from rough_portfolio.services import controlled as cs
from rough_portfolio.services.roughlift import rie_lift, time_augment


@pytest.fixture
def reference():
    """Time-augmented left-point lift of a scalar Gaussian walk on 2^8 cells."""
    rng = np.random.default_rng(5)
    times = PartitionScheme("dyadic").points(8)
    w = np.concatenate([[0.0], np.cumsum(rng.normal(scale=np.sqrt(times[1]), size=times.size - 1))])
    return time_augment(rie_lift(SampledPath(times, w)))


@pytest.fixture
def noise(reference):
    return cs.component(cs.from_rough_path(reference), 1)


class TestControlledPath:
    def test_derivative_shape_checked(self, reference):
        with pytest.raises(ControlledPathError, match="derivative shape"):
            ControlledPath(reference, np.zeros(reference.size), np.zeros((reference.size, 3)))

    def test_sample_count_checked(self, reference):
        with pytest.raises(ControlledPathError, match="samples"):
            ControlledPath(reference, np.zeros(3), np.zeros((3, 2)))

    def test_with_diagnostics_merges(self, noise):
        tagged = noise.with_diagnostics(a=1.0).with_diagnostics(b=2.0)
        assert dict(tagged.diagnostics) == {"a": 1.0, "b": 2.0}
        np.testing.assert_array_equal(tagged.values, noise.values)

    def test_reference_has_zero_remainder(self, reference):
        x = cs.from_rough_path(reference)
        idx = np.arange(reference.size - 1)
        np.testing.assert_allclose(x.remainder(idx, idx + 1), 0.0, atol=1e-15)
        np.testing.assert_allclose(x.remainder(0, reference.size - 1), 0.0, atol=1e-12)


class TestAlgebra:
    def test_leibniz(self, noise):
        sq = cs.product(noise, noise)
        np.testing.assert_allclose(sq.values, noise.values**2)
        np.testing.assert_allclose(sq.derivative[:, 1], 2 * noise.values)
        np.testing.assert_array_equal(sq.derivative[:, 0], 0.0)

    def test_product_subscripts(self, reference):
        a = cs.constant(reference, [[1.0, 2.0], [3.0, 4.0]])
        v = cs.constant(reference, [1.0, 1.0])
        out = cs.product(a, v, "ij,j->i")
        assert out.shape == (2,)
        np.testing.assert_allclose(out.values[0], [3.0, 7.0])

    def test_product_shape_mismatch(self, reference):
        a = cs.constant(reference, [1.0, 2.0])
        b = cs.constant(reference, [1.0, 2.0, 3.0])
        with pytest.raises(ControlledPathError, match="no elementwise product"):
            cs.product(a, b)

    def test_add_scale_concatenate(self, noise, reference):
        t = cs.clock(reference)
        both = cs.concatenate([noise, cs.scale(t, 2.0)])
        assert both.shape == (2,)
        np.testing.assert_allclose(both.values[:, 1], 2 * reference.times)
        total = cs.add(cs.component(both, 0), cs.component(both, 1))
        np.testing.assert_allclose(total.values, noise.values + 2 * reference.times)
        np.testing.assert_allclose(total.derivative[-1], [2.0, 1.0])

    def test_reshape(self, reference):
        flat = cs.constant(reference, [1.0, 2.0, 3.0, 4.0])
        assert cs.reshape(flat, (2, 2)).shape == (2, 2)

    def test_foreign_reference(self, noise):
        other = time_augment(rie_lift(SampledPath(noise.times, np.zeros(noise.size))))
        with pytest.raises(ControlledPathError, match="shared reference"):
            cs.add(noise, cs.component(cs.from_rough_path(other), 1))


class TestComposition:
    def test_exponential_remainder(self, noise):
        e = cs.compose_smooth(noise, cs.exponential())
        np.testing.assert_allclose(e.values, np.exp(noise.values))
        np.testing.assert_allclose(e.derivative[:, 1], np.exp(noise.values))
        s, t = 3, 40
        expected = np.exp(noise.values[t]) - np.exp(noise.values[s]) * (1 + noise.values[t] - noise.values[s])
        assert e.remainder(s, t) == pytest.approx(expected, rel=1e-12)

    def test_chain_rule(self, noise):
        e2 = cs.compose_smooth(noise, cs.chain(cs.square(), cs.exponential()))
        np.testing.assert_allclose(e2.values, np.exp(2 * noise.values))
        np.testing.assert_allclose(e2.derivative[:, 1], 2 * np.exp(2 * noise.values))

    def test_identity_map(self, reference, noise):
        x = cs.from_rough_path(reference)
        same = cs.compose_smooth(x, cs.identity_map())
        np.testing.assert_array_equal(same.values, x.values)
        np.testing.assert_array_equal(same.derivative, x.derivative)
        e = cs.compose_smooth(noise, cs.chain(cs.identity_map(), cs.exponential()))
        np.testing.assert_allclose(e.derivative, cs.compose_smooth(noise, cs.exponential()).derivative)

    def test_matrix_inverse(self, reference):
        a = cs.constant(reference, 2 * np.eye(2))
        inv = cs.compose_smooth(a, cs.matrix_inverse())
        np.testing.assert_allclose(inv.values[-1], 0.5 * np.eye(2))
        np.testing.assert_array_equal(inv.derivative, 0.0)

    def test_singular_matrix(self, reference):
        zero = cs.constant(reference, np.zeros((2, 2)))
        with pytest.raises(cs.SingularityError, match="matrix_inverse"):
            cs.compose_smooth(zero, cs.matrix_inverse())

    def test_reciprocal_floor_override(self, reference):
        small = cs.constant(reference, 1e-3)
        cs.compose_smooth(small, cs.reciprocal())
        with pytest.raises(cs.SingularityError, match="below floor"):
            cs.compose_smooth(small, cs.reciprocal(), floor=1e-2)


class TestIntegrals:
    def test_integral_of_noise_is_iterated_integral(self, noise, reference):
        integral = cs.rough_integral(noise, noise)
        np.testing.assert_allclose(integral.values, reference.iterated[:, 1, 1], atol=1e-12)
        np.testing.assert_allclose(integral.derivative[:, 1], noise.values)

    def test_associativity(self, noise, reference):
        y = cs.compose_smooth(noise, cs.exponential())
        f = cs.compose_smooth(noise, cs.square())
        check = cs.associativity_residual(y, f, noise)
        assert check.residual <= 1e-8 * check.scale

    def test_canonical_lift_of_reference(self, reference):
        lift = cs.canonical_lift(cs.from_rough_path(reference))
        np.testing.assert_allclose(lift.iterated, reference.iterated, atol=1e-12)

    def test_componentwise(self, reference):
        x = cs.from_rough_path(reference)
        out = cs.rough_integral(x, x, componentwise=True)
        assert out.shape == (2,)
        contracted = cs.rough_integral(x, x)
        np.testing.assert_allclose(out.values.sum(axis=1), contracted.values, atol=1e-12)

    def test_riemann_sum_freezes_integrand(self, noise):
        w = noise.values
        riemann = cs.riemann_sum_integral(noise, noise, PartitionScheme("dyadic"), 1)
        assert riemann.values.shape == (w.size, 1)
        np.testing.assert_array_equal(riemann.values[:129, 0], 0.0)
        assert riemann.values[-1, 0] == pytest.approx(w[128] * (w[-1] - w[128]))

    def test_controlled_rie_report(self, noise):
        report = cs.controlled_rie_report(noise, PartitionScheme("dyadic"), 4, 2.5)
        assert report.levels == (1, 2, 3, 4)
        assert all(np.isfinite(report.part3_sup_stat))

    def test_convergence_reaches_zero_at_master_level(self, noise):
        errors = cs.integral_convergence(noise, noise, PartitionScheme("dyadic"), [2, 4, 8])
        assert [n for n, _ in errors] == [2, 4, 8]
        assert errors[-1][1] <= 1e-12
        assert errors[0][1] > errors[-1][1]

    def test_sewing_report(self, noise):
        f = cs.compose_smooth(noise, cs.exponential())
        report = cs.sewing_report(f, noise, 2.5, intervals=8)
        assert len(report.errors) == 8
        assert report.starts[0] == 0.0
        assert report.ends[-1] == 1.0
        assert all(np.isfinite(report.bounds))

    def test_sewing_constant_integrand_is_exact(self, reference, noise):
        report = cs.sewing_report(cs.constant(reference, 3.0), noise, 2.5, intervals=4)
        assert max(report.errors) <= 1e-12


class TestNorms:
    def test_norm_of_constant(self, reference):
        assert cs.controlled_norm(cs.constant(reference, -3.0), 2.5) == pytest.approx(3.0)

    def test_distance_to_self(self, noise):
        assert cs.controlled_distance(noise, noise, 2.5) == 0.0

    def test_distance_shape_mismatch(self, reference, noise):
        with pytest.raises(ControlledPathError, match="shape mismatch"):
            cs.controlled_distance(noise, cs.constant(reference, [0.0, 0.0]), 2.5)

    def test_exponent_range(self, noise):
        with pytest.raises(ControlledPathError, match="2 <= p < 3"):
            cs.controlled_norm(noise, 1.5)
