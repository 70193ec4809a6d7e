import math

import numpy as np
import pytest

from rough_portfolio.models.noise import NoiseSpec
from rough_portfolio.services.families import (
    BUMP_C2,
    FAMILIES,
    FamilyError,
    bs_coefficients,
    get_family,
    local_vol_field,
    perturbation_norm,
    resolve_params,
)
from rough_portfolio.services.noise import noise_lift


@pytest.fixture
def lift():
    return noise_lift(NoiseSpec(master_level=6, seed=1))


class TestRegistry:
    def test_models(self):
        assert {f.model for f in FAMILIES.values()} == {"lv", "bs"}

    def test_unknown(self):
        with pytest.raises(FamilyError, match="Unknown coefficient family"):
            get_family("lv.cubic")

    def test_wrong_model(self):
        with pytest.raises(FamilyError, match="belongs to model"):
            get_family("bs.const", "lv")

    def test_resolve_overrides(self):
        params = resolve_params("lv.tanh", {"a": 0.3})
        assert params["a"] == 0.3
        assert params["mu"] == FAMILIES["lv.tanh"].defaults["mu"]

    def test_resolve_rejects_unknown(self):
        with pytest.raises(FamilyError, match="has no parameter 'amp'"):
            resolve_params("lv.const", {"amp": 1.0})

    def test_resolve_rejects_fractional_dim(self):
        with pytest.raises(FamilyError, match="dim"):
            resolve_params("bs.const", {"dim": 1.5})


class TestPerturbationNorm:
    def test_local_vol(self):
        assert perturbation_norm("lv.const") == pytest.approx(0.55 * BUMP_C2)

    def test_black_scholes(self):
        assert perturbation_norm("bs.const", {"dim": 2}) == pytest.approx(math.sqrt(2) * 0.55)

    def test_bump_c2(self):
        # sup|g| + sup|g'| + sup|g''| for g = exp(-x^2)
        assert BUMP_C2 == pytest.approx(1.0 + math.sqrt(2) * math.exp(-0.5) + 2.0, rel=1e-6)


class TestLocalVol:
    def test_jacobians_match_finite_differences(self):
        field = local_vol_field("lv.tanh", delta=0.25)
        t = np.zeros(5)
        x = np.linspace(-2, 2, 5)[:, None]
        h = 1e-6
        db = (field.b(t, x + h) - field.b(t, x - h)) / (2 * h)
        dsigma = (field.sigma(t, x + h) - field.sigma(t, x - h)) / (2 * h)
        np.testing.assert_allclose(field.db(t, x)[..., 1], db, atol=1e-8)
        np.testing.assert_allclose(field.dsigma(t, x)[..., 1], dsigma, atol=1e-8)
        assert np.all(field.db(t, x)[..., 0] == 0.0)

    def test_perturbation_shifts_drift(self):
        base = local_vol_field("lv.const")
        moved = local_vol_field("lv.const", delta=0.5)
        x = np.zeros((1, 1))
        assert moved.b(np.zeros(1), x)[0, 0] - base.b(np.zeros(1), x)[0, 0] == pytest.approx(0.25)

    def test_bound_is_finite(self):
        assert math.isfinite(local_vol_field("lv.tanh").bound)

    def test_vanishing_volatility(self):
        with pytest.raises(FamilyError, match="can reach zero"):
            local_vol_field("lv.const", {"vol": 0.01}, delta=1.0)

    def test_multi_dimensional(self):
        field = local_vol_field("lv.const", {"dim": 3})
        assert field.state_dim == 3
        assert field.sigma(np.zeros(2), np.zeros((2, 3))).shape == (2, 3, 3)


class TestBlackScholes:
    def test_const(self, lift):
        coeffs = bs_coefficients("bs.const", lift)
        assert coeffs.state_dim == 1
        assert np.all(coeffs.b.values == 0.1)

    def test_smooth_has_zero_derivative(self, lift):
        coeffs = bs_coefficients("bs.smooth", lift)
        assert np.all(coeffs.b.derivative == 0.0)
        assert coeffs.b.values[16, 0] == pytest.approx(0.15)

    def test_wdriven_derivative(self, lift):
        coeffs = bs_coefficients("bs.wdriven", lift)
        w = lift.values[:, 1]
        np.testing.assert_allclose(coeffs.b.derivative[:, 0, 1], 0.05 / np.cosh(w) ** 2)

    def test_delta_shift(self, lift):
        base = bs_coefficients("bs.const", lift)
        moved = bs_coefficients("bs.const", lift, delta=0.25)
        np.testing.assert_allclose(moved.b.values - base.b.values, 0.125)
        np.testing.assert_allclose(moved.sigma.values - base.sigma.values, 0.0125)

    def test_dimension_mismatch(self, lift):
        with pytest.raises(FamilyError, match="dim=2"):
            bs_coefficients("bs.const", lift, {"dim": 2})
