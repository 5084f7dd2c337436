import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emplearn import model
from emplearn import simulate as sm
from emplearn.errors import AssumptionRejectedError, InvalidParameterError
from emplearn.estimate import (ExperienceEstimates, experience_profile, partial_bounds,
                               partial_point_id)
from emplearn.estimate.partial import partial_point_id_transparent
from emplearn.model import theta

T = np.arange(31)


def profiles(b0, binf, kappa, rho, lam=None):
    lam = np.ones(31) if lam is None else lam
    th = theta(kappa, T)
    h = lam * (th * b0 + (1 - th) * binf)
    tr = lam * binf
    return h, tr, rho * tr + (1 - rho) * h


def est(b, se=None):
    return ExperienceEstimates.from_arrays(T, b, se)


class TestPointId:
    def test_noise_free_recovery(self):
        h, _, p = profiles(0.198, 0.055, 0.505, 0.4)
        res = partial_point_id(est(h), est(p))
        assert res.identified
        assert res.kappa_hat == pytest.approx(0.505, abs=1e-6)
        assert res.b0 == pytest.approx(0.198, abs=1e-6)
        assert res.b_inf == pytest.approx(0.055, abs=1e-6)
        assert res.rho_scaled_gap == pytest.approx(0.4 * 0.143, abs=1e-12)
        assert np.allclose(res.lambda_theta, theta(0.505, T), atol=1e-12)

    @settings(max_examples=25)
    @given(st.floats(0.1, 0.9), st.floats(0.1, 0.9))
    def test_recovery_across_rho_and_kappa(self, rho, kappa):
        h, _, p = profiles(0.2, 0.05, kappa, rho)
        res = partial_point_id(est(h), est(p))
        assert res.kappa_hat == pytest.approx(kappa, abs=1e-6)

    def test_rho_zero_unidentified(self):
        h, _, p = profiles(0.2, 0.05, 0.5, 0.0)
        res = partial_point_id(est(h), est(p))
        assert not res.identified and np.isnan(res.kappa_hat)

    def test_ordering_violation(self):
        h, _, p = profiles(0.2, 0.05, 0.5, 0.5)
        with pytest.raises(AssumptionRejectedError):
            partial_point_id(est(p), est(h))

    def test_small_violation_within_noise_not_rejected(self):
        h, _, _ = profiles(0.2, 0.05, 0.5, 0.0)
        p = h.copy()
        p[0] += 0.001
        res = partial_point_id(est(h, np.full(31, 0.01)), est(p, np.full(31, 0.01)))
        assert not res.identified

    def test_grid_mismatch(self):
        h, _, p = profiles(0.2, 0.05, 0.5, 0.5)
        with pytest.raises(InvalidParameterError):
            partial_point_id(est(h), ExperienceEstimates.from_arrays(T + 1, p))

    def test_transparent_variant(self):
        _, tr, p = profiles(0.2, 0.05, 0.3, 0.6)
        res = partial_point_id_transparent(est(tr), est(p))
        assert res.kappa_hat == pytest.approx(0.3, abs=1e-6)
        assert res.b_inf == pytest.approx(0.05, abs=1e-6)


class TestBounds:
    def test_noise_free_bounds(self):
        h, tr, p = profiles(0.2, 0.05, 0.5, 0.5)
        res = partial_bounds(est(p))
        assert np.all(res.lower_bound <= h + 1e-15)
        assert np.all(res.lower_bound >= tr - 1e-15)
        assert res.b_inf == pytest.approx(0.05, abs=1e-6)
        assert res.kappa_hat == pytest.approx(0.5, abs=1e-6)


@pytest.mark.slow
def test_simulated_partial_profile_matches_mixture(calibrated):
    c = sm.SimulationConfig(n_workers=100_000, horizon=30, regime="partial", rho=0.5, seed=12)
    e = experience_profile(sm.simulate(c, calibrated), n_boot=100, seed=1)
    truth = np.array([model.iv_plim(calibrated, t, "partial", 0.5) for t in T])
    assert np.all(np.abs(e.b_hat - truth) < 3.5 * e.se)
