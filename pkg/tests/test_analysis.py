import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from emplearn.analysis import (IrrInput, decompose_fit, decomposition_frame, irr,
                               signaling_decomposition, theta_table)
from emplearn.errors import InvalidParameterError, NoSolutionError, NumericalError
from emplearn.estimate import ExperienceEstimates, fit_mixing
from emplearn.model import theta

T = np.arange(31)
PRIVATE = theta(0.505, T) * 0.198 + (1 - theta(0.505, T)) * 0.055


def pv_oracle(r, b, w):
    t = np.arange(len(b))
    return sum(w[i] * (1 + b[i]) / (1 + r) ** (i + 1) - w[i] / (1 + r) ** i for i in t)


def oracle_irr(b, w):
    return optimize.brentq(lambda r: pv_oracle(r, b, w), -0.5, 0.9, xtol=1e-15)


class TestIrr:
    @settings(max_examples=40)
    @given(st.floats(-0.5, 0.9), st.lists(st.floats(0.1, 10), min_size=41, max_size=41))
    def test_flat_profile(self, b, w):
        assert irr(IrrInput((b,), tuple(w), 40)) == pytest.approx(b, abs=1e-10)

    def test_zero_profile(self):
        assert irr(IrrInput((0.0,) * 31, T_irr=40)) == pytest.approx(0.0, abs=1e-12)

    def test_decreasing_profile(self):
        r = irr(IrrInput(tuple(PRIVATE), T_irr=40, b_inf=0.055))
        b = np.r_[PRIVATE, np.full(10, 0.055)]
        assert r == pytest.approx(oracle_irr(b, np.ones(41)), abs=1e-10)
        assert 0.055 < r < 0.198

    def test_hump_shaped_baseline(self):
        w = 1 + 0.05 * np.arange(41) - 0.001 * np.arange(41) ** 2
        r = irr(IrrInput(tuple(PRIVATE), tuple(w), 40, 0.055))
        b = np.r_[PRIVATE, np.full(10, 0.055)]
        assert r == pytest.approx(oracle_irr(b, w), abs=1e-10)

    @settings(max_examples=30)
    @given(st.integers(0, 30), st.floats(0.001, 0.1))
    def test_monotone_in_profile(self, t, bump):
        base = irr(IrrInput(tuple(PRIVATE), T_irr=40))
        b = PRIVATE.copy()
        b[t] += bump
        assert irr(IrrInput(tuple(b), T_irr=40)) > base

    def test_no_root(self):
        with pytest.raises(NoSolutionError):
            irr(IrrInput((5.0,) * 3, T_irr=40))

    def test_bad_inputs(self):
        with pytest.raises(InvalidParameterError):
            IrrInput((0.1, np.nan))
        with pytest.raises(InvalidParameterError):
            IrrInput((0.1,), (1.0, -1.0), 1)
        with pytest.raises(InvalidParameterError):
            IrrInput((0.1,) * 31, T_irr=20)


class TestSignaling:
    def test_identical_profiles(self):
        s = signaling_decomposition(PRIVATE, PRIVATE)
        assert s.signaling_share == 0.0

    def test_calibrated_share(self):
        s = signaling_decomposition(PRIVATE, np.full(31, 0.055), private_limit=0.055, social_limit=0.055)
        assert s.social_return == pytest.approx(0.055, abs=1e-10)
        r_priv = oracle_irr(np.r_[PRIVATE, np.full(10, 0.055)], np.ones(41))
        assert s.signaling_share == pytest.approx(1 - 0.055 / r_priv, abs=1e-9)
        assert 0 < s.signaling_share < 1

    def test_negative_share(self):
        s = signaling_decomposition(np.full(31, 0.03), np.full(31, 0.05))
        assert s.signaling_share < 0

    def test_zero_private_irr(self):
        with pytest.raises(NumericalError):
            signaling_decomposition(np.zeros(31), np.full(31, 0.05))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidParameterError):
            signaling_decomposition(np.zeros(31), np.zeros(30))


class TestTables:
    def test_theta_table_values(self):
        tab = theta_table(0.505)
        assert [round(tab[t], 3) for t in (5, 10, 15)] == [0.164, 0.089, 0.061]
        assert round(theta_table(0.532, (10,))[10], 3) == 0.081
        assert theta_table(0.0, (1, 7, 30)) == {1: 1.0, 7: 1.0, 30: 1.0}

    def test_decompose_fit(self):
        fit = fit_mixing(ExperienceEstimates.from_arrays(T, PRIVATE))
        dec = decompose_fit(fit, 40)
        df = decomposition_frame(dec)
        assert len(df) == 41
        assert np.allclose(df["private"][:31], PRIVATE, atol=1e-8)
        assert np.allclose(df["social"], fit.b_inf)
        assert np.allclose(df["gap"], df["private"] - df["social"])

    def test_decompose_unidentified(self):
        fit = fit_mixing(ExperienceEstimates.from_arrays(T, np.full(31, 0.1)))
        with pytest.raises(InvalidParameterError):
            decompose_fit(fit)
