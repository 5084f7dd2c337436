import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emplearn import simulate as sm
from emplearn.errors import InvalidParameterError, RelevanceError
from emplearn.estimate import (CovariateSpec, ExperienceEstimates, experience_profile, first_stage,
                               flatness_test, reduced_form, wald_at)
from emplearn.estimate.iv import Absorber, coefficient_paths
from emplearn.model import HIDDEN, TRANSPARENT, SkillPriceProfile


def short(params, T):
    return params.replace(skill_prices=SkillPriceProfile.constant(T), baseline=None)


def panel(ln_wage, S, D, **kw):
    ln_wage = np.asarray(ln_wage, dtype=float)
    if ln_wage.ndim == 1:
        ln_wage = ln_wage[:, None]
    return sm.Panel(np.arange(len(S)), ln_wage, np.asarray(S, float), np.asarray(D, np.int8), **kw)


def dense_2sls(y, S, D, groups):
    """Textbook 2SLS with explicit dummy columns."""
    cols = [np.ones(len(y))]
    for g in groups:
        for v in np.unique(g)[1:]:
            cols.append((g == v).astype(float))
    W = np.column_stack(cols)
    X = np.column_stack([S, W])
    Z = np.column_stack([D, W])
    Pz = Z @ np.linalg.lstsq(Z, X, rcond=None)[0]
    return np.linalg.lstsq(Pz, y, rcond=None)[0][0]


@pytest.fixture(scope="module")
def sim_hidden(calibrated):
    return sm.simulate(sm.SimulationConfig(n_workers=20_000, horizon=30, regime=HIDDEN, seed=3), calibrated)


class TestWald:
    def test_constant_wages(self):
        p = panel(np.full(4, 2.0), [10, 11, 10, 12], [0, 1, 0, 1])
        assert wald_at(p, 0) == pytest.approx(0.0, abs=1e-12)

    def test_two_groups(self):
        p = panel([1.0, 1.0, 1.2, 1.2], [10, 10, 11, 11], [0, 0, 1, 1])
        assert wald_at(p, 0) == pytest.approx(0.2, abs=1e-12)
        assert experience_profile(p, n_boot=0).b_hat[0] == pytest.approx(0.2, abs=1e-12)

    def test_ratio_of_reduced_form_to_first_stage(self, sim_hidden):
        fs = first_stage(sim_hidden)
        est = experience_profile(sim_hidden, n_boot=0)
        for t in (0, 7, 30):
            assert est.b_hat[t] == pytest.approx(reduced_form(sim_hidden, t) / fs.kappa_hat, abs=1e-10)

    def test_constant_shift_invariance(self, sim_hidden):
        a = experience_profile(sim_hidden, n_boot=0).b_hat
        moved = sm.Panel(sim_hidden.worker_id, sim_hidden.ln_wage + 3.7, sim_hidden.S, sim_hidden.D)
        assert np.allclose(experience_profile(moved, n_boot=0).b_hat, a, atol=1e-10)

    def test_group_shift_invariance_with_fe(self, calibrated):
        c = sm.SimulationConfig(n_workers=3000, horizon=4, regime=HIDDEN, seed=11)
        p = sm.simulate(c, short(calibrated, 4))
        cov = CovariateSpec(("group_cohort",))
        base = experience_profile(p, cov, n_boot=0).b_hat
        shift = np.random.default_rng(0).normal(size=c.n_cohorts)[p.group_cohort]
        moved = sm.Panel(p.worker_id, p.ln_wage + shift[:, None], p.S, p.D, group_cohort=p.group_cohort)
        assert np.allclose(experience_profile(moved, cov, n_boot=0).b_hat, base, atol=1e-9)

    def test_fixed_effects_match_dense_oracle(self, calibrated):
        p0 = calibrated.replace(group_wage_sd=0.1, group_schooling_sd=0.3)
        c = sm.SimulationConfig(n_workers=1500, horizon=3, regime=TRANSPARENT, seed=5, n_cohorts=4, n_regions=6)
        p = sm.simulate(c, short(p0, 3))
        cov = CovariateSpec(("group_cohort", "group_region"))
        est = experience_profile(p, cov, n_boot=0)
        for t in range(4):
            ref = dense_2sls(p.ln_wage[:, t], p.S, p.D, [p.group_cohort, p.group_region])
            assert est.b_hat[t] == pytest.approx(ref, abs=1e-9)

    def test_constant_instrument(self):
        p = panel(np.arange(4.0), [10, 11, 12, 13], [1, 1, 1, 1])
        with pytest.raises(RelevanceError):
            experience_profile(p, n_boot=0)
        with pytest.raises(RelevanceError):
            first_stage(p)

    def test_schooling_equals_twice_instrument(self):
        D = np.array([0, 1] * 20)
        fs = first_stage(panel(np.zeros(40), 2.0 * D, D))
        assert fs.kappa_hat == pytest.approx(2.0)

    def test_horizon_zero(self):
        p = panel([1.0, 1.1, 1.3, 1.2], [10, 10, 11, 11], [0, 0, 1, 1])
        est = experience_profile(p, n_boot=20)
        assert len(est) == 1 and est.t.tolist() == [0]

    def test_bad_t(self, sim_hidden):
        with pytest.raises(InvalidParameterError):
            wald_at(sim_hidden, 31)

    def test_n_boot_one_rejected(self, sim_hidden):
        with pytest.raises(InvalidParameterError):
            experience_profile(sim_hidden, n_boot=1)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.floats(-3, 3), st.floats(0.1, 3))
    def test_affine_wage_transform(self, y, a, c):
        D = np.array([0, 1, 0, 1, 1, 0, 1, 0])
        S = np.array([10, 12, 11, 13, 12, 9, 14, 10], float)
        p = panel(y, S, D)
        q = panel(a + c * np.asarray(y), S, D)
        assert wald_at(q, 0) == pytest.approx(c * wald_at(p, 0), abs=1e-9)


class TestAbsorber:
    def test_matches_projection(self):
        rng = np.random.default_rng(1)
        g1, g2 = rng.integers(0, 5, 200), rng.integers(0, 7, 200)
        X = rng.normal(size=(200, 2))
        w = rng.integers(0, 3, 200).astype(float)
        out = Absorber([g1, g2])(X, w)
        W = np.column_stack([np.ones(200)] + [(g1 == v) * 1.0 for v in range(1, 5)]
                            + [(g2 == v) * 1.0 for v in range(1, 7)])
        sw = np.sqrt(w)[:, None]
        coef = np.linalg.lstsq(W * sw, X * sw, rcond=None)[0]
        ref = X - W @ coef
        m = w > 0
        assert np.allclose(out[m], ref[m], atol=1e-9)

    def test_intercept_only(self):
        x = np.array([1.0, 2.0, 6.0])
        assert np.allclose(Absorber([])(x), x - 3.0)


class TestBootstrap:
    def test_reproducible(self, sim_hidden):
        sub = sim_hidden.subset(np.arange(2000))
        a = experience_profile(sub, n_boot=30, seed=9)
        b = experience_profile(sub, n_boot=30, seed=9)
        assert np.array_equal(a.draws, b.draws) and np.array_equal(a.se, b.se)

    def test_se_scale(self, sim_hidden):
        est = experience_profile(sim_hidden, n_boot=200, seed=1)
        # analytic Wald SE at t=0 via the delta method
        p = sim_hidden
        D = p.D.astype(float)
        y = p.ln_wage[:, 0]
        b = est.b_hat[0]
        u = (y - y.mean()) - b * (p.S - p.S.mean())
        d = D - D.mean()
        se = np.sqrt(np.sum(d ** 2 * u ** 2)) / abs(d @ p.S)
        assert est.se[0] == pytest.approx(se, rel=0.2)

    def test_multi_regressor_paths(self, calibrated):
        c = sm.SimulationConfig(n_workers=4000, horizon=2, regime=HIDDEN, seed=2)
        p = sm.simulate(c, short(calibrated.replace(z_noise_var=0.01), 2))
        coef, draws = coefficient_paths(p, estimator="ols", regressors=("S", "Z"), n_boot=5)
        X = np.column_stack([np.ones(len(p.S)), p.S, p.Z])
        ref = np.linalg.lstsq(X, p.ln_wage, rcond=None)[0][1:]
        assert np.allclose(coef, ref, atol=1e-10)
        assert draws.shape == (5, 2, 3)


class TestFlatness:
    def test_flat_profile_not_rejected_and_sloped_rejected(self):
        rng = np.random.default_rng(0)
        B, k = 400, 6
        t = np.arange(k)
        noise = rng.normal(scale=0.01, size=(B, k))
        flat = ExperienceEstimates(t, np.full(k, 0.1), np.full(k, 0.01), np.full(k, 100), draws=0.1 + noise)
        assert not flatness_test(flat).rejects(0.01)
        slope = 0.1 - 0.02 * t
        sl = ExperienceEstimates(t, slope, np.full(k, 0.01), np.full(k, 100), draws=slope + noise)
        res = flatness_test(sl)
        assert res.rejects(0.01) and res.df1 == k - 1 and res.df2 == B - (k - 1)

    def test_needs_draws(self):
        est = ExperienceEstimates.from_arrays([0, 1], [0.1, 0.1])
        with pytest.raises(InvalidParameterError):
            flatness_test(est)

    def test_size_under_null(self):
        # independent profiles with equal means: rejection rate near nominal
        rng = np.random.default_rng(4)
        rej = 0
        for _ in range(200):
            draws = rng.normal(size=(150, 4))
            b = rng.normal(size=4) * draws.std(axis=0)
            est = ExperienceEstimates(np.arange(4), b, np.ones(4), np.full(4, 1), draws=draws)
            rej += flatness_test(est).rejects(0.05)
        assert rej / 200 < 0.11
