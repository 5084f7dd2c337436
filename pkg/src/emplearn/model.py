"""Closed-form primitives of the employer-learning wage model.

Log productivity of worker i at experience t is

    psi_it = lam_t * (beta_ws*S + beta_wq*Q + A + eps_it) + H(t)

and the wage is expected productivity given what employers know: schooling,
the employer-observed correlate Q, the average of past output signals
xi = A + eps and, when the instrument is transparent, the instrument D.
Beliefs about A update as a normal-normal (Kalman) filter whose weight on
the schooling-based prior after t signals is

    theta_t = (1 - kappa) / (1 + (t - 1) * kappa).

The generative structure behind the population moments is

    D ~ Bernoulli(p), independent of (v, A~, Q~)
    S = o + first_stage*D + v
    Q = delta_QS*S + Q~
    A = delta_AS*S + delta_AD*D + A~

with (v, A~, Q~) jointly normal. Employers' prior mean is the linear
projection of A on their conditioning set; that is the exact conditional
expectation when D is observed, and the best linear predictor otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateModelError, InvalidParameterError, RangeError

HIDDEN = "hidden"
TRANSPARENT = "transparent"
PARTIAL = "partial"
REGIMES = (HIDDEN, TRANSPARENT, PARTIAL)


def kappa(sigma0_sq, sigma_eps_sq):
    """Speed of learning sigma0^2 / (sigma0^2 + sigma_eps^2)."""
    if not sigma_eps_sq > 0:
        raise InvalidParameterError(f"sigma_eps_sq must be positive, got {sigma_eps_sq}")
    if sigma0_sq < 0:
        raise InvalidParameterError(f"sigma0_sq must be nonnegative, got {sigma0_sq}")
    return sigma0_sq / (sigma0_sq + sigma_eps_sq)


def theta(kappa, t):
    """Weight on the schooling-based prior after ``t`` output signals.

    Vectorised over ``t``. ``theta(kappa, 0) == 1`` for every kappa,
    including kappa = 1 (no signal has arrived yet).
    """
    k = float(kappa)
    if not 0.0 <= k <= 1.0:
        raise InvalidParameterError(f"kappa must lie in [0, 1], got {kappa}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidParameterError("experience t must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t_arr == 0, 1.0, (1.0 - k) / (1.0 + (t_arr - 1.0) * k))
    return float(out) if out.ndim == 0 else out


def posterior_ability(prior_mean, signal_mean, t, kappa):
    """Posterior mean of ability: theta_t * prior + (1 - theta_t) * mean signal."""
    if np.any(np.asarray(t) > 0) and signal_mean is None:
        raise InvalidParameterError("signal_mean is required when t > 0")
    w = theta(kappa, t)
    if signal_mean is None:
        return np.asarray(prior_mean, dtype=float) * 1.0 if np.ndim(prior_mean) else float(prior_mean)
    return w * np.asarray(prior_mean, dtype=float) + (1.0 - w) * np.asarray(signal_mean, dtype=float)


@dataclass(frozen=True)
class LearningParams:
    sigma0_sq: float
    sigma_eps_sq: float

    def __post_init__(self):
        # validates both variances
        kappa(self.sigma0_sq, self.sigma_eps_sq)

    @property
    def kappa(self):
        return kappa(self.sigma0_sq, self.sigma_eps_sq)

    def theta(self, t):
        return theta(self.kappa, t)


def posterior_variance(learning, t, lam=1.0):
    """Return ``(Var(A | info_t), v_t)`` with v_t = lam^2 (Var(A | info_t) + sigma_eps^2).

    A degenerate prior (sigma0^2 = 0) has zero posterior variance.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidParameterError("experience t must be nonnegative")
    if learning.sigma0_sq == 0:
        post = np.zeros_like(t_arr)
    else:
        post = 1.0 / (1.0 / learning.sigma0_sq + t_arr / learning.sigma_eps_sq)
    v = np.asarray(lam, dtype=float) ** 2 * (post + learning.sigma_eps_sq)
    if post.ndim == 0 and np.ndim(v) == 0:
        return float(post), float(v)
    return post, v


@dataclass(frozen=True)
class SkillPriceProfile:
    """Experience-specific skill prices lam_0..lam_T with lam_0 = 1."""

    lambdas: tuple

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if len(lam) == 0:
            raise InvalidParameterError("skill price profile must have at least one entry")
        if lam[0] != 1.0:
            raise InvalidParameterError("lambda_0 must equal 1 (location normalisation)")
        if any(x < 0 or not np.isfinite(x) for x in lam):
            raise InvalidParameterError("skill prices must be finite and nonnegative")

    @classmethod
    def constant(cls, horizon):
        return cls((1.0,) * (horizon + 1))

    @classmethod
    def linear(cls, horizon, slope):
        return cls(tuple(1.0 + slope * t for t in range(horizon + 1)))

    @property
    def horizon(self):
        return len(self.lambdas) - 1

    def as_array(self):
        return np.asarray(self.lambdas)

    def __getitem__(self, t):
        return self.lambdas[t]

    def scaled(self, c):
        """All lambdas times ``c`` (drops the lam_0 = 1 check, used for scaling checks)."""
        obj = object.__new__(SkillPriceProfile)
        object.__setattr__(obj, "lambdas", tuple(c * x for x in self.lambdas))
        return obj


@dataclass(frozen=True)
class ExperienceBaseline:
    """Common experience profile H(t); optionally adds v_t / 2 to wages."""

    h: tuple
    include_variance_term: bool = False

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        object.__setattr__(self, "h", h)
        if not all(np.isfinite(h)):
            raise InvalidParameterError("baseline H(t) must be finite")

    @classmethod
    def zeros(cls, horizon, include_variance_term=False):
        return cls((0.0,) * (horizon + 1), include_variance_term)

    @classmethod
    def polynomial(cls, horizon, linear=0.0, quadratic=0.0, include_variance_term=False):
        return cls(tuple(linear * t + quadratic * t * t for t in range(horizon + 1)),
                   include_variance_term)


@dataclass(frozen=True)
class ConditionalPrior:
    """Employers' t = 0 projection of A on their information."""

    intercept: float
    slope_s: float
    slope_q: float
    slope_d: float
    residual_var: float
    regime: str = HIDDEN

    def mean(self, S, Q=None, D=None):
        m = self.intercept + self.slope_s * np.asarray(S, dtype=float)
        if Q is not None and self.slope_q != 0.0:
            m = m + self.slope_q * np.asarray(Q, dtype=float)
        if D is not None and self.slope_d != 0.0:
            m = m + self.slope_d * np.asarray(D, dtype=float)
        return m


@dataclass(frozen=True)
class StructuralParams:
    """All primitives of the data-generating process.

    The Q block (employer-observed correlate) is active iff ``var_qtilde > 0``.
    ``z_noise_var`` switches on a researcher-only correlate Z = A + noise.
    Group shifts only exist to exercise fixed-effect partialling.
    """

    beta_ws: float = 0.04
    delta_AS: float = 0.015
    intercept: float = 10.0
    first_stage: float = 0.237
    sigma_v_sq: float = 0.25
    p: float = 0.5
    cov_v_atilde: float = 0.0
    var_atilde: float = 0.01
    sigma_eps_sq: float = 0.01
    beta_wq: float = 0.0
    delta_QS: float = 0.0
    var_qtilde: float = 0.0
    cov_v_qtilde: float = 0.0
    cov_atilde_qtilde: float = 0.0
    delta_AD: float = 0.0
    z_noise_var: float | None = None
    group_wage_sd: float = 0.0
    group_schooling_sd: float = 0.0
    skill_prices: SkillPriceProfile = field(default_factory=lambda: SkillPriceProfile.constant(30))
    baseline: ExperienceBaseline | None = None

    def __post_init__(self):
        if self.baseline is None:
            object.__setattr__(self, "baseline", ExperienceBaseline.zeros(self.horizon))
        if len(self.baseline.h) != len(self.skill_prices.lambdas):
            raise InvalidParameterError("baseline and skill price profile lengths differ")
        if self.first_stage == 0:
            raise InvalidParameterError("first_stage must be nonzero (instrument relevance)")
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError("instrument share p must lie in (0, 1)")
        if not self.sigma_v_sq > 0:
            raise InvalidParameterError("sigma_v_sq must be positive")
        if self.var_atilde < 0 or self.var_qtilde < 0:
            raise InvalidParameterError("variances must be nonnegative")
        if not self.sigma_eps_sq > 0:
            raise InvalidParameterError("sigma_eps_sq must be positive")
        if not self.q_enabled and (self.beta_wq != 0 or self.delta_QS != 0
                                   or self.cov_v_qtilde != 0 or self.cov_atilde_qtilde != 0):
            raise InvalidParameterError("Q parameters set but var_qtilde == 0 (Q disabled)")
        if self.z_noise_var is not None and self.z_noise_var < 0:
            raise InvalidParameterError("z_noise_var must be nonnegative")
        if self.group_wage_sd < 0 or self.group_schooling_sd < 0:
            raise InvalidParameterError("group shift sds must be nonnegative")
        eig = np.linalg.eigvalsh(self.draw_cov())
        if eig.min() < -1e-12 * max(1.0, eig.max()):
            raise InvalidParameterError("covariance of (v, A~, Q~) is not positive semidefinite")

    # -- derived structure -------------------------------------------------

    @property
    def horizon(self):
        return self.skill_prices.horizon

    @property
    def q_enabled(self):
        return self.var_qtilde > 0

    @property
    def var_v_total(self):
        # two grouping dimensions, each with its own schooling shift
        return self.sigma_v_sq + 2.0 * self.group_schooling_sd ** 2

    def residual_cov(self):
        """Covariance of (v, A~[, Q~])."""
        c = [[self.var_v_total, self.cov_v_atilde], [self.cov_v_atilde, self.var_atilde]]
        if self.q_enabled:
            c = [[self.var_v_total, self.cov_v_atilde, self.cov_v_qtilde],
                 [self.cov_v_atilde, self.var_atilde, self.cov_atilde_qtilde],
                 [self.cov_v_qtilde, self.cov_atilde_qtilde, self.var_qtilde]]
        return np.asarray(c, dtype=float)

    def draw_cov(self):
        """Covariance of the individual-level draws (group shifts excluded)."""
        c = self.residual_cov()
        c[0, 0] = self.sigma_v_sq
        return c

    def replace(self, **changes):
        return replace(self, **changes)

    def observable_moments(self):
        """Means and covariance of (S, Q, D, A) as an affine map of (D, v, A~, Q~)."""
        row_s = np.array([self.first_stage, 1.0, 0.0, 0.0])
        row_q = self.delta_QS * row_s + np.array([0.0, 0.0, 0.0, 1.0])
        row_d = np.array([1.0, 0.0, 0.0, 0.0])
        row_a = self.delta_AS * row_s + np.array([self.delta_AD, 0.0, 1.0, 0.0])
        M = np.vstack([row_s, row_q, row_d, row_a])
        const = np.array([self.intercept, self.delta_QS * self.intercept, 0.0,
                          self.delta_AS * self.intercept])
        mu_u = np.array([self.p, 0.0, 0.0, 0.0])
        cov_u = np.zeros((4, 4))
        cov_u[0, 0] = self.p * (1.0 - self.p)
        rc = self.residual_cov()
        k = rc.shape[0]
        cov_u[1:1 + k, 1:1 + k] = rc
        return const + M @ mu_u, M @ cov_u @ M.T

    def conditioning_index(self, regime):
        idx = [0]
        if self.q_enabled:
            idx.append(1)
        if regime == TRANSPARENT:
            idx.append(2)
        elif regime != HIDDEN:
            raise InvalidParameterError(f"employer information is defined for hidden or transparent, got {regime!r}")
        return idx

    def learning(self, regime=HIDDEN):
        pr = conditional_prior(self, regime)
        return LearningParams(pr.residual_var, self.sigma_eps_sq)

    def kappa(self, regime=HIDDEN):
        return self.learning(regime).kappa

    @classmethod
    def calibrated(cls, kappa_target=0.505, initial_return=0.198, limit_return=0.055, **kw):
        """Solve for (cov_v_atilde, sigma_eps_sq, beta_ws) hitting hidden-regime targets.

        With lambda_0 = 1 and no Q block, the initial hidden-IV return is
        limit + (phi_AS - delta_AS) and the gap is cov(A~, v) / var(S) plus
        a quality term. ``kappa_target`` pins sigma_eps^2 through the
        hidden-regime residual variance.
        """
        if not 0.0 < kappa_target < 1.0:
            raise InvalidParameterError("kappa_target must lie in (0, 1)")
        kw = dict(kw)
        if kw.get("var_qtilde", 0.0) > 0:
            raise InvalidParameterError("calibration assumes the Q block is disabled")
        base = cls(**{**kw, "cov_v_atilde": 0.0})
        var_s = base.first_stage ** 2 * base.p * (1 - base.p) + base.var_v_total
        quality = base.delta_AD * base.first_stage * base.p * (1 - base.p) / var_s
        gap = initial_return - limit_return
        cov_va = (gap - quality) * var_s
        beta_ws = limit_return - base.delta_AS
        trial = cls(**{**kw, "cov_v_atilde": cov_va, "beta_ws": beta_ws})
        sigma0_sq = conditional_prior(trial, HIDDEN).residual_var
        if sigma0_sq <= 0:
            raise InvalidParameterError("calibration leaves no residual ability variance")
        sigma_eps_sq = sigma0_sq * (1.0 - kappa_target) / kappa_target
        return cls(**{**kw, "cov_v_atilde": cov_va, "beta_ws": beta_ws,
                      "sigma_eps_sq": sigma_eps_sq})


def conditional_prior(params, regime=HIDDEN):
    """Projection of A on employers' t = 0 information under ``regime``."""
    if regime == TRANSPARENT and params.first_stage == 0:
        raise DegenerateModelError("transparent prior requires a relevant instrument")
    mu, cov = params.observable_moments()
    idx = params.conditioning_index(regime)
    a = 3
    scc = cov[np.ix_(idx, idx)]
    sca = cov[idx, a]
    if np.linalg.cond(scc) > 1e12:
        raise DegenerateModelError("singular conditioning covariance")
    slopes = np.linalg.solve(scc, sca)
    intercept = mu[a] - slopes @ mu[idx]
    resid = cov[a, a] - sca @ slopes
    resid = max(float(resid), 0.0)
    named = dict(zip(idx, slopes))
    return ConditionalPrior(
        intercept=float(intercept),
        slope_s=float(named.get(0, 0.0)),
        slope_q=float(named.get(1, 0.0)),
        slope_d=float(named.get(2, 0.0)),
        residual_var=resid,
        regime=regime,
    )


def _check_t(params, t):
    if not 0 <= t <= params.horizon or int(t) != t:
        raise RangeError(f"experience {t} outside horizon 0..{params.horizon}")
    return int(t)


def log_productivity(S, A, Q, eps, t, params):
    t = _check_t(params, t)
    lam = params.skill_prices[t]
    q = 0.0 if Q is None else params.beta_wq * np.asarray(Q, dtype=float)
    return lam * (params.beta_ws * np.asarray(S, dtype=float) + q + np.asarray(A, dtype=float)
                  + np.asarray(eps, dtype=float)) + params.baseline.h[t]


def wage_offset(params, t, learning):
    """H~(t): H(t) plus v_t / 2 when the variance term is switched on."""
    h = params.baseline.h[t]
    if params.baseline.include_variance_term:
        _, v = posterior_variance(learning, t, params.skill_prices[t])
        h = h + 0.5 * v
    return h


def wage_from_beliefs(S, Q, prior_mean, signal_mean, t, params, learning):
    """ln W given the prior mean and the average of ``t`` past signals."""
    lam = params.skill_prices[t]
    q = 0.0 if Q is None else params.beta_wq * np.asarray(Q, dtype=float)
    belief = posterior_ability(prior_mean, signal_mean if t > 0 else None, t, learning.kappa)
    return lam * (params.beta_ws * np.asarray(S, dtype=float) + q + belief) + wage_offset(params, t, learning)


def log_wage(S, Q, D, signal_history, t, params, regime=HIDDEN):
    """Wage of a worker (or an array of workers) after ``t`` output signals.

    ``signal_history`` has the signals along its last axis and exactly ``t``
    entries there. Under the hidden regime D never enters.
    """
    if regime not in (HIDDEN, TRANSPARENT):
        raise InvalidParameterError("resolve each worker to hidden or transparent before computing wages")
    t = _check_t(params, t)
    hist = np.asarray(signal_history, dtype=float)
    n_sig = 0 if hist.size == 0 and hist.ndim <= 1 else hist.shape[-1]
    if n_sig != t:
        raise InvalidParameterError(f"signal history has {n_sig} entries, expected {t}")
    prior = conditional_prior(params, regime)
    learning = LearningParams(prior.residual_var, params.sigma_eps_sq)
    pm = prior.mean(S, Q if params.q_enabled else None, D if regime == TRANSPARENT else None)
    sig_mean = hist.mean(axis=-1) if t > 0 else None
    return wage_from_beliefs(S, Q if params.q_enabled else None, pm, sig_mean, t, params, learning)


def social_return(params, t):
    t = _check_t(params, t)
    return params.skill_prices[t] * (params.beta_ws + params.beta_wq * params.delta_QS + params.delta_AS)


def adjustment_term(params):
    """phi_AS + phi_AQ * delta_QS - delta_AS under the hidden-regime prior."""
    pr = conditional_prior(params, HIDDEN)
    return pr.slope_s + pr.slope_q * params.delta_QS - params.delta_AS


def private_return(params, t):
    t = _check_t(params, t)
    k = params.kappa(HIDDEN)
    return social_return(params, t) + theta(k, t) * params.skill_prices[t] * adjustment_term(params)


def _regime_numerator(params, t, regime):
    """d E[ln W_t] / d D for workers whose exposure type is ``regime``."""
    pr = conditional_prior(params, regime)
    k = kappa(pr.residual_var, params.sigma_eps_sq)
    th = theta(k, t)
    fs = params.first_stage
    d_s, d_q, d_d = fs, params.delta_QS * fs, 1.0
    d_a = params.delta_AS * fs + params.delta_AD
    d_prior = pr.slope_s * d_s + pr.slope_q * d_q + pr.slope_d * d_d
    lam = params.skill_prices[t]
    return lam * (params.beta_ws * d_s + params.beta_wq * d_q + th * d_prior + (1 - th) * d_a)


def iv_plim(params, t, regime=HIDDEN, rho=None):
    """Probability limit of the per-experience Wald estimator.

    ``regime='partial'`` mixes transparent (share ``rho``) and hidden types.
    """
    t = _check_t(params, t)
    if regime == PARTIAL:
        if rho is None or not 0 <= rho <= 1:
            raise InvalidParameterError("partial regime needs rho in [0, 1]")
        num = rho * _regime_numerator(params, t, TRANSPARENT) + (1 - rho) * _regime_numerator(params, t, HIDDEN)
    else:
        num = _regime_numerator(params, t, regime)
    return num / params.first_stage


def ols_plim(params, t, regime=HIDDEN):
    """Probability limit of the OLS slope of ln W_t on S alone."""
    t = _check_t(params, t)
    mu, cov = params.observable_moments()
    pr = conditional_prior(params, regime)
    k = kappa(pr.residual_var, params.sigma_eps_sq)
    th = theta(k, t)
    c_s = cov[0]
    cov_prior_s = pr.slope_s * c_s[0] + pr.slope_q * c_s[1] + pr.slope_d * c_s[2]
    lam = params.skill_prices[t]
    cov_w_s = lam * (params.beta_ws * c_s[0] + params.beta_wq * c_s[1] + th * cov_prior_s + (1 - th) * c_s[3])
    return cov_w_s / c_s[0]


@dataclass(frozen=True)
class ReturnsRecord:
    t: int
    social: float
    private: float
    signaling_gap: float
    theta: float


@dataclass(frozen=True)
class ReturnsDecomposition:
    records: tuple

    @property
    def t(self):
        return np.array([r.t for r in self.records])

    @property
    def private(self):
        return np.array([r.private for r in self.records])

    @property
    def social(self):
        return np.array([r.social for r in self.records])

    @property
    def gap(self):
        return np.array([r.signaling_gap for r in self.records])

    @property
    def theta(self):
        return np.array([r.theta for r in self.records])


def returns_decomposition(params, ts=None):
    """Private return, social return and signaling gap per experience year."""
    ts = range(params.horizon + 1) if ts is None else ts
    k = params.kappa(HIDDEN)
    recs = []
    for t in ts:
        soc = social_return(params, t)
        priv = private_return(params, t)
        recs.append(ReturnsRecord(int(t), soc, priv, priv - soc, theta(k, t)))
    return ReturnsDecomposition(tuple(recs))
