"""Per-experience IV (Wald) and OLS profiles with worker-bootstrap uncertainty.

Fixed effects are absorbed by within-group demeaning. For a just-identified
IV with exogenous controls only the instrument needs residualising, and for
OLS only the regressors do, so bootstrap resamples stay cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp

from ..errors import (ConvergenceError, InvalidParameterError, RankError, RelevanceError,
                      WeakInstrumentError)

GROUP_COLUMNS = ("group_cohort", "group_region")

HIDDEN_IV = "hidden_iv"
TRANSPARENT_IV = "transparent_iv"
PARTIAL_IV = "partial_iv"
IV = "iv"
OLS = "ols"
WOLS = "wols"
LATE = "late"


@dataclass(frozen=True)
class CovariateSpec:
    columns: tuple = ()
    tol: float = 1e-12
    max_iter: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))

    def absorber(self, panel):
        codes = []
        for col in self.columns:
            val = getattr(panel, col, None)
            if val is None:
                raise InvalidParameterError(f"panel has no covariate column {col!r}")
            codes.append(np.unique(np.asarray(val), return_inverse=True)[1])
        return Absorber(codes, self.tol, self.max_iter)


class Absorber:
    """Weighted residualisation on an intercept plus group dummies."""

    def __init__(self, codes, tol=1e-12, max_iter=5000):
        self.tol = tol
        self.max_iter = max_iter
        self.onehots = []
        self.levels = []
        for c in codes:
            n, g = len(c), int(c.max()) + 1
            self.onehots.append(sp.csr_matrix((np.ones(n), (np.arange(n), c)), shape=(n, g)))
            self.levels.append(g)

    @property
    def rank(self):
        return 1 + sum(g - 1 for g in self.levels)

    def _demean_group(self, M, X, w):
        tot = M.T @ w
        sums = M.T @ (X * w[:, None])
        means = np.divide(sums, tot[:, None], out=np.zeros_like(sums), where=tot[:, None] > 0)
        return X - M @ means

    def __call__(self, X, w=None):
        X = np.asarray(X, dtype=float)
        vec = X.ndim == 1
        X = X.reshape(len(X), -1).copy()
        w = np.ones(len(X)) if w is None else np.asarray(w, dtype=float)
        X -= (w @ X) / w.sum()
        if len(self.onehots) == 1:
            X = self._demean_group(self.onehots[0], X, w)
        elif self.onehots:
            scale = max(np.abs(X).max(), 1.0)
            for _ in range(self.max_iter):
                prev = X
                for M in self.onehots:
                    X = self._demean_group(M, X, w)
                if np.abs(X - prev).max() <= self.tol * scale:
                    break
            else:
                raise ConvergenceError("fixed-effect demeaning did not converge", last_iterate=X)
        return X[:, 0] if vec else X


@dataclass(frozen=True)
class FirstStageResult:
    kappa_hat: float
    se: float
    F: float
    n: int


@dataclass
class ExperienceEstimates:
    """Per-experience coefficients; ``draws`` holds bootstrap replicates (B, T+1)."""

    t: np.ndarray
    b_hat: np.ndarray
    se: np.ndarray
    n: np.ndarray
    estimator: str = IV
    first_stage: FirstStageResult | None = None
    draws: np.ndarray | None = None
    gaps: tuple = ()

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=int)
        self.b_hat = np.asarray(self.b_hat, dtype=float)
        self.se = np.zeros_like(self.b_hat) if self.se is None else np.asarray(self.se, dtype=float)
        self.n = np.zeros(len(self.t), dtype=int) if self.n is None else np.asarray(self.n, dtype=int)
        if np.any(np.diff(self.t) <= 0):
            raise InvalidParameterError("t must be strictly increasing")
        self.gaps = tuple(int(t) for t in self.t[~np.isfinite(self.b_hat)])

    @classmethod
    def from_arrays(cls, t, b_hat, se=None, estimator=IV):
        return cls(t, b_hat, se, None, estimator)

    def __len__(self):
        return len(self.t)

    def at(self, t):
        idx = np.flatnonzero(self.t == t)
        if not len(idx):
            raise KeyError(t)
        return float(self.b_hat[idx[0]])

    def cov(self):
        if self.draws is None:
            raise InvalidParameterError("no bootstrap draws stored")
        return np.cov(self.draws, rowvar=False)

    def to_frame(self):
        return pd.DataFrame({"estimator": self.estimator, "t": self.t, "b_hat": self.b_hat,
                             "se": self.se, "n": self.n})


def _groups_or_none(covariates, panel):
    return (covariates or CovariateSpec()).absorber(panel)


def _check_binary(D):
    vals = np.unique(D)
    if len(vals) < 2:
        raise RelevanceError("instrument takes a single value")


def first_stage(panel, covariates=None):
    """OLS of schooling on the instrument after absorbing covariates."""
    absorb = _groups_or_none(covariates, panel)
    D = np.asarray(panel.D, dtype=float)
    _check_binary(D)
    Dt = absorb(D)
    St = absorb(np.asarray(panel.S, dtype=float))
    n = len(D)
    dd = Dt @ Dt
    if dd <= 1e-12 * n:
        raise RelevanceError("instrument has no variation after partialling")
    k = (Dt @ St) / dd
    resid = St - k * Dt
    dof = max(n - absorb.rank - 1, 1)
    se = float(np.sqrt((resid @ resid) / dof / dd))
    F = float((k / se) ** 2) if se > 0 else np.inf
    return FirstStageResult(float(k), se, F, n)


def _design(panel, estimator, regressors):
    if estimator in (IV, HIDDEN_IV, TRANSPARENT_IV, PARTIAL_IV, LATE):
        return "iv", np.asarray(panel.S, dtype=float)[:, None]
    cols = []
    for r in regressors:
        val = getattr(panel, r, None)
        if val is None:
            raise InvalidParameterError(f"panel has no regressor {r!r}")
        cols.append(np.asarray(val, dtype=float))
    return "ols", np.column_stack(cols)


def _coefs(kind, absorb, panel, X, Y, w):
    n = len(X)
    if kind == "iv":
        Zt = absorb(np.asarray(panel.D, dtype=float), w)[:, None]
    else:
        Zt = absorb(X, w)
    Zw = Zt * w[:, None]
    A = Zw.T @ X
    if kind == "iv":
        if abs(A[0, 0]) / w.sum() < 1e-12:
            raise WeakInstrumentError("first-stage covariance is zero")
    else:
        d = np.sqrt(np.diag(A))
        if np.any(d <= 1e-12 * np.sqrt(n)):
            raise RankError("regressor has no variation after partialling")
        corr = A / np.outer(d, d)
        if np.linalg.eigvalsh(corr).min() < 1e-10:
            raise RankError("regressors are collinear")
    return np.linalg.solve(A, Zw.T @ Y)


def _bootstrap(kind, absorb, panel, X, Y, n_boot, seed):
    n = len(X)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    out = np.empty((n_boot, X.shape[1], Y.shape[1]))
    for b in range(n_boot):
        w = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        try:
            out[b] = _coefs(kind, absorb, panel, X, Y, w)
        except (WeakInstrumentError, RankError):
            out[b] = np.nan
    return out


def coefficient_paths(panel, covariates=None, estimator=IV, regressors=("S",), n_boot=200,
                      seed=0):
    """Point coefficients (k, T+1) and bootstrap draws (B, k, T+1)."""
    absorb = _groups_or_none(covariates, panel)
    kind, X = _design(panel, estimator, regressors)
    if kind == "iv":
        _check_binary(panel.D)
    Y = np.asarray(panel.ln_wage, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise InvalidParameterError("wages must be finite")
    w = np.ones(len(X))
    coef = _coefs(kind, absorb, panel, X, Y, w)
    draws = _bootstrap(kind, absorb, panel, X, Y, n_boot, seed) if n_boot else None
    return coef, draws


def _sd(draws):
    if draws is None or len(draws) < 2:
        return None
    return np.nanstd(draws, axis=0, ddof=1)


def default_tag(panel):
    return {"hidden": HIDDEN_IV, "transparent": TRANSPARENT_IV, "partial": PARTIAL_IV}.get(
        getattr(panel, "regime", None), IV)


def experience_profile(panel, covariates=None, estimator=IV, n_boot=200, seed=0, tag=None):
    """Wald (``estimator='iv'``) or OLS-on-schooling coefficient at every experience year."""
    if n_boot == 1:
        raise InvalidParameterError("n_boot must be 0 or at least 2")
    coef, draws = coefficient_paths(panel, covariates, estimator, ("S",), n_boot, seed)
    b = coef[0]
    d = None if draws is None else draws[:, 0, :]
    se = _sd(d)
    fs = first_stage(panel, covariates) if estimator != OLS else None
    if tag is None:
        tag = default_tag(panel) if estimator == IV else estimator
    n = np.full(len(b), panel.ln_wage.shape[0])
    return ExperienceEstimates(np.arange(len(b)), b, se, n, tag, fs, d)


def wald_at(panel, t, covariates=None):
    """Wald ratio at experience ``t`` on partialled data."""
    if not 0 <= t <= panel.ln_wage.shape[1] - 1:
        raise InvalidParameterError(f"no records at t={t}")
    absorb = _groups_or_none(covariates, panel)
    _check_binary(panel.D)
    Dt = absorb(np.asarray(panel.D, dtype=float))
    den = Dt @ np.asarray(panel.S, dtype=float)
    if abs(den) / len(Dt) < 1e-12:
        raise WeakInstrumentError("first-stage difference is zero")
    return float(Dt @ panel.ln_wage[:, t] / den)


def reduced_form(panel, t, covariates=None):
    """Coefficient of partialled wages on the partialled instrument."""
    absorb = _groups_or_none(covariates, panel)
    Dt = absorb(np.asarray(panel.D, dtype=float))
    return float(Dt @ panel.ln_wage[:, t] / (Dt @ Dt))


@dataclass(frozen=True)
class FlatnessTest:
    statistic: float
    df1: int
    df2: int
    p_value: float

    def rejects(self, level=0.05):
        return self.p_value < level


def flatness_test(estimates):
    """Joint test that the profile is constant in t, using the bootstrap covariance.

    The differences ``b_t - b_0`` are tested against zero with a Hotelling
    statistic whose covariance comes from the bootstrap replicates.
    """
    from scipy import stats

    if estimates.draws is None:
        raise InvalidParameterError("flatness test needs bootstrap draws")
    draws = estimates.draws[np.all(np.isfinite(estimates.draws), axis=1)]
    k = len(estimates.t) - 1
    B = len(draws)
    if k < 1:
        raise InvalidParameterError("need at least two experience years")
    if B <= k + 1:
        raise InvalidParameterError(f"need more than {k + 1} bootstrap draws, have {B}")
    diff = estimates.b_hat[1:] - estimates.b_hat[0]
    ddraw = draws[:, 1:] - draws[:, :1]
    cov = np.cov(ddraw, rowvar=False).reshape(k, k)
    t2 = float(diff @ np.linalg.solve(cov, diff))
    F = (B - k) / (k * (B - 1)) * t2
    return FlatnessTest(F, k, B - k, float(stats.f.sf(F, k, B - k)))
