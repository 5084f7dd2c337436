"""Mixing fits: profiles of the form lambda_t (theta_t b0 + (1 - theta_t) b_inf).

Given kappa the model is linear in (b0, b_inf), so kappa is profiled out:
every point on a fixed grid is solved in closed form, and a golden-section
search polishes the best grid cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, IdentificationError, InvalidParameterError, RangeError
from ..model import theta as theta_fn
from .iv import ExperienceEstimates

GRID_SIZE = 2001
FLAT_TOL = 1e-10
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def theta_grid(kappas, t):
    k = np.asarray(kappas, dtype=float)[:, None]
    t = np.asarray(t, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t == 0, 1.0, (1.0 - k) / (1.0 + (t - 1.0) * k))
    return out


@dataclass
class MixingFit:
    b0: float
    b_inf: float
    kappa_hat: float
    lambda_profile: np.ndarray
    rss: float
    identified: bool
    mode: str = "constant_lambda"
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    fitted: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_iter: int = 0
    extras: dict = field(default_factory=dict)

    def theta(self, t):
        if not self.identified:
            raise IdentificationError("speed of learning is not identified")
        return theta_fn(self.kappa_hat, t)

    def predict(self, t, lambdas=None):
        t = np.asarray(t)
        lam = np.ones(t.shape) if lambdas is None else np.asarray(lambdas, dtype=float)
        th = theta_fn(self.kappa_hat, t) if self.identified else np.ones(t.shape)
        return lam * (th * self.b0 + (1 - th) * self.b_inf)

    def summary(self):
        return {"kappa_hat": self.kappa_hat, "b0": self.b0, "b_inf": self.b_inf,
                "rss": self.rss, "identified": self.identified, "mode": self.mode}


def _as_series(estimates, t=None):
    if isinstance(estimates, ExperienceEstimates):
        return estimates.t.copy(), estimates.b_hat.copy(), estimates.se.copy()
    if t is None:
        raise InvalidParameterError("t is required when passing a raw array")
    return np.asarray(t, dtype=int), np.asarray(estimates, dtype=float), None


def lambda_values(lambda_profile, t):
    if lambda_profile is None:
        return np.ones(len(t))
    lam = lambda_profile.as_array() if hasattr(lambda_profile, "as_array") else np.asarray(
        lambda_profile, dtype=float)
    if t.max() >= len(lam):
        raise RangeError("lambda profile is shorter than the estimate horizon")
    return lam[t]


def _weights(se, weighting, n):
    if weighting == "uniform":
        return np.ones(n)
    if weighting == "inverse_variance":
        if se is None or not np.all(np.isfinite(se)):
            raise InvalidParameterError("inverse-variance weighting needs standard errors")
        floor = max(np.max(se) * 1e-6, 1e-15)
        return 1.0 / np.maximum(se, floor) ** 2
    raise InvalidParameterError(f"unknown weighting {weighting!r}")


class _Series:
    """One series b_t = x1_t(k) * a + x2_t(k) * c with weights."""

    def __init__(self, b, w, basis):
        self.b = b
        self.w = w
        self.basis = basis  # kappas -> (x1, x2), each (G, n)

    def solve(self, kappas):
        x1, x2 = self.basis(np.atleast_1d(kappas))
        w, b = self.w, self.b
        a11 = (w * x1 * x1).sum(1)
        a12 = (w * x1 * x2).sum(1)
        a22 = (w * x2 * x2).sum(1)
        r1 = (w * x1 * b).sum(1)
        r2 = (w * x2 * b).sum(1)
        det = a11 * a22 - a12 * a12
        scale = np.maximum(a11 * a22, 1e-300)
        ok = det > 1e-12 * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(ok, (a22 * r1 - a12 * r2) / det, 0.0)
            q = np.where(ok, (a11 * r2 - a12 * r1) / det, 0.0)
            # singular: a single free coefficient on whichever column is nonzero
            use1 = a11 >= a22
            s1 = np.where(a11 > 0, r1 / a11, 0.0)
            s2 = np.where(a22 > 0, r2 / a22, 0.0)
        p = np.where(ok, p, np.where(use1, s1, 0.0))
        q = np.where(ok, q, np.where(use1, 0.0, s2))
        resid = b - (x1 * p[:, None] + x2 * q[:, None])
        return (w * resid * resid).sum(1), p, q, ok


def _mixing_basis(t, lam):
    def basis(kappas):
        th = theta_grid(kappas, t)
        return lam * th, lam * (1.0 - th)
    return basis


def _profile_search(series, lo=0.0, hi=1.0, grid_size=GRID_SIZE, tol=1e-13):
    grid = np.linspace(lo, hi, grid_size)
    rss = sum(s.solve(grid)[0] for s in series)
    i = int(np.argmin(rss))  # first occurrence: ties go to the smallest kappa

    def f(k):
        return float(sum(s.solve(k)[0][0] for s in series))

    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    best_k, best_f = grid[i], float(rss[i])
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    k = 0.5 * (a + b)
    fk = f(k)
    if fk < best_f:
        best_k, best_f = k, fk
    return best_k, best_f


def fit_mixing(estimates, lambda_profile=None, weighting="uniform", t=None, grid_size=GRID_SIZE,
               mode="constant_lambda"):
    """Fit (b0, b_inf, kappa) to a per-experience profile.

    ``estimates`` is an :class:`ExperienceEstimates` or a raw array with ``t``.
    Flat profiles and profiles with fewer than three distinct experience
    years are reported with ``identified=False`` and ``kappa_hat=nan``.
    """
    t, b, se = _as_series(estimates, t)
    ok = np.isfinite(b)
    t, b = t[ok], b[ok]
    se = None if se is None else se[ok]
    if len(t) == 0:
        raise InvalidParameterError("no finite estimates to fit")
    lam = lambda_values(lambda_profile, t)
    w = _weights(se, weighting, len(t))
    lam_full = None if lambda_profile is None else lambda_values(lambda_profile, np.arange(t.max() + 1))
    if np.ptp(b) < FLAT_TOL and np.ptp(lam) < FLAT_TOL:
        m = float(np.average(b, weights=w) / lam[0]) if lam[0] != 0 else float(b.mean())
        return MixingFit(m, m, np.nan, lam_full, float((w * (b - lam * m) ** 2).sum()), False, mode,
                         t, lam * m)
    s = _Series(b, w, _mixing_basis(t, lam))
    if len(np.unique(t)) < 3:
        rss, p, q, _ = s.solve(1.0)
        return MixingFit(float(p[0]), float(q[0]), np.nan, lam_full, float(rss[0]), False, mode, t,
                         lam * np.where(t == 0, p[0], q[0]))
    k, rss = _profile_search([s], grid_size=grid_size)
    _, p, q, ok_k = s.solve(k)
    identified = bool(ok_k[0])
    fit = MixingFit(float(p[0]), float(q[0]), float(k) if identified else np.nan, lam_full, rss,
                    identified, mode, t)
    th = theta_fn(k, t)
    fit.fitted = lam * (th * fit.b0 + (1 - th) * fit.b_inf)
    return fit


def _lambda_from_transparent(transparent):
    t, b, se = _as_series(transparent)
    if t[0] != 0:
        raise InvalidParameterError("transparent profile must start at t=0")
    b0, se0 = b[0], (se[0] if se is not None else 0.0)
    thresh = 10.0 * se0 if se0 > 0 else 1e-12
    if not abs(b0) > thresh:
        raise IdentificationError("transparent return at t=0 is too close to zero to normalise")
    lam = b / b0
    lam[0] = 1.0
    return lam


def sequential_fit(transparent_estimates, hidden_estimates, weighting="uniform"):
    """Skill prices from the transparent profile, then a mixing fit of the hidden one."""
    lam = _lambda_from_transparent(transparent_estimates)
    if not np.array_equal(transparent_estimates.t, np.arange(len(lam))):
        raise InvalidParameterError("transparent profile must cover t=0..T")
    fit = fit_mixing(hidden_estimates, lam, weighting, mode="sequential")
    fit.extras["social_transparent"] = float(transparent_estimates.b_hat[0])
    return lam, fit


def joint_fit(hidden_estimates, transparent_estimates, tol=1e-10, max_iter=500):
    """Pooled least squares over both profiles, alternating between lambda and the rest.

    Parameters are (b0, b_inf, kappa, s, lambda_1..lambda_T) with lambda_0 = 1;
    the transparent profile is modelled as lambda_t * s.
    """
    th_t, h, _ = _as_series(hidden_estimates)
    tr_t, tr, _ = _as_series(transparent_estimates)
    if not (np.array_equal(th_t, tr_t) and np.array_equal(th_t, np.arange(len(h)))):
        raise InvalidParameterError("profiles must share t=0..T")
    if np.all(np.abs(tr) < 1e-14):
        raise IdentificationError("transparent profile is identically zero; lambda unidentified")
    lam, fit = sequential_fit(transparent_estimates, hidden_estimates)
    s = float(lam @ tr / (lam @ lam))

    def total_rss(lam, fit, s):
        m = fit.predict(th_t, np.ones(len(h)))
        return float(((h - lam * m) ** 2).sum() + ((tr - lam * s) ** 2).sum())

    rss = total_rss(lam, fit, s)
    converged = False
    for it in range(1, max_iter + 1):
        m = fit.predict(th_t, np.ones(len(h)))
        lam = (h * m + tr * s) / (m * m + s * s)
        lam[0] = 1.0
        fit = fit_mixing(hidden_estimates, lam, mode="joint")
        s = float(lam @ tr / (lam @ lam))
        new = total_rss(lam, fit, s)
        done = abs(rss - new) <= tol * max(rss, 1e-300) or new == 0.0
        rss = new
        if done:
            converged = True
            break
    if fit.identified:
        x, polished = _polish_joint(th_t, h, tr, fit, lam, s)
        if polished:
            k, b0, binf, s = x[:4]
            lam = np.concatenate([[1.0], x[4:]])
            fit = fit_mixing(hidden_estimates, lam, mode="joint")
            rss_new = total_rss(lam, fit, s)
            if rss_new <= rss * (1 + 1e-9) + 1e-300:
                rss = rss_new
            converged = True
    if not converged:
        raise ConvergenceError("joint fit did not converge",
                               last_iterate={"lambda": lam, "fit": fit, "s": s})
    fit.rss = rss
    fit.n_iter = it
    fit.lambda_profile = lam
    fit.extras["social_transparent"] = s
    return lam, fit


def _polish_joint(t, h, tr, fit, lam, s):
    """Gauss-Newton refinement of the alternating solution (analytic Jacobian)."""
    from scipy.optimize import least_squares

    T = len(t) - 1
    tf = t.astype(float)

    def parts(x):
        k, b0, binf, s = x[:4]
        lam = np.concatenate([[1.0], x[4:]])
        den = 1.0 + (tf - 1.0) * k
        th = np.where(tf == 0, 1.0, (1.0 - k) / den)
        dth = np.where(tf == 0, 0.0, -tf / den ** 2)
        return lam, th, dth, b0, binf, s

    def resid(x):
        lam, th, _, b0, binf, s = parts(x)
        return np.concatenate([h - lam * (th * b0 + (1 - th) * binf), tr - lam * s])

    def jac(x):
        lam, th, dth, b0, binf, s = parts(x)
        m = th * b0 + (1 - th) * binf
        J = np.zeros((2 * (T + 1), 4 + T))
        J[:T + 1, 0] = -lam * (b0 - binf) * dth
        J[:T + 1, 1] = -lam * th
        J[:T + 1, 2] = -lam * (1 - th)
        J[T + 1:, 3] = -lam
        idx = np.arange(1, T + 1)
        J[idx, 3 + idx] = -m[1:]
        J[T + 1 + idx, 3 + idx] = -s
        return J

    x0 = np.concatenate([[fit.kappa_hat, fit.b0, fit.b_inf, s], lam[1:]])
    lo = np.full(len(x0), -np.inf)
    hi = np.full(len(x0), np.inf)
    lo[0], hi[0] = 0.0, 1.0
    x0[0] = min(max(x0[0], 0.0), 1.0)
    res = least_squares(resid, x0, jac=jac, bounds=(lo, hi), method="trf", xtol=1e-15,
                        ftol=1e-15, gtol=1e-15, max_nfev=2000)
    return res.x, res.status > 0


@dataclass
class SpeedFit:
    b_fit: MixingFit
    c_fit: MixingFit
    kappa_common: float
    b0: float
    b_inf: float
    c0: float
    c_inf: float
    rss_common: float

    @property
    def kappa_b(self):
        return self.b_fit.kappa_hat

    @property
    def kappa_c(self):
        return self.c_fit.kappa_hat


def ols_speed_fit(paths, grid_size=GRID_SIZE):
    """Separate and common-kappa mixing fits of the schooling and correlate paths."""
    t = np.asarray(paths.t, dtype=int)
    if len(np.unique(t)) < 3:
        raise InvalidParameterError("need at least three experience years")
    b_fit = fit_mixing(paths.b, t=t, grid_size=grid_size)
    c_fit = fit_mixing(paths.c, t=t, grid_size=grid_size)
    ones = np.ones(len(t))
    sb = _Series(np.asarray(paths.b, float), ones, _mixing_basis(t, ones))
    sc = _Series(np.asarray(paths.c, float), ones, _mixing_basis(t, ones))
    k, rss = _profile_search([sb, sc], grid_size=grid_size)
    _, b0, binf, _ = sb.solve(k)
    _, c0, cinf, _ = sc.solve(k)
    return SpeedFit(b_fit, c_fit, float(k), float(b0[0]), float(binf[0]), float(c0[0]),
                    float(cinf[0]), float(rss))
