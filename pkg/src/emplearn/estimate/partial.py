"""Instruments that are transparent for an unknown share of workers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AssumptionRejectedError, InvalidParameterError
from ..model import theta as theta_fn
from .nlls import (GRID_SIZE, MixingFit, _Series, _as_series, _mixing_basis, _profile_search,
                   fit_mixing, theta_grid)

BOUNDS_ONLY = "bounds-only"
POINT_ID_HIDDEN = "point-id-with-hidden"
POINT_ID_TRANSPARENT = "point-id-with-transparent"

Z_ONE_SIDED_95 = 1.6448536269514722


@dataclass
class PartialIdResult:
    t: np.ndarray
    lower_bound: np.ndarray
    rho_scaled_gap: float
    kappa_hat: float
    b0: float
    b_inf: float
    mode: str
    identified: bool
    lambda_theta: np.ndarray | None = None
    fit: MixingFit | None = None


def partial_bounds(partial_estimates, weighting="uniform"):
    """The partial profile bounds the private return from below; its limit is the social return.

    Assumes constant skill prices.
    """
    fit = fit_mixing(partial_estimates, weighting=weighting, mode=BOUNDS_ONLY)
    return PartialIdResult(partial_estimates.t.copy(), partial_estimates.b_hat.copy(), np.nan,
                           fit.kappa_hat, fit.b0, fit.b_inf, BOUNDS_ONLY, fit.identified, None, fit)


def _gap_basis(t):
    def basis(kappas):
        th = theta_grid(kappas, t)
        return th, np.zeros_like(th)
    return basis


def _stacked_fit(level, gap_path, t, grid_size, mode):
    """NLLS of level_t = theta_t b0 + (1 - theta_t) b_inf and gap_t = g theta_t, kappa profiled."""
    ones = np.ones(len(t))
    s_level = _Series(level, ones, _mixing_basis(t, ones))
    s_gap = _Series(gap_path, ones, _gap_basis(t))
    k, rss = _profile_search([s_level, s_gap], 0.0, 1.0, grid_size)
    _, b0, binf, ok = s_level.solve(k)
    th = theta_fn(k, t)
    identified = bool(ok[0]) and len(np.unique(t)) >= 3
    return MixingFit(float(b0[0]), float(binf[0]), float(k) if identified else np.nan, ones, rss,
                     identified, mode, t, th * b0[0] + (1 - th) * binf[0])


def _ordered_gap(upper, lower, se_u, se_l, what):
    gap = float(upper[0] - lower[0])
    sd = float(np.hypot(se_u[0], se_l[0])) if se_u is not None and se_l is not None else 0.0
    if gap < -(Z_ONE_SIDED_95 * sd if sd > 0 else 1e-12):
        raise AssumptionRejectedError(what)
    return gap, abs(gap) <= max(Z_ONE_SIDED_95 * sd, 1e-12)


def partial_point_id(hidden_estimates, partial_estimates, grid_size=GRID_SIZE):
    """Point-identify (b0, b_inf, kappa) of the hidden sample with help of a partial sample.

    Skill prices are taken as constant. The hidden-minus-partial gap is
    rho (b0 - b_inf) theta_t, so its path relative to t=0 traces theta_t;
    kappa is fitted jointly to that path and the hidden profile.
    """
    th_t, h, se_h = _as_series(hidden_estimates)
    tp_t, p, se_p = _as_series(partial_estimates)
    if not np.array_equal(th_t, tp_t) or th_t[0] != 0:
        raise InvalidParameterError("profiles must share a t grid starting at 0")
    gap, degenerate = _ordered_gap(h, p, se_h, se_p,
                                   f"hidden return at t=0 ({h[0]:.6g}) is below the partial one ({p[0]:.6g})")
    if degenerate:
        return PartialIdResult(th_t, p.copy(), gap, np.nan, np.nan, np.nan, POINT_ID_HIDDEN, False)
    fit = _stacked_fit(h, h - p, th_t, grid_size, POINT_ID_HIDDEN)
    return PartialIdResult(th_t, p.copy(), gap, fit.kappa_hat, fit.b0, fit.b_inf, POINT_ID_HIDDEN,
                           fit.identified, (h - p) / gap, fit)


def partial_point_id_transparent(transparent_estimates, partial_estimates, grid_size=GRID_SIZE):
    """Variant pairing a transparent sample with the partial one.

    The partial-minus-transparent gap is (1 - rho) (b0 - b_inf) theta_t. The
    recovered (b0, b_inf) describe the partial-sample mixture, whose limit is
    the social return.
    """
    tt, tr, se_t = _as_series(transparent_estimates)
    tp, p, se_p = _as_series(partial_estimates)
    if not np.array_equal(tt, tp) or tt[0] != 0:
        raise InvalidParameterError("profiles must share a t grid starting at 0")
    gap, degenerate = _ordered_gap(p, tr, se_p, se_t, "partial return at t=0 is below the transparent one")
    if degenerate:
        return PartialIdResult(tt, p.copy(), np.nan, np.nan, np.nan, np.nan, POINT_ID_TRANSPARENT, False)
    fit = _stacked_fit(p, p - tr, tt, grid_size, POINT_ID_TRANSPARENT)
    return PartialIdResult(tt, p.copy(), np.nan, fit.kappa_hat, fit.b0, fit.b_inf, POINT_ID_TRANSPARENT,
                           fit.identified, (p - tr) / gap, fit)
