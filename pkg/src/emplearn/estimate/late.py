"""Complier LATE profiles for binary schooling with heterogeneous returns."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RelevanceError
from ..model import theta as theta_fn
from .iv import LATE, experience_profile
from .nlls import MixingFit, _lambda_from_transparent, fit_mixing


def late_profile(hpanel, n_boot=200, seed=0):
    """Wald estimate on wage levels at every t; the first stage is the complier share."""
    panel = hpanel.as_panel() if hasattr(hpanel, "as_panel") else hpanel
    S = np.asarray(panel.S, dtype=float)
    D = np.asarray(panel.D)
    if len(np.unique(D)) < 2 or abs(S[D == 1].mean() - S[D == 0].mean()) < 1e-12:
        raise RelevanceError("complier share is zero")
    return experience_profile(panel, None, LATE, n_boot, seed, tag=LATE)


@dataclass
class LateFit:
    t: np.ndarray
    late: np.ndarray
    Upsilon: float
    Upsilon_gap: float
    kappa_hat: float
    theta: np.ndarray
    identified: bool
    lambda_profile: np.ndarray | None
    fit: MixingFit


def late_learning_fit(late, transparent_late=None, weighting="uniform"):
    """Fit LATE_t = lambda_t (Upsilon + (1 - theta_t) * (Upsilon_1 - Upsilon_0)).

    Without a transparent profile lambda is held at one; with it lambda_t is
    the transparent LATE at t relative to t=0.
    """
    lam = None if transparent_late is None else _lambda_from_transparent(transparent_late)
    fit = fit_mixing(late, lam, weighting, mode="late" if lam is None else "late_varying")
    th = theta_fn(fit.kappa_hat, late.t) if fit.identified else np.full(len(late.t), np.nan)
    return LateFit(late.t.copy(), late.b_hat.copy(), fit.b0, fit.b_inf - fit.b0, fit.kappa_hat, th,
                   fit.identified, lam, fit)
