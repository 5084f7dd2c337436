"""Internal rate of return, signaling share and learning-weight tables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InvalidParameterError, NoSolutionError, NumericalError
from .model import ReturnsDecomposition, ReturnsRecord, theta

IRR_BRACKET = (-0.99, 1.0)


@dataclass(frozen=True)
class IrrInput:
    """Return profile b_t for t = 0..len(b)-1, extended with ``b_inf`` up to ``T_irr``."""

    b: tuple
    wbar: tuple | None = None
    T_irr: int = 40
    b_inf: float | None = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 1 or len(b) == 0 or not np.all(np.isfinite(b)):
            raise InvalidParameterError("return profile must be a finite 1-d sequence")
        if self.T_irr < len(b) - 1:
            raise InvalidParameterError("T_irr must cover the estimated horizon")
        if self.wbar is not None:
            w = np.asarray(self.wbar, dtype=float)
            if len(w) != self.T_irr + 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise InvalidParameterError("wbar must be positive with length T_irr + 1")

    def profile(self):
        b = np.asarray(self.b, dtype=float)
        tail = b[-1] if self.b_inf is None else self.b_inf
        return np.concatenate([b, np.full(self.T_irr + 1 - len(b), tail)])

    def baseline(self):
        if self.wbar is None:
            return np.ones(self.T_irr + 1)
        return np.asarray(self.wbar, dtype=float)


def pv_difference(r, b, wbar):
    """Discounted earnings with one more year of school minus those without."""
    t = np.arange(len(b))
    disc = (1.0 + r) ** -t.astype(float)
    return float(np.sum(wbar * (1.0 + b) * disc) / (1.0 + r) - np.sum(wbar * disc))


def irr(inp, bracket=IRR_BRACKET, xtol=1e-15):
    """Rate equating the present values of the two earnings streams, by bisection."""
    if not isinstance(inp, IrrInput):
        inp = IrrInput(tuple(np.asarray(inp, dtype=float)), T_irr=max(40, len(inp) - 1))
    b, w = inp.profile(), inp.baseline()
    tol = 1e-12 * w.sum()
    lo, hi = bracket
    flo, fhi = pv_difference(lo, b, w), pv_difference(hi, b, w)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSolutionError(f"no sign change of the PV difference on {bracket}")
    while True:
        mid = 0.5 * (lo + hi)
        fm = pv_difference(mid, b, w)
        if abs(fm) < tol and hi - lo < 1e-9 or fm == 0.0 or hi - lo < xtol:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid


@dataclass(frozen=True)
class SignalingSummary:
    private_irr: float
    social_return: float
    signaling_points: float
    signaling_share: float
    error: str | None = None

    def as_dict(self):
        out = {"private_irr": self.private_irr, "social_return": self.social_return,
               "signaling_share": self.signaling_share}
        if self.error:
            out["error"] = self.error
        return out


def signaling_decomposition(private_profile, social_profile, wbar=None, T_irr=40,
                            private_limit=None, social_limit=None):
    """Share of the private IRR not explained by the social return."""
    p = np.asarray(private_profile, dtype=float)
    s = np.asarray(social_profile, dtype=float)
    if p.shape != s.shape:
        raise InvalidParameterError("private and social profiles must share a t grid")
    wb = None if wbar is None else tuple(wbar)
    r_priv = irr(IrrInput(tuple(p), wb, T_irr, private_limit))
    r_soc = irr(IrrInput(tuple(s), wb, T_irr, social_limit))
    if abs(r_priv) < 1e-10:  # within bisection tolerance of zero
        raise NumericalError("private IRR is zero; signaling share undefined")
    return SignalingSummary(r_priv, r_soc, r_priv - r_soc, 1.0 - r_soc / r_priv)


def theta_table(kappa, ts=(5, 10, 15)):
    return {int(t): float(theta(kappa, t)) for t in ts}


def decompose_fit(fit, horizon=None, lambdas=None):
    """Private/social split implied by a mixing fit (private = fitted hidden profile)."""
    if not fit.identified:
        raise InvalidParameterError("fit is not identified")
    T = int(fit.t.max()) if horizon is None else int(horizon)
    t = np.arange(T + 1)
    if lambdas is None:
        lambdas = fit.lambda_profile if fit.lambda_profile is not None else np.ones(T + 1)
    lam = np.asarray(lambdas, dtype=float)[: T + 1]
    th = theta(fit.kappa_hat, t)
    priv = lam * (th * fit.b0 + (1 - th) * fit.b_inf)
    soc = lam * fit.b_inf
    return ReturnsDecomposition(tuple(
        ReturnsRecord(int(i), float(s), float(p), float(p - s), float(h))
        for i, s, p, h in zip(t, soc, priv, th)))


def decomposition_frame(dec):
    return pd.DataFrame({"t": dec.t, "private": dec.private, "social": dec.social, "gap": dec.gap,
                         "theta": dec.theta})
