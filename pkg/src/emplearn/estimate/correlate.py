"""OLS with a hidden ability correlate, and OLS reweighted to mimic IV margins."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import InvalidParameterError, RankError, WeakInstrumentError
from .iv import CovariateSpec, OLS, coefficient_paths
from .nlls import ols_speed_fit


@dataclass
class OlsPaths:
    t: np.ndarray
    b: np.ndarray
    c: np.ndarray
    b_se: np.ndarray | None = None
    c_se: np.ndarray | None = None

    @cached_property
    def speed(self):
        return ols_speed_fit(self)

    @property
    def kappa_b(self):
        return self.speed.kappa_b

    @property
    def kappa_c(self):
        return self.speed.kappa_c

    @property
    def kappa_common(self):
        return self.speed.kappa_common


def ols_correlate_profile(panel, covariates=None, n_boot=0, seed=0):
    """Per-t OLS of log wages on schooling and the hidden correlate Z."""
    if panel.Z is None:
        raise InvalidParameterError("panel carries no hidden correlate Z")
    coef, draws = coefficient_paths(panel, covariates, OLS, ("S", "Z"), n_boot, seed)
    b_se = c_se = None
    if draws is not None and len(draws) > 1:
        sd = np.nanstd(draws, axis=0, ddof=1)
        b_se, c_se = sd[0], sd[1]
    return OlsPaths(np.arange(coef.shape[1]), coef[0], coef[1], b_se, c_se)


@dataclass
class MarginWeights:
    s: np.ndarray
    pi: np.ndarray

    @property
    def total(self):
        return float(self.pi.sum())

    def as_dict(self):
        return {int(s): float(p) for s, p in zip(self.s, self.pi)}


def _integer_schooling(panel):
    S = np.asarray(panel.S, dtype=float)
    if not np.all(S == np.round(S)):
        raise InvalidParameterError("schooling must be integer-valued; discretize first")
    return S.astype(np.int64)


def iv_margin_weights(panel, grid=None):
    """Share of the instrument's schooling shift that crosses each margin s-1 -> s."""
    S = _integer_schooling(panel)
    D = np.asarray(panel.D, dtype=float)
    lo, hi = (int(S.min()), int(S.max())) if grid is None else (int(grid[0]), int(grid[1]))
    if hi < lo:
        raise InvalidParameterError("empty schooling grid")
    Dc = D - D.mean()
    den = (S - S.mean()) @ Dc
    if abs(den) / len(S) < 1e-12:
        raise WeakInstrumentError("cov(S, D) is zero")
    s = np.arange(lo + 1, hi + 1)
    steps = (S[:, None] >= s[None, :]).astype(float)
    pi = (steps - steps.mean(0)).T @ Dc / den
    return MarginWeights(s, pi)


@dataclass
class WolsResult:
    margins: MarginWeights
    t: np.ndarray
    b_wols: np.ndarray
    c_wols: np.ndarray | None
    gamma1: np.ndarray
    gamma2: np.ndarray | None
    cells: list = field(default_factory=list)
    merged: list = field(default_factory=list)


def _cells(S, lo, hi):
    """Populated levels; each empty level is folded into the next populated one."""
    cells, cur = [], []
    for s in range(lo, hi + 1):
        cur.append(s)
        if np.any(S == s):
            cells.append(cur)
            cur = []
    if cur and cells:
        cells[-1].extend(cur)
    return cells


def weighted_ols_profile(panel, weights=None, covariates=None, grid=None):
    """Per-t OLS on schooling-step dummies (and Z by schooling level), averaged with IV weights.

    A step into level s measures the wage gap from the nearest populated level
    below. When empty levels sit in between, that step spans several margins
    and its coefficient is split evenly across them.
    """
    S = _integer_schooling(panel)
    D = np.asarray(panel.D)
    weights = weights or iv_margin_weights(panel, grid)
    lo, hi = int(weights.s[0]) - 1, int(weights.s[-1])
    cells = _cells(S, lo, hi)
    if len(cells) < 2:
        raise RankError("no estimable schooling margins")
    levels = [c[-1] for c in cells]  # the populated level of each cell
    thin = [s for s in levels if not ((D[S == s] == 0).any() and (D[S == s] == 1).any())]
    if thin:
        warnings.warn(f"schooling levels {thin} hold a single instrument value", stacklevel=2)
    # margin s belongs to the step whose level is the first populated one >= s
    spans = [list(range(levels[k - 1] + 1, levels[k] + 1)) for k in range(1, len(levels))]
    merged = [sp for sp in spans if len(sp) > 1]
    pi_map = weights.as_dict()
    pi_span = np.array([sum(pi_map.get(s, 0.0) for s in sp) for sp in spans])
    pi_step = pi_span / np.array([len(sp) for sp in spans])
    outside = {s: p for s, p in pi_map.items() if s <= levels[0] or s > levels[-1]}
    if any(abs(p) > 1e-12 for p in outside.values()):
        warnings.warn(f"margins {sorted(outside)} lie outside the populated range", stacklevel=2)
    cols = [(S >= lv).astype(float) for lv in levels[1:]]
    has_z = panel.Z is not None
    if has_z:
        Z = np.asarray(panel.Z, dtype=float)
        cols += [(S == lv) * Z for lv in levels]
    X = np.column_stack(cols)
    absorb = (covariates or CovariateSpec()).absorber(panel)
    Xt = absorb(X)
    G = Xt.T @ Xt
    d = np.sqrt(np.diag(G))
    if np.any(d <= 1e-12 * np.sqrt(len(X))) or np.linalg.eigvalsh(G / np.outer(d, d)).min() < 1e-12:
        raise RankError("margin design is rank deficient")
    coef = np.linalg.solve(G, Xt.T @ np.asarray(panel.ln_wage, dtype=float))
    n_steps = len(spans)
    g1 = coef[:n_steps]
    b = pi_step @ g1
    g2 = c = None
    if has_z:
        g2 = coef[n_steps:]
        c = pi_span @ g2[1:]  # Z slopes are per level, not differences
    return WolsResult(weights, np.arange(coef.shape[1]), b, c, g1, g2, cells, merged)
