"""Synthetic worker populations and wage panels.

Randomness is organised in fixed-size worker blocks. Block ``b`` of purpose
``k`` draws from ``SeedSequence(seed, spawn_key=(k, b))`` and always draws a
full block, so a worker's values depend only on (seed, worker id) and never
on the number of workers or on how blocks are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import model
from .errors import InvalidParameterError, RangeError, UnsupportedConfigurationError
from .model import HIDDEN, PARTIAL, TRANSPARENT

BLOCK = 4096

_POPULATION, _EXPOSURE, _NOISE, _HETERO = 0, 1, 2, 3

CSV_COLUMNS = ["worker_id", "t", "ln_wage", "S", "D", "Z", "Q", "group_cohort", "group_region"]
H_CSV_COLUMNS = ["worker_id", "t", "wage_level", "S", "D", "Z", "Q", "group_cohort", "group_region"]


def block_rng(seed, purpose, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def _blocks(n):
    for b in range((n + BLOCK - 1) // BLOCK):
        lo = b * BLOCK
        yield b, lo, min(n, lo + BLOCK)


@dataclass(frozen=True)
class SimulationConfig:
    n_workers: int = 200_000
    horizon: int = 30
    regime: str = HIDDEN
    rho: float = 0.0
    seed: int = 0
    balanced: bool = True
    quality_violation: bool = False
    n_cohorts: int = 10
    n_regions: int = 20

    def __post_init__(self):
        if int(self.n_workers) < 1:
            raise InvalidParameterError("n_workers must be at least 1")
        if int(self.horizon) < 0:
            raise InvalidParameterError("horizon must be nonnegative")
        if self.regime not in model.REGIMES:
            raise InvalidParameterError(f"unknown regime {self.regime!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParameterError("rho must lie in [0, 1]")
        if not self.balanced:
            raise UnsupportedConfigurationError("only balanced panels are supported")
        if self.n_cohorts < 1 or self.n_regions < 1:
            raise InvalidParameterError("group counts must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class WorkerDraw:
    id: int
    D: int
    exposure_type: str
    S: float
    v: float
    A_tilde: float
    A: float
    Q: float | None
    Z: float | None
    eta: float | None


@dataclass
class Population:
    """Struct-of-arrays population; indexing yields :class:`WorkerDraw`."""

    worker_id: np.ndarray
    D: np.ndarray
    S: np.ndarray
    v: np.ndarray
    A_tilde: np.ndarray
    A: np.ndarray
    Q: np.ndarray | None
    Z: np.ndarray | None
    eta: np.ndarray | None
    beta_Az: float | None
    group_cohort: np.ndarray
    group_region: np.ndarray
    transparent: np.ndarray = None
    seed: int = 0

    def __len__(self):
        return len(self.worker_id)

    def __getitem__(self, i):
        opt = lambda a: None if a is None else float(a[i])  # noqa: E731
        exp = TRANSPARENT if self.transparent is not None and self.transparent[i] else HIDDEN
        return WorkerDraw(int(self.worker_id[i]), int(self.D[i]), exp, float(self.S[i]),
                          float(self.v[i]), float(self.A_tilde[i]), float(self.A[i]),
                          opt(self.Q), opt(self.Z), opt(self.eta))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _group_values(n, sd):
    if n == 1 or sd == 0:
        return np.zeros(n)
    z = np.linspace(-1.0, 1.0, n)
    return sd * (z - z.mean()) / z.std()


def _matrix_sqrt(cov):
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _check_quality(config, structure):
    if structure.delta_AD != 0 and not config.quality_violation:
        raise InvalidParameterError("delta_AD != 0 requires quality_violation=True")


def draw_population(config, structure, seed=None):
    """Draw workers' instrument, schooling, ability and correlates."""
    _check_quality(config, structure)
    seed = config.seed if seed is None else seed
    n = int(config.n_workers)
    k = 3 if structure.q_enabled else 2
    root = _matrix_sqrt(structure.draw_cov())
    g_s_c = _group_values(config.n_cohorts, structure.group_schooling_sd)
    g_s_r = _group_values(config.n_regions, structure.group_schooling_sd)
    D = np.empty(n, dtype=np.int8)
    resid = np.empty((n, k))
    z_noise = np.empty(n)
    cohort = np.empty(n, dtype=np.int64)
    region = np.empty(n, dtype=np.int64)
    for b, lo, hi in _blocks(n):
        rng = block_rng(seed, _POPULATION, b)
        u = rng.random(BLOCK)
        z = rng.standard_normal((BLOCK, 3))
        zn = rng.standard_normal(BLOCK)
        c = rng.integers(0, config.n_cohorts, BLOCK)
        r = rng.integers(0, config.n_regions, BLOCK)
        m = hi - lo
        D[lo:hi] = u[:m] < structure.p
        resid[lo:hi] = z[:m, :k] @ root.T
        z_noise[lo:hi] = zn[:m]
        cohort[lo:hi] = c[:m]
        region[lo:hi] = r[:m]
    v = resid[:, 0] + g_s_c[cohort] + g_s_r[region]
    a_tilde = resid[:, 1]
    S = structure.intercept + structure.first_stage * D + v
    A = structure.delta_AS * S + structure.delta_AD * D + a_tilde
    Q = structure.delta_QS * S + resid[:, 2] if structure.q_enabled else None
    Z = eta = beta_az = None
    if structure.z_noise_var is not None:
        Z = A + np.sqrt(structure.z_noise_var) * z_noise
        _, cov = structure.observable_moments()
        var_a = cov[3, 3]
        beta_az = var_a / (var_a + structure.z_noise_var)
        eta = A - beta_az * Z
    return Population(np.arange(n, dtype=np.int64), D, S, v, a_tilde, A, Q, Z, eta, beta_az,
                      cohort, region, seed=int(seed))


def resolve_exposure(config, n, seed=None):
    """Boolean array: True where the worker's instrument is seen by employers."""
    seed = config.seed if seed is None else seed
    if config.regime == HIDDEN:
        return np.zeros(n, dtype=bool)
    if config.regime == TRANSPARENT:
        return np.ones(n, dtype=bool)
    out = np.empty(n, dtype=bool)
    for b, lo, hi in _blocks(n):
        out[lo:hi] = block_rng(seed, _EXPOSURE, b).random(BLOCK)[:hi - lo] < config.rho
    return out


@dataclass
class Panel:
    """Balanced worker-by-experience panel stored in wide form.

    ``ln_wage`` and ``signal`` are ``(n_workers, horizon + 1)``; everything
    else is per worker. ``exposure`` and ``signal`` are retained for oracle
    checks and are never read by the estimators.
    """

    worker_id: np.ndarray
    ln_wage: np.ndarray
    S: np.ndarray
    D: np.ndarray
    Z: np.ndarray | None = None
    Q: np.ndarray | None = None
    group_cohort: np.ndarray | None = None
    group_region: np.ndarray | None = None
    signal: np.ndarray | None = None
    exposure: np.ndarray | None = None
    regime: str = HIDDEN
    S_raw: np.ndarray | None = None
    value_name: str = "ln_wage"

    @property
    def n_workers(self):
        return self.ln_wage.shape[0]

    @property
    def horizon(self):
        return self.ln_wage.shape[1] - 1

    @property
    def t(self):
        return np.arange(self.horizon + 1)

    def column(self, name):
        return getattr(self, name)

    def subset(self, idx):
        kw = {}
        for f in self.__dataclass_fields__:
            val = getattr(self, f)
            kw[f] = val[idx] if isinstance(val, np.ndarray) else val
        return Panel(**kw)

    def to_frame(self):
        n, T1 = self.ln_wage.shape
        rep = lambda a: None if a is None else np.repeat(a, T1)  # noqa: E731
        cols = {
            "worker_id": rep(self.worker_id),
            "t": np.tile(np.arange(T1), n),
            self.value_name: self.ln_wage.ravel(),
            "S": rep(self.S),
            "D": rep(self.D).astype(np.int64),
            "Z": rep(self.Z),
            "Q": rep(self.Q),
            "group_cohort": rep(self.group_cohort),
            "group_region": rep(self.group_region),
        }
        empty = np.full(n * T1, np.nan)
        return pd.DataFrame({k: (empty if v is None else v) for k, v in cols.items()})

    @classmethod
    def from_frame(cls, df, value_name=None):
        """Rebuild a balanced panel from the long CSV layout."""
        value_name = value_name or ("wage_level" if "wage_level" in df.columns else "ln_wage")
        df = df.sort_values(["worker_id", "t"], kind="mergesort")
        ids = df["worker_id"].to_numpy()
        workers, first = np.unique(ids, return_index=True)
        T1 = int(df["t"].max()) + 1
        if len(df) != len(workers) * T1:
            raise InvalidParameterError("panel is not balanced")
        wide = df[value_name].to_numpy(dtype=float).reshape(len(workers), T1)

        def per_worker(col, dtype=float):
            if col not in df.columns or df[col].isna().all():
                return None
            return df[col].to_numpy()[first].astype(dtype)

        return cls(worker_id=workers.astype(np.int64), ln_wage=wide, S=per_worker("S"),
                   D=per_worker("D", np.int8), Z=per_worker("Z"), Q=per_worker("Q"),
                   group_cohort=per_worker("group_cohort", np.int64),
                   group_region=per_worker("group_region", np.int64), value_name=value_name)


def simulate_panel(workers, structure, config):
    """Wages for every worker and experience year under the configured regime."""
    T = structure.horizon
    if config.horizon != T:
        raise RangeError(f"config horizon {config.horizon} != structure horizon {T}")
    _check_quality(config, structure)
    n = len(workers)
    seed = workers.seed
    transparent = resolve_exposure(config, n, seed)
    sd_eps = np.sqrt(structure.sigma_eps_sq)
    eps = np.empty((n, T + 1))
    for b, lo, hi in _blocks(n):
        eps[lo:hi] = sd_eps * block_rng(seed, _NOISE, b).standard_normal((BLOCK, T + 1))[:hi - lo]
    signal = workers.A[:, None] + eps
    csum = np.cumsum(signal, axis=1)

    shift = np.zeros(n)
    if structure.group_wage_sd > 0:
        shift = (_group_values(config.n_cohorts, structure.group_wage_sd)[workers.group_cohort]
                 + _group_values(config.n_regions, structure.group_wage_sd)[workers.group_region])

    ln_wage = np.empty((n, T + 1))
    Q = workers.Q if structure.q_enabled else None
    for regime, rows in ((HIDDEN, ~transparent), (TRANSPARENT, transparent)):
        if not rows.any():
            continue
        prior = model.conditional_prior(structure, regime)
        learning = model.LearningParams(prior.residual_var, structure.sigma_eps_sq)
        S = workers.S[rows]
        q = None if Q is None else Q[rows]
        pm = prior.mean(S, q, workers.D[rows] if regime == TRANSPARENT else None)
        for t in range(T + 1):
            sig_mean = csum[rows, t - 1] / t if t > 0 else None
            ln_wage[rows, t] = model.wage_from_beliefs(S, q, pm, sig_mean, t, structure, learning)
    ln_wage += shift[:, None]

    workers.transparent = transparent
    return Panel(worker_id=workers.worker_id, ln_wage=ln_wage, S=workers.S, D=workers.D,
                 Z=workers.Z, Q=Q, group_cohort=workers.group_cohort,
                 group_region=workers.group_region, signal=signal, exposure=transparent,
                 regime=config.regime)


def simulate(config, structure):
    """Convenience: draw a population and its panel."""
    return simulate_panel(draw_population(config, structure), structure, config)


def discretize_schooling(panel, grid=(7, 21)):
    """Round schooling to the nearest integer year inside ``grid``; keep the original."""
    s_min, s_max = int(grid[0]), int(grid[1])
    if s_max < s_min:
        raise InvalidParameterError("empty schooling grid")
    raw = panel.S if panel.S_raw is None else panel.S_raw
    s_int = np.clip(np.floor(raw + 0.5), s_min, s_max)
    return replace(panel, S=s_int, S_raw=raw)


# -- heterogeneous returns (binary schooling) ------------------------------

TYPES = ("always", "never", "complier", "defier")


@dataclass(frozen=True)
class HeterogeneousConfig:
    """Binary-schooling potential-outcomes population.

    ``means[type] = (mean psi_0, mean psi_1)`` for that compliance type.
    """

    n_workers: int = 200_000
    horizon: int = 30
    seed: int = 0
    shares: dict = field(default_factory=lambda: {"always": 0.3, "never": 0.3, "complier": 0.4, "defier": 0.0})
    means: dict = field(default_factory=lambda: {"always": (1.2, 1.6), "never": (0.9, 1.0),
                                                 "complier": (1.0, 1.1)})
    sigma_psi_sq: float = 0.04
    sigma_eps_sq: float = 0.04
    p: float = 0.5
    regime: str = HIDDEN

    def __post_init__(self):
        shares = {t: float(self.shares.get(t, 0.0)) for t in TYPES}
        object.__setattr__(self, "shares", shares)
        if shares["defier"] != 0.0:
            raise UnsupportedConfigurationError("defiers are not supported (monotonicity)")
        if any(s < 0 for s in shares.values()) or abs(sum(shares.values()) - 1.0) > 1e-12:
            raise InvalidParameterError("type shares must be nonnegative and sum to 1")
        if not (self.sigma_psi_sq > 0 and self.sigma_eps_sq > 0):
            raise InvalidParameterError("sigma_psi_sq and sigma_eps_sq must be positive")
        if not 0 < self.p < 1:
            raise InvalidParameterError("p must lie in (0, 1)")
        if self.regime not in (HIDDEN, TRANSPARENT):
            raise InvalidParameterError("heterogeneous regime must be hidden or transparent")
        if int(self.n_workers) < 1:
            raise InvalidParameterError("n_workers must be at least 1")
        for t in ("always", "never", "complier"):
            if shares[t] > 0 and t not in self.means:
                raise InvalidParameterError(f"missing means for type {t!r}")

    @property
    def kappa(self):
        return model.kappa(self.sigma_psi_sq, self.sigma_eps_sq)

    def replace(self, **changes):
        return replace(self, **changes)


def _school(type_name, d):
    return {"always": 1, "never": 0, "complier": d}[type_name]


def prior_means(hconfig):
    """Employers' prior mean of psi_S by cell.

    Keys are ``S`` (hidden) or ``(S, D)`` (transparent). Empty cells map to NaN.
    """
    sh, p = hconfig.shares, hconfig.p
    cells = {}
    for s in (0, 1):
        for d in (0, 1):
            mass = 0.0
            tot = 0.0
            for typ in ("always", "never", "complier"):
                if sh[typ] == 0 or _school(typ, d) != s:
                    continue
                w = sh[typ] * (p if d else 1 - p)
                mass += w
                tot += w * hconfig.means[typ][s]
            cells[(s, d)] = (mass, tot)
    if hconfig.regime == TRANSPARENT:
        return {k: (tot / m if m > 0 else np.nan) for k, (m, tot) in cells.items()}
    out = {}
    for s in (0, 1):
        m = cells[(s, 0)][0] + cells[(s, 1)][0]
        tot = cells[(s, 0)][1] + cells[(s, 1)][1]
        out[s] = tot / m if m > 0 else np.nan
    return out


def late_parameters(hconfig):
    """(Upsilon, Upsilon_0, Upsilon_1) of the hidden-instrument mixture."""
    if hconfig.shares["complier"] == 0:
        raise InvalidParameterError("no compliers")
    mu = prior_means(hconfig.replace(regime=HIDDEN))
    m0, m1 = hconfig.means["complier"]
    return mu[1] - mu[0], m0 - mu[0], m1 - mu[1]


def late_plim(hconfig, t, skill_prices=None):
    lam = 1.0 if skill_prices is None else skill_prices[t]
    m0, m1 = hconfig.means["complier"]
    if hconfig.regime == TRANSPARENT:
        return lam * (m1 - m0)
    ups, u0, u1 = late_parameters(hconfig)
    return lam * (ups + (1 - model.theta(hconfig.kappa, t)) * (u1 - u0))


@dataclass
class HPanel:
    worker_id: np.ndarray
    wage: np.ndarray
    S: np.ndarray
    D: np.ndarray
    type_label: np.ndarray
    psi: np.ndarray
    regime: str = HIDDEN

    @property
    def horizon(self):
        return self.wage.shape[1] - 1

    @property
    def n_workers(self):
        return self.wage.shape[0]

    def as_panel(self):
        return Panel(worker_id=self.worker_id, ln_wage=self.wage, S=self.S.astype(float), D=self.D,
                     regime=self.regime, value_name="wage_level")

    def to_frame(self):
        return self.as_panel().to_frame()


def _type_counts(n, shares):
    raw = np.array([shares[t] * n for t in TYPES[:3]])
    counts = np.floor(raw).astype(int)
    rem = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rem]] += 1
    return counts


def simulate_heterogeneous(hconfig, skill_prices=None, seed=None):
    """Wage-level panel of the binary-schooling model.

    Types are assigned by rank of a uniform draw so realised type counts
    match the configured shares up to rounding of ``n * share``.
    """
    seed = hconfig.seed if seed is None else seed
    T = hconfig.horizon
    if skill_prices is not None and skill_prices.horizon != T:
        raise RangeError("skill price horizon does not match config horizon")
    lam = np.ones(T + 1) if skill_prices is None else skill_prices.as_array()
    n = int(hconfig.n_workers)
    rng = block_rng(seed, _HETERO, 0)
    rank = np.argsort(rng.random(n), kind="stable")
    counts = _type_counts(n, hconfig.shares)
    labels = np.empty(n, dtype=object)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    for j, typ in enumerate(TYPES[:3]):
        labels[rank[bounds[j]:bounds[j + 1]]] = typ
    D = (rng.random(n) < hconfig.p).astype(np.int8)
    z = rng.standard_normal((n, 2))
    eps = np.sqrt(hconfig.sigma_eps_sq) * rng.standard_normal((n, T + 1))

    S = np.zeros(n, dtype=np.int8)
    mean_own = np.zeros(n)
    for typ in TYPES[:3]:
        rows = labels == typ
        if not rows.any():
            continue
        s = np.full(rows.sum(), _school(typ, 1), dtype=np.int8) if typ != "complier" else D[rows]
        S[rows] = s
        m = np.asarray(hconfig.means[typ], dtype=float)
        mean_own[rows] = m[s.astype(int)]
    psi = mean_own + np.sqrt(hconfig.sigma_psi_sq) * z[np.arange(n), S]

    mu = prior_means(hconfig)
    if hconfig.regime == TRANSPARENT:
        prior = np.array([mu[(int(s), int(d))] for s, d in ((0, 0), (0, 1), (1, 0), (1, 1))])[2 * S + D]
    else:
        prior = np.array([mu[0], mu[1]])[S]
    signal = psi[:, None] + eps
    csum = np.cumsum(signal, axis=1)
    k = hconfig.kappa
    wage = np.empty((n, T + 1))
    for t in range(T + 1):
        sm = csum[:, t - 1] / t if t > 0 else None
        wage[:, t] = lam[t] * model.posterior_ability(prior, sm, t, k)
    return HPanel(np.arange(n, dtype=np.int64), wage, S, D, labels, psi, hconfig.regime)
