"""Flat ``section.key = value`` experiment configuration.

Files hold one assignment per line; ``#`` starts a comment. Every key must
be known, and types follow the defaults below. The resolved form (all keys,
sorted) is what gets hashed and embedded in outputs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from . import model
from .errors import ConfigError, EmplearnError
from .simulate import SimulationConfig

FITS = ("constant", "sequential", "joint", "partial")

DEFAULTS = {
    "structure.beta_ws": 0.04,
    "structure.delta_AS": 0.015,
    "structure.intercept": 10.0,
    "structure.first_stage": 0.237,
    "structure.sigma_v_sq": 0.25,
    "structure.p": 0.5,
    "structure.cov_v_atilde": 0.0,
    "structure.var_atilde": 0.01,
    "structure.sigma_eps_sq": 0.01,
    "structure.beta_wq": 0.0,
    "structure.delta_QS": 0.0,
    "structure.var_qtilde": 0.0,
    "structure.cov_v_qtilde": 0.0,
    "structure.cov_atilde_qtilde": 0.0,
    "structure.delta_AD": 0.0,
    "structure.z_noise_var": None,
    "structure.group_wage_sd": 0.0,
    "structure.group_schooling_sd": 0.0,
    "structure.lambda_slope": 0.0,
    "structure.baseline_linear": 0.0,
    "structure.baseline_quadratic": 0.0,
    "structure.include_variance_term": False,
    "calibration.enabled": True,
    "calibration.kappa": 0.505,
    "calibration.initial_return": 0.198,
    "calibration.limit_return": 0.055,
    "simulation.n_workers": 200_000,
    "simulation.horizon": 30,
    "simulation.regimes": "hidden,transparent",
    "simulation.rho": 0.5,
    "simulation.seed": 20240601,
    "simulation.quality_violation": False,
    "simulation.n_cohorts": 10,
    "simulation.n_regions": 20,
    "estimation.fits": "constant,sequential,joint",
    "estimation.n_boot": 200,
    "estimation.weighting": "uniform",
    "estimation.grid_size": 2001,
    "estimation.covariates": "",
    "analysis.T_irr": 40,
    "analysis.baseline": "flat",
    "replication.n_reps": 100,
    "replication.jobs": 1,
    "output.write_panel": True,
}

RUNTIME_ONLY = {"replication.jobs"}
_OPTIONAL_FLOAT = {"structure.z_noise_var"}
_CALIBRATED = ("structure.cov_v_atilde", "structure.sigma_eps_sq", "structure.beta_ws")


def _coerce(key, raw):
    default = DEFAULTS[key]
    text = raw.strip()
    try:
        if key in _OPTIONAL_FLOAT:
            return None if text.lower() in ("", "none") else float(text)
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from exc
    return text


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _split(text):
    return [x.strip() for x in text.split(",") if x.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    values: tuple  # sorted (key, value) pairs

    @classmethod
    def from_mapping(cls, mapping=None):
        vals = dict(DEFAULTS)
        for key, val in (mapping or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            vals[key] = _coerce(key, val) if isinstance(val, str) else val
        cfg = cls(tuple(sorted(vals.items())))
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text):
        seen = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            if key in seen:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            seen[key] = _coerce(key, raw)
        return cls.from_mapping(seen)

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def __getitem__(self, key):
        return dict(self.values)[key]

    def with_overrides(self, **kv):
        vals = dict(self.values)
        for k, v in kv.items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {k!r}")
            vals[k] = v
        return ExperimentConfig.from_mapping(vals)

    def to_text(self):
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.values)

    @property
    def sha256(self):
        """Hash of everything that can change results; the parallelism hint is left out."""
        text = "".join(f"{k} = {_format(v)}\n" for k, v in self.values if k not in RUNTIME_ONLY)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    # -- typed views --------------------------------------------------------

    @property
    def regimes(self):
        return tuple(_split(self["simulation.regimes"]))

    @property
    def fits(self):
        return tuple(_split(self["estimation.fits"]))

    @property
    def covariates(self):
        return tuple(_split(self["estimation.covariates"]))

    def structure(self):
        v = dict(self.values)
        T = v["simulation.horizon"]
        slope = v["structure.lambda_slope"]
        prices = model.SkillPriceProfile.linear(T, slope) if slope else model.SkillPriceProfile.constant(T)
        baseline = model.ExperienceBaseline.polynomial(T, v["structure.baseline_linear"],
                                                       v["structure.baseline_quadratic"],
                                                       v["structure.include_variance_term"])
        skip = {"structure.lambda_slope", "structure.baseline_linear", "structure.baseline_quadratic",
                "structure.include_variance_term"}
        kw = {k.split(".", 1)[1]: val for k, val in v.items()
              if k.startswith("structure.") and k not in skip}
        kw.update(skill_prices=prices, baseline=baseline)
        if v["calibration.enabled"]:
            for k in _CALIBRATED:
                kw.pop(k.split(".", 1)[1])
            return model.StructuralParams.calibrated(v["calibration.kappa"],
                                                     v["calibration.initial_return"],
                                                     v["calibration.limit_return"], **kw)
        return model.StructuralParams(**kw)

    def simulation(self, regime, seed):
        v = dict(self.values)
        return SimulationConfig(n_workers=v["simulation.n_workers"], horizon=v["simulation.horizon"],
                                regime=regime, rho=v["simulation.rho"] if regime == model.PARTIAL else 0.0,
                                seed=seed, quality_violation=v["simulation.quality_violation"],
                                n_cohorts=v["simulation.n_cohorts"], n_regions=v["simulation.n_regions"])

    def validate(self):
        v = dict(self.values)
        try:
            structure = self.structure()
            for regime in self.regimes:
                if regime not in model.REGIMES:
                    raise ConfigError(f"simulation.regimes: unknown regime {regime!r}")
                sim = self.simulation(regime, v["simulation.seed"])
                if structure.delta_AD != 0 and not sim.quality_violation:
                    raise ConfigError("structure.delta_AD != 0 needs simulation.quality_violation = true")
        except ConfigError:
            raise
        except EmplearnError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.regimes:
            raise ConfigError("simulation.regimes is empty")
        if len(set(self.regimes)) != len(self.regimes):
            raise ConfigError("simulation.regimes lists a regime twice")
        for fit in self.fits:
            if fit not in FITS:
                raise ConfigError(f"estimation.fits: unknown fit {fit!r}")
            if fit in ("sequential", "joint") and not {"hidden", "transparent"} <= set(self.regimes):
                raise ConfigError(f"fit {fit!r} needs hidden and transparent regimes")
            if fit == "partial" and "partial" not in self.regimes:
                raise ConfigError("fit 'partial' needs the partial regime")
            if fit == "constant" and not {"hidden", "partial"} & set(self.regimes):
                raise ConfigError("fit 'constant' needs a hidden or partial regime")
        for col in self.covariates:
            if col not in ("group_cohort", "group_region"):
                raise ConfigError(f"estimation.covariates: unknown column {col!r}")
        if v["estimation.n_boot"] < 0 or v["estimation.n_boot"] == 1:
            raise ConfigError("estimation.n_boot must be 0 or at least 2")
        if v["estimation.weighting"] not in ("uniform", "inverse_variance"):
            raise ConfigError("estimation.weighting must be uniform or inverse_variance")
        if v["estimation.grid_size"] < 3:
            raise ConfigError("estimation.grid_size must be at least 3")
        if v["analysis.T_irr"] < v["simulation.horizon"]:
            raise ConfigError("analysis.T_irr must be at least simulation.horizon")
        if v["replication.n_reps"] < 1 or v["replication.jobs"] < 1:
            raise ConfigError("replication.n_reps and replication.jobs must be positive")
        base = v["analysis.baseline"]
        if base != "flat" and not Path(base).is_file():
            raise ConfigError(f"analysis.baseline: {base!r} is neither 'flat' nor a file")
