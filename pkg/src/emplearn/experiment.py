"""Pipeline orchestration: simulate, estimate, fit, decompose, replicate, report."""
from __future__ import annotations

import io
import math
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, model
from .config import ExperimentConfig
from .errors import EmplearnError, InvalidParameterError, NoSolutionError
from .estimate import (CovariateSpec, ExperienceEstimates, experience_profile, fit_mixing,
                       joint_fit, partial_bounds, sequential_fit)
from .simulate import Panel, draw_population, simulate_panel

HEADER_KEY = "config_sha256"
SECTIONS = ("parameters", "theta", "irr")


class MissingInputError(InvalidParameterError):
    """A pipeline input file or report section is absent."""


def derive_seed(master, *keys):
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def staged(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except EmplearnError as exc:
                if not hasattr(exc, "stage"):
                    exc.stage = name
                raise
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


# -- stages -------------------------------------------------------------------

@staged("simulate")
def simulate_samples(cfg, rep=0):
    structure = cfg.structure()
    master = cfg["simulation.seed"]
    panels = {}
    for j, regime in enumerate(cfg.regimes):
        sim = cfg.simulation(regime, derive_seed(master, rep, j))
        panels[regime] = simulate_panel(draw_population(sim, structure), structure, sim)
    return panels


@staged("estimate")
def estimate_samples(cfg, panels, rep=0):
    cov = CovariateSpec(cfg.covariates)
    master = cfg["simulation.seed"]
    out = {}
    for j, (regime, panel) in enumerate(panels.items()):
        out[regime] = experience_profile(panel, cov, n_boot=cfg["estimation.n_boot"],
                                         seed=derive_seed(master, rep, 1000 + j))
    return out


def _fit_one(cfg, mode, est):
    weighting = cfg["estimation.weighting"]
    grid = cfg["estimation.grid_size"]
    if mode == "constant":
        src = est["hidden"] if "hidden" in est else est["partial"]
        return fit_mixing(src, weighting=weighting, grid_size=grid)
    if mode == "sequential":
        return sequential_fit(est["transparent"], est["hidden"], weighting)[1]
    if mode == "joint":
        return joint_fit(est["hidden"], est["transparent"])[1]
    if mode == "partial":
        return partial_bounds(est["partial"], weighting).fit
    raise InvalidParameterError(f"unknown fit {mode!r}")


def _failed_fit(mode, exc, horizon):
    from .estimate import MixingFit

    fit = MixingFit(math.nan, math.nan, math.nan, None, math.nan, False, mode,
                    np.arange(horizon + 1))
    fit.extras["error"] = f"{type(exc).__name__}: {exc}"
    return fit


@staged("fit")
def fit_all(cfg, estimates):
    """Fit every configured mode. Only the first (primary) fit is allowed to abort the run;
    later ones that fail are kept as unidentified with the error attached."""
    fits = {}
    for i, mode in enumerate(cfg.fits):
        try:
            fits[mode] = _fit_one(cfg, mode, estimates)
        except EmplearnError as exc:
            if i == 0:
                raise
            fits[mode] = _failed_fit(mode, exc, cfg["simulation.horizon"])
    return fits


def load_baseline(cfg):
    src = cfg["analysis.baseline"]
    if src == "flat":
        return None
    df = pd.read_csv(src, comment="#", float_precision="round_trip")
    col = "wbar" if "wbar" in df.columns else df.columns[-1]
    w = df[col].to_numpy(dtype=float)
    if len(w) != cfg["analysis.T_irr"] + 1:
        raise InvalidParameterError("baseline file must have T_irr + 1 rows")
    return w


@staged("analyze")
def analyze_fit(cfg, fit):
    T = cfg["simulation.horizon"]
    lam = fit.lambda_profile if fit.lambda_profile is not None else np.ones(T + 1)
    dec = analysis.decompose_fit(fit, T, lam)
    try:
        summary = analysis.signaling_decomposition(dec.private, dec.social, load_baseline(cfg),
                                                   cfg["analysis.T_irr"], fit.b_inf, fit.b_inf)
    except NoSolutionError as exc:
        # e.g. tiny samples whose fitted returns put the IRR outside the bracket
        summary = analysis.SignalingSummary(math.nan, math.nan, math.nan, math.nan,
                                            error=f"{type(exc).__name__}: {exc}")
    return dec, summary


# -- file formatting ------------------------------------------------------------

def header(cfg_hash):
    return f"# {HEADER_KEY}: {cfg_hash}\n"


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def kv_text(cfg_hash, mapping):
    return header(cfg_hash) + "".join(f"{k} = {_fmt(v)}\n" for k, v in mapping.items())


def csv_text(cfg_hash, df):
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    return header(cfg_hash) + buf.getvalue()


def read_kv(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def read_csv(path):
    return pd.read_csv(path, comment="#", float_precision="round_trip")


class AtomicDir:
    """Collect outputs in a scratch directory; move them into place only on success."""

    def __init__(self, out):
        self.out = Path(out)

    def __enter__(self):
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.out.parent))
        return self

    def write(self, name, text):
        (self.tmp / name).write_text(text, encoding="utf-8")

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.out.mkdir(parents=True, exist_ok=True)
            for f in sorted(self.tmp.iterdir()):
                shutil.move(str(f), str(self.out / f.name))
        shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def estimates_frame(estimates):
    return pd.concat([e.to_frame() for e in estimates.values()], ignore_index=True)


def fit_mapping(fit, mode):
    out = {"kappa_hat": fit.kappa_hat, "b0": fit.b0, "b_inf": fit.b_inf, "rss": fit.rss,
           "identified": fit.identified, "mode": mode}
    if "error" in fit.extras:
        out["error"] = fit.extras["error"]
    return out


def lambda_frame(fits, horizon):
    rows = []
    for mode, fit in fits.items():
        lam = fit.lambda_profile if fit.lambda_profile is not None else np.ones(horizon + 1)
        rows.append(pd.DataFrame({"mode": mode, "t": np.arange(len(lam)), "lambda": lam}))
    return pd.concat(rows, ignore_index=True)


# -- bundle writers -----------------------------------------------------------------

def write_panels(sink, cfg, panels):
    for regime, panel in panels.items():
        sink.write(f"panel_{regime}.csv", csv_text(cfg.sha256, panel.to_frame()))


def write_fits(sink, cfg, estimates, fits):
    h = cfg.sha256
    sink.write("estimates.csv", csv_text(h, estimates_frame(estimates)))
    primary = cfg.fits[0]
    sink.write("fit_summary.txt", kv_text(h, fit_mapping(fits[primary], primary)))
    for mode, fit in fits.items():
        sink.write(f"fit_{mode}.txt", kv_text(h, fit_mapping(fit, mode)))
    sink.write("lambda_profile.csv", csv_text(h, lambda_frame(fits, cfg["simulation.horizon"])))


def write_analysis(sink, cfg, dec, summary):
    h = cfg.sha256
    sink.write("decomposition.csv", csv_text(h, analysis.decomposition_frame(dec)))
    sink.write("irr_summary.txt", kv_text(h, summary.as_dict()))


def write_config(sink, cfg):
    sink.write("config.txt", header(cfg.sha256) + cfg.to_text())


@dataclass
class Bundle:
    path: Path
    config: ExperimentConfig
    panels: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    decomposition: object = None
    summary: object = None


def run_experiment(cfg, out):
    """Run the whole pipeline and write the bundle into ``out``."""
    panels = simulate_samples(cfg)
    estimates = estimate_samples(cfg, panels)
    fits = fit_all(cfg, estimates)
    dec, summary = analyze_fit(cfg, fits[cfg.fits[0]])
    with AtomicDir(out) as sink:
        write_config(sink, cfg)
        if cfg["output.write_panel"]:
            write_panels(sink, cfg, panels)
        write_fits(sink, cfg, estimates, fits)
        write_analysis(sink, cfg, dec, summary)
        sink.write("report.txt", header(cfg.sha256) + emit_report(sink.tmp))
    return Bundle(Path(out), cfg, panels, estimates, fits, dec, summary)


def load_panels(directory, regimes):
    panels = {}
    for regime in regimes:
        path = Path(directory) / f"panel_{regime}.csv"
        if not path.is_file():
            raise MissingInputError(f"missing panel file {path}")
        panel = Panel.from_frame(read_csv(path))
        panel.regime = regime
        panels[regime] = panel
    return panels


def load_fit(directory, cfg):
    """Rebuild the primary fit from ``fit_summary.txt`` and ``lambda_profile.csv``."""
    from .estimate import MixingFit

    d = Path(directory)
    path = d / "fit_summary.txt"
    if not path.is_file():
        raise MissingInputError(f"missing {path}")
    kv = read_kv(path)
    lam = None
    lp = d / "lambda_profile.csv"
    if lp.is_file():
        df = read_csv(lp)
        df = df[df["mode"] == kv["mode"]]
        if len(df):
            lam = df["lambda"].to_numpy(dtype=float)
    T = cfg["simulation.horizon"]
    return MixingFit(float(kv["b0"]), float(kv["b_inf"]), float(kv["kappa_hat"]), lam,
                     float(kv["rss"]), kv["identified"] == "true", kv["mode"], np.arange(T + 1))


# -- replications ---------------------------------------------------------------

def _truth(structure, cfg):
    k = structure.kappa(model.HIDDEN)
    social = model.social_return(structure, 0)
    out = {}
    for mode in cfg.fits:
        if mode == "partial":
            b0 = model.iv_plim(structure, 0, model.PARTIAL, cfg["simulation.rho"])
        else:
            b0 = model.iv_plim(structure, 0, model.HIDDEN)
        out[mode] = {"kappa_hat": k, "b0": b0, "b_inf": social}
    return out


def _refit_sd(cfg, mode, est):
    """Bootstrap sd of the fitted parameters, refitting on each replicate profile."""
    if mode == "joint":
        return None
    keys = {"constant": ("hidden" if "hidden" in est else "partial",), "partial": ("partial",),
            "sequential": ("transparent", "hidden")}[mode]
    if any(est[k].draws is None for k in keys):
        return None
    B = est[keys[0]].draws.shape[0]
    vals = []
    for b in range(B):
        boot = {k: ExperienceEstimates.from_arrays(est[k].t, est[k].draws[b], None, est[k].estimator)
                for k in keys}
        boot.update({k: v for k, v in est.items() if k not in boot})
        try:
            fit = _fit_one(cfg, mode, boot)
        except EmplearnError:
            continue
        if fit.identified:
            vals.append((fit.kappa_hat, fit.b0, fit.b_inf))
    if len(vals) < 2:
        return None
    sd = np.std(np.asarray(vals), axis=0, ddof=1)
    return dict(zip(("kappa_hat", "b0", "b_inf"), sd))


def replicate_once(cfg_text, rep):
    """One replication; returns {mode: {param: (estimate, sd or None)}} or an error string."""
    cfg = ExperimentConfig.from_text(cfg_text)
    try:
        panels = simulate_samples(cfg, rep)
        est = estimate_samples(cfg, panels, rep)
        out = {}
        for mode in cfg.fits:
            try:
                fit = _fit_one(cfg, mode, est)
            except EmplearnError:
                out[mode] = {p: (math.nan, None) for p in ("kappa_hat", "b0", "b_inf")}
                continue
            sd = _refit_sd(cfg, mode, est)
            out[mode] = {p: (getattr(fit, p), None if sd is None else sd[p])
                         for p in ("kappa_hat", "b0", "b_inf")}
        return rep, out
    except EmplearnError as exc:
        return rep, f"{type(exc).__name__}: {exc}"


Z90 = 1.6448536269514722

SUMMARY_COLUMNS = ["parameter", "truth", "mean", "sd", "sd_defined", "bias", "coverage_90", "n_ok",
                   "n_failed"]


@dataclass
class ReplicationSummary:
    rows: list
    n_reps: int
    failures: list

    def frame(self):
        return pd.DataFrame(self.rows, columns=SUMMARY_COLUMNS)

    def row(self, parameter):
        for r in self.rows:
            if r[0] == parameter:
                return dict(zip(SUMMARY_COLUMNS, r))
        raise KeyError(parameter)


def run_replications(cfg, jobs=None, n_reps=None):
    """Monte Carlo over replications; the result does not depend on ``jobs``."""
    n_reps = cfg["replication.n_reps"] if n_reps is None else int(n_reps)
    jobs = cfg["replication.jobs"] if jobs is None else int(jobs)
    if n_reps < 1:
        raise InvalidParameterError("n_reps must be at least 1")
    text = cfg.to_text()
    if jobs <= 1:
        results = [replicate_once(text, r) for r in range(n_reps)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(replicate_once, [text] * n_reps, range(n_reps)))
    results.sort(key=lambda x: x[0])
    ok = [(r, res) for r, res in results if not isinstance(res, str)]
    failures = [(r, res) for r, res in results if isinstance(res, str)]
    truth = _truth(cfg.structure(), cfg)
    rows = []
    for mode in cfg.fits:
        for p in ("kappa_hat", "b0", "b_inf"):
            pairs = [res[mode][p] for _, res in ok if np.isfinite(res[mode][p][0])]
            ests = np.array([e for e, _ in pairs])
            tv = truth[mode][p]
            n_ok = len(ests)
            mean = float(ests.mean()) if n_ok else math.nan
            sd = float(ests.std(ddof=1)) if n_ok > 1 else math.nan
            cov_pairs = [(e, s) for e, s in pairs if s is not None]
            coverage = (float(np.mean([abs(e - tv) <= Z90 * s for e, s in cov_pairs]))
                        if cov_pairs else math.nan)
            rows.append([f"{mode}.{p}", tv, mean, sd, n_ok > 1, mean - tv, coverage, n_ok,
                         n_reps - n_ok])
    return ReplicationSummary(rows, n_reps, failures)


def summary_text(cfg, summary):
    df = summary.frame()
    return csv_text(cfg.sha256, df)


# -- report ------------------------------------------------------------------------

def _pct(value):
    v = float(value)
    return "    n/a" if math.isnan(v) else f"{100 * v:7.1f}%"


def emit_report(bundle):
    """Three-panel text table from a bundle directory (or a mapping of its parsed parts)."""
    if isinstance(bundle, (str, Path)):
        d = Path(bundle)
        parts = {}
        if (d / "fit_summary.txt").is_file():
            parts["parameters"] = read_kv(d / "fit_summary.txt")
        if "parameters" in parts:
            parts["theta"] = parts["parameters"]
        if (d / "irr_summary.txt").is_file():
            parts["irr"] = read_kv(d / "irr_summary.txt")
    else:
        parts = dict(bundle)
    missing = [s for s in SECTIONS if s not in parts]
    if missing:
        raise MissingInputError("report sections missing: " + ", ".join(missing))
    fit, irr = parts["parameters"], parts["irr"]
    kappa = float(fit["kappa_hat"])
    lines = ["Parameters of interest",
             f"  initial return b0      {float(fit['b0']):8.4f}",
             f"  limit return b_inf     {float(fit['b_inf']):8.4f}",
             f"  speed of learning      {kappa:8.4f}",
             f"  fit mode               {fit['mode']:>8}",
             "Weight on initial signal"]
    if math.isnan(kappa):
        lines.append("  (speed of learning not identified)")
    else:
        for t, v in analysis.theta_table(kappa).items():
            lines.append(f"  t = {t:<3d}               {100 * v:7.1f}%")
    lines += ["Internal rate of return",
              f"  private IRR            {_pct(irr['private_irr'])}",
              f"  social return          {_pct(irr['social_return'])}",
              f"  signaling share        {_pct(irr['signaling_share'])}"]
    return "\n".join(lines) + "\n"
