"""Monte Carlo measurement of the reduction errors and their orders in eps.

For every eps the SPDE, the amplitude equations and the fast correction K are
advanced in one fused loop over the slow grid, all driven by the same Brownian
increments.  At each snapshot the L2 errors::

    R_first  = |u - eps a1 e1 - eps K|          (R1 in Case I, R3 in Case II)
    R_second = |u - eps a1 e1 - eps^2 a2 e1 - eps K|   (R2 / R4)

are computed per sample (``- eps K`` only when ``include_K``) and averaged
over samples.  Both K variants are always measured; ``include_K`` picks the
primary one.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats

from .amplitude import (
    CASE_I, CASE_II, COUPLINGS, case1_step, case2_cross, case2_density, case2_driver_increment,
    fast_K_step, first_order_step, reduce_model, sigma_coefficients,
)
from .errors import DomainError, ExperimentAborted, FitError
from .model import allen_cahn_model
from .noise import sample_paths
from .spde import BLOWUP_GUARD, envelope_norms, snapshot_indices, spde_step, stopping_threshold

MAX_STEPS = 2_000_000
_CASE_ALIASES = {"1": CASE_I, "I": CASE_I, "CaseI": CASE_I, "case1": CASE_I,
                 "2": CASE_II, "II": CASE_II, "CaseII": CASE_II, "case2": CASE_II}


def normalize_case(tag) -> str:
    try:
        return _CASE_ALIASES[str(tag)]
    except KeyError:
        raise DomainError(f"unknown case {tag!r}; use 1/CaseI or 2/CaseII") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one error study.

    ``slow_dt`` fixes the slow step dT for every eps (fast step ``dT / eps^2``),
    so all eps share the same standard-normal draws.  Setting ``dt`` instead
    fixes the fast step (slow step ``eps^2 dt``).
    """

    case_tag: str = CASE_I
    epsilon_list: tuple[float, ...] = (0.1, 0.05, 0.025)
    h: float = 20.0
    T0: float = 1.0
    n_samples: int = 100
    n_modes: int = 32
    n_quad: int = 512
    dt: float | None = None
    slow_dt: float = 2.5e-4
    kappa: float = 0.04
    seed: int = 0
    include_K: bool = True
    coupling: str = "signed"
    n_snapshots: int = 100
    chunk_size: int = 100
    alpha: float = 1.0
    n_bootstrap: int = 1000
    output_path: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "case_tag", normalize_case(self.case_tag))
        eps = tuple(float(e) for e in np.atleast_1d(self.epsilon_list))
        object.__setattr__(self, "epsilon_list", eps)
        if not eps or any(not 0.0 < e < 1.0 for e in eps):
            raise DomainError("epsilon values must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("epsilon_list must be strictly decreasing")
        if not 0.0 < self.kappa < 1.0 / 20.0:
            raise DomainError("kappa must lie in (0, 1/20)")
        if self.n_samples < 1 or self.chunk_size < 1 or self.n_snapshots < 1:
            raise DomainError("n_samples, chunk_size and n_snapshots must be >= 1")
        if not self.T0 > 0:
            raise DomainError("T0 must be positive")
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if not self.slow_dt > 0:
            raise DomainError("slow_dt must be positive")
        if self.coupling not in COUPLINGS:
            raise DomainError(f"coupling must be one of {COUPLINGS}")

    def grid(self, epsilon: float) -> tuple[float, int]:
        """(fast dt, number of steps) for one eps."""
        if self.dt is not None:
            dt = self.dt
            n = int(round(self.T0 / (epsilon**2 * dt)))
        else:
            dt = self.slow_dt / epsilon**2
            n = int(round(self.T0 / self.slow_dt))
        if n < 1:
            raise DomainError("time step larger than the horizon")
        if n > MAX_STEPS:
            raise DomainError(f"{n} steps exceed the limit of {MAX_STEPS}; raise dt")
        return dt, n

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise DomainError(f"not a boolean: {text!r}")


def parse_config_value(key: str, text: str):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if key not in fields:
        raise DomainError(f"unknown config key {key!r}")
    text = text.strip()
    if key == "epsilon_list":
        return tuple(float(v) for v in text.split(",") if v.strip())
    if key in ("case_tag", "coupling", "output_path"):
        return text
    if key == "include_K":
        return _parse_bool(text)
    if key == "dt":
        return None if text.lower() in ("", "none", "auto") else float(text)
    if key in ("n_samples", "n_modes", "n_quad", "seed", "n_snapshots", "chunk_size", "n_bootstrap"):
        return int(text)
    return float(text)


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_config_value(key, value)
    return values


# -- results -------------------------------------------------------------------

@dataclass(eq=False)
class EpsilonResult:
    """Aggregated errors for one eps.  ``*_samples`` arrays are ``(n_snapshots, n_valid)``."""

    epsilon: float
    times: np.ndarray
    slow_times: np.ndarray
    mean_first: np.ndarray
    se_first: np.ndarray
    mean_second: np.ndarray
    se_second: np.ndarray
    mean_first_alt: np.ndarray
    mean_second_alt: np.ndarray
    clamp_fraction: float = 0.0
    exceedance_count: int = 0
    blowup_count: int = 0
    n_valid: int = 0
    first_samples: np.ndarray | None = None
    second_samples: np.ndarray | None = None

    @property
    def sup_first(self) -> float:
        return float(np.max(self.mean_first)) if self.mean_first.size else math.nan

    @property
    def sup_second(self) -> float:
        return float(np.max(self.mean_second)) if self.mean_second.size else math.nan

    @property
    def sup_first_alt(self) -> float:
        return float(np.max(self.mean_first_alt)) if self.mean_first_alt.size else math.nan

    @property
    def sup_second_alt(self) -> float:
        return float(np.max(self.mean_second_alt)) if self.mean_second_alt.size else math.nan

    @property
    def pointwise_improvement(self) -> bool:
        """Second-order mean error below first-order mean error at every snapshot after t = 0."""
        later = self.slow_times > 0
        return bool(np.all(self.mean_second[later] < self.mean_first[later]))


@dataclass(frozen=True)
class ConvergenceFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    epsilons: tuple[float, ...]
    excluded: tuple[float, ...] = ()


_NAN_FIT = ConvergenceFit(math.nan, math.nan, math.nan, math.nan, ())


@dataclass(eq=False)
class ErrorReport:
    case_tag: str
    results: list[EpsilonResult] = field(default_factory=list)
    fit_first: ConvergenceFit = _NAN_FIT
    fit_second: ConvergenceFit = _NAN_FIT
    include_K: bool = True
    coupling: str = "signed"
    config: ExperimentConfig | None = None

    def by_epsilon(self, eps: float) -> EpsilonResult:
        for r in self.results:
            if r.epsilon == eps:
                return r
        raise KeyError(eps)


# -- fitting -------------------------------------------------------------------

def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def fit_convergence_order(sup_errors: Mapping[float, float],
                          samples: Mapping[float, np.ndarray] | None = None,
                          n_bootstrap: int = 1000, seed: int = 0, level: float = 0.95) -> ConvergenceFit:
    """Least-squares slope of ``ln error`` against ``ln eps``.

    With ``samples`` (per eps, an array ``(n_snapshots, n_samples)`` of error
    curves) the confidence interval is a percentile bootstrap over samples,
    refitting the sup of the resampled mean curve.  Without samples it is the
    t-interval of the regression slope.  Nonpositive or non-finite errors are
    dropped with a warning.
    """
    pairs = sorted((float(e), float(v)) for e, v in sup_errors.items())
    keep = [(e, v) for e, v in pairs if e > 0 and np.isfinite(v) and v > 0]
    excluded = tuple(e for e, v in pairs if (e, v) not in keep)
    if excluded:
        warnings.warn(f"excluding nonpositive or non-finite errors at eps = {excluded}", RuntimeWarning,
                      stacklevel=2)
    if len(keep) < 3:
        raise FitError(f"need at least 3 usable points, have {len(keep)}")
    eps = np.array([e for e, _ in keep])
    x, y = np.log(eps), np.log([v for _, v in keep])
    slope, intercept = _ols(x, y)
    alpha = 1.0 - level
    if samples is not None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB0075])))
        boot = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            yb = []
            for e in eps:
                curves = np.asarray(samples[e])
                pick = rng.integers(0, curves.shape[1], curves.shape[1])
                yb.append(np.log(np.max(np.mean(curves[:, pick], axis=1))))
            boot[b] = _ols(x, np.array(yb))[0]
        lo, hi = np.quantile(boot, [alpha / 2, 1 - alpha / 2])
        lo, hi = min(lo, slope), max(hi, slope)
    else:
        resid = y - (slope * x + intercept)
        dof = len(x) - 2
        if dof > 0:
            se = math.sqrt(float(resid @ resid) / dof / float(np.sum((x - x.mean()) ** 2)))
            half = float(stats.t.ppf(1 - alpha / 2, dof)) * se
        else:
            half = 0.0
        lo, hi = slope - half, slope + half
    return ConvergenceFit(slope, intercept, float(lo), float(hi), tuple(float(e) for e in eps), excluded)


# -- the fused loop ------------------------------------------------------------

def _run_epsilon(cfg: ExperimentConfig, eps: float, model, red, sig) -> EpsilonResult:
    dt, n_steps = cfg.grid(eps)
    dT = eps**2 * dt
    basis = model.basis
    idx = snapshot_indices(n_steps, max(1, n_steps // cfg.n_snapshots))
    n_snap = idx.size
    threshold = stopping_threshold(eps, cfg.kappa)
    decay = np.exp(-basis.eigenvalues * dt)
    case2 = cfg.case_tag == CASE_II

    curves = {key: np.empty((n_snap, cfg.n_samples)) for key in ("f_on", "s_on", "f_off", "s_off")}
    dead_all = np.zeros(cfg.n_samples, dtype=bool)
    exceeded_all = np.zeros(cfg.n_samples, dtype=bool)
    clamped = evals = 0
    e1 = np.zeros(basis.n_modes)
    e1[0] = 1.0

    for start in range(0, cfg.n_samples, cfg.chunk_size):
        ids = np.arange(start, min(start + cfg.chunk_size, cfg.n_samples))
        path = sample_paths(dt, n_steps, model.noise_modes, cfg.seed, ids)
        m = ids.size
        u = np.tile(eps * e1, (m, 1))
        a1 = np.ones((m, 1))
        a2 = np.zeros((m, 1))
        K = np.zeros((m, basis.n_modes))
        dead = np.zeros(m, dtype=bool)
        exceeded = np.zeros(m, dtype=bool)

        def record(slot):
            d_on = u.copy()
            d_on[:, 0] -= eps * a1[:, 0]
            d_off = d_on.copy()
            d_on -= eps * K
            for tag, d in (("on", d_on), ("off", d_off)):
                f = np.sqrt(np.sum(d * d, axis=-1))
                d[:, 0] -= eps**2 * a2[:, 0]
                s = np.sqrt(np.sum(d * d, axis=-1))
                curves["f_" + tag][slot, ids] = f
                curves["s_" + tag][slot, ids] = s

        record(0)
        slot = 1
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(n_steps):
                dW = path.increment(n)
                dWt = eps * dW
                u = spde_step(model, u, dW, eps, dt)
                if case2:
                    b1, b2 = a1[:, 0], a2[:, 0]
                    root, neg = case2_density(sig, b1, b2)
                    clamped += int(np.count_nonzero(neg & ~dead))
                    evals += int(np.count_nonzero(~dead))
                    cross = case2_cross(red, K, eps) if cfg.coupling == "normalized" else None
                    dB = case2_driver_increment(cfg.coupling, sig, b1, b2, dWt, root, dWt[:, 0], cross)
                    a2 = (b2 + dT * sig.sigma4_fn(b1) * b2 + root * dB)[:, None]
                else:
                    a2 = case1_step(red, a1, a2, dWt, dT)
                K = fast_K_step(red, K, a1, None, dWt, decay)
                a1 = first_order_step(red, a1, dWt, dT)

                norm = np.sqrt(np.sum(u * u, axis=-1))
                bad = ~(norm <= BLOWUP_GUARD) | ~np.isfinite(a1[:, 0]) | ~np.isfinite(a2[:, 0])
                if np.any(bad & ~dead):
                    dead |= bad
                    for arr in (u, a1, a2, K):
                        arr[dead] = np.nan
                live = ~dead
                n1, n2, npsi = envelope_norms(u[live], a1[live], eps, basis, cfg.alpha)
                exceeded[live] |= (n1 > threshold) | (n2 > threshold) | (npsi > threshold)
                if slot < n_snap and idx[slot] == n + 1:
                    record(slot)
                    slot += 1
        dead_all[ids] = dead
        exceeded_all[ids] = exceeded & ~dead

    n_dead = int(np.count_nonzero(dead_all))
    if n_dead > cfg.n_samples / 2:
        raise ExperimentAborted(
            f"eps={eps}: {n_dead} of {cfg.n_samples} samples blew up; parameters are outside the "
            "small-amplitude regime")
    ok = ~dead_all
    n_ok = int(np.count_nonzero(ok))
    primary, alt = ("on", "off") if cfg.include_K else ("off", "on")

    def stat(key):
        c = curves[key][:, ok]
        se = c.std(axis=1, ddof=1) / math.sqrt(n_ok) if n_ok > 1 else np.zeros(n_snap)
        return c.mean(axis=1), se

    mf, sf = stat("f_" + primary)
    ms, ss = stat("s_" + primary)
    return EpsilonResult(
        epsilon=eps, times=idx * dt, slow_times=idx * dT,
        mean_first=mf, se_first=sf, mean_second=ms, se_second=ss,
        mean_first_alt=stat("f_" + alt)[0], mean_second_alt=stat("s_" + alt)[0],
        clamp_fraction=clamped / evals if evals else 0.0,
        exceedance_count=int(np.count_nonzero(exceeded_all)),
        blowup_count=n_dead, n_valid=n_ok,
        first_samples=curves["f_" + primary][:, ok], second_samples=curves["s_" + primary][:, ok],
    )


def run_comparison(config: ExperimentConfig, model=None) -> ErrorReport:
    """Monte Carlo reduction errors for every eps in the config.

    The model defaults to the Allen-Cahn instance with the config's h, size and
    noise case; any other :class:`~amplitude_spde.model.ModelSpec` may be passed.
    """
    if model is None:
        noise = "case1" if config.case_tag == CASE_I else "case2"
        model = allen_cahn_model(config.h, config.n_modes, config.n_quad, noise=noise)
    red = reduce_model(model)
    sig = sigma_coefficients(model, reduced=red) if config.case_tag == CASE_II else None
    results = [_run_epsilon(config, eps, model, red, sig) for eps in config.epsilon_list]
    report = ErrorReport(config.case_tag, results, include_K=config.include_K,
                         coupling=config.coupling if config.case_tag == CASE_II else "n/a", config=config)
    if len(results) >= 3:
        for which in ("first", "second"):
            sups = {r.epsilon: getattr(r, f"sup_{which}") for r in results}
            samples = {r.epsilon: getattr(r, f"{which}_samples") for r in results}
            try:
                fit = fit_convergence_order(sups, samples, config.n_bootstrap, config.seed)
            except FitError:
                fit = _NAN_FIT
            setattr(report, f"fit_{which}", fit)
    return report


# -- output --------------------------------------------------------------------

PER_TIME_COLUMNS = ["case", "epsilon", "t", "T", "mean_R_first", "se_R_first", "mean_R_second",
                    "se_R_second", "mean_R_first_alt", "mean_R_second_alt"]
SUMMARY_COLUMNS = ["epsilon", "sup_R_first", "sup_R_second", "slope_first", "slope_second",
                   "clamp_fraction", "exceedance_count", "blowup_count", "n_valid",
                   "slope_first_ci_low", "slope_first_ci_high", "slope_second_ci_low",
                   "slope_second_ci_high", "sup_R_first_alt", "sup_R_second_alt", "include_K", "coupling",
                   "case"]

_PLOT_SCRIPT = '''"""Plot mean reduction errors against fast time, one panel per epsilon."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

rows = defaultdict(list)
with open(sys.argv[1] if len(sys.argv) > 1 else "per_time.csv") as fh:
    for r in csv.DictReader(fh):
        rows[float(r["epsilon"])].append(r)

fig, axes = plt.subplots(1, max(1, len(rows)), figsize=(5 * max(1, len(rows)), 4), squeeze=False)
for ax, (eps, rs) in zip(axes[0], sorted(rows.items(), reverse=True)):
    t = [float(r["t"]) for r in rs]
    ax.plot(t, [float(r["mean_R_first"]) for r in rs], label="{first}")
    ax.plot(t, [float(r["mean_R_second"]) for r in rs], label="{second}")
    ax.set_title(f"eps = {{eps:g}}")
    ax.set_xlabel("t")
    ax.set_ylabel("mean L2 error")
    ax.legend()
fig.tight_layout()
fig.savefig("errors.png", dpi=150)
'''


def _num(v) -> str:
    return repr(float(v))


def emit_report(report: ErrorReport, path) -> dict[str, Path]:
    """Write per_time.csv, summary.csv and plot_errors.py into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {"per_time": out / "per_time.csv", "summary": out / "summary.csv", "plot": out / "plot_errors.py"}
    with files["per_time"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PER_TIME_COLUMNS)
        for r in report.results:
            for i in range(r.times.size):
                w.writerow([report.case_tag, _num(r.epsilon), _num(r.times[i]), _num(r.slow_times[i]),
                            _num(r.mean_first[i]), _num(r.se_first[i]), _num(r.mean_second[i]),
                            _num(r.se_second[i]), _num(r.mean_first_alt[i]), _num(r.mean_second_alt[i])])
    f1, f2 = report.fit_first, report.fit_second
    with files["summary"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in report.results:
            w.writerow([_num(r.epsilon), _num(r.sup_first), _num(r.sup_second), _num(f1.slope), _num(f2.slope),
                        _num(r.clamp_fraction), r.exceedance_count, r.blowup_count, r.n_valid,
                        _num(f1.ci_low), _num(f1.ci_high), _num(f2.ci_low), _num(f2.ci_high),
                        _num(r.sup_first_alt), _num(r.sup_second_alt), int(report.include_K), report.coupling,
                        report.case_tag])
    first, second = ("R1", "R2") if report.case_tag == CASE_I else ("R3", "R4")
    files["plot"].write_text(_PLOT_SCRIPT.format(first=f"{first} (first order)", second=f"{second} (second order)"))
    return files


def read_report(path) -> ErrorReport:
    """Rebuild the numeric content of a report written by :func:`emit_report`."""
    out = Path(path)
    with (out / "per_time.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    with (out / "summary.csv").open() as fh:
        summary = list(csv.DictReader(fh))
    case = summary[0]["case"] if summary else (rows[0]["case"] if rows else CASE_I)
    results = []
    for s in summary:
        eps = float(s["epsilon"])
        rs = [r for r in rows if float(r["epsilon"]) == eps]
        col = lambda name: np.array([float(r[name]) for r in rs])  # noqa: E731
        results.append(EpsilonResult(
            epsilon=eps, times=col("t"), slow_times=col("T"),
            mean_first=col("mean_R_first"), se_first=col("se_R_first"),
            mean_second=col("mean_R_second"), se_second=col("se_R_second"),
            mean_first_alt=col("mean_R_first_alt"), mean_second_alt=col("mean_R_second_alt"),
            clamp_fraction=float(s["clamp_fraction"]), exceedance_count=int(s["exceedance_count"]),
            blowup_count=int(s["blowup_count"]), n_valid=int(s["n_valid"])))

    def fit(which):
        if not summary:
            return _NAN_FIT
        s = summary[0]
        return ConvergenceFit(float(s[f"slope_{which}"]), math.nan, float(s[f"slope_{which}_ci_low"]),
                              float(s[f"slope_{which}_ci_high"]), tuple(r.epsilon for r in results))

    include_K = bool(int(summary[0]["include_K"])) if summary else True
    coupling = summary[0]["coupling"] if summary else "n/a"
    return ErrorReport(case, results, fit("first"), fit("second"), include_K, coupling)


def report_lines(report: ErrorReport) -> list[str]:
    """Human-readable summary table."""
    first, second = ("R1", "R2") if report.case_tag == CASE_I else ("R3", "R4")
    lines = [f"{report.case_tag}  include_K={report.include_K}  coupling={report.coupling}",
             f"{'eps':>8} {'sup ' + first:>12} {'sup ' + second:>12} {'pointwise':>9} {'exceed':>6} "
             f"{'blowup':>6} {'clamp':>8}"]
    for r in report.results:
        lines.append(f"{r.epsilon:>8g} {r.sup_first:>12.4e} {r.sup_second:>12.4e} "
                     f"{str(r.pointwise_improvement):>9} {r.exceedance_count:>6d} {r.blowup_count:>6d} "
                     f"{r.clamp_fraction:>8.2e}")
    for name, fit in ((first, report.fit_first), (second, report.fit_second)):
        if np.isfinite(fit.slope):
            lines.append(f"slope {name}: {fit.slope:.3f}  95% CI [{fit.ci_low:.3f}, {fit.ci_high:.3f}]")
    return lines
