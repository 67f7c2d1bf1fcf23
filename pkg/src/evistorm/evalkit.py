"""Forecast verification and uncertainty diagnosis metrics.

All metric functions are pure and pool over whatever sample stack they
are given, so batch accumulation is order-insensitive. Intensities are
expected in [0, 1]; CSI rescales them to the 0-255 convention before
thresholding.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats as sps

from .errors import ConfigError, ShapeError
from .numerics import FlopCounter

CSI_THRESHOLDS = (16, 74, 133, 160, 181, 219)
COVERAGE_LEVELS = tuple(round(0.05 * i, 2) for i in range(1, 20))  # 0.05 .. 0.95


# ---------------------------------------------------------------------
# critical success index
# ---------------------------------------------------------------------

@dataclass
class ThresholdScore:
    threshold: int
    hits: int
    misses: int
    false_alarms: int

    @property
    def defined(self) -> bool:
        return (self.hits + self.misses + self.false_alarms) > 0

    @property
    def csi(self) -> float:
        denom = self.hits + self.misses + self.false_alarms
        return self.hits / denom if denom > 0 else float("nan")


@dataclass
class CSIReport:
    scores: list[ThresholdScore]

    def by_threshold(self) -> dict[int, ThresholdScore]:
        return {s.threshold: s for s in self.scores}


def csi(pred: np.ndarray, truth: np.ndarray,
        thresholds: tuple[int, ...] = CSI_THRESHOLDS) -> CSIReport:
    """Pooled hits/misses/false-alarms after 0-255 rescale + binarize.

    Binarization uses >= threshold (ties count as events); counts pool
    over every pixel, lead step, and sample supplied.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred shape {pred.shape} != truth shape {truth.shape}")
    pred_255 = pred * 255.0
    truth_255 = truth * 255.0
    scores = []
    for tau in thresholds:
        p = pred_255 >= tau
        t = truth_255 >= tau
        hits = int(np.count_nonzero(p & t))
        misses = int(np.count_nonzero(~p & t))
        false_alarms = int(np.count_nonzero(p & ~t))
        scores.append(ThresholdScore(tau, hits, misses, false_alarms))
    return CSIReport(scores=scores)


# ---------------------------------------------------------------------
# per-lead curves
# ---------------------------------------------------------------------

@dataclass
class LeadCurve:
    """One value per lead step (index 0 = first forecast frame)."""

    values: np.ndarray
    defined: np.ndarray | None = None  # mask; None means all defined

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.defined is None:
            self.defined = np.ones(self.values.shape, dtype=bool)


def _as_sample_stack(arr: np.ndarray) -> np.ndarray:
    """Normalize [L,H,W] or [S,L,H,W] input to a 4-D sample stack."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        return arr[None]
    if arr.ndim == 4:
        return arr
    raise ShapeError(f"expected [L,H,W] or [S,L,H,W], got shape {arr.shape}")


def mse_by_lead(pred: np.ndarray, truth: np.ndarray) -> LeadCurve:
    """Mean squared error per lead step, pooled over samples and pixels."""
    pred = _as_sample_stack(pred)
    truth = _as_sample_stack(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred shape {pred.shape} != truth shape {truth.shape}")
    err = (pred - truth) ** 2
    return LeadCurve(values=err.mean(axis=(0, 2, 3)))


# ---------------------------------------------------------------------
# reliability of predictive distributions
# ---------------------------------------------------------------------

class GaussianPredictive:
    """Per-pixel Gaussian predictive distribution (baseline convention)."""

    def __init__(self, mean: np.ndarray, variance: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.variance = np.asarray(variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape:
            raise ShapeError("mean and variance shapes differ")
        if np.any(self.variance < 0.0):
            raise ConfigError("variance must be non-negative")
        self._sd = np.sqrt(self.variance)

    @property
    def point(self) -> np.ndarray:
        return self.mean

    @property
    def collapsed(self) -> np.ndarray:
        return self.variance == 0.0

    def central_interval(self, coverage: float) -> tuple[np.ndarray, np.ndarray]:
        z = float(sps.norm.ppf(0.5 + coverage / 2.0))
        half = z * self._sd
        return self.mean - half, self.mean + half


class StudentTPredictive:
    """Per-pixel location-scale Student-t predictive distribution."""

    def __init__(self, loc: np.ndarray, scale_sq: np.ndarray, dof: np.ndarray):
        self.loc = np.asarray(loc, dtype=np.float64)
        self.scale_sq = np.asarray(scale_sq, dtype=np.float64)
        self.dof = np.asarray(dof, dtype=np.float64)
        if not (self.loc.shape == self.scale_sq.shape == self.dof.shape):
            raise ShapeError("loc, scale_sq, dof shapes differ")
        if np.any(self.scale_sq < 0.0):
            raise ConfigError("scale_sq must be non-negative")
        if np.any(self.dof <= 0.0):
            raise ConfigError("degrees of freedom must be positive")
        self._scale = np.sqrt(self.scale_sq)

    @property
    def point(self) -> np.ndarray:
        return self.loc

    @property
    def collapsed(self) -> np.ndarray:
        return self.scale_sq == 0.0

    def central_interval(self, coverage: float) -> tuple[np.ndarray, np.ndarray]:
        tq = sps.t.ppf(0.5 + coverage / 2.0, self.dof)
        half = tq * self._scale
        return self.loc - half, self.loc + half


@dataclass
class ReliabilityCurve:
    """Observed coverage of central predictive intervals per nominal level."""

    nominal: np.ndarray
    observed: np.ndarray
    collapsed_fraction: float = 0.0

    def max_gap(self) -> float:
        return float(np.max(np.abs(self.observed - self.nominal)))


def reliability(predictive, truth: np.ndarray,
                levels: tuple[float, ...] = COVERAGE_LEVELS) -> ReliabilityCurve:
    """Empirical coverage of central intervals at each nominal level.

    Collapsed (zero-variance) pixels count as covered only when the truth
    equals the point prediction exactly; their fraction is reported.
    """
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != predictive.point.shape:
        raise ShapeError(f"truth shape {truth.shape} != predictive shape {predictive.point.shape}")
    observed = np.empty(len(levels))
    for i, level in enumerate(levels):
        lo, hi = predictive.central_interval(level)
        observed[i] = np.mean((truth >= lo) & (truth <= hi))
    collapsed = float(np.mean(predictive.collapsed))
    return ReliabilityCurve(
        nominal=np.asarray(levels, dtype=np.float64),
        observed=observed,
        collapsed_fraction=collapsed,
    )


# ---------------------------------------------------------------------
# uncertainty-error correlation
# ---------------------------------------------------------------------

def uncertainty_error_correlation(uncertainty: np.ndarray, squared_error: np.ndarray,
                                  normalize: bool = True) -> LeadCurve:
    """Pearson correlation per lead between mean uncertainty and mean
    squared error across samples.

    Per-sample scalars are spatial means at each lead. With
    ``normalize=True`` the curve is divided by its first-lead value so
    the curve starts at 1; leads where either vector is constant are
    flagged undefined (NaN).
    """
    unc = _as_sample_stack(uncertainty)
    err = _as_sample_stack(squared_error)
    if unc.shape != err.shape:
        raise ShapeError(f"uncertainty shape {unc.shape} != error shape {err.shape}")
    u = unc.mean(axis=(2, 3))  # [S, L]
    e = err.mean(axis=(2, 3))
    n_leads = u.shape[1]
    values = np.full(n_leads, np.nan)
    defined = np.zeros(n_leads, dtype=bool)
    for lead in range(n_leads):
        su, se = u[:, lead].std(), e[:, lead].std()
        if su > 0.0 and se > 0.0 and u.shape[0] > 1:
            values[lead] = float(np.corrcoef(u[:, lead], e[:, lead])[0, 1])
            defined[lead] = True
    if normalize:
        if defined[0] and values[0] != 0.0:
            values = values / values[0]
        else:
            defined = np.zeros(n_leads, dtype=bool)
            values = np.full(n_leads, np.nan)
    return LeadCurve(values=values, defined=defined)


# ---------------------------------------------------------------------
# computational cost
# ---------------------------------------------------------------------

@dataclass
class CostProfile:
    """FLOPs, wall time, and parameter count for one inference recipe."""

    total_flops: int
    passes: int
    wall_mean_s: float
    wall_sd_s: float
    parameter_count: int
    n_repeats: int

    def __post_init__(self):
        if self.passes < 1:
            raise ConfigError("passes must be >= 1")
        if self.total_flops % self.passes != 0:
            raise ConfigError("total_flops must be an exact multiple of passes")

    @property
    def flops_per_pass(self) -> int:
        return self.total_flops // self.passes


def profile(runner: Callable[[], object], parameter_count: int, passes: int = 1,
            n_repeats: int = 30, warmup: int = 5) -> CostProfile:
    """FLOPs (deterministic) and wall time (mean +/- sd) of ``runner()``.

    ``runner`` must perform one complete inference (all members/passes).
    Warm-up runs are excluded from timing; FLOPs come from a single
    counted run.
    """
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    with FlopCounter() as counter:
        runner()
    for _ in range(warmup):
        runner()
    times = np.empty(n_repeats)
    for i in range(n_repeats):
        start = time.perf_counter()
        runner()
        times[i] = time.perf_counter() - start
    return CostProfile(
        total_flops=counter.total,
        passes=passes,
        wall_mean_s=float(times.mean()),
        wall_sd_s=float(times.std(ddof=1)) if n_repeats > 1 else 0.0,
        parameter_count=parameter_count,
        n_repeats=n_repeats,
    )


# ---------------------------------------------------------------------
# report container and serialization
# ---------------------------------------------------------------------

@dataclass
class EvalReport:
    """Everything measured for one model variant on one test split."""

    variant: str
    csi_report: CSIReport
    mse: LeadCurve
    reliability_curve: ReliabilityCurve
    correlation: LeadCurve
    cost: CostProfile
    split_hash: str
    meta: dict = field(default_factory=dict)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_tsv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(str(c) if isinstance(c, (int, str)) else _fmt(c) for c in row)
              for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report(report: EvalReport, out_dir) -> None:
    """Emit one TSV per metric plus a machine-readable summary.

    Wall-clock timing goes to ``timing.tsv`` only; every other file is a
    deterministic function of checkpoint + data + seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_tsv(out / "csi.tsv",
               ["threshold", "hits", "misses", "false_alarms", "csi", "defined"],
               [[s.threshold, s.hits, s.misses, s.false_alarms, _fmt(s.csi), int(s.defined)]
                for s in report.csi_report.scores])
    _write_tsv(out / "mse_by_lead.tsv", ["lead_step", "mse"],
               [[i + 1, v] for i, v in enumerate(report.mse.values)])
    _write_tsv(out / "reliability.tsv", ["nominal", "observed"],
               [[_fmt(n), _fmt(o)] for n, o in
                zip(report.reliability_curve.nominal, report.reliability_curve.observed)])
    _write_tsv(out / "correlation.tsv", ["lead_step", "correlation", "defined"],
               [[i + 1, _fmt(v), int(d)] for i, (v, d) in
                enumerate(zip(report.correlation.values, report.correlation.defined))])
    _write_tsv(out / "cost.tsv",
               ["total_flops", "passes", "flops_per_pass", "parameter_count"],
               [[report.cost.total_flops, report.cost.passes,
                 report.cost.flops_per_pass, report.cost.parameter_count]])
    _write_tsv(out / "timing.tsv", ["wall_mean_s", "wall_sd_s", "n_repeats"],
               [[_fmt(report.cost.wall_mean_s), _fmt(report.cost.wall_sd_s),
                 report.cost.n_repeats]])
    summary = {
        "variant": report.variant,
        "split_hash": report.split_hash,
        "csi": {str(s.threshold): (None if not s.defined else s.csi)
                for s in report.csi_report.scores},
        "csi_counts": {str(s.threshold): [s.hits, s.misses, s.false_alarms]
                       for s in report.csi_report.scores},
        "mse_by_lead": [float(v) for v in report.mse.values],
        "reliability": {
            "nominal": [float(v) for v in report.reliability_curve.nominal],
            "observed": [float(v) for v in report.reliability_curve.observed],
            "collapsed_fraction": report.reliability_curve.collapsed_fraction,
        },
        "correlation": [None if not d else float(v)
                        for v, d in zip(report.correlation.values, report.correlation.defined)],
        "cost": {
            "total_flops": report.cost.total_flops,
            "passes": report.cost.passes,
            "parameter_count": report.cost.parameter_count,
        },
        "meta": report.meta,
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_report(report_dir) -> dict:
    """Load the machine-readable summary written by :func:`write_report`."""
    path = Path(report_dir) / "summary.json"
    if not path.exists():
        raise ConfigError(f"no summary.json under {report_dir}")
    return json.loads(path.read_text(encoding="utf-8"))
