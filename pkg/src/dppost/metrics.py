"""Ratio estimands, interval estimates, and the experiment metric suite.

Covers the three published average-family-size ratios per stratum, Fieller
confidence sets for ratios of Gaussian noisy measurements, posterior
percentile credible intervals, and the aggregate comparison of noisy
measurements (NM) against model-based (MB) estimates: MIN, MAX, BAD%, RMSE,
COV, LEN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import norm

from .constraints import is_feasible
from .model import (
    ConstraintSystem,
    KeyMismatch,
    MechanismFamily,
    NoisyMeasurement,
    PosteriorDraws,
    RatioTriple,
    Tabulation,
)


class IntervalMethod(str, Enum):
    POSTERIOR_PERCENTILE = "posterior_percentile"
    FIELLER = "fieller"


class IntervalShape(str, Enum):
    FINITE = "finite"
    UNBOUNDED = "unbounded"
    EXCLUSIVE = "exclusive"


@dataclass(frozen=True)
class IntervalEstimate:
    """An interval (or degenerate set) estimate for one ratio.

    ``EXCLUSIVE`` means the confidence set is the complement of (low, high);
    ``UNBOUNDED`` means the whole real line.  Coverage bookkeeping treats both
    degenerate shapes as non-covering with length excluded.
    """

    low: float
    high: float
    level: float
    method: IntervalMethod
    shape: IntervalShape = IntervalShape.FINITE

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if self.shape is IntervalShape.FINITE and self.low > self.high:
            raise ValueError(f"finite interval with low {self.low} > high {self.high}")

    @property
    def length(self) -> float:
        if self.shape is IntervalShape.FINITE:
            return self.high - self.low
        return math.inf

    def covers(self, value: float) -> bool:
        """Finite-interval containment; degenerate shapes count as non-covering."""
        if self.shape is not IntervalShape.FINITE:
            return False
        return self.low <= value <= self.high


@dataclass(frozen=True)
class MetricsRow:
    """One summary row of the NM-vs-MB comparison table."""

    min: float
    max: float
    bad_pct: float
    rmse: float
    cov: float | None = None
    len: float | None = None
    n_degenerate_intervals: int = 0

    def __post_init__(self):
        if not 0.0 <= self.bad_pct <= 100.0:
            raise ValueError(f"bad_pct must be a percentage, got {self.bad_pct}")
        if self.cov is not None and not 0.0 <= self.cov <= 100.0:
            raise ValueError(f"cov must be a percentage, got {self.cov}")
        if self.rmse < 0:
            raise ValueError(f"rmse must be nonnegative, got {self.rmse}")

    def csv_fields(self, mechanism: str, estimate: str) -> list[str]:
        def fmt(x):
            return "NA" if x is None else repr(float(x))

        return [
            mechanism,
            estimate,
            fmt(self.min),
            fmt(self.max),
            fmt(self.bad_pct),
            fmt(self.rmse),
            fmt(self.cov),
            fmt(self.len),
        ]


REPORT_HEADER = ["Mechanism", "Estimate", "MIN", "MAX", "BAD%", "RMSE", "COV", "LEN"]


def ratio_triple(y) -> RatioTriple:
    """(under18, over18, total) ratios of a (Y18-, Y18+, YFHH) vector.

    A zero denominator yields a NaN-valued, blow-up-flagged triple rather than
    raw infinities.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (3,):
        raise ValueError(f"expected a 3-vector (under18, over18, households), got shape {y.shape}")
    if y[2] == 0.0:
        return RatioTriple(math.nan, math.nan, math.nan, blow_up=True)
    return RatioTriple(y[0] / y[2], y[1] / y[2], (y[0] + y[1]) / y[2])


def draw_ratios(draws: PosteriorDraws) -> np.ndarray:
    """(n, 3) per-draw ratio matrix for 3-coordinate posterior draws."""
    d = draws.draws
    if d.shape[1] != 3:
        raise ValueError(f"ratio summaries need 3-coordinate draws, got {d.shape[1]}")
    den = d[:, 2]
    return np.column_stack([d[:, 0] / den, d[:, 1] / den, (d[:, 0] + d[:, 1]) / den])


def posterior_ratio_summary(
    draws: PosteriorDraws, level: float
) -> tuple[RatioTriple, tuple[IntervalEstimate, IntervalEstimate, IntervalEstimate]]:
    """Posterior-mean ratios and central empirical percentile intervals.

    The point estimate is the mean over draws of each per-draw ratio; the
    interval endpoints are the ((1-level)/2, (1+level)/2) empirical
    percentiles of each ratio's draw distribution.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    ratios = draw_ratios(draws)
    means = ratios.mean(axis=0)
    lo_q, hi_q = 0.5 * (1.0 - level), 0.5 * (1.0 + level)
    lows = np.quantile(ratios, lo_q, axis=0)
    highs = np.quantile(ratios, hi_q, axis=0)
    point = RatioTriple(means[0], means[1], means[2])
    intervals = tuple(
        IntervalEstimate(
            low=float(lows[i]),
            high=float(highs[i]),
            level=level,
            method=IntervalMethod.POSTERIOR_PERCENTILE,
        )
        for i in range(3)
    )
    return point, intervals


def _fieller_general(
    num: float, den: float, var_num: float, var_den: float, level: float
) -> IntervalEstimate:
    """Fieller confidence set for a ratio of independent Gaussian measurements.

    Solves g(r) = (den^2 - q^2 var_den) r^2 - 2 num den r + (num^2 - q^2 var_num) <= 0
    with q the two-sided normal quantile.  Degenerate denominators produce
    EXCLUSIVE (complement of an interval) or UNBOUNDED (whole line) sets,
    which are flagged outcomes rather than failures.
    """
    q = norm.ppf(0.5 * (1.0 + level))
    a = den * den - q * q * var_den
    b = num * den
    c = num * num - q * q * var_num
    disc = b * b - a * c
    if a > 0.0:
        root = math.sqrt(max(disc, 0.0))
        return IntervalEstimate(
            low=(b - root) / a,
            high=(b + root) / a,
            level=level,
            method=IntervalMethod.FIELLER,
            shape=IntervalShape.FINITE,
        )
    if disc >= 0.0 and a < 0.0:
        root = math.sqrt(disc)
        lo, hi = (b + root) / a, (b - root) / a
        return IntervalEstimate(
            low=lo, high=hi, level=level, method=IntervalMethod.FIELLER,
            shape=IntervalShape.EXCLUSIVE,
        )
    return IntervalEstimate(
        low=-math.inf, high=math.inf, level=level, method=IntervalMethod.FIELLER,
        shape=IntervalShape.UNBOUNDED,
    )


def fieller_interval(num: float, den: float, sigma2: float, level: float) -> IntervalEstimate:
    """Fieller set for num/den when both carry independent N(0, sigma2) noise."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    return _fieller_general(num, den, sigma2, sigma2, level)


def nm_ratio_intervals(
    z: NoisyMeasurement, level: float
) -> tuple[IntervalEstimate, IntervalEstimate, IntervalEstimate]:
    """Fieller sets for the three published ratios of a Gaussian noisy triple.

    The total-persons numerator carries twice the per-coordinate noise
    variance.  Refuses Laplace measurements: no analogous closed-form interval
    exists for ratios of Laplace variables.
    """
    if z.mechanism.family is not MechanismFamily.GAUSSIAN:
        raise ValueError("Fieller intervals are only defined for the Gaussian mechanism")
    s2 = z.mechanism.scale ** 2
    v = z.values
    return (
        _fieller_general(v[0], v[2], s2, s2, level),
        _fieller_general(v[1], v[2], s2, s2, level),
        _fieller_general(v[0] + v[1], v[2], 2.0 * s2, s2, level),
    )


def _align(truth, nm, mb):
    t = {x.stratum: x for x in truth}
    n = {x.stratum: x for x in nm}
    b = dict(mb) if isinstance(mb, dict) else None
    if b is None:
        raise TypeError("mb must be a mapping from stratum key to PosteriorDraws")
    if set(t) != set(n) or set(t) != set(b):
        raise KeyMismatch(
            f"stratum keys differ: truth={len(t)}, nm={len(n)}, mb={len(b)}; "
            f"example truth-only={sorted(set(t) - set(n) | set(t) - set(b))[:3]}"
        )
    keys = sorted(t)
    return keys, t, n, b


def evaluate(
    truth: list[Tabulation],
    nm: list[NoisyMeasurement],
    mb: dict[str, PosteriorDraws] | list[tuple[str, PosteriorDraws]],
    cs: ConstraintSystem,
    level: float = 0.90,
) -> tuple[MetricsRow, MetricsRow]:
    """Aggregate NM-vs-MB comparison over aligned strata.

    NM feasibility (BAD%) is judged on the noisy count vector directly; MB
    feasibility on the posterior-mean count vector (always feasible for a
    convex polytope).  RMSE pools the three ratio components over all strata.
    COV/LEN average flatly over all (stratum x component) intervals; for the
    Laplace mechanism the NM COV/LEN entries are absent.
    """
    if not isinstance(mb, dict):
        mb = dict(mb)
    keys, t_by, n_by, b_by = _align(truth, nm, mb)
    family = n_by[keys[0]].mechanism.family

    nm_ratios, mb_ratios, true_ratios = [], [], []
    nm_bad = mb_bad = 0
    nm_cov_hits: list[bool] = []
    nm_lens: list[float] = []
    nm_degenerate = 0
    mb_cov_hits: list[bool] = []
    mb_lens: list[float] = []

    for key in keys:
        tab, z, draws = t_by[key], n_by[key], b_by[key]
        tr = ratio_triple(tab.values).as_array()
        zr = ratio_triple(z.values).as_array()
        true_ratios.append(tr)
        nm_ratios.append(zr)
        if not is_feasible(z.values, cs):
            nm_bad += 1

        mb_point, mb_ivals = posterior_ratio_summary(draws, level)
        mb_ratios.append(mb_point.as_array())
        mean_counts = draws.draws.mean(axis=0)
        if not is_feasible(mean_counts, cs):
            mb_bad += 1
        for i, ival in enumerate(mb_ivals):
            mb_cov_hits.append(ival.covers(tr[i]))
            mb_lens.append(ival.length)

        if family is MechanismFamily.GAUSSIAN:
            for i, ival in enumerate(nm_ratio_intervals(z, level)):
                nm_cov_hits.append(ival.covers(tr[i]))
                if ival.shape is IntervalShape.FINITE:
                    nm_lens.append(ival.length)
                else:
                    nm_degenerate += 1

    nm_ratios = np.array(nm_ratios)
    mb_ratios = np.array(mb_ratios)
    true_ratios = np.array(true_ratios)
    n_strata = len(keys)

    def rmse(est):
        return float(np.sqrt(np.mean((est - true_ratios) ** 2)))

    nm_row = MetricsRow(
        min=float(np.nanmin(nm_ratios)),
        max=float(np.nanmax(nm_ratios)),
        bad_pct=100.0 * nm_bad / n_strata,
        rmse=rmse(nm_ratios),
        cov=(100.0 * np.mean(nm_cov_hits) if family is MechanismFamily.GAUSSIAN else None),
        len=(float(np.mean(nm_lens)) if nm_lens else None),
        n_degenerate_intervals=nm_degenerate,
    )
    mb_row = MetricsRow(
        min=float(np.min(mb_ratios)),
        max=float(np.max(mb_ratios)),
        bad_pct=100.0 * mb_bad / n_strata,
        rmse=rmse(mb_ratios),
        cov=100.0 * float(np.mean(mb_cov_hits)),
        len=float(np.mean(mb_lens)),
    )
    return nm_row, mb_row
