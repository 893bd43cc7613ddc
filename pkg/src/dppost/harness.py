"""Experiment orchestration: simulation mode, production post-processing, CSV I/O.

Simulation mode starts from a truth file, adds mechanism noise, runs the
posterior sampler per stratum, and scores noisy-measurement (NM) versus
model-based (MB) estimates.  Post-processing mode starts from released noisy
measurements and emits constraint-respecting estimates without ever reading
truth.  Everything is deterministic given the master seed: per-stratum
sub-seeds come from a stable hash, so adding strata never perturbs others,
and parallel execution reduces in stratum-key order.
"""

from __future__ import annotations

import csv
import importlib.resources
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constraints import is_feasible, load_constraints, ph5_system
from .mechanisms import add_noise, derive_seed, spec_from_moe
from .metrics import (
    REPORT_HEADER,
    MetricsRow,
    evaluate,
    nm_ratio_intervals,
    posterior_ratio_summary,
    ratio_triple,
)
from .model import (
    ConstraintSystem,
    MechanismFamily,
    MechanismSpec,
    NoisyMeasurement,
    PosteriorDraws,
    RatioTriple,
    Tabulation,
)
from .samplers import ChainConfig, gibbs_tmvn, mh_laplace

TRUTH_COLUMNS = ["stratum", "Y18minus", "Y18plus", "YFHH"]
NM_COLUMNS = ["stratum", "Z18minus", "Z18plus", "ZFHH"]
COORD_LABELS = ("Y18minus", "Y18plus", "YFHH")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class SchemaError(ValueError):
    """Malformed input data file."""


class AllStrataFailed(RuntimeError):
    """Every stratum in a post-processing batch failed."""


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "simulate"
    family: MechanismFamily = MechanismFamily.GAUSSIAN
    scale: float | None = None
    moe: float | None = 200.0
    level: float = 0.90
    interval_level: float = 0.90
    kappa: int = 10
    chain: ChainConfig = field(default_factory=ChainConfig)
    constraint_path: str | None = None
    truth_path: str | None = None
    nm_path: str | None = None
    out_dir: str = "."
    master_seed: int = 0
    n_jobs: int = 1
    refresh_sweeps: int = 25

    def __post_init__(self):
        object.__setattr__(self, "family", MechanismFamily(self.family))
        if self.mode not in ("simulate", "postprocess"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.scale is None and self.moe is None:
            raise ConfigError("either an explicit noise scale or a margin of error is required")
        if self.mode == "simulate" and not self.truth_path:
            raise ConfigError("simulate mode requires a truth file")
        if self.mode == "postprocess" and not self.nm_path:
            raise ConfigError("postprocess mode requires a noisy-measurements file")
        if self.n_jobs < 1:
            raise ConfigError(f"n_jobs must be >= 1, got {self.n_jobs}")

    def mechanism(self) -> MechanismSpec:
        if self.scale is not None:
            return MechanismSpec(family=self.family, scale=self.scale)
        return spec_from_moe(self.family, self.moe, self.level)

    def constraint_system(self) -> ConstraintSystem:
        if self.constraint_path:
            return load_constraints(self.constraint_path)
        return ph5_system(self.kappa)


@dataclass(frozen=True)
class ExperimentReport:
    mechanism: MechanismFamily
    nm_row: MetricsRow
    mb_row: MetricsRow
    details: tuple[dict, ...]
    report_path: str
    detail_path: str


def _read_csv(path, columns: list[str]) -> list[dict]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(columns)}")
        if header != columns:
            raise SchemaError(f"{path}: header {header} != expected {columns}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise SchemaError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            rec = {"stratum": row[0]}
            for name, value in zip(columns[1:], row[1:]):
                try:
                    rec[name] = float(value)
                except ValueError:
                    raise SchemaError(f"{path}:{lineno}: column {name}: not a number: {value!r}")
            rows.append(rec)
    seen = set()
    for rec in rows:
        if rec["stratum"] in seen:
            raise SchemaError(f"{path}: duplicate stratum key {rec['stratum']!r}")
        seen.add(rec["stratum"])
    return rows


def read_truth_csv(path) -> list[Tabulation]:
    rows = _read_csv(path, TRUTH_COLUMNS)
    return [
        Tabulation(
            values=[r["Y18minus"], r["Y18plus"], r["YFHH"]],
            labels=COORD_LABELS,
            stratum=r["stratum"],
        )
        for r in rows
    ]


def read_nm_csv(path, spec: MechanismSpec) -> list[NoisyMeasurement]:
    rows = _read_csv(path, NM_COLUMNS)
    return [
        NoisyMeasurement(
            values=[r["Z18minus"], r["Z18plus"], r["ZFHH"]],
            mechanism=spec,
            stratum=r["stratum"],
        )
        for r in rows
    ]


def write_truth_csv(path, tabs: list[Tabulation]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for tab in tabs:
            writer.writerow([tab.stratum] + [repr(float(v)) for v in tab.values])


# Synthetic-truth calibration: the small-count tail is sized so that noisy
# measurements at production noise scales violate constraints for a few
# percent of strata (but under 10%), the medium band produces wide-but-finite
# ratio confidence sets, and the bulk stays well inside the polytope.
_SMALL_FRACTION = 0.10
_SMALL_FHH_MIN = 50.0
_SMALL_FHH_MAX = 200.0
_MEDIUM_FRACTION = 0.20
_MEDIUM_FHH_MAX = 3000.0
_LARGE_FHH_MIN = 5000.0
_LARGE_FHH_MAX = 1.0e6


def generate_synthetic_truth(
    n_geo: int,
    n_iter: int,
    seed: int,
    profile: str = "census_like",
    kappa: int = 10,
    out_path=None,
) -> list[Tabulation]:
    """Deterministic feasible truth table over n_geo x n_iter strata.

    ``census_like`` mixes a small-count tail (household counts below 200,
    at least 10% of strata) with large, well-separated strata; ``uniform``
    spreads household counts uniformly.  Every generated row is feasible
    under the kappa-truncated polytope by construction.
    """
    if profile not in ("census_like", "uniform"):
        raise ConfigError(f"unknown synthetic profile {profile!r}")
    if kappa < 2:
        raise ConfigError(f"kappa must be >= 2, got {kappa}")
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "synthetic", profile)))
    n = n_geo * n_iter
    strata = [f"g{g:03d}_r{i:02d}" for g in range(n_geo) for i in range(n_iter)]

    if profile == "uniform":
        fhh = rng.uniform(1.0, 1.0e4, size=n)
        t = rng.uniform(2.0, float(kappa), size=n)
    else:
        n_small = int(math.floor(_SMALL_FRACTION * n))
        n_medium = int(math.floor(_MEDIUM_FRACTION * n))
        order = rng.permutation(n)
        small = np.zeros(n, dtype=bool)
        small[order[:n_small]] = True
        medium = np.zeros(n, dtype=bool)
        medium[order[n_small:n_small + n_medium]] = True
        fhh = np.exp(rng.uniform(math.log(_LARGE_FHH_MIN), math.log(_LARGE_FHH_MAX), size=n))
        fhh[small] = np.exp(
            rng.uniform(math.log(_SMALL_FHH_MIN), math.log(_SMALL_FHH_MAX), size=n)[small]
        )
        fhh[medium] = np.exp(
            rng.uniform(math.log(_SMALL_FHH_MAX), math.log(_MEDIUM_FHH_MAX), size=n)[medium]
        )
        t = rng.uniform(2.5, max(2.6, kappa - 0.5), size=n)
        t[small] = rng.uniform(2.0, float(kappa), size=n)[small]
        t[medium] = rng.uniform(2.3, max(2.4, kappa - 0.3), size=n)[medium]

    share = rng.uniform(0.15, 0.45, size=n)
    persons = t * fhh
    under = share * persons
    over = persons - under

    tabs = [
        Tabulation(values=[under[i], over[i], fhh[i]], labels=COORD_LABELS, stratum=strata[i])
        for i in range(n)
    ]
    if out_path is not None:
        write_truth_csv(out_path, tabs)
    return tabs


def _sample_posterior(
    z: NoisyMeasurement, cs: ConstraintSystem, cfg: ExperimentConfig, chain_seed: int
) -> PosteriorDraws:
    chain = replace(cfg.chain, seed=chain_seed)
    spec = z.mechanism
    if spec.family is MechanismFamily.GAUSSIAN:
        return gibbs_tmvn(z, cs, spec.scale, chain)
    return mh_laplace(z, cs, spec.scale, chain, refresh_sweeps=cfg.refresh_sweeps)


def _map_strata(fn, items, n_jobs: int):
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "NA"
    return repr(x)


_DETAIL_HEADER = [
    "stratum",
    "z18minus", "z18plus", "zfhh",
    "post18minus", "post18plus", "postfhh",
    "nm_ratio_u18", "nm_ratio_o18", "nm_ratio_tot",
    "mb_ratio_u18", "mb_ratio_o18", "mb_ratio_tot",
    "ci_u18_low", "ci_u18_high",
    "ci_o18_low", "ci_o18_high",
    "ci_tot_low", "ci_tot_high",
    "nm_feasible", "nm_blow_up", "acceptance_rate",
]


def _stratum_detail(
    z: NoisyMeasurement, draws: PosteriorDraws, cs: ConstraintSystem, level: float
) -> dict:
    nm_r = ratio_triple(z.values)
    mb_point, ivals = posterior_ratio_summary(draws, level)
    post_mean = draws.draws.mean(axis=0)
    return {
        "stratum": z.stratum,
        "z18minus": z.values[0], "z18plus": z.values[1], "zfhh": z.values[2],
        "post18minus": post_mean[0], "post18plus": post_mean[1], "postfhh": post_mean[2],
        "nm_ratio_u18": nm_r.under18, "nm_ratio_o18": nm_r.over18, "nm_ratio_tot": nm_r.total,
        "mb_ratio_u18": mb_point.under18, "mb_ratio_o18": mb_point.over18,
        "mb_ratio_tot": mb_point.total,
        "ci_u18_low": ivals[0].low, "ci_u18_high": ivals[0].high,
        "ci_o18_low": ivals[1].low, "ci_o18_high": ivals[1].high,
        "ci_tot_low": ivals[2].low, "ci_tot_high": ivals[2].high,
        "nm_feasible": is_feasible(z.values, cs),
        "nm_blow_up": nm_r.blow_up,
        "acceptance_rate": draws.acceptance_rate,
    }


def run_simulate(cfg: ExperimentConfig) -> ExperimentReport:
    """Noise the truth file, post-process every stratum, score NM vs MB."""
    if cfg.mode != "simulate":
        raise ConfigError(f"run_simulate called with mode {cfg.mode!r}")
    truth = read_truth_csv(cfg.truth_path)
    truth.sort(key=lambda t: t.stratum)
    cs = cfg.constraint_system()
    spec = cfg.mechanism()
    for tab in truth:
        if tab.dim != cs.dim:
            raise SchemaError(f"stratum {tab.stratum}: {tab.dim} coordinates vs {cs.dim}-column system")

    def work(tab: Tabulation):
        noise_rng = np.random.Generator(
            np.random.PCG64(derive_seed(cfg.master_seed, "noise", tab.stratum))
        )
        z = add_noise(tab, spec, noise_rng)
        draws = _sample_posterior(z, cs, cfg, derive_seed(cfg.master_seed, "chain", tab.stratum))
        return z, draws

    results = _map_strata(work, truth, cfg.n_jobs)
    nms = [z for z, _ in results]
    mb = {z.stratum: draws for z, draws in results}
    nm_row, mb_row = evaluate(truth, nms, mb, cs, cfg.interval_level)
    details = tuple(
        _stratum_detail(z, draws, cs, cfg.interval_level) for z, draws in results
    )

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.csv"
    detail_path = out / "detail.csv"
    mech = spec.family.value
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        writer.writerow(nm_row.csv_fields(mech, "NM"))
        writer.writerow(mb_row.csv_fields(mech, "MB"))
    with open(detail_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_DETAIL_HEADER)
        for det in details:
            writer.writerow([_fmt(det[col]) for col in _DETAIL_HEADER])
    return ExperimentReport(
        mechanism=spec.family,
        nm_row=nm_row,
        mb_row=mb_row,
        details=details,
        report_path=str(report_path),
        detail_path=str(detail_path),
    )


_ESTIMATE_HEADER = _DETAIL_HEADER[:19] + ["acceptance_rate", "status", "error"]


def run_postprocess(cfg: ExperimentConfig) -> str:
    """Post-process released noisy measurements into constraint-respecting estimates.

    Outputs are a function of the noisy values and public parameters only; no
    truth columns are ever read.  Per-stratum failures are isolated and
    tabulated so one bad stratum cannot abort a production batch; if every
    stratum fails, :class:`AllStrataFailed` is raised.
    """
    if cfg.mode != "postprocess":
        raise ConfigError(f"run_postprocess called with mode {cfg.mode!r}")
    cs = cfg.constraint_system()
    spec = cfg.mechanism()
    nms = read_nm_csv(cfg.nm_path, spec)
    nms.sort(key=lambda z: z.stratum)

    def work(z: NoisyMeasurement):
        try:
            draws = _sample_posterior(z, cs, cfg, derive_seed(cfg.master_seed, "chain", z.stratum))
        except Exception as exc:  # isolated per stratum by design
            return z, None, f"{type(exc).__name__}: {exc}"
        return z, draws, None

    results = _map_strata(work, nms, cfg.n_jobs)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    est_path = out / "estimates.csv"
    n_failed = 0
    with open(est_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ESTIMATE_HEADER)
        for z, draws, err in results:
            if draws is None:
                n_failed += 1
                row = [z.stratum] + [_fmt(v) for v in z.values] + ["NA"] * 15
                row += ["NA", "failed", err]
            else:
                det = _stratum_detail(z, draws, cs, cfg.interval_level)
                row = [_fmt(det[col]) for col in _DETAIL_HEADER[:19]]
                row += [_fmt(det["acceptance_rate"]), "ok", ""]
            writer.writerow(row)
    if nms and n_failed == len(nms):
        raise AllStrataFailed(f"all {n_failed} strata failed; see {est_path}")
    return str(est_path)


def load_published_state_ratios() -> dict[str, RatioTriple]:
    """The published 2010 state-level average-family-size ratios (5 states)."""
    ref = importlib.resources.files("dppost").joinpath("data/ph5_state_ratios_2010.csv")
    out: dict[str, RatioTriple] = {}
    with ref.open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["state"]] = RatioTriple(
                under18=float(row["under18"]),
                over18=float(row["over18"]),
                total=float(row["total"]),
            )
    return out
