import csv
from dataclasses import dataclass

import numpy as np
import pytest

from dppost import ChainConfig, ph5_system
from dppost.harness import (
    ExperimentConfig,
    ExperimentReport,
    generate_synthetic_truth,
    read_truth_csv,
    run_simulate,
)

PAPER_SIGMA2 = 14_782.0
PAPER_SIGMA = float(np.sqrt(PAPER_SIGMA2))
PAPER_LAMBDA = 86.86


@pytest.fixture(scope="session")
def ph5():
    return ph5_system(10)


def random_feasible_points(cs, n, seed, box=(0.0, 1000.0)):
    """Rejection-sample n feasible points from a box; for test inputs only."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        cand = rng.uniform(box[0], box[1], size=(4 * n, cs.dim))
        r = cand @ cs.matrix.T
        ok = np.all(r >= cs.lower, axis=1) & np.all(r <= cs.upper, axis=1)
        out.extend(cand[ok])
    return np.array(out[:n])


@dataclass(frozen=True)
class Experiment510:
    truth_path: str
    truth: list
    gauss: ExperimentReport
    laplace: ExperimentReport


@pytest.fixture(scope="session")
def experiment_510(tmp_path_factory) -> Experiment510:
    """The 510-stratum synthetic experiment, both mechanisms at paper noise scales."""
    base = tmp_path_factory.mktemp("exp510")
    truth_path = base / "truth.csv"
    generate_synthetic_truth(n_geo=51, n_iter=10, seed=17, out_path=truth_path)
    chain = ChainConfig(n_draws=2000, burn_in=200, seed=0)
    reports = {}
    for family in ("gaussian", "laplace"):
        cfg = ExperimentConfig(
            mode="simulate",
            family=family,
            moe=200.0,
            level=0.90,
            chain=chain,
            truth_path=str(truth_path),
            out_dir=str(base / family),
            master_seed=5,
            n_jobs=4,
        )
        reports[family] = run_simulate(cfg)
    return Experiment510(
        truth_path=str(truth_path),
        truth=read_truth_csv(truth_path),
        gauss=reports["gaussian"],
        laplace=reports["laplace"],
    )


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)
