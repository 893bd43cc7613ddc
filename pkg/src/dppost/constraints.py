"""Building and querying the feasible polytope lower <= D @ y <= upper.

Includes the builtin average-family-size system (three coordinates:
under-18 persons, 18-plus persons, family households), per-coordinate
conditional intervals for Gibbs updates, and feasible-point discovery.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .model import (
    ConstraintSystem,
    DimensionMismatch,
    InfeasibleState,
    NoFeasiblePoint,
)

# Relative-absolute hybrid default: polytope faces are hit exactly by Gibbs
# updates at interval endpoints, so exact-zero tolerance is opt-in.
DEFAULT_REL_TOL = 1e-9


def _effective_tol(row_values: np.ndarray, tol: float | None) -> np.ndarray:
    if tol is not None:
        return np.full_like(row_values, tol)
    return DEFAULT_REL_TOL * (1.0 + np.abs(row_values))


def is_feasible(y, cs: ConstraintSystem, tol: float | None = None) -> bool:
    """True iff every row satisfies lower - tol <= (D @ y) <= upper + tol.

    With ``tol=None`` the hybrid tolerance ``1e-9 * (1 + |row value|)`` is
    used; pass ``tol=0.0`` for a strict check.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (cs.dim,):
        raise DimensionMismatch(f"point of shape {y.shape} vs {cs.dim}-column system")
    r = cs.matrix @ y
    eff = _effective_tol(r, tol)
    return bool(np.all(r >= cs.lower - eff) and np.all(r <= cs.upper + eff))


def feasible_mask(points: np.ndarray, cs: ConstraintSystem, tol: float | None = None) -> np.ndarray:
    """Vectorized is_feasible over the rows of an (n, m) array."""
    points = np.asarray(points, dtype=float)
    r = points @ cs.matrix.T
    eff = _effective_tol(r, tol)
    return np.all(r >= cs.lower - eff, axis=1) & np.all(r <= cs.upper + eff, axis=1)


def ph5_system(kappa: int) -> ConstraintSystem:
    """The average-family-size polytope for (under-18, 18-plus, households).

    Rows: each count nonnegative (households >= 1, since only areas with at
    least one occupied household are considered); at least two persons per
    family household; and total persons at most ``kappa`` per household, the
    truncation applied to the household universe by the privacy algorithm.
    """
    kappa = int(kappa)
    if kappa < 2:
        raise ValueError(f"kappa must be >= 2 (got {kappa}); smaller values empty the polytope")
    matrix = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, -2.0],
        [-1.0, -1.0, float(kappa)],
    ]
    lower = [0.0, 0.0, 1.0, 0.0, 0.0]
    upper = [math.inf] * 5
    return ConstraintSystem(lower=lower, upper=upper, matrix=matrix)


def _is_ph5_like(cs: ConstraintSystem) -> bool:
    if cs.matrix.shape != (5, 3):
        return False
    kappa = cs.matrix[4, 2]
    expected = ph5_system(max(2, int(round(kappa)))) if kappa >= 2 else None
    if expected is None:
        return False
    return (
        np.array_equal(cs.matrix, expected.matrix)
        and np.array_equal(cs.lower, expected.lower)
        and np.array_equal(cs.upper, expected.upper)
    )


def coordinate_interval(j: int, y, cs: ConstraintSystem) -> tuple[float, float]:
    """Largest interval of values for y[j] keeping y feasible, other coords fixed.

    Intersects, over rows k with D[k, j] != 0, the per-row interval for y[j]
    (endpoints swapped where D[k, j] < 0).  For feasible y the result is
    nonempty and contains y[j].
    """
    y = np.asarray(y, dtype=float)
    if not 0 <= j < cs.dim:
        raise IndexError(f"coordinate {j} out of range for dimension {cs.dim}")
    if not is_feasible(y, cs):
        raise InfeasibleState(f"point {y} violates the constraint system")
    lo, hi = -math.inf, math.inf
    for k in range(cs.n_constraints):
        d = cs.matrix[k, j]
        if d == 0.0:
            continue
        r = float(cs.matrix[k] @ y - d * y[j])
        lo_k = (cs.lower[k] - r) / d
        hi_k = (cs.upper[k] - r) / d
        if d < 0.0:
            lo_k, hi_k = hi_k, lo_k
        lo = max(lo, lo_k)
        hi = min(hi, hi_k)
    return lo, hi


def _box_bounds(cs: ConstraintSystem) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate bounds implied by single-nonzero rows."""
    lo = np.full(cs.dim, -math.inf)
    hi = np.full(cs.dim, math.inf)
    for k in range(cs.n_constraints):
        row = cs.matrix[k]
        nz = np.flatnonzero(row)
        if len(nz) != 1:
            continue
        j = int(nz[0])
        d = row[j]
        a, b = cs.lower[k] / d, cs.upper[k] / d
        if d < 0:
            a, b = b, a
        lo[j] = max(lo[j], a)
        hi[j] = min(hi[j], b)
    return lo, hi


def find_feasible_start(z, cs: ConstraintSystem, max_iter: int = 200) -> np.ndarray:
    """A feasible chain-start near z, by clipping plus cyclic midpoint repair.

    Midpoint repair (not projection) keeps initialization cheap and
    deterministic.  For the builtin average-family-size system a deterministic
    analytic seed is used as a last resort.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (cs.dim,):
        raise DimensionMismatch(f"point of shape {z.shape} vs {cs.dim}-column system")
    if is_feasible(z, cs, tol=0.0):
        return z.copy()

    box_lo, box_hi = _box_bounds(cs)
    y = np.clip(z, box_lo, box_hi)
    for _ in range(max_iter):
        if is_feasible(y, cs, tol=0.0):
            return y
        for j in range(cs.dim):
            lo, hi = _relaxed_interval(j, y, cs)
            if lo > hi:
                continue
            if not (lo <= y[j] <= hi):
                y[j] = _interval_midpoint(lo, hi)
        if is_feasible(y, cs, tol=0.0):
            return y

    if _is_ph5_like(cs):
        fhh = max(1.0, float(np.clip(z[2], 1.0, math.inf)))
        start = np.array([fhh, fhh, fhh])
        if is_feasible(start, cs, tol=0.0):
            return start
    raise NoFeasiblePoint(f"no feasible point found from {z} in {max_iter} repair cycles")


def _relaxed_interval(j: int, y: np.ndarray, cs: ConstraintSystem) -> tuple[float, float]:
    """Coordinate interval over all rows; if empty, ignore rows y currently violates."""
    r_all = cs.matrix @ y
    for relax in (False, True):
        lo, hi = -math.inf, math.inf
        for k in range(cs.n_constraints):
            d = cs.matrix[k, j]
            if d == 0.0:
                continue
            if relax and not (cs.lower[k] <= r_all[k] <= cs.upper[k]):
                continue
            r = float(r_all[k] - d * y[j])
            lo_k = (cs.lower[k] - r) / d
            hi_k = (cs.upper[k] - r) / d
            if d < 0.0:
                lo_k, hi_k = hi_k, lo_k
            lo = max(lo, lo_k)
            hi = min(hi, hi_k)
        if lo <= hi:
            return lo, hi
    return lo, hi


def _interval_midpoint(lo: float, hi: float) -> float:
    if lo == -math.inf and hi == math.inf:
        return 0.0
    if lo == -math.inf:
        return hi - 1.0
    if hi == math.inf:
        return lo + 1.0
    return 0.5 * (lo + hi)


def load_constraints(source) -> ConstraintSystem:
    """Load a constraint system from a JSON path, file object, or dict.

    Schema: {"lower": [...], "upper": [...], "matrix": [[...]]} with
    "inf" / "-inf" string sentinels for infinite bounds.
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    return ConstraintSystem.from_dict(doc)
