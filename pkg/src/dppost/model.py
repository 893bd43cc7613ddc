"""Shared domain types for constrained post-processing of noisy count tabulations.

All types are immutable after construction (arrays are marked read-only) and
safe to share across threads.  Counts are carried as reals throughout: the
noise mechanisms are continuous and no integerization is performed.  Infinite
constraint bounds are genuine IEEE infinities, never magic large numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np


class DimensionMismatch(ValueError):
    """Raised when vector/matrix shapes disagree."""


class InfeasibleState(ValueError):
    """Raised when a point violates its constraint system beyond tolerance."""


class NoFeasiblePoint(RuntimeError):
    """Raised when feasible-point search exhausts its iteration budget."""


class EmptyInterval(ValueError):
    """Raised when a truncation interval has low > high."""


class AcceptanceTooLow(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""

    def __init__(self, message: str, acceptance: float):
        super().__init__(message)
        self.acceptance = acceptance


class KeyMismatch(ValueError):
    """Raised when stratum keys of paired inputs do not align."""


class MechanismFamily(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


def _as_readonly_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite, got {arr}")


@dataclass(frozen=True)
class Tabulation:
    """A vector of true (confidential) counts with per-coordinate labels."""

    values: np.ndarray
    labels: tuple[str, ...]
    stratum: str

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly_vector(self.values))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.values) == 0:
            raise DimensionMismatch("tabulation must have at least one coordinate")
        if len(self.values) != len(self.labels):
            raise DimensionMismatch(
                f"{len(self.values)} values vs {len(self.labels)} labels"
            )
        _require_finite(self.values, "tabulation values")

    @property
    def dim(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": list(map(float, self.values)),
            "labels": list(self.labels),
            "stratum": self.stratum,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Tabulation":
        return cls(values=d["values"], labels=tuple(d["labels"]), stratum=d["stratum"])


@dataclass(frozen=True)
class MechanismSpec:
    """Noise family and scale (sigma for Gaussian, lambda for Laplace).

    ``provenance`` records how the scale was derived, e.g.
    ``{"moe": 200, "level": 0.90}``; it is carried verbatim and never
    interpreted by the engine.
    """

    family: MechanismFamily
    scale: float
    provenance: dict[str, Any] | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", MechanismFamily(self.family))
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"mechanism scale must be positive, got {self.scale}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "scale": float(self.scale),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MechanismSpec":
        return cls(family=d["family"], scale=d["scale"], provenance=d.get("provenance"))


@dataclass(frozen=True)
class NoisyMeasurement:
    """The privacy-protected vector (may be negative or otherwise nonsensical)."""

    values: np.ndarray
    mechanism: MechanismSpec
    stratum: str

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly_vector(self.values))
        _require_finite(self.values, "noisy measurement values")

    @property
    def dim(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": list(map(float, self.values)),
            "mechanism": self.mechanism.to_dict(),
            "stratum": self.stratum,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NoisyMeasurement":
        return cls(
            values=d["values"],
            mechanism=MechanismSpec.from_dict(d["mechanism"]),
            stratum=d["stratum"],
        )


def _encode_bound(x: float):
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return float(x)


def _decode_bound(x) -> float:
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    return float(x)


@dataclass(frozen=True)
class ConstraintSystem:
    """The feasible polytope: lower <= matrix @ y <= upper, componentwise."""

    lower: np.ndarray
    upper: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=np.float64)
        upper = np.array(self.upper, dtype=np.float64)
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionMismatch(f"constraint matrix must be 2-d, got {matrix.shape}")
        p, m = matrix.shape
        if lower.shape != (p,) or upper.shape != (p,):
            raise DimensionMismatch(
                f"bounds of length {lower.shape}/{upper.shape} vs {p} matrix rows"
            )
        _require_finite(matrix, "constraint matrix")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("constraint bounds must not be NaN")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ValueError(f"row {bad}: lower {lower[bad]} > upper {upper[bad]}")
        if np.any(np.all(matrix == 0.0, axis=1)):
            raise ValueError("constraint matrix contains an all-zero row")
        for arr, name in ((lower, "lower"), (upper, "upper"), (matrix, "matrix")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "lower": [_encode_bound(x) for x in self.lower],
            "upper": [_encode_bound(x) for x in self.upper],
            "matrix": [[float(x) for x in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ConstraintSystem":
        return cls(
            lower=[_decode_bound(x) for x in d["lower"]],
            upper=[_decode_bound(x) for x in d["upper"]],
            matrix=d["matrix"],
        )


@dataclass(frozen=True)
class PosteriorDraws:
    """Feasible samples from the constrained posterior, one row per draw."""

    draws: np.ndarray
    burn_in: int
    acceptance_rate: float
    seed: int

    def __post_init__(self):
        draws = np.array(self.draws, dtype=np.float64)
        if draws.ndim != 2 or draws.shape[0] < 1:
            raise DimensionMismatch(f"draws must be a nonempty n x m matrix, got {draws.shape}")
        if not 0.0 < self.acceptance_rate <= 1.0:
            raise ValueError(f"acceptance rate must be in (0, 1], got {self.acceptance_rate}")
        draws.flags.writeable = False
        object.__setattr__(self, "draws", draws)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "draws": [[float(x) for x in row] for row in self.draws],
            "burn_in": int(self.burn_in),
            "acceptance_rate": float(self.acceptance_rate),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PosteriorDraws":
        return cls(
            draws=d["draws"],
            burn_in=d["burn_in"],
            acceptance_rate=d["acceptance_rate"],
            seed=d["seed"],
        )


@dataclass(frozen=True)
class RatioTriple:
    """The three published average-family-size ratios for one stratum.

    ``blow_up`` marks a zero denominator; the ratio fields are then NaN
    sentinels rather than raw infinities.
    """

    under18: float
    over18: float
    total: float
    blow_up: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "under18": float(self.under18),
            "over18": float(self.over18),
            "total": float(self.total),
            "blow_up": bool(self.blow_up),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RatioTriple":
        return cls(
            under18=d["under18"],
            over18=d["over18"],
            total=d["total"],
            blow_up=d.get("blow_up", False),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.under18, self.over18, self.total])


def validate_dimensions(tab: Tabulation, cs: ConstraintSystem) -> None:
    """Check that the constraint matrix is compatible with the tabulation."""
    if cs.dim != tab.dim:
        raise DimensionMismatch(
            f"constraint system has {cs.dim} columns but tabulation has {tab.dim} coordinates"
        )
