import json
import math

import numpy as np
import pytest

from dppost.model import (
    ConstraintSystem,
    DimensionMismatch,
    MechanismSpec,
    NoisyMeasurement,
    PosteriorDraws,
    RatioTriple,
    Tabulation,
    validate_dimensions,
)


def make_cs(p, m):
    matrix = np.zeros((p, m))
    for k in range(p):
        matrix[k, k % m] = 1.0
    return ConstraintSystem(lower=[-math.inf] * p, upper=[math.inf] * p, matrix=matrix)


def test_validate_dimensions_consistent():
    tab = Tabulation(values=[1.0, 2.0, 3.0], labels=("a", "b", "c"), stratum="s")
    validate_dimensions(tab, make_cs(5, 3))


def test_validate_dimensions_mismatch():
    tab = Tabulation(values=[1.0, 2.0, 3.0], labels=("a", "b", "c"), stratum="s")
    with pytest.raises(DimensionMismatch):
        validate_dimensions(tab, make_cs(5, 4))


def test_validate_dimensions_scalar():
    tab = Tabulation(values=[7.0], labels=("x",), stratum="s")
    validate_dimensions(tab, make_cs(1, 1))


def test_tabulation_invariants():
    with pytest.raises(DimensionMismatch):
        Tabulation(values=[], labels=(), stratum="s")
    with pytest.raises(DimensionMismatch):
        Tabulation(values=[1.0, 2.0], labels=("a",), stratum="s")
    with pytest.raises(ValueError):
        Tabulation(values=[1.0, math.nan], labels=("a", "b"), stratum="s")


def test_mechanism_spec_scale_positive():
    with pytest.raises(ValueError):
        MechanismSpec(family="gaussian", scale=0.0)
    with pytest.raises(ValueError):
        MechanismSpec(family="laplace", scale=-1.0)


def test_constraint_system_invariants():
    with pytest.raises(ValueError):
        ConstraintSystem(lower=[5.0], upper=[3.0], matrix=[[1.0]])
    with pytest.raises(ValueError):
        ConstraintSystem(lower=[0.0, 0.0], upper=[1.0, 1.0], matrix=[[1.0], [0.0]])
    with pytest.raises(DimensionMismatch):
        ConstraintSystem(lower=[0.0], upper=[1.0, 2.0], matrix=[[1.0]])


def test_posterior_draws_invariants():
    with pytest.raises(DimensionMismatch):
        PosteriorDraws(draws=np.empty((0, 3)), burn_in=0, acceptance_rate=1.0, seed=0)
    with pytest.raises(ValueError):
        PosteriorDraws(draws=[[1.0]], burn_in=0, acceptance_rate=0.0, seed=0)


def test_arrays_are_immutable():
    tab = Tabulation(values=[1.0, 2.0], labels=("a", "b"), stratum="s")
    with pytest.raises(ValueError):
        tab.values[0] = 5.0


@pytest.mark.parametrize(
    "obj",
    [
        Tabulation(values=[1.5, 2.25, 1e-300], labels=("a", "b", "c"), stratum="g1"),
        MechanismSpec(family="gaussian", scale=121.58828, provenance={"moe": 200, "level": 0.9}),
        NoisyMeasurement(
            values=[-50.125, 300.0, 1e6 + 0.3],
            mechanism=MechanismSpec(family="laplace", scale=86.86),
            stratum="g2",
        ),
        ConstraintSystem(
            lower=[0.0, -math.inf],
            upper=[math.inf, 10.123456789012345],
            matrix=[[1.0, -2.0, 0.5], [0.0, 1.0, 0.0]],
        ),
        PosteriorDraws(
            draws=[[0.1, 0.2], [0.30000000000000004, 0.4]],
            burn_in=500,
            acceptance_rate=0.875,
            seed=42,
        ),
        RatioTriple(under18=0.87, over18=2.14, total=3.02),
    ],
)
def test_serialization_round_trip_bit_identical(obj):
    doc = json.loads(json.dumps(obj.to_dict()))
    back = type(obj).from_dict(doc)
    for name, value in obj.to_dict().items():
        got = back.to_dict()[name]
        if isinstance(value, list):
            assert np.array_equal(np.asarray(value, dtype=object), np.asarray(got, dtype=object))
        else:
            assert got == value
