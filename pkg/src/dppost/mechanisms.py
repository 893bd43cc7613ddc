"""Noise generation and scale calibration for the Gaussian and Laplace mechanisms.

The noise scales used in production are stated as margins of error (MOE) at a
confidence level; the calibration helpers convert between the two
parameterizations.  All randomness flows through explicit seeded generators,
never a global RNG; per-stratum sub-seeds come from :func:`derive_seed`.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.stats import norm

from .model import MechanismFamily, MechanismSpec, NoisyMeasurement, Tabulation

_SEED_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, *tags: str) -> int:
    """Derive a stable 64-bit sub-seed from a master seed and string tags.

    The derivation is SHA-256 over ``"{master_seed}/{tag1}/{tag2}/..."``,
    taking the first 8 digest bytes little-endian.  Adding strata to a run
    therefore never perturbs the seeds of existing strata.
    """
    text = "/".join([str(int(master_seed)), *tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _SEED_MASK


def gaussian_sigma_from_moe(moe: float, level: float) -> float:
    """Standard deviation of Gaussian noise whose |error| <= moe with prob `level`."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    if moe <= 0:
        raise ValueError(f"margin of error must be positive, got {moe}")
    return moe / norm.ppf(0.5 * (1.0 + level))


def gaussian_moe_from_sigma(sigma: float, level: float) -> float:
    """Inverse of :func:`gaussian_sigma_from_moe`."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    return sigma * norm.ppf(0.5 * (1.0 + level))


def laplace_lambda_from_moe(moe: float, level: float) -> float:
    """Laplace scale whose |error| <= moe with probability `level`.

    Uses P(|X| <= m) = 1 - exp(-m / lambda).
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    if moe <= 0:
        raise ValueError(f"margin of error must be positive, got {moe}")
    return moe / (-math.log1p(-level))


def laplace_moe_from_lambda(lam: float, level: float) -> float:
    """Inverse of :func:`laplace_lambda_from_moe`."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    return lam * (-math.log1p(-level))


def kl_matched_gaussian_variance(lam: float) -> float:
    """Variance of the Gaussian closest in KL divergence to a Laplace(lam).

    Equals pi * lam**2 / 2; used to center the MH proposal for the Laplace
    mechanism.
    """
    if lam <= 0:
        raise ValueError(f"laplace scale must be positive, got {lam}")
    return math.pi * lam * lam / 2.0


def spec_from_moe(family: MechanismFamily | str, moe: float, level: float) -> MechanismSpec:
    """Build a MechanismSpec with scale calibrated from a margin of error."""
    family = MechanismFamily(family)
    if family is MechanismFamily.GAUSSIAN:
        scale = gaussian_sigma_from_moe(moe, level)
    else:
        scale = laplace_lambda_from_moe(moe, level)
    return MechanismSpec(family=family, scale=scale, provenance={"moe": moe, "level": level})


def laplace_from_uniform(u: np.ndarray, scale: float) -> np.ndarray:
    """Inverse-CDF Laplace variates from uniforms in [0, 1).

    Kept explicit (rather than Generator.laplace) so the draw is a pure
    function of the uniform stream and reproducible across platforms.
    """
    shifted = u - 0.5
    return -scale * np.sign(shifted) * np.log1p(-2.0 * np.abs(shifted))


def add_noise(tab: Tabulation, spec: MechanismSpec, rng: np.random.Generator) -> NoisyMeasurement:
    """Release a noisy measurement: independent per-coordinate noise added to tab."""
    m = tab.dim
    if spec.family is MechanismFamily.GAUSSIAN:
        eps = spec.scale * rng.standard_normal(m)
    else:
        eps = laplace_from_uniform(rng.random(m), spec.scale)
    return NoisyMeasurement(values=tab.values + eps, mechanism=spec, stratum=tab.stratum)


def log_kernel(family: MechanismFamily | str, scale: float, z, y) -> float:
    """Log noise density of z given y, up to an additive constant fixed by scale.

    Vectorized: array arguments are summed over components, implementing the
    log of the independent-coordinate product likelihood.
    """
    family = MechanismFamily(family)
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    resid = np.asarray(z, dtype=float) - np.asarray(y, dtype=float)
    if family is MechanismFamily.GAUSSIAN:
        return float(-0.5 * np.sum((resid / scale) ** 2))
    return float(-np.sum(np.abs(resid)) / scale)
