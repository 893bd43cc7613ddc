"""Posterior samplers for noisy measurements under linear inequality constraints.

Three routes to the same constrained posterior:

* :func:`gibbs_tmvn` -- exact coordinate Gibbs for the Gaussian mechanism
  (the posterior is a truncated multivariate normal);
* :func:`mh_laplace` -- independence Metropolis-Hastings for the Laplace
  mechanism, proposing truncated-Gaussian states with KL-matched variance;
* :func:`rejection_sample` -- exact i.i.d. rejection sampling from the
  unconstrained posterior, usable for either mechanism.  This doubles as the
  correctness oracle for the two MCMC routes and is a legitimate production
  path whenever acceptance is high.

All density arithmetic is in the log domain and a single chain is strictly
sequential; concurrent chains must use independently derived seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import backend, new_state
from .constraints import find_feasible_start
from .mechanisms import kl_matched_gaussian_variance, laplace_from_uniform
from .model import (
    AcceptanceTooLow,
    ConstraintSystem,
    EmptyInterval,
    MechanismFamily,
    NoisyMeasurement,
    PosteriorDraws,
)


@dataclass(frozen=True)
class ChainConfig:
    """MCMC run lengths and the RNG seed.

    Burn-in and thinning defaults are artifact conventions (the production
    setting only fixes the number of retained draws).
    """

    n_draws: int = 10_000
    burn_in: int = 500
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError(f"n_draws must be >= 1, got {self.n_draws}")
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")


class KernelStream:
    """Seeded SplitMix64 stream handle consumed by the sampling kernels."""

    def __init__(self, seed: int):
        self.state = new_state(seed)


def sample_truncated_normal_1d(
    mean: float, sd: float, low: float, high: float, rng: KernelStream | int
) -> float:
    """One exact draw from N(mean, sd^2) conditioned on [low, high].

    Robust for intervals deep in either tail (shifted-exponential rejection,
    not inverse-CDF).  ``low == high`` returns that point.
    """
    if sd <= 0:
        raise ValueError(f"sd must be positive, got {sd}")
    if low > high:
        raise EmptyInterval(f"low {low} > high {high}")
    if low == high:
        return float(low)
    stream = rng if isinstance(rng, KernelStream) else KernelStream(rng)
    return float(backend.tn_draw(mean, sd, low, high, stream.state))


def _chain_arrays(z: NoisyMeasurement, cs: ConstraintSystem):
    if cs.dim != z.dim:
        raise ValueError(f"{cs.dim}-column system vs {z.dim}-coordinate measurement")
    zv = np.ascontiguousarray(z.values, dtype=np.float64)
    D = np.ascontiguousarray(cs.matrix, dtype=np.float64)
    lower = np.ascontiguousarray(cs.lower, dtype=np.float64)
    upper = np.ascontiguousarray(cs.upper, dtype=np.float64)
    y0 = np.ascontiguousarray(find_feasible_start(zv, cs), dtype=np.float64)
    return zv, D, lower, upper, y0


def gibbs_tmvn(
    z: NoisyMeasurement, cs: ConstraintSystem, sigma: float, cfg: ChainConfig
) -> PosteriorDraws:
    """Systematic-scan Gibbs for the truncated-normal posterior N(z, sigma^2 I) on the polytope.

    ``sigma`` is the noise standard deviation.  Acceptance rate is 1.0 by
    convention for Gibbs.
    """
    if z.mechanism.family is not MechanismFamily.GAUSSIAN:
        raise ValueError(f"gibbs_tmvn requires a Gaussian-mechanism measurement, got {z.mechanism.family}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    zv, D, lower, upper, y0 = _chain_arrays(z, cs)
    state = new_state(cfg.seed)
    draws = backend.gibbs_chain(
        zv, float(sigma), D, lower, upper, y0, cfg.n_draws, cfg.burn_in, cfg.thin, state
    )
    return PosteriorDraws(draws=draws, burn_in=cfg.burn_in, acceptance_rate=1.0, seed=cfg.seed)


def mh_laplace(
    z: NoisyMeasurement,
    cs: ConstraintSystem,
    lam: float,
    cfg: ChainConfig,
    refresh_sweeps: int = 25,
) -> PosteriorDraws:
    """Independence MH targeting the Laplace-likelihood posterior on the polytope.

    Each proposal is a truncated-Gaussian state centered at z with the
    KL-matched variance (pi * lam^2 / 2), refreshed by ``refresh_sweeps``
    internal Gibbs sweeps from the previous proposal; the slight proposal
    correlation this induces is accepted and disclosed.  The acceptance ratio
    uses only the Gaussian and Laplace kernels: truncation constants cancel
    because target and proposal share the same support.
    """
    if z.mechanism.family is not MechanismFamily.LAPLACE:
        raise ValueError(f"mh_laplace requires a Laplace-mechanism measurement, got {z.mechanism.family}")
    if lam <= 0 or not math.isfinite(lam):
        raise ValueError(f"lam must be positive and finite, got {lam}")
    zv, D, lower, upper, y0 = _chain_arrays(z, cs)
    prop_sd = math.sqrt(kl_matched_gaussian_variance(lam))
    state = new_state(cfg.seed)
    draws, acc = backend.mh_chain(
        zv,
        float(lam),
        False,
        prop_sd,
        D,
        lower,
        upper,
        y0,
        cfg.n_draws,
        cfg.burn_in,
        cfg.thin,
        int(refresh_sweeps),
        state,
    )
    return PosteriorDraws(
        draws=draws, burn_in=cfg.burn_in, acceptance_rate=max(acc, 1e-12), seed=cfg.seed
    )


def rejection_sample(
    z: NoisyMeasurement,
    cs: ConstraintSystem,
    cfg: ChainConfig,
    max_attempts: int = 10_000_000,
) -> PosteriorDraws:
    """Exact i.i.d. posterior draws: propose z + noise, keep feasible vectors.

    By symmetry of both noise densities the unconstrained posterior of y given
    z is z + noise, so proposals are direct.  Works for either mechanism.
    Raises :class:`AcceptanceTooLow` (with the empirical acceptance
    probability) if the attempt budget runs out.
    """
    if cs.dim != z.dim:
        raise ValueError(f"{cs.dim}-column system vs {z.dim}-coordinate measurement")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    scale = z.mechanism.scale
    target = cfg.n_draws
    kept: list[np.ndarray] = []
    n_kept = 0
    attempts = 0
    batch = max(1024, min(target * 4, 1 << 16))
    while n_kept < target:
        if attempts >= max_attempts:
            acc = n_kept / attempts if attempts else 0.0
            raise AcceptanceTooLow(
                f"rejection sampler kept {n_kept}/{target} draws in {attempts} attempts "
                f"(acceptance {acc:.3g})",
                acc,
            )
        n = min(batch, max_attempts - attempts)
        if z.mechanism.family is MechanismFamily.GAUSSIAN:
            eps = scale * rng.standard_normal((n, z.dim))
        else:
            eps = laplace_from_uniform(rng.random((n, z.dim)), scale)
        proposals = z.values + eps
        r = proposals @ cs.matrix.T
        ok = np.all(r >= cs.lower, axis=1) & np.all(r <= cs.upper, axis=1)
        attempts += n
        good = proposals[ok]
        if len(good):
            kept.append(good)
            n_kept += len(good)
    draws = np.concatenate(kept, axis=0)[:target]
    return PosteriorDraws(
        draws=draws, burn_in=0, acceptance_rate=n_kept / attempts, seed=cfg.seed
    )


def effective_sample_size(draws: PosteriorDraws, coordinate: int) -> float:
    """Initial-positive-sequence autocorrelation ESS for one coordinate.

    Clamped to [1, n]: a constant chain reports the defined minimum 1, and
    antithetic chains (negative lag-1 autocorrelation) are clamped to n rather
    than reporting super-efficiency.
    """
    x = np.asarray(draws.draws[:, coordinate], dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError(f"need at least 10 draws for an ESS estimate, got {n}")
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0.0:
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real
    rho = acov / acov[0]
    # Geyer: sum adjacent-pair autocorrelations while the pair sums stay positive.
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1] if k + 1 < n else rho[k]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1e-12)
    return float(min(max(n / tau, 1.0), float(n)))
