import math

import numpy as np
import pytest
from scipy import integrate, stats

from dppost._kernels import backend, new_state
from dppost.constraints import feasible_mask, ph5_system
from dppost.mechanisms import kl_matched_gaussian_variance
from dppost.model import (
    AcceptanceTooLow,
    ConstraintSystem,
    EmptyInterval,
    MechanismSpec,
    NoisyMeasurement,
)
from dppost.samplers import (
    ChainConfig,
    KernelStream,
    effective_sample_size,
    gibbs_tmvn,
    mh_laplace,
    rejection_sample,
    sample_truncated_normal_1d,
)

from conftest import PAPER_LAMBDA, PAPER_SIGMA

VACUOUS = ConstraintSystem(
    lower=[-math.inf] * 3, upper=[math.inf] * 3, matrix=np.eye(3)
)


def nm(values, family="gaussian", scale=PAPER_SIGMA):
    return NoisyMeasurement(
        values=np.asarray(values, dtype=float),
        mechanism=MechanismSpec(family=family, scale=scale),
        stratum="s",
    )


def combined_se(a, b, ess_a, ess_b):
    return math.sqrt(np.var(a) / ess_a + np.var(b) / ess_b)


class TestTruncatedNormal1d:
    def test_no_truncation_mean(self):
        stream = KernelStream(101)
        draws = np.array(
            [sample_truncated_normal_1d(0.0, 1.0, -math.inf, math.inf, stream) for _ in range(100_000)]
        )
        assert abs(draws.mean()) < 0.01

    def test_half_normal_mean(self):
        stream = KernelStream(102)
        draws = np.array(
            [sample_truncated_normal_1d(0.0, 1.0, 0.0, math.inf, stream) for _ in range(100_000)]
        )
        assert abs(draws.mean() - math.sqrt(2.0 / math.pi)) < 0.01

    def test_deep_tail_moments_vs_quadrature(self):
        lo, hi = 8.0, 9.0
        stream = KernelStream(103)
        draws = np.array(
            [sample_truncated_normal_1d(0.0, 1.0, lo, hi, stream) for _ in range(100_000)]
        )
        assert np.all((draws >= lo) & (draws <= hi))
        assert np.all(np.isfinite(draws))
        mass, _ = integrate.quad(stats.norm.pdf, lo, hi)
        m1, _ = integrate.quad(lambda x: x * stats.norm.pdf(x), lo, hi)
        m2, _ = integrate.quad(lambda x: x * x * stats.norm.pdf(x), lo, hi)
        assert abs(draws.mean() - m1 / mass) / (m1 / mass) < 0.01
        assert abs(np.mean(draws**2) - m2 / mass) / (m2 / mass) < 0.01

    def test_point_interval(self):
        assert sample_truncated_normal_1d(0.0, 1.0, 4.0, 4.0, KernelStream(1)) == 4.0

    def test_empty_interval(self):
        with pytest.raises(EmptyInterval):
            sample_truncated_normal_1d(0.0, 1.0, 2.0, 1.0, KernelStream(1))

    def test_bad_sd(self):
        with pytest.raises(ValueError):
            sample_truncated_normal_1d(0.0, 0.0, 0.0, 1.0, KernelStream(1))


class TestGibbs:
    def test_unconstrained_reduction(self):
        z = nm([500.0, 800.0, 400.0])
        draws = gibbs_tmvn(z, VACUOUS, PAPER_SIGMA, ChainConfig(n_draws=10_000, burn_in=100, seed=6))
        se = PAPER_SIGMA / math.sqrt(10_000)
        assert np.all(np.abs(draws.draws.mean(axis=0) - z.values) < 3 * se * math.sqrt(3))
        assert draws.acceptance_rate == 1.0

    def test_matches_rejection_oracle(self, ph5):
        z = nm([500.0, 800.0, 400.0])
        cfg = ChainConfig(n_draws=10_000, burn_in=200, seed=7)
        mcmc = gibbs_tmvn(z, ph5, PAPER_SIGMA, cfg)
        oracle = rejection_sample(z, ph5, ChainConfig(n_draws=10_000, seed=8))
        for j in range(3):
            ess = effective_sample_size(mcmc, j)
            se = combined_se(mcmc.draws[:, j], oracle.draws[:, j], ess, oracle.n_draws)
            assert abs(mcmc.draws[:, j].mean() - oracle.draws[:, j].mean()) < 3 * se

    def test_pinched_system_stays_on_face(self):
        cs = ph5_system(2)
        z = nm([300.0, 500.0, 150.0])
        draws = gibbs_tmvn(z, cs, PAPER_SIGMA, ChainConfig(n_draws=500, burn_in=50, seed=9))
        face = draws.draws[:, 0] + draws.draws[:, 1] - 2.0 * draws.draws[:, 2]
        assert np.all(np.abs(face) < 1e-6)

    def test_all_draws_feasible_strict(self, ph5):
        for z_vals in ([500.0, 800.0, 400.0], [-50.0, 300.0, 100.0], [5.0, 5.0, 3.0]):
            draws = gibbs_tmvn(nm(z_vals), ph5, PAPER_SIGMA, ChainConfig(n_draws=2000, burn_in=100, seed=10))
            assert feasible_mask(draws.draws, ph5, tol=0.0).all()

    def test_no_nan_or_inf(self, ph5):
        draws = gibbs_tmvn(nm([-2000.0, -2000.0, -500.0]), ph5, 10.0, ChainConfig(n_draws=1000, burn_in=100, seed=11))
        assert np.all(np.isfinite(draws.draws))
        assert feasible_mask(draws.draws, ph5, tol=0.0).all()

    def test_determinism(self, ph5):
        cfg = ChainConfig(n_draws=500, burn_in=50, seed=12)
        a = gibbs_tmvn(nm([500.0, 800.0, 400.0]), ph5, PAPER_SIGMA, cfg)
        b = gibbs_tmvn(nm([500.0, 800.0, 400.0]), ph5, PAPER_SIGMA, cfg)
        assert np.array_equal(a.draws, b.draws)

    def test_requires_gaussian_mechanism(self, ph5):
        with pytest.raises(ValueError):
            gibbs_tmvn(nm([1.0, 2.0, 1.0], family="laplace", scale=86.86), ph5, 120.0, ChainConfig(n_draws=10))


class TestRejection:
    def test_vacuous_acceptance(self):
        out = rejection_sample(nm([0.0, 0.0, 0.0]), VACUOUS, ChainConfig(n_draws=5000, seed=13))
        assert out.acceptance_rate == 1.0

    def test_acceptance_matches_grid_integration(self, ph5):
        z = nm([500.0, 800.0, 400.0])
        out = rejection_sample(z, ph5, ChainConfig(n_draws=40_000, seed=14))
        # midpoint-rule posterior mass of the polytope on a 3-d grid
        sigma = PAPER_SIGMA
        axes = [np.linspace(v - 5 * sigma, v + 5 * sigma, 140) for v in z.values]
        h = axes[0][1] - axes[0][0]
        mass = 0.0
        for x0 in axes[0]:
            g1, g2 = np.meshgrid(axes[1], axes[2], indexing="ij")
            pts = np.column_stack([np.full(g1.size, x0), g1.ravel(), g2.ravel()])
            ok = feasible_mask(pts, ph5, tol=0.0)
            dens = np.prod(stats.norm.pdf((pts - z.values) / sigma), axis=1) / sigma**3
            mass += np.sum(dens[ok]) * h**3
        assert abs(out.acceptance_rate - mass) / mass < 0.02

    def test_concentrated_measurement_accepts_everything(self, ph5):
        out = rejection_sample(nm([5000.0, 9000.0, 3000.0], scale=10.0), ph5, ChainConfig(n_draws=5000, seed=15))
        assert out.acceptance_rate > 0.999

    def test_acceptance_too_low(self, ph5):
        z = nm([-4000.0, -4000.0, -4000.0])
        with pytest.raises(AcceptanceTooLow) as err:
            rejection_sample(z, ph5, ChainConfig(n_draws=100, seed=16), max_attempts=20_000)
        assert 0.0 <= err.value.acceptance < 1.0

    def test_draws_feasible_and_deterministic(self, ph5):
        cfg = ChainConfig(n_draws=2000, seed=17)
        a = rejection_sample(nm([100.0, 300.0, 120.0]), ph5, cfg)
        b = rejection_sample(nm([100.0, 300.0, 120.0]), ph5, cfg)
        assert np.array_equal(a.draws, b.draws)
        assert feasible_mask(a.draws, ph5, tol=0.0).all()


class TestMhLaplace:
    def test_target_equal_to_proposal_always_accepts(self, ph5):
        # Gaussian target with the same scale as the proposal: the log ratio
        # is identically zero, so every proposal is accepted.
        z = np.array([500.0, 800.0, 400.0])
        prop_sd = 110.0
        _, acc = backend.mh_chain(
            z, prop_sd, True, prop_sd,
            np.ascontiguousarray(ph5.matrix),
            np.ascontiguousarray(ph5.lower),
            np.ascontiguousarray(ph5.upper),
            z.copy(), 500, 50, 1, 5, new_state(18),
        )
        assert acc == 1.0

    def test_matches_rejection_oracle_with_high_acceptance(self, ph5):
        z = nm([500.0, 800.0, 400.0], family="laplace", scale=PAPER_LAMBDA)
        mcmc = mh_laplace(z, ph5, PAPER_LAMBDA, ChainConfig(n_draws=10_000, burn_in=200, seed=19))
        assert mcmc.acceptance_rate > 0.5
        oracle = rejection_sample(z, ph5, ChainConfig(n_draws=10_000, seed=20))
        for j in range(3):
            ess = effective_sample_size(mcmc, j)
            se = combined_se(mcmc.draws[:, j], oracle.draws[:, j], ess, oracle.n_draws)
            assert abs(mcmc.draws[:, j].mean() - oracle.draws[:, j].mean()) < 3 * se

    def test_large_scale_tight_polytope(self, ph5):
        z = nm([20.0, 30.0, 10.0], family="laplace", scale=5000.0)
        draws = mh_laplace(z, ph5, 5000.0, ChainConfig(n_draws=1000, burn_in=100, seed=21))
        assert draws.acceptance_rate > 0.0
        assert feasible_mask(draws.draws, ph5, tol=0.0).all()

    def test_determinism(self, ph5):
        z = nm([100.0, 200.0, 80.0], family="laplace", scale=PAPER_LAMBDA)
        cfg = ChainConfig(n_draws=300, burn_in=50, seed=22)
        a = mh_laplace(z, ph5, PAPER_LAMBDA, cfg)
        b = mh_laplace(z, ph5, PAPER_LAMBDA, cfg)
        assert np.array_equal(a.draws, b.draws)
        assert a.acceptance_rate == b.acceptance_rate

    def test_requires_laplace_mechanism(self, ph5):
        with pytest.raises(ValueError):
            mh_laplace(nm([1.0, 2.0, 1.0]), ph5, 86.86, ChainConfig(n_draws=10))


class TestEffectiveSampleSize:
    def test_iid_draws(self, ph5):
        out = rejection_sample(nm([500.0, 800.0, 400.0]), ph5, ChainConfig(n_draws=10_000, seed=23))
        for j in range(3):
            ess = effective_sample_size(out, j)
            assert abs(ess - out.n_draws) / out.n_draws < 0.10

    def test_constant_chain(self):
        from dppost.model import PosteriorDraws

        draws = PosteriorDraws(
            draws=np.ones((100, 2)), burn_in=0, acceptance_rate=1.0, seed=0
        )
        assert effective_sample_size(draws, 0) == 1.0

    def test_antithetic_chain_clamped(self):
        from dppost.model import PosteriorDraws

        x = np.tile([1.0, -1.0], 500)
        draws = PosteriorDraws(
            draws=x.reshape(-1, 1), burn_in=0, acceptance_rate=1.0, seed=0
        )
        assert effective_sample_size(draws, 0) == 1000.0

    def test_ar1_chain_matches_theory(self):
        from dppost.model import PosteriorDraws

        rho = 0.8
        rng = np.random.default_rng(24)
        n = 200_000
        x = np.empty(n)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(n) * math.sqrt(1 - rho**2)
        for t in range(1, n):
            x[t] = rho * x[t - 1] + eps[t]
        draws = PosteriorDraws(
            draws=x.reshape(-1, 1), burn_in=0, acceptance_rate=1.0, seed=0
        )
        ess = effective_sample_size(draws, 0)
        expected = n * (1 - rho) / (1 + rho)
        assert abs(ess - expected) / expected < 0.25

    def test_too_few_draws(self):
        from dppost.model import PosteriorDraws

        draws = PosteriorDraws(draws=np.ones((5, 1)), burn_in=0, acceptance_rate=1.0, seed=0)
        with pytest.raises(ValueError):
            effective_sample_size(draws, 0)
