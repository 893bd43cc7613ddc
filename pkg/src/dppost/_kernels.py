"""Hot sampling kernels: truncated-normal draws and full MCMC chains.

Two interchangeable backends are built from the same scalar source: a
numba ``@njit``-compiled one (the default whenever numba imports) and a plain
Python/numpy fallback.  Select explicitly with the environment variable
``DPPOST_BACKEND=numba`` or ``DPPOST_BACKEND=numpy``; both produce
bit-identical streams because they share one counter-based RNG and the same
arithmetic.

The RNG is SplitMix64 driven by a 1-element uint64 state array, so chains are
deterministic given a seed, independent of platform and of how many chains
run concurrently.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi

# Below this expected-acceptance threshold the capped tail-exponential
# sampler switches to uniform rejection on the interval.
_EXP_VS_UNIFORM = 0.7


def build_backend(jit: bool) -> SimpleNamespace:
    """Build the kernel family, optionally numba-compiled.

    Both variants consume the same SplitMix64 stream; the only difference in
    source is native uint64 wraparound (numba) versus masked Python ints.
    """
    if jit:
        from numba import njit

        dec = njit(nogil=True)

        @dec
        def next_uniform(state):
            s = state[0] + np.uint64(_GOLDEN)
            state[0] = s
            z = s
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
            return float((z >> np.uint64(11)) + np.uint64(1)) * _INV53

    else:

        def dec(f):
            return f

        def next_uniform(state):
            s = (int(state[0]) + _GOLDEN) & _MASK
            state[0] = s
            z = s
            z = ((z ^ (z >> 30)) * _MIX1) & _MASK
            z = ((z ^ (z >> 27)) * _MIX2) & _MASK
            z = z ^ (z >> 31)
            return float((z >> 11) + 1) * _INV53

    @dec
    def std_normal(state):
        # Box-Muller, cosine branch only; simplicity over throughput.
        u1 = next_uniform(state)
        u2 = next_uniform(state)
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)

    @dec
    def tn_std(a, b, state):
        # One draw from N(0, 1) restricted to [a, b], a < b.
        flip = False
        if b <= 0.0:
            t = a
            a = -b
            b = -t
            flip = True
        x = 0.0
        if a <= 0.0:
            # Interval contains the mode.
            if b - a < 1.0:
                while True:
                    x = a + (b - a) * next_uniform(state)
                    if next_uniform(state) <= math.exp(-0.5 * x * x):
                        break
            else:
                while True:
                    x = std_normal(state)
                    if a <= x <= b:
                        break
        else:
            # One-sided tail: shifted-exponential rejection (rate chosen to
            # maximize acceptance), falling back to uniform rejection when the
            # interval is too narrow for the capped exponential to land in it.
            alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
            if b == math.inf or (b - a) * alpha > _EXP_VS_UNIFORM:
                while True:
                    x = a - math.log(next_uniform(state)) / alpha
                    if x > b:
                        continue
                    d = x - alpha
                    if next_uniform(state) <= math.exp(-0.5 * d * d):
                        break
            else:
                while True:
                    x = a + (b - a) * next_uniform(state)
                    if next_uniform(state) <= math.exp(0.5 * (a * a - x * x)):
                        break
        if flip:
            return -x
        return x

    @dec
    def tn_draw(mean, sd, low, high, state):
        # One draw from N(mean, sd^2) restricted to [low, high], nudged off
        # finite endpoints so downstream feasibility checks at zero tolerance
        # hold despite float round-off.
        if high <= low:
            return 0.5 * (low + high)
        a = (low - mean) / sd
        b = (high - mean) / sd
        x = mean + sd * tn_std(a, b, state)
        if low > -math.inf:
            pad = 1e-15 * (abs(low) + 1.0)
            if high < math.inf:
                w = 1e-12 * (high - low)
                if w > pad:
                    pad = w
                if pad > 0.25 * (high - low):
                    pad = 0.25 * (high - low)
            if x < low + pad:
                x = low + pad
        if high < math.inf:
            pad = 1e-15 * (abs(high) + 1.0)
            if low > -math.inf:
                w = 1e-12 * (high - low)
                if w > pad:
                    pad = w
                if pad > 0.25 * (high - low):
                    pad = 0.25 * (high - low)
            if x > high - pad:
                x = high - pad
        return x

    @dec
    def coord_bounds(D, lower, upper, y, j):
        # Conditional interval for y[j] given the other coordinates.
        lo = -math.inf
        hi = math.inf
        p = D.shape[0]
        m = D.shape[1]
        for k in range(p):
            d = D[k, j]
            if d == 0.0:
                continue
            r = 0.0
            for i in range(m):
                if i != j:
                    r += D[k, i] * y[i]
            lo_k = (lower[k] - r) / d
            hi_k = (upper[k] - r) / d
            if d < 0.0:
                t = lo_k
                lo_k = hi_k
                hi_k = t
            if lo_k > lo:
                lo = lo_k
            if hi_k < hi:
                hi = hi_k
        return lo, hi

    @dec
    def gibbs_sweep(z, sd, D, lower, upper, y, state):
        # One systematic (fixed-order) scan over coordinates.
        m = y.shape[0]
        for j in range(m):
            lo, hi = coord_bounds(D, lower, upper, y, j)
            if hi < lo:
                # float round-off inverted a degenerate interval
                y[j] = 0.5 * (lo + hi)
            else:
                y[j] = tn_draw(z[j], sd, lo, hi, state)

    @dec
    def gibbs_chain(z, sd, D, lower, upper, y0, n_keep, burn_in, thin, state):
        m = z.shape[0]
        y = y0.copy()
        out = np.empty((n_keep, m))
        total = burn_in + n_keep * thin
        kept = 0
        for sweep in range(total):
            gibbs_sweep(z, sd, D, lower, upper, y, state)
            if sweep >= burn_in and (sweep - burn_in) % thin == 0:
                for i in range(m):
                    out[kept, i] = y[i]
                kept += 1
        return out

    @dec
    def mh_chain(
        z, target_scale, gaussian_target, prop_sd, D, lower, upper, y0,
        n_keep, burn_in, thin, refresh, state,
    ):
        # Independence MH on the polytope.  The production target is the
        # Laplace likelihood (gaussian_target=False); the Gaussian target
        # exists so a target-equals-proposal run can validate the acceptance
        # arithmetic.  Proposals are truncated-Gaussian states refreshed by
        # `refresh` Gibbs sweeps; truncation constants cancel in the
        # acceptance ratio because target and proposal share the same support.
        m = z.shape[0]
        w = y0.copy()
        # Start from a proposal draw, not from the feasibility-repaired point:
        # a start deep in the proposal's tail has an enormous importance
        # weight and would freeze an independence chain.
        for _ in range(refresh):
            gibbs_sweep(z, prop_sd, D, lower, upper, w, state)
        y = w.copy()
        out = np.empty((n_keep, m))
        n_prop = burn_in + n_keep * thin
        accepted = 0
        lt_y = 0.0
        lp_y = 0.0
        for i in range(m):
            if gaussian_target:
                lt_y -= 0.5 * ((z[i] - y[i]) / target_scale) ** 2
            else:
                lt_y -= abs(z[i] - y[i]) / target_scale
            lp_y -= 0.5 * ((z[i] - y[i]) / prop_sd) ** 2
        kept = 0
        for it in range(n_prop):
            for _ in range(refresh):
                gibbs_sweep(z, prop_sd, D, lower, upper, w, state)
            lt_w = 0.0
            lp_w = 0.0
            for i in range(m):
                if gaussian_target:
                    lt_w -= 0.5 * ((z[i] - w[i]) / target_scale) ** 2
                else:
                    lt_w -= abs(z[i] - w[i]) / target_scale
                lp_w -= 0.5 * ((z[i] - w[i]) / prop_sd) ** 2
            log_ratio = (lt_w - lt_y) + (lp_y - lp_w)
            if math.log(next_uniform(state)) <= log_ratio:
                for i in range(m):
                    y[i] = w[i]
                lt_y = lt_w
                lp_y = lp_w
                accepted += 1
            if it >= burn_in and (it - burn_in) % thin == 0:
                for i in range(m):
                    out[kept, i] = y[i]
                kept += 1
        return out, accepted / n_prop

    return SimpleNamespace(
        jit=jit,
        next_uniform=next_uniform,
        std_normal=std_normal,
        tn_std=tn_std,
        tn_draw=tn_draw,
        coord_bounds=coord_bounds,
        gibbs_sweep=gibbs_sweep,
        gibbs_chain=gibbs_chain,
        mh_chain=mh_chain,
    )


def _select_backend() -> tuple[SimpleNamespace, str]:
    choice = os.environ.get("DPPOST_BACKEND", "").strip().lower()
    if choice == "numpy":
        return build_backend(False), "numpy"
    try:
        return build_backend(True), "numba"
    except ImportError:
        if choice == "numba":
            raise
        return build_backend(False), "numpy"


backend, backend_name = _select_backend()


def new_state(seed: int) -> np.ndarray:
    """Fresh SplitMix64 state array from an integer seed."""
    return np.array([int(seed) & _MASK], dtype=np.uint64)
