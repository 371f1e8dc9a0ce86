"""
SMC' as a randomly time-changed SMC
===================================

Running the SMC for the random time ``ell/2 + 2 N``, with ``N`` Poisson of mean
``ell/4``, produces exactly the SMC' state at distance ``ell``.
"""

# %%
import math

from scipy import stats

from smcrates import dists, kernels, samplers
from smcrates.dists import Chain

x, ell, n = 1.0, 5.0, 50_000
seed = samplers.RngSeed(11)

# %%
# The chance of no visible change over ``ell`` agrees between the two routes.
print("atom, closed form      :", math.exp(-ell * x * dists.p_visible(x)))
print("atom, Poisson mixture  :", kernels.smc_prime_kernel(x, ell).atom_mass)

# %%
# Simulate both ways and compare the marginals.
direct = samplers.sample_endpoint(Chain.SMC_PRIME, x, ell, n, seed.stream(0))
timed = samplers.sample_subordinated_endpoint(x, ell, n, seed.stream(1))
res = stats.ks_2samp(direct, timed)
print(f"two-sample KS: D = {res.statistic:.4f}, p = {res.pvalue:.3f}")
print(f"mean endpoint: direct {direct.mean():.4f}, time-changed {timed.mean():.4f}")

# %%
# The time change itself has mean and variance both equal to ell.
c = samplers.sample_time_change(100.0, 100_000, seed.stream(2))
print(f"time change at ell = 100: mean {c.mean():.2f}, variance {c.var():.2f}")

# %%
# A whole path: the time-changed construction keeps only visible jumps.
path = samplers.sample_subordinated_path(x, 20.0, seed.stream(3))
print(f"path over [0, 20]: {path.n_jumps} visible jumps, "
      f"length-weighted mean TMRCA {path.time_average():.3f}")
