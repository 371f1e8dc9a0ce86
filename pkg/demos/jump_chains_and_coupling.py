"""
Geometric ergodicity of the jump chains
=======================================

The sequence of distinct TMRCA values visited by either process forgets its
starting point at rate 1/2 per jump.  Two views of that fact follow.
"""

# %%
# First, deterministic: push the one-step jump density through ``n`` steps on a
# quadrature grid and compare its distance to the stationary law against the
# geometric bound.
from smcrates import ergodicity as erg
from smcrates import samplers
from smcrates.dists import Chain

x = 2.0
for chain in Chain:
    print(f"{chain.value}: n, TV, bound")
    for n in (1, 2, 4, 8, 12):
        tv = erg.jump_tv_numeric(chain, x, n).value
        print(f"  {n:2d}  {tv:.3e}  {erg.jump_bound(chain, x, n):.3e}")

# %%
# Second, by simulation: drive two copies of the chain with the same uniforms
# through their conditional quantile functions.  One copy starts at 1, the
# other at a draw from the stationary law.  The mean gap halves, or better,
# at every step.
seed = samplers.RngSeed(7)
for i, chain in enumerate(Chain):
    trace = samplers.sample_coupled_chains(chain, 1.0, "stationary", 10, seed.stream(i), size=50_000)
    ratio, se = samplers.gap_ratios(trace)
    print(f"\n{chain.value}: per-step ratio of mean gaps")
    print("  " + " ".join(f"{r:.3f}" for r in ratio))
