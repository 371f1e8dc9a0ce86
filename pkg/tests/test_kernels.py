import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from smcrates import dists, kernels, samplers
from smcrates.dists import Chain
from smcrates.errors import DomainError, GridResolutionError, TruncationError
from smcrates.kernels import GridDensity, GridSpec
from smcrates.quadrature import PanelRule


def quad_kernel(x, ell, f):
    """int f(y) p_ell(x, y) dy with scipy's adaptive rule, split at the kink."""
    g = lambda y: f(y) * kernels.smc_kernel_density(x, ell, y)
    return integrate.quad(g, 0, x, epsabs=1e-14, epsrel=1e-13)[0] + \
        integrate.quad(g, x, np.inf, epsabs=1e-14, epsrel=1e-13)[0]


# --- SMC kernel -----------------------------------------------------------------


def test_smc_kernel_zero_distance():
    k = kernels.smc_kernel(1.0, 0.0)
    assert k.atom_mass == 1.0 and k.atom_location == 1.0
    assert len(k.density) == 0 and k.total_mass == 1.0


def test_smc_kernel_ell_one_value():
    # e^-0.5 * min(1, 0.5)
    assert kernels.smc_kernel_density(1.0, 1.0, 0.5) == pytest.approx(0.303265329856316712, rel=1e-15)


@pytest.mark.parametrize("ell, y, expected", [
    (1 + 1e-7, 0.5, 0.3032653526012158192),  # mpmath, 40 digits
    (1 - 3e-7, 2.0, 0.1353352629363161463),
])
def test_smc_kernel_near_ell_one(ell, y, expected):
    assert kernels.smc_kernel_density(1.0, ell, y) == pytest.approx(expected, rel=1e-13)


def test_expm1_over_is_continuous_at_band_edge():
    m = 0.8
    for a in (kernels.ELL_ONE_BAND * (1 - 1e-9), kernels.ELL_ONE_BAND * (1 + 1e-9)):
        assert kernels.expm1_over(a, m) == pytest.approx(-math.expm1(-a * m) / a, rel=1e-14)


def test_smc_kernel_atom_and_residual_mass():
    k = kernels.smc_kernel(1.0, 3.0)
    assert k.atom_mass == pytest.approx(math.exp(-3.0), rel=1e-15)
    assert k.density.mass == pytest.approx(1 - math.exp(-3.0), abs=1e-9)


def test_smc_atom_monte_carlo():
    # the first holding time from x = 1 is Exp(1); no jump before 3 has chance e^-3
    rng = np.random.default_rng(2024)
    n = 1_000_000
    frac = np.mean(rng.exponential(size=n) > 3.0)
    se = math.sqrt(math.exp(-3) * (1 - math.exp(-3)) / n)
    assert abs(frac - kernels.smc_kernel(1.0, 3.0).atom_mass) < 3 * se


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 20.0), st.floats(0.0, 500.0))
def test_smc_kernel_mass(x, ell):
    k = kernels.smc_kernel(x, ell)
    assert abs(k.total_mass - 1.0) < 1e-8
    assert np.all(k.density.values >= 0)


def test_smc_kernel_domain():
    with pytest.raises(DomainError):
        kernels.smc_kernel(0.0, 1.0)
    with pytest.raises(DomainError):
        kernels.smc_kernel(1.0, -0.1)


def test_coarse_grid_fails_self_test():
    with pytest.raises(GridResolutionError):
        kernels.smc_kernel(1.0, 3.0, GridSpec(t_max=5.0, panels=2, points_per_panel=2))


def test_grid_density_validation():
    with pytest.raises(ValueError):
        GridDensity([1.0, 2.0], [0.5, 0.5], [1.0, -0.1])
    with pytest.raises(ValueError):
        GridDensity([2.0, 1.0], [0.5, 0.5], [1.0, 1.0])


# --- Laplace transform -------------------------------------------------------------


def test_laplace_initial_condition():
    assert kernels.smc_laplace(1.3, 0.0, 0.7) == pytest.approx(math.exp(-0.7 * 1.3), rel=1e-15)


def test_laplace_stationary_limit():
    assert kernels.smc_laplace(1.3, 1e9, 0.7) == pytest.approx(1 / 1.7, rel=1e-8)


def test_laplace_against_quadrature():
    x, ell, lam = 1.0, 2.0, 1.0
    num = math.exp(-ell * x - lam * x) + quad_kernel(x, ell, lambda y: np.exp(-lam * y))
    assert num == pytest.approx(0.36652471224524262865, abs=1e-14)  # mpmath
    assert kernels.smc_laplace(x, ell, lam) == pytest.approx(num, abs=1e-6)


def test_laplace_domain():
    with pytest.raises(DomainError):
        kernels.smc_laplace(1.0, 1.0, 0.0)


def test_pde_residual_small():
    assert abs(kernels.transport_pde_residual(1.0, 2.0, 1.0, h=1e-4)) < 1e-6


def test_pde_residual_is_second_order():
    r1 = kernels.transport_pde_residual(1.0, 2.0, 1.0, h=1e-2)
    r2 = kernels.transport_pde_residual(1.0, 2.0, 1.0, h=5e-3)
    assert r1 / r2 == pytest.approx(4.0, rel=0.01)


@pytest.mark.parametrize("x, lam", [(1.0, 1.0), (0.3, 2.0), (4.0, 0.2)])
def test_generator_limit(x, lam):
    ell = 1e-6
    diff = (kernels.smc_laplace(x, ell, lam) - math.exp(-lam * x)) / ell
    closed = -math.expm1(-lam * x) / (lam * (1 + lam)) - x * math.exp(-lam * x)
    assert kernels.smc_generator_on_exponential(x, lam) == pytest.approx(closed, rel=1e-15)
    assert diff == pytest.approx(closed, abs=1e-4)


# --- composition and stationarity ---------------------------------------------------


@pytest.mark.parametrize("x, a, b", [(0.5, 0.5, 1.5), (1.0, 1.0, 1.0), (3.0, 2.0, 3.0)])
def test_chapman_kolmogorov(x, a, b):
    rule = PanelRule.default(focus=(x,))
    _, atom, dens = kernels.push_through_smc(x, math.exp(-a * x), lambda y: kernels.smc_kernel_density(x, a, y),
                                             b, rule)
    direct = kernels.smc_kernel_density(x, a + b, rule.nodes)
    tv = abs(atom - math.exp(-(a + b) * x)) + 0.5 * rule.integrate(np.abs(dens - direct))
    assert tv < 1e-5


@pytest.mark.parametrize("ell", [0.5, 1.0, 5.0])
def test_pi_is_stationary(ell):
    rule = PanelRule.default()
    _, _, dens = kernels.push_through_smc(1.0, 0.0, lambda y: np.exp(-y), ell, rule)
    assert 0.5 * rule.integrate(np.abs(dens - np.exp(-rule.nodes))) < 1e-6


# --- SMC' kernel -----------------------------------------------------------------


def test_poisson_window_tail():
    ks, w, dropped = kernels.poisson_window(250.0, 1e-12)
    assert dropped < 1e-12
    # summing ~300 pmf terms accumulates rounding of order 1e-13
    assert w.sum() == pytest.approx(1.0 - dropped, abs=1e-12)
    assert ks[0] > 0  # lower tail trimmed as well


def test_poisson_window_cap():
    with pytest.raises(TruncationError):
        kernels.poisson_window(1e4, 1e-12, k_cap=1000)


def test_smc_prime_zero_distance():
    k = kernels.smc_prime_kernel(1.0, 0.0)
    assert k.atom_mass == 1.0 and len(k.density) == 0


@pytest.mark.parametrize("x", [1e-3, 0.1, 1.0, 4.0, 20.0])
@pytest.mark.parametrize("ell", [0.5, 3.0, 40.0])
def test_smc_prime_atom_identity(x, ell):
    rhs = math.exp(-ell * x * dists.p_visible(x))
    assert kernels.smc_prime_atom(x, ell) == pytest.approx(rhs, rel=1e-13)


def test_smc_prime_atom_frozen():
    assert kernels.smc_prime_atom(1.0, 10.0) == pytest.approx(7.757643225929322397e-4, rel=1e-13)


@pytest.mark.parametrize("x, ell", [(0.3, 2.0), (1.0, 10.0), (5.0, 1.0)])
def test_smc_prime_mixture_atom_and_mass(x, ell):
    k = kernels.smc_prime_kernel(x, ell, tail_tol=1e-12)
    assert abs(k.atom_mass - kernels.smc_prime_atom(x, ell)) <= 1e-12
    assert abs(k.total_mass - 1.0) < 1e-8 + 1e-12
    assert k.density.mass == pytest.approx(1.0 - k.atom_mass, abs=1e-6)


def test_smc_prime_kernel_matches_simulation():
    x, ell, n = 1.0, 10.0, 1_000_000
    draws = samplers.sample_endpoint(Chain.SMC_PRIME, x, ell, n, samplers.RngSeed(99, 0))
    k = kernels.smc_prime_kernel(x, ell)
    stay = np.mean(draws == x)
    assert abs(stay - k.atom_mass) < 3 * math.sqrt(k.atom_mass / n)
    edges = np.concatenate([[1e-12], np.linspace(0.2, 4.0, 19), [40.0]])
    counts = np.histogram(draws[draws != x], edges)[0] / n
    probs = np.array([integrate.quad(k.pdf, a, b, points=[x] if a < x < b else None, epsabs=1e-13)[0]
                      for a, b in zip(edges[:-1], edges[1:])])
    z = np.abs(counts - probs) / np.sqrt(probs * (1 - probs) / n)
    assert z.max() < 3


# --- n-step jump kernels ------------------------------------------------------------


@pytest.mark.parametrize("chain", list(Chain))
def test_one_step_is_jump_density(chain):
    f = kernels.jump_kernel_power(chain, 1.3, 1)
    assert f.values == pytest.approx(dists.jump_density(chain, 1.3, f.nodes), abs=1e-15)


@pytest.mark.parametrize("chain", list(Chain))
def test_jump_power_mass_conserved(chain):
    for n in (1, 5, 10):
        f = kernels.jump_kernel_power(chain, 1.0, n)
        assert abs(f.mass - 1.0) < 1e-7
        assert f.meta["renormalizations"] == 0


@pytest.mark.parametrize("chain", list(Chain))
def test_jump_power_converges(chain):
    f = kernels.jump_kernel_power(chain, 1.0, 40)
    law = dists.STATIONARY_LAW[chain]
    tv = 0.5 * np.dot(f.weights, np.abs(f.values - dists.stationary_density(law, f.nodes)))
    assert tv < 1e-6


def test_two_steps_against_direct_quadrature():
    # f_2(t) = int q(s | x) q(t | s) ds, oracle by scipy quad split at both kinks
    x = 0.8
    f = kernels.jump_kernel_power(Chain.SMC_PRIME, x, 2)
    for t in (0.1, 0.8, 2.5):
        i = np.argmin(np.abs(f.nodes - t))
        u = f.nodes[i]
        g = lambda s: dists.smc_prime_jump_density(x, s) * dists.smc_prime_jump_density(s, u)
        lo, hi = min(x, u), max(x, u)
        ref = sum(integrate.quad(g, a, b, epsabs=1e-14)[0] for a, b in ((0, lo), (lo, hi), (hi, np.inf)))
        assert f.values[i] == pytest.approx(ref, abs=1e-10)


def test_jump_power_deterministic():
    a = kernels.jump_kernel_power(Chain.SMC, 2.0, 7)
    b = kernels.jump_kernel_power(Chain.SMC, 2.0, 7)
    assert np.array_equal(a.values, b.values)


def test_kernel_dispatch():
    assert kernels.kernel("smc", 1.0, 2.0).atom_mass == pytest.approx(math.exp(-2.0))
    assert kernels.kernel("smc-prime", 1.0, 2.0).atom_mass == pytest.approx(kernels.smc_prime_atom(1.0, 2.0))
