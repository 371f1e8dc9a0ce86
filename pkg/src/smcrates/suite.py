"""Registry of numeric claims and the driver that checks them all.

Each claim produces exactly one :class:`VerificationReport`.  Deterministic
checks use quadrature budgets; Monte Carlo checks use a multiple of the
standard error and a fixed random stream per claim, so filtering with
``only`` or changing the thread count does not change any result.
"""

from __future__ import annotations

import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import dists, ergodicity as erg, kernels, samplers
from .dists import Chain, Law
from .ergodicity import VerificationReport
from .kernels import GridSpec
from .quadrature import PanelRule

DEFAULT_TOLERANCES = {
    "tv": 1e-6,          # quadrature TV budget
    "quad": 1e-10,       # stationary constants
    "balance": 1e-12,    # detailed balance, relative
    "lipschitz": 1e-6,
    "series": 1e-4,      # small-gap ratio vs derivative norm
    "atom": 1e-13,       # closed-form atom identities, relative
    "mc_se": 3.0,        # Monte Carlo budget in standard errors
    "slope": 0.05,
    "ks_alpha": 0.01,
}

DEFAULT_CONSTANTS = {
    "lipschitz_smc": 2.5,
    "lipschitz_smc_prime": 2.0,
    "contraction_rate": 0.5,
    "witness_constant": erg.WITNESS_CONSTANT,
}


@dataclass
class SuiteConfig:
    seed: int = 20240611
    replicates: int = 100_000
    stationary_draws: int = 200_000
    coupling_steps: int = 15
    threads: int = 1
    grid: GridSpec = field(default_factory=GridSpec)
    tolerances: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    only: tuple = ()

    def __post_init__(self):
        for name, table in (("tolerance", self.tolerances), ("constant", self.constants)):
            known = DEFAULT_TOLERANCES if name == "tolerance" else DEFAULT_CONSTANTS
            unknown = set(table) - set(known)
            if unknown:
                raise KeyError(f"unknown {name} name(s): {', '.join(sorted(unknown))}")
        unknown = set(self.only) - set(CLAIMS)
        if unknown:
            raise KeyError(f"unknown claim id(s): {', '.join(sorted(unknown))}")

    def tol(self, name):
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def const(self, name):
        return float(self.constants.get(name, DEFAULT_CONSTANTS[name]))

    def rng(self, stream):
        return samplers.RngSeed(self.seed, stream).generator()


CLAIMS = {}


def claim(claim_id, stream):
    """Register a check; ``stream`` is its private random stream index."""

    def deco(fn):
        CLAIMS[claim_id] = (fn, stream)
        return fn

    return deco


def _report(claim_id, inputs, computed, target, passed, tol, detail=""):
    return VerificationReport(claim_id, inputs, float(computed), float(target), bool(passed), float(tol), detail)


def _le(claim_id, inputs, computed, bound, tol, detail=""):
    return _report(claim_id, inputs, computed, bound, computed <= bound + tol, tol, detail)


# --- dists -----------------------------------------------------------------


@claim("dists_detailed_balance", 0)
def _detailed_balance(cfg, rng):
    s, t = np.meshgrid(np.geomspace(1e-3, 30, 41), np.geomspace(1e-3, 30, 41))
    worst = 0.0
    for chain in Chain:
        law = dists.STATIONARY_LAW[chain]
        lhs = dists.stationary_density(law, s) * dists.jump_density(chain, s, t)
        rhs = dists.stationary_density(law, t) * dists.jump_density(chain, t, s)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-300))))
    tol = cfg.tol("balance")
    return _le("dists_detailed_balance", {"grid": "41x41 log [1e-3, 30]"}, worst, 0.0, tol,
               "max relative asymmetry of stationary flux")


def _quad(f, a=0.0, b=np.inf):
    return integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@claim("dists_stationary_constants", 0)
def _stationary_constants(cfg, rng):
    errs = {}
    for law in Law:
        errs[f"{law.value}_mass"] = abs(_quad(lambda t: dists.stationary_density(law, t)) - 1.0)
        errs[f"{law.value}_mean"] = abs(_quad(lambda t: t * dists.stationary_density(law, t))
                                        - dists.STATIONARY_MEAN[law])
    worst = max(errs.values())
    return _le("dists_stationary_constants", errs, worst, 0.0, cfg.tol("quad"),
               "means 2, 11/6, 1 and unit mass")


@claim("dists_jump_stationarity", 0)
def _jump_stationarity(cfg, rng):
    worst = 0.0
    for chain in Chain:
        law = dists.STATIONARY_LAW[chain]
        for t in (0.05, 0.5, 1.0, 3.0, 10.0):
            lhs = _quad(lambda s: dists.stationary_density(law, s) * dists.jump_density(chain, s, t), 0, t) \
                + _quad(lambda s: dists.stationary_density(law, s) * dists.jump_density(chain, s, t), t)
            worst = max(worst, abs(lhs - dists.stationary_density(law, t)))
    return _le("dists_jump_stationarity", {"t": [0.05, 0.5, 1, 3, 10]}, worst, 0.0, cfg.tol("tv"),
               "int mu(s) q(t|s) ds = mu(t)")


@claim("samplers_stationary_means", 1)
def _stationary_means(cfg, rng):
    worst = 0.0
    out = {}
    for law in Law:
        draws = samplers.sample_stationary(law, cfg.stationary_draws, rng)
        z = abs(draws.mean() - dists.STATIONARY_MEAN[law]) / (draws.std(ddof=1) / math.sqrt(draws.size))
        out[law.value] = float(z)
        worst = max(worst, z)
    return _le("samplers_stationary_means", {"draws": cfg.stationary_draws, "z": out}, worst,
               cfg.tol("mc_se"), 0.0, "largest |z| of sample mean against the exact mean")


# --- Lipschitz ---------------------------------------------------------------


def _pair_grid():
    pts = np.geomspace(0.01, 20, 20)
    return [(a, b) for a in pts for b in pts if a != b]


@claim("lipschitz_smc", 0)
def _lip_smc(cfg, rng):
    r = erg.lipschitz_check(Chain.SMC, _pair_grid(), L=cfg.const("lipschitz_smc"), tol=cfg.tol("lipschitz"))
    r.claim_id = "lipschitz_smc"
    return r


@claim("lipschitz_smc_prime", 0)
def _lip_smc_prime(cfg, rng):
    r = erg.lipschitz_check(Chain.SMC_PRIME, _pair_grid(), L=cfg.const("lipschitz_smc_prime"),
                            tol=cfg.tol("lipschitz"))
    r.claim_id = "lipschitz_smc_prime"
    return r


@claim("lipschitz_small_gap", 0)
def _lip_small_gap(cfg, rng):
    worst = 0.0
    for chain in Chain:
        for x in (0.1, 0.5, 1.0, 2.0, 5.0):
            h = 1e-5 * x
            ratio = erg.l1_distance(chain, x, x + h) / h
            worst = max(worst, abs(ratio - dists.l1_derivative_norm(chain, x)))
    return _le("lipschitz_small_gap", {"x": [0.1, 0.5, 1, 2, 5], "relative_gap": 1e-5}, worst, 0.0,
               cfg.tol("series"), "|ratio - closed-form derivative norm|")


# --- jump chains -----------------------------------------------------------


def _dominance(cfg, chain, claim_id):
    worst, where = -np.inf, None
    for x in (0.5, 1.0, 2.0, 5.0):
        for n in range(1, 13):
            gap = erg.jump_tv_numeric(chain, x, n, cfg.grid).value - erg.jump_bound(chain, x, n)
            if gap > worst:
                worst, where = gap, (x, n)
    return _le(claim_id, {"x": [0.5, 1, 2, 5], "n": "1..12", "worst_at": where}, worst, 0.0, cfg.tol("tv"),
               "max of numeric TV minus geometric bound")


@claim("jump_dominance_smc", 0)
def _dom_smc(cfg, rng):
    return _dominance(cfg, Chain.SMC, "jump_dominance_smc")


@claim("jump_dominance_smc_prime", 0)
def _dom_smc_prime(cfg, rng):
    return _dominance(cfg, Chain.SMC_PRIME, "jump_dominance_smc_prime")


@claim("jump_decay_rate", 0)
def _jump_decay(cfg, rng):
    worst, where = -np.inf, None
    ns = np.arange(1, 13)
    for chain in Chain:
        for x in (0.5, 1.0, 2.0, 5.0):
            tv = [erg.jump_tv_numeric(chain, x, int(n), cfg.grid).value for n in ns]
            slope = float(np.polyfit(ns, np.log(tv), 1)[0])
            if slope > worst:
                worst, where = slope, (chain.value, x)
    target = math.log(cfg.const("contraction_rate"))
    return _le("jump_decay_rate", {"n": "1..12", "worst_at": where}, worst, target, cfg.tol("slope"),
               "semilog slope of jump-chain TV against log(1/2)")


@claim("coupling_contraction_smc", 2)
def _couple_smc(cfg, rng):
    return _coupling(cfg, rng, Chain.SMC, "coupling_contraction_smc")


@claim("coupling_contraction_smc_prime", 3)
def _couple_smc_prime(cfg, rng):
    return _coupling(cfg, rng, Chain.SMC_PRIME, "coupling_contraction_smc_prime")


def _coupling(cfg, rng, chain, claim_id):
    trace = samplers.sample_coupled_chains(chain, 1.0, "stationary", cfg.coupling_steps, rng, size=cfg.replicates)
    r, se = samplers.gap_ratios(trace)
    rate = cfg.const("contraction_rate")
    z = (r - rate) / se
    means = trace.abs_gaps.mean(axis=0)
    slope = float(np.polyfit(np.arange(means.size), np.log(means), 1)[0])
    slope_ok = slope <= math.log(rate) + cfg.tol("slope")
    worst = float(np.max(z))
    return _report(claim_id, {"x0": 1.0, "y0": "stationary", "steps": cfg.coupling_steps,
                              "replicates": cfg.replicates, "max_ratio": float(r.max()), "log_slope": slope},
                   worst, cfg.tol("mc_se"), worst <= cfg.tol("mc_se") and slope_ok, cfg.tol("mc_se"),
                   f"max z-score of per-step gap ratio against {rate}; log-gap slope {slope:.4f}")


# --- SMC continuous process ------------------------------------------------


@claim("smc_tv_exact", 0)
def _tv_exact(cfg, rng):
    worst = 0.0
    for ell in (2.0, 5.0, 10.0, 100.0):
        exact = erg.smc_tv_exact(1.0, ell).value
        quad = erg.tv_mixed_vs_density(kernels.smc_kernel(1.0, ell, cfg.grid), Law.PI).value
        worst = max(worst, abs(exact - quad))
    return _le("smc_tv_exact", {"x": 1.0, "ell": [2, 5, 10, 100]}, worst, 0.0, cfg.tol("tv"),
               "|closed form - quadrature|")


def _valid_points():
    for x in (0.5, 1.0, 2.0, 5.0):
        for ell in np.geomspace(2, 1e4, 25):
            if erg.smc_crossing_point(ell) < x:
                yield x, float(ell)


@claim("smc_tv_sandwich", 0)
def _sandwich(cfg, rng):
    margin = np.inf
    for x, ell in _valid_points():
        v = erg.smc_tv_exact(x, ell).value
        margin = min(margin, v - 1.0 / (2.0 * ell), 1.0 / ell - v)
    # equality holds at ell = 2, so allow rounding
    return _report("smc_tv_sandwich", {"x": [0.5, 1, 2, 5], "ell": "log grid [2, 1e4]"}, margin, 0.0,
                   margin >= -1e-15, 1e-15, "smallest slack in 1/(2 ell) <= TV <= 1/ell")


@claim("smc_sign_structure", 0)
def _sign_structure(cfg, rng):
    worst = 0.0
    for x, ell in _valid_points():
        ys = erg.smc_crossing_point(ell)
        y = np.concatenate([np.geomspace(1e-6, ys, 50)[:-1] * (1 - 1e-9), ys * (1 + 1e-9) + np.geomspace(1e-6, 30, 50)])
        g = kernels.smc_kernel_density(x, ell, y) - np.exp(-y)
        wrong = np.where(y < ys, np.clip(g, 0, None), np.clip(-g, 0, None))
        worst = max(worst, float(wrong.max()))
    return _le("smc_sign_structure", {"points": "valid (x, ell) grid"}, worst, 0.0, 1e-15,
               "largest density difference with the wrong sign about y*")


@claim("smc_laplace_consistency", 0)
def _laplace(cfg, rng):
    worst = 0.0
    for x in (0.2, 0.5, 1.0, 2.0, 5.0):
        rule = PanelRule.default(focus=(x,), t_max=cfg.grid.t_max, panels=cfg.grid.panels)
        for ell in (0.3, 1.0, 2.0, 5.0, 20.0):
            dens = kernels.smc_kernel_density(x, ell, rule.nodes)
            for lam in (0.1, 0.5, 1.0, 3.0, 10.0):
                num = math.exp(-ell * x) * math.exp(-lam * x) + rule.integrate(np.exp(-lam * rule.nodes) * dens)
                worst = max(worst, abs(num - kernels.smc_laplace(x, ell, lam)))
    return _le("smc_laplace_consistency", {"grid": "5x5x5"}, worst, 0.0, cfg.tol("tv"),
               "|closed-form transform - quadrature transform of the kernel|")


@claim("smc_laplace_pde", 0)
def _pde(cfg, rng):
    worst = 0.0
    for x in (0.2, 0.5, 1.0, 2.0, 5.0):
        for ell in (0.3, 1.0, 2.0, 5.0, 20.0):
            for lam in (0.1, 0.5, 1.0, 3.0, 10.0):
                worst = max(worst, abs(kernels.transport_pde_residual(x, ell, lam, h=1e-4)))
    return _le("smc_laplace_pde", {"grid": "5x5x5", "h": 1e-4}, worst, 0.0, cfg.tol("tv"),
               "transport equation residual by central differences")


@claim("smc_chapman_kolmogorov", 0)
def _chapman(cfg, rng):
    worst = 0.0
    for x in (0.5, 1.0, 3.0):
        rule = PanelRule.default(focus=(x,), t_max=cfg.grid.t_max, panels=cfg.grid.panels)
        for a, b in ((0.5, 1.5), (1.0, 1.0), (2.0, 3.0)):
            _, atom, dens = kernels.push_through_smc(x, math.exp(-a * x),
                                                     lambda y: kernels.smc_kernel_density(x, a, y), b, rule)
            direct = kernels.smc_kernel_density(x, a + b, rule.nodes)
            worst = max(worst, float(np.max(np.abs(dens - direct))), abs(atom - math.exp(-(a + b) * x)))
    return _le("smc_chapman_kolmogorov", {"x": [0.5, 1, 3], "splits": [[0.5, 1.5], [1, 1], [2, 3]]},
               worst, 0.0, cfg.tol("tv"), "max |P_a P_b - P_(a+b)| at grid nodes")


@claim("smc_pi_stationarity", 0)
def _pi_stationary(cfg, rng):
    rule = PanelRule.default(t_max=cfg.grid.t_max, panels=cfg.grid.panels)
    worst = 0.0
    for ell in (0.1, 1.0, 3.0, 10.0):
        _, _, dens = kernels.push_through_smc(1.0, 0.0, lambda y: np.exp(-y), ell, rule)
        mask = rule.nodes < 0.5 * cfg.grid.t_max  # truncation of the input density near t_max
        worst = max(worst, float(np.max(np.abs(dens - np.exp(-rule.nodes))[mask])))
    return _le("smc_pi_stationarity", {"ell": [0.1, 1, 3, 10]}, worst, 0.0, cfg.tol("tv"),
               "max |pi P_ell - pi| at grid nodes")


# --- SMC' continuous process -----------------------------------------------


@claim("subordination_atom", 0)
def _sub_atom(cfg, rng):
    worst = 0.0
    for x in np.geomspace(1e-3, 20, 15):
        for ell in (0.5, 2.0, 10.0, 50.0):
            lhs = kernels.smc_prime_atom(x, ell)
            rhs = math.exp(-ell * x * dists.p_visible(x))
            worst = max(worst, abs(lhs - rhs) / rhs)
    # the Poisson mixture of SMC atoms reproduces the closed form
    for x in (0.3, 1.0, 3.0):
        for ell in (2.0, 10.0):
            k = kernels.smc_prime_kernel(x, ell, cfg.grid)
            worst = max(worst, abs(k.atom_mass - k.meta["closed_form_atom"]) / k.atom_mass)
    return _le("subordination_atom", {"x": "log grid [1e-3, 20]", "ell": [0.5, 2, 10, 50]}, worst, 0.0,
               cfg.tol("atom"), "relative gap between the atom formulas")


@claim("subordination_marginal_ks", 4)
def _sub_ks(cfg, rng):
    n = cfg.replicates
    direct = samplers.sample_endpoint(Chain.SMC_PRIME, 1.0, 5.0, n, rng)
    sub = samplers.sample_subordinated_endpoint(1.0, 5.0, n, rng)
    res = stats.ks_2samp(direct, sub)
    alpha = cfg.tol("ks_alpha")
    crit = math.sqrt(-math.log(alpha / 2.0) / 2.0) * math.sqrt(2.0 / n)
    return _le("subordination_marginal_ks", {"x": 1.0, "ell": 5.0, "samples": n, "p_value": float(res.pvalue)},
               float(res.statistic), crit, 0.0, f"two-sample KS statistic vs the {alpha:g} critical value")


@claim("subordination_time_change_moments", 5)
def _sub_moments(cfg, rng):
    ell = 100.0
    c = samplers.sample_time_change(ell, cfg.replicates, rng)
    se_mean = c.std(ddof=1) / math.sqrt(c.size)
    # sd of the sample variance for a Poisson-based statistic
    se_var = math.sqrt(np.var((c - c.mean()) ** 2, ddof=1) / c.size)
    z = max(abs(c.mean() - ell) / se_mean, abs(c.var(ddof=1) - ell) / se_var)
    return _le("subordination_time_change_moments", {"ell": ell, "replicates": cfg.replicates}, z,
               cfg.tol("mc_se"), 0.0, "largest z-score of E[C] = Var[C] = ell")


def _prime_sweep(cfg):
    ells = np.geomspace(20, 2000, 12)
    return ells, [erg.smc_prime_tv(1.0, float(e), cfg.grid).value for e in ells]


@claim("smc_prime_tv_upper", 0)
def _prime_upper(cfg, rng):
    ells, tv = _prime_sweep(cfg)
    margin = max(t - 2.0 / e for e, t in zip(ells, tv))
    return _le("smc_prime_tv_upper", {"x": 1.0, "ell": "12-point log grid [20, 2000]"}, margin, 0.0,
               cfg.tol("tv"), "max of TV - 2/ell")


@claim("smc_prime_tv_lower_empirical", 0)
def _prime_lower(cfg, rng):
    ells, tv = _prime_sweep(cfg)
    margin = min(t - 1.0 / (4.0 * e) for e, t in zip(ells, tv))
    return _report("smc_prime_tv_lower_empirical", {"x": 1.0, "ell": "12-point log grid [20, 2000]"}, margin,
                   0.0, margin >= 0.0, 0.0, "min of TV - 1/(4 ell)")


@claim("smc_prime_tv_lower_witness", 0)
def _prime_witness(cfg, rng):
    margin, detail = np.inf, {}
    c = cfg.const("witness_constant")
    for ell in (50.0, 200.0):
        r = erg.smc_prime_tv_lower_witness(1.0, ell)
        bound = r.bound_or_target * c / erg.WITNESS_CONSTANT
        detail[str(ell)] = {"mass": r.computed, "bound": bound}
        margin = min(margin, r.computed - bound)
    return _report("smc_prime_tv_lower_witness", {"x": 1.0, "ell": [50, 200], **detail}, margin, 0.0,
                   margin >= 0.0, 0.0, "min of witness mass - (2C/(3 ell)) P(C_ell in I_ell)")


@claim("smc_prime_tv_convexity", 0)
def _prime_convexity(cfg, rng):
    margin = -np.inf
    for ell in (20.0, 50.0, 200.0):
        tv = erg.smc_prime_tv(1.0, ell, cfg.grid).value
        margin = max(margin, tv - erg.smc_prime_tv_convexity_bound(1.0, ell, cfg.grid))
    return _le("smc_prime_tv_convexity", {"x": 1.0, "ell": [20, 50, 200]}, margin, 0.0, cfg.tol("tv"),
               "max of TV' - Poisson average of SMC TV")


@claim("decay_slope_smc", 0)
def _slope_smc(cfg, rng):
    ells = np.geomspace(20, 2000, 12)
    slope = erg.decay_slope([(e, erg.smc_tv_exact(1.0, e).value) for e in ells])
    return _report("decay_slope_smc", {"x": 1.0, "ell": "12-point log grid [20, 2000]"}, slope, -1.0,
                   abs(slope + 1.0) <= cfg.tol("slope"), cfg.tol("slope"), "log-log slope of the exact TV")


@claim("decay_slope_smc_prime", 0)
def _slope_prime(cfg, rng):
    ells, tv = _prime_sweep(cfg)
    slope = erg.decay_slope(list(zip(ells, tv)))
    return _report("decay_slope_smc_prime", {"x": 1.0, "ell": "12-point log grid [20, 2000]"}, slope, -1.0,
                   abs(slope + 1.0) <= cfg.tol("slope"), cfg.tol("slope"), "log-log slope of quadrature TV")


# --- driver ----------------------------------------------------------------


def _run_one(cfg, claim_id):
    fn, stream = CLAIMS[claim_id]
    try:
        return fn(cfg, cfg.rng(stream))
    except Exception as exc:  # a failing check must not abort the suite
        return _report(claim_id, {}, float("nan"), float("nan"), False, 0.0,
                       f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def run_verification_suite(config: SuiteConfig | None = None, progress=None):
    """Run every registered claim (or ``config.only``) and return reports ordered by claim id."""
    cfg = config or SuiteConfig()
    ids = sorted(cfg.only) if cfg.only else sorted(CLAIMS)

    def job(cid):
        r = _run_one(cfg, cid)
        if progress is not None:
            progress(r)
        return r

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(job, ids))
    return [job(cid) for cid in ids]
