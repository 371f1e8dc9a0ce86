"""Total-variation distances to stationarity and the bounds they are checked against."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import dists
from .dists import Chain, Law
from .errors import DomainError, GridMismatchError, ThresholdError, ValidityError
from .kernels import (GridDensity, GridSpec, MixedMeasure, jump_kernel_power, poisson_window, smc_kernel,
                      smc_prime_kernel)
from .quadrature import DEFAULT_POINTS, gauss_legendre, make_edges, signed_parts

# constant in the SMC' lower-bound witness: e^-y - p_r(x, y) >= C on A_ell
WITNESS_CONSTANT = 1.0 / (2.0 * math.e**2)


class TvMethod(str, enum.Enum):
    EXACT = "exact_formula"
    MIXED = "mixed_quadrature"
    GRID = "grid_quadrature"
    EMPIRICAL = "empirical_histogram"


@dataclass(frozen=True)
class TvResult:
    value: float
    method: TvMethod
    error_estimate: float = 0.0
    valid: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (-1e-12 <= self.value <= 1 + 1e-12) or self.error_estimate < 0:
            raise ValueError(f"malformed TV result {self.value!r} +- {self.error_estimate!r}")


@dataclass
class VerificationReport:
    claim_id: str
    inputs: dict
    computed: float
    bound_or_target: float
    passed: bool
    tolerance: float
    detail: str = ""

    def to_dict(self):
        d = asdict(self)
        d["passed"] = bool(d["passed"])
        d["computed"] = float(d["computed"])
        d["bound_or_target"] = float(d["bound_or_target"])
        d["tolerance"] = float(d["tolerance"])
        return d


def reports_to_json(reports, **extra) -> str:
    doc = dict(extra)
    doc["all_passed"] = all(r.passed for r in reports)
    doc["reports"] = [r.to_dict() for r in reports]
    return json.dumps(doc, indent=2, sort_keys=False, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, enum.Enum):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def reports_table(reports) -> str:
    rows = [("claim_id", "computed", "bound/target", "tol", "result")]
    for r in reports:
        rows.append((r.claim_id, f"{r.computed:.6g}", f"{r.bound_or_target:.6g}", f"{r.tolerance:.1g}",
                     "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)


# --- total variation ------------------------------------------------------


def tv_mixed_vs_density(k: MixedMeasure, target) -> TvResult:
    """TV distance between a mixed measure and an atomless law.

    The atom has no counterpart in the target, so it lands wholly in the
    positive part.  Both part masses are computed; their gap (zero for two
    probability measures) is the error estimate and the larger one is
    returned.

    ``target`` is a :class:`~smcrates.dists.Law` or a :class:`GridDensity`
    sharing the nodes of ``k.density``.
    """
    if isinstance(target, GridDensity):
        d = k.density
        if d.nodes.shape != target.nodes.shape or not np.array_equal(d.nodes, target.nodes):
            raise GridMismatchError("kernel and target densities live on different grids")
        p, neg = _grid_parts(d, d.values - target.values)
        pos = k.atom_mass + p
        method = TvMethod.GRID
    else:
        law = Law(target)
        if k.density_fn is not None:
            rule = k.density.rule
            if rule is None:
                edges = make_edges(focus=(k.atom_location,))
                npts = DEFAULT_POINTS
            else:
                edges, npts = rule.edges, rule.npts
            g = lambda y: k.density_fn(y) - dists.stationary_density(law, np.maximum(y, 1e-300))
            p, neg, _ = signed_parts(g, edges, npts)
            # mass of the target beyond the grid counts as negative part
            neg += 1.0 - dists.stationary_cdf(law, edges[-1])
            pos = k.atom_mass + p
            method = TvMethod.MIXED
        else:
            d = k.density
            if len(d):
                p, neg = _grid_parts(d, d.values - dists.stationary_density(law, d.nodes))
                neg += 1.0 - dists.stationary_cdf(law, d.rule.edges[-1]) if d.rule is not None else 0.0
            else:
                p, neg = 0.0, 1.0
            pos = k.atom_mass + p
            method = TvMethod.GRID
    value = min(max(pos, neg), 1.0)
    return TvResult(value, method, abs(pos - neg), meta={"positive_part": pos, "negative_part": neg})


def _grid_parts(d: GridDensity, diff):
    # interpolate panelwise when the rule is known, else fall back to node sums
    if d.rule is not None:
        return d.rule.signed_parts(diff)
    return float(np.dot(d.weights, np.clip(diff, 0, None))), float(np.dot(d.weights, np.clip(-diff, 0, None)))


def smc_crossing_point(ell):
    """Point ``log(ell)/(ell-1)`` where the SMC kernel density crosses ``e^-y``."""
    if ell <= 1:
        raise DomainError("crossing point needs ell > 1")
    return math.log(ell) / (ell - 1.0)


def smc_tv_exact(x, ell) -> TvResult:
    """Exact ``TV(P_ell(x, .), pi) = ell^(-1/(ell-1)) / ell``.

    Valid when ``ell >= 2`` and the crossing point lies below ``x``.

    Raises
    ------
    ValidityError
        Outside that region; use :func:`smc_tv` for a quadrature value.
    """
    if not x > 0:
        raise DomainError("x must be positive")
    if ell < 2:
        raise ValidityError(f"exact formula needs ell >= 2, got {ell}")
    ystar = smc_crossing_point(ell)
    if ystar >= x:
        raise ValidityError(f"crossing point {ystar:.6g} is not below x = {x}")
    value = ell ** (-1.0 / (ell - 1.0)) / ell
    return TvResult(value, TvMethod.EXACT, 0.0, meta={"crossing_point": ystar})


def smc_tv(x, ell, grid: GridSpec = GridSpec()) -> TvResult:
    """Exact TV when the closed form applies, else quadrature flagged ``valid=False``."""
    try:
        return smc_tv_exact(x, ell)
    except ValidityError:
        r = tv_mixed_vs_density(smc_kernel(x, ell, grid), Law.PI)
        return TvResult(r.value, r.method, r.error_estimate, valid=False, meta=r.meta)


def smc_prime_tv(x, ell, grid: GridSpec = GridSpec(), tail_tol=1e-12) -> TvResult:
    k = smc_prime_kernel(x, ell, grid, tail_tol)
    r = tv_mixed_vs_density(k, Law.PI)
    return TvResult(r.value, r.method, r.error_estimate + tail_tol, meta=r.meta)


def smc_prime_tv_convexity_bound(x, ell, grid: GridSpec = GridSpec(), tail_tol=1e-12):
    """Poisson average of SMC TV distances at the subordinated lengths ``ell/2 + 2k``."""
    ks, w, dropped = poisson_window(ell / 4.0, tail_tol)
    tvs = np.array([smc_tv(x, ell / 2.0 + 2.0 * k, grid).value for k in ks])
    return float(np.dot(w, tvs)) + dropped


def jump_bound(chain, x, n):
    """Geometric TV bound for ``K^n(x, .)``: ``5(x+2)/2^(n+1)`` (SMC) or ``(x+11/6)/2^(n-1)`` (SMC')."""
    chain = Chain(chain)
    if not x > 0 or n < 1:
        raise DomainError("need x > 0 and n >= 1")
    if chain is Chain.SMC:
        return 5.0 * (x + 2.0) / 2.0 ** (n + 1)
    return (x + 11.0 / 6.0) / 2.0 ** (n - 1)


def jump_tv_numeric(chain, x, n, grid: GridSpec = GridSpec()) -> TvResult:
    chain = Chain(chain)
    if n == 0:
        return TvResult(1.0, TvMethod.EXACT, 0.0)
    f = jump_kernel_power(chain, x, n, grid)
    law = dists.STATIONARY_LAW[chain]
    pos, neg = _grid_parts(f, f.values - dists.stationary_density(law, f.nodes))
    neg += 1.0 - dists.stationary_cdf(law, f.rule.edges[-1])
    return TvResult(min(max(pos, neg), 1.0), TvMethod.GRID, abs(pos - neg),
                    meta={"renormalizations": f.meta["renormalizations"]})


def empirical_tv(samples, law, bins=64) -> TvResult:
    """Histogram TV estimate using bins of equal mass under ``law``."""
    law = Law(law)
    samples = np.asarray(samples, dtype=float)
    inner = dists.stationary_quantile(law, np.arange(1, bins) / bins)
    counts = np.bincount(np.searchsorted(inner, samples, side="right"), minlength=bins)
    freq = counts / samples.size
    value = 0.5 * float(np.abs(freq - 1.0 / bins).sum())
    # expected value of the statistic under exact sampling, roughly
    noise = 0.5 * bins * math.sqrt(2 / math.pi) * math.sqrt((1 / bins) * (1 - 1 / bins) / samples.size)
    return TvResult(value, TvMethod.EMPIRICAL, noise, meta={"bins": bins, "counts": counts})


# --- Lipschitz ------------------------------------------------------------


def l1_distance(chain, a, b):
    """``int |q(t|a) - q(t|b)| dt`` by quadrature split at both states and at the crossing."""
    if a == b:
        return 0.0
    g = lambda t: dists.jump_density(chain, a, t) - dists.jump_density(chain, b, t)
    p, n, _ = signed_parts(g, make_edges(focus=(a, b)))
    return p + n


def lipschitz_check(chain, pairs, L=None, tol=1e-6) -> VerificationReport:
    """Check ``int |q_a - q_b| <= L |a - b|`` over the given pairs."""
    chain = Chain(chain)
    L = dists.LIPSCHITZ_CONSTANT[chain] if L is None else float(L)
    worst, worst_pair = 0.0, None
    for a, b in pairs:
        if a <= 0 or b <= 0:
            raise DomainError("pair entries must be positive")
        if a == b:
            continue
        ratio = float(l1_distance(chain, a, b) / abs(a - b))
        if ratio > worst:
            worst, worst_pair = ratio, (float(a), float(b))
    return VerificationReport(
        f"lipschitz_{chain.name.lower()}", {"chain": chain.value, "pairs": len(pairs), "worst_pair": worst_pair},
        worst, L, worst <= L + tol, tol, "max over pairs of L1 distance / |a - b|",
    )


# --- SMC' continuous-process bounds -----------------------------------------


def time_change_window_probability(ell):
    """Exact ``P(ell/2 <= ell/2 + 2 N <= 3 ell/2)`` for ``N ~ Poisson(ell/4)``."""
    return float(stats.poisson.cdf(math.floor(ell / 2.0), ell / 4.0))


def smc_prime_tv_upper(x, ell, grid: GridSpec = GridSpec(), tol=1e-6) -> VerificationReport:
    """Check ``TV(P'_ell(x, .), pi) <= 2/ell``."""
    if ell / 2.0 < 2 or smc_crossing_point(ell / 2.0) >= x:
        raise ValidityError(f"ell = {ell} too small for x = {x}: the SMC formula is not valid at ell/2")
    r = smc_prime_tv(x, ell, grid)
    return VerificationReport("smc_prime_tv_upper", {"x": x, "ell": ell}, r.value, 2.0 / ell,
                              r.value <= 2.0 / ell + tol, tol, f"error estimate {r.error_estimate:.2e}")


def smc_prime_witness_mass(x, ell, tail_tol=1e-12):
    """``pi(A) - P'_ell(x, A)`` for ``A = (0, 2/(3 ell))`` by Gauss-Legendre quadrature."""
    k = smc_prime_kernel(x, ell, GridSpec(), tail_tol)
    top = 2.0 / (3.0 * ell)
    return gauss_legendre(lambda y: np.exp(-y) - k.density_fn(y), 0.0, top, panels=8)


def smc_prime_tv_lower_witness(x, ell) -> VerificationReport:
    """Check ``pi(A) - P'_ell(x, A) >= (2C / (3 ell)) P(C_ell in I_ell)``, ``C = 1/(2e^2)``."""
    top = 2.0 / (3.0 * ell)
    if top > x:
        raise ThresholdError(f"A_ell = (0, {top:.4g}) is not inside (0, x = {x})")
    if ell < 4 * math.e:
        raise ThresholdError(f"ell = {ell} is below 4e")
    p_window = time_change_window_probability(ell)
    if p_window < 0.5:
        raise ThresholdError(f"P(C_ell in I_ell) = {p_window:.4g} is below 1/2")
    bound = 2.0 * WITNESS_CONSTANT / (3.0 * ell) * p_window
    mass = smc_prime_witness_mass(x, ell)
    return VerificationReport(
        "smc_prime_tv_lower_witness",
        {"x": x, "ell": ell, "p_window": p_window, "chebyshev_floor": 1 - 4 / ell},
        mass, bound, mass >= bound, 0.0, "witness set (0, 2/(3 ell))",
    )


def decay_slope(points):
    """Least-squares slope of ``log(tv)`` against ``log(ell)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise DomainError("need at least three (ell, tv) points")
    if np.any(pts <= 0):
        raise DomainError("points must be positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise DomainError("all ell values coincide")
    return float(np.polyfit(lx, ly, 1)[0])
