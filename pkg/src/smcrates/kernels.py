"""Transition kernels of the continuous processes and n-step jump-chain laws.

A kernel ``P_ell(x, .)`` of either continuous process is a point mass at the
starting state plus an absolutely continuous part.  The two are stored
separately; the continuous part is kept both as values on a quadrature grid
and as a callable so total-variation computations can refine around sign
changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import dists
from .dists import Chain
from .errors import DomainError, GridResolutionError, TruncationError
from .quadrature import DEFAULT_PANELS, DEFAULT_POINTS, DEFAULT_T_MAX, PanelRule, make_edges

ELL_ONE_BAND = 1e-6
MASS_TOL = 1e-8
RENORM_TOL = 1e-9
DEFAULT_TAIL_TOL = 1e-12
DEFAULT_K_CAP = 10**6


@dataclass(frozen=True)
class GridSpec:
    t_max: float = DEFAULT_T_MAX
    panels: int = DEFAULT_PANELS
    points_per_panel: int = DEFAULT_POINTS

    def __post_init__(self):
        if not (self.t_max > 0 and self.panels >= 2 and self.points_per_panel >= 2):
            raise DomainError("GridSpec needs t_max > 0, panels >= 2, points_per_panel >= 2")

    def rule(self, focus=()) -> PanelRule:
        return PanelRule(make_edges(self.t_max, self.panels, focus), self.points_per_panel)


@dataclass
class GridDensity:
    """Density values at the nodes of a quadrature rule."""

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    rule: Optional[PanelRule] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if not (self.nodes.shape == self.weights.shape == self.values.shape):
            raise ValueError("nodes, weights and values must have equal length")
        if np.any(np.diff(self.nodes) <= 0) or np.any(self.nodes <= 0):
            raise ValueError("nodes must be positive and strictly ascending")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.values < 0):
            # roundoff in differences of exponentials can leave -1e-17 values
            if np.any(self.values < -1e-12):
                raise ValueError("density values must be nonnegative")
            self.values = np.clip(self.values, 0.0, None)

    @classmethod
    def on_rule(cls, rule: PanelRule, values, **meta):
        return cls(rule.nodes, rule.weights, values, rule=rule, meta=dict(meta))

    @classmethod
    def empty(cls, **meta):
        z = np.zeros(0)
        return cls(z, z, z, meta=dict(meta))

    @property
    def mass(self) -> float:
        return float(np.dot(self.weights, self.values))

    def __len__(self):
        return self.nodes.size


@dataclass
class MixedMeasure:
    """``atom_mass * delta(atom_location) + density``."""

    atom_location: float
    atom_mass: float
    density: GridDensity
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def total_mass(self) -> float:
        return self.atom_mass + self.density.mass

    def pdf(self, y):
        """Density of the absolutely continuous part at arbitrary points."""
        if self.density_fn is None:
            raise ValueError("this measure only carries grid values")
        return self.density_fn(np.asarray(y, dtype=float))


def _check_x_ell(x, ell):
    if not (math.isfinite(x) and x > 0):
        raise DomainError("x must be positive and finite")
    if not (math.isfinite(ell) and ell >= 0):
        raise DomainError("ell must be nonnegative and finite")


def expm1_over(a, m):
    """``(1 - exp(-a m)) / a``, continuous through ``a = 0`` where it equals ``m``."""
    a = np.asarray(a, dtype=float)
    m = np.asarray(m, dtype=float)
    small = np.abs(a) < ELL_ONE_BAND
    safe = np.where(small, 1.0, a)
    am = a * m
    return np.where(small, m * (1.0 - am / 2.0 + am * am / 6.0), -np.expm1(-safe * m) / safe)


def smc_kernel_density(x, ell, y):
    """Absolutely continuous part ``p_ell(x, y)`` of the SMC transition kernel.

    ``ell/(ell-1) e^-y (1 - e^-(ell-1) min(x,y))``, with the ``ell = 1``
    limit ``e^-y min(x, y)``.  Broadcasts over all three arguments.
    """
    ell = np.asarray(ell, dtype=float)
    y = np.asarray(y, dtype=float)
    m = np.minimum(x, y)
    return ell * np.exp(-y) * expm1_over(ell - 1.0, m)


def smc_kernel(x, ell, grid: GridSpec = GridSpec()) -> MixedMeasure:
    """Transition kernel ``P_ell(x, .)`` of the SMC process."""
    x, ell = float(x), float(ell)
    _check_x_ell(x, ell)
    atom = math.exp(-ell * x)
    meta = {"model": "smc", "x": x, "ell": ell}
    if ell == 0.0:
        return MixedMeasure(x, 1.0, GridDensity.empty(**meta), lambda y: np.zeros_like(y), meta)
    rule = grid.rule(focus=(x,))
    fn = lambda y: smc_kernel_density(x, ell, y)
    dens = GridDensity.on_rule(rule, fn(rule.nodes), **meta)
    k = MixedMeasure(x, atom, dens, fn, meta)
    if abs(k.total_mass - 1.0) > MASS_TOL:
        raise GridResolutionError(f"kernel mass {k.total_mass!r} at x={x}, ell={ell}")
    return k


def smc_laplace(x, ell, lam):
    """``E_x exp(-lam Y_ell)`` for the SMC process, in closed form."""
    x = np.asarray(x, dtype=float)
    ell = np.asarray(ell, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(x <= 0) or np.any(ell < 0) or np.any(lam <= 0):
        raise DomainError("need x > 0, ell >= 0, lambda > 0")
    coef = lam * (1.0 + lam + ell) / ((1.0 + lam) * (lam + ell))
    out = 1.0 + coef * np.expm1(-(lam + ell) * x)
    return float(out) if out.ndim == 0 else out


def smc_generator_on_exponential(x, lam):
    """Generator of the SMC process applied to ``y -> exp(-lam y)``, evaluated at ``x``."""
    return -np.expm1(-lam * x) / (lam * (1.0 + lam)) - x * np.exp(-lam * x)


def transport_pde_residual(x, ell, lam, h=1e-4):
    """``d_ell phi - d_lam phi - (1 - phi)/(lam (1 + lam))`` by central differences of step ``h``."""
    if not (x > 0 and ell > 0 and lam > h > 0):
        raise DomainError("need x > 0, ell > 0 and lambda > h > 0")
    if ell <= h:
        raise DomainError("need ell > h for a central difference in ell")
    d_ell = (smc_laplace(x, ell + h, lam) - smc_laplace(x, ell - h, lam)) / (2 * h)
    d_lam = (smc_laplace(x, ell, lam + h) - smc_laplace(x, ell, lam - h)) / (2 * h)
    phi = smc_laplace(x, ell, lam)
    return d_ell - d_lam - (1.0 - phi) / (lam * (1.0 + lam))


def poisson_window(mean, tail_tol=DEFAULT_TAIL_TOL, k_cap=DEFAULT_K_CAP):
    """Counts ``k_lo..k_hi`` of a Poisson(mean) law carrying all but ``tail_tol`` of its mass.

    Returns ``(ks, pmf, dropped_mass)``.  Each tail that is cut off has mass
    below ``tail_tol / 2``.
    """
    if mean == 0:
        return np.array([0]), np.array([1.0]), 0.0
    half = 0.5 * tail_tol
    span = int(math.ceil(mean + 12.0 * math.sqrt(mean) + 60.0))
    while True:
        ks = np.arange(span + 1)
        sf = stats.poisson.sf(ks, mean)
        hit = np.nonzero(sf < half)[0]
        if hit.size:
            k_hi = int(hit[0])
            break
        if span > k_cap:
            raise TruncationError(f"Poisson truncation point exceeds cap {k_cap}")
        span *= 2
    if k_hi > k_cap:
        raise TruncationError(f"Poisson truncation point {k_hi} exceeds cap {k_cap}")
    cdf = stats.poisson.cdf(ks[: k_hi + 1], mean)
    k_lo = int(np.nonzero(cdf >= half)[0][0])
    ks = np.arange(k_lo, k_hi + 1)
    pmf = stats.poisson.pmf(ks, mean)
    dropped = float(sf[k_hi] + (cdf[k_lo - 1] if k_lo > 0 else 0.0))
    return ks, pmf, dropped


def smc_prime_atom(x, ell):
    """Closed-form probability that the SMC' process started at ``x`` has not moved by ``ell``."""
    return math.exp(-ell * x / 2.0 + (ell / 4.0) * math.expm1(-2.0 * x))


def smc_prime_kernel(x, ell, grid: GridSpec = GridSpec(), tail_tol=DEFAULT_TAIL_TOL,
                     k_cap=DEFAULT_K_CAP) -> MixedMeasure:
    """Transition kernel ``P'_ell(x, .)`` of the SMC' process.

    Built as the Poisson mixture ``sum_k Pois(ell/4)(k) P_{ell/2 + 2k}(x, .)``
    of SMC kernels, truncated so the discarded Poisson mass is below
    ``tail_tol``.
    """
    x, ell = float(x), float(ell)
    _check_x_ell(x, ell)
    if not 0 < tail_tol < 1:
        raise DomainError("tail_tol must lie in (0, 1)")
    meta = {"model": "smc-prime", "x": x, "ell": ell, "tail_tol": tail_tol}
    if ell == 0.0:
        return MixedMeasure(x, 1.0, GridDensity.empty(**meta), lambda y: np.zeros_like(y), meta)
    ks, w, dropped = poisson_window(ell / 4.0, tail_tol, k_cap)
    c = ell / 2.0 + 2.0 * ks
    atom = float(np.dot(w, np.exp(-c * x)))

    def fn(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        out = np.zeros(flat.shape)
        # chunk over mixture components to bound memory
        for i in range(0, c.size, 256):
            out += w[i:i + 256] @ smc_kernel_density(x, c[i:i + 256, None], flat[None, :])
        return out.reshape(y.shape)

    rule = grid.rule(focus=(x,))
    meta.update(k_min=int(ks[0]), k_max=int(ks[-1]), dropped_mass=dropped,
                closed_form_atom=smc_prime_atom(x, ell))
    dens = GridDensity.on_rule(rule, fn(rule.nodes), **meta)
    k = MixedMeasure(x, atom, dens, fn, meta)
    if abs(k.total_mass - 1.0) > MASS_TOL + tail_tol:
        raise GridResolutionError(f"kernel mass {k.total_mass!r} at x={x}, ell={ell}")
    return k


def kernel(model, x, ell, grid: GridSpec = GridSpec(), **kw) -> MixedMeasure:
    if Chain(model) is Chain.SMC:
        return smc_kernel(x, ell, grid)
    return smc_prime_kernel(x, ell, grid, **kw)


def jump_kernel_power(chain, x, n, grid: GridSpec = GridSpec()) -> GridDensity:
    """Density of ``K^n(x, .)`` for the jump chain, on a quadrature grid.

    Each application of the kernel uses its two-branch form::

        f'(t) = Phi(t) int_{s>t} f(s) A(s) ds + e^-t int_{s<=t} f(s) B(s) ds

    so it reduces to running integrals, computed panel by panel with the
    spectral integration matrix of the Legendre rule.  The starting state
    is a panel edge so the kink of ``f_1`` is resolved.

    Rows are renormalized only when the mass drifts by more than 1e-9; the
    number of such events is recorded in ``meta["renormalizations"]``.
    """
    chain = Chain(chain)
    x = float(x)
    if not (math.isfinite(x) and x > 0):
        raise DomainError("x must be positive and finite")
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    rule = grid.rule(focus=(x,))
    s = rule.nodes
    A, Be = dists.kernel_factors(chain, s)
    B = Be * np.exp(s)
    phi = dists.kernel_profile(chain, s)
    decay = np.exp(-s)
    f = dists.jump_density(chain, x, s)
    renorms = 0
    masses = []
    for step in range(int(n)):
        if step:
            fa = f * A
            upper = rule.integrate(fa) - rule.cumulative(fa)
            f = phi * np.clip(upper, 0.0, None) + decay * rule.cumulative(f * B)
        mass = rule.integrate(f)
        masses.append(mass)
        drift = abs(mass - 1.0)
        if drift > 1e-6:
            raise GridResolutionError(f"mass {mass!r} after {step + 1} steps; refine the grid")
        if drift > RENORM_TOL:
            f = f / mass
            renorms += 1
    return GridDensity.on_rule(rule, f, chain=chain.value, x=x, n=int(n),
                               renormalizations=renorms, masses=masses)


def push_through_smc(atom_location, atom_mass, density_fn, ell, rule: PanelRule):
    """Push ``atom_mass * delta + density`` through ``P_ell`` of the SMC process.

    Returns ``(atom_location, new_atom_mass, density values at rule.nodes)``.
    Used for Chapman-Kolmogorov and stationarity checks; ``density_fn``
    must be smooth on each panel of ``rule``.
    """
    y = rule.nodes
    f = np.asarray(density_fn(y), dtype=float)
    a = ell - 1.0
    g = expm1_over(a, y)
    # int f(s) p(s, y) ds = ell e^-y [int_{s<y} f g(s) + g(y) int_{s>y} f]
    below = rule.cumulative(f * g)
    above = rule.integrate(f) - rule.cumulative(f)
    cont = ell * np.exp(-y) * (below + g * np.clip(above, 0.0, None))
    cont += f * np.exp(-ell * y)
    if atom_mass:
        cont += atom_mass * smc_kernel_density(atom_location, ell, y)
    return atom_location, atom_mass * math.exp(-ell * atom_location), cont
