"""Closed-form densities and per-state functions for the SMC and SMC' jump chains.

All functions are vectorized over numpy arrays and return a Python float for
scalar input.  States are TMRCA values in coalescent units.

Both jump densities share the form::

    q(t | x) = A(x) Phi(t)   for 0 < t <= x
             = B(x) exp(-t)  for t > x

with ``A = 1/x, B = (e^x - 1)/x, Phi = 1 - e^-t`` for SMC and
``A = 2/D, B = 2 (e^x - e^-x)/D, Phi = 1 - e^-2t`` with
``D(x) = 2x + 1 - e^-2x`` for SMC'.
"""

from __future__ import annotations

import enum

import math

import numpy as np

from .errors import DomainError

SERIES_CUTOFF = 1e-4


class Chain(str, enum.Enum):
    SMC = "smc"
    SMC_PRIME = "smc-prime"


class Law(str, enum.Enum):
    """Stationary laws: ``MU`` and ``MU_PRIME`` for the jump chains, ``PI`` for both continuous processes."""

    MU = "mu"
    MU_PRIME = "mu-prime"
    PI = "pi"


STATIONARY_LAW = {Chain.SMC: Law.MU, Chain.SMC_PRIME: Law.MU_PRIME}
STATIONARY_MEAN = {Law.MU: 2.0, Law.MU_PRIME: 11.0 / 6.0, Law.PI: 1.0}
# sup_x of the L1 norm of d/dx q_x, as proved for each chain
LIPSCHITZ_CONSTANT = {Chain.SMC: 2.5, Chain.SMC_PRIME: 2.0}


def _positive(name, v):
    a = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise DomainError(f"{name} must be positive and finite")
    return a


def _ret(a):
    return float(a) if np.ndim(a) == 0 else a


def _D(x):
    # 2x + 1 - exp(-2x) without cancellation
    return 2.0 * x - np.expm1(-2.0 * x)


def smc_jump_density(s, t):
    """Post-jump density ``q_SMC(t | s) = e^-t (e^min(s,t) - 1) / s``."""
    s = _positive("s", s)
    t = _positive("t", t)
    m = np.minimum(s, t)
    return _ret(np.exp(m - t) * -np.expm1(-m) / s)


def smc_jump_cdf(s, y):
    """``P(X_{n+1} <= y | X_n = s)`` for the SMC jump chain."""
    s = _positive("s", s)
    y = _positive("y", y)
    lower = (y + np.expm1(-y)) / s
    upper = 1.0 - np.exp(np.minimum(s, y) - y) * -np.expm1(-s) / s
    return _ret(np.where(y <= s, lower, upper))


def smc_prime_jump_density(s, t):
    """Post-jump density of the SMC' chain given a visible recombination at state ``s``.

    The point ``t == s`` is evaluated by the lower branch; both branches
    agree there.
    """
    s = _positive("s", s)
    t = _positive("t", t)
    d = _D(s)
    lower = -2.0 * np.expm1(-2.0 * np.minimum(t, s)) / d
    upper = -2.0 * np.expm1(-2.0 * s) * np.exp(np.minimum(s - t, 0.0)) / d
    return _ret(np.where(t <= s, lower, upper))


def smc_prime_cdf(x, y):
    """CDF ``F_x(y)`` of the SMC' post-jump law."""
    x = _positive("x", x)
    y = _positive("y", y)
    d = _D(x)
    ym = np.minimum(y, x)
    lower = (2.0 * ym + np.expm1(-2.0 * ym)) / d
    upper = 1.0 + 2.0 * np.expm1(-2.0 * x) * np.exp(np.minimum(x - y, 0.0)) / d
    return _ret(np.where(y <= x, lower, upper))


def _bisect_newton(cdf, pdf, u, lo, hi, width=1e-12, newton_steps=2):
    """Invert an increasing CDF elementwise on brackets [lo, hi]."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    while np.any(hi - lo > width):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = 0.5 * (lo + hi)
    for _ in range(newton_steps):
        f = pdf(y)
        step = np.where(f > 0, (cdf(y) - u) / np.where(f > 0, f, 1.0), 0.0)
        y_new = y - step
        # a Newton step may not leave the final bracket by more than its width
        y = np.where((y_new > lo - width) & (y_new < hi + width) & (y_new > 0), y_new, y)
    return y


def _smc_prime_quantile_scalar(x, u):
    # same algorithm as the array path, without numpy overhead per jump
    d = 2.0 * x - math.expm1(-2.0 * x)
    fx = (2.0 * x + math.expm1(-2.0 * x)) / d
    if u >= fx:
        return x + math.log(-2.0 * math.expm1(-2.0 * x) / d) - math.log1p(-u)

    def cdf(y):
        return (2.0 * y + math.expm1(-2.0 * y)) / d

    lo, hi = 0.0, x
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < u:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    for _ in range(2):
        f = -2.0 * math.expm1(-2.0 * y) / d
        if f <= 0:
            break
        y_new = y - (cdf(y) - u) / f
        if lo - 1e-12 < y_new < hi + 1e-12 and y_new > 0:
            y = y_new
    return y


def smc_prime_quantile(x, u):
    """Inverse of :func:`smc_prime_cdf` in its second argument.

    Above ``F_x(x)`` the inverse is explicit; below it the lower branch
    is inverted by bisection to width 1e-12 followed by two Newton steps.
    """
    if np.ndim(x) == 0 and np.ndim(u) == 0:
        xf, uf = float(x), float(u)
        if not (math.isfinite(xf) and xf > 0):
            raise DomainError("x must be positive and finite")
        if not (0.0 < uf < 1.0):
            raise DomainError("u must lie in (0, 1)")
        return _smc_prime_quantile_scalar(xf, uf)
    x = _positive("x", x)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("u must lie in (0, 1)")
    x, u = np.broadcast_arrays(x, u)
    d = _D(x)
    fx = (2.0 * x + np.expm1(-2.0 * x)) / d
    # log B(x) = x + log(2 (1 - e^-2x) / D)
    upper = x + np.log(-2.0 * np.expm1(-2.0 * x) / d) - np.log1p(-u)
    out = np.array(upper, dtype=float)
    low = u < fx
    if np.any(low):
        xs, us, ds = x[low], u[low], d[low]
        out[low] = _bisect_newton(
            lambda y: (2.0 * y + np.expm1(-2.0 * y)) / ds,
            lambda y: -2.0 * np.expm1(-2.0 * y) / ds,
            us, np.zeros_like(xs), xs,
        )
    return _ret(out)


def p_visible(s):
    """Probability that a recombination on a tree of height ``s`` changes the TMRCA."""
    s = _positive("s", s)
    small = s < SERIES_CUTOFF
    ss = np.where(small, 1.0, s)
    closed = _D(ss) / (4.0 * ss)
    series = 1.0 - s / 2.0 + s * s / 3.0
    return _ret(np.where(small, series, closed))


def visible_rate(s):
    """Holding rate ``s * p_visible(s) = s/2 + (1 - e^-2s)/4`` of the SMC' process."""
    s = _positive("s", s)
    return _ret(0.5 * s - 0.25 * np.expm1(-2.0 * s))


def stationary_density(law, t):
    law = Law(law)
    t = _positive("t", t)
    if law is Law.PI:
        out = np.exp(-t)
    elif law is Law.MU:
        out = t * np.exp(-t)
    else:
        out = 0.375 * _D(t) * np.exp(-t)
    return _ret(out)


def stationary_cdf(law, y):
    law = Law(law)
    y = _positive("y", y)
    e = np.exp(-y)
    if law is Law.PI:
        out = -np.expm1(-y)
    elif law is Law.MU:
        out = -np.expm1(-y) - y * e
    else:
        # (3/8) [2 (1 - (1+y) e^-y) + (1 - e^-y) - (1 - e^-3y)/3]
        out = 0.375 * (-3.0 * np.expm1(-y) - 2.0 * y * e + np.expm1(-3.0 * y) / 3.0)
    return _ret(np.clip(out, 0.0, 1.0))


def stationary_quantile(law, u):
    """Inverse CDF of a stationary law (numerical for ``MU`` and ``MU_PRIME``)."""
    law = Law(law)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("u must lie in (0, 1)")
    if law is Law.PI:
        return _ret(-np.log1p(-u))
    hi = np.full(u.shape, 40.0)
    while np.any(stationary_cdf(law, hi) < u):
        hi = np.where(stationary_cdf(law, hi) < u, 2.0 * hi, hi)
    cdf = lambda y: stationary_cdf(law, np.maximum(y, 1e-300))
    pdf = lambda y: stationary_density(law, np.maximum(y, 1e-300))
    return _ret(_bisect_newton(cdf, pdf, u, np.zeros_like(u), hi))


def mean_map(chain, x):
    """Conditional mean of the next jump-chain state given the current state ``x``."""
    chain = Chain(chain)
    x = _positive("x", x)
    if chain is Chain.SMC:
        return _ret(0.5 * x + 1.0)
    small = x < SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    closed = (xs * xs + 2.0 * xs + 1.5 - (xs + 1.5) * np.exp(-2.0 * xs)) / _D(xs)
    series = 1.0 + x / 2.0 - x * x / 12.0
    return _ret(np.where(small, series, closed))


def l1_derivative_norm(chain, x):
    """Closed-form ``L1`` norm of ``d/dx q(. | x)``.

    SMC: ``2 (x - 1 + e^-x) / x^2``.  SMC': ``4 (1+z)(2x-1+z) / (2x+1-z)^2``
    with ``z = e^-2x``.  Both tend to 1 as ``x -> 0``.
    """
    chain = Chain(chain)
    x = _positive("x", x)
    small = x < SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    if chain is Chain.SMC:
        closed = 2.0 * (xs + np.expm1(-xs)) / (xs * xs)
        series = 1.0 - x / 3.0 + x * x / 12.0
    else:
        z = np.exp(-2.0 * xs)
        closed = 4.0 * (1.0 + z) * (2.0 * xs + np.expm1(-2.0 * xs)) / _D(xs) ** 2
        series = 1.0 - 2.0 * x / 3.0 + 5.0 * x * x / 12.0
    return _ret(np.where(small, series, closed))


def jump_density(chain, s, t):
    return smc_jump_density(s, t) if Chain(chain) is Chain.SMC else smc_prime_jump_density(s, t)


def jump_cdf(chain, s, y):
    return smc_jump_cdf(s, y) if Chain(chain) is Chain.SMC else smc_prime_cdf(s, y)


def kernel_factors(chain, x):
    """Factors ``(A(x), B(x) e^-x)`` of the two-branch jump density.

    ``B(x) e^-x`` is returned instead of ``B(x)`` so large states do not
    overflow; the upper branch is ``B(x) e^-x * e^-(t - x)``.
    """
    chain = Chain(chain)
    x = _positive("x", x)
    if chain is Chain.SMC:
        return _ret(1.0 / x), _ret(-np.expm1(-x) / x)
    d = _D(x)
    return _ret(2.0 / d), _ret(-2.0 * np.expm1(-2.0 * x) / d)


def kernel_profile(chain, t):
    """Lower-branch profile ``Phi(t)``."""
    t = np.asarray(t, dtype=float)
    if Chain(chain) is Chain.SMC:
        return _ret(-np.expm1(-t))
    return _ret(-np.expm1(-2.0 * t))
