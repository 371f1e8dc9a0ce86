"""Random paths of the SMC and SMC' processes and of their jump chains.

Random streams come from numpy's Philox counter-based generator keyed by
``(master_seed, stream_index)`` through :class:`numpy.random.SeedSequence`,
so replicate ``i`` of an experiment is reproducible independently of how
many other replicates run or in which order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import dists
from .dists import Chain, Law
from .errors import DomainError
from .outputs import write_csv


@dataclass(frozen=True)
class RngSeed:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64) or int(self.stream_index) < 0:
            raise DomainError("master_seed must be a 64-bit unsigned integer, stream_index >= 0")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.Philox(ss))

    def stream(self, index: int) -> "RngSeed":
        return RngSeed(self.master_seed, index)


SeedLike = Union[RngSeed, int, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, RngSeed):
        return seed.generator()
    return RngSeed(int(seed)).generator()


def uniform_open(rng: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1)."""
    k = rng.integers(0, 2**53, size=size)
    return (k + 0.5) / 2.0**53


@dataclass
class PathSample:
    """Piecewise-constant path: ``states[i]`` holds on ``[jump_locations[i], jump_locations[i+1])``."""

    jump_locations: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        self.jump_locations = np.asarray(self.jump_locations, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.jump_locations.shape != self.states.shape or self.states.size == 0:
            raise ValueError("need one state per segment")
        if self.jump_locations[0] != 0.0 or np.any(np.diff(self.jump_locations) <= 0):
            raise ValueError("jump locations must start at 0 and increase strictly")
        if self.jump_locations[-1] > self.horizon:
            raise ValueError("jump beyond the horizon")
        if np.any(self.states[1:] == self.states[:-1]):
            raise ValueError("consecutive states must differ")

    @property
    def n_jumps(self) -> int:
        return self.states.size - 1

    def segments(self):
        """``(start, end, tmrca)`` arrays."""
        ends = np.append(self.jump_locations[1:], self.horizon)
        return self.jump_locations, ends, self.states

    def value_at(self, ell):
        i = np.searchsorted(self.jump_locations, ell, side="right") - 1
        return self.states[i]

    def time_average(self) -> float:
        start, end, s = self.segments()
        return float(np.dot(end - start, s) / self.horizon) if self.horizon > 0 else float(s[0])

    def to_csv(self, path, metadata=None):
        """Columns ``segment_start, segment_end, tmrca``."""
        return write_csv(path, "path_sample", ("segment_start", "segment_end", "tmrca"),
                         zip(*self.segments()), metadata)


@dataclass
class CoupledTrace:
    xs: np.ndarray
    ys: np.ndarray
    abs_gaps: np.ndarray

    def __post_init__(self):
        if not (self.xs.shape == self.ys.shape == self.abs_gaps.shape):
            raise ValueError("trace arrays must share a shape")

    def to_csv(self, path, metadata=None):
        """Columns ``step, x, y, gap``; a replicate column leads for batched traces."""
        if self.xs.ndim == 1:
            rows = ((i, x, y, g) for i, (x, y, g) in enumerate(zip(self.xs, self.ys, self.abs_gaps)))
            return write_csv(path, "coupled_trace", ("step", "x", "y", "gap"), rows, metadata)
        rows = ((r, i, self.xs[r, i], self.ys[r, i], self.abs_gaps[r, i])
                for r in range(self.xs.shape[0]) for i in range(self.xs.shape[1]))
        return write_csv(path, "coupled_trace", ("replicate", "step", "x", "y", "gap"), rows, metadata)


def _check_x0(x0):
    if not (math.isfinite(x0) and x0 > 0):
        raise DomainError("x0 must be positive and finite")


def _step(chain, x, rng, force_u_zero=False):
    if chain is Chain.SMC:
        u = 0.0 if force_u_zero else rng.random(np.shape(x))
        return u * x + rng.exponential(size=np.shape(x))
    return dists.smc_prime_quantile(x, uniform_open(rng, np.shape(x)))


def _rate(chain, x):
    return x if chain is Chain.SMC else dists.visible_rate(x)


def sample_jump_chain(chain, x0, n, seed: SeedLike, size=None, force_u_zero=False):
    """Jump-chain states ``X_0 = x0, X_1, ..., X_n``.

    SMC steps use ``U x + Z``; SMC' steps invert the post-jump CDF.  With
    ``size`` the result has shape ``(size, n + 1)``, one replicate per row.
    ``force_u_zero`` is a diagnostic for SMC that drops the uniform factor.
    """
    chain = Chain(chain)
    _check_x0(x0)
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = make_rng(seed)
    shape = () if size is None else (int(size),)
    out = np.empty(shape + (n + 1,))
    x = np.full(shape, float(x0)) if shape else float(x0)
    out[..., 0] = x
    for i in range(n):
        x = _step(chain, x, rng, force_u_zero)
        out[..., i + 1] = x
    return out


def sample_path(chain, x0, horizon, seed: SeedLike) -> PathSample:
    """One trajectory on ``[0, horizon]``.

    Holding times are exponential with rate ``s`` (SMC) or ``s p_visible(s)``
    (SMC'); silent SMC' recombinations never show up.  For very large states
    (above ~500) holding times underflow and the path leaves the state at
    once, which is the correct limiting behavior.
    """
    chain = Chain(chain)
    _check_x0(x0)
    if not (math.isfinite(horizon) and horizon >= 0):
        raise DomainError("horizon must be nonnegative and finite")
    rng = make_rng(seed)
    locs, states = [0.0], [float(x0)]
    ell, x = 0.0, float(x0)
    while True:
        ell += rng.exponential() / _rate(chain, x)
        if ell >= horizon:
            break
        x = float(_step(chain, x, rng))
        locs.append(ell)
        states.append(x)
    return PathSample(np.array(locs), np.array(states), float(horizon))


def _advance(chain, x, horizons, rng):
    """Run independent copies of the continuous process from states ``x`` for times ``horizons``."""
    x = np.array(x, dtype=float)
    remaining = np.array(horizons, dtype=float)
    active = np.nonzero(remaining > 0)[0]
    while active.size:
        hold = rng.exponential(size=active.size) / _rate(chain, x[active])
        jumped = hold < remaining[active]
        remaining[active] -= hold
        moving = active[jumped]
        if moving.size:
            x[moving] = _step(chain, x[moving], rng)
        active = moving
    return x


def sample_endpoint(chain, x0, ell, count, seed: SeedLike):
    """``count`` independent draws of ``Y_ell`` given ``Y_0 = x0`` by direct simulation."""
    chain = Chain(chain)
    _check_x0(x0)
    rng = make_rng(seed)
    return _advance(chain, np.full(count, float(x0)), np.full(count, float(ell)), rng)


def sample_subordinated_endpoint(x0, ell, count, seed: SeedLike):
    """``count`` draws of ``Y_{C_ell}`` with ``C_ell = ell/2 + 2 N_ell``, ``N`` Poisson of rate 1/4."""
    _check_x0(x0)
    rng = make_rng(seed)
    c = ell / 2.0 + 2.0 * rng.poisson(ell / 4.0, size=count)
    return _advance(Chain.SMC, np.full(count, float(x0)), c, rng)


def sample_time_change(ell, count, seed: SeedLike):
    """Draws of the subordinator ``C_ell = ell/2 + 2 N_ell``."""
    rng = make_rng(seed)
    return ell / 2.0 + 2.0 * rng.poisson(ell / 4.0, size=count)


def sample_subordinated_path(x0, horizon, seed: SeedLike) -> PathSample:
    """SMC' path built as ``l -> Y_{C_l}`` from an SMC path ``Y``.

    ``C_l = l/2 + 2 N_l`` where ``N`` is an independent Poisson process of
    rate 1/4.  The SMC path is simulated on internal time up to
    ``C_horizon``.  Jumps of ``Y`` that fall inside a skipped stretch of
    internal time collapse into one change at the Poisson event; equal
    consecutive states are merged.
    """
    _check_x0(x0)
    if not (math.isfinite(horizon) and horizon >= 0):
        raise DomainError("horizon must be nonnegative and finite")
    rng = make_rng(seed)
    n_events = rng.poisson(horizon / 4.0)
    taus = np.sort(rng.uniform(0.0, horizon, size=n_events))
    c_end = horizon / 2.0 + 2.0 * n_events

    # SMC path on internal time [0, c_end]
    locs, states = [0.0], [float(x0)]
    s, x = 0.0, float(x0)
    while True:
        s += rng.exponential() / x
        if s > c_end:
            break
        x = float(_step(Chain.SMC, x, rng))
        locs.append(s)
        states.append(x)
    inner_locs = np.array(locs)
    inner_states = np.array(states)

    def internal(ell):
        return ell / 2.0 + 2.0 * np.searchsorted(taus, ell, side="right")

    # external times at which the internal clock crosses an SMC jump continuously
    jumps = inner_locs[1:]
    jumps = jumps[jumps <= c_end]
    n_before = np.searchsorted(internal(taus) if taus.size else np.zeros(0), jumps, side="right")
    # jump j is crossed continuously iff it lies outside every skipped stretch
    ext = 2.0 * (jumps - 2.0 * n_before)
    crossed = (ext >= 0) & (ext < horizon)
    if taus.size:
        k = np.searchsorted(taus, ext, side="left")  # events strictly before ext
        crossed &= k == n_before
    candidates = np.unique(np.concatenate([ext[crossed], taus]))
    values = inner_states[np.searchsorted(inner_locs, internal(candidates), side="right") - 1]
    out_locs, out_states = [0.0], [float(x0)]
    for ell, v in zip(candidates, values):
        if ell <= 0 or v == out_states[-1]:
            continue
        out_locs.append(float(ell))
        out_states.append(float(v))
    return PathSample(np.array(out_locs), np.array(out_states), float(horizon))


def sample_stationary(law, count, seed: SeedLike):
    """I.i.d. draws from a stationary law."""
    law = Law(law)
    if count < 1:
        raise DomainError("count must be at least 1")
    rng = make_rng(seed)
    if law is Law.PI:
        return -np.log1p(-uniform_open(rng, count))
    if law is Law.MU:
        return rng.exponential(size=count) + rng.exponential(size=count)
    return dists.stationary_quantile(law, uniform_open(rng, count))


def sample_coupled_chains(chain, x0, y0, n, seed: SeedLike, size=None) -> CoupledTrace:
    """Two jump chains driven by common randomness.

    SMC chains share ``(U, Z)`` at every step; SMC' chains share one uniform
    pushed through both quantile functions.  ``y0`` is a state or the
    string ``"stationary"`` for a draw from the chain's stationary law.
    """
    chain = Chain(chain)
    _check_x0(x0)
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = make_rng(seed)
    shape = () if size is None else (int(size),)
    if isinstance(y0, str):
        if y0 != "stationary":
            raise DomainError("y0 must be a state or 'stationary'")
        y = sample_stationary(dists.STATIONARY_LAW[chain], max(1, int(np.prod(shape))), rng)
        y = y.reshape(shape) if shape else float(y[0])
    else:
        _check_x0(y0)
        y = np.full(shape, float(y0)) if shape else float(y0)
    x = np.full(shape, float(x0)) if shape else float(x0)
    xs = np.empty(shape + (n + 1,))
    ys = np.empty(shape + (n + 1,))
    xs[..., 0], ys[..., 0] = x, y
    for i in range(n):
        if chain is Chain.SMC:
            u = rng.random(shape)
            z = rng.exponential(size=shape)
            x, y = u * x + z, u * y + z
        else:
            u = uniform_open(rng, shape)
            x, y = dists.smc_prime_quantile(x, u), dists.smc_prime_quantile(y, u)
        xs[..., i + 1], ys[..., i + 1] = x, y
    return CoupledTrace(xs, ys, np.abs(xs - ys))


def gap_ratios(trace: CoupledTrace):
    """Per-step ratio ``E|gap_{n+1}| / E|gap_n|`` across replicates with delta-method standard errors."""
    g = np.atleast_2d(trace.abs_gaps)
    m = g.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = m[1:] / m[:-1]
        resid = g[:, 1:] - r * g[:, :-1]
        se = resid.std(axis=0, ddof=1) / math.sqrt(g.shape[0]) / m[:-1]
    return r, se
