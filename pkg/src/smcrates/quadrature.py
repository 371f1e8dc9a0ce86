"""Composite Gauss-Legendre rules on panel grids.

Every density in this package is smooth on (0, inf) apart from a kink at
the current state, decays at least like ``exp(-t)``, and may carry
structure on the scale ``1/ell`` near the origin.  A geometric panel grid
with the kink inserted as a panel edge resolves all of these with a fixed
number of Legendre points per panel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import brentq

DEFAULT_T_MAX = 40.0
DEFAULT_PANELS = 80
DEFAULT_POINTS = 16
DEFAULT_T_MIN = 1e-5


@lru_cache(maxsize=None)
def reference_rule(npts: int):
    """Legendre nodes, weights and spectral integration matrix on [-1, 1].

    ``S[i, j]`` is the integral from -1 to ``x[i]`` of the j-th Lagrange
    basis polynomial through the nodes, so ``S @ f`` gives running
    integrals of the interpolant of ``f``.
    """
    x, w = legendre.leggauss(npts)
    vander = legendre.legvander(x, npts - 1)
    vint = np.empty_like(vander)
    for k in range(npts):
        coef = np.zeros(npts)
        coef[k] = 1.0
        vint[:, k] = legendre.legval(x, legendre.legint(coef, lbnd=-1))
    S = np.linalg.solve(vander.T, vint.T).T
    x.flags.writeable = False
    w.flags.writeable = False
    S.flags.writeable = False
    return x, w, S


def make_edges(t_max=DEFAULT_T_MAX, panels=DEFAULT_PANELS, focus=(), t_min=DEFAULT_T_MIN):
    """Geometric panel edges on [0, t_max] with every focus point as an edge."""
    if t_max <= 0 or panels < 2:
        raise ValueError("need t_max > 0 and at least two panels")
    focus = sorted(float(f) for f in np.atleast_1d(focus) if 0.0 < f < t_max)
    n_geo = max(panels - len(focus), 2)
    t_min = min(t_min, t_max / 10)
    edges = np.concatenate([[0.0], np.geomspace(t_min, t_max, n_geo), focus])
    edges = np.unique(edges)
    # merge edges that coincide up to rounding
    keep = np.concatenate([[True], np.diff(edges) > 1e-13 * np.maximum(edges[1:], 1.0)])
    return edges[keep]


@dataclass(frozen=True)
class PanelRule:
    """Composite Gauss-Legendre rule with ``npts`` points on each panel."""

    edges: np.ndarray
    npts: int = DEFAULT_POINTS
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly ascending with at least two entries")
        x, w, _ = reference_rule(self.npts)
        half = 0.5 * np.diff(edges)[:, None]
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "nodes", (mid + half * x).ravel())
        object.__setattr__(self, "weights", (half * w).ravel())

    @classmethod
    def default(cls, focus=(), t_max=DEFAULT_T_MAX, panels=DEFAULT_PANELS, npts=DEFAULT_POINTS):
        return cls(make_edges(t_max, panels, focus), npts)

    @property
    def n_panels(self) -> int:
        return self.edges.size - 1

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def signed_parts(self, values):
        """Positive and negative parts of the panelwise interpolant of ``values``.

        Each panel's node values define a polynomial; its real roots inside
        the panel split it into pieces of constant sign that are integrated
        exactly.  This keeps full accuracy when the sign change of a grid
        function falls between nodes.
        """
        x, _, _ = reference_rule(self.npts)
        v = np.asarray(values, dtype=float).reshape(self.n_panels, self.npts)
        coefs = np.linalg.solve(legendre.legvander(x, self.npts - 1), v.T).T
        half = 0.5 * np.diff(self.edges)
        pos = neg = 0.0
        for c, h in zip(coefs, half):
            roots = legendre.legroots(c)
            roots = np.sort(roots[(np.abs(roots.imag) < 1e-12) & (np.abs(roots.real) < 1)].real)
            anti = legendre.legint(c, lbnd=-1)
            pieces = np.diff(legendre.legval(np.concatenate([[-1.0], roots, [1.0]]), anti)) * h
            pos += pieces[pieces > 0].sum()
            neg -= pieces[pieces < 0].sum()
        return float(pos), float(neg)

    def cumulative(self, values):
        """Running integral from 0 to each node."""
        _, _, S = reference_rule(self.npts)
        v = np.asarray(values, dtype=float).reshape(self.n_panels, self.npts)
        half = 0.5 * np.diff(self.edges)[:, None]
        inner = (v @ S.T) * half
        totals = (v * self.weights.reshape(v.shape)).sum(axis=1)
        offsets = np.concatenate([[0.0], np.cumsum(totals)[:-1]])
        return (inner + offsets[:, None]).ravel()


def gauss_legendre(f, a, b, panels=8, npts=DEFAULT_POINTS):
    """Integrate a vectorized ``f`` over [a, b] with uniform panels."""
    if b <= a:
        return 0.0
    rule = PanelRule(np.linspace(a, b, panels + 1), npts)
    return rule.integrate(f(rule.nodes))


def _sign_changes(g, edges, npts):
    rule = PanelRule(edges, npts)
    vals = np.asarray(g(rule.nodes), dtype=float).reshape(rule.n_panels, npts)
    # densities are only defined on (0, inf)
    ends = np.asarray(g(np.maximum(edges, np.finfo(float).tiny)), dtype=float)
    roots = []
    for p in range(rule.n_panels):
        xs = np.concatenate([[edges[p]], rule.nodes[p * npts:(p + 1) * npts], [edges[p + 1]]])
        ys = np.concatenate([[ends[p]], vals[p], [ends[p + 1]]])
        s = np.sign(ys)
        for i in range(len(xs) - 1):
            if s[i] * s[i + 1] < 0:
                roots.append(brentq(lambda t: float(g(np.array([t]))[0]), xs[i], xs[i + 1],
                                    xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return roots


def signed_parts(g, edges, npts=DEFAULT_POINTS):
    """Integrals of the positive and negative parts of ``g`` over [edges[0], edges[-1]].

    Sign changes of ``g`` found between neighbouring nodes are located by
    Brent's method and inserted as panel edges, so both parts are
    integrated on panels where they are smooth.

    Returns
    -------
    pos, neg : float
        ``int max(g, 0)`` and ``int max(-g, 0)``.
    roots : list of float
        Located sign changes.
    """
    edges = np.asarray(edges, dtype=float)
    roots = _sign_changes(g, edges, npts)
    if roots:
        edges = np.unique(np.concatenate([edges, roots]))
        keep = np.concatenate([[True], np.diff(edges) > 0])
        edges = edges[keep]
    rule = PanelRule(edges, npts)
    vals = np.asarray(g(rule.nodes), dtype=float)
    pos = float(np.dot(rule.weights, np.clip(vals, 0.0, None)))
    neg = float(np.dot(rule.weights, np.clip(-vals, 0.0, None)))
    return pos, neg, roots
