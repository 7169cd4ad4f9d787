"""Measures of measurement-independence violation and Kolmogorov non-additivity."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import UniformGrid, check_grids_match
from .errors import GridError, ValidationError

log = logging.getLogger(__name__)

ORTHOGONALITY_TOLERANCE = 1e-3
W_ROOTS = (np.sqrt(2.0) - 1.0, np.sqrt(2.0) + 1.0)
ETA_BOUNDS = (3.0 - 2.0 * np.sqrt(2.0), 3.0 + 2.0 * np.sqrt(2.0))


@dataclass(frozen=True)
class MIReport:
    """Measurement-independence diagnostics of a two-detection hierarchy."""

    times: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    q1: float
    q2: float
    violation_intervals: tuple = ()


@dataclass(frozen=True)
class KolmogorovReport:
    """Kolmogorov-additivity diagnostics."""

    w_ni: tuple
    w_n: float
    W: float
    w1: float | None = None
    bound: float | None = None


def w_of_t(a1, a2, eps=0.0):
    """w(t) = P1(t)^2 - P2(t, t) for two orthogonal packets.

    Equals (|A1|^4 + |A2|^4 - 6 |A1|^2 |A2|^2) / 4; positive values certify
    violation of the Jensen inequality P2(t, t) >= P1(t)^2.

    :param a1: amplitude samples of the first packet
    :param a2: amplitude samples of the second packet
    :param eps: overlap of the packets (must be below 1e-3)
    """
    if abs(eps) >= ORTHOGONALITY_TOLERANCE:
        raise ValidationError(f"w(t) closed form needs |eps| < {ORTHOGONALITY_TOLERANCE}, got {abs(eps):.3g}")
    x = np.abs(a1) ** 2
    y = np.abs(a2) ** 2
    return 0.25 * (x * x + y * y - 6.0 * x * y)


def w_ratio_roots(tol=1e-12):
    """Roots of w in the modulus ratio r = |A1/A2|, found by bisection of r^4 - 6 r^2 + 1."""
    f = lambda r: r**4 - 6 * r**2 + 1
    return brentq(f, 0.0, 1.0, xtol=tol), brentq(f, 1.0, 10.0, xtol=tol)


def violation_boundaries(amp1, amp2, t_lo, t_hi, samples=400, tol=1e-10):
    """Times in [t_lo, t_hi] where w(t) changes sign.

    :param amp1: callable t -> A1(t)
    :param amp2: callable t -> A2(t)
    :return: array of crossing times, located by bisection
    """
    def w(t):
        return float(w_of_t(amp1(np.array([t])), amp2(np.array([t])))[0])

    ts = np.linspace(t_lo, t_hi, samples)
    vals = w_of_t(amp1(ts), amp2(ts))
    roots = [brentq(w, ts[i], ts[i + 1], xtol=tol)
             for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)]
    return np.array(roots)


def pair_density_from_amplitudes(a1_t1, a2_t1, a1_t2, a2_t2, eps=0.0):
    """P2(t1, t2) of the symmetric pair from amplitudes sampled on two grids."""
    amp = np.outer(a1_t1, a2_t2) + np.outer(a2_t1, a1_t2)
    return np.abs(amp) ** 2 / (2.0 * (1.0 + abs(eps) ** 2))


def g_of_t1t2(a1_t1, a2_t1, a1_t2=None, a2_t2=None, eps=0.0):
    """G(t1, t2) = P2(t1, t2) - sqrt(P2(t1, t1) P2(t2, t2)) and the phase Theta.

    Positive G certifies violation of the Cauchy-Schwarz inequality.

    :return: (G, Theta) arrays of shape (len(t1), len(t2))
    """
    a1_t2 = a1_t1 if a1_t2 is None else a1_t2
    a2_t2 = a2_t1 if a2_t2 is None else a2_t2
    P = pair_density_from_amplitudes(a1_t1, a2_t1, a1_t2, a2_t2, eps)
    c = 1.0 / (2.0 * (1.0 + abs(eps) ** 2))
    d1 = c * np.abs(2 * a1_t1 * a2_t1) ** 2
    d2 = c * np.abs(2 * a1_t2 * a2_t2) ** 2
    G = P - np.sqrt(np.outer(d1, d2))
    theta = 0.5 * (np.angle(a1_t1)[:, None] + np.angle(a2_t2)[None, :]
                   - np.angle(a1_t2)[None, :] - np.angle(a2_t1)[:, None])
    return G, theta


def g_closed_form(a1_t1, a2_t1, a1_t2=None, a2_t2=None):
    """G = (X - Y)^2 / 2 - 2 X Y sin^2(Theta) for orthogonal packets."""
    a1_t2 = a1_t1 if a1_t2 is None else a1_t2
    a2_t2 = a2_t1 if a2_t2 is None else a2_t2
    X = np.abs(np.outer(a1_t1, a2_t2))
    Y = np.abs(np.outer(a2_t1, a1_t2))
    _, theta = g_of_t1t2(a1_t1, a2_t1, a1_t2, a2_t2)
    return 0.5 * (X - Y) ** 2 - 2 * X * Y * np.sin(theta) ** 2


def eta(a1_t1, a2_t1, a1_t2, a2_t2):
    """eta = |A1(t1) A2(t2)| / |A1(t2) A2(t1)|."""
    return np.abs(a1_t1 * a2_t2) / np.abs(a1_t2 * a2_t1)


def eta_gaussian(a, sigma, v, dt):
    """Stationary-phase eta = exp(a v dt / (2 sigma^2)) for Gaussian packets.

    ``dt = t1 - t2`` when the second packet is displaced by ``a`` towards the
    detector (it arrives first).
    """
    return np.exp(a * v * np.asarray(dt) / (2.0 * sigma**2))


def eta_onset_gaussian(a, sigma, v):
    """|dt| beyond which eta leaves [3 - 2 sqrt 2, 3 + 2 sqrt 2]: 2 ln(3 + 2 sqrt 2) sigma^2 / (a v)."""
    return 2.0 * np.log(ETA_BOUNDS[1]) * sigma**2 / (a * v)


def w_onset_gaussian(a, sigma, v):
    """Offset from the mid-arrival time beyond which w(t) > 0: 2 ln(1 + sqrt 2) sigma^2 / (a v)."""
    return 2.0 * np.log(W_ROOTS[1]) * sigma**2 / (a * v)


def q2_gaussian(a, sigma):
    """Stationary-phase Q2 of two Gaussians displaced by a: tanh(a^2 / (8 sigma^2)).

    This includes the overlap in the pair normalization; it reduces to
    1 - exp(-a^2 / (4 sigma^2)) if the overlap is neglected.
    """
    return np.tanh(np.asarray(a) ** 2 / (8.0 * sigma**2))


def _weights(grid):
    return grid.weights if isinstance(grid, UniformGrid) else np.asarray(grid, dtype=float)


def q1_measure(p1, p2_diag, grid):
    """Q1 = int dt max(0, P1(t)^2 - P2(t, t))."""
    excess = np.maximum(0.0, np.asarray(p1) ** 2 - np.asarray(p2_diag))
    return float(_weights(grid) @ excess)


def q2_measure(p2, grid1, grid2=None):
    """Q2 = int dt1 dt2 max(0, P2(t1, t2) - sqrt(P2(t1, t1) P2(t2, t2))).

    Both axes must share a grid so that the diagonal is defined.
    """
    if grid2 is not None and grid2 != grid1:
        raise GridError("Q2 needs both time axes on the same grid")
    p2 = np.asarray(p2)
    d = np.sqrt(np.maximum(np.diag(p2), 0.0))
    excess = np.maximum(0.0, p2 - np.outer(d, d))
    w = _weights(grid1)
    value = float(w @ excess @ w)
    if value > 1 + 1e-9:
        log.warning("Q2 = %.6f exceeds 1", value)
    return value


def statistical_distance(p, q, weights=None):
    """Half the L1 distance between two densities sampled on common axes."""
    diff = np.abs(np.asarray(p) - np.asarray(q))
    return 0.5 * float(_integrate_all(diff, weights))


def _axis_weights(weights, ndim):
    if weights is None:
        return [None] * ndim
    if isinstance(weights, UniformGrid):
        return [weights.weights] * ndim
    weights = list(weights)
    if len(weights) != ndim:
        raise GridError(f"need {ndim} weight vectors, got {len(weights)}")
    return [_weights(w) if w is not None else None for w in weights]


def _integrate_all(values, weights):
    ws = _axis_weights(weights, values.ndim)
    for w in reversed(ws):
        values = values.sum(axis=-1) if w is None else values @ w
    return values


def marginal(p_next, i, weights=None):
    """Integrate slot ``i`` out of an (n+1)-point density."""
    p_next = np.asarray(p_next)
    w = _axis_weights(weights, p_next.ndim)[i]
    moved = np.moveaxis(p_next, i, -1)
    return moved.sum(axis=-1) if w is None else moved @ w


def kolmogorov_distance(p_n, p_next, i, weights=None):
    """w_{n,i}: distance between P_n and the marginal of P_{n+1} over slot ``i``.

    :param weights: None for discrete outcomes, a UniformGrid shared by all
        axes, or one weight vector per axis of ``p_next``
    """
    p_n = np.asarray(p_n)
    p_next = np.asarray(p_next)
    if p_next.ndim != p_n.ndim + 1:
        raise GridError("P_{n+1} must have one more axis than P_n")
    ws = _axis_weights(weights, p_next.ndim)
    tilde = marginal(p_next, i, ws)
    if tilde.shape != p_n.shape:
        raise GridError(f"marginal shape {tilde.shape} does not match {p_n.shape}")
    rest = [w for j, w in enumerate(ws) if j != i]
    return statistical_distance(tilde, p_n, rest if p_n.ndim else None)


def kolmogorov_level(w_ni):
    """w_n = mean of the w_{n,i}."""
    w_ni = list(w_ni)
    if not w_ni:
        raise ValidationError("need at least one w_{n,i}")
    return float(np.mean(w_ni))


def hierarchy_supremum(w_n):
    """W = max over the computed levels."""
    w_n = list(w_n)
    if not w_n:
        raise ValidationError("need at least one level")
    return float(np.max(w_n))


def trace_distance_bound(rho_a, rho_b):
    """Half the trace norm of the difference of two density matrices on one grid."""
    check_grids_match(rho_a.grid, rho_b.grid)
    s = np.sqrt(rho_a.grid.weights)
    diff = s[:, None] * (rho_a.matrix - rho_b.matrix) * s[None, :]
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def violation_intervals(times, values):
    """Maximal runs of ``times`` on which ``values`` is positive, as (start, stop) pairs."""
    pos = np.asarray(values) > 0
    out = []
    start = None
    for t, flag in zip(times, pos):
        if flag and start is None:
            start = t
        if not flag and start is not None:
            out.append((start, prev))
            start = None
        prev = t
    if start is not None:
        out.append((start, prev))
    return tuple(out)
