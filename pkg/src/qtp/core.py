"""Kinematics, grids, Gaussian wavepackets and the quadrature engine.

Natural units are used throughout (hbar = c = 1): momenta, masses and
energies are inverse lengths, times and distances are lengths.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import erfc

from .errors import DomainError, GridError, TailWarning, ValidationError

DEFAULT_COUNT = 2048
DEFAULT_STD = 8.0
TAIL_TOLERANCE = 1e-6
NEGATIVE_SUPPORT_TOLERANCE = 1e-8
EDGE_TOLERANCE = 1e-10


def omega(k, m):
    """Relativistic energy sqrt(k^2 + m^2)."""
    return np.hypot(k, m)


def velocity(k, m):
    """Relativistic velocity k / omega_k.

    :param k: momentum (scalar or array)
    :param m: mass
    :return: velocity with the shape of ``k``
    """
    k = np.asarray(k, dtype=float)
    if m == 0 and np.any(k == 0):
        raise DomainError("velocity is undefined at k = 0 for a massless particle")
    v = k / omega(k, m)
    return v if v.ndim else float(v)


def root_velocity(k, m):
    """sqrt(v_k) on the positive half line, zero for k <= 0.

    States in this package propagate towards detectors at positive x, so
    nodes with k <= 0 carry no weight (this also removes the k = 0 node of
    a massless grid).
    """
    k = np.asarray(k, dtype=float)
    out = np.zeros_like(k)
    pos = k > 0
    out[pos] = np.sqrt(k[pos] / omega(k[pos], m))
    return out


@dataclass(frozen=True)
class UniformGrid:
    """Uniform grid on [start, stop] with composite trapezoid weights."""

    start: float
    stop: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.start) or not np.isfinite(self.stop):
            raise GridError("grid bounds must be finite")
        if self.stop <= self.start:
            raise GridError(f"grid needs stop > start, got [{self.start}, {self.stop}]")
        if int(self.count) != self.count or self.count < 2:
            raise GridError(f"grid count must be an integer >= 2, got {self.count}")
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "stop", float(self.stop))
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def centered(cls, center, half_width, count=DEFAULT_COUNT):
        return cls(center - half_width, center + half_width, count)

    @cached_property
    def nodes(self):
        x = np.linspace(self.start, self.stop, self.count)
        x.flags.writeable = False
        return x

    @property
    def spacing(self):
        return (self.stop - self.start) / (self.count - 1)

    @cached_property
    def weights(self):
        w = np.full(self.count, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        w.flags.writeable = False
        return w

    @property
    def length(self):
        return self.stop - self.start

    def integrate(self, values, axis=-1):
        """Trapezoid integral of tabulated values along ``axis``."""
        values = np.moveaxis(np.asarray(values), axis, -1)
        if values.shape[-1] != self.count:
            raise GridError(f"expected {self.count} samples, got {values.shape[-1]}")
        return values @ self.weights

    def index_of(self, value):
        """Index of the node closest to ``value``."""
        return int(np.argmin(np.abs(self.nodes - value)))

    def refined(self, factor=2):
        """Grid over the same interval with ``factor`` times as many intervals."""
        return type(self)(self.start, self.stop, factor * (self.count - 1) + 1)


class MomentumGrid(UniformGrid):
    """Uniform momentum grid."""


class TimeGrid(UniformGrid):
    """Uniform time grid."""


def momentum_grid_for(p, sigma, n_std=DEFAULT_STD, count=DEFAULT_COUNT):
    """Momentum grid covering ``n_std`` momentum-space deviations 1/(2 sigma) about p."""
    return MomentumGrid.centered(p, n_std / (2.0 * sigma), count)


def check_grids_match(*grids):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridError(f"grid mismatch: {first} vs {g}")
    return first


def check_resolution(grid, m, x, t_min, t_max=None):
    """Reject momentum grids that alias the phase exp(i k x - i omega_k t).

    The local phase rate d/dk (k x - omega_k t) = x - v_k t is evaluated on
    every positive node and at both ends of the time window; the grid
    spacing times its maximum must stay below pi/4.

    :return: the maximum phase rate
    """
    t_max = t_min if t_max is None else t_max
    k = grid.nodes[grid.nodes > 0]
    if k.size == 0:
        raise GridError("momentum grid has no positive nodes")
    v = k / omega(k, m)
    rate = max(np.max(np.abs(x - v * t)) for t in (t_min, t_max))
    if grid.spacing * rate >= np.pi / 4:
        raise GridError(
            f"momentum spacing {grid.spacing:.3g} too coarse for phase rate {rate:.3g}; "
            f"need spacing < {np.pi / 4 / rate:.3g}"
        )
    return rate


def oscillatory_integral(f, grid, full_output=False):
    """Composite trapezoid integral of a tabulated complex integrand.

    Terms are accumulated left to right along the last axis so that results
    are reproducible bit for bit.

    :param f: samples on ``grid`` (last axis)
    :param grid: UniformGrid
    :param full_output: also return a flag telling whether the integrand decays
        below 1e-10 (relative to its peak) at both grid edges
    :return: integral, or ``(integral, decayed)`` when ``full_output``
    """
    f = np.asarray(f)
    if f.shape[-1] != grid.count:
        raise GridError(f"expected {grid.count} samples, got {f.shape[-1]}")
    terms = f * grid.weights
    value = np.cumsum(terms, axis=-1)[..., -1]
    peak = np.max(np.abs(f))
    edge = max(np.max(np.abs(f[..., 0])), np.max(np.abs(f[..., -1])))
    decayed = bool(peak == 0 or edge <= EDGE_TOLERANCE * peak)
    if not decayed:
        warnings.warn(f"integrand has not decayed at the grid edges (edge/peak = {edge / peak:.2e})",
                      TailWarning, stacklevel=2)
    if full_output:
        return value, decayed
    return value


@dataclass(frozen=True)
class GaussianComponent:
    """One Gaussian term c * phi_{p, sigma, a}(k) of a wavepacket."""

    p: float
    sigma: float
    a: float = 0.0
    coefficient: complex = 1.0

    def momentum(self, k):
        k = np.asarray(k, dtype=float)
        norm = (2.0 * self.sigma**2 / np.pi) ** 0.25
        return self.coefficient * norm * np.exp(-self.sigma**2 * (k - self.p) ** 2 - 1j * k * self.a)

    def position(self, x):
        """Unitary Fourier transform (2 pi)^{-1/2} int dk phi(k) e^{ikx}."""
        y = np.asarray(x, dtype=float) - self.a
        norm = (2.0 * np.pi * self.sigma**2) ** -0.25
        return self.coefficient * norm * np.exp(-(y**2) / (4.0 * self.sigma**2) + 1j * self.p * y)


@dataclass(frozen=True)
class Wavepacket:
    """Normalized momentum-space amplitude tabulated on a grid.

    The packet is a finite superposition of Gaussian components, which keeps
    closed forms (position representation, re-tabulation) available.
    """

    grid: MomentumGrid
    components: tuple
    values: np.ndarray = field(repr=False)

    @property
    def p(self):
        return self.components[0].p

    @property
    def sigma(self):
        return self.components[0].sigma

    @property
    def a(self):
        return self.components[0].a

    def momentum(self, k):
        """Evaluate the amplitude at arbitrary momenta."""
        return sum(c.momentum(k) for c in self.components)

    def position(self, x):
        """Position-space amplitude."""
        return sum(c.position(x) for c in self.components)

    def on_grid(self, grid):
        """Re-tabulate the same packet on another grid (not renormalized)."""
        values = self.momentum(grid.nodes)
        values.flags.writeable = False
        return Wavepacket(grid, self.components, values)

    def norm(self):
        return float(self.grid.integrate(np.abs(self.values) ** 2))


def _gaussian_tails(p, sigma, grid):
    s = 1.0 / (2.0 * sigma)
    upper = 0.5 * erfc((grid.stop - p) / (np.sqrt(2.0) * s))
    lower = 0.5 * erfc((p - grid.start) / (np.sqrt(2.0) * s))
    negative = 0.5 * erfc(p / (np.sqrt(2.0) * s))
    return lower + upper, negative


def gaussian_wavepacket(p, sigma, a=0.0, grid=None):
    """Gaussian packet phi(k) = (2 sigma^2/pi)^{1/4} exp(-sigma^2 (k-p)^2 - i k a).

    :param p: center momentum (> 0)
    :param sigma: position-space width (> 0)
    :param a: spatial displacement (>= 0)
    :param grid: MomentumGrid; defaults to +-8 momentum deviations with 2048 nodes
    """
    if not p > 0:
        raise ValidationError(f"center momentum must be positive, got {p}")
    if not sigma > 0:
        raise ValidationError(f"width must be positive, got {sigma}")
    if a < 0:
        raise ValidationError(f"displacement must be non-negative, got {a}")
    grid = momentum_grid_for(p, sigma) if grid is None else grid
    tails, negative = _gaussian_tails(p, sigma, grid)
    if tails > TAIL_TOLERANCE:
        raise GridError(f"grid [{grid.start:.4g}, {grid.stop:.4g}] misses {tails:.2e} of the packet mass")
    if negative > NEGATIVE_SUPPORT_TOLERANCE:
        raise ValidationError(f"packet has {negative:.2e} of its mass at k <= 0; increase sigma * p")
    comp = GaussianComponent(float(p), float(sigma), float(a))
    values = comp.momentum(grid.nodes)
    values.flags.writeable = False
    return Wavepacket(grid, (comp,), values)


def superpose(packets, coefficients=None):
    """Normalized superposition sum_i c_i phi_i of packets on a common grid."""
    packets = list(packets)
    if not packets:
        raise ValidationError("need at least one packet")
    grid = check_grids_match(*(pk.grid for pk in packets))
    coefficients = np.ones(len(packets)) if coefficients is None else np.asarray(coefficients)
    comps = []
    for c, pk in zip(coefficients, packets):
        for comp in pk.components:
            comps.append(GaussianComponent(comp.p, comp.sigma, comp.a, complex(c * comp.coefficient)))
    values = sum(c.momentum(grid.nodes) for c in comps)
    norm = np.sqrt(grid.integrate(np.abs(values) ** 2))
    if norm == 0:
        raise ValidationError("superposition vanishes identically")
    comps = tuple(GaussianComponent(c.p, c.sigma, c.a, c.coefficient / norm) for c in comps)
    values = values / norm
    values.flags.writeable = False
    return Wavepacket(grid, comps, values)


def overlap(phi1, phi2):
    """epsilon = int dk phi1(k) conj(phi2(k))."""
    grid = check_grids_match(phi1.grid, phi2.grid)
    return complex(oscillatory_integral(phi1.values * np.conj(phi2.values), grid))
