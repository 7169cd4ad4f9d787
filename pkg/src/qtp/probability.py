"""Detection-time probability densities and the scattering reduction operator.

Conventions: amplitudes carry a factor (2 pi)^{-1/2}, so that for a
normalized positive-momentum packet int dt |A(t)|^2 = 1 and, under maximum
localization, P1(t) = |A(t)|^2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import (
    UniformGrid,
    Wavepacket,
    check_grids_match,
    check_resolution,
    omega,
    overlap,
    root_velocity,
    velocity,
)
from .detectors import ScatteredKernel, absorption_coefficient, localization_from_kernel
from .errors import (
    ConditioningError,
    ConstructionError,
    GridError,
    NegativeDensityError,
    ValidationError,
)

log = logging.getLogger(__name__)

CLIP_TOLERANCE = 1e-12
NEGATIVE_RTOL = 1e-6
HERMITIAN_RTOL = 1e-10
CONDITION_THRESHOLD = 1e-8
CHUNK_ELEMENTS = 1 << 22
CACHE_BYTES = 400 * 2**20


def _as_array(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class OneParticleState:
    """Density matrix rho(k, k') on a momentum grid.

    Traces and spectra use the quadrature weights: the operator's eigenvalues
    are those of W^{1/2} rho W^{1/2}. ``amplitude`` is set for pure states.
    """

    grid: UniformGrid
    matrix: np.ndarray = field(repr=False)
    amplitude: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        mat = self.matrix
        if mat.shape != (self.grid.count, self.grid.count):
            raise GridError(f"density matrix shape {mat.shape} does not match grid size {self.grid.count}")
        scale = np.max(np.abs(mat)) or 1.0
        if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_RTOL * scale:
            raise ValidationError("density matrix is not Hermitian")
        mat.flags.writeable = False

    @classmethod
    def pure(cls, grid, amplitude):
        psi = np.asarray(amplitude, dtype=complex)
        psi.flags.writeable = False
        return cls(grid, np.outer(psi, psi.conj()), psi)

    @classmethod
    def from_wavepacket(cls, phi):
        return cls.pure(phi.grid, phi.values)

    def trace(self):
        return float(np.real(self.grid.weights @ np.diag(self.matrix)))

    def weighted(self):
        s = np.sqrt(self.grid.weights)
        return s[:, None] * self.matrix * s[None, :]

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.weighted())

    def min_eigenvalue(self):
        return float(self.eigenvalues()[0])

    def factors(self, rtol=1e-13):
        """Vectors u_i and weights l_i with rho(k, k') = sum_i l_i u_i(k) conj(u_i(k'))."""
        if self.amplitude is not None:
            return np.ones(1), self.amplitude[:, None]
        lam, vec = np.linalg.eigh(self.weighted())
        keep = np.abs(lam) > rtol * np.max(np.abs(lam))
        return lam[keep], vec[:, keep] / np.sqrt(self.grid.weights)[:, None]

    def diagonal(self):
        return np.real(np.diag(self.matrix))


def postselect_state(state, alpha):
    """Reweight rho(k, k') by sqrt(alpha(k) alpha(k')) and renormalize.

    :param state: OneParticleState
    :param alpha: absorption coefficients on the state's grid, or a callable of k
    """
    a = alpha(state.grid.nodes) if callable(alpha) else np.asarray(alpha, dtype=float)
    if a.shape != (state.grid.count,):
        raise GridError("absorption coefficients must be sampled on the state's grid")
    if np.any(a < 0):
        raise ValidationError("absorption coefficients must be non-negative")
    root = np.sqrt(a)
    if state.amplitude is not None:
        psi = state.amplitude * root
        norm = state.grid.integrate(np.abs(psi) ** 2)
        if not norm > 0:
            raise ConstructionError("state is not absorbed at all")
        return OneParticleState.pure(state.grid, psi / np.sqrt(norm))
    mat = state.matrix * np.outer(root, root)
    tr = float(np.real(state.grid.weights @ np.diag(mat)))
    if not tr > 0:
        raise ConstructionError("state is not absorbed at all")
    return OneParticleState(state.grid, mat / tr)


@dataclass(frozen=True)
class SampledDensity:
    """Density tabulated on one or two time grids.

    ``signed`` densities (those produced by the scattering chain) are kept as
    computed; all others are checked for negativity on construction.
    """

    grids: tuple
    values: np.ndarray = field(repr=False)
    signed: bool = False

    def __post_init__(self):
        if self.values.shape != tuple(g.count for g in self.grids):
            raise GridError("density values do not match their grids")
        self.values.flags.writeable = False

    @classmethod
    def build(cls, grids, values, signed=False):
        values = np.array(np.real(values), dtype=float)
        if not signed:
            values = _clip_negative(values)
        return cls(tuple(grids), values, signed)

    @property
    def grid(self):
        return self.grids[0]

    @property
    def ndim(self):
        return len(self.grids)

    def integrate_axis(self, axis):
        return self.grids[axis].integrate(self.values, axis=axis)

    @property
    def mass(self):
        v = self.values
        for axis in reversed(range(self.ndim)):
            v = self.grids[axis].integrate(v, axis=axis)
        return float(v)

    @property
    def negative_mass(self):
        v = np.minimum(self.values, 0.0)
        for axis in reversed(range(self.ndim)):
            v = self.grids[axis].integrate(v, axis=axis)
        return float(v)

    def marginal(self, keep):
        """1D density obtained by integrating out the other axis."""
        if self.ndim != 2:
            raise ValidationError("marginal needs a 2D density")
        return SampledDensity.build((self.grids[keep],), self.integrate_axis(1 - keep), self.signed)

    def diagonal(self):
        if self.ndim != 2 or self.grids[0] != self.grids[1]:
            raise GridError("diagonal needs a 2D density on identical grids")
        return np.diag(self.values).copy()


def _clip_negative(values):
    low = values.min(initial=0.0)
    if low >= -CLIP_TOLERANCE:
        return np.maximum(values, 0.0)
    peak = max(values.max(initial=0.0), CLIP_TOLERANCE)
    if low < -NEGATIVE_RTOL * peak:
        raise NegativeDensityError(f"density reaches {low:.3e} against a peak of {peak:.3e}")
    log.warning("clipping negative density values down to %.3e", low)
    return np.maximum(values, 0.0)


def _propagators(grid, m, x, t):
    """Rows w_k sqrt(v_k) exp(i k x - i omega_k t) for each time in ``t``."""
    k = grid.nodes
    base = grid.weights * root_velocity(k, m)
    return base[None, :] * np.exp(1j * (k[None, :] * x - omega(k, m)[None, :] * t[:, None]))


def _chunks(n_rows, n_cols):
    step = max(1, CHUNK_ELEMENTS // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def amplitude(phi, x, t, m):
    """A(t) = (2 pi)^{-1/2} int dk phi(k) sqrt(v_k) exp(i k x - i omega_k t).

    :param phi: Wavepacket
    :param x: detector position
    :param t: time or array of times
    :param m: mass
    """
    t = _as_array(t)
    check_resolution(phi.grid, m, x, t.min(), t.max())
    out = np.empty(t.shape, dtype=complex)
    for sl in _chunks(t.size, phi.grid.count):
        out[sl] = _propagators(phi.grid, m, x, t[sl]) @ phi.values
    return out / np.sqrt(2 * np.pi)


def amplitude_stationary_phase(phi, x, t, m):
    """Narrow-packet approximation sqrt(v_p) exp(-i m^2 t / omega_p) phi~(x - v_p t).

    Each Gaussian component is expanded about its own center momentum.
    """
    t = _as_array(t)
    out = np.zeros(t.shape, dtype=complex)
    for comp in phi.components:
        v = velocity(comp.p, m)
        out += np.sqrt(v) * np.exp(-1j * m * m * t / omega(comp.p, m)) * comp.position(x - v * t)
    return out


def p1_values(state, L, x, m, t):
    """P1 at arbitrary times; see ``p1_time``."""
    grid = state.grid
    t = _as_array(t)
    check_resolution(grid, m, x, t.min(), t.max())
    values = np.empty(t.size)
    if L is None or L.maximum_localization:
        lam, vecs = state.factors()
        for sl in _chunks(t.size, grid.count * len(lam)):
            amps = _propagators(grid, m, x, t[sl]) @ vecs
            values[sl] = np.abs(amps) ** 2 @ lam
    else:
        check_grids_match(grid, L.grid)
        mat = state.matrix * L.matrix
        for sl in _chunks(t.size, grid.count):
            G = _propagators(grid, m, x, t[sl])
            values[sl] = np.real(np.einsum("tk,tk->t", G @ mat, G.conj()))
    return values / (2 * np.pi)


def p1_time(state, L, x, m, tgrid, signed=False):
    """Single-detection density P1(t) = (2 pi)^{-1} Tr[sqrt(v) U rho U^dag sqrt(v) L].

    :param state: post-selected OneParticleState
    :param L: LocalizationOperator on the same grid, or None for maximum localization
    :param tgrid: TimeGrid
    """
    return SampledDensity.build((tgrid,), p1_values(state, L, x, m, tgrid.nodes), signed)


@dataclass(frozen=True)
class TwoParticleSymmetricState:
    """psi(k1, k2) = [phi1(k1) phi2(k2) + phi1(k2) phi2(k1)] / sqrt(2 (1 + |eps|^2))."""

    phi1: Wavepacket
    phi2: Wavepacket

    def __post_init__(self):
        check_grids_match(self.phi1.grid, self.phi2.grid)

    @property
    def grid(self):
        return self.phi1.grid

    @cached_property
    def eps(self):
        return overlap(self.phi1, self.phi2)

    @property
    def norm_factor(self):
        return 1.0 / (2.0 * (1.0 + abs(self.eps) ** 2))

    def wavefunction(self):
        a, b = self.phi1.values, self.phi2.values
        return np.sqrt(self.norm_factor) * (np.outer(a, b) + np.outer(b, a))

    def one_particle_state(self):
        """One-body density matrix, normalized to the particle number 2."""
        a, b, e = self.phi1.values, self.phi2.values, self.eps
        mat = (np.outer(a, a.conj()) + np.outer(b, b.conj())
               + np.conj(e) * np.outer(a, b.conj()) + e * np.outer(b, a.conj()))
        return OneParticleState(self.grid, 2 * self.norm_factor * mat)

    def amplitudes(self, x, t, m):
        return amplitude(self.phi1, x, t, m), amplitude(self.phi2, x, t, m)


def p1_pair(state, x, m, tgrid):
    """Single-detection density of the symmetric pair under maximum localization."""
    a1, a2 = state.amplitudes(x, tgrid.nodes, m)
    vals = np.abs(a1) ** 2 + np.abs(a2) ** 2 + 2 * np.real(np.conj(state.eps) * a1 * np.conj(a2))
    return SampledDensity.build((tgrid,), state.norm_factor * vals)


def p2_time_symmetric(state, x1, x2, m, tgrid1, tgrid2=None):
    """Joint density P2(t1, t2) of the symmetric pair under maximum localization."""
    tgrid2 = tgrid1 if tgrid2 is None else tgrid2
    a1, a2 = state.amplitudes(x1, tgrid1.nodes, m)
    if x2 == x1 and tgrid2 == tgrid1:
        b1, b2 = a1, a2
    else:
        b1, b2 = state.amplitudes(x2, tgrid2.nodes, m)
    if tgrid2 == tgrid1 and x2 == x1:
        u = np.outer(a1, a2)
        amp = u + u.T
    else:
        amp = np.outer(a1, b2) + np.outer(a2, b1)
    return SampledDensity.build((tgrid1, tgrid2), state.norm_factor * np.abs(amp) ** 2)


class ReductionOperator:
    """Reduction operator S(k, q; k', q') of a detector probed by scattering.

    S = R1(kbar - qbar, wbar_k - wbar_q) sqrt(alpha2(q) alpha2(q'))
        / sqrt(w_q w_q' D(k) D(k')),
    with D = alpha2 * R'_1 on shell. The energy-transfer cut of R1 is
    resolved to sub-cell accuracy on the outgoing grid (``cut_cell``).
    The tensor is cached when it fits in memory and built in slabs otherwise.
    """

    def __init__(self, kernel1, kernel2, m, k_grid, q_grid, denominator=None, cut_cell=True,
                 cache_bytes=CACHE_BYTES):
        if q_grid.start <= 0:
            raise GridError("outgoing grid must start at a positive momentum (the acceptance cutoff)")
        if k_grid.start <= 0:
            raise GridError("incoming grid must be positive")
        if q_grid.stop < k_grid.stop:
            raise GridError("outgoing grid must extend at least to the top of the incoming grid")
        self.kernel1 = kernel1
        self.kernel2 = kernel2
        self.m = float(m)
        self.k_grid = k_grid
        self.q_grid = q_grid
        self.cut_cell = cut_cell
        q = q_grid.nodes
        self.alpha2 = absorption_coefficient(kernel2, q, m)
        self.scattered = ScatteredKernel(kernel1, m, weight=lambda p: absorption_coefficient(kernel2, p, m),
                                         p_min=q_grid.start)
        k = k_grid.nodes
        if denominator is None:
            D = self.scattered.on_shell(k)
        else:
            D = np.asarray(denominator(k), dtype=float)
        D = np.asarray(D, dtype=float)
        if np.any(~(D > 0)):
            raise ConstructionError(f"second-detector normalization vanishes at k = {k[~(D > 0)][:5]}")
        self.denominator = D
        self._wk = omega(k, m)
        self._wq = omega(q, m)
        self._vq = q / self._wq
        self._cq = np.sqrt(self.alpha2 / self._wq)
        self._rd = 1.0 / np.sqrt(D)
        n_k, n_q = k_grid.count, q_grid.count
        self._tensor = None
        if n_k * n_k * n_q * n_q * 8 <= cache_bytes:
            self._tensor = np.stack([self._block(i) for i in range(n_k)])
            self._tensor.flags.writeable = False

    @property
    def shape(self):
        return (self.k_grid.count, self.q_grid.count, self.k_grid.count, self.q_grid.count)

    def _block(self, i):
        k, q = self.k_grid.nodes, self.q_grid.nodes
        K = 0.5 * ((k[i] + k)[None, :, None] - (q[:, None] + q[None, :])[:, None, :])
        W = 0.5 * ((self._wk[i] + self._wk)[None, :, None] - (self._wq[:, None] + self._wq[None, :])[:, None, :])
        R = self.kernel1.smooth(K, W) * self.kernel1.in_cone(K, W)
        if self.cut_cell:
            vbar = 0.5 * (self._vq[:, None] + self._vq[None, :])[:, None, :]
            theta = np.clip(0.5 + W / (vbar * self.q_grid.spacing), 0.0, 1.0)
        else:
            theta = W >= 0
        amp = self._cq[:, None, None] * self._cq[None, None, :] * (self._rd[i] * self._rd)[None, :, None]
        return R * theta * amp

    def block(self, i):
        """Slab S[k_i, q, k', q'] with axes (q, k', q')."""
        if self._tensor is not None:
            return self._tensor[i]
        return self._block(i)

    def tensor(self):
        if self._tensor is not None:
            return self._tensor
        return np.stack([self._block(i) for i in range(self.k_grid.count)])

    def sigma(self, i):
        """Outgoing density matrix sigma_k for incoming node ``i``."""
        return self.block(i)[:, i, :]

    def sigma_state(self, i):
        return OneParticleState(self.q_grid, self.sigma(i).astype(complex))

    def normalization(self):
        """int dq S(k, q; k, q) for every incoming node."""
        return np.array([self.q_grid.weights @ np.diag(self.sigma(i)) for i in range(self.k_grid.count)])

    def partial_trace(self):
        """Grid partial trace over the outgoing particle, the modified localization matrix."""
        wq = self.q_grid.weights
        return np.stack([np.einsum("aja,a->j", self.block(i), wq) for i in range(self.k_grid.count)])

    def localization_star(self):
        """Modified localization operator from the scattered kernel (quadrature-accurate)."""
        return localization_from_kernel(self.scattered, self.m, self.k_grid)

    def absorption(self):
        """Total absorption coefficient alpha_{1,2}(k) = D(k) / (2k) on the incoming grid."""
        return self.denominator / (2 * self.k_grid.nodes)

    def absorption_at(self, k):
        k = np.asarray(k, dtype=float)
        return self.scattered.on_shell(k) / (2 * k)

    def contract(self, F):
        """X_t(q, q') = sum_{k k'} F_t(k) conj(F_t(k')) S(k, q; k', q') for each row of F."""
        n_t = F.shape[0]
        n_q = self.q_grid.count
        X = np.zeros((n_t, n_q, n_q), dtype=complex)
        Fc = F.conj()
        for i in range(self.k_grid.count):
            Y = np.einsum("tj,ajb->tab", Fc, self.block(i), optimize=True)
            X += F[:, i, None, None] * Y
        return X

    def hermiticity_error(self):
        T = self.tensor()
        return float(np.max(np.abs(T - T.transpose(2, 3, 0, 1).conj())))

    def transposition_error(self):
        T = self.tensor()
        return float(np.max(np.abs(T - T.transpose(0, 3, 2, 1))))


def build_reduction_operator(kernel1, kernel2, m, k_grid, q_grid, denominator=None, cut_cell=True):
    """Reduction operator for a scattering detector followed by an absorbing one.

    :param kernel1: kernel of the scattering detector
    :param kernel2: kernel of the absorbing detector
    :param denominator: optional callable k -> D(k) replacing the quadrature of
        alpha2 * R'_1 (for instance an asymptotic closed form)
    """
    return ReductionOperator(kernel1, kernel2, m, k_grid, q_grid, denominator, cut_cell)


def _state_rows(state, m, x, t):
    """Rows F_t(k) = w sqrt(v) e^{ikx - i w t} u_i(k) for each factor of the state."""
    lam, vecs = state.factors()
    G = _propagators(state.grid, m, x, t)
    return lam, [G * vecs[:, j][None, :] for j in range(vecs.shape[1])]


def _reduced_numerators(state, S, x, t, m):
    check_grids_match(state.grid, S.k_grid)
    lam, rows = _state_rows(state, m, x, t)
    X = sum(l * S.contract(F) for l, F in zip(lam, rows))
    return X / (2 * np.pi)


def p1_star(state, S, x, m, tgrid):
    """Detection density at the scattering detector with the grid partial trace of S.

    This is the exact tau-marginal of ``p2_scatter`` on the same grids.
    """
    check_grids_match(state.grid, S.k_grid)
    Lg = S.partial_trace()
    t = tgrid.nodes
    lam, rows = _state_rows(state, m, x, t)
    vals = sum(l * np.real(np.einsum("tk,kj,tj->t", F, Lg, F.conj(), optimize=True))
               for l, F in zip(lam, rows))
    return SampledDensity.build((tgrid,), vals / (2 * np.pi), signed=True)


def p2_scatter(state, S, L2, x, r, m, tgrid, taugrid):
    """Joint density P2(t, tau) of detection at x (time t) and at x + r (time t + tau).

    The model's reduction operator is not positive, so the result is a
    signed density; its ``negative_mass`` reports the size of the effect.

    :param state: post-selected OneParticleState on the incoming grid
    :param L2: LocalizationOperator of the second detector on the outgoing grid, or None
    """
    if taugrid.start < 0:
        raise GridError("tau grid must be non-negative (the second detection follows the first)")
    check_resolution(S.q_grid, m, r, taugrid.start, taugrid.stop)
    check_resolution(S.k_grid, m, x, tgrid.start, tgrid.stop)
    X = _reduced_numerators(state, S, x, tgrid.nodes, m)
    if L2 is not None and not L2.maximum_localization:
        check_grids_match(L2.grid, S.q_grid)
        X = X * L2.matrix[None]
    G = _propagators(S.q_grid, m, r, taugrid.nodes)
    vals = np.real(np.einsum("sa,tab,sb->ts", G, X, G.conj(), optimize=True)) / (2 * np.pi)
    return SampledDensity.build((tgrid, taugrid), vals, signed=True)


def _p1_at(state, S, x, t, m):
    Lg = S.partial_trace()
    lam, rows = _state_rows(state, m, x, np.array([t]))
    val = sum(l * np.real(F[0] @ Lg @ F[0].conj()) for l, F in zip(lam, rows))
    return float(val) / (2 * np.pi)


def reduced_state(state, S, x, t, m):
    """Outgoing state rho^{(x,t)} after a detection at (x, t)."""
    check_resolution(S.k_grid, m, x, t)
    p1 = _p1_at(state, S, x, t, m)
    if not p1 > CONDITION_THRESHOLD:
        raise ConditioningError(f"detection density {p1:.3e} at t = {t} is too small to condition on")
    X = _reduced_numerators(state, S, x, np.array([float(t)]), m)[0] / p1
    return OneParticleState(S.q_grid, 0.5 * (X + X.conj().T))


def nonselective_state(state, S):
    """rho^{ns}(q, q') = int dk rho(k, k) sigma_k(q, q')."""
    check_grids_match(state.grid, S.k_grid)
    pk = state.grid.weights * state.diagonal()
    mat = sum(pk[i] * S.sigma(i) for i in range(S.k_grid.count))
    return OneParticleState(S.q_grid, np.asarray(mat, dtype=complex))


def conditional_density(p2, p1, t):
    """P(tau | t) = P2(t, tau) / P1(t) at the time node closest to ``t``."""
    i = p2.grids[0].index_of(t)
    j = p1.grid.index_of(t)
    if p1.grid != p2.grids[0]:
        raise GridError("P1 and P2 must share their first time grid")
    denom = p1.values[j]
    if not denom > CONDITION_THRESHOLD:
        raise ConditioningError(f"P1({t}) = {denom:.3e} is below the conditioning threshold")
    return SampledDensity.build((p2.grids[1],), p2.values[i] / denom, signed=p2.signed)


def conditional_density_direct(state_xt, L2, r, m, taugrid):
    """P(tau | t) from the reduced state and the second detector's POVM."""
    return p1_time(state_xt, L2, r, m, taugrid, signed=True)
