"""Detector kernels, localization operators and absorption coefficients.

A kernel R(k, w) is the Fourier-space response of an apparatus. Each
kernel exposes ``smooth`` (its analytic formula) and ``support`` (where that
formula applies); ``value`` is their product.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .core import omega
from .errors import ConstructionError, DivergenceError, DomainError, ValidationError

CONE_RTOL = 1e-12


class DetectorKernel(ABC):
    """Non-negative kernel R(k, w) vanishing for w < 0."""

    @abstractmethod
    def smooth(self, k, w):
        """Kernel formula without its support restriction."""

    def in_cone(self, k, w):
        """Timelike part of the support, |k| <= |w|, ignoring the sign of w."""
        k, w = np.broadcast_arrays(np.abs(k), np.abs(w))
        return k <= w * (1.0 + CONE_RTOL)

    def support(self, k, w):
        return (np.asarray(w) >= 0) & self.in_cone(k, w)

    def value(self, k, w):
        k = np.asarray(k, dtype=float)
        w = np.asarray(w, dtype=float)
        return np.where(self.support(k, w), self.smooth(k, w), 0.0)

    __call__ = value

    def on_shell(self, k, m):
        return self.value(k, omega(k, m))

    def scatter_interval(self, k, w, m):
        """Range [lo, hi] of p >= 0 on which R(k - p, w - omega_p) can be nonzero.

        :return: (lo, hi, nonempty) arrays broadcast from ``k`` and ``w``
        """
        return _cone_interval(k, w, m)

    @abstractmethod
    def scaled(self, c):
        """Kernel multiplied by a positive constant."""


def _cone_interval(k, w, m):
    # |k - p| + omega_p <= w: each side of p = k is solved in closed form
    k, w = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(w, dtype=float))
    d = w - k
    s = w + k
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = np.where(d > 0, (m * m - d * d) / (2 * d), np.inf)
        p2 = np.where(s > 0, (s * s - m * m) / (2 * s), -np.inf)
    if m == 0:
        p1 = np.where(d == 0, -np.inf, p1)
    lo = np.maximum(p1, 0.0)
    hi = p2
    nonempty = hi > lo
    return np.where(nonempty, lo, 0.0), np.where(nonempty, hi, 0.0), nonempty


@dataclass(frozen=True)
class ExponentialKernel(DetectorKernel):
    """R = A exp(-gamma1 |k| - gamma0 w) on the forward light cone."""

    A: float = 1.0
    gamma0: float = 0.0
    gamma1: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValidationError(f"A must be positive, got {self.A}")
        if self.gamma0 < 0 or self.gamma1 < 0:
            raise ValidationError("gamma0 and gamma1 must be non-negative")

    def smooth(self, k, w):
        return self.A * np.exp(-self.gamma1 * np.abs(k) - self.gamma0 * np.asarray(w))

    def scaled(self, c):
        return replace(self, A=self.A * c)


@dataclass(frozen=True)
class KallenLehmannKernel(DetectorKernel):
    """R = rho(w^2 - k^2) with a Gaussian spectral bump rho centered at mu0_sq.

    The spectral density is truncated to non-negative arguments.
    """

    mu0_sq: float = 1.0
    width: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.width > 0 or not self.scale > 0:
            raise ValidationError("spectral width and scale must be positive")

    def spectral(self, s):
        s = np.asarray(s, dtype=float)
        bump = self.scale * np.exp(-((s - self.mu0_sq) ** 2) / (2 * self.width**2))
        return np.where(s >= 0, bump, 0.0)

    def smooth(self, k, w):
        return self.spectral(np.asarray(w) ** 2 - np.asarray(k) ** 2)

    def scaled(self, c):
        return replace(self, scale=self.scale * c)

    def localization_closed_form(self, k, kp, m):
        """L(k, k') = rho((m^2 + w w' - k k')/2) / rho(m^2)."""
        k = np.asarray(k, dtype=float)
        kp = np.asarray(kp, dtype=float)
        ref = self.spectral(m * m)
        if ref <= 0:
            raise ConstructionError("spectral density vanishes on the mass shell")
        return self.spectral(0.5 * (m * m + omega(k, m) * omega(kp, m) - k * kp)) / ref


@dataclass(frozen=True)
class PointlikeLorentzian(DetectorKernel):
    """Point-like detector: R = B exp(-tau w) for w >= 0, independent of k."""

    B: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not self.B > 0 or not self.tau > 0:
            raise ValidationError("B and tau must be positive")

    def smooth(self, k, w):
        k, w = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(w, dtype=float))
        return self.B * np.exp(-self.tau * w)

    def in_cone(self, k, w):
        return np.ones(np.broadcast(np.asarray(k), np.asarray(w)).shape, dtype=bool)

    def scatter_interval(self, k, w, m):
        k, w = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(w, dtype=float))
        nonempty = w > m
        hi = np.sqrt(np.where(nonempty, w * w - m * m, 0.0))
        return np.zeros_like(hi), hi, nonempty

    def scaled(self, c):
        return replace(self, B=self.B * c)

    def scatter_prime_exact(self, w, m):
        """Closed form B N_{m tau}(w/m) of the scattered kernel."""
        if not m > 0:
            raise DomainError("closed form needs a positive mass")
        return self.B * np.vectorize(n_alpha)(m * self.tau, np.asarray(w, dtype=float) / m)

    def scatter_prime_asymptotic(self, k):
        """Large m*tau limit B/(tau k) of the scattered kernel on shell."""
        return self.B / (self.tau * np.asarray(k, dtype=float))


@dataclass(frozen=True)
class ConstantAbsorption(DetectorKernel):
    """R = 2 c |k| on the forward light cone, so that alpha(k) = c for all k."""

    c: float = 1.0

    def __post_init__(self):
        if self.c < 0:
            raise ValidationError("absorption constant must be non-negative")

    def smooth(self, k, w):
        k, w = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(w, dtype=float))
        return 2.0 * self.c * np.abs(k)

    def scaled(self, c):
        return replace(self, c=self.c * c)


def kernel_exponential(A, gamma0, gamma1):
    return ExponentialKernel(A, gamma0, gamma1)


def kernel_kallen_lehmann(mu0_sq, width, scale=1.0):
    return KallenLehmannKernel(mu0_sq, width, scale)


def kernel_pointlike(B, tau):
    return PointlikeLorentzian(B, tau)


def kernel_constant_absorption(c):
    return ConstantAbsorption(c)


@dataclass(frozen=True)
class LocalizationOperator:
    """Matrix L(k, k') on a momentum grid."""

    grid: object
    matrix: np.ndarray
    maximum_localization: bool = False

    def __post_init__(self):
        self.matrix.flags.writeable = False


def localization_from_kernel(kernel, m, grid):
    """L(k, k') = R(kbar, wbar) / sqrt(R(k, w_k) R(k', w_k')).

    ``kernel`` can be any callable R(k, w), including a ScatteredKernel.
    """
    k = grid.nodes
    w = omega(k, m)
    diag = np.asarray(kernel(k, w), dtype=float)
    if np.any(diag <= 0):
        bad = k[diag <= 0]
        raise ConstructionError(f"kernel vanishes on the mass shell at k = {bad[:5]}")
    kbar = 0.5 * (k[:, None] + k[None, :])
    wbar = 0.5 * (w[:, None] + w[None, :])
    L = np.asarray(kernel(kbar, wbar), dtype=float) / np.sqrt(np.outer(diag, diag))
    np.fill_diagonal(L, 1.0)
    L = 0.5 * (L + L.T)
    maximal = bool(np.max(np.abs(L - 1.0)) <= 1e-12)
    return LocalizationOperator(grid, L, maximal)


def absorption_coefficient(kernel, k, m):
    """alpha(k) = R(k, omega_k) / (2k)."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise DomainError("absorption coefficient needs positive momenta")
    out = np.asarray(kernel(k, omega(k, m)), dtype=float) / (2 * k)
    return out if out.ndim else float(out)


def pointlike_localization(k, kp):
    """L(k, k') = (k + k') / (2 sqrt(k k'))."""
    k = np.asarray(k, dtype=float)
    kp = np.asarray(kp, dtype=float)
    if np.any(k <= 0) or np.any(kp <= 0):
        raise DomainError("point-like localization needs positive momenta")
    out = (k + kp) / (2 * np.sqrt(k * kp))
    return out if out.ndim else float(out)


def n_alpha(alpha, x):
    """N_alpha(x) = int_0^{x-1} dy exp(-alpha y) / sqrt((x - y)^2 - 1).

    Evaluated after the substitution x - y = cosh(s), which removes the
    endpoint singularity.
    """
    if not x > 1:
        raise DomainError(f"N_alpha needs x > 1, got {x}")
    if alpha < 0:
        raise DomainError(f"N_alpha needs alpha >= 0, got {alpha}")
    top = np.arccosh(x)
    val, _ = quad(lambda s: np.exp(-alpha * (x - np.cosh(s))), 0.0, top,
                  epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


def _graded_rule(order=12, depth=24):
    # Gauss-Legendre panels on [0, 1], refined geometrically towards both ends
    inner = [2.0**-j for j in range(depth, 0, -1)]
    breaks = np.unique(np.concatenate([[0.0], inner, [0.5], 1 - np.array(inner[::-1]), [1.0]]))
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    nodes = (lo + 0.5 * (hi - lo) * (x + 1)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights


_RULE = _graded_rule()


class ScatteredKernel:
    """Kernel of a detector probed through scattering.

    R'(k, w) = int_{p > p_min} dp weight(p) / omega_p * R1(k - p, w - omega_p),
    where ``weight`` is the absorption coefficient of a second detector (or 1).
    Evaluation uses graded Gauss-Legendre quadrature on the exact support of
    the integrand.
    """

    def __init__(self, kernel, m, weight=None, p_min=0.0, chunk=4096):
        self.kernel = kernel
        self.m = float(m)
        self.weight = weight
        self.p_min = float(p_min)
        self.chunk = chunk

    def _integrand(self, k, w, p):
        f = self.kernel.smooth(k - p, w - omega(p, self.m)) / omega(p, self.m)
        if self.weight is not None:
            f = f * self.weight(p)
        return f

    def value(self, k, w):
        k, w = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(w, dtype=float))
        shape = k.shape
        k, w = k.ravel(), w.ravel()
        lo, hi, nonempty = self.kernel.scatter_interval(k, w, self.m)
        lo = np.maximum(lo, self.p_min)
        nonempty = nonempty & (hi > lo)
        out = np.zeros(k.shape)
        idx = np.flatnonzero(nonempty)
        if idx.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                edge = self._integrand(k[idx], w[idx], lo[idx])
            if not np.all(np.isfinite(edge)):
                raise DivergenceError("scattered-kernel integrand is not finite at its lower end; "
                                      "raise p_min above zero")
        t, tw = _RULE
        for start in range(0, idx.size, self.chunk):
            sl = idx[start:start + self.chunk]
            span = (hi[sl] - lo[sl])[:, None]
            p = lo[sl][:, None] + span * t
            vals = self._integrand(k[sl][:, None], w[sl][:, None], p)
            out[sl] = (vals * tw).sum(axis=1) * span[:, 0]
        out = out.reshape(shape)
        return out if out.ndim else float(out)

    __call__ = value

    def on_shell(self, k, m=None):
        return self.value(k, omega(k, self.m))


def kernel_scatter_prime(kernel, m, weight=None, p_min=0.0):
    """Scattered kernel R'_1 (optionally weighted by a second absorption coefficient)."""
    return ScatteredKernel(kernel, m, weight=weight, p_min=p_min)
