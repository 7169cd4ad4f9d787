"""Estimator-style wrappers around the detection models.

Hyperparameters are set in ``__init__`` (so ``get_params``, ``set_params``
and ``clone`` work), ``fit`` tabulates states and operators, and
``predict`` evaluates densities at arbitrary times.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import MomentumGrid, gaussian_wavepacket, momentum_grid_for, omega, superpose, velocity
from .detectors import (
    ConstantAbsorption,
    ExponentialKernel,
    KallenLehmannKernel,
    PointlikeLorentzian,
    absorption_coefficient,
    localization_from_kernel,
)
from .errors import ValidationError
from .nonclassicality import MIReport, g_of_t1t2, q1_measure, q2_measure, violation_intervals
from .probability import (
    OneParticleState,
    TwoParticleSymmetricState,
    amplitude,
    build_reduction_operator,
    conditional_density,
    nonselective_state,
    p1_pair,
    p1_time,
    p1_values,
    p2_scatter,
    p2_time_symmetric,
    postselect_state,
)

KERNELS = {
    "exponential": ExponentialKernel,
    "kallen_lehmann": KallenLehmannKernel,
    "pointlike": PointlikeLorentzian,
    "constant": ConstantAbsorption,
}


def make_kernel(spec):
    """Build a kernel from a mapping such as ``{"kind": "pointlike", "B": 1, "tau": 5}``."""
    spec = dict(spec)
    kind = spec.pop("kind", "exponential")
    if kind not in KERNELS:
        raise ValidationError(f"unknown kernel kind '{kind}'; choose from {sorted(KERNELS)}")
    return KERNELS[kind](**spec)


def _times(X):
    t = np.asarray(X, dtype=float)
    return t.ravel() if t.ndim <= 1 else t[:, 0]


def arrival_window(x, p, sigma, m, separation=0.0, n_std=8.0):
    """Time window containing the passage of Gaussian packets through x."""
    v = velocity(p, m)
    w = omega(p, m)
    t_mid = x / v
    spread = sigma * np.hypot(1.0, t_mid * m * m / (2 * sigma**2 * w**3))
    return (x - separation - n_std * spread) / v, (x + n_std * spread) / v


class SingleArrivalModel(BaseEstimator):
    """Detection-time density of one Gaussian packet at a detector at x."""

    def __init__(self, mass=0.0, momentum=50.0, width=1.0, detector_position=20.0,
                 kernel=None, n_momentum=2048, momentum_std=8.0):
        self.mass = mass
        self.momentum = momentum
        self.width = width
        self.detector_position = detector_position
        self.kernel = kernel
        self.n_momentum = n_momentum
        self.momentum_std = momentum_std

    def fit(self, X=None, y=None):
        grid = momentum_grid_for(self.momentum, self.width, self.momentum_std, self.n_momentum)
        self.packet_ = gaussian_wavepacket(self.momentum, self.width, 0.0, grid)
        kernel = make_kernel(self.kernel or {"kind": "exponential"})
        self.kernel_ = kernel
        state = OneParticleState.from_wavepacket(self.packet_)
        self.state_ = postselect_state(state, absorption_coefficient(kernel, grid.nodes, self.mass))
        self.localization_ = localization_from_kernel(kernel, self.mass, grid)
        return self

    def default_window(self, n_std=8.0):
        return arrival_window(self.detector_position, self.momentum, self.width, self.mass, 0.0, n_std)

    def density(self, tgrid):
        check_is_fitted(self)
        return p1_time(self.state_, self.localization_, self.detector_position, self.mass, tgrid)

    def predict(self, X):
        """P1 at the times in X."""
        check_is_fitted(self)
        return p1_values(self.state_, self.localization_, self.detector_position, self.mass, _times(X))


class PairArrivalModel(BaseEstimator):
    """Two identical Gaussians displaced by ``separation``, detected at x in a symmetric state."""

    def __init__(self, mass=0.0, momentum=50.0, width=1.0, separation=4.0, detector_position=20.0,
                 n_momentum=2048, momentum_std=8.0):
        self.mass = mass
        self.momentum = momentum
        self.width = width
        self.separation = separation
        self.detector_position = detector_position
        self.n_momentum = n_momentum
        self.momentum_std = momentum_std

    def fit(self, X=None, y=None):
        grid = momentum_grid_for(self.momentum, self.width, self.momentum_std, self.n_momentum)
        phi1 = gaussian_wavepacket(self.momentum, self.width, 0.0, grid)
        phi2 = gaussian_wavepacket(self.momentum, self.width, self.separation, grid)
        self.state_ = TwoParticleSymmetricState(phi1, phi2)
        self.eps_ = self.state_.eps
        return self

    def default_window(self, n_std=8.0):
        return arrival_window(self.detector_position, self.momentum, self.width, self.mass,
                              self.separation, n_std)

    def amplitudes(self, X):
        check_is_fitted(self)
        return self.state_.amplitudes(self.detector_position, _times(X), self.mass)

    def predict(self, X):
        """Single-detection density P1 at the times in X."""
        a1, a2 = self.amplitudes(X)
        e = self.eps_
        return (np.abs(a1) ** 2 + np.abs(a2) ** 2 + 2 * np.real(np.conj(e) * a1 * np.conj(a2))) \
            / (2 * (1 + abs(e) ** 2))

    def p1(self, tgrid):
        check_is_fitted(self)
        return p1_pair(self.state_, self.detector_position, self.mass, tgrid)

    def p2(self, tgrid):
        check_is_fitted(self)
        x = self.detector_position
        return p2_time_symmetric(self.state_, x, x, self.mass, tgrid)

    def report(self, tgrid):
        """MIReport with w(t), G, Q1 and Q2 computed from the densities."""
        P1 = self.p1(tgrid)
        P2 = self.p2(tgrid)
        diag = P2.diagonal()
        w = P1.values**2 - diag
        a1, a2 = self.amplitudes(tgrid.nodes)
        G, _ = g_of_t1t2(a1, a2, eps=self.eps_)
        return MIReport(tgrid.nodes, w, G, q1_measure(P1.values, diag, tgrid),
                        q2_measure(P2.values, tgrid), violation_intervals(tgrid.nodes, w))


class ScatterChainModel(BaseEstimator):
    """Detection by scattering at x followed by absorption at x + r."""

    def __init__(self, mass=1.0, momentum=3.0, width=4.0, detector_position=0.0, second_distance=10.0,
                 state="gaussian", separation=0.0, first_kernel=None, second_kernel=None,
                 n_momentum=42, momentum_std=5.0, n_outgoing=128, q_min=0.6, q_margin=0.1):
        self.mass = mass
        self.momentum = momentum
        self.width = width
        self.detector_position = detector_position
        self.second_distance = second_distance
        self.state = state
        self.separation = separation
        self.first_kernel = first_kernel
        self.second_kernel = second_kernel
        self.n_momentum = n_momentum
        self.momentum_std = momentum_std
        self.n_outgoing = n_outgoing
        self.q_min = q_min
        self.q_margin = q_margin

    def _packet(self, grid):
        phi = gaussian_wavepacket(self.momentum, self.width, 0.0, grid)
        if self.state == "gaussian":
            return phi
        if self.state == "bimodal":
            return superpose([phi, gaussian_wavepacket(self.momentum, self.width, self.separation, grid)])
        raise ValidationError(f"unknown state '{self.state}'; use 'gaussian' or 'bimodal'")

    def fit(self, X=None, y=None):
        k_grid = momentum_grid_for(self.momentum, self.width, self.momentum_std, self.n_momentum)
        q_grid = MomentumGrid(self.q_min, k_grid.stop + self.q_margin, self.n_outgoing)
        k1 = make_kernel(self.first_kernel or {"kind": "pointlike", "B": 1.0, "tau": 5.0})
        k2 = make_kernel(self.second_kernel or {"kind": "exponential"})
        self.operator_ = build_reduction_operator(k1, k2, self.mass, k_grid, q_grid)
        self.packet_ = self._packet(k_grid)
        initial = OneParticleState.from_wavepacket(self.packet_)
        self.state_ = postselect_state(initial, self.operator_.absorption())
        self.localization2_ = localization_from_kernel(k2, self.mass, q_grid)
        outgoing = OneParticleState.from_wavepacket(self.packet_.on_grid(q_grid))
        self.outgoing_reference_ = postselect_state(outgoing, self.operator_.absorption_at(q_grid.nodes))
        return self

    def default_windows(self, n_std=6.0, tau_max=40.0):
        """(t window, tau window); the displaced component arrives earlier."""
        v = velocity(self.momentum, self.mass)
        t0 = self.detector_position / v
        spread = n_std * self.width / v
        displaced = self.separation / v if self.state == "bimodal" else 0.0
        return (t0 - spread - displaced, t0 + spread), (0.0, tau_max)

    def p2(self, tgrid, taugrid):
        check_is_fitted(self)
        L2 = None if self.localization2_.maximum_localization else self.localization2_
        return p2_scatter(self.state_, self.operator_, L2, self.detector_position, self.second_distance,
                          self.mass, tgrid, taugrid)

    def p1_star(self, tgrid):
        check_is_fitted(self)
        return p1_time(self.state_, self.operator_.localization_star(), self.detector_position, self.mass,
                       tgrid, signed=True)

    def tau_reference(self, taugrid):
        """Density at the second detector for the unscattered post-selected state."""
        check_is_fitted(self)
        L2 = None if self.localization2_.maximum_localization else self.localization2_
        return p1_time(self.outgoing_reference_, L2, self.second_distance, self.mass, taugrid, signed=True)

    def nonselective(self):
        check_is_fitted(self)
        return nonselective_state(self.state_, self.operator_)

    def conditional(self, p2, p1, t):
        return conditional_density(p2, p1, t)

    def predict(self, X):
        """P1 (with the modified localization) at the times in X."""
        check_is_fitted(self)
        return p1_values(self.state_, self.operator_.localization_star(), self.detector_position,
                         self.mass, _times(X))
