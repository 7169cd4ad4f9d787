"""Finite-dimensional correlation tensors, detector responses and classical hierarchies."""
from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeDensityError, NumericalError, ValidationError

HERMITIAN_TOL = 1e-12
NEGATIVE_TOL = 1e-14


@dataclass(frozen=True)
class HierarchyTensor:
    """Level-1 vector G_A and Hermitian level-2 matrix G_AB."""

    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        g1 = np.asarray(self.g1)
        g2 = np.asarray(self.g2)
        if g1.ndim != 1 or g2.shape != (g1.size, g1.size):
            raise ValidationError("G_A must be a vector and G_AB a matching square matrix")
        scale = max(np.max(np.abs(g2)), 1.0)
        if np.max(np.abs(g2 - g2.conj().T)) > HERMITIAN_TOL * scale:
            raise ValidationError("G_AB must be Hermitian")
        if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
            raise ValidationError("tensor entries must be finite")
        object.__setattr__(self, "g1", g1)
        object.__setattr__(self, "g2", g2)

    @property
    def dim(self):
        return self.g1.size

    def norm(self, level=2):
        """Hilbert-Schmidt norm of G_A (level 1) or G_AB (level 2)."""
        g = self.g1 if level == 1 else self.g2
        return float(np.sqrt(np.real(np.vdot(g, g))))

    @classmethod
    def rank_one(cls, g1, aggregate):
        """Tensor with G_AB = G_A G_B / (G_B D^B), which satisfies additivity."""
        g1 = np.asarray(g1)
        c = g1 @ aggregate
        if c == 0:
            raise ValidationError("G_A D^A vanishes")
        return cls(g1, np.outer(g1, g1) / c)


@dataclass(frozen=True)
class DetectorResponse:
    """Response vectors R^A(z), one row per outcome z."""

    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.asarray(self.vectors).ndim != 2:
            raise ValidationError("responses must be a (outcomes, dim) array")

    @property
    def aggregate(self):
        """D^A = sum_z R^A(z)."""
        return np.asarray(self.vectors).sum(axis=0)

    @property
    def outcomes(self):
        return np.asarray(self.vectors).shape[0]


def _check_nonnegative(raw):
    vals = np.real_if_close(raw, tol=1e6)
    if np.iscomplexobj(vals):
        raise NumericalError("contraction has a non-negligible imaginary part")
    scale = max(np.max(np.abs(vals)), 1.0)
    bad = np.argwhere(vals < -NEGATIVE_TOL * scale)
    if bad.size:
        listing = ", ".join(str(tuple(int(i) for i in b)) for b in bad[:10])
        raise NegativeDensityError(f"negative probabilities at outcomes {listing}")
    return np.maximum(vals, 0.0)


def probabilities_from_tensor(G, R, n):
    """Normalized P_1(z) = C1 G_A R^A(z) or P_2(z1, z2) = C2 G_AB R^A(z1) R^B(z2)."""
    vec = np.asarray(R.vectors)
    if vec.shape[1] != G.dim:
        raise ValidationError("response dimension does not match the tensor")
    if n == 1:
        raw = vec @ G.g1
    elif n == 2:
        raw = vec @ G.g2 @ vec.T
    else:
        raise ValidationError("only levels 1 and 2 are defined by the tensor")
    vals = _check_nonnegative(raw)
    total = vals.sum()
    if not total > 0:
        raise NumericalError("total probability vanishes")
    return vals / total


def kolmogorov_condition_check(G, R):
    """Antisymmetric norm ||G_[AB] D^B|| and cos(theta) between G_BA D^B and G_A."""
    d = R.aggregate
    v12 = G.g2 @ d
    v21 = G.g2.T @ d
    n1 = np.linalg.norm(G.g1)
    n21 = np.linalg.norm(v21)
    if n1 == 0 or n21 == 0:
        raise NumericalError("degenerate norm in the Kolmogorov condition")
    antisym = float(np.linalg.norm(0.5 * (v12 - v21)))
    cos = float(np.real(np.vdot(G.g1, v21)) / (n1 * n21))
    return antisym, cos


def negativity_witness(g2):
    """Smallest eigenvalue of a Hermitian G_AB."""
    return float(np.linalg.eigvalsh(np.asarray(g2))[0])


def synthetic_classical_hierarchy(rho, F, n):
    """Hierarchy P_j(z1..zj) = sum_xi rho(xi) F_z1(xi) ... F_zj(xi) for j = 1..n.

    :param rho: distribution over hidden states, shape (states,)
    :param F: response functions, shape (outcomes, states) shared by every
        measurement, or (n, outcomes, states) with one table per measurement
    :return: list [P_1, ..., P_n]
    """
    rho = np.asarray(rho, dtype=float)
    F = np.asarray(F, dtype=float)
    if np.any(rho < 0) or not np.isclose(rho.sum(), 1.0, atol=1e-12):
        raise ValidationError("rho must be a probability vector")
    if np.any(F < 0):
        raise ValidationError("response functions must be non-negative")
    tables = [F] * n if F.ndim == 2 else list(F)
    if len(tables) < n:
        raise ValidationError(f"need {n} response tables, got {len(tables)}")
    out = []
    current = rho[None, :] * tables[0]
    out.append(current.sum(axis=-1))
    for j in range(1, n):
        current = current[..., None, :] * tables[j].reshape((1,) * j + tables[j].shape)
        out.append(current.sum(axis=-1))
    return out


def _pair_diagonal(p):
    # P(z1, z1, z2, z2, ...) as a function of (z1, z2, ...)
    k = p.ndim // 2
    letters = string.ascii_lowercase[:k]
    return np.einsum("".join(c + c for c in letters) + "->" + letters, p)


def jensen_excess(p_prev, p_n):
    """max(0, P_{n-1}(z1, z3..)^2 - P_n(z1, z1, z3..)) over all outcome tuples."""
    p_n = np.asarray(p_n)
    diag = np.moveaxis(np.diagonal(p_n, axis1=0, axis2=1), -1, 0)
    return np.maximum(0.0, np.asarray(p_prev) ** 2 - diag)


def cauchy_schwarz_excess(p_n, p_2m, p_2n2m, m):
    """max(0, P_n - sqrt(P_2m(z1,z1,..,zm,zm) P_{2n-2m}(z_{m+1},z_{m+1},..))) over all tuples."""
    p_n = np.asarray(p_n)
    left = _pair_diagonal(np.asarray(p_2m))
    right = _pair_diagonal(np.asarray(p_2n2m))
    if left.ndim != m or left.ndim + right.ndim != p_n.ndim:
        raise ValidationError("level sizes are inconsistent with m")
    bound = np.sqrt(np.multiply.outer(left, right))
    return np.maximum(0.0, p_n - bound)


def q1_discrete(p_prev, p_n):
    return float(jensen_excess(p_prev, p_n).sum())


def q2_discrete(p_n, p_2m, p_2n2m, m):
    return float(cauchy_schwarz_excess(p_n, p_2m, p_2n2m, m).sum())


def q2_average(levels, n):
    """Average over m = 1..n-1 of Q_{n,m}; ``levels[j]`` holds P_{j+1}."""
    if n < 2 or 2 * n - 2 > len(levels):
        raise ValidationError(f"need levels up to {2 * n - 2} for n = {n}")
    vals = [q2_discrete(levels[n - 1], levels[2 * m - 1], levels[2 * n - 2 * m - 1], m)
            for m in range(1, n)]
    return float(np.mean(vals))
