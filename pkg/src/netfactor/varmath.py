"""Link functions, augmentation moments and Gaussian natural-parameter algebra."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import vectorize
from scipy import special

from . import _kernels as K
from .netcore import SparseNetwork, density


class Link(enum.Enum):
    LOGIT = K.LOGIT
    PROBIT = K.PROBIT

    @classmethod
    def parse(cls, value) -> "Link":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValueError(f"unknown link {value!r}") from None


class ConditioningError(ArithmeticError):
    """A precision matrix -2*lambda2 is not symmetric positive definite."""

    def __init__(self, msg, node=None, iteration=None):
        super().__init__(msg)
        self.node = node
        self.iteration = iteration


@dataclass(frozen=True)
class ModelConfig:
    H: int = 4
    a0: np.ndarray | None = None
    link: Link = Link.LOGIT

    def __post_init__(self):
        object.__setattr__(self, "link", Link.parse(self.link))
        if self.H < 1:
            raise ValueError("H must be at least 1")
        if self.a0 is not None:
            a0 = np.broadcast_to(np.asarray(self.a0, dtype=float), (self.H,)).copy()
            if not np.all(np.isfinite(a0)):
                raise ValueError("a0 must be finite")
            object.__setattr__(self, "a0", a0)

    def resolve(self, net: SparseNetwork) -> "ModelConfig":
        """Same config with ``a0`` filled from the network density if unset."""
        if self.a0 is not None:
            return self
        return ModelConfig(self.H, default_prior_mean(net, self), self.link)


# ---------------------------------------------------------------------------
# Scalar maps
# ---------------------------------------------------------------------------


def link_inverse(x, link=Link.LOGIT):
    """Edge probability for linear predictor ``x``."""
    if Link.parse(link) is Link.LOGIT:
        return special.expit(x)
    return special.ndtr(x)


def link_forward(p, link=Link.LOGIT):
    if Link.parse(link) is Link.LOGIT:
        return special.logit(p)
    return special.ndtri(p)


_pg_mean = vectorize(["float64(float64)"], cache=True)(K.pg_mean.py_func)
_mills = vectorize(["float64(float64)"], cache=True)(K.mills.py_func)


def pg_mean(xi):
    """E[z] for z ~ PG(1, xi), i.e. tanh(xi/2) / (2 xi), with value 1/4 at 0."""
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0) or np.any(np.isnan(xi_arr)):
        raise ValueError("pg_mean needs xi >= 0")
    out = _pg_mean(xi_arr)
    return float(out) if np.ndim(out) == 0 else out


def mills_ratio(x):
    """phi(x) / Phi(x); stable far into the left tail."""
    out = _mills(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def tn_mean(gamma, y):
    """Mean of N(gamma, 1) truncated to the half-line selected by ``y``.

    y = 1 keeps (0, inf), y = 0 keeps (-inf, 0).
    """
    g = np.asarray(gamma, dtype=float)
    s = 2.0 * np.asarray(y, dtype=float) - 1.0
    out = g + s * _mills(s * g)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Gaussian factors
# ---------------------------------------------------------------------------


def natural_to_moments(lambda1, lambda2, node=None):
    """(mu, Sigma, S) from natural parameters via a Cholesky solve."""
    lambda1 = np.ascontiguousarray(lambda1, dtype=float)
    lambda2 = np.ascontiguousarray(lambda2, dtype=float)
    H = lambda1.shape[0]
    mu = np.empty(H)
    Sigma = np.empty((H, H))
    S = np.empty((H, H))
    if not np.allclose(lambda2, lambda2.T, rtol=1e-10, atol=1e-12):
        raise ConditioningError(_where("lambda2 is not symmetric", node), node)
    if not K.moments_into(lambda1, lambda2, mu, Sigma, S, np.empty((H, H))):
        raise ConditioningError(_where("-2*lambda2 is not positive definite", node), node)
    return mu, Sigma, S


def moments_to_natural(mu, Sigma):
    P = np.linalg.inv(Sigma)
    P = 0.5 * (P + P.T)
    return P @ mu, -0.5 * P


def _where(msg, node):
    return msg if node is None else f"{msg} (node {node})"


def xi_pair(S_i, S_j) -> float:
    """sqrt(vec(S_i) . vec(S_j)) = sqrt(trace(S_i S_j))."""
    v = float(np.vdot(S_i, S_j))
    if v < 0:
        raise ArithmeticError("negative second-moment inner product")
    return float(np.sqrt(v))


def psi_pair(mu_i, mu_j) -> float:
    mu_i, mu_j = np.asarray(mu_i), np.asarray(mu_j)
    if mu_i.shape != mu_j.shape:
        raise ValueError("mean vectors differ in dimension")
    return float(mu_i @ mu_j)


def default_prior_mean(net: SparseNetwork, config: ModelConfig) -> np.ndarray:
    """Constant vector g(density) centring factors on the observed sparsity."""
    rho = density(net)
    if not 0.0 < rho < 1.0:
        raise ValueError(f"network density is {rho}; pass an explicit a0")
    return np.full(config.H, float(link_forward(rho, config.link)))


@dataclass(frozen=True, eq=False)
class GaussianFactor:
    lambda1: np.ndarray
    lambda2: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    S: np.ndarray

    @classmethod
    def from_natural(cls, lambda1, lambda2, node=None) -> "GaussianFactor":
        mu, Sigma, S = natural_to_moments(lambda1, lambda2, node)
        return cls(np.array(lambda1, dtype=float), np.array(lambda2, dtype=float), mu, Sigma, S)


class FactorState:
    """Mean-field Gaussian factors for all nodes, stored as stacked arrays.

    ``lambda1`` and ``mu`` are (n, H); ``lambda2``, ``Sigma`` and ``S`` are
    (n, H, H). ``factor(i)`` returns a detached per-node view.
    """

    def __init__(self, lambda1, lambda2, mu, Sigma, S, iteration=0):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.mu = mu
        self.Sigma = Sigma
        self.S = S
        self.iteration = iteration

    @classmethod
    def from_natural(cls, lambda1, lambda2, iteration=0) -> "FactorState":
        lambda1 = np.ascontiguousarray(lambda1, dtype=float)
        lambda2 = np.ascontiguousarray(lambda2, dtype=float)
        n, H = lambda1.shape
        mu = np.empty((n, H))
        Sigma = np.empty((n, H, H))
        S = np.empty((n, H, H))
        bad = K.all_moments(lambda1, lambda2, mu, Sigma, S)
        if bad >= 0:
            raise ConditioningError(_where("-2*lambda2 is not positive definite", bad), bad)
        return cls(lambda1, lambda2, mu, Sigma, S, iteration)

    @classmethod
    def from_moments(cls, mu, Sigma, iteration=0) -> "FactorState":
        mu = np.asarray(mu, dtype=float)
        P = np.linalg.inv(Sigma)
        P = 0.5 * (P + np.swapaxes(P, 1, 2))
        return cls.from_natural(np.einsum("nab,nb->na", P, mu), -0.5 * P, iteration)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def H(self) -> int:
        return self.mu.shape[1]

    def __len__(self):
        return self.n

    def factor(self, i) -> GaussianFactor:
        return GaussianFactor(self.lambda1[i].copy(), self.lambda2[i].copy(),
                              self.mu[i].copy(), self.Sigma[i].copy(), self.S[i].copy())

    @property
    def factors(self) -> list:
        return [self.factor(i) for i in range(self.n)]

    def copy(self) -> "FactorState":
        return FactorState(self.lambda1.copy(), self.lambda2.copy(), self.mu.copy(),
                           self.Sigma.copy(), self.S.copy(), self.iteration)

    def validate(self):
        # LinAlgError if any precision or second-moment matrix is not SPD
        np.linalg.cholesky(-2.0 * self.lambda2)
        np.linalg.cholesky(self.S)


def mean_sq_change(mu_prev, Sigma_prev, mu, Sigma) -> float:
    """Mean squared difference over all (mu, vec Sigma) entries."""
    total = np.sum((mu - mu_prev) ** 2) + np.sum((Sigma - Sigma_prev) ** 2)
    return float(total / (mu.size + Sigma.size))
