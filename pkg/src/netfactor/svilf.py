"""Stratified stochastic variational inference.

Each node update uses every neighbour plus a subsample of non-neighbours,
reweighted so the natural-gradient estimate stays unbiased, and takes a
Robbins-Monro step ``lambda <- lambda + rho_t * B``.

Randomness comes from counter-based streams keyed by ``(seed, t, i)`` for the
node samples and ``(seed, t)`` for the visiting permutation, so a Jacobi
sweep gives the same result in any visiting order.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .cavi import FitResult, init_state
from .netcore import SparseNetwork, complement_size
from .varmath import ConditioningError, FactorState, GaussianFactor, Link, ModelConfig, mean_sq_change

STREAM_NODE = 1
STREAM_PERM = 2
MAX_HALVINGS = 30

_MASK64 = (1 << 64) - 1


class SamplingError(ValueError):
    pass


class Sampling(enum.Enum):
    UNIFORM = "uniform"
    ADAPTIVE = "adaptive"


class Schedule(enum.Enum):
    GAUSS_SEIDEL = "gauss_seidel"
    JACOBI = "jacobi"


def _parse(enum_cls, value, aliases=()):
    if isinstance(value, enum_cls):
        return value
    value = dict(aliases).get(value, value)
    return enum_cls(value)


@dataclass(frozen=True)
class SvilfConfig:
    gamma: float = 2.0
    alpha: float = 1.0
    beta: float = 0.75
    sampling: Sampling = Sampling.UNIFORM
    schedule: Schedule = Schedule.GAUSS_SEIDEL
    tol: float = 1e-5
    max_iter: int = 500
    seed: int = 0
    rho_override: float | None = None
    min_zero_sample: int = 0
    exhaustive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sampling", _parse(Sampling, self.sampling))
        object.__setattr__(self, "schedule", _parse(
            Schedule, self.schedule, {"gs": "gauss_seidel", "gauss-seidel": "gauss_seidel"}))
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.5 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0.5, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.rho_override is not None and not 0.0 <= self.rho_override <= 1.0:
            raise ValueError("rho_override must lie in [0, 1]")
        if self.min_zero_sample < 0:
            raise ValueError("min_zero_sample must be non-negative")

    @property
    def is_exhaustive(self) -> bool:
        return self.exhaustive or math.isinf(self.gamma)


@dataclass(frozen=True, eq=False)
class StratumSample:
    node: int
    connected: np.ndarray
    sampled_zero: np.ndarray
    weight: float


def stratum_size(n_i0: int, n_i1: int, gamma: float) -> int:
    """min(n_i0, floor(gamma * n_i1)); an infinite gamma takes every non-neighbour."""
    if math.isinf(gamma):
        return n_i0
    return min(n_i0, math.floor(gamma * n_i1))


def step_size(t, alpha=1.0, beta=0.75) -> float:
    return (t + alpha) ** (-beta)


def node_stream(seed, t, i) -> np.ndarray:
    """Mutable stream state for node ``i`` at iteration ``t``."""
    key = K.stream_key(np.uint64(seed & _MASK64), STREAM_NODE, np.uint64(t), np.uint64(i))
    return np.array([key], dtype=np.uint64)


def _check_size(net, i, size):
    n_i0 = complement_size(net, i)
    if not 0 <= size <= n_i0:
        raise SamplingError(f"cannot draw {size} non-neighbours of node {i} (only {n_i0})")


def sample_uniform(net: SparseNetwork, i: int, size: int, rng) -> StratumSample:
    """Uniform sample without replacement from the non-neighbours of ``i``.

    ``rng`` is a stream from :func:`node_stream`. The sample is drawn as
    ranks in the implicit complement, so no complement is materialised.
    """
    _check_size(net, i, size)
    zero, r = K.sample_uniform(net.n, net.indptr, net.indices, i, size, rng)
    return StratumSample(i, net.neighbors_of(i), zero, r)


def sample_adaptive(net: SparseNetwork, i: int, size: int, state: FactorState, rng,
                    link=Link.LOGIT) -> StratumSample:
    """Non-neighbours drawn with probability proportional to predicted edge probability."""
    _check_size(net, i, size)
    zero, r, status = K.sample_adaptive(net.n, net.indptr, net.indices, i, size,
                                        state.mu, Link.parse(link).value, rng)
    if status:
        raise SamplingError(f"adaptive weights for node {i} sum to zero")
    return StratumSample(i, net.neighbors_of(i), zero, r)


def _target(i, sample, state, model, link):
    H = state.H
    t1 = np.empty(H)
    t2 = np.empty((H, H))
    K.node_target(i, sample.connected, sample.sampled_zero, float(sample.weight),
                  state.mu, state.S, model.a0, link.value, t1, t2)
    return t1, t2


def gradient_estimate_logit(net, i, sample: StratumSample, state: FactorState,
                            model: ModelConfig):
    """Unbiased estimate (B1, B2) of the natural gradient for node ``i``, logit link."""
    model = model.resolve(net)
    t1, t2 = _target(i, sample, state, model, Link.LOGIT)
    return t1 - state.lambda1[i], t2 - state.lambda2[i]


def gradient_estimate_probit(net, i, sample: StratumSample, state: FactorState,
                             model: ModelConfig):
    model = model.resolve(net)
    t1, t2 = _target(i, sample, state, model, Link.PROBIT)
    return t1 - state.lambda1[i], t2 - state.lambda2[i]


def gradient_estimate(net, i, sample, state, model):
    if Link.parse(model.link) is Link.LOGIT:
        return gradient_estimate_logit(net, i, sample, state, model)
    return gradient_estimate_probit(net, i, sample, state, model)


def svilf_update_node(i, t, sample: StratumSample, state: FactorState, config: SvilfConfig,
                      model: ModelConfig, net=None) -> GaussianFactor:
    """New factor for node ``i`` after one Robbins-Monro step (``state`` is not modified).

    If the step leaves -2*lambda2 indefinite, the step is halved up to
    ``MAX_HALVINGS`` times before giving up.
    """
    if net is not None:
        model = model.resolve(net)
    B1, B2 = _target(i, sample, state, model, Link.parse(model.link))
    B1 -= state.lambda1[i]
    B2 -= state.lambda2[i]
    rho = config.rho_override if config.rho_override is not None else step_size(
        t, config.alpha, config.beta)
    for _ in range(MAX_HALVINGS + 1):
        lam1 = state.lambda1[i] + rho * B1
        lam2 = state.lambda2[i] + rho * B2
        try:
            return GaussianFactor.from_natural(lam1, lam2, node=i)
        except ConditioningError:
            rho *= 0.5
    raise ConditioningError(f"node {i} stayed indefinite at iteration {t}", i, t)


def svilf_fit(net: SparseNetwork, model: ModelConfig, config: SvilfConfig = SvilfConfig(),
              init: FactorState | None = None, callback=None) -> FitResult:
    """Run SVILF until the mean squared parameter change drops below ``config.tol``.

    ``FitResult.pair_visits`` records, per iteration, the number of (i, j)
    terms entering the gradient estimates.
    """
    model = model.resolve(net)
    state = init.copy() if init is not None else init_state(net, model, config.seed)
    seed = np.uint64(config.seed & _MASK64)
    exhaustive = config.is_exhaustive
    gamma = 0.0 if exhaustive else float(config.gamma)
    adaptive = config.sampling is Sampling.ADAPTIVE
    jacobi = config.schedule is Schedule.JACOBI
    trace, visits = [], []
    converged = False
    start = time.perf_counter()
    for t in range(1, config.max_iter + 1):
        rho = config.rho_override if config.rho_override is not None else step_size(
            t, config.alpha, config.beta)
        perm_state = np.array([K.stream_key(seed, STREAM_PERM, np.uint64(t), np.uint64(0))],
                              dtype=np.uint64)
        order = K.permutation(net.n, perm_state)
        mu_prev = state.mu.copy()
        sig_prev = state.Sigma.copy()
        if jacobi:
            mu_read, S_read = mu_prev, state.S.copy()
        else:
            mu_read, S_read = state.mu, state.S
        count, _, bad, reason = K.svilf_sweep(
            net.n, net.indptr, net.indices, order,
            state.lambda1, state.lambda2, state.mu, state.Sigma, state.S,
            mu_read, S_read, model.a0, model.link.value, float(rho), seed, np.uint64(t),
            gamma, exhaustive, int(config.min_zero_sample), adaptive, STREAM_NODE, MAX_HALVINGS,
        )
        if bad >= 0:
            if reason == 1:
                raise SamplingError(f"adaptive weights for node {bad} sum to zero (iteration {t})")
            raise ConditioningError(f"node {bad} stayed indefinite at iteration {t}", bad, t)
        state.iteration = t
        visits.append(int(count))
        delta = mean_sq_change(mu_prev, sig_prev, state.mu, state.Sigma)
        trace.append(delta)
        if callback is not None:
            callback(state)
        if delta < config.tol:
            converged = True
            break
    return FitResult(state, len(trace), converged, trace, time.perf_counter() - start,
                     model=model, pair_visits=visits)
