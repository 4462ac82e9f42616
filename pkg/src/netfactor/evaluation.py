"""Edge-probability prediction, AUC and ROC curves."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .netcore import SparseNetwork
from .varmath import FactorState, Link, link_inverse

ALL_DYADS_LIMIT = 3000  # default switch from all dyads to balanced (in nodes)
DEFAULT_CAP = 10_000_000  # max dyads enumerated in ``all`` mode


class AucUndefinedError(ValueError):
    """AUC needs at least one positive and one negative label."""


class DyadMode(enum.Enum):
    ALL = "all"
    BALANCED = "balanced"


@dataclass(frozen=True, eq=False)
class DyadScoreSet:
    dyads: np.ndarray  # (k, 2), i < j
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        k = len(self.scores)
        if len(self.labels) != k or len(self.dyads) != k:
            raise ValueError("dyads, scores and labels differ in length")


def predict_prob(state: FactorState, i, j, link=Link.LOGIT) -> float:
    if i == j:
        raise ValueError("no self-dyads in the model")
    return float(link_inverse(state.mu[i] @ state.mu[j], link))


def predict_dyads(mu, dyads, link=Link.LOGIT) -> np.ndarray:
    dyads = np.asarray(dyads)
    eta = np.einsum("kh,kh->k", mu[dyads[:, 0]], mu[dyads[:, 1]])
    return link_inverse(eta, link)


def edge_labels(net: SparseNetwork, dyads) -> np.ndarray:
    dyads = np.asarray(dyads, dtype=np.int64)
    u, v = net.edges()
    keys = u * net.n + v
    q = np.minimum(dyads[:, 0], dyads[:, 1]) * net.n + np.maximum(dyads[:, 0], dyads[:, 1])
    if len(keys) == 0:
        return np.zeros(len(q), dtype=bool)
    pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
    return keys[pos] == q


def select_dyads(net: SparseNetwork, mode="all", cap=DEFAULT_CAP, seed=0) -> np.ndarray:
    """Evaluation dyads as a (k, 2) array with i < j.

    ``all`` enumerates the upper triangle; ``balanced`` takes every edge and an
    equal number of distinct non-edges drawn uniformly.
    """
    mode = DyadMode(mode.value if isinstance(mode, DyadMode) else mode)
    n = net.n
    if mode is DyadMode.ALL:
        total = n * (n - 1) // 2
        if total > cap:
            raise ValueError(f"{total} dyads exceed cap {cap}; use balanced mode")
        iu, ju = np.triu_indices(n, 1)
        return np.column_stack([iu, ju]).astype(np.int64)

    u, v = net.edges()
    want = min(net.m, n * (n - 1) // 2 - net.m)
    edge_keys = u * n + v
    rng = np.random.default_rng(seed)
    chosen = np.empty(0, dtype=np.int64)
    while len(chosen) < want:
        batch = 2 * (want - len(chosen)) + 16
        a = rng.integers(0, n, batch)
        b = rng.integers(0, n, batch)
        keep = a != b
        keys = np.minimum(a, b)[keep] * n + np.maximum(a, b)[keep]
        keys = keys[~np.isin(keys, edge_keys)]
        # first occurrence order keeps the draw reproducible
        merged = np.concatenate([chosen, keys])
        _, first = np.unique(merged, return_index=True)
        chosen = merged[np.sort(first)][:want]
    neg = np.column_stack([chosen // n, chosen % n])
    pos = np.column_stack([u, v])
    return np.concatenate([pos, neg]).astype(np.int64)


def score_dyads(net, state: FactorState, link=Link.LOGIT, mode=None, cap=DEFAULT_CAP,
                seed=0) -> DyadScoreSet:
    if mode is None:
        mode = "all" if net.n <= ALL_DYADS_LIMIT else "balanced"
    dyads = select_dyads(net, mode, cap, seed)
    return DyadScoreSet(dyads, predict_dyads(state.mu, dyads, link), edge_labels(net, dyads))


def _grouped_counts(scores, labels):
    """Positive and negative counts per distinct score, scores ascending."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    uniq, inv = np.unique(scores, return_inverse=True)
    pos = np.bincount(inv, weights=labels, minlength=len(uniq)).astype(np.int64)
    tot = np.bincount(inv, minlength=len(uniq)).astype(np.int64)
    return uniq, pos, tot - pos


def auc_fraction(scores, labels) -> Fraction:
    """Exact Mann-Whitney AUC; ties earn half credit."""
    _, pos, neg = _grouped_counts(scores, labels)
    P, N = int(pos.sum()), int(neg.sum())
    if P == 0 or N == 0:
        raise AucUndefinedError("AUC is undefined without both positive and negative labels")
    below = np.concatenate([[0], np.cumsum(neg)[:-1]])
    twice_wins = 2 * int(np.dot(pos, below)) + int(np.dot(pos, neg))
    return Fraction(twice_wins, 2 * P * N)


def auc(dss: DyadScoreSet | None = None, *, scores=None, labels=None) -> float:
    if dss is not None:
        scores, labels = dss.scores, dss.labels
    return float(auc_fraction(scores, labels))


def roc_points(dss: DyadScoreSet | None = None, *, scores=None, labels=None) -> np.ndarray:
    """Stepwise ROC as a (k, 2) array of (fpr, tpr), from (0, 0) to (1, 1)."""
    if dss is not None:
        scores, labels = dss.scores, dss.labels
    _, pos, neg = _grouped_counts(scores, labels)
    P, N = pos.sum(), neg.sum()
    if P == 0 or N == 0:
        raise AucUndefinedError("ROC is undefined without both positive and negative labels")
    tpr = np.concatenate([[0.0], np.cumsum(pos[::-1]) / P])
    fpr = np.concatenate([[0.0], np.cumsum(neg[::-1]) / N])
    return np.column_stack([fpr, tpr])


def write_roc_csv(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for f, t in points:
            w.writerow([f"{f:.6f}", f"{t:.6f}"])
