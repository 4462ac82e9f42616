"""Sparse undirected networks, synthetic generators and edge-list I/O."""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


class NetworkError(ValueError):
    """Invalid network, generator spec or edge-list content."""


class EdgeListParseError(NetworkError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class SparseNetwork:
    """Simple undirected graph in compressed sparse row form.

    Row ``i`` of ``indices`` (``indices[indptr[i]:indptr[i+1]]``) is the
    strictly increasing neighbour list of node ``i``. Construction checks
    symmetry, absence of self-loops and ordering.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        indptr.flags.writeable = False
        indices.flags.writeable = False
        _check_csr(self.n, indptr, indices)

    @classmethod
    def from_edges(cls, n, u, v) -> "SparseNetwork":
        net, _, _ = _build(n, np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64))
        return net

    @classmethod
    def from_neighbors(cls, neighbors) -> "SparseNetwork":
        lists = [np.asarray(nb, dtype=np.int64) for nb in neighbors]
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        np.cumsum([len(nb) for nb in lists], out=indptr[1:])
        indices = np.concatenate(lists) if lists else np.empty(0, dtype=np.int64)
        return cls(len(lists), indptr, indices)

    @property
    def m(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def neighbors(self) -> list:
        return [self.neighbors_of(i) for i in range(self.n)]

    def neighbors_of(self, i) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def has_edge(self, i, j) -> bool:
        nb = self.neighbors_of(i)
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(u, v)`` with u < v, in ascending lexicographic order."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return rows[keep], self.indices[keep]

    def __eq__(self, other):
        if not isinstance(other, SparseNetwork):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"SparseNetwork(n={self.n}, m={self.m})"


def _check_csr(n, indptr, indices):
    if n < 0 or indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
        raise NetworkError("malformed row pointer")
    if np.any(np.diff(indptr) < 0):
        raise NetworkError("malformed row pointer")
    if len(indices) == 0:
        return
    if indices.min() < 0 or indices.max() >= n:
        raise NetworkError("neighbour index out of range")
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    if np.any(rows == indices):
        raise NetworkError("self-loop present")
    same_row = rows[1:] == rows[:-1]
    if np.any(same_row & (indices[1:] <= indices[:-1])):
        raise NetworkError("neighbour lists must be strictly increasing")
    fwd = rows * n + indices
    back = np.sort(indices * n + rows)
    if not np.array_equal(fwd, back):
        raise NetworkError("adjacency is not symmetric")


def _build(n, u, v):
    """Network from raw pairs; returns (net, duplicates, self_loops)."""
    if len(u) != len(v):
        raise NetworkError("edge arrays differ in length")
    if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
        raise NetworkError("edge endpoint out of range")
    loops = u == v
    n_loops = int(loops.sum())
    a = np.minimum(u, v)[~loops]
    b = np.maximum(u, v)[~loops]
    keys = np.unique(a * n + b)
    n_dupes = len(a) - len(keys)
    a, b = keys // n, keys % n
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return SparseNetwork(n, indptr, cols), n_dupes, n_loops


def density(net: SparseNetwork) -> float:
    if net.n < 2:
        raise NetworkError("density needs at least two nodes")
    return 2.0 * net.m / (net.n * (net.n - 1))


def complement_size(net: SparseNetwork, i: int) -> int:
    """Number of nodes not connected to ``i`` (excluding ``i``)."""
    return net.n - 1 - int(net.indptr[i + 1] - net.indptr[i])


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


class Scenario(enum.Enum):
    S1 = 1  # latent factor model
    S2 = 2  # latent distance model
    S3 = 3  # two-block stochastic block model

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise NetworkError(f"unknown scenario {value!r}") from None


@dataclass(frozen=True)
class GeneratorSpec:
    scenario: Scenario
    n: int
    seed: int = 0
    s1_sd: float = 3.0
    s1_dim: int = 2
    s3_within: float = 0.6
    s3_between: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))

    def validate(self):
        if self.n < 2:
            raise NetworkError("generator needs n >= 2")
        if not self.s1_sd > 0:
            raise NetworkError("s1_sd must be positive")
        if self.s1_dim < 1:
            raise NetworkError("s1_dim must be at least 1")
        for p in (self.s3_within, self.s3_between):
            if not 0.0 <= p <= 1.0:
                raise NetworkError("block probabilities must lie in [0, 1]")


def generate(spec: GeneratorSpec) -> SparseNetwork:
    """Draw a network from one of the three simulation scenarios.

    Each dyad ``i < j`` consumes one uniform keyed by ``(seed, i, j)`` and each
    latent coordinate one keyed by ``(seed, i, h)``, so the graph induced on the
    first ``k`` nodes does not depend on ``n``.
    """
    spec.validate()
    u, v = K.generate_edges(
        spec.scenario.value, spec.n, np.uint64(spec.seed & _MASK64),
        float(spec.s1_sd), int(spec.s1_dim),
        float(spec.s3_within), float(spec.s3_between),
    )
    net, _, _ = _build(spec.n, u, v)
    return net


# ---------------------------------------------------------------------------
# Edge lists
# ---------------------------------------------------------------------------


@dataclass
class ReadReport:
    lines: int = 0
    duplicates: int = 0
    self_loops: int = 0
    labels: list = field(default_factory=list)


def load_edge_list(path, remap=False, n=None) -> tuple[SparseNetwork, ReadReport]:
    """Parse a whitespace-separated edge list.

    With ``remap`` the labels are mapped to ``0..k-1`` in order of first
    appearance (``report.labels`` keeps the original label of each node);
    otherwise labels are node indices and ``n`` defaults to the largest
    index plus one.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if b"\x00" in raw:
        raise NetworkError(f"{path}: binary content is not an edge list")
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NetworkError(f"{path}: not UTF-8 text ({exc})") from None

    report = ReadReport()
    us, vs = [], []
    index = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise EdgeListParseError(path, lineno, f"expected 2 fields, got {len(parts)}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(path, lineno, f"non-integer token in {s!r}") from None
        if remap:
            a = index.setdefault(a, len(index))
            b = index.setdefault(b, len(index))
        elif a < 0 or b < 0:
            raise EdgeListParseError(path, lineno, "negative node index")
        us.append(a)
        vs.append(b)
        report.lines += 1

    if not us:
        raise NetworkError(f"{path}: no edges")
    u = np.array(us, dtype=np.int64)
    v = np.array(vs, dtype=np.int64)
    if remap:
        report.labels = list(index)
        size = len(index)
    else:
        size = int(max(u.max(), v.max())) + 1
    if n is not None:
        if n < size:
            raise NetworkError(f"{path}: n={n} is smaller than the labels require ({size})")
        size = n
    net, report.duplicates, report.self_loops = _build(size, u, v)
    if net.m == 0:
        raise NetworkError(f"{path}: no edges after dropping self-loops")
    if report.duplicates or report.self_loops:
        log.info("%s: dropped %d duplicate edges and %d self-loops",
                 path, report.duplicates, report.self_loops)
    return net, report


def read_edge_list(path, remap=False, n=None) -> SparseNetwork:
    return load_edge_list(path, remap=remap, n=n)[0]


def write_edge_list(net: SparseNetwork, path) -> None:
    u, v = net.edges()
    body = "".join(f"{a} {b}\n" for a, b in zip(u.tolist(), v.tolist()))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(body)
    os.replace(tmp, path)
