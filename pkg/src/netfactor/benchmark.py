"""Benchmark grid: repeated fits with wall time, peak RSS and AUC per run."""

from __future__ import annotations

import csv
import ctypes
import ctypes.util
import gc
import itertools
import logging
import math
import resource
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .cavi import CaviConfig, cavi_fit
from .evaluation import auc, score_dyads
from .netcore import GeneratorSpec, generate, read_edge_list
from .svilf import SvilfConfig, svilf_fit
from .varmath import ModelConfig

log = logging.getLogger(__name__)

RUN_FIELDS = ("name,n,m,algo,link,sampling,H,gamma,alpha,beta,seed,iterations,converged,"
              "elapsed_seconds,peak_rss_bytes,auc").split(",")
CELL_KEYS = ("name", "n", "algo", "link", "sampling", "H", "gamma", "alpha", "beta")


@dataclass
class RunRecord:
    name: str
    n: int
    m: int
    algo: str
    link: str
    sampling: str
    H: int
    gamma: float
    alpha: float
    beta: float
    seed: int
    iterations: int
    converged: bool
    elapsed_seconds: float
    peak_rss_bytes: int
    auc: float


assert tuple(f.name for f in fields(RunRecord)) == tuple(RUN_FIELDS)


# ---------------------------------------------------------------------------
# Memory probes
# ---------------------------------------------------------------------------

_PROC_STATUS = Path("/proc/self/status")
_CLEAR_REFS = Path("/proc/self/clear_refs")


def _status_kb(key):
    try:
        for line in _PROC_STATUS.read_text().splitlines():
            if line.startswith(key + ":"):
                return int(line.split()[1])
    except OSError:
        pass
    return None


def current_rss() -> int:
    kb = _status_kb("VmRSS")
    return 0 if kb is None else kb * 1024


def _release_free_heap():
    """Hand freed heap pages back to the OS so reuse does not hide new allocations."""
    gc.collect()
    try:
        ctypes.CDLL(ctypes.util.find_library("c")).malloc_trim(0)
    except (OSError, AttributeError, TypeError):
        pass


def reset_peak_rss() -> bool:
    """Reset the kernel's RSS high-water mark; False where unsupported."""
    try:
        _CLEAR_REFS.write_text("5")
        return True
    except OSError:
        return False


def peak_rss() -> int:
    kb = _status_kb("VmHWM")
    if kb is None:
        # ru_maxrss is in KiB on Linux and cannot be reset
        kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return kb * 1024


def measure(fn, *args, **kwargs):
    """Run ``fn`` and return (result, seconds, peak_rss_bytes, rss_before_bytes)."""
    _release_free_heap()
    reset_peak_rss()
    before = current_rss()
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    elapsed = time.perf_counter() - start
    return out, elapsed, peak_rss(), before


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    name: str
    n: int
    algo: str
    link: str
    sampling: str
    H: int
    gamma: float
    alpha: float
    beta: float
    seed: int
    source: str | None = None  # edge-list path for named datasets
    tol: float = 1e-5
    max_iter: int | None = None


def fit_network(net, algo, link, H, gamma=2.0, alpha=1.0, beta=0.75, sampling="uniform",
                seed=0, tol=1e-5, max_iter=None, schedule="gauss_seidel", a0=None):
    model = ModelConfig(H, a0=a0, link=link)
    if algo == "cavi":
        cfg = CaviConfig(tol=tol, max_iter=max_iter or 1000, seed=seed,
                         schedule="jacobi" if schedule == "jacobi" else "sequential")
        return cavi_fit(net, model, cfg)
    if algo == "svilf":
        cfg = SvilfConfig(gamma=gamma, alpha=alpha, beta=beta, sampling=sampling,
                          schedule=schedule, tol=tol, max_iter=max_iter or 500, seed=seed)
        return svilf_fit(net, model, cfg)
    raise ValueError(f"unknown algorithm {algo!r}")


def _network_for(cell: Cell):
    if cell.source is not None:
        return read_edge_list(cell.source)
    return generate(GeneratorSpec(cell.name, cell.n, seed=cell.seed))


def run_cell(cell: Cell) -> RunRecord:
    net = _network_for(cell)
    rec = RunRecord(cell.name, net.n, net.m, cell.algo, cell.link,
                    cell.sampling if cell.algo == "svilf" else "none", cell.H, cell.gamma,
                    cell.alpha, cell.beta, cell.seed, 0, False, math.nan, 0, math.nan)
    try:
        res, elapsed, peak, _ = measure(
            fit_network, net, cell.algo, cell.link, cell.H, cell.gamma, cell.alpha, cell.beta,
            cell.sampling, cell.seed, cell.tol, cell.max_iter)
    except Exception as exc:  # record and keep the grid going
        log.warning("run %s failed: %s", cell, exc)
        rec.peak_rss_bytes = peak_rss()
        return rec
    rec.iterations = res.iterations
    rec.converged = res.converged
    rec.elapsed_seconds = elapsed
    rec.peak_rss_bytes = peak
    try:
        rec.auc = auc(score_dyads(net, res.state, res.model.link, seed=cell.seed))
    except ValueError as exc:
        log.warning("AUC undefined for %s: %s", cell, exc)
    return rec


def build_grid(scenarios=("s1", "s2", "s3"), sizes=(100, 200, 500, 1000), replicates=10,
               algos=("svilf",), links=("logit",), samplings=("uniform",), H_grid=(4,),
               gamma_grid=(2.0,), alpha=1.0, beta=0.75, datasets=(), tol=1e-5,
               max_iter=None, seed0=0) -> list[Cell]:
    """Full factorial grid; replicate ``r`` uses seed ``seed0 + r`` for data and fit."""
    cells = []
    sources = [(s, n, None) for s in scenarios for n in sizes]
    sources += [(Path(p).stem, 0, str(p)) for p in datasets]
    for (name, n, src), algo, link, H, r in itertools.product(
            sources, algos, links, H_grid, range(replicates)):
        samplings_here = samplings if algo == "svilf" else samplings[:1]
        gammas_here = gamma_grid if algo == "svilf" else gamma_grid[:1]
        for sampling, gamma in itertools.product(samplings_here, gammas_here):
            cells.append(Cell(name, n, algo, link, sampling, H, gamma, alpha, beta,
                              seed0 + r, src, tol, max_iter))
    return cells


def run_grid(cells, parallel=False, workers=None, progress=None) -> list[RunRecord]:
    if not parallel:
        out = []
        for k, cell in enumerate(cells):
            out.append(run_cell(cell))
            if progress:
                progress(k + 1, len(cells), out[-1])
        return out
    log.warning("parallel benchmark: timings and RSS are contended")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, cells))


def write_runs(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_FIELDS)
        for r in records:
            row = asdict(r)
            row["converged"] = "true" if r.converged else "false"
            w.writerow([row[k] for k in RUN_FIELDS])


def read_runs(path) -> list[RunRecord]:
    casts = {f.name: f.type for f in fields(RunRecord)}
    conv = {"int": int, "float": float, "str": str}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for k, v in row.items():
                if casts[k] == "bool":
                    vals[k] = v == "true"
                else:
                    vals[k] = conv[casts[k]](v)
            out.append(RunRecord(**vals))
    return out


def _mean_sd(xs):
    xs = [x for x in xs if not math.isnan(x)]
    if not xs:
        return math.nan, math.nan
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def summarize(records) -> list[dict]:
    """Mean and standard deviation per grid cell (all keys except seed)."""
    groups = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, k) for k in CELL_KEYS), []).append(r)
    rows = []
    for key, rs in groups.items():
        row = dict(zip(CELL_KEYS, key))
        row["runs"] = len(rs)
        row["converged"] = sum(r.converged for r in rs)
        for metric in ("elapsed_seconds", "peak_rss_bytes", "auc", "iterations"):
            row[f"{metric}_mean"], row[f"{metric}_sd"] = _mean_sd(
                [float(getattr(r, metric)) for r in rs])
        rows.append(row)
    return rows


def write_summary(rows, path, contended=False):
    if not rows:
        Path(path).write_text("")
        return
    header = list(rows[0]) + ["contended"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, header, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "contended": "true" if contended else "false"})
