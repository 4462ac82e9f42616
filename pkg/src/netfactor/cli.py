"""Command-line interface: generate, fit, evaluate, benchmark.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bench
from .evaluation import AucUndefinedError, auc, roc_points, score_dyads, write_roc_csv
from .netcore import GeneratorSpec, NetworkError, density, generate, load_edge_list, write_edge_list
from .varmath import FactorState, Link

log = logging.getLogger("netfactor")


class CliError(Exception):
    """Runtime failure reported to the user with exit status 1."""


# ---------------------------------------------------------------------------
# Factor files
# ---------------------------------------------------------------------------


def factor_header(H, full_cov=False):
    head = ["node"] + [f"mu_{h + 1}" for h in range(H)] + [f"sd_{h + 1}" for h in range(H)]
    if full_cov:
        head += [f"cov_{a + 1}_{b + 1}" for a in range(H) for b in range(a, H)]
    return head


def write_factors(state: FactorState, path, full_cov=False, labels=None):
    H = state.H
    iu = np.triu_indices(H)
    sd = np.sqrt(np.diagonal(state.Sigma, axis1=1, axis2=2))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(factor_header(H, full_cov))
        for i in range(state.n):
            vals = list(state.mu[i]) + list(sd[i])
            if full_cov:
                vals += list(state.Sigma[i][iu])
            node = labels[i] if labels else i
            w.writerow([node] + ["%.12g" % v for v in vals])
    os.replace(tmp, path)


def read_factors(path):
    """Returns (mu, Sigma or None, node column). Sigma is diagonal unless full_cov was written."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["node"]:
        raise CliError(f"{path}: not a factor file")
    head = rows[0]
    H = sum(1 for c in head if c.startswith("mu_"))
    full = len(head) == 1 + 2 * H + H * (H + 1) // 2
    if H == 0 or head != factor_header(H, full):
        raise CliError(f"{path}: malformed factor header")
    try:
        data = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(head) - 1:
        raise CliError(f"{path}: ragged rows")
    mu = data[:, :H]
    if full:
        Sigma = np.zeros((len(data), H, H))
        a, b = np.triu_indices(H)
        Sigma[:, a, b] = data[:, 2 * H:]
        Sigma[:, b, a] = data[:, 2 * H:]
    else:
        Sigma = np.einsum("nh,hk->nhk", data[:, H:2 * H] ** 2, np.eye(H))
    return mu, Sigma, [r[0] for r in rows[1:]]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args):
    spec = GeneratorSpec(args.scenario, args.n, seed=args.seed, s1_sd=args.s1_sd,
                         s1_dim=args.s1_dim, s3_within=args.s3_within,
                         s3_between=args.s3_between)
    net = generate(spec)
    write_edge_list(net, args.out)
    print(json.dumps({"n": net.n, "m": net.m, "density": density(net)}))


def _load(args):
    try:
        return load_edge_list(args.input, remap=args.remap, n=args.nodes)
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc.strerror}") from None


def cmd_fit(args):
    net, report = _load(args)
    res = bench.fit_network(
        net, args.algo, args.link, args.H, args.gamma, args.alpha, args.beta, args.sampling,
        args.seed, args.tol, args.max_iter, args.schedule, args.a0)
    write_factors(res.state, args.out, args.full_cov, report.labels or None)
    print(json.dumps({
        "algo": args.algo, "link": args.link, "n": net.n, "m": net.m,
        "iterations": res.iterations, "converged": res.converged,
        "elapsed_seconds": res.elapsed_seconds, "final_delta": res.final_delta,
    }))


def cmd_evaluate(args):
    net, _ = _load(args)
    mu, Sigma, _ = read_factors(args.factors)
    if len(mu) != net.n:
        raise CliError(f"factor file has {len(mu)} nodes but the network has {net.n}")
    state = FactorState(None, None, mu, Sigma, None)
    dss = score_dyads(net, state, Link.parse(args.link), args.dyads, seed=args.seed)
    print(f"{auc(dss):.4f}")
    if args.roc_out:
        write_roc_csv(roc_points(dss), args.roc_out)


def cmd_benchmark(args):
    cells = bench.build_grid(
        scenarios=args.scenarios, sizes=args.sizes, replicates=args.replicates,
        algos=args.algos, links=args.links, samplings=args.sampling, H_grid=args.H_grid,
        gamma_grid=args.gamma_grid, alpha=args.alpha, beta=args.beta, datasets=args.datasets,
        tol=args.tol, max_iter=args.max_iter, seed0=args.seed)

    def progress(k, total, rec):
        log.info("[%d/%d] %s n=%d %s/%s H=%d gamma=%g seed=%d: %.3fs auc=%.4f", k, total,
                 rec.name, rec.n, rec.algo, rec.link, rec.H, rec.gamma, rec.seed,
                 rec.elapsed_seconds, rec.auc)

    records = bench.run_grid(cells, parallel=args.parallel, progress=progress)
    bench.write_runs(records, args.out)
    summary_path = args.summary_out or str(Path(args.out).with_suffix("")) + "_summary.csv"
    bench.write_summary(bench.summarize(records), summary_path, contended=args.parallel)
    print(json.dumps({"runs": len(records), "failed": sum(math.isnan(r.elapsed_seconds)
                                                          for r in records),
                      "out": args.out, "summary": summary_path}))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _gamma(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("gamma must be positive (inf for exhaustive)")
    return v


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _csv_list(cast, choices=None):
    def parse(s):
        out = [cast(x) for x in s.split(",") if x]
        if not out:
            raise argparse.ArgumentTypeError("empty list")
        if choices and any(x not in choices for x in out):
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}")
        return out
    return parse


def _add_input(p):
    p.add_argument("--input", required=True, help="edge list, one 'i j' pair per line")
    p.add_argument("--remap", action="store_true",
                   help="relabel nodes densely in order of first appearance")
    p.add_argument("--nodes", type=_positive_int, default=None,
                   help="node count when trailing isolated nodes are absent from the file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="netfactor", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic network")
    g.add_argument("--scenario", required=True, choices=["s1", "s2", "s3"])
    g.add_argument("--n", required=True, type=_positive_int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--s1-sd", type=float, default=3.0)
    g.add_argument("--s1-dim", type=_positive_int, default=2)
    g.add_argument("--s3-within", type=float, default=0.6)
    g.add_argument("--s3-between", type=float, default=0.2)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit latent factors")
    _add_input(f)
    f.add_argument("--algo", choices=["cavi", "svilf"], default="svilf")
    f.add_argument("--link", choices=["logit", "probit"], default="logit")
    f.add_argument("--H", type=_positive_int, default=4)
    f.add_argument("--gamma", type=_gamma, default=2.0)
    f.add_argument("--alpha", type=float, default=1.0)
    f.add_argument("--beta", type=float, default=0.75)
    f.add_argument("--sampling", choices=["uniform", "adaptive"], default="uniform")
    f.add_argument("--schedule", choices=["gs", "jacobi"], default="gs",
                   help="gs: freshest values (sequential CAVI); jacobi: iteration snapshot")
    f.add_argument("--tol", type=float, default=1e-5)
    f.add_argument("--max-iter", type=_positive_int, default=None)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--a0", type=float, default=None,
                   help="prior mean for every coordinate (default: from network density)")
    f.add_argument("--out", required=True)
    f.add_argument("--full-cov", action="store_true",
                   help="append upper-triangle covariance columns")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="AUC of fitted factors")
    _add_input(e)
    e.add_argument("--factors", required=True)
    e.add_argument("--link", choices=["logit", "probit"], default="logit")
    e.add_argument("--dyads", choices=["all", "balanced"], default=None,
                   help="default: all up to 3000 nodes, balanced above")
    e.add_argument("--roc-out", default=None)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="run a factorial grid of fits")
    b.add_argument("--scenarios", type=_csv_list(str, ["s1", "s2", "s3"]),
                   default=["s1", "s2", "s3"])
    b.add_argument("--sizes", type=_csv_list(int), default=[100, 200, 500, 1000])
    b.add_argument("--datasets", nargs="*", default=[], help="extra edge-list files")
    b.add_argument("--replicates", type=_positive_int, default=10)
    b.add_argument("--algos", type=_csv_list(str, ["cavi", "svilf"]), default=["svilf"])
    b.add_argument("--links", type=_csv_list(str, ["logit", "probit"]), default=["logit"])
    b.add_argument("--sampling", type=_csv_list(str, ["uniform", "adaptive"]),
                   default=["uniform"])
    b.add_argument("--H-grid", type=_csv_list(int), default=[4])
    b.add_argument("--gamma-grid", type=_csv_list(_gamma), default=[2.0])
    b.add_argument("--alpha", type=float, default=1.0)
    b.add_argument("--beta", type=float, default=0.75)
    b.add_argument("--tol", type=float, default=1e-5)
    b.add_argument("--max-iter", type=_positive_int, default=None)
    b.add_argument("--seed", type=int, default=0, help="seed of the first replicate")
    b.add_argument("--out", required=True)
    b.add_argument("--summary-out", default=None)
    b.add_argument("--parallel", action="store_true")
    b.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit":
        if args.algo == "cavi" and args.sampling == "adaptive":
            parser.error("--sampling adaptive applies to svilf only")
        if not 0.5 < args.beta <= 1.0:
            parser.error("--beta must lie in (0.5, 1]")
        if not args.tol > 0:
            parser.error("--tol must be positive")
    try:
        args.func(args)
    except (CliError, NetworkError, AucUndefinedError, ArithmeticError, ValueError,
            OSError) as exc:
        print(f"netfactor: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
