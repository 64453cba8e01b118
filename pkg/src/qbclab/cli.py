"""Command-line entry point ``qbclab``.

Each subcommand writes ``report.json`` (canonical JSON with versions, seeds, caps
and wall-clock) and a plot-ready CSV into ``--out``. CSV content depends only on
the inputs and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from qbclab import __version__
from qbclab.channels import build_net, depolarizing_family, verify_net
from qbclab.codesim import (
    LayoutPolicy,
    bernoulli_diagonal_sampler,
    covering_check,
    run_universal_experiment,
)
from qbclab.errors import ExperimentError, PartialNetError, QbclabError
from qbclab.linalg import dim_cap
from qbclab.regions import OptimizerConfig, optimize_region, region_for_inputs
from qbclab.specs import SpecError, canonical_dumps, dump_compound, parse_specs

MAX_SEED = 2 ** 64 - 1


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _header(args, command: str) -> dict:
    return {
        "command": command,
        "versions": {"qbclab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "seed": args.seed,
        "caps": {"dim_cap": dim_cap()},
    }


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_region(args, mode: str) -> dict:
    compound, inp = parse_specs(args.channels, args.input_dist)
    if inp is not None:
        region = region_for_inputs(compound, [inp], mode)
        weights = [None]
    else:
        cfg = OptimizerConfig(seed=args.seed, restarts=args.restarts, iterations=args.iterations,
                              weights=tuple(_float_list(args.weights)))
        sizes = tuple(_int_list(args.sizes)) if args.sizes else None
        region = optimize_region(compound, sizes, args.l, cfg, mode)
        weights = region.weights
    rows = []
    for w, c in zip(weights, region.corners):
        att = ";".join(f"{k}={v}" for k, v in sorted(c.attaining.items()))
        rows.append(["" if w is None else w, c.r_pub, c.r_c, att, region.slack])
    pub = "r0" if mode == "bcc" else "r1"
    _write(args.out, "region.csv", csv_text(["weight", pub, "r_c", "attaining", "slack"], rows))
    return {
        "mode": mode,
        "frontier": region.frontier,
        "slack": region.slack,
        "corners": [{"weight": w, "r_pub": c.r_pub, "r_c": c.r_c, "attaining": c.attaining}
                    for w, c in zip(weights, region.corners)],
        "inputs": [i.to_dict() for i in region.inputs],
        "converged": region.converged,
    }


def _layout_policy(args) -> LayoutPolicy:
    spec = args.layout
    if spec == "auto":
        return LayoutPolicy(margin=args.margin, delta=args.delta)
    if spec.startswith("rate:"):
        r0, rc, rl = _float_list(spec[5:])

        def sizes(n):
            return (max(1, int(np.floor(2 ** (n * r0) + 1e-9))), max(1, int(np.floor(2 ** (n * rc) + 1e-9))),
                    max(1, int(np.ceil(2 ** (n * rl) - 1e-9))))

        return LayoutPolicy(margin=args.margin, delta=args.delta, fixed=sizes)
    m0, j, l = _int_list(spec)
    return LayoutPolicy(margin=args.margin, delta=args.delta, fixed=lambda n: (m0, j, l))


def cmd_simulate(args) -> dict:
    compound, inp = parse_specs(args.channels, args.input_dist)
    if inp is None:
        raise SpecError("simulate requires --input-dist")
    policy = _layout_policy(args)
    header = ["n", "seed", "member", "e_B", "e_E", "leakage"]
    try:
        rep = run_universal_experiment(compound, inp, policy, _int_list(args.n_grid), _int_list(args.seeds),
                                       args.mode, args.decoder, base_seed=args.seed)
    except ExperimentError as exc:
        if exc.report is not None:
            _write(args.out, "rows.csv", csv_text(header, [[r[k] for k in header] for r in exc.report.rows]))
        raise
    _write(args.out, "rows.csv", csv_text(header, [[r[k] for k in header] for r in rep.rows]))
    return {"mode": rep.mode, "rates": rep.rates, "layouts": rep.layouts, "summary": rep.summary,
            "seeds": rep.seeds, "experiment_runtime": rep.runtime}


def cmd_net(args) -> dict:
    if args.family != "depolarizing":
        raise SpecError(f"unknown family {args.family!r}")
    lo, hi = _float_list(args.param_range)
    fam = depolarizing_family(lo, hi)
    try:
        net = build_net(fam, args.tau, budget=args.budget, seed=args.seed)
    except PartialNetError as exc:
        raise QbclabError(f"{exc} (achieved radius {exc.radius:.6g})") from exc
    net.provenance["family"] = f"depolarizing[{lo},{hi}]"
    rep = verify_net(net, fam, args.tau, samples=args.samples, seed=args.seed + 1)
    _write(args.out, "net.json", dump_compound(net))
    rows = [["radius", 1, rep.size, rep.tau, rep.max_distance, rep.passed]]
    rows += [["n_letter", n, rep.size, 2 * n * rep.tau, v, v <= 2 * n * rep.tau]
             for n, v in sorted(rep.n_letter_max.items())]
    _write(args.out, "net.csv", csv_text(["check", "n", "size", "bound", "max_distance", "passed"], rows))
    return {"size": rep.size, "tau": rep.tau, "max_distance": rep.max_distance, "passed": rep.passed,
            "n_letter_max": rep.n_letter_max, "n_letter_passed": rep.n_letter_passed,
            "log2_cardinality_bound": rep.log2_cardinality_bound,
            "within_cardinality_bound": rep.within_cardinality_bound}


def cmd_covering(args) -> dict:
    sampler = bernoulli_diagonal_sampler(args.p, args.dim)
    rows, reports = [], []
    for k, L in enumerate(_int_list(args.L)):
        r = covering_check(sampler, args.mu, args.eps, L, args.trials, seed=args.seed + k)
        rows.append([L, r.trials, r.violations, r.rate, r.bound, r.sigma, r.passed])
        reports.append({"L": L, "rate": r.rate, "bound": r.bound, "sigma": r.sigma, "passed": r.passed})
    _write(args.out, "covering.csv",
           csv_text(["L", "trials", "violations", "rate", "bound", "sigma", "passed"], rows))
    rates = [r["rate"] for r in reports]
    return {"points": reports, "all_passed": all(r["passed"] for r in reports),
            "non_increasing": bool(all(a >= b for a, b in zip(rates, rates[1:])))}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbclab", description="Compound cqq broadcast channel laboratory.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=_seed, default=0)

    for name in ("region-bcc", "region-tpc"):
        sp = sub.add_parser(name, help=f"{name[7:].upper()} rate region")
        common(sp)
        sp.add_argument("--channels", required=True)
        sp.add_argument("--input-dist", help="evaluate this input instead of optimizing")
        sp.add_argument("--weights", default="0,0.25,0.5,0.75,1")
        sp.add_argument("--sizes", help="|U|,|Y| (default |X|,|X|)")
        sp.add_argument("--l", type=int, default=1)
        sp.add_argument("--restarts", type=int, default=4)
        sp.add_argument("--iterations", type=int, default=60)

    sp = sub.add_parser("simulate", help="universal wiretap code experiment")
    common(sp)
    sp.add_argument("--channels", required=True)
    sp.add_argument("--input-dist", required=True)
    sp.add_argument("--n-grid", default="4,6,8")
    sp.add_argument("--seeds", default="0-9", help="e.g. 0-49 or 1,2,5")
    sp.add_argument("--layout", default="auto", help="auto | M0,J,L | rate:R0,Rc,Rl")
    sp.add_argument("--margin", type=float, default=0.15)
    sp.add_argument("--delta", type=float, default=0.25)
    sp.add_argument("--mode", choices=("bcc", "tpc"), default="bcc")
    sp.add_argument("--decoder", choices=("pgm", "hn"), default="pgm")

    sp = sub.add_parser("net", help="build and verify a tau-net")
    common(sp)
    sp.add_argument("--family", default="depolarizing")
    sp.add_argument("--param-range", default="0,1")
    sp.add_argument("--tau", type=float, default=0.1)
    sp.add_argument("--budget", type=int, default=2048)
    sp.add_argument("--samples", type=int, default=10_000)

    sp = sub.add_parser("covering", help="covering concentration experiment")
    common(sp)
    sp.add_argument("--L", default="10,100,1000")
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--mu", type=float, default=1.0)
    sp.add_argument("--eps", type=float, default=0.2)
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--dim", type=int, default=2)
    return p


COMMANDS = {
    "region-bcc": lambda a: cmd_region(a, "bcc"),
    "region-tpc": lambda a: cmd_region(a, "tpc"),
    "simulate": cmd_simulate,
    "net": cmd_net,
    "covering": cmd_covering,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    report = _header(args, args.command)
    start = time.perf_counter()
    status = 0
    try:
        report["result"] = COMMANDS[args.command](args)
        report["partial"] = False
    except SpecError as exc:
        print(f"qbclab: {exc}", file=sys.stderr)
        report.update(partial=True, error=str(exc))
        status = 2
    except (QbclabError, ValueError) as exc:
        print(f"qbclab: {type(exc).__name__}: {exc}", file=sys.stderr)
        report.update(partial=True, error=f"{type(exc).__name__}: {exc}")
        status = 1
    report["wall_clock_seconds"] = time.perf_counter() - start
    _write(args.out, "report.json", canonical_dumps(_jsonable(report)))
    return status


if __name__ == "__main__":
    sys.exit(main())
