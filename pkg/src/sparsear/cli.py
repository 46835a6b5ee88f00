"""Command-line front end: ``sparsear fit | gen | bench``.

Exit codes: 0 success, 1 input error, 2 uncertified solve under
``--require-certified``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path


from .core import SOLVERS, ModelConfig, segment
from .io import (
    BenchRow,
    InputError,
    SyntheticSpec,
    gen_synthetic,
    read_grid,
    read_univariate,
    write_bench,
    write_grid,
    write_seasonality,
    write_series,
    write_stv_coefs,
    write_truth,
    write_tv_coefs,
)
from .models import fit_sar, fit_stvsar, fit_tvsar, seasonality_map

EXIT_OK, EXIT_INPUT, EXIT_UNCERTIFIED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _lag_spec(text: str) -> dict[int, float]:
    out = {}
    for item in text.split(","):
        k, sep, c = item.partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"lag entries look like 'k:coef', got {item!r}")
        try:
            out[int(k)] = float(c)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad lag entry {item!r}") from None
    return out


def _grid_dims(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        dims = ()
    if len(dims) != 3:
        raise argparse.ArgumentTypeError(f"grid looks like MxNxG, got {text!r}")
    return dims


def _column(text: str | None):
    if text is None:
        return None
    return int(text) - 1 if text.isdigit() else text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparsear", description="Sparse non-negative autoregression for periodicity analysis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a SAR, TV-SAR or STV-SAR model")
    f.add_argument("--model", choices=("sar", "tvsar", "stvsar"), required=True)
    f.add_argument("--input", required=True, type=Path)
    f.add_argument("--column", help="column name or 1-based number (univariate input; default: last)")
    f.add_argument("--order", type=int, required=True)
    f.add_argument("--sparsity", type=int, required=True)
    f.add_argument("--solver", choices=SOLVERS, default="mio")
    f.add_argument("--tau0", type=int)
    f.add_argument("--bigm", type=float, default=5.0)
    f.add_argument("--segment-length", type=int)
    f.add_argument("--out-prefix", type=Path)
    f.add_argument("--require-certified", action="store_true")
    f.add_argument("--threads", type=int, default=1, help="worker count, 0 = all cores")
    f.add_argument("--seasonality-lag", type=int)
    f.add_argument("--max-nodes", type=int, default=1_000_000)

    g = sub.add_parser("gen", help="generate a synthetic series or grid with planted lags")
    g.add_argument("--length", type=int, required=True)
    g.add_argument("--lags", type=_lag_spec, required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grid", type=_grid_dims)
    g.add_argument("--level", type=float, default=1.0)
    g.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("bench", help="compare nnsp, mio-dvp and mio over a corpus")
    b.add_argument("--corpus", type=Path, required=True)
    b.add_argument("--orders", type=_int_list, required=True)
    b.add_argument("--sparsities", type=_int_list, required=True)
    b.add_argument("--tau0", type=int, default=10)
    b.add_argument("--bigm", type=float, default=5.0)
    b.add_argument("--column")
    b.add_argument("--out", type=Path, required=True)
    return p


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def cmd_fit(args) -> int:
    cfg = ModelConfig(
        order=args.order,
        sparsity=args.sparsity,
        solver=args.solver,
        bigm=args.bigm,
        tau0=args.tau0,
        max_nodes=args.max_nodes,
        n_jobs=-1 if args.threads == 0 else args.threads,
    )
    prefix = args.out_prefix or args.input.with_suffix("")
    summary = {"model": args.model, "solver": cfg.solver, "order": cfg.order, "sparsity": cfg.sparsity,
               "bigm": cfg.bigm, "tau0": cfg.tau0}

    if args.model == "stvsar":
        grid = read_grid(args.input)
        res = fit_stvsar(grid, cfg)
        write_stv_coefs(f"{prefix}.coef.csv", res)
        if args.seasonality_lag is not None:
            write_seasonality(f"{prefix}.lag{args.seasonality_lag}.csv",
                              seasonality_map(res, args.seasonality_lag), args.seasonality_lag)
        stats = res.stage1_stats
        summary.update(omega=list(res.support), objective=res.global_objective,
                       cells=int(res.mask.sum()), constant_cells=int(res.constant_cells.sum()))
    else:
        x = read_univariate(args.input, _column(args.column))
        if args.model == "sar":
            fit = fit_sar(x, cfg)
        else:
            if args.segment_length is None:
                raise InputError("--segment-length is required for --model tvsar")
            ss = segment(x, args.segment_length)
            if args.segment_length < 2 * cfg.order:
                print(f"warning: segment length {args.segment_length} is below 2*d={2 * cfg.order}; "
                      "each segment has few rows per coefficient", file=sys.stderr)
            fit = fit_tvsar(ss, cfg)
            summary.update(segments=ss.n_segments, dropped=int(ss.dropped.size))
        write_tv_coefs(f"{prefix}.coef.csv", fit)
        stats = fit.stats
        summary.update(omega=list(fit.support), objective=fit.objective, box_binding=fit.box_binding)

    summary.update(
        gap=_num(stats.gap),
        best_bound=_num(stats.best_bound),
        certified=stats.certified,
        nodes=stats.nodes_explored,
        wall_time=stats.wall_time,
    )
    Path(f"{prefix}.summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    if args.require_certified and not stats.certified:
        print("error: solve is not certified optimal", file=sys.stderr)
        return EXIT_UNCERTIFIED
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = SyntheticSpec(
        length=args.length,
        lags=args.lags,
        noise=args.noise,
        seed=args.seed,
        grid=args.grid,
        level=args.level,
    )
    data = gen_synthetic(spec)
    if spec.grid is None:
        write_series(args.out, data)
    else:
        write_grid(args.out, data)
    write_truth(f"{args.out}.truth.json", spec)
    return EXIT_OK


def cmd_bench(args) -> int:
    files = sorted(p for p in args.corpus.iterdir() if p.suffix == ".csv")
    if not files:
        raise InputError(f"{args.corpus}: no .csv files in corpus")
    rows = []
    for path in files:
        x = read_univariate(path, _column(args.column))
        for d in args.orders:
            for tau in args.sparsities:
                if tau > d:
                    continue
                tau0 = min(args.tau0, d)
                solvers = ["nnsp"] + (["mio-dvp"] if tau < tau0 else []) + ["mio"]
                for solver in solvers:
                    cfg = ModelConfig(d, tau, solver, args.bigm, tau0 if solver == "mio-dvp" else None)
                    t0 = time.perf_counter()
                    fit = fit_sar(x, cfg)
                    elapsed = time.perf_counter() - t0
                    rows.append(BenchRow(path.stem, d, tau, solver, fit.objective, elapsed, fit.stats.certified))
    write_bench(args.out, rows)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "gen": cmd_gen, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
