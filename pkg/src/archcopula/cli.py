"""Command line interface: ``archcopula <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors; every
diagnostic is a single line on stderr.  Output files are written to a
temporary name and renamed, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CopulaError
from .estimators import METHODS, EstimatorConfig, estimate, pobs
from .families import FAMILIES, DensityContext, FamilySpec, log_density
from .sampling import RngStream, sample_copula
from .study import (
    METRICS,
    StudyConfig,
    emit_tables,
    fmt,
    read_records,
    render_table,
    report_from_records,
    run_study,
    write_records,
    write_summary,
)
from .transform import hh_transform


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# CSV helpers


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Read a numeric CSV matrix; a non-numeric first row is taken as header."""
    text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise CopulaError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise CopulaError(f"{path}: rows have different numbers of columns")
    try:
        return np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise CopulaError(f"{path}: {exc}") from None


def _matrix_csv(mat, header=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in np.atleast_2d(mat):
        w.writerow([fmt(float(x)) for x in row])
    return buf.getvalue()


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


# ---------------------------------------------------------------------------
# argument groups


def _add_param(p, required=True):
    p.add_argument("--family", required=True, choices=FAMILIES)
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--theta", type=float)
    g.add_argument("--tau", type=float)


def _spec(args) -> FamilySpec:
    if args.tau is not None:
        return FamilySpec.from_tau(args.family, args.tau)
    return FamilySpec(args.family, args.theta)


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _int_list(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _float_list(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _str_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args):
    spec = _spec(args)
    u = sample_copula(spec, args.n, args.d, RngStream(args.seed, ("cli-sample",)))
    _emit(_matrix_csv(u), args.out)


def cmd_density(args):
    spec = _spec(args)
    u = read_matrix(args.input)
    ld = log_density(DensityContext(spec, u.shape[1]), u)
    _emit(_matrix_csv(np.asarray(ld)[:, None], ["log_density"]), args.out)


def cmd_estimate(args):
    u = read_matrix(args.input)
    if args.pobs:
        u = pobs(u)
    cfg = EstimatorConfig(smle_m=args.smle_m)
    res = estimate(args.family, u, args.method, cfg, RngStream(args.seed, ("cli-estimate",)))
    fields = dict(method=res.method, theta_hat=res.theta_hat, converged=res.converged,
                  clamped=res.clamped, objective=res.objective, user_time=res.user_time)
    if args.format == "jsonl":
        clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in fields.items()}
        text = json.dumps(clean) + "\n"
    else:
        text = ",".join(fields) + "\n" + ",".join(fmt(v) for v in fields.values()) + "\n"
    _emit(text, args.out)


def cmd_gof(args):
    spec = _spec(args)
    u = read_matrix(args.input)
    out = hh_transform(spec, u, args.include_k)
    k = out.uprime.shape[1]
    header = [f"u{j + 1}" for j in range(k)] + ["y_n", "y_l"]
    _emit(_matrix_csv(np.column_stack([out.uprime, out.y_n, out.y_l]), header), args.out)


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


_SIM_KEYS = {
    "families": _str_list, "d": _int_list, "tau": _float_list, "n": int, "replications": int,
    "margins": str, "methods": _str_list, "seed": _seed, "workers": int, "time_cap": float,
    "smle_m": int, "tau_lo": float, "tau_hi": float, "outdir": str, "format": str,
}


def cmd_simulate(args):
    opts = {}
    if args.config:
        for k, v in read_config(args.config).items():
            if k not in _SIM_KEYS:
                raise UsageError(f"unknown config key {k!r}; choose from {', '.join(_SIM_KEYS)}")
            try:
                opts[k] = _SIM_KEYS[k](v)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {k}: {exc}") from None
    for k in _SIM_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    est = EstimatorConfig(smle_m=opts.get("smle_m", 10_000),
                          tau_range=(opts.get("tau_lo", 0.001), opts.get("tau_hi", 0.999)))
    cfg = StudyConfig(
        families=opts.get("families", ("C", "G")), d_list=opts.get("d", (5,)),
        tau_targets=opts.get("tau", (0.25,)), n=opts.get("n", 100),
        replications=opts.get("replications", 250), margins=opts.get("margins", "known"),
        methods=opts.get("methods", METHODS), master_seed=opts.get("seed", 20240101),
        estimator=est, workers=opts.get("workers"), time_cap=opts.get("time_cap", 1800.0))
    report = run_study(cfg)
    outdir = Path(opts.get("outdir", "study_out"))
    outdir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    write_records(report.records, buf)
    _emit(buf.getvalue(), outdir / "raw.csv")
    buf = io.StringIO()
    write_summary(report, buf)
    _emit(buf.getvalue(), outdir / "summary.csv")
    fmt_ = opts.get("format", "csv")
    emit_tables(report, outdir, "csv" if fmt_ == "csv" else "text")
    print(f"wrote {len(report.records)} records to {outdir}", file=sys.stderr)


def cmd_tables(args):
    text = sys.stdin.read() if args.input == "-" else Path(args.input).read_text()
    report = report_from_records(read_records(io.StringIO(text)))
    _emit(render_table(report, args.metric, args.margins, args.format), args.out)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="archcopula", description="Estimation of Archimedean copulas.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="draw a copula sample as CSV")
    _add_param(s)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("density", help="log copula density of each row")
    _add_param(s)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("estimate", help="estimate the parameter from a CSV sample")
    s.add_argument("--family", required=True, choices=FAMILIES)
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--pobs", action="store_true", help="rank the data to pseudo-observations first")
    s.add_argument("--smle-m", type=int, default=10_000)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("gof-transform", help="transform a sample towards independent uniforms")
    _add_param(s)
    s.add_argument("--in", dest="input", required=True)
    k = s.add_mutually_exclusive_group()
    k.add_argument("--include-k", dest="include_k", action="store_true", default=None)
    k.add_argument("--no-include-k", dest="include_k", action="store_false")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gof)

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("--config")
    s.add_argument("--families", type=_str_list)
    s.add_argument("--d", type=_int_list)
    s.add_argument("--tau", type=_float_list)
    s.add_argument("--n", type=int)
    s.add_argument("--replications", type=int)
    s.add_argument("--margins", choices=("known", "pobs", "both"))
    s.add_argument("--methods", type=_str_list)
    s.add_argument("--seed", type=_seed)
    s.add_argument("--workers", type=int)
    s.add_argument("--time-cap", dest="time_cap", type=float)
    s.add_argument("--smle-m", dest="smle_m", type=int)
    s.add_argument("--outdir")
    s.add_argument("--format", choices=("csv", "text"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("tables", help="aggregate a raw record file into a table")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--metric", choices=tuple(METRICS), default="rmse")
    s.add_argument("--margins", default="known")
    s.add_argument("--format", choices=("csv", "text"), default="text")
    s.add_argument("--out")
    s.set_defaults(func=cmd_tables)
    return p


def _one_line(exc) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"archcopula: usage error: {_one_line(exc)}", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except UsageError as exc:
        print(f"archcopula: usage error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`); not an error of ours
        sys.stdout = open(os.devnull, "w")
        return 0
    except (CopulaError, ValueError, ArithmeticError, OSError) as exc:
        print(f"archcopula: error: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
