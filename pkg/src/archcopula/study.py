"""Monte Carlo study harness: replicate, estimate, aggregate bias and RMSE.

Every replication draws its data from a stream derived from
``(master_seed, family, d, tau, replication)`` only, so results do not depend
on execution order or on the number of worker processes.  Known-margins and
pseudo-observation runs of the same replication share the same sample.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .estimators import METHODS, EstimatorConfig, estimate, pobs
from .families import FAMILIES, FamilySpec, attainable_tau, tau_inv
from .sampling import RngStream, sample_copula

log = logging.getLogger(__name__)

THREADS_ENV = "ARCHCOPULA_THREADS"
PILOT_REPS = 3

RECORD_FIELDS = ("family", "d", "tau", "method", "margins", "rep", "theta0", "theta_hat",
                 "converged", "clamped", "failed", "user_time")
SUMMARY_FIELDS = ("family", "d", "tau", "method", "margins", "n_rep", "n_fail", "n_clamped",
                  "bias", "rmse", "mean_user_time", "bias_factor", "rmse_factor", "time_factor")


@dataclass(frozen=True)
class StudyConfig:
    """Design of a simulation study.

    ``margins`` is ``"known"``, ``"pobs"`` or ``"both"``.  ``workers=None``
    reads the worker count from the ``ARCHCOPULA_THREADS`` environment
    variable (default 1).  ``time_cap`` (seconds) triggers a warning when the
    pilot projects a longer run.
    """

    families: tuple = ("C", "G")
    d_list: tuple = (5,)
    tau_targets: tuple = (0.25,)
    n: int = 100
    replications: int = 250
    margins: str = "known"
    methods: tuple = METHODS
    master_seed: int = 20240101
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    workers: int | None = None
    time_cap: float = 1800.0

    def __post_init__(self):
        if self.replications < 1:
            raise ArgumentError("replications must be at least 1")
        if self.n < 2:
            raise ArgumentError("n must be at least 2")
        if self.margins not in ("known", "pobs", "both"):
            raise ArgumentError("margins must be known, pobs or both")
        for f in self.families:
            if f not in FAMILIES:
                raise ArgumentError(f"unknown family {f!r}; choose from {', '.join(FAMILIES)}")
        for m in self.methods:
            if m not in METHODS:
                raise ArgumentError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if any(d < 2 for d in self.d_list):
            raise ArgumentError("dimensions must be at least 2")

    @property
    def margin_modes(self) -> tuple:
        return ("known", "pobs") if self.margins == "both" else (self.margins,)

    def cells(self):
        """``(family, d, tau)`` triples; tau targets a family cannot attain are skipped."""
        out = []
        for tau in self.tau_targets:
            for fam in self.families:
                if tau >= attainable_tau(fam)[1]:
                    continue
                for d in self.d_list:
                    out.append((fam, int(d), float(tau)))
        return out


@dataclass(frozen=True)
class CellSummary:
    family: str
    d: int
    tau: float
    method: str
    margins: str
    n_rep: int
    n_fail: int
    n_clamped: int
    bias: float
    rmse: float
    mean_user_time: float
    bias_factor: float = math.nan
    rmse_factor: float = math.nan
    time_factor: float = math.nan

    @property
    def key(self):
        return (self.family, self.d, self.tau, self.method, self.margins)


@dataclass
class StudyReport:
    rows: list
    records: list

    def row(self, family, d, tau, method, margins="known") -> CellSummary:
        for r in self.rows:
            if r.key == (family, d, tau, method, margins):
                return r
        raise KeyError((family, d, tau, method, margins))


def _tau_key(tau):
    return int(round(tau * 1_000_000))


def data_stream(seed, family, d, tau, rep) -> RngStream:
    return RngStream(seed, ("data", family, d, _tau_key(tau), rep))


def run_replication(cfg: StudyConfig, family: str, d: int, tau: float, rep: int) -> list[dict]:
    """All estimators on one generated sample, for each margins mode."""
    theta0 = tau_inv(family, tau)
    spec = FamilySpec(family, theta0)
    u = sample_copula(spec, cfg.n, d, data_stream(cfg.master_seed, family, d, tau, rep))
    out = []
    for mode in cfg.margin_modes:
        x = u if mode == "known" else pobs(u)
        for method in cfg.methods:
            rng = RngStream(cfg.master_seed, ("est", family, d, _tau_key(tau), rep, method, mode))
            rec = dict(family=family, d=d, tau=tau, method=method, margins=mode, rep=rep,
                       theta0=theta0, theta_hat=math.nan, converged=False, clamped=False,
                       failed=False, user_time=math.nan)
            t0 = time.thread_time()
            try:
                res = estimate(family, x, method, cfg.estimator, rng)
            except (ArithmeticError, ValueError) as exc:
                rec.update(failed=True, user_time=time.thread_time() - t0)
                log.debug("replication %d %s/%s failed: %s", rep, family, method, exc)
            else:
                rec.update(theta_hat=res.theta_hat, converged=res.converged, clamped=res.clamped,
                           failed=not res.converged, user_time=res.user_time)
            out.append(rec)
    return out


def _run_task(args):
    cfg, fam, d, tau, reps = args
    return [rec for rep in reps for rec in run_replication(cfg, fam, d, tau, rep)]


def _workers(cfg):
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _execute(cfg, tasks, workers):
    if workers == 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def run_study(cfg: StudyConfig) -> StudyReport:
    """Run every cell of `cfg` and aggregate.

    Replications 0..2 of every cell run first as a pilot; when the projected
    total wall time exceeds ``cfg.time_cap`` a :class:`RuntimeWarning` is issued.
    """
    cells = cfg.cells()
    workers = _workers(cfg)
    n_pilot = min(PILOT_REPS, cfg.replications)
    t0 = time.perf_counter()
    pilot = _execute(cfg, [(cfg, f, d, t, range(n_pilot)) for f, d, t in cells], workers)
    elapsed = time.perf_counter() - t0
    if cells and n_pilot < cfg.replications:
        projected = elapsed * cfg.replications / n_pilot
        if projected > cfg.time_cap:
            warnings.warn(f"projected study wall time {projected:.0f}s exceeds the cap of "
                          f"{cfg.time_cap:.0f}s", RuntimeWarning, stacklevel=2)
    chunk = max(1, math.ceil((cfg.replications - n_pilot) / max(1, workers)))
    tasks = [(cfg, f, d, t, range(s, min(s + chunk, cfg.replications)))
             for f, d, t in cells for s in range(n_pilot, cfg.replications, chunk)]
    rest = _execute(cfg, tasks, workers)
    records = [r for batch in pilot + rest for r in batch]
    records.sort(key=lambda r: (r["family"], r["d"], r["tau"], r["margins"], r["method"], r["rep"]))
    return report_from_records(records)


# ---------------------------------------------------------------------------
# aggregation


def _summarise(recs):
    th = np.array([r["theta_hat"] for r in recs], dtype=float)
    theta0 = recs[0]["theta0"]
    ok = np.isfinite(th)
    err = th[ok] - theta0
    bias = float(np.mean(err)) if err.size else math.nan
    rmse = float(math.sqrt(np.mean(err**2))) if err.size else math.nan
    times = np.array([r["user_time"] for r in recs], dtype=float)
    times = times[np.isfinite(times)]
    return dict(n_rep=len(recs), n_fail=int(sum(bool(r["failed"]) for r in recs)),
                n_clamped=int(sum(bool(r["clamped"]) for r in recs)), bias=bias, rmse=rmse,
                mean_user_time=float(np.mean(times)) if times.size else math.nan)


def _ratio(a, b):
    return a / b if b and math.isfinite(b) else math.nan


def report_from_records(records) -> StudyReport:
    """Aggregate raw per-replication records into a :class:`StudyReport`."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r["family"], int(r["d"]), float(r["tau"]), r["method"], r["margins"]), []).append(r)
    base = {}
    for key, recs in groups.items():
        base[key] = _summarise(recs)
    rows = []
    for key, s in base.items():
        mle = base.get(key[:3] + ("mle", key[4]))
        factors = {}
        if mle is not None:
            factors = dict(bias_factor=_ratio(s["bias"], mle["bias"]),
                           rmse_factor=_ratio(s["rmse"], mle["rmse"]),
                           time_factor=_ratio(s["mean_user_time"], mle["mean_user_time"]))
        rows.append(CellSummary(*key, **s, **factors))
    order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (r.margins, r.tau, r.family, r.d, order.get(r.method, 99)))
    return StudyReport(rows, list(records))


def sqrt_abs_error_summary(records) -> dict:
    """Five-number summary of ``sqrt|theta_hat - theta0|`` per cell.

    Returns a mapping ``(family, d, tau, method, margins) -> (min, q25, median, q75, max)``.
    """
    groups: dict = {}
    for r in records:
        th = float(r["theta_hat"])
        if math.isfinite(th):
            key = (r["family"], int(r["d"]), float(r["tau"]), r["method"], r["margins"])
            groups.setdefault(key, []).append(math.sqrt(abs(th - float(r["theta0"]))))
    return {k: tuple(float(q) for q in np.quantile(v, [0, 0.25, 0.5, 0.75, 1.0]))
            for k, v in sorted(groups.items())}


# ---------------------------------------------------------------------------
# output


def fmt(x) -> str:
    """Shortest round-trip representation of a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_records(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([fmt(r[k]) for k in RECORD_FIELDS])


def read_records(fh) -> list[dict]:
    out = []
    for row in csv.DictReader(fh):
        missing = [k for k in RECORD_FIELDS if k not in row]
        if missing:
            raise ArgumentError(f"record file lacks columns: {', '.join(missing)}")
        out.append(dict(family=row["family"], d=int(row["d"]), tau=float(row["tau"]),
                        method=row["method"], margins=row["margins"], rep=int(row["rep"]),
                        theta0=float(row["theta0"]), theta_hat=float(row["theta_hat"]),
                        converged=row["converged"] == "true", clamped=row["clamped"] == "true",
                        failed=row["failed"] == "true", user_time=float(row["user_time"])))
    return out


def write_summary(report: StudyReport, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in report.rows:
        w.writerow([fmt(v) for v in asdict(r).values()])


METRICS = {"bias": ("bias", "bias_factor", 1000.0),
           "rmse": ("rmse", "rmse_factor", 1000.0),
           "mut": ("mean_user_time", "time_factor", 1.0)}


def metric_table(report: StudyReport, metric: str, margins: str = "known"):
    """Header and rows of one appendix-style table.

    Rows are ``(tau, family, d)``; each method contributes a value column
    (scaled by 1000 for bias and RMSE) and a factor column relative to MLE.
    """
    if metric not in METRICS:
        raise ArgumentError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    attr, fattr, scale = METRICS[metric]
    rows = [r for r in report.rows if r.margins == margins]
    methods = [m for m in METHODS if any(r.method == m for r in rows)]
    header = ["tau", "family", "d"]
    for m in methods:
        header += [m, f"{m}_factor"]
    cells = {}
    for r in rows:
        cells.setdefault((r.tau, r.family, r.d), {})[r.method] = r
    body = []
    for (tau, fam, d), by in sorted(cells.items()):
        line = [fmt(tau), fam, str(d)]
        for m in methods:
            r = by.get(m)
            if r is None:
                line += ["", ""]
            else:
                line += [fmt(getattr(r, attr) * scale), fmt(getattr(r, fattr))]
        body.append(line)
    return header, body


def _aligned(header, body, spec):
    def cell(v):
        return v if v == "" else format(float(v), spec)

    rows = [header] + [line[:3] + [cell(c) for c in line[3:]] for line in body]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def render_table(report: StudyReport, metric: str, margins: str = "known", format: str = "csv") -> str:
    header, body = metric_table(report, metric, margins)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        return buf.getvalue()
    if format == "text":
        return _aligned(header, body, ".3g" if metric == "mut" else ".1f")
    raise ArgumentError(f"unknown format {format!r}; choose csv or text")


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def emit_tables(report: StudyReport, outdir, format: str = "csv", margins=None) -> list[Path]:
    """Write one file per metric and margins mode; returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    modes = margins or sorted({r.margins for r in report.rows}) or ["known"]
    ext = "csv" if format == "csv" else "txt"
    paths = []
    for mode in modes:
        for metric in METRICS:
            p = outdir / f"{metric}_{mode}.{ext}"
            _atomic_write(p, render_table(report, metric, mode, format))
            paths.append(p)
    return paths
