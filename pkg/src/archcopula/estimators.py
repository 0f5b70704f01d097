"""Parameter estimators for one-parameter Archimedean copulas.

Method tags:

* ``tau-tau-bar``: invert the mean of the pairwise sample Kendall's taus
* ``tau-theta-bar``: mean of the pairwise inverted sample taus
* ``beta``: invert the multivariate sample Blomqvist's beta
* ``mde-{chi,gamma}-{cvm,ks}``: minimum distance between the transformed
  sample's univariate reduction and its reference law
* ``mle``, ``smle`` (Monte Carlo density), ``dmle`` (density of the diagonal)
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, CopulaError, EvaluationError, RangeError
from .families import (
    DensityContext,
    FamilySpec,
    attainable_tau,
    beta_inv,
    get_family,
    log_density,
    log_diag_density,
    reparam,
    tau_inv,
)
from .numerics import EPS, brent_min, lsum
from .sampling import RngStream, sample_V_block
from .transform import cvm_distance, hh_transform, ks_distance, reference_cdf

METHODS = (
    "tau-tau-bar", "tau-theta-bar", "beta",
    "mde-chi-cvm", "mde-chi-ks", "mde-gamma-cvm", "mde-gamma-ks",
    "mle", "smle", "dmle",
)
MDE_KINDS = ("chi-cvm", "chi-ks", "gamma-cvm", "gamma-ks")

#: gap kept below a bounded tau supremum (family A) when forming intervals
TAU_SUP_GAP = 1e-6


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning knobs shared by all estimators.

    Attributes
    ----------
    smle_m : int
        Frailty draws per SMLE density evaluation.
    smle_fixed_block : bool
        Reuse one block of draws for the whole fit (common random numbers)
        instead of a fresh block per evaluation.
    mde_include_k : bool or None
        Kendall component in the transform; ``None`` means ``d <= 5``.
    tau_clamp_policy : {"clamp", "error"}
        What to do with a sample tau outside the attainable range.
    tau_range : (float, float)
        Kendall's tau interval defining the optimisation interval.
    tol, smle_tol : float
        Optimiser tolerances on the reparameterised scale.
    """

    smle_m: int = 10_000
    smle_fixed_block: bool = False
    mde_include_k: bool | None = None
    tau_clamp_policy: str = "clamp"
    tau_range: tuple[float, float] = (0.001, 0.999)
    tol: float = 1e-9
    smle_tol: float = 1e-4

    def __post_init__(self):
        if self.smle_m < 1:
            raise ArgumentError("smle_m must be at least 1")
        if self.tau_clamp_policy not in ("clamp", "error"):
            raise ArgumentError("tau_clamp_policy must be 'clamp' or 'error'")
        lo, hi = self.tau_range
        if not 0 < lo < hi < 1:
            raise ArgumentError("tau_range must satisfy 0 < lo < hi < 1")


@dataclass
class EstimateResult:
    method: str
    theta_hat: float
    converged: bool = True
    clamped: bool = False
    objective: float = math.nan
    user_time: float = 0.0
    evals: int = 0
    extra: dict = field(default_factory=dict, repr=False)


# ---------------------------------------------------------------------------
# rank statistics


def pobs(x) -> np.ndarray:
    """Pseudo-observations: column ranks (ties averaged) divided by ``n + 1``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ArgumentError("pseudo-observations need at least two rows")
    return rankdata(x, method="average", axis=0) / (n + 1)


def _sign_rows(col, rows):
    return np.sign(col[rows, None] - col[None, :])


def sample_tau(x, y) -> float:
    """Sample Kendall's tau ``2/(n(n-1)) sum_{i<j} sign(x_i-x_j) sign(y_i-y_j)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n != y.size or n < 2:
        raise ArgumentError("need two vectors of equal length >= 2")
    total = 0.0
    step = max(1, 4_000_000 // n)
    for start in range(0, n, step):
        rows = np.arange(start, min(n, start + step))
        total += float(np.sum(_sign_rows(x, rows) * _sign_rows(y, rows)))
    return total / (n * (n - 1))


def pairwise_tau(data) -> np.ndarray:
    """Matrix of pairwise sample Kendall's taus of the columns of `data`."""
    u = np.asarray(data, dtype=float)
    n, d = u.shape
    if n < 2:
        raise ArgumentError("need at least two rows")
    acc = np.zeros((d, d))
    step = max(1, 2_000_000 // (n * d))
    for start in range(0, n, step):
        rows = np.arange(start, min(n, start + step))
        s = np.sign(u[rows, None, :] - u[None, :, :]).reshape(-1, d)
        acc += s.T @ s
    # sums are integers, so the result is exact
    return acc / (n * (n - 1))


def sample_beta(data) -> float:
    """Multivariate sample Blomqvist's beta."""
    u = np.asarray(data, dtype=float)
    n, d = u.shape
    low = np.all(u <= 0.5, axis=1)
    high = np.all(u > 0.5, axis=1)
    scale = 2.0 ** (d - 1) / (2.0 ** (d - 1) - 1)
    return scale * (np.mean(low.astype(float) + high) - 2.0 ** (1 - d))


# ---------------------------------------------------------------------------
# intervals and clamping


def tau_interval(family: str, cfg: EstimatorConfig) -> tuple[float, float]:
    """Configured tau range intersected with the family's attainable range."""
    _, sup = attainable_tau(family)
    lo, hi = cfg.tau_range
    if sup < 1:
        hi = min(hi, sup - TAU_SUP_GAP)
    if lo >= hi:
        raise RangeError(f"tau range is empty for family {family}")
    return lo, hi


@functools.lru_cache(maxsize=65536)
def _tau_inv_cached(family, tau):
    return tau_inv(family, tau)


def initial_interval(family: str, cfg: EstimatorConfig | None = None) -> tuple[float, float]:
    """Parameter interval ``[tau^{-1}(tau_lo), tau^{-1}(tau_hi)]``."""
    cfg = cfg or EstimatorConfig()
    lo, hi = tau_interval(family, cfg)
    return _tau_inv_cached(family, lo), _tau_inv_cached(family, hi)


def _invert_tau(family, tau_hat, cfg):
    """``(theta, clamped)``; out-of-range values go to the nearest boundary."""
    fam = get_family(family)
    _, sup = attainable_tau(family)
    below = tau_hat < 0 or (tau_hat == 0 and fam.independence is None)
    above = tau_hat >= sup
    if not (below or above):
        return _tau_inv_cached(family, float(tau_hat)), False
    if cfg.tau_clamp_policy == "error":
        raise RangeError(f"sample tau {tau_hat!r} outside the attainable range of family {family}",
                         bound="lower" if below else "upper")
    lo, hi = initial_interval(family, cfg)
    if below:
        return (fam.independence if fam.independence is not None else lo), True
    return hi, True


def _spec(family, theta):
    return FamilySpec(family, theta)


def _optimise(family, objective: Callable[[float], float], cfg, tol):
    """Minimise `objective(theta)` over the initial interval in the reparameterised scale."""
    rp = reparam(family)
    lo, hi = initial_interval(family, cfg)
    a_lo, a_hi = rp.to_alpha(lo), rp.to_alpha(hi)

    def g(alpha):
        theta = min(max(rp.from_alpha(alpha), lo), hi)
        try:
            val = objective(theta)
        except (CopulaError, FloatingPointError, ZeroDivisionError):
            return math.inf
        return val if math.isfinite(val) else math.inf

    res = brent_min(g, a_lo, a_hi, tol)
    # bounded Brent never evaluates the endpoints themselves; an iterate within
    # its resolution of one means the objective is monotone towards it
    slack = 4 * (tol + math.sqrt(EPS) * max(abs(a_lo), abs(a_hi), 1.0))
    if res.x - a_lo <= slack:
        return lo, res, True
    if a_hi - res.x <= slack:
        return hi, res, True
    return min(max(rp.from_alpha(res.x), lo), hi), res, False


# ---------------------------------------------------------------------------
# estimators


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.thread_time()
        res = fn(*args, **kwargs)
        res.user_time = time.thread_time() - t0
        return res
    return wrapper


def _check_data(data):
    u = np.asarray(data, dtype=float)
    if u.ndim != 2 or u.shape[1] < 2 or u.shape[0] < 1:
        raise ArgumentError("data must be an n x d matrix with n >= 1, d >= 2")
    if np.any(~((u > 0) & (u < 1))):
        raise ArgumentError("data entries must lie in (0, 1)")
    return u


@_timed
def est_tau_tau_bar(family: str, data, cfg: EstimatorConfig | None = None) -> EstimateResult:
    cfg = cfg or EstimatorConfig()
    u = _check_data(data)
    taus = pairwise_tau(u)[np.triu_indices(u.shape[1], 1)]
    tau_bar = float(np.mean(taus))
    theta, clamped = _invert_tau(family, tau_bar, cfg)
    return EstimateResult("tau-tau-bar", theta, clamped=clamped, extra={"tau_bar": tau_bar})


@_timed
def est_tau_theta_bar(family: str, data, cfg: EstimatorConfig | None = None) -> EstimateResult:
    cfg = cfg or EstimatorConfig()
    u = _check_data(data)
    taus = pairwise_tau(u)[np.triu_indices(u.shape[1], 1)]
    thetas, flags = zip(*(_invert_tau(family, float(t), cfg) for t in taus))
    n_clamped = int(sum(flags))
    return EstimateResult("tau-theta-bar", float(np.mean(thetas)), clamped=n_clamped > 0,
                          extra={"n_pairs_clamped": n_clamped})


@_timed
def est_beta(family: str, data, cfg: EstimatorConfig | None = None) -> EstimateResult:
    """Method of moments on Blomqvist's beta.

    A negative sample beta is below every attainable value and maps to the
    lower end of the interval (flagged ``clamped``).  When the population
    beta cannot be resolved in double precision (large ``d``) the naive
    inversion is still returned, with ``converged=False`` and the reason in
    ``extra["breakdown"]``, so studies count the replication as failed yet
    keep its value.

    Raises
    ------
    EvaluationError
        Even the naive survival sum is non-positive everywhere it is needed.
    """
    cfg = cfg or EstimatorConfig()
    u = _check_data(data)
    d = u.shape[1]
    b = sample_beta(u)
    fam = get_family(family)
    lo, hi = initial_interval(family, cfg)
    if b <= 0 and fam.independence is not None:
        return EstimateResult("beta", fam.independence, clamped=b < 0, extra={"beta_hat": b})
    try:
        theta, clamped = beta_inv(family, b, d, (lo, hi))
    except EvaluationError as exc:
        # beta is unresolvable at this d; keep the naive double-precision
        # inversion as the estimate but report it as a failed fit
        theta, clamped = beta_inv(family, b, d, (lo, hi), checked=False)
        return EstimateResult("beta", theta, converged=False, clamped=clamped,
                              extra={"beta_hat": b, "breakdown": str(exc)})
    return EstimateResult("beta", theta, clamped=clamped, extra={"beta_hat": b})


def mde_objective(family: str, data, kind: str, include_k: bool | None = None) -> Callable[[float], float]:
    """Distance of the transformed sample to its reference law as a function of theta."""
    if kind not in MDE_KINDS:
        raise ArgumentError(f"unknown distance {kind!r}; choose from {', '.join(MDE_KINDS)}")
    ref, dist = kind.split("-")
    measure = cvm_distance if dist == "cvm" else ks_distance
    u = np.asarray(data, dtype=float)

    def f(theta):
        out = hh_transform(_spec(family, theta), u, include_k)
        y = np.sort(out.y_n if ref == "chi" else out.y_l)
        return measure(y, reference_cdf(ref, out.uprime.shape[1]))

    return f


@_timed
def est_mde(family: str, data, kind: str, cfg: EstimatorConfig | None = None) -> EstimateResult:
    cfg = cfg or EstimatorConfig()
    u = _check_data(data)
    obj = mde_objective(family, u, kind, cfg.mde_include_k)
    theta, res, at_bound = _optimise(family, obj, cfg, cfg.tol)
    return EstimateResult(f"mde-{kind}", theta, converged=res.converged and math.isfinite(res.fun),
                          clamped=at_bound, objective=res.fun, evals=res.nfev)


def neg_loglik(family: str, data) -> Callable[[float], float]:
    """Negative log-likelihood ``theta -> -sum_i log c_theta(u_i)``."""
    u = np.asarray(data, dtype=float)
    d = u.shape[1]

    def f(theta):
        return -float(np.sum(log_density(DensityContext(_spec(family, theta), d), u)))

    return f


@_timed
def est_mle(family: str, data, cfg: EstimatorConfig | None = None) -> EstimateResult:
    cfg = cfg or EstimatorConfig()
    u = _check_data(data)
    theta, res, at_bound = _optimise(family, neg_loglik(family, u), cfg, cfg.tol)
    return EstimateResult("mle", theta, converged=res.converged and math.isfinite(res.fun),
                          clamped=at_bound, objective=res.fun, evals=res.nfev)


def smle_log_dpsi(v, d: int, t=None, *, logt=None):
    """Monte Carlo ``log((-1)^d psi^(d)(t)) ~ log(mean_k V_k^d exp(-V_k t))``.

    The exponents ``b_k = d log V_k - V_k t`` are combined with :func:`lsum`;
    `logt` may be given instead of `t` to avoid overflow of ``t``.
    """
    v = np.asarray(v, dtype=float)
    if logt is None:
        with np.errstate(divide="ignore"):
            logt = np.log(np.asarray(t, dtype=float))
    logt = np.asarray(logt, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        logv = np.log(v)
        b = d * logv - np.exp(np.add.outer(logt, logv))
    return lsum(b, axis=-1) - math.log(v.size)


def smle_neg_loglik(family: str, data, cfg: EstimatorConfig, rng: RngStream) -> Callable[[float], float]:
    u = np.asarray(data, dtype=float)
    d = u.shape[1]

    def f(theta):
        spec = _spec(family, theta)
        # a fixed block re-creates the same child stream, so every evaluation
        # sees the same underlying uniforms
        src = rng.child("smle-block") if cfg.smle_fixed_block else rng
        v = sample_V_block(spec, cfg.smle_m, src)
        fam = spec.impl
        logs = fam.log_psi_inv(theta, u)
        ll = smle_log_dpsi(v, d, logt=lsum(logs, axis=1)) + np.sum(fam.log_neg_dpsi_inv(theta, u), axis=1)
        return -float(np.sum(ll))

    return f


@_timed
def est_smle(family: str, data, cfg: EstimatorConfig | None = None,
             rng: RngStream | None = None) -> EstimateResult:
    cfg = cfg or EstimatorConfig()
    rng = rng or RngStream(0, ("smle",))
    u = _check_data(data)
    theta, res, at_bound = _optimise(family, smle_neg_loglik(family, u, cfg, rng), cfg, cfg.smle_tol)
    return EstimateResult("smle", theta, converged=res.converged and math.isfinite(res.fun),
                          clamped=at_bound, objective=res.fun, evals=res.nfev)


def diag_neg_loglik(family: str, data) -> Callable[[float], float]:
    """Negative diagonal log-likelihood ``theta -> -sum_i log delta'_theta(max_j u_ij)``."""
    u = np.asarray(data, dtype=float)
    d = u.shape[1]
    y = u.max(axis=1)

    def f(theta):
        return -float(np.sum(log_diag_density(_spec(family, theta), d, y)))

    return f


def gumbel_dmle(data) -> tuple[float, float]:
    """Closed-form Gumbel diagonal MLE; returns ``(raw, max(raw, 1))``."""
    u = np.asarray(data, dtype=float)
    n, d = u.shape
    y = u.max(axis=1)
    denom = math.log(n) - math.log(float(np.sum(-np.log(y))))
    raw = math.log(d) / denom if denom != 0 else math.inf
    return raw, max(raw, 1.0)


@_timed
def est_dmle(family: str, data, cfg: EstimatorConfig | None = None,
             closed_form: bool = True) -> EstimateResult:
    cfg = cfg or EstimatorConfig()
    u = _check_data(data)
    if family == "G" and closed_form:
        raw, theta = gumbel_dmle(u)
        converged = math.isfinite(theta)
        return EstimateResult("dmle", theta, converged=converged, clamped=raw < 1,
                              objective=diag_neg_loglik("G", u)(theta) if converged else math.nan,
                              extra={"raw": raw})
    theta, res, at_bound = _optimise(family, diag_neg_loglik(family, u), cfg, cfg.tol)
    return EstimateResult("dmle", theta, converged=res.converged and math.isfinite(res.fun),
                          clamped=at_bound, objective=res.fun, evals=res.nfev)


def estimate(family: str, data, method: str, cfg: EstimatorConfig | None = None,
             rng: RngStream | None = None) -> EstimateResult:
    """Dispatch on a method tag."""
    get_family(family)
    cfg = cfg or EstimatorConfig()
    if method == "tau-tau-bar":
        return est_tau_tau_bar(family, data, cfg)
    if method == "tau-theta-bar":
        return est_tau_theta_bar(family, data, cfg)
    if method == "beta":
        return est_beta(family, data, cfg)
    if method.startswith("mde-") and method[4:] in MDE_KINDS:
        return est_mde(family, data, method[4:], cfg)
    if method == "mle":
        return est_mle(family, data, cfg)
    if method == "smle":
        return est_smle(family, data, cfg, rng)
    if method == "dmle":
        return est_dmle(family, data, cfg)
    raise ArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


__all__ = [
    "METHODS", "MDE_KINDS", "EstimatorConfig", "EstimateResult", "pobs", "sample_tau",
    "pairwise_tau", "sample_beta", "initial_interval", "tau_interval", "est_tau_tau_bar",
    "est_tau_theta_bar", "est_beta", "est_mde", "est_mle", "est_smle", "est_dmle",
    "estimate", "neg_loglik", "diag_neg_loglik", "gumbel_dmle", "smle_log_dpsi",
    "mde_objective", "smle_neg_loglik",
]
