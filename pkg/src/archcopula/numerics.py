"""Log-space special functions and scalar solvers.

Everything here works on numpy arrays where that makes sense; log values use
``-inf`` for log 0 and never ``+inf``.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    ArgumentError,
    BracketError,
    CapacityError,
    ConvergenceError,
    DomainError,
    EvaluationError,
)

EPS = np.finfo(float).eps
LOG2 = math.log(2.0)

#: Largest order covered by the Stirling and Eulerian tables.
TABLE_BOUND = 120

BRENT_TOL = 1e-9
BRENT_MAXITER = 200


class SignedLogValue(NamedTuple):
    """A real number stored as ``sign * exp(logabs)``."""

    sign: int
    logabs: float

    def value(self) -> float:
        return self.sign * math.exp(self.logabs) if self.sign else 0.0


# ---------------------------------------------------------------------------
# log-sum-exp


def lsum(b, axis=None):
    """Return ``log(sum(exp(b)))`` without overflow.

    The maximum is pulled out first so that every exponentiated term lies in
    ``[0, 1]``.

    Parameters
    ----------
    b : array_like
        Log-values; ``-inf`` entries contribute nothing.
    axis : int, optional
        Reduction axis.  ``None`` reduces over all entries.

    Returns
    -------
    float or ndarray
        ``-inf`` where all inputs along the axis are ``-inf``.
    """
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        raise ArgumentError("lsum needs at least one term")
    if np.isnan(b).any() or np.isposinf(b).any():
        raise DomainError("lsum terms must be finite or -inf")
    bmax = np.max(b, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(bmax), bmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(b - shift), axis=axis, keepdims=True)) + shift
    out = np.where(np.isneginf(bmax), -np.inf, out)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _signed_parts(b, s, axis, presorted):
    # Sum each sign group separately, smallest magnitudes first.
    b = np.asarray(b, dtype=float)
    s = np.broadcast_to(np.asarray(s), b.shape)
    bmax = np.max(np.where(s != 0, b, -np.inf), axis=axis, keepdims=True)
    shift = np.where(np.isfinite(bmax), bmax, 0.0)
    pos = np.where(s > 0, b, -np.inf)
    neg = np.where(s < 0, b, -np.inf)
    if not presorted:
        pos = np.sort(pos, axis=axis)
        neg = np.sort(neg, axis=axis)
    sp = np.sum(np.exp(pos - shift), axis=axis, keepdims=True)
    sn = np.sum(np.exp(neg - shift), axis=axis, keepdims=True)
    return sp, sn, shift, bmax


def lssum(b, s, presorted=False, axis=None):
    """Return ``log(sum(s * exp(b)))`` for a positive signed sum.

    Parameters
    ----------
    b : array_like
        Log-magnitudes of the terms.
    s : array_like
        Term signs in ``{-1, 0, +1}``; broadcast against `b`.
    presorted : bool
        Caller guarantees `b` is ascending within each sign group.
    axis : int, optional

    Raises
    ------
    DomainError
        If the true sum is not positive; ``residual`` holds the signed log
        of the computed sum.
    """
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        raise ArgumentError("lssum needs at least one term")
    if np.shape(s) != b.shape and np.size(s) != 1:
        raise ArgumentError("b and s must have matching lengths")
    sp, sn, shift, _ = _signed_parts(b, s, axis, presorted)
    diff = sp - sn
    if np.any(diff <= 0):
        d0 = float(np.min(diff))
        residual = SignedLogValue(int(np.sign(d0)), math.log(abs(d0)) + float(np.max(shift)) if d0 else -math.inf)
        raise DomainError("signed sum is not positive", residual=residual)
    out = np.log(diff) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def lssum_checked(b, s, axis=-1):
    """Signed log-sum that reports instead of raising.

    Returns
    -------
    value : ndarray
        Log of the sum where it is positive, ``nan`` elsewhere.
    log_relerr : ndarray
        Log of an a-priori bound on the relative rounding error, based on the
        condition number ``sum|x_i| / |sum x_i|`` and the size of the
        log-magnitudes.
    """
    b = np.asarray(b, dtype=float)
    s = np.broadcast_to(np.asarray(s), b.shape)
    sp, sn, shift, _ = _signed_parts(b, s, axis, False)
    diff = np.squeeze(sp - sn, axis=axis)
    shift = np.squeeze(shift, axis=axis)
    active = np.where(s != 0, b, -np.inf)
    weight = np.where(np.isfinite(active), np.log(np.abs(np.where(np.isfinite(active), active, 0.0)) + 8.0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs_err = math.log(EPS) + lsum(active + weight, axis=axis)
        value = np.where(diff > 0, np.log(np.where(diff > 0, diff, 1.0)) + shift, np.nan)
        log_relerr = np.where(diff > 0, log_abs_err - value, np.inf)
    return value, log_relerr


# ---------------------------------------------------------------------------
# elementary log helpers


def _log1mexp(a):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a <= LOG2, np.log(-np.expm1(-a)), np.log1p(-np.exp(-a)))


def log_neg_log1mexp(x):
    """``log(-log(1 - exp(-x)))`` for ``x > 0``, finite even where ``exp(-x)`` underflows."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        # beyond 700, -log1p(-e^-x) = e^-x to working precision
        return np.where(x < 700.0, np.log(-_log1mexp(np.minimum(x, 700.0))), -x)


def log1mexp_exp(ell):
    """``log(1 - exp(-exp(ell)))``, i.e. :func:`log1mexp` of ``a = exp(ell)`` given ``log a``."""
    ell = np.asarray(ell, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        a = np.exp(ell)
        # log(1 - e^-a) = log a - a/2 + a^2/24 - ...
        return np.where(ell < -30.0, ell - a / 2, _log1mexp(a))


def log1mexp(a):
    """Accurate ``log(1 - exp(-a))`` for ``a > 0``.

    Uses ``log(-expm1(-a))`` up to ``a = log 2`` and ``log1p(-exp(-a))``
    beyond, which keeps full relative accuracy at both ends.
    """
    arr = np.asarray(a, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("log1mexp requires a > 0")
    out = _log1mexp(arr)
    return float(out) if out.ndim == 0 else out


def log_expm1(y):
    """``log(exp(y) - 1)`` for ``y > 0`` without overflow."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(y > 30.0, y + np.log1p(-np.exp(-y)), np.log(np.expm1(np.minimum(y, 30.0))))
    return out


# ---------------------------------------------------------------------------
# combinatorial tables

_table_lock = threading.Lock()
_tables: dict[str, tuple[np.ndarray, ...]] = {}


def _build_tables():
    n = TABLE_BOUND + 1
    s1 = [[0] * n for _ in range(n)]
    s2 = [[0] * n for _ in range(n)]
    eu = [[0] * n for _ in range(n)]
    s1[0][0] = s2[0][0] = eu[0][0] = 1
    for m in range(n - 1):
        for k in range(1, m + 2):
            s1[m + 1][k] = s1[m][k - 1] - m * s1[m][k]
            s2[m + 1][k] = s2[m][k - 1] + k * s2[m][k]
    for m in range(1, n):
        for k in range(m):
            eu[m][k] = (k + 1) * eu[m - 1][k] + (m - k) * (eu[m - 1][k - 1] if k else 0)

    def logs(tab):
        out = np.full((n, n), -np.inf)
        sgn = np.zeros((n, n), dtype=np.int8)
        for i in range(n):
            for j in range(n):
                v = tab[i][j]
                if v:
                    out[i, j] = math.log(abs(v))
                    sgn[i, j] = 1 if v > 0 else -1
        return sgn, out

    s1_sign, s1_log = logs(s1)
    _, s2_log = logs(s2)
    _, eu_log = logs(eu)
    for arr in (s1_sign, s1_log, s2_log, eu_log):
        arr.setflags(write=False)
    return {"s1": (s1_sign, s1_log), "s2": (s2_log,), "eulerian": (eu_log,)}


def _table(name):
    if not _tables:
        with _table_lock:
            if not _tables:
                _tables.update(_build_tables())
    return _tables[name]


def _check_index(n, k):
    if not (0 <= n <= TABLE_BOUND and 0 <= k <= TABLE_BOUND):
        raise CapacityError(f"index ({n}, {k}) beyond table bound {TABLE_BOUND}")


def stirling1(n: int, k: int) -> SignedLogValue:
    """Signed Stirling number of the first kind ``s(n, k)`` in log form."""
    _check_index(n, k)
    sign, logabs = _table("s1")
    return SignedLogValue(int(sign[n, k]), float(logabs[n, k]))


def stirling2(n: int, k: int) -> float:
    """``log S(n, k)`` for the Stirling numbers of the second kind."""
    _check_index(n, k)
    return float(_table("s2")[0][n, k])


def stirling1_table():
    """Read-only ``(sign, logabs)`` arrays of shape ``(TABLE_BOUND+1,)*2``."""
    return _table("s1")


def stirling2_table():
    return _table("s2")[0]


def eulerian_log_table():
    """``log A(n, k)`` (Eulerian numbers), ``-inf`` where zero."""
    return _table("eulerian")[0]


# ---------------------------------------------------------------------------
# special functions


def polylog_neg(n: int, logz, log1mz=None):
    """``log Li_{-n}(z)`` for ``z`` in ``(0, 1)``, given ``log z``.

    Uses the Eulerian-number closed form
    ``Li_{-n}(z) = sum_k A(n, k) z^(n-k) / (1-z)^(n+1)`` (``n >= 1``) and
    ``Li_0(z) = z / (1-z)``; ``log(1-z)`` goes through :func:`log1mexp`
    unless supplied as `log1mz` (needed when ``1 - z`` is below the
    resolution of ``log z``).
    """
    if not 0 <= n <= TABLE_BOUND:
        raise CapacityError(f"polylog order {n} beyond table bound {TABLE_BOUND}")
    logz = np.asarray(logz, dtype=float)
    if log1mz is None:
        if np.any(~(logz < 0)):
            raise DomainError("polylog_neg requires z in (0, 1)")
        log1mz = _log1mexp(-logz)
    else:
        log1mz = np.asarray(log1mz, dtype=float)
        if np.any(~((logz <= 0) & (log1mz < 0))):
            raise DomainError("polylog_neg requires z in (0, 1)")
    if n == 0:
        out = logz - log1mz
    else:
        coef = eulerian_log_table()[n, :n]
        powers = np.arange(n, 0, -1)
        terms = coef + powers * logz[..., None]
        out = lsum(terms, axis=-1) - (n + 1) * log1mz
    return float(out) if out.ndim == 0 else out


def debye1(theta: float) -> float:
    """Debye function of order one, ``(1/theta) * int_0^theta t/(e^t-1) dt``."""
    if theta < 0:
        raise DomainError("debye1 requires theta >= 0")
    if theta < 1e-4:
        return 1.0 - theta / 4.0 + theta**2 / 36.0

    def integrand(t):
        return 1.0 if t == 0.0 else t * math.exp(-t) / -math.expm1(-t)

    val, _ = integrate.quad(integrand, 0.0, theta, epsabs=0.0, epsrel=1e-12, limit=200)
    return val / theta


def inc_gamma_reg(a, x):
    """Regularized lower incomplete gamma function ``P(a, x)``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0) or np.any(x < 0):
        raise DomainError("inc_gamma_reg requires a > 0 and x >= 0")
    out = special.gammainc(a, x)
    return float(out) if out.ndim == 0 else out


def inc_gamma_reg_upper(a, x):
    """Complementary ``Q(a, x) = 1 - P(a, x)`` computed on its own path."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0) or np.any(x < 0):
        raise DomainError("inc_gamma_reg_upper requires a > 0 and x >= 0")
    out = special.gammaincc(a, x)
    return float(out) if out.ndim == 0 else out


def chi2_cdf(x, df):
    return inc_gamma_reg(df / 2.0, np.maximum(np.asarray(x, dtype=float), 0.0) / 2.0)


def gamma_cdf(x, shape):
    return inc_gamma_reg(shape, np.maximum(np.asarray(x, dtype=float), 0.0))


def poisson_cdf(k, lam):
    """``P(N <= k)`` for ``N ~ Poisson(lam)``, via ``Q(k+1, lam)``."""
    return inc_gamma_reg_upper(np.asarray(k, dtype=float) + 1.0, lam)


def norm_quantile(p):
    """Standard normal quantile function."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("norm_quantile requires p in (0, 1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scalar solvers


def brent_root(f: Callable[[float], float], lo: float, hi: float, tol: float = BRENT_TOL) -> float:
    """Root of `f` in ``[lo, hi]`` by Brent's method.

    Raises
    ------
    BracketError
        ``f(lo)`` and ``f(hi)`` have the same sign.
    EvaluationError
        `f` returned a non-finite value.
    """
    def g(x):
        v = f(x)
        if not math.isfinite(v):
            raise EvaluationError(f"non-finite function value {v!r} at x={x!r}")
        return v

    flo, fhi = g(lo), g(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]")
    root, info = optimize.brentq(g, lo, hi, xtol=tol, rtol=4 * EPS, maxiter=BRENT_MAXITER,
                                 full_output=True, disp=False)
    if not info.converged:
        raise ConvergenceError(f"brent_root did not converge in {BRENT_MAXITER} iterations")
    return float(root)


class MinimizeResult(NamedTuple):
    x: float
    fun: float
    converged: bool
    nfev: int


def brent_min(f: Callable[[float], float], lo: float, hi: float, tol: float = BRENT_TOL) -> MinimizeResult:
    """Local minimiser of `f` on ``[lo, hi]`` (Brent's golden-section/parabolic search).

    Non-finite objective values are treated as ``+inf`` so the search steps
    away from them.  Non-convergence is reported, not raised; the best iterate
    is returned.
    """
    def g(x):
        v = f(x)
        return v if v == v else math.inf

    res = optimize.minimize_scalar(g, bounds=(lo, hi), method="bounded",
                                   options={"xatol": tol, "maxiter": BRENT_MAXITER})
    return MinimizeResult(float(res.x), float(res.fun), bool(res.success), int(res.nfev))
