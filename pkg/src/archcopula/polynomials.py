"""Logarithms of the Gumbel and Joe density polynomials.

``P^G_{d,a}(x) = sum_{k=1}^d a_dk(a) x^k`` has positive coefficients but every
closed form for them is an alternating sum, so several evaluation strategies
are provided.  Each strategy estimates its own rounding error and raises
:class:`~archcopula.errors.MethodFailure` (or marks rows as failed) instead of
returning an inaccurate value.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, DomainError, MethodFailure
from .numerics import (
    EPS,
    TABLE_BOUND,
    lssum_checked,
    lsum,
    stirling1_table,
    stirling2_table,
)

POLYG_METHODS = ("default", "dssib-log", "pois-direct", "pois", "stirling", "recurrence")

#: Relative error a method may claim before it reports failure.
MAX_RELERR = 1e-10
_LOG_MAX_RELERR = math.log(MAX_RELERR)


def _validate(alpha, d):
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not 1 <= d <= TABLE_BOUND:
        raise CapacityError(f"polynomial degree {d} beyond table bound {TABLE_BOUND}")


# ---------------------------------------------------------------------------
# shared ingredients


@lru_cache(maxsize=512)
def _falling_factorial_terms(alpha, d):
    """Signs ``s_j`` and ``log|(alpha j)_d|`` for ``j = 1..d``."""
    j = np.arange(1, d + 1)
    aj = alpha * j
    is_int = aj == np.floor(aj)
    sign = np.where(is_int & ~((alpha == 1.0) & (j == d)), 0,
                    (-1.0) ** (j - np.ceil(aj)))
    diffs = np.abs(aj[:, None] - np.arange(d)[None, :])
    with np.errstate(divide="ignore"):
        log_ff = np.log(diffs).sum(axis=1)
    sign = np.where(np.isfinite(log_ff), sign, 0)
    return sign.astype(float), log_ff


@lru_cache(maxsize=512)
def gumbel_coefficients(alpha: float, d: int) -> np.ndarray:
    """``log a_{m,k}(alpha)`` for all ``1 <= k <= m <= d`` (row ``m``, column ``k``).

    Built from the positive recurrence
    ``a_{m+1,k} = alpha a_{m,k-1} + (m - k alpha) a_{m,k}``, obtained by
    differentiating ``exp(-t^alpha) t^{-m} P_m(t^alpha)`` once more.  No
    cancellation occurs, so the result is accurate to a few ulps.
    """
    _validate(alpha, d)
    out = np.full((d + 1, d + 1), -np.inf)
    out[1, 1] = math.log(alpha)
    la = math.log(alpha)
    k = np.arange(d + 1)
    for m in range(1, d):
        prev = out[m]
        shifted = np.concatenate(([-np.inf], prev[:-1])) + la
        with np.errstate(divide="ignore"):
            lin = np.log(np.maximum(m - k * alpha, 0.0)) + prev
        out[m + 1] = np.logaddexp(shifted, lin)
        out[m + 1, 0] = -np.inf
    out.setflags(write=False)
    return out


def _poly_from_log_coefficients(logx, logcoef, kmin):
    k = np.arange(kmin, kmin + logcoef.shape[0])
    terms = logcoef + k * logx[..., None]
    return lsum(terms, axis=-1)


# ---------------------------------------------------------------------------
# individual strategies; each returns (values, ok) for vector logx


def _polyg_recurrence(logx, alpha, d):
    coef = gumbel_coefficients(alpha, d)[d, 1:]
    return _poly_from_log_coefficients(logx, coef, 1), np.ones(logx.shape, bool)


@lru_cache(maxsize=512)
def _dssib_log_coefficients(alpha, d):
    # a_dk = (1/k!) sum_{j=1}^k C(k,j) (alpha j)_d (-1)^(d-j); every term sign is s_j.
    sign, log_ff = _falling_factorial_terms(alpha, d)
    k = np.arange(1, d + 1)[:, None]
    j = np.arange(1, d + 1)[None, :]
    with np.errstate(invalid="ignore"):
        log_binom = gammaln(k + 1) - gammaln(j + 1) - gammaln(np.maximum(k - j, 0) + 1)
    mask = j <= k
    b = np.where(mask, log_binom + log_ff[None, :], -np.inf)
    s = np.where(mask, sign[None, :], 0.0)
    value, log_relerr = lssum_checked(b, s, axis=-1)
    logcoef = value - gammaln(np.arange(1, d + 1) + 1)
    return logcoef, log_relerr


def _polyg_dssib_log(logx, alpha, d):
    logcoef, log_relerr = _dssib_log_coefficients(alpha, d)
    if np.any(np.isnan(logcoef)):
        raise MethodFailure("dssib-log: a coefficient came out non-positive")
    values = _poly_from_log_coefficients(logx, logcoef, 1)
    # propagate coefficient errors through the positive sum
    err = _poly_from_log_coefficients(logx, logcoef + log_relerr, 1) - values
    return values, err < _LOG_MAX_RELERR


def _pois_terms(logx, alpha, d):
    sign, log_ff = _falling_factorial_terms(alpha, d)
    j = np.arange(1, d + 1)
    # log sum_{k<=m} x^k/k! for m = 0..d-1, accumulated in log space
    kk = np.arange(d)
    partial = np.logaddexp.accumulate(kk * logx[..., None] - gammaln(kk + 1), axis=-1)
    log_cdf_scaled = partial[..., d - j]  # = x + log F^Poi(x)(d - j)
    b = log_ff - gammaln(j + 1) + j * logx[..., None] + log_cdf_scaled
    return sign, b


def _polyg_pois(logx, alpha, d):
    sign, b = _pois_terms(logx, alpha, d)
    value, log_relerr = lssum_checked(b, sign, axis=-1)
    ok = np.isfinite(value) & (log_relerr < _LOG_MAX_RELERR)
    return value, ok


def _polyg_pois_direct(logx, alpha, d):
    from .numerics import poisson_cdf

    sign, log_ff = _falling_factorial_terms(alpha, d)
    j = np.arange(1, d + 1)
    x = np.exp(logx)[..., None]
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        cdf = poisson_cdf(d - j, x)
        b = log_ff - gammaln(j + 1) + j * logx[..., None] + x + np.log(cdf)
        terms = sign * np.exp(b)
        total = np.sum(terms, axis=-1)
        abs_total = np.sum(np.abs(terms) * (np.abs(np.where(np.isfinite(b), b, 0.0)) + 8.0), axis=-1)
        value = np.log(total)
        relerr = EPS * abs_total / total
    underflow = np.any((sign != 0) & (cdf == 0.0), axis=-1)
    ok = np.isfinite(value) & (total > 0) & np.isfinite(relerr) & (relerr < MAX_RELERR) & ~underflow
    return np.where(ok, value, np.nan), ok


def _polyg_stirling(logx, alpha, d):
    s1_sign, s1_log = stirling1_table()
    s2_log = stirling2_table()
    x = np.exp(logx)
    n = logx.shape[0]
    inner = np.zeros((n, d))
    inner_abs = np.zeros((n, d))
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, d + 1):
            # Horner in -x for sum_{k=0}^{j-1} S(j, k+1) (-x)^k, and in +x for the magnitude
            coef = np.exp(s2_log[j, 1:j + 1])
            acc = np.zeros(n)
            acc_abs = np.zeros(n)
            for c in coef[::-1]:
                acc = acc * (-x) + c
                acc_abs = acc_abs * x + c
            inner[:, j - 1] = acc
            inner_abs[:, j - 1] = acc_abs
    j = np.arange(1, d + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = s1_log[d, 1:d + 1] + j * math.log(alpha) + np.log(np.abs(inner))
        sgn = s1_sign[d, 1:d + 1] * np.sign(inner) * (-1.0) ** (d - 1)
        value, log_relerr = lssum_checked(np.where(np.isfinite(b), b, -np.inf), sgn, axis=-1)
        # inner condition numbers inflate the error of each outer term
        inner_cond = np.log(inner_abs) - np.log(np.abs(inner))
        b_err = b + np.log(j + 8.0) + inner_cond + math.log(EPS)
        log_err_inner = lsum(np.where(np.isfinite(b_err), b_err, -np.inf), axis=-1) - value
    finite_inputs = np.all(np.isfinite(inner) & np.isfinite(inner_abs), axis=-1)
    with np.errstate(invalid="ignore"):
        total_err = np.logaddexp(log_relerr, log_err_inner)
    value = value + logx
    ok = finite_inputs & np.isfinite(value) & (total_err < _LOG_MAX_RELERR)
    return np.where(ok, value, np.nan), ok


_STRATEGIES = {
    "recurrence": _polyg_recurrence,
    "dssib-log": _polyg_dssib_log,
    "pois": _polyg_pois,
    "pois-direct": _polyg_pois_direct,
    "stirling": _polyg_stirling,
}


def default_order(alpha: float, d: int) -> tuple[str, ...]:
    """Strategy order tried by ``method="default"``."""
    first = "dssib-log" if (alpha >= 0.5 or d <= 30) else "pois-direct"
    rest = [m for m in ("dssib-log", "pois-direct", "pois", "stirling") if m != first]
    return (first, *rest, "recurrence")


def polyG(logx, alpha: float, d: int, method: str = "default"):
    """``log P^G_{d,alpha}(x)`` evaluated from ``log x``.

    Parameters
    ----------
    logx : float or array_like
    alpha : float
        ``1/theta`` in ``(0, 1]``.
    d : int
        Polynomial degree (copula dimension).
    method : str
        One of :data:`POLYG_METHODS`.

    Raises
    ------
    MethodFailure
        A specific method (not ``default``) could not reach the required
        accuracy for at least one entry.
    """
    _validate(alpha, d)
    if method not in POLYG_METHODS:
        raise ValueError(f"unknown polyG method {method!r}; choose from {', '.join(POLYG_METHODS)}")
    arr = np.atleast_1d(np.asarray(logx, dtype=float))
    if d == 1:
        out = math.log(alpha) + arr
    elif method != "default":
        values, ok = _STRATEGIES[method](arr, alpha, d)
        if not np.all(ok):
            raise MethodFailure(f"polyG method {method!r} failed for {int((~ok).sum())} point(s)")
        out = values
    else:
        out = np.full(arr.shape, np.nan)
        todo = np.ones(arr.shape, bool)
        for name in default_order(alpha, d):
            try:
                values, ok = _STRATEGIES[name](arr[todo], alpha, d)
            except MethodFailure:
                continue
            idx = np.flatnonzero(todo)[ok]
            out[idx] = values[ok]
            todo[idx] = False
            if not todo.any():
                break
    return float(out[0]) if np.ndim(logx) == 0 else out


def polyG_method_values(logx, alpha, d, method):
    """Values and success mask of one strategy; used for cross-checks."""
    _validate(alpha, d)
    arr = np.atleast_1d(np.asarray(logx, dtype=float))
    try:
        return _STRATEGIES[method](arr, alpha, d)
    except MethodFailure:
        return np.full(arr.shape, np.nan), np.zeros(arr.shape, bool)


@lru_cache(maxsize=512)
def joe_coefficients(alpha: float, d: int) -> np.ndarray:
    """``log a^J_{dk}(alpha) = log S(d, k+1) + log (k - alpha)_k`` for ``k = 0..d-1``."""
    _validate(alpha, d)
    k = np.arange(d)
    s2 = stirling2_table()[d, 1:d + 1]
    if alpha == 1.0:
        ff = np.where(k == 0, 0.0, -np.inf)
    else:
        ff = gammaln(k + 1 - alpha) - gammaln(1 - alpha)
    out = s2 + ff
    out.setflags(write=False)
    return out


def polyJ(logx, alpha: float, d: int):
    """``log P^J_{d,alpha}(x)``; all coefficients are positive so one log-sum suffices."""
    coef = joe_coefficients(alpha, d)
    arr = np.atleast_1d(np.asarray(logx, dtype=float))
    out = _poly_from_log_coefficients(arr, coef, 0)
    return float(out[0]) if np.ndim(logx) == 0 else out
