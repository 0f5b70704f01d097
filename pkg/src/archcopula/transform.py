"""Goodness-of-fit transform of Archimedean samples to independent uniforms.

For ``U ~ C`` with generator ``psi`` the components

    U'_j = (S_j / S_{j+1})^j,   S_j = sum_{k <= j} psi^{-1}(U_k),   j < d,

together with ``U'_d = K(C(U))`` are i.i.d. uniform, where ``K`` is the
Kendall distribution function.  The two univariate reductions
``Y^n = sum Phi^{-1}(U'_j)^2`` and ``Y^l = -sum log U'_j`` then follow
``chi^2_{d'}`` and ``Gamma(d', 1)`` laws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import ArgumentError, DomainError, RowError
from .families import FamilySpec
from .numerics import chi2_cdf, gamma_cdf, lsum, norm_quantile

#: clamp applied to U' before the normal quantile and the log
CLAMP_EPS = 1e-15

#: dimension up to which the Kendall component is included by default
INCLUDE_K_MAX_D = 5


@dataclass(frozen=True)
class TransformOutput:
    uprime: np.ndarray
    include_k: bool
    y_n: np.ndarray
    y_l: np.ndarray


def _kendall_from_logt(spec: FamilySpec, d: int, logx):
    # K evaluated at psi(x), x = exp(logx) = psi^{-1}(t)
    fam = spec.impl
    x = np.exp(logx)
    k = np.arange(d)
    terms = np.stack([fam.log_dpsi(spec.theta, int(kk), x) for kk in k], axis=-1)
    terms = terms + k * logx[..., None] - gammaln(k + 1)
    return np.minimum(np.exp(lsum(terms, axis=-1)), 1.0)


def kendall_K(spec: FamilySpec, d: int, t):
    """Kendall distribution function ``K(t) = P(C(U) <= t)``.

    ``K(t) = sum_{k<d} (-1)^k psi^(k)(x) x^k / k!`` with ``x = psi^{-1}(t)``;
    every term is positive, so the sum is a plain log-sum-exp.
    """
    if d < 1:
        raise DomainError("d must be at least 1")
    t = np.asarray(t, dtype=float)
    if np.any(~((t > 0) & (t < 1))):
        raise DomainError("kendall_K requires t in (0, 1)")
    if d == 1:
        return float(t) if t.ndim == 0 else t.copy()
    logx = np.atleast_1d(spec.impl.log_psi_inv(spec.theta, t))
    out = _kendall_from_logt(spec, d, logx)
    return float(out[0]) if t.ndim == 0 else out.reshape(t.shape)


def hh_transform(spec: FamilySpec, data, include_k: bool | None = None) -> TransformOutput:
    """Transform rows of `data` to (approximately) i.i.d. uniforms.

    Parameters
    ----------
    spec : FamilySpec
    data : (n, d) array_like
        Entries in ``(0, 1)``.
    include_k : bool, optional
        Append ``K(C(U))`` as last column.  Defaults to ``d <= 5``.

    Raises
    ------
    RowError
        A row has a component equal to 0 or 1 (``row`` gives its index).
    """
    u = np.asarray(data, dtype=float)
    if u.ndim != 2 or u.shape[1] < 2:
        raise ArgumentError("data must be an n x d matrix with d >= 2")
    n, d = u.shape
    bad = np.flatnonzero(~np.all((u > 0) & (u < 1), axis=1))
    if bad.size:
        raise RowError(f"row {bad[0]} has a component outside (0, 1)", row=int(bad[0]))
    if include_k is None:
        include_k = d <= INCLUDE_K_MAX_D
    with np.errstate(divide="ignore"):
        logs = spec.impl.log_psi_inv(spec.theta, u)
    prefix = np.logaddexp.accumulate(logs, axis=1)
    j = np.arange(1, d)
    with np.errstate(invalid="ignore"):
        up = np.exp(j * (prefix[:, :-1] - prefix[:, 1:]))
    # -inf - -inf only arises at psi^{-1} = 0, impossible for interior data
    up = np.clip(np.nan_to_num(up, nan=1.0), 0.0, 1.0)
    if include_k:
        up = np.column_stack([up, _kendall_from_logt(spec, d, prefix[:, -1])])
    clamped = np.clip(up, CLAMP_EPS, 1.0 - CLAMP_EPS)
    y_n = np.sum(norm_quantile(clamped) ** 2, axis=1)
    y_l = -np.sum(np.log(clamped), axis=1)
    return TransformOutput(up, bool(include_k), y_n, y_l)


def reference_cdf(kind: str, dof: int) -> Callable:
    """CDF of the reference law of a reduction: ``"chi"`` or ``"gamma"``."""
    if kind == "chi":
        return lambda y: chi2_cdf(y, dof)
    if kind == "gamma":
        return lambda y: gamma_cdf(y, dof)
    raise ArgumentError(f"unknown reference {kind!r}; choose chi or gamma")


def _prepare(y_sorted, ref_cdf):
    y = np.asarray(y_sorted, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ArgumentError("need a non-empty vector")
    if np.any(np.diff(y) < 0):
        raise ArgumentError("input must be sorted ascending")
    return np.asarray(ref_cdf(y), dtype=float), y.size


def cvm_distance(y_sorted, ref_cdf: Callable) -> float:
    """Cramer-von Mises statistic ``1/(12n) + sum ((2i-1)/(2n) - F(y_(i)))^2``."""
    f, n = _prepare(y_sorted, ref_cdf)
    i = np.arange(1, n + 1)
    return float(1 / (12 * n) + np.sum(((2 * i - 1) / (2 * n) - f) ** 2))


def ks_distance(y_sorted, ref_cdf: Callable) -> float:
    """Kolmogorov-Smirnov statistic ``max_i max(F(y_(i)) - (i-1)/n, i/n - F(y_(i)))``."""
    f, n = _prepare(y_sorted, ref_cdf)
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(f - (i - 1) / n, i / n - f)))
