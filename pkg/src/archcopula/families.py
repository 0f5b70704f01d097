"""The five one-parameter Archimedean families A, C, F, G and J.

Each family is a small stateless class exposing the generator, its inverse and
derivatives in log space; :class:`FamilySpec` binds a family to a parameter
value.  All numerical work uses numpy arrays and log-space arithmetic so that
densities stay finite in dimension 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, EvaluationError, RangeError
from .numerics import (
    _log1mexp,
    brent_root,
    debye1,
    log1mexp_exp,
    log_expm1,
    log_neg_log1mexp,
    lssum_checked,
    lsum,
    polylog_neg,
)
from .polynomials import polyG, polyJ

FAMILIES = ("A", "C", "F", "G", "J")

JOE_TAU_TOL = 1e-14
#: largest a-priori relative error accepted from the alternating survival sum in beta
BETA_MAX_RELERR = 1e-6
JOE_TAU_MAXTERMS = 10_000_000


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


class Family:
    """Base class; subclasses implement the family-specific formulas.

    ``theta_lo``/``theta_hi`` describe the admissible parameter range and
    ``tau_sup`` the supremum of attainable Kendall's tau.
    """

    name: str
    theta_lo: float
    theta_hi: float = math.inf
    lo_closed: bool
    #: parameter value giving the independence copula, if it is admissible
    independence: float | None = None
    tau_sup: float = 1.0

    def check_theta(self, theta):
        ok_lo = theta >= self.theta_lo if self.lo_closed else theta > self.theta_lo
        if not (ok_lo and theta < self.theta_hi and math.isfinite(theta)):
            lo = "[" if self.lo_closed else "("
            raise DomainError(
                f"theta={theta!r} outside {self.name} range {lo}{self.theta_lo}, {self.theta_hi})")

    # The methods below take theta as a float and numpy arrays for t / u.

    def psi(self, theta, t):
        raise NotImplementedError

    def psi_inv(self, theta, u):
        raise NotImplementedError

    def log_psi_inv(self, theta, u):
        with np.errstate(divide="ignore"):
            return np.log(self.psi_inv(theta, u))

    def log_neg_dpsi_inv(self, theta, u):
        """``log(-(psi^{-1})'(u))``."""
        raise NotImplementedError

    def log_dpsi(self, theta, k, t):
        """``log((-1)^k psi^(k)(t))``."""
        raise NotImplementedError

    def log_dpsi_logt(self, theta, k, logt):
        """:meth:`log_dpsi` given ``log t``; override where ``t`` itself can underflow."""
        return self.log_dpsi(theta, k, np.exp(logt))

    def log_density(self, theta, u, cache):
        raise NotImplementedError

    def tau(self, theta):
        raise NotImplementedError

    def tau_inv(self, tau):
        return _tau_inv_numeric(self, tau)

    def prepare(self, theta, d):
        """Constants reused by :meth:`log_density` for fixed ``(theta, d)``."""
        return {}


class AliMikhailHaq(Family):
    name = "A"
    theta_lo, theta_hi, lo_closed = 0.0, 1.0, True
    independence = 0.0
    tau_sup = 1.0 / 3.0

    def psi(self, theta, t):
        t = _arr(t)
        with np.errstate(over="ignore"):
            e = np.exp(-t)
        return (1 - theta) * e / (1 - theta * e)

    def psi_inv(self, theta, u):
        u = _arr(u)
        with np.errstate(divide="ignore"):
            return np.log1p((1 - theta) * (1 - u) / u)

    def log_neg_dpsi_inv(self, theta, u):
        u = _arr(u)
        return math.log1p(-theta) - np.log(u) - np.log1p(-theta * (1 - u))

    def log_dpsi(self, theta, k, t):
        t = _arr(t)
        if theta == 0.0:
            return -t
        return math.log1p(-theta) - math.log(theta) + polylog_neg(k, math.log(theta) - t)

    def log_density(self, theta, u, cache):
        n, d = u.shape
        if theta == 0.0:
            return np.zeros(n)
        logu = np.log(u)
        log_h = math.log(theta) + np.sum(logu - np.log1p(-theta * (1 - u)), axis=1)
        return ((d + 1) * math.log1p(-theta) - 2 * math.log(theta) + log_h
                - 2 * logu.sum(axis=1) + polylog_neg(d, log_h))

    def tau(self, theta):
        if theta == 0.0:
            return 0.0
        if theta <= 1e-2:
            return 2 / 9 * theta * (1 + theta * (1 / 4 + theta / 10 * (1 + theta * (1 / 2 + theta * 2 / 7))))
        return 1 - 2 * (theta + (1 - theta) ** 2 * math.log1p(-theta)) / (3 * theta**2)


class Clayton(Family):
    name = "C"
    theta_lo, lo_closed = 0.0, False

    def psi(self, theta, t):
        return np.exp(-np.log1p(_arr(t)) / theta)

    def psi_inv(self, theta, u):
        with np.errstate(divide="ignore", over="ignore"):
            return np.expm1(-theta * np.log(_arr(u)))

    def log_psi_inv(self, theta, u):
        with np.errstate(divide="ignore"):
            return log_expm1(-theta * np.log(_arr(u)))

    def log_neg_dpsi_inv(self, theta, u):
        return math.log(theta) - (theta + 1) * np.log(_arr(u))

    def log_dpsi(self, theta, k, t):
        alpha = 1 / theta
        const = float(np.sum(np.log(alpha + np.arange(k)))) if k else 0.0
        return const - (alpha + k) * np.log1p(_arr(t))

    def prepare(self, theta, d):
        return {"log_prod": float(np.sum(np.log1p(theta * np.arange(d))))}

    def log_density(self, theta, u, cache):
        n, d = u.shape
        logu = np.log(u)
        log_t = lsum(self.log_psi_inv(theta, u), axis=1)
        log1p_t = np.logaddexp(0.0, log_t)
        return cache["log_prod"] - (1 + theta) * logu.sum(axis=1) - (d + 1 / theta) * log1p_t

    def tau(self, theta):
        return theta / (theta + 2)

    def tau_inv(self, tau):
        _check_tau(self, tau)
        return 2 * tau / (1 - tau)


class Frank(Family):
    name = "F"
    theta_lo, lo_closed = 0.0, False

    @staticmethod
    def _log_one_minus_z(theta, t):
        # log(1 - (1 - e^-theta) e^-t) = log(1 - e^-t + e^-(theta + t)), both terms positive
        t = _arr(t)
        return np.logaddexp(_log1mexp(t), -theta - t)

    def psi(self, theta, t):
        return -self._log_one_minus_z(theta, t) / theta

    def psi_inv(self, theta, u):
        u = _arr(u)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # (exp(-u theta) - exp(-theta)) / expm1(-theta), numerator rearranged
            ratio = np.exp(-u * theta) * -np.expm1(-theta * (1 - u)) / np.expm1(-theta)
            near_one = -np.log1p(ratio)
            near_zero = _log1mexp(theta) - _log1mexp(u * theta)
        return np.where(ratio > -0.5, near_one, near_zero)

    def log_psi_inv(self, theta, u):
        # psi^{-1}(u) = -log(1 - r), r = (e^{-theta u} - e^{-theta}) / (1 - e^{-theta});
        # t underflows for theta u beyond ~745 while log t stays representable
        u = _arr(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_r = -theta * u + _log1mexp(theta * (1 - u)) - _log1mexp(theta)
            return log_neg_log1mexp(-log_r)

    def log_neg_dpsi_inv(self, theta, u):
        return math.log(theta) - log_expm1(theta * _arr(u))

    def log_dpsi(self, theta, k, t):
        t = _arr(t)
        with np.errstate(divide="ignore"):
            return self.log_dpsi_logt(theta, k, np.log(t))

    def log_dpsi_logt(self, theta, k, logt):
        logt = _arr(logt)
        t = np.exp(logt)
        logz = _log1mexp(theta) - t
        # 1 - z = (1 - e^{-t}) + e^{-theta - t}; kept apart from log z, which rounds to 0
        log1mz = np.logaddexp(log1mexp_exp(logt), -theta - t)
        if k == 0:
            return np.log(-self._log_one_minus_z(theta, t)) - math.log(theta)
        return polylog_neg(k - 1, logz, log1mz) - math.log(theta)

    def prepare(self, theta, d):
        return {"l1m": float(_log1mexp(theta)), "lnl": float(log_neg_log1mexp(theta))}

    def log_density(self, theta, u, cache):
        n, d = u.shape
        l1m = cache["l1m"]
        # h = prod(1 - e^{-theta u_j}) / (1 - e^{-theta})^(d-1) rounds to 1 for
        # large theta, so carry ell = log(-log h) instead of log h
        b = np.column_stack([log_neg_log1mexp(theta * u), np.full(n, math.log(d - 1) + cache["lnl"])])
        ell, _ = lssum_checked(b, np.r_[np.ones(d), -1.0], axis=1)
        log_h = -np.exp(ell)
        return ((d - 1) * (math.log(theta) - l1m) + polylog_neg(d - 1, log_h, log1mexp_exp(ell))
                - theta * u.sum(axis=1) - log_h)

    def tau(self, theta):
        if theta < 1e-3:
            return theta / 9 - theta**3 / 900
        return 1 + 4 * (debye1(theta) - 1) / theta


class Gumbel(Family):
    name = "G"
    theta_lo, lo_closed = 1.0, True
    independence = 1.0

    def psi(self, theta, t):
        return np.exp(-_arr(t) ** (1 / theta))

    def psi_inv(self, theta, u):
        return (-np.log(_arr(u))) ** theta

    def log_psi_inv(self, theta, u):
        with np.errstate(divide="ignore"):
            return theta * np.log(-np.log(_arr(u)))

    def log_neg_dpsi_inv(self, theta, u):
        logu = np.log(_arr(u))
        return math.log(theta) + (theta - 1) * np.log(-logu) - logu

    def log_dpsi(self, theta, k, t):
        t = _arr(t)
        alpha = 1 / theta
        logt = np.log(t)
        base = -np.exp(alpha * logt)
        if k == 0:
            return base
        return base - k * logt + polyG(alpha * logt, alpha, k)

    def log_density(self, theta, u, cache):
        n, d = u.shape
        alpha = 1 / theta
        logu = np.log(u)
        lml = np.log(-logu)
        log_t = lsum(theta * lml, axis=1)
        lx = alpha * log_t
        return (d * math.log(theta) - np.exp(lx) + (theta - 1) * lml.sum(axis=1)
                - d * log_t - logu.sum(axis=1) + polyG(lx, alpha, d))

    def tau(self, theta):
        return (theta - 1) / theta

    def tau_inv(self, tau):
        _check_tau(self, tau)
        return 1 / (1 - tau)


class Joe(Family):
    name = "J"
    theta_lo, lo_closed = 1.0, True
    independence = 1.0

    def psi(self, theta, t):
        return -np.expm1(_log1mexp(_arr(t)) / theta)

    def psi_inv(self, theta, u):
        return -_log1mexp(-theta * np.log1p(-_arr(u)))

    def log_neg_dpsi_inv(self, theta, u):
        y = theta * np.log1p(-_arr(u))
        return math.log(theta) + (theta - 1) * np.log1p(-_arr(u)) - _log1mexp(-y)

    def log_dpsi(self, theta, k, t):
        t = _arr(t)
        alpha = 1 / theta
        l1m = _log1mexp(t)
        if k == 0:
            return _log1mexp(-alpha * l1m)
        return -math.log(theta) + (alpha - 1) * l1m - t + polyJ(-t - l1m, alpha, k)

    def log_density(self, theta, u, cache):
        n, d = u.shape
        alpha = 1 / theta
        log1m_u = np.log1p(-u)
        # h = prod(1 - (1 - u_j)^theta); as for Frank, work with ell = log(-log h)
        ell = lsum(log_neg_log1mexp(-theta * log1m_u), axis=1)
        log_h = -np.exp(ell)
        l1m_h = log1mexp_exp(ell)
        return ((d - 1) * math.log(theta) + (theta - 1) * log1m_u.sum(axis=1)
                - (1 - alpha) * l1m_h + polyJ(log_h - l1m_h, alpha, d))

    def tau(self, theta):
        if theta == 1.0:
            return 0.0
        # 1 - 4 sum_k 1/(k (theta k + 2)(theta (k-1) + 2)), summed in blocks
        total = 0.0
        start = 1
        block = 4096
        while start <= JOE_TAU_MAXTERMS:
            k = np.arange(start, min(start + block, JOE_TAU_MAXTERMS + 1), dtype=float)
            terms = 1 / (k * (theta * k + 2) * (theta * (k - 1) + 2))
            small = terms < JOE_TAU_TOL
            if small.any():
                total += terms[: int(np.argmax(small))].sum()
                break
            total += terms.sum()
            start += block
            block *= 2
        return 1 - 4 * total


_REGISTRY: dict[str, Family] = {f.name: f for f in (AliMikhailHaq(), Clayton(), Frank(), Gumbel(), Joe())}


def get_family(name: str) -> Family:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {', '.join(FAMILIES)}") from None


def attainable_tau(family: str) -> tuple[float, float]:
    """``(inf, sup)`` of Kendall's tau over the admissible parameter range."""
    fam = get_family(family)
    return 0.0, fam.tau_sup


def _check_tau(fam, tau):
    if not tau >= 0:
        raise RangeError(f"tau={tau!r} below the attainable range of family {fam.name}", bound="lower")
    if tau == 0 and fam.independence is None:
        raise RangeError(f"tau=0 is not attained by family {fam.name} (open lower bound)", bound="lower")
    if not tau < fam.tau_sup:
        raise RangeError(f"tau={tau!r} at or above the attainable supremum {fam.tau_sup:g} of family {fam.name}",
                         bound="upper")


def _tau_inv_numeric(fam, tau):
    _check_tau(fam, tau)
    if tau == 0:
        return fam.independence
    if fam.name == "A":
        lo, hi = 0.0, 1.0 - 1e-15
    else:
        lo = fam.theta_lo if fam.lo_closed else 1e-12
        hi = max(2.0 * lo, 10.0)
        while fam.tau(hi) < tau:
            hi *= 2
            if hi > 1e12:
                raise RangeError(f"tau={tau!r} not reachable for family {fam.name}", bound="upper")
    return brent_root(lambda th: fam.tau(th) - tau, lo, hi, tol=1e-14 * max(1.0, hi))


# ---------------------------------------------------------------------------
# public value types


@dataclass(frozen=True)
class FamilySpec:
    """A family tag together with a parameter value inside its range."""

    family: str
    theta: float

    def __post_init__(self):
        fam = get_family(self.family)
        object.__setattr__(self, "theta", float(self.theta))
        fam.check_theta(self.theta)

    @property
    def impl(self) -> Family:
        return _REGISTRY[self.family]

    @classmethod
    def from_tau(cls, family: str, tau: float) -> "FamilySpec":
        return cls(family, tau_inv(family, tau))

    @property
    def is_independence(self) -> bool:
        return self.impl.independence == self.theta

    def psi(self, t):
        return psi(self, t)

    def psi_inv(self, u):
        return psi_inv(self, u)

    def log_dpsi(self, k, t):
        return log_dpsi(self, k, t)

    def tau(self):
        return tau(self)

    def beta(self, d):
        return beta(self, d)


def psi(spec: FamilySpec, t):
    """Generator ``psi(t)`` for ``t >= 0`` (``inf`` allowed)."""
    t = _arr(t)
    if np.any(~(t >= 0)):
        raise DomainError("psi requires t >= 0")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = np.where(np.isposinf(t), 0.0, spec.impl.psi(spec.theta, np.where(np.isposinf(t), 1.0, t)))
    return _out(out)


def psi_inv(spec: FamilySpec, u):
    """Inverse generator on ``[0, 1]``."""
    u = _arr(u)
    if np.any(~((u >= 0) & (u <= 1))):
        raise DomainError("psi_inv requires u in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = spec.impl.psi_inv(spec.theta, np.clip(u, 1e-300, 1.0))
    out = np.where(u == 0, np.inf, np.where(u == 1, 0.0, inner))
    return _out(out)


def log_dpsi(spec: FamilySpec, k: int, t):
    """``log((-1)^k psi^(k)(t))`` for ``t > 0``."""
    t = _arr(t)
    if k < 0:
        raise DomainError("derivative order must be nonnegative")
    if np.any(~(t > 0)):
        raise DomainError("log_dpsi requires t > 0")
    return _out(spec.impl.log_dpsi(spec.theta, k, t))


def log_neg_dpsi_inv(spec: FamilySpec, u):
    """``log(-(psi^{-1})'(u))`` for ``u`` in ``(0, 1)``."""
    return _out(spec.impl.log_neg_dpsi_inv(spec.theta, _arr(u)))


def log_psi_inv(spec: FamilySpec, u):
    return _out(spec.impl.log_psi_inv(spec.theta, _arr(u)))


@dataclass
class DensityContext:
    """Constants for repeated density evaluation at fixed ``(family, theta, d)``."""

    spec: FamilySpec
    d: int
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.d < 2:
            raise DomainError("dimension must be at least 2")
        self.cache = self.spec.impl.prepare(self.spec.theta, self.d)

    def log_density(self, u):
        return log_density(self, u)


def log_density(ctx: DensityContext, u):
    """Log copula density at one point (shape ``(d,)``) or many (``(n, d)``)."""
    arr = _arr(u)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != ctx.d:
        raise DomainError(f"expected {ctx.d} columns, got {arr.shape[1]}")
    if np.any(~((arr > 0) & (arr < 1))):
        raise DomainError("log_density requires every component in (0, 1)")
    out = ctx.spec.impl.log_density(ctx.spec.theta, arr, ctx.cache)
    return float(out[0]) if single else out


def log_density_generic(spec: FamilySpec, u):
    """Same density assembled as ``log_dpsi(d, t) + sum log(-(psi^{-1})'(u_j))``."""
    u = np.atleast_2d(_arr(u))
    d = u.shape[1]
    t = np.exp(lsum(spec.impl.log_psi_inv(spec.theta, u), axis=1))
    return spec.impl.log_dpsi(spec.theta, d, t) + np.sum(spec.impl.log_neg_dpsi_inv(spec.theta, u), axis=1)


# ---------------------------------------------------------------------------
# dependence measures


def tau(spec: FamilySpec) -> float:
    """Population Kendall's tau."""
    return float(spec.impl.tau(spec.theta))


def tau_inv(family: str, tau_target: float) -> float:
    """Parameter with Kendall's tau equal to `tau_target`."""
    return float(get_family(family).tau_inv(float(tau_target)))


def _survival_half(spec, d, checked=True):
    # sum_j C(d,j) (-1)^j psi(j psi^{-1}(1/2)), the survival copula at (1/2, ..., 1/2)
    c = psi_inv(spec, 0.5)
    j = np.arange(d + 1)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logpsi = np.log(psi(spec, np.where(j == 0, 0.0, j * c)))
        b = gammaln(d + 1) - gammaln(j + 1) - gammaln(d - j + 1) + logpsi
        value, log_relerr = lssum_checked(b, (-1.0) ** j, axis=-1)
    if not np.isfinite(value):
        raise EvaluationError(f"survival copula at 1/2 not positive for {spec.family}, theta={spec.theta:g}, d={d}")
    if checked and log_relerr > math.log(BETA_MAX_RELERR):
        raise EvaluationError(f"survival copula at 1/2 lost to cancellation for {spec.family}, "
                              f"theta={spec.theta:g}, d={d} (relative error bound {math.exp(log_relerr):.1e})")
    return math.exp(float(value))


def beta(spec: FamilySpec, d: int, *, checked: bool = True) -> float:
    """Multivariate Blomqvist's beta.

    ``checked=False`` skips the rounding-error test on the survival sum and
    returns whatever double precision produces, which can be far outside
    ``[-1, 1]`` at large ``d``.  Only the breakdown path of the beta
    estimator uses it.

    Raises
    ------
    EvaluationError
        The alternating survival sum cancelled to a non-positive value, or
        its rounding-error bound exceeds ``BETA_MAX_RELERR`` (large ``d``).
    """
    if d < 2:
        raise DomainError("beta needs d >= 2")
    if spec.is_independence:
        return 0.0
    diag = float(psi(spec, d * psi_inv(spec, 0.5)))
    surv = _survival_half(spec, d, checked)
    scale = 2.0 ** (d - 1) / (2.0 ** (d - 1) - 1)
    return scale * (diag + surv - 2.0 ** (1 - d))


def _evaluable_endpoint(f, inner, outer, steps=60):
    """Move `outer` geometrically towards `inner` until `f` evaluates."""
    x = outer
    for _ in range(steps):
        try:
            return x, f(x)
        except EvaluationError:
            x = math.sqrt(inner * x)
    return x, f(x)


def beta_inv(family: str, beta_hat: float, d: int, interval: tuple[float, float], *,
             checked: bool = True):
    """Invert :func:`beta` on ``interval``.

    An endpoint at which beta cannot be evaluated (cancellation in the
    survival sum) is moved inwards until it can.

    Returns
    -------
    theta : float
    clamped : bool
        True when `beta_hat` lies outside the range of beta on the interval
        and the nearer endpoint was returned.

    Raises
    ------
    EvaluationError
        Beta cannot be evaluated anywhere near an endpoint, or inside the
        bracket during root finding.
    """
    lo, hi = interval
    if beta_hat < 0:
        # beta >= 0 throughout every family's parameter space, so a negative
        # sample value is below the attainable range whatever d is
        return lo, True
    f = lambda th: beta(FamilySpec(family, th), d, checked=checked) - beta_hat  # noqa: E731
    mid = math.sqrt(lo * hi)
    lo, flo = _evaluable_endpoint(f, mid, lo)
    hi, fhi = _evaluable_endpoint(f, mid, hi)
    if flo < 0 < fhi:
        return brent_root(f, lo, hi), False
    if flo == 0:
        return lo, False
    if fhi == 0:
        return hi, False
    # out of range, or the beta curve is numerically broken; take the nearer endpoint
    return (lo if abs(flo) <= abs(fhi) else hi), True


# ---------------------------------------------------------------------------
# diagonal


def log_diag_density(spec: FamilySpec, d: int, y):
    """Log density of ``max_j U_j``: ``log d + log(-psi'(d psi^{-1}(y))) + log(-(psi^{-1})'(y))``."""
    y = _arr(y)
    if np.any(~((y > 0) & (y < 1))):
        raise DomainError("log_diag_density requires y in (0, 1)")
    fam = spec.impl
    logt = math.log(d) + fam.log_psi_inv(spec.theta, y)
    return _out(math.log(d) + fam.log_dpsi_logt(spec.theta, 1, logt) + fam.log_neg_dpsi_inv(spec.theta, y))


# ---------------------------------------------------------------------------
# reparameterisation


@dataclass(frozen=True)
class Reparam:
    family: str
    to_alpha: Callable[[float], float]
    from_alpha: Callable[[float], float]
    alpha_range: tuple[float, float]


def _atan_to(theta):
    return 2 * math.atan(theta) / math.pi


def _atan_from(alpha):
    return math.tan(math.pi * alpha / 2)


def _inv_to(theta):
    return 1 - 1 / theta


def _inv_from(alpha):
    return 1 / (1 - alpha)


def _ident(x):
    return x


def reparam(family: str) -> Reparam:
    """Bounded optimisation coordinate for each family."""
    get_family(family)
    if family in ("C", "F"):
        return Reparam(family, _atan_to, _atan_from, (0.0, 1.0))
    if family in ("G", "J"):
        return Reparam(family, _inv_to, _inv_from, (0.0, 1.0))
    return Reparam(family, _ident, _ident, (0.0, 1.0))
