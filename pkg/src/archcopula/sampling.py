"""Frailty sampling ``U_j = psi(E_j / V)`` with reproducible random streams.

Each family's mixing law ``F = LS^{-1}[psi]``:

====== ==============================================
family  latent ``V``
====== ==============================================
A       geometric on ``{1, 2, ...}``, success ``1 - theta``
C       ``Gamma(1/theta, 1)``
F       logarithmic with parameter ``1 - exp(-theta)``
G       positive stable, Laplace transform ``exp(-t^(1/theta))``
J       Sibuya with parameter ``1/theta``
====== ==============================================
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import ArgumentError
from .families import FamilySpec, psi
from .numerics import _log1mexp

#: smallest and largest values an emitted copula sample may take
U_MIN = np.finfo(float).tiny
U_MAX = 1.0 - np.finfo(float).epsneg


def _purpose_key(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode())


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by ``(master_seed, stream_id)``.

    The generator is Philox keyed through :class:`numpy.random.SeedSequence`
    with the stream id as spawn key, so distinct ids give independent streams
    without any coordination between them.
    """

    master_seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ArgumentError("master_seed must be a 64-bit unsigned integer")
        key = tuple(_purpose_key(t) for t in self.stream_id)
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=key)
        object.__setattr__(self, "_gen", np.random.Generator(np.random.Philox(ss)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, *tags) -> "RngStream":
        """Independent stream with `tags` appended to the id."""
        return RngStream(self.master_seed, tuple(self.stream_id) + tags)

    def uniform(self, size=None):
        return self._gen.random(size)

    def exponential(self, size=None):
        # inverse transform keeps the variate map platform independent
        return -np.log1p(-self._gen.random(size))


class LatentSample(NamedTuple):
    v: float
    family: str
    theta: float


# ---------------------------------------------------------------------------
# mixing laws


def _geometric(theta, m, rng):
    e = rng.exponential(m)
    return 1.0 + np.floor(e / -np.log(theta))


def _gamma(theta, m, rng):
    return rng.generator.gamma(1.0 / theta, 1.0, size=m)


def _logarithmic(theta, m, rng):
    # Kemp's LK algorithm with h = log(1 - p) = -theta
    u1 = rng.uniform(m)
    u2 = rng.uniform(m)
    logp = _log1mexp(theta)
    with np.errstate(divide="ignore"):
        logq = _log1mexp(u1 * theta)  # q = 1 - exp(u1 h)
        log_u2 = np.log(u2)
        deep = 1.0 + np.floor(log_u2 / logq)
    out = np.where(log_u2 < 2 * logq, deep, np.where(log_u2 > logq, 1.0, 2.0))
    return np.where(log_u2 > logp, 1.0, out)


def _stable(theta, m, rng):
    # Kanter's representation of the one-sided alpha-stable law
    alpha = 1.0 / theta
    u = np.pi * rng.uniform(m)
    e = rng.exponential(m)
    while np.any(u == 0.0):
        u = np.where(u == 0.0, np.pi * rng.uniform(m), u)
    logv = (np.log(np.sin(alpha * u)) - np.log(np.sin(u)) / alpha
            + (1 - alpha) / alpha * (np.log(np.sin((1 - alpha) * u)) - np.log(e)))
    with np.errstate(over="ignore"):
        return np.exp(logv)


def _sibuya_log_survival(k, alpha):
    # log P(V > k) = log Gamma(k+1-alpha) - log Gamma(k+1) - log Gamma(1-alpha)
    return gammaln(k + 1 - alpha) - gammaln(k + 1) - gammaln(1 - alpha)


def _sibuya(theta, m, rng):
    # inversion: V = min{k : P(V > k) <= w}, w uniform, started from the
    # asymptote P(V > k) ~ k^(-alpha) / Gamma(1 - alpha)
    alpha = 1.0 / theta
    w = 1.0 - rng.uniform(m)
    logw = np.log(w)
    big = 1.0 / np.finfo(float).eps
    with np.errstate(over="ignore"):
        guess = np.exp(-(logw + gammaln(1 - alpha)) / alpha)
    k = np.clip(np.floor(guess), 1.0, big)
    active = guess < big
    for _ in range(64):
        up = active & (_sibuya_log_survival(k, alpha) > logw)
        down = active & (k > 1) & (_sibuya_log_survival(k - 1, alpha) <= logw)
        if not (up.any() or down.any()):
            break
        k = k + up - down
    return np.where(logw >= np.log1p(-alpha), 1.0, k)


_SAMPLERS = {"A": _geometric, "C": _gamma, "F": _logarithmic, "G": _stable, "J": _sibuya}


def sample_V_block(spec: FamilySpec, m: int, rng: RngStream) -> np.ndarray:
    """`m` i.i.d. draws of the frailty ``V``."""
    if m < 0:
        raise ArgumentError("block size must be nonnegative")
    if m == 0:
        return np.empty(0)
    if spec.is_independence:
        return np.ones(m)
    return _SAMPLERS[spec.family](spec.theta, m, rng)


def sample_V(spec: FamilySpec, rng: RngStream) -> LatentSample:
    """One frailty draw."""
    return LatentSample(float(sample_V_block(spec, 1, rng)[0]), spec.family, spec.theta)


def sample_copula(spec: FamilySpec, n: int, d: int, rng: RngStream) -> np.ndarray:
    """Draw an ``n x d`` sample of the copula.

    Entries that round to 0 or 1 in double precision are moved to the nearest
    representable interior value so that every entry lies in ``(0, 1)``.
    """
    if n < 1 or d < 2:
        raise ArgumentError("need n >= 1 and d >= 2")
    if spec.is_independence:
        u = rng.uniform((n, d))
    else:
        v = sample_V_block(spec, n, rng)
        e = rng.exponential((n, d))
        # V may under- or overflow at extreme theta; the clip below handles it
        with np.errstate(divide="ignore", over="ignore"):
            u = psi(spec, e / v[:, None])
    return np.clip(u, U_MIN, U_MAX)
