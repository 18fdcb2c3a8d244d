"""Exact random-variate generation.

The quadratic mechanism has complete exponential/Gamma representations of
the stationary population, the MRCA tuple and the ancestor counts; the
window clan counts and the stable-case number of oldest families are exact
for any mechanism. All samplers take a ``numpy.random.Generator`` (or an
:class:`RngStream`) and an optional ``size``; with ``size=None`` they return
scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import poch

from .laws import StationaryLaw
from .mechanism import CapabilityError, MechanismError

# N_A draws saturate here; P(N_A > 2**62) is below 1e-9 for alpha0 >= 1/2
NA_CAP = 2**62


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by ``(seed, stream_id)``.

    Child streams are derived by hashing ``(seed, stream_id, index)`` through
    numpy's ``SeedSequence``, so replicate chunks are independent and do not
    depend on how work is split between workers.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= v < 2**64):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), int(index)))
        return np.random.Generator(np.random.PCG64(seq))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected numpy Generator or RngStream, got {type(rng).__name__}")


def _scalar(x, size):
    if size is None:
        return x.item() if isinstance(x, np.ndarray) else x
    return x


def _quadratic_params(law: StationaryLaw, what: str) -> tuple[float, float]:
    spec = law.spec
    if not spec.is_quadratic:
        raise CapabilityError(f"{what} is only exact for the quadratic mechanism")
    return spec.beta, spec.theta


def _c_quadratic(beta, theta, t):
    return 2.0 * theta / np.expm1(2.0 * theta * beta * t)


@dataclass
class MrcaSample:
    """Draw(s) of (A, Z, Z_A, Z_I, Z_O); fields are floats or equal-length arrays."""

    A: float | np.ndarray
    Z: float | np.ndarray
    Z_A: float | np.ndarray
    Z_I: float | np.ndarray
    Z_O: float | np.ndarray


@dataclass
class AncestorSample:
    """Draw(s) of (Z_{-s}, M_s, Z_0) for a fixed lag ``s``."""

    Z_past: float | np.ndarray
    M: int | np.ndarray
    Z_now: float | np.ndarray
    s: float


def sample_Z_quadratic(law: StationaryLaw, rng, size=None):
    """Stationary size: (E1 + E2) / (2 theta)."""
    _, theta = _quadratic_params(law, "sample_Z_quadratic")
    g = _gen(rng)
    e = g.standard_exponential(size=(2,) if size is None else (2, size))
    return _scalar((e[0] + e[1]) / (2.0 * theta), size)


def sample_mrca_quadratic(law: StationaryLaw, rng, size=None) -> MrcaSample:
    """A = max(E1, E2)/(2 theta beta); given A = t, with r = 2 theta + c(t),
    Z_A = (E3+E4)/r, Z_I = (E5+E6)/r, Z_O = E7/r and Z = Z_I + Z_O."""
    beta, theta = _quadratic_params(law, "sample_mrca_quadratic")
    g = _gen(rng)
    e = g.standard_exponential(size=(7,) if size is None else (7, size))
    A = np.maximum(e[0], e[1]) / (2.0 * theta * beta)
    rate = 2.0 * theta + _c_quadratic(beta, theta, A)
    z_a = (e[2] + e[3]) / rate
    z_i = (e[4] + e[5]) / rate
    z_o = e[6] / rate
    z = z_i + z_o
    return MrcaSample(*(_scalar(v, size) for v in (A, z, z_a, z_i, z_o)))


def sample_A_given_Z_quadratic(law: StationaryLaw, z, rng, size=None):
    """TMRCA given Z = z: c(A) z is standard exponential, so
    A = log(1 + 2 theta z / E) / (2 beta theta)."""
    beta, theta = _quadratic_params(law, "sample_A_given_Z_quadratic")
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise MechanismError("z must be positive")
    g = _gen(rng)
    shape = None if size is None else size
    e = g.standard_exponential(size=shape)
    return _scalar(np.log1p(2.0 * theta * z / e) / (2.0 * beta * theta), size)


def sample_ancestors_quadratic(law: StationaryLaw, s: float, rng, size=None) -> AncestorSample:
    """Joint draw of (Z_{-s}, M_s, Z_0).

    Z_{-s} ~ Gamma(2, 2 theta); M_s | Z_{-s} ~ Poisson(c(s) Z_{-s}); Z_0 is the
    sum of an immigration part Gamma(2, r) and M_s surviving families, each
    Exponential(r), with r = 2 theta + c(s). All parts share the rate r, so
    Z_0 | M_s ~ Gamma(M_s + 2, r).
    """
    beta, theta = _quadratic_params(law, "sample_ancestors_quadratic")
    if not s > 0:
        raise MechanismError(f"s must be positive, got {s!r}")
    g = _gen(rng)
    c = float(_c_quadratic(beta, theta, s))
    z_past = g.gamma(2.0, 1.0 / (2.0 * theta), size=size)
    m = g.poisson(c * z_past)
    z_now = g.gamma(np.asarray(m) + 2.0, 1.0 / (2.0 * theta + c))
    return AncestorSample(_scalar(z_past, size), _scalar(m, size), _scalar(z_now, size), float(s))


def sample_window_count(law: StationaryLaw, d: float, rng, size=None):
    """Number of clans born before a and still alive at a + d: Poisson(Lambda(d))."""
    if not d > 0:
        raise MechanismError(f"d must be positive, got {d!r}")
    mean = law.ev.lambda_window(d)
    return _scalar(_gen(rng).poisson(mean, size=size), size)


def na_stable_survival(alpha0: float, n):
    """P(N_A > n) = Gamma(n+1-alpha0) / (Gamma(1-alpha0) n!) for the stable mechanism."""
    n = np.asarray(n, dtype=float)
    if alpha0 == 1.0:
        return np.where(n >= 1, 0.0, 1.0)
    return poch(n + 1.0, -alpha0) / math.gamma(1.0 - alpha0)


def sample_NA_stable(alpha0: float, rng, size=None):
    """Number of oldest families for psi(l) = alpha l + c0 l^(1+alpha0).

    Inverse transform N = min{n >= 1 : P(N_A > n) <= V}, V uniform, located by
    doubling then integer bisection on the closed-form survival function.
    """
    if not 0 < alpha0 <= 1:
        raise MechanismError(f"alpha0 must lie in (0, 1], got {alpha0!r}")
    g = _gen(rng)
    v = g.random(size=size)
    if alpha0 == 1.0:
        return _scalar(np.ones_like(v, dtype=np.int64), size)
    v = np.atleast_1d(v)
    hi = np.ones_like(v)
    while True:
        above = (na_stable_survival(alpha0, hi) > v) & (hi < NA_CAP)
        if not above.any():
            break
        hi[above] *= 2.0
    lo = np.where(hi > 1, hi / 2.0, 0.0)
    # invariant: S(lo) > v >= S(hi), or hi at the cap
    while True:
        gap = hi - lo > 1
        if not gap.any():
            break
        mid = np.floor((lo + hi) / 2.0)
        go_right = gap & (na_stable_survival(alpha0, mid) > v)
        go_left = gap & ~go_right
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_left, mid, hi)
    out = hi.astype(np.int64)
    if size is None:
        return int(out[0])
    return out
