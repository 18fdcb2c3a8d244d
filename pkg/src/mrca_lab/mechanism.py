"""Branching mechanisms of subcritical continuous-state branching processes.

Three families are supported:

* quadratic ``psi(l) = beta*l**2 + 2*beta*theta*l`` (Feller diffusion),
* stable ``psi(l) = alpha*l + c0*l**(1 + alpha0)`` with ``0 < alpha0 <= 1``,
* custom ``psi(l) = alpha*l + beta*l**2 + sum_i m_i (exp(-l*s_i) - 1 + l*s_i)``
  where the jump measure is a finite list of atoms ``(m_i, s_i)``.

Every function accepts scalars or numpy arrays of nonnegative arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

QUADRATIC = "quadratic"
STABLE = "stable"
CUSTOM = "custom"

# below this argument the jump kernel exp(-x) - 1 + x is evaluated by series
_SERIES_CUTOFF = 1e-3


class MechanismError(ValueError):
    """Raised for invalid mechanisms or arguments outside the domain."""


class CapabilityError(NotImplementedError):
    """Raised when an operation is not available for a mechanism kind."""


def _check_arg(lam):
    arr = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise MechanismError(f"argument must be finite and nonnegative, got {lam!r}")
    return arr


def _unwrap(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def _jump_kernel(x):
    """exp(-x) - 1 + x, accurate for small x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        series = x * x * (0.5 - x * (1.0 / 6 - x * (1.0 / 24 - x / 120)))
        direct = np.expm1(-x) + x
    return np.where(x < _SERIES_CUTOFF, series, direct)


@dataclass(frozen=True)
class ValidationReport:
    subcritical: bool
    A1: bool
    A2: bool
    nontrivial: bool
    reasons: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.subcritical and self.A1 and self.A2 and self.nontrivial


@dataclass(frozen=True)
class MechanismSpec:
    """Immutable description of a branching mechanism.

    Build instances with :meth:`quadratic`, :meth:`stable` or :meth:`custom`.
    ``alpha`` is always ``psi'(0)``; for the quadratic kind it equals
    ``2*beta*theta``.
    """

    kind: str
    alpha: float
    beta: float = 0.0
    theta: float | None = None
    c0: float | None = None
    alpha0: float | None = None
    atoms: tuple[tuple[float, float], ...] = ()
    _masses: np.ndarray = field(init=False, repr=False, compare=False)
    _sizes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = [self.alpha, self.beta]
        vals += [v for v in (self.theta, self.c0, self.alpha0) if v is not None]
        vals += [v for atom in self.atoms for v in atom]
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise MechanismError("mechanism parameters must be finite reals")
        masses = np.array([m for m, _ in self.atoms], dtype=float)
        sizes = np.array([s for _, s in self.atoms], dtype=float)
        object.__setattr__(self, "_masses", masses)
        object.__setattr__(self, "_sizes", sizes)

    @classmethod
    def quadratic(cls, beta: float, theta: float) -> "MechanismSpec":
        return cls(QUADRATIC, alpha=2.0 * beta * theta, beta=float(beta), theta=float(theta))

    @classmethod
    def stable(cls, alpha: float, c0: float, alpha0: float) -> "MechanismSpec":
        return cls(STABLE, alpha=float(alpha), c0=float(c0), alpha0=float(alpha0))

    @classmethod
    def custom(
        cls, alpha: float, beta: float, atoms: Iterable[Sequence[float]] = ()
    ) -> "MechanismSpec":
        atoms = tuple((float(m), float(s)) for m, s in atoms)
        return cls(CUSTOM, alpha=float(alpha), beta=float(beta), atoms=atoms)

    @classmethod
    def from_config(cls, block: dict) -> "MechanismSpec":
        """Build from the ``mechanism`` block of a study config."""
        kind = block.get("kind")
        try:
            if kind == QUADRATIC:
                return cls.quadratic(block["beta"], block["theta"])
            if kind == STABLE:
                return cls.stable(block["alpha"], block["c0"], block["alpha0"])
            if kind == CUSTOM:
                return cls.custom(block["alpha"], block.get("beta", 0.0), block.get("atoms", ()))
        except KeyError as exc:
            raise MechanismError(f"mechanism block is missing key {exc}") from None
        raise MechanismError(f"unknown mechanism kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == QUADRATIC:
            return {"kind": QUADRATIC, "beta": self.beta, "theta": self.theta}
        if self.kind == STABLE:
            return {"kind": STABLE, "alpha": self.alpha, "c0": self.c0, "alpha0": self.alpha0}
        return {
            "kind": CUSTOM,
            "alpha": self.alpha,
            "beta": self.beta,
            "atoms": [list(a) for a in self.atoms],
        }

    @property
    def is_quadratic(self) -> bool:
        return self.kind == QUADRATIC

    # -- psi and derivatives -------------------------------------------------

    def psi(self, lam):
        """Branching mechanism psi(lam)."""
        x = _check_arg(lam)
        return _unwrap(x * self._ratio(x), lam)

    def psi_prime(self, lam):
        x = _check_arg(lam)
        return _unwrap(self.alpha + self._tilde_prime(x), lam)

    def psi_tilde(self, lam):
        """psi(lam) - alpha*lam, computed without cancellation."""
        x = _check_arg(lam)
        return _unwrap(x * self._tilde_ratio(x), lam)

    def psi_tilde_prime(self, lam):
        """Immigration function psi'(lam) - psi'(0)."""
        x = _check_arg(lam)
        return _unwrap(self._tilde_prime(x), lam)

    def psi_ratio(self, lam):
        """psi(lam)/lam, with value alpha at 0. Finite for lam = inf only if
        psi grows linearly, so callers may pass overflowing arguments."""
        if isinstance(lam, float):
            return self.alpha + self._tilde_ratio_scalar(lam)
        x = np.asarray(lam, dtype=float)
        return _unwrap(self._ratio(x), lam)

    def psi_tilde_ratio(self, lam):
        if isinstance(lam, float):
            return self._tilde_ratio_scalar(lam)
        x = np.asarray(lam, dtype=float)
        return _unwrap(self._tilde_ratio(x), lam)

    def _tilde_ratio_scalar(self, x: float) -> float:
        # hot path of the quadrature integrands; mirrors _tilde_ratio
        if self.kind == QUADRATIC:
            return self.beta * x
        if self.kind == STABLE:
            return self.c0 * x**self.alpha0
        out = self.beta * x
        if x == 0.0:
            return out
        for m, l in self.atoms:
            if math.isinf(x):
                out += m * l
                continue
            y = x * l
            if y < _SERIES_CUTOFF:
                k = y * y * (0.5 - y * (1.0 / 6 - y * (1.0 / 24 - y / 120)))
            else:
                k = math.expm1(-y) + y
            out += m * k / x
        return out

    def psi_second_at_zero(self) -> float:
        """psi''(0+), possibly infinite."""
        if self.kind == QUADRATIC:
            return 2.0 * self.beta
        if self.kind == STABLE:
            return 2.0 * self.c0 if self.alpha0 == 1.0 else math.inf
        return 2.0 * self.beta + float(np.sum(self._masses * self._sizes**2))

    def signed_derivative(self, order: int, lam: float) -> float:
        """(-1)**order * psi^(order)(lam) for order >= 2; always nonnegative.

        Closed form per kind, which keeps the alternating-sign pmf of the
        number of oldest families exact.
        """
        if order < 2:
            raise MechanismError("signed_derivative needs order >= 2")
        if lam <= 0 or not math.isfinite(lam):
            raise MechanismError("signed_derivative needs a positive finite argument")
        if self.kind == QUADRATIC:
            return 2.0 * self.beta if order == 2 else 0.0
        if self.kind == STABLE:
            a0 = self.alpha0
            if a0 == 1.0:
                return 2.0 * self.c0 if order == 2 else 0.0
            # c0 (1+a0) a0 prod_{k=1}^{order-2} (k - a0) lam^(a0+1-order)
            log_prod = gammaln(order - 1 - a0) - gammaln(1 - a0)
            log_val = (
                math.log(self.c0 * (1 + a0) * a0) + log_prod + (a0 + 1 - order) * math.log(lam)
            )
            return math.exp(log_val)
        val = 2.0 * self.beta if order == 2 else 0.0
        if self.atoms:
            logs = (
                np.log(self._masses) + order * np.log(self._sizes) - lam * self._sizes
            )
            val += float(np.sum(np.exp(logs)))
        return val

    def _ratio(self, x):
        return self.alpha + self._tilde_ratio(x)

    def _tilde_ratio(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == QUADRATIC:
            return self.beta * x
        if self.kind == STABLE:
            return self.c0 * x**self.alpha0
        out = self.beta * x
        if self.atoms:
            xb = x[..., None]
            with np.errstate(invalid="ignore", divide="ignore"):
                jump = _jump_kernel(xb * self._sizes) / xb
            jump = np.where(xb == 0, 0.0, jump)
            # (exp(-x l) - 1 + x l)/x -> l as x -> inf
            jump = np.where(np.isinf(xb), self._sizes, jump)
            out = out + np.sum(self._masses * jump, axis=-1)
        return out

    def _tilde_prime(self, x):
        if self.kind == QUADRATIC:
            return 2.0 * self.beta * x
        if self.kind == STABLE:
            return (1.0 + self.alpha0) * self.c0 * x**self.alpha0
        out = 2.0 * self.beta * x
        if self.atoms:
            xl = x[..., None] * self._sizes
            out = out + np.sum(self._masses * self._sizes * -np.expm1(-xl), axis=-1)
        return out

    # -- derived functionals -------------------------------------------------

    def mean_stationary(self) -> float:
        """Mean of the stationary population size, psi''(0+)/psi'(0).

        Returns ``math.inf`` when psi''(0+) is infinite (stable, alpha0 < 1).
        """
        return self.psi_second_at_zero() / self.alpha

    def validate(self) -> ValidationReport:
        reasons = []
        subcritical = self.alpha > 0
        if not subcritical:
            reasons.append(f"psi'(0) = {self.alpha} is not positive")
        if self.kind == QUADRATIC:
            nontrivial = self.beta > 0 and self.theta > 0
            if not nontrivial:
                reasons.append("quadratic mechanism needs beta > 0 and theta > 0")
            a1 = nontrivial
        elif self.kind == STABLE:
            in_range = 0 < self.alpha0 <= 1
            nontrivial = self.c0 > 0 and in_range
            if not in_range:
                reasons.append(f"alpha0 = {self.alpha0} is outside (0, 1]")
            if self.c0 <= 0:
                reasons.append("stable mechanism needs c0 > 0")
            a1 = nontrivial
        elif self.kind == CUSTOM:
            bad_atoms = any(m <= 0 or s <= 0 for m, s in self.atoms)
            if bad_atoms:
                reasons.append("atoms must have positive mass and size")
            if self.beta < 0:
                reasons.append("beta must be nonnegative")
            # a finite atom list has finite mass near 0, so only beta helps
            nontrivial = self.beta > 0 and not bad_atoms
            if self.beta <= 0:
                reasons.append("beta = 0 with finitely many atoms: psi grows linearly")
            a1 = self.beta > 0
            if not a1:
                reasons.append("integral of 1/psi over [1, inf) diverges (A1 fails)")
        else:
            raise MechanismError(f"unknown mechanism kind {self.kind!r}")
        return ValidationReport(subcritical, a1, True, nontrivial, tuple(reasons))

    def require_valid(self) -> None:
        report = self.validate()
        if not report.ok:
            raise MechanismError("invalid mechanism: " + "; ".join(report.reasons))
