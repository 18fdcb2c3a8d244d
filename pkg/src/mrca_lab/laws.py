"""Analytic laws of the stationary population and its most recent common ancestor.

Notation: ``Z`` is the stationary population size at time 0, ``A`` the time
to the most recent common ancestor (TMRCA), ``Z_A`` the size just before the
MRCA, ``Z_I`` the part of ``Z`` born after the MRCA, ``Z_O`` the part
descending from the MRCA's clan, ``N_A`` the number of oldest families.

General mechanisms are exposed at Laplace-transform or pgf level; densities
and distribution functions appear only where they are explicit.
"""

from __future__ import annotations

import math

from scipy.special import comb, gammaln

from .cumulant import CumulantEvaluator
from .mechanism import CapabilityError, MechanismError, MechanismSpec

MAX_FD_ORDER = 4


def _require(cond: bool, msg: str):
    if not cond:
        raise MechanismError(msg)


class StationaryLaw:
    """Laws of the stationary branching population built on a cumulant evaluator."""

    def __init__(self, ev: CumulantEvaluator):
        self.ev = ev
        self.spec: MechanismSpec = ev.spec
        self.alpha = ev.alpha

    @classmethod
    def from_spec(cls, spec: MechanismSpec, **kwargs) -> "StationaryLaw":
        return cls(CumulantEvaluator(spec, **kwargs))

    def __repr__(self):
        return f"StationaryLaw({self.ev!r})"

    def _log_alpha_kappa(self) -> float:
        return math.log(self.alpha * self.ev.kappa())

    def _c(self, t: float) -> float:
        _require(t > 0, f"t must be positive, got {t!r}")
        return self.ev.c_of(t)

    # -- stationary size Z ------------------------------------------------------

    def laplace_Z(self, lam: float) -> float:
        """E[exp(-lam Z)] = alpha kappa_* exp(-alpha G(lam)) / psi(lam)."""
        _require(lam >= 0, f"lam must be nonnegative, got {lam!r}")
        if lam == 0:
            return 1.0
        log_val = (
            self._log_alpha_kappa() - self.alpha * self.ev.big_g(lam) - math.log(self.spec.psi(lam))
        )
        return math.exp(log_val)

    def mean_Z_tilted(self, lam: float) -> float:
        """E[Z exp(-lam Z)] for lam > 0."""
        _require(lam > 0, f"lam must be positive, got {lam!r}")
        spec = self.spec
        return spec.psi_tilde_prime(lam) / spec.psi(lam) * self.laplace_Z(lam)

    def mean_Z(self) -> float:
        return self.spec.mean_stationary()

    # -- TMRCA A -------------------------------------------------------------

    def cdf_A(self, t: float) -> float:
        """P(A <= t) = alpha kappa_* exp(-alpha t) / psi(c(t))."""
        _require(t >= 0, f"t must be nonnegative, got {t!r}")
        if t == 0:
            return 0.0
        if math.isinf(t):
            return 1.0
        log_c = self.ev.log_c(t)
        log_psi_c = log_c + math.log(self.spec.psi_ratio(math.exp(log_c)))
        return math.exp(self._log_alpha_kappa() - self.alpha * t - log_psi_c)

    def cdf_A_via_laplace(self, t: float) -> float:
        """P(A <= t) computed as E[exp(-c(t) Z)]; a second code path for cdf_A."""
        _require(t >= 0, f"t must be nonnegative, got {t!r}")
        if t == 0:
            return 0.0
        return self.laplace_Z(self._c(t))

    def pdf_A(self, t: float) -> float:
        _require(t > 0, f"t must be positive, got {t!r}")
        if math.isinf(t):
            return 0.0
        log_c = self.ev.log_c(t)
        tp = self.spec.psi_tilde_prime(math.exp(log_c))
        if tp == 0:
            return 0.0
        return tp * math.exp(self._log_alpha_kappa() - self.alpha * t - self.ev._log_psi(log_c))

    # -- conditional laws given A = t -------------------------------------------

    def laplace_ZA_given_A(self, lam: float, t: float) -> float:
        """E[exp(-lam Z_A) | A = t], an exponential tilt of the law of Z by c(t)."""
        _require(lam >= 0, f"lam must be nonnegative, got {lam!r}")
        c = self._c(t)
        if lam == 0:
            return 1.0
        # G(c(t)) = t
        log_val = (
            -self.alpha * (self.ev.big_g(lam + c) - t)
            + math.log(self.spec.psi(c))
            - math.log(self.spec.psi(lam + c))
        )
        return math.exp(log_val)

    def mean_ZA_given_A(self, t: float) -> float:
        c = self._c(t)
        return self.spec.psi_tilde_prime(c) / self.spec.psi(c)

    def laplace_ZI_given_A(self, gamma: float, t: float) -> float:
        """E[exp(-gamma Z_I) | A = t] = exp(-int_0^t psi~'(u(gamma, s)) ds)."""
        _require(gamma >= 0, f"gamma must be nonnegative, got {gamma!r}")
        _require(t > 0, f"t must be positive, got {t!r}")
        if gamma == 0:
            return 1.0
        return math.exp(-self.ev.int_psi_tilde_u(gamma, 0.0, t))

    def laplace_ZO_given_A(self, eta: float, t: float) -> float:
        """E[exp(-eta Z_O) | A = t] = 1 - psi~'(u(eta, t)) / psi~'(c(t))."""
        _require(eta >= 0, f"eta must be nonnegative, got {eta!r}")
        c = self._c(t)
        if eta == 0:
            return 1.0
        spec = self.spec
        return 1.0 - spec.psi_tilde_prime(self.ev.u_of(eta, t)) / spec.psi_tilde_prime(c)

    def laplace_ZAplus_given_A(self, lam: float, t: float) -> float:
        """Transform of the size at (not just before) the MRCA given A = t."""
        _require(lam > 0, f"lam must be positive, got {lam!r}")
        c = self._c(t)
        tp = self.spec.psi_tilde_prime
        # psi'(lam+c) - psi'(lam) over psi'(c) - psi'(0)
        jump_factor = (tp(lam + c) - tp(lam)) / tp(c)
        return self.laplace_ZA_given_A(lam, t) * jump_factor

    def joint_functional(self, lam: float, gamma: float, eta: float, t: float) -> float:
        """Density in t of E[exp(-lam Z_A - gamma Z_I - eta Z_O); A in dt].

        Evaluated directly from the clan decomposition, independently of the
        per-factor conditional transforms.
        """
        for name, v in (("lam", lam), ("gamma", gamma), ("eta", eta)):
            _require(v >= 0, f"{name} must be nonnegative, got {v!r}")
        c = self._c(t)
        ev, tp = self.ev, self.spec.psi_tilde_prime
        u_eta = ev.u_of(eta, t)
        inside = ev.int_psi_tilde_u(gamma, 0.0, t) if gamma > 0 else 0.0
        before = ev.int_psi_tilde_u(lam + c, 0.0, math.inf)
        return (tp(c) - tp(u_eta)) * math.exp(-inside - before)

    # -- ancestors at time -s -------------------------------------------------

    def laplace_ancestors(self, eta: float, lam: float, s: float) -> float:
        """E[exp(-eta M_s - lam Z_0)], M_s the number of ancestors at time -s.

        Equals exp(-int_0^s psi~'(u(lam, r)) dr) E[exp(-x Z)] with
        x = (1 - e^-eta) c(s) + e^-eta u(lam, s).
        """
        _require(eta >= 0, f"eta must be nonnegative, got {eta!r}")
        _require(lam >= 0, f"lam must be nonnegative, got {lam!r}")
        c = self._c(s)
        inside = self.ev.int_psi_tilde_u(lam, 0.0, s) if lam > 0 else 0.0
        x = -math.expm1(-eta) * c + math.exp(-eta) * self.ev.u_of(lam, s)
        return math.exp(-inside) * self.laplace_Z(x)

    # -- number of oldest families -----------------------------------------

    def pmf_NA_given_A(self, n: int, t: float) -> float:
        """P(N_A = n | A = t) = (-1)^(n+1) c^n psi^(n+1)(c) / (n! psi~'(c))."""
        _require(int(n) == n and n >= 1, f"n must be a positive integer, got {n!r}")
        n = int(n)
        c = self._c(t)
        spec = self.spec
        if spec.kind == "stable" and spec.alpha0 < 1:
            # ratio simplifies; avoids overflow of c^n for large n
            a0 = spec.alpha0
            return math.exp(
                math.log(a0) + gammaln(n - a0) - gammaln(1 - a0) - gammaln(n + 1)
            )
        deriv = spec.signed_derivative(n + 1, c)
        if deriv == 0:
            return 0.0
        log_val = n * math.log(c) + math.log(deriv) - gammaln(n + 1)
        return math.exp(log_val) / spec.psi_tilde_prime(c)

    def pgf_NA_given_A(self, a: float, t: float) -> float:
        """E[a^N_A | A = t] = 1 - psi~'((1-a) c(t)) / psi~'(c(t))."""
        _require(0 <= a <= 1, f"a must lie in [0, 1], got {a!r}")
        c = self._c(t)
        tp = self.spec.psi_tilde_prime
        return 1.0 - tp((1.0 - a) * c) / tp(c)

    def mean_NA_given_A(self, t: float) -> float:
        """E[N_A | A = t]; ``math.inf`` when psi''(0+) is infinite."""
        c = self._c(t)
        second = self.spec.psi_second_at_zero()
        if math.isinf(second):
            return math.inf
        return second * c / self.spec.psi_tilde_prime(c)

    # -- TMRCA of n sampled individuals -------------------------------------

    def moment_An(self, n: int, lam: float, T: float) -> float:
        """E[Z^n exp(-lam Z) 1{A^n <= T}], A^n the TMRCA of n sampled individuals
        and the immortal lineage.

        Quadratic mechanisms use the explicit formula. Otherwise the n-th
        derivative in eta of psi(u(lam+eta, T))/psi(lam+eta) is taken by finite
        differences (step 1e-2 max(1, lam)), central with one Richardson level
        when the stencil stays in lam + eta >= 0, otherwise forward with two
        levels; n <= 4.
        """
        _require(int(n) == n and n >= 1, f"n must be a positive integer, got {n!r}")
        _require(lam >= 0, f"lam must be nonnegative, got {lam!r}")
        _require(T > 0, f"T must be positive, got {T!r}")
        n = int(n)
        spec = self.spec
        if spec.is_quadratic:
            th = spec.theta
            s = -math.expm1(-2.0 * spec.beta * th * T)
            log_val = gammaln(n + 2) + n * (math.log(s) - math.log(2 * th + lam * s))
            return math.exp(log_val) * (2 * th / (2 * th + lam)) ** 2
        if n > MAX_FD_ORDER:
            raise CapabilityError(
                f"moment_An supports n <= {MAX_FD_ORDER} for non-quadratic mechanisms"
            )
        if lam == 0 and math.isinf(spec.mean_stationary()):
            raise MechanismError("lam = 0 requires a finite stationary mean")

        ev = self.ev
        aT = self.alpha * T

        def ratio(x):
            # psi(u(x, T)) / psi(x), with limit e^{-alpha T} at x = 0
            if x == 0:
                return math.exp(-aT)
            return math.exp(ev._log_psi(ev.log_u(x, T)) - math.log(spec.psi(x)))

        h = 1e-2 * max(1.0, lam)
        central = lam - 0.5 * n * h > 0

        def diff(step):
            if central:
                pts = [lam + (0.5 * n - k) * step for k in range(n + 1)]
            else:
                pts = [lam + (n - k) * step for k in range(n + 1)]
            total = sum((-1) ** k * comb(n, k, exact=True) * ratio(x) for k, x in enumerate(pts))
            return total / step**n

        d_h, d_h2 = diff(h), diff(0.5 * h)
        if central:
            deriv = (4.0 * d_h2 - d_h) / 3.0
        else:
            # one-sided error is O(h); a second level removes the O(h^2) term
            d_h4 = diff(0.25 * h)
            r1, r2 = 2.0 * d_h2 - d_h, 2.0 * d_h4 - d_h2
            deriv = (4.0 * r2 - r1) / 3.0
        if lam == 0:
            prefactor = math.exp(aT)
        else:
            prefactor = self.laplace_Z(lam) * spec.psi(lam) / math.exp(ev._log_psi(ev.log_u(lam, T)))
        return prefactor * (-1) ** n * deriv

    def cdf_A1_quadratic(self, t: float) -> float:
        """P(A^1 <= t) for the quadratic mechanism, A^1 the TMRCA of one sampled
        individual and the immortal lineage."""
        if not self.spec.is_quadratic:
            raise CapabilityError("cdf_A1_quadratic needs a quadratic mechanism")
        _require(t >= 0, f"t must be nonnegative, got {t!r}")
        if t == 0:
            return 0.0
        rho = 2.0 * self.spec.beta * self.spec.theta * t
        q = math.exp(-rho)
        if q < 0.5:
            # 1 + r log(1-q) with r = (1-q)/q equals sum_k q^k / (k (k+1))
            total, term, k = 0.0, 1.0, 1
            while True:
                add = term / (k * (k + 1))
                total += add
                if add < 1e-17 * total:
                    break
                term *= q
                k += 1
            return 2.0 * (1.0 - q) * total
        s = 1.0 - q
        r = math.expm1(rho)
        return 2.0 * r * (1.0 + r * math.log(s))
