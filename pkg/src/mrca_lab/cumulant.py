"""Cumulant semigroup u(lam, t), extinction function c(t) and related constants.

Everything is driven by the monotone primitive

    G(x) = int_x^inf dv / psi(v),

which is strictly decreasing from +inf (x -> 0) to 0 (x -> inf). Then
``c = G^{-1}`` and ``u(lam, t) = c(t + G(lam))``, so one quadrature routine
and one root finder serve every quantity. The quadratic mechanism uses
closed forms unless ``closed_form=False`` is requested, which is how the
generic route is cross-checked.
"""

from __future__ import annotations

import bisect
import math
import threading

from scipy import integrate

from ._numerics import NumericError, expand_bracket, safeguarded_newton
from .mechanism import MechanismError, MechanismSpec

KAPPA_RTOL = 1e-8
KAPPA_MAX_DOUBLINGS = 60


def _exp(y: float) -> float:
    return math.exp(y) if y < 709.0 else math.inf


def _positive(name, x):
    if not (x > 0) or math.isnan(x):
        raise MechanismError(f"{name} must be positive, got {x!r}")


def _nonnegative(name, x):
    if not (x >= 0) or not math.isfinite(x):
        raise MechanismError(f"{name} must be finite and nonnegative, got {x!r}")


class CumulantEvaluator:
    """Evaluates G, c, c^{-1}, u, kappa_* and the clan-count exponent.

    Parameters
    ----------
    spec:
        A mechanism that passes :meth:`MechanismSpec.validate`.
    rel_quad, rel_root:
        Relative tolerances of the quadrature behind G and of the root
        finder behind c.
    closed_form:
        Use the explicit formulas for quadratic mechanisms (ignored for other
        kinds).

    Evaluated values of G are memoized in an append-only sorted table that
    also seeds the brackets of later inversions. Access is guarded by a lock,
    and a given argument always maps to the same value.
    """

    def __init__(
        self,
        spec: MechanismSpec,
        rel_quad: float = 1e-10,
        rel_root: float = 1e-10,
        closed_form: bool = True,
    ):
        spec.require_valid()
        self.spec = spec
        self.rel_quad = float(rel_quad)
        self.rel_root = float(rel_root)
        self.closed_form = bool(closed_form) and spec.is_quadratic
        self.alpha = spec.alpha
        self._lock = threading.Lock()
        self._g_memo: dict[float, float] = {}
        self._anchor_y: list[float] = []  # log x, increasing
        self._anchor_g: list[float] = []  # G(x), decreasing
        self._logc_memo: dict[float, float] = {}
        self._g_one: float | None = None
        self._kappa: float | None = None
        if spec.is_quadratic:
            self._rho_rate = 2.0 * spec.theta * spec.beta

    def __repr__(self):
        mode = "closed-form" if self.closed_form else "generic"
        return f"CumulantEvaluator({self.spec!r}, {mode})"

    # -- the primitive G -----------------------------------------------------

    def big_g(self, x: float) -> float:
        """G(x) = int_x^inf dv/psi(v) for x > 0; equals c^{-1}(x)."""
        _positive("x", x)
        if math.isinf(x):
            return 0.0
        if self.closed_form:
            th = self.spec.theta
            return math.log1p(2.0 * th / x) / (2.0 * th * self.spec.beta)
        return self._g_numeric(math.log(x))

    c_inverse = big_g

    def _quad(self, f, a, b):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=self.rel_quad, limit=400)
        return val

    def _g_at_one(self) -> float:
        if self._g_one is None:
            ratio = self.spec.psi_ratio
            # substitute v = e^y: dv/psi(v) = dy / (psi(v)/v)
            self._g_one = self._quad(lambda y: 1.0 / ratio(_exp(y)), 0.0, math.inf)
        return self._g_one

    def _g_numeric(self, y: float) -> float:
        """G(e^y). For x < 1 the logarithmic singularity of 1/psi at 0 is
        integrated analytically and only the regular remainder
        1/(alpha v) - 1/psi(v) goes through quadrature."""
        with self._lock:
            hit = self._g_memo.get(y)
        if hit is not None:
            return hit
        alpha = self.alpha
        tilde_ratio = self.spec.psi_tilde_ratio
        ratio = self.spec.psi_ratio
        if y >= 0:
            val = self._quad(lambda s: 1.0 / ratio(_exp(s)), y, math.inf)
        else:

            def regular(s):
                tr = tilde_ratio(math.exp(s))
                return tr / (alpha * (alpha + tr))

            val = self._g_at_one() - y / alpha - self._quad(regular, y, 0.0)
        with self._lock:
            if y not in self._g_memo:
                self._g_memo[y] = val
                i = bisect.bisect_left(self._anchor_y, y)
                self._anchor_y.insert(i, y)
                self._anchor_g.insert(i, val)
        return val

    # -- extinction function c ----------------------------------------------

    def _log_c_numeric(self, t: float) -> float:
        with self._lock:
            hit = self._logc_memo.get(t)
            ys, gs = list(self._anchor_y), list(self._anchor_g)
        if hit is not None:
            return hit

        def h(y):
            return self._g_numeric(y) - t

        def dh(y):
            return -1.0 / self.spec.psi_ratio(_exp(y))

        # anchors hold decreasing G; find neighbours of t
        i = bisect.bisect_left([-g for g in gs], -t)
        if 0 < i < len(ys):
            lo, hi = ys[i - 1], ys[i]
            f_lo, f_hi = gs[i - 1] - t, gs[i] - t
        else:
            start = ys[-1] if i >= len(ys) and ys else (ys[0] if ys else 0.0)
            lo, f_lo, hi, f_hi = expand_bracket(h, start)
        y = safeguarded_newton(h, dh, lo, hi, f_lo, f_hi, xtol=self.rel_root)
        with self._lock:
            self._logc_memo.setdefault(t, y)
            return self._logc_memo[t]

    def log_c(self, t: float) -> float:
        """log c(t); stays accurate where c(t) underflows."""
        _positive("t", t)
        if math.isinf(t):
            return -math.inf
        if self.closed_form:
            rho = self._rho_rate * t
            th = self.spec.theta
            # log(2 theta / (e^rho - 1)) = log(2 theta) - rho - log(1 - e^-rho)
            return math.log(2.0 * th) - rho - math.log(-math.expm1(-rho))
        return self._log_c_numeric(float(t))

    def c_of(self, t: float) -> float:
        """c(t), the canonical rate of a clan surviving beyond time t."""
        _positive("t", t)
        if self.closed_form and self._rho_rate * t < 700.0:
            return 2.0 * self.spec.theta / math.expm1(self._rho_rate * t)
        return math.exp(self.log_c(t))

    # -- cumulant u -------------------------------------------------------------

    def log_u(self, lam: float, t: float) -> float:
        _positive("lam", lam)
        _nonnegative("t", t)
        if t == 0:
            return math.log(lam)
        if self.closed_form:
            th = self.spec.theta
            rho = self._rho_rate * t
            return math.log(2.0 * th * lam) - rho - math.log(2.0 * th - lam * math.expm1(-rho))
        return self.log_c(t + self.big_g(lam))

    def u_of(self, lam: float, t: float) -> float:
        """u(lam, t): E_x[exp(-lam Y_t)] = exp(-x u(lam, t))."""
        _nonnegative("lam", lam)
        _nonnegative("t", t)
        if lam == 0:
            return 0.0
        if t == 0:
            return float(lam)
        return math.exp(self.log_u(lam, t))

    # -- constants --------------------------------------------------------------

    def kappa(self) -> float:
        """kappa_* = lim_{t -> inf} c(t) exp(alpha t).

        Non-quadratic mechanisms evaluate c(T) e^{alpha T} along T = T0 2^k,
        T0 = 5/alpha, until two successive values agree to ``KAPPA_RTOL``.
        """
        if self.spec.is_quadratic:
            return 2.0 * self.spec.theta
        if self._kappa is not None:
            return self._kappa
        T = 5.0 / self.alpha
        prev = math.exp(self.log_c(T) + self.alpha * T)
        history = [(T, prev)]
        for _ in range(KAPPA_MAX_DOUBLINGS):
            T *= 2.0
            cur = math.exp(self.log_c(T) + self.alpha * T)
            history.append((T, cur))
            if abs(cur - prev) <= KAPPA_RTOL * abs(cur):
                self._kappa = cur
                return cur
            prev = cur
        raise NumericError(f"kappa_* did not converge; (T, c(T)e^(alpha T)) = {history[-3:]}")

    def _log_psi(self, x_log: float) -> float:
        """log psi(e^x_log)."""
        return x_log + math.log(self.spec.psi_ratio(math.exp(x_log)))

    def int_psi_tilde_u(self, lam: float, t: float, T: float = math.inf) -> float:
        """int_t^T psi~'(u(lam, s)) ds in closed form (no quadrature over s).

        Uses d/ds log(psi(u) e^{alpha s}) = -psi~'(u); for T = inf the limit
        psi(u(lam, T)) e^{alpha T} -> alpha kappa_* exp(-alpha G(lam)) applies.
        """
        _positive("lam", lam)
        _nonnegative("t", t)
        if not T >= t:
            raise MechanismError(f"need t <= T, got t={t}, T={T}")
        if T == t:
            return 0.0
        top = self._log_psi(self.log_u(lam, t)) + self.alpha * t
        if math.isinf(T):
            bottom = math.log(self.kappa() * self.alpha) - self.alpha * self.big_g(lam)
        else:
            bottom = self._log_psi(self.log_u(lam, T)) + self.alpha * T
        return top - bottom

    def lambda_window(self, d: float) -> float:
        """Poisson mean of the number of clans born before a and alive at a + d."""
        _positive("d", d)
        if math.isinf(d):
            return 0.0
        if self.closed_form:
            return -2.0 * math.log(-math.expm1(-self._rho_rate * d))
        return (
            self._log_psi(self.log_c(d)) + self.alpha * d - math.log(self.kappa() * self.alpha)
        )

    def ode_u(self, lam: float, t: float, rtol: float = 1e-11) -> float:
        """u(lam, t) by integrating du/dt = -psi(u) directly. Slow; kept as a
        cross-check of the G route."""
        _nonnegative("lam", lam)
        _nonnegative("t", t)
        if lam == 0 or t == 0:
            return float(lam)
        psi = self.spec.psi
        sol = integrate.solve_ivp(
            lambda _s, v: [-psi(max(v[0], 0.0))],
            (0.0, t),
            [lam],
            method="LSODA",
            rtol=rtol,
            atol=1e-14 * lam,
        )
        if not sol.success:
            raise NumericError(sol.message)
        return float(sol.y[0, -1])

