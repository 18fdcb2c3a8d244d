"""Analytic laws against independent oracles: explicit quadratic formulas,
mpmath quadrature and Taylor coefficients, and finite differences."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrca_lab.laws import StationaryLaw
from mrca_lab.mechanism import CapabilityError, MechanismError, MechanismSpec

LAMS = (0.1, 1.0, 10.0)
TS = (0.1, 1.0, 5.0)


def c_quad(t, theta=1.0, beta=1.0):
    return 2 * theta / math.expm1(2 * theta * beta * t)


# -- stationary size ----------------------------------------------------------


@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0, 40.0])
def test_laplace_Z_quadratic(quad_law, lam):
    assert quad_law.laplace_Z(lam) == pytest.approx((2 / (2 + lam)) ** 2, rel=1e-14)


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_laplace_Z_matches_gamma_density(lam):
    theta = 1.7
    law = StationaryLaw.from_spec(MechanismSpec.quadratic(beta=0.4, theta=theta))
    mp.mp.dps = 30
    k = 2 * theta
    oracle = mp.quad(lambda z: k**2 * z * mp.exp(-(k + lam) * z), [0, mp.inf])
    assert law.laplace_Z(lam) == pytest.approx(float(oracle), rel=1e-8)


@pytest.mark.parametrize("lam", [0.5, 1.0, 5.0])
def test_laplace_Z_stable_dual_route(stable_law, lam):
    # E[exp(-lam Z)] = exp(-int_0^lam psi~'(x)/psi(x) dx)
    mp.mp.dps = 30
    integral = mp.quad(lambda x: 1.5 * mp.sqrt(x) / (x + x**1.5), [0, lam])
    assert stable_law.laplace_Z(lam) == pytest.approx(float(mp.exp(-integral)), rel=1e-9)


def test_laplace_Z_custom_dual_route(custom_law):
    mp.mp.dps = 20
    tp, psi = custom_law.spec.psi_tilde_prime, custom_law.spec.psi
    for lam in (0.2, 4.0):
        integral = mp.quad(lambda x: tp(float(x)) / psi(float(x)), [0, lam])
        assert custom_law.laplace_Z(lam) == pytest.approx(float(mp.exp(-integral)), rel=1e-8)


def test_mean_Z_tilted_is_derivative(custom_law):
    lam, h = 0.8, 1e-4
    fd = -(custom_law.laplace_Z(lam + h) - custom_law.laplace_Z(lam - h)) / (2 * h)
    assert custom_law.mean_Z_tilted(lam) == pytest.approx(fd, rel=1e-6)


# -- TMRCA --------------------------------------------------------------------


@pytest.mark.parametrize("t", [0.01, 0.5, 1.0, 3.0, 20.0])
def test_cdf_A_quadratic(quad_law, t):
    assert quad_law.cdf_A(t) == pytest.approx((1 - math.exp(-2 * t)) ** 2, rel=1e-13)
    assert quad_law.pdf_A(t) == pytest.approx(
        4 * math.exp(-2 * t) * (1 - math.exp(-2 * t)), rel=1e-12
    )


def test_cdf_A_edges(stable_law):
    assert stable_law.cdf_A(0.0) == 0.0
    assert stable_law.cdf_A(math.inf) == 1.0
    assert stable_law.cdf_A(60.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("fixture", ["stable_law", "custom_law"])
def test_pdf_A_is_derivative_of_cdf(request, fixture):
    law = request.getfixturevalue(fixture)
    for t in (0.2, 1.0, 3.0):
        h = 1e-4 * t
        fd = (law.cdf_A(t + h) - law.cdf_A(t - h)) / (2 * h)
        assert law.pdf_A(t) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("fixture", ["quad_law", "stable_law", "custom_law"])
def test_cdf_A_two_paths_agree(request, fixture):
    law = request.getfixturevalue(fixture)
    for t in TS:
        assert law.cdf_A(t) == pytest.approx(law.cdf_A_via_laplace(t), rel=1e-10)


def test_pdf_A_far_tail_is_finite(stable_law, quad_law):
    assert quad_law.pdf_A(1e4) == 0.0
    assert 0.0 <= stable_law.pdf_A(800.0) < 1e-300


# -- conditional laws given A --------------------------------------------------


@pytest.mark.parametrize("t", TS)
@pytest.mark.parametrize("lam", LAMS)
def test_conditional_transforms_quadratic(quad_law, lam, t):
    r = 2 + c_quad(t)
    gamma2 = (r / (r + lam)) ** 2
    assert quad_law.laplace_ZA_given_A(lam, t) == pytest.approx(gamma2, rel=1e-12)
    assert quad_law.laplace_ZI_given_A(lam, t) == pytest.approx(gamma2, rel=1e-12)
    assert quad_law.laplace_ZO_given_A(lam, t) == pytest.approx(r / (r + lam), rel=1e-12)
    # the size at the MRCA carries no jump for a quadratic mechanism
    assert quad_law.laplace_ZAplus_given_A(lam, t) == pytest.approx(gamma2, rel=1e-12)


def test_mean_ZA_given_A_quadratic(quad_law):
    for t in TS:
        assert quad_law.mean_ZA_given_A(t) == pytest.approx(2 / (2 + c_quad(t)), rel=1e-13)


def test_mean_ZA_is_derivative_of_transform(custom_law):
    t, h = 0.7, 1e-5
    fd = -(custom_law.laplace_ZA_given_A(h, t) - 1.0) / h
    assert custom_law.mean_ZA_given_A(t) == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("fixture", ["quad_law", "stable_law", "custom_law"])
def test_factorization(request, fixture):
    law = request.getfixturevalue(fixture)
    for lam in LAMS:
        for gamma in LAMS:
            for eta in LAMS:
                for t in TS:
                    prod = (
                        law.pdf_A(t)
                        * law.laplace_ZA_given_A(lam, t)
                        * law.laplace_ZI_given_A(gamma, t)
                        * law.laplace_ZO_given_A(eta, t)
                    )
                    assert law.joint_functional(lam, gamma, eta, t) == pytest.approx(prod, rel=1e-8)


def test_joint_functional_integrates_to_marginal(custom_law):
    # integrating the joint functional in t with gamma = eta = 0 gives E[exp(-lam Z_A)]
    from scipy import integrate

    lam = 0.9
    val, _ = integrate.quad(lambda t: custom_law.joint_functional(lam, 0.0, 0.0, t), 0, math.inf)
    at_zero = custom_law.joint_functional(0.0, 0.0, 0.0, 1.0)
    assert at_zero == pytest.approx(custom_law.pdf_A(1.0), rel=1e-10)
    assert 0 < val < 1


@pytest.mark.parametrize("fixture", ["quad_law", "stable_law", "custom_law"])
def test_transform_dominance(request, fixture):
    law = request.getfixturevalue(fixture)
    for lam in LAMS:
        for t in TS:
            assert law.laplace_ZA_given_A(lam, t) >= law.laplace_Z(lam)


def test_conditional_transform_domain_errors(quad_law):
    with pytest.raises(MechanismError):
        quad_law.laplace_ZA_given_A(-1.0, 1.0)
    with pytest.raises(MechanismError):
        quad_law.laplace_ZO_given_A(1.0, 0.0)


# -- number of oldest families ----------------------------------------------


def test_pmf_NA_quadratic_is_point_mass(quad_law):
    assert quad_law.pmf_NA_given_A(1, 0.4) == pytest.approx(1.0, rel=1e-14)
    assert quad_law.pmf_NA_given_A(2, 0.4) == 0.0
    assert quad_law.mean_NA_given_A(0.4) == pytest.approx(1.0, rel=1e-14)


def test_pmf_NA_stable(stable_law):
    # p_1 = a0, p_{n+1}/p_n = (n - a0)/(n + 1), free of t
    expected = [0.5, 0.125, 0.0625, 0.0390625]
    for t in (0.1, 2.0):
        got = [stable_law.pmf_NA_given_A(n, t) for n in range(1, 5)]
        assert got == pytest.approx(expected, rel=1e-12)
    assert stable_law.pgf_NA_given_A(0.5, 1.0) == pytest.approx(1 - math.sqrt(0.5), rel=1e-12)
    assert math.isinf(stable_law.mean_NA_given_A(1.0))


def test_pmf_NA_stable_large_n_does_not_overflow(stable_law):
    p = stable_law.pmf_NA_given_A(10**6, 1.0)
    assert 0 < p < 1e-8


@pytest.mark.parametrize("t", [0.2, 1.5])
def test_pmf_NA_custom_is_taylor_of_pgf(custom_law, t):
    mp.mp.dps = 40
    c = custom_law.ev.c_of(t)
    spec = custom_law.spec

    def tp(x):
        out = 2 * spec.beta * x
        for m, l in spec.atoms:
            out += m * l * (1 - mp.exp(-x * l))
        return out

    coeffs = mp.taylor(lambda a: 1 - tp((1 - a) * c) / tp(c), 0, 6)
    for n in range(1, 7):
        assert custom_law.pmf_NA_given_A(n, t) == pytest.approx(float(coeffs[n]), rel=1e-9)


def test_mean_NA_custom(custom_law):
    t = 0.5
    series = sum(n * custom_law.pmf_NA_given_A(n, t) for n in range(1, 80))
    assert custom_law.mean_NA_given_A(t) == pytest.approx(series, rel=1e-10)
    means = [custom_law.mean_NA_given_A(t) for t in (0.1, 1.0, 5.0, 20.0)]
    assert all(a > b for a, b in zip(means, means[1:]))
    assert means[-1] == pytest.approx(1.0, abs=1e-8)


def test_pgf_NA_limits(custom_law):
    assert custom_law.pgf_NA_given_A(0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert custom_law.pgf_NA_given_A(1.0, 1.0) == 1.0
    with pytest.raises(MechanismError):
        custom_law.pgf_NA_given_A(1.5, 1.0)
    with pytest.raises(MechanismError):
        custom_law.pmf_NA_given_A(0, 1.0)


# -- sampled TMRCA ---------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_moment_An_quadratic_limit_is_gamma_moment(quad_law, n):
    # T -> inf, lam = 0: E[Z^n] of Gamma(2, 2)
    assert quad_law.moment_An(n, 0.0, 60.0) == pytest.approx(math.factorial(n + 1) / 2**n)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0])
def test_moment_An_finite_differences_reproduce_closed_form(quad_law, n, lam):
    # the quadratic written as a custom mechanism takes the finite-difference path
    as_custom = StationaryLaw.from_spec(MechanismSpec.custom(alpha=2.0, beta=1.0))
    # one-sided fourth differences at lam = 0 are limited by rounding
    rel = 2e-3 if (lam == 0 and n == 4) else 1e-5
    for T in (0.3, 1.0, 4.0):
        assert as_custom.moment_An(n, lam, T) == pytest.approx(
            quad_law.moment_An(n, lam, T), rel=rel
        )


def test_moment_An_n1_matches_analytic_derivative(custom_law):
    # d/dmu [psi(u(mu,T))/psi(mu)] = psi'(u) psi(u)/psi(mu)^2 - psi(u) psi'(mu)/psi(mu)^2
    spec, ev = custom_law.spec, custom_law.ev
    lam, T = 1.0, 1.0
    u = ev.u_of(lam, T)
    deriv = (spec.psi_prime(u) - spec.psi_prime(lam)) * spec.psi(u) / spec.psi(lam) ** 2
    prefactor = custom_law.laplace_Z(lam) * spec.psi(lam) / spec.psi(u)
    assert custom_law.moment_An(1, lam, T) == pytest.approx(-prefactor * deriv, rel=1e-5)


def test_moment_An_caps_and_domain(custom_law, stable_law):
    with pytest.raises(CapabilityError):
        custom_law.moment_An(5, 1.0, 1.0)
    with pytest.raises(MechanismError):
        stable_law.moment_An(1, 0.0, 1.0)
    assert stable_law.moment_An(1, 1.0, 1.0) > 0


def test_cdf_A1_quadratic_against_mpmath(quad_law):
    mp.mp.dps = 50
    for t in (1e-4, 0.1, 0.3465, 0.3466, 1.0, 5.0):
        rho = mp.mpf(2 * t)
        r = mp.expm1(rho)
        oracle = 2 * r * (1 + r * mp.log(1 - mp.exp(-rho)))
        assert quad_law.cdf_A1_quadratic(t) == pytest.approx(float(oracle), rel=1e-12)


def test_cdf_A1_is_a_distribution_function(quad_law):
    ts = np.linspace(0.01, 15, 200)
    vals = [quad_law.cdf_A1_quadratic(t) for t in ts]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0, abs=1e-12)
    assert quad_law.cdf_A1_quadratic(0.0) == 0.0


def test_cdf_A1_needs_quadratic(stable_law):
    with pytest.raises(CapabilityError):
        stable_law.cdf_A1_quadratic(1.0)


# -- ancestors ------------------------------------------------------------------


@pytest.mark.parametrize("eta, lam, s", [(0.3, 1.0, 0.5), (1.0, 0.3, 0.1), (2.0, 5.0, 2.0)])
def test_laplace_ancestors_quadratic(quad_law, eta, lam, s):
    # Poisson(c Z_past) families on top of Gamma(2, 2 + c) immigration
    c = c_quad(s)
    r = 2 + c
    w = r / (r + lam)
    expected = w**2 * (2 / (2 + c * (1 - math.exp(-eta) * w))) ** 2
    assert quad_law.laplace_ancestors(eta, lam, s) == pytest.approx(expected, rel=1e-12)


def test_laplace_ancestors_marginals(custom_law):
    s = 0.7
    assert custom_law.laplace_ancestors(0.0, 1.3, s) == pytest.approx(
        custom_law.laplace_Z(1.3), rel=1e-10
    )
    c = custom_law.ev.c_of(s)
    assert custom_law.laplace_ancestors(0.4, 0.0, s) == pytest.approx(
        custom_law.laplace_Z(-math.expm1(-0.4) * c), rel=1e-12
    )


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1e-3, max_value=50.0), st.floats(min_value=1e-3, max_value=50.0))
def test_laplace_Z_is_completely_monotone_sample(a, b):
    law = StationaryLaw.from_spec(MechanismSpec.quadratic(beta=1.0, theta=0.5))
    lo, hi = sorted((a, b))
    assert 0 < law.laplace_Z(hi) <= law.laplace_Z(lo) <= 1


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1e-3, max_value=20.0), st.floats(min_value=1e-3, max_value=20.0))
def test_cdf_A_is_monotone(a, b):
    law = StationaryLaw.from_spec(MechanismSpec.quadratic(beta=2.0, theta=0.5))
    lo, hi = sorted((a, b))
    assert 0 <= law.cdf_A(lo) <= law.cdf_A(hi) <= 1
