import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrca_lab.mechanism import CapabilityError, MechanismError, MechanismSpec


def mp_psi_custom(spec, x):
    x = mp.mpf(x)
    out = spec.alpha * x + spec.beta * x**2
    for m, l in spec.atoms:
        out += m * (mp.exp(-x * l) - 1 + x * l)
    return out


def test_quadratic_alpha_is_two_beta_theta():
    spec = MechanismSpec.quadratic(beta=0.5, theta=3.0)
    assert spec.alpha == 3.0
    assert spec.psi(2.0) == pytest.approx(0.5 * 4 + 3.0 * 2)


def test_quadratic_pieces(quad_spec):
    lam = np.array([0.0, 0.5, 2.0])
    np.testing.assert_allclose(quad_spec.psi(lam), lam**2 + 2 * lam)
    np.testing.assert_allclose(quad_spec.psi_prime(lam), 2 * lam + 2)
    np.testing.assert_allclose(quad_spec.psi_tilde_prime(lam), 2 * lam)
    assert quad_spec.psi_second_at_zero() == 2.0
    assert quad_spec.mean_stationary() == 1.0


def test_stable_pieces(stable_spec):
    assert stable_spec.psi(4.0) == pytest.approx(4.0 + 8.0)
    assert stable_spec.psi_tilde_prime(4.0) == pytest.approx(1.5 * 2.0)
    assert math.isinf(stable_spec.psi_second_at_zero())
    assert math.isinf(stable_spec.mean_stationary())


@pytest.mark.parametrize("x", [1e-6, 1e-3, 0.7, 4.0, 30.0])
def test_custom_psi_matches_mpmath(custom_spec, x):
    mp.mp.dps = 30
    assert custom_spec.psi(x) == pytest.approx(float(mp_psi_custom(custom_spec, x)), rel=1e-13)
    deriv = mp.diff(lambda v: mp_psi_custom(custom_spec, v), x)
    assert custom_spec.psi_prime(x) == pytest.approx(float(deriv), rel=1e-12)


def test_custom_small_argument_has_no_cancellation(custom_spec):
    # psi~(x) ~ x^2 (beta + sum m l^2 / 2) as x -> 0
    x = 1e-9
    expected = x**2 * (custom_spec.beta + 0.5 * (1.0 * 1.0 + 0.5 * 9.0))
    assert custom_spec.psi_tilde(x) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("order", [2, 3, 4, 6])
def test_signed_derivative_custom(custom_spec, order):
    mp.mp.dps = 40
    x = 0.8
    deriv = mp.diff(lambda v: mp_psi_custom(custom_spec, v), x, order)
    assert custom_spec.signed_derivative(order, x) == pytest.approx(
        float((-1) ** order * deriv), rel=1e-10
    )


@pytest.mark.parametrize("order", [2, 3, 5])
def test_signed_derivative_stable(stable_spec, order):
    mp.mp.dps = 40
    x = 1.7
    deriv = mp.diff(lambda v: v + v**1.5, x, order)
    assert stable_spec.signed_derivative(order, x) == pytest.approx(
        float((-1) ** order * deriv), rel=1e-10
    )


def test_validate_accepts_reference_mechanisms(quad_spec, stable_spec, custom_spec):
    for spec in (quad_spec, stable_spec, custom_spec):
        assert spec.validate().ok


def test_custom_without_gaussian_part_fails_a1():
    report = MechanismSpec.custom(alpha=1.0, beta=0.0, atoms=[(1.0, 1.0)]).validate()
    assert not report.A1 and not report.nontrivial
    assert report.reasons


@pytest.mark.parametrize(
    "spec",
    [
        MechanismSpec.stable(alpha=0.0, c0=1.0, alpha0=0.5),
        MechanismSpec.stable(alpha=1.0, c0=1.0, alpha0=1.5),
        MechanismSpec.quadratic(beta=1.0, theta=-1.0),
        MechanismSpec.custom(alpha=1.0, beta=1.0, atoms=[(-1.0, 1.0)]),
    ],
)
def test_invalid_mechanisms_are_rejected(spec):
    assert not spec.validate().ok
    with pytest.raises(MechanismError):
        spec.require_valid()


def test_non_finite_parameters_raise():
    with pytest.raises(MechanismError):
        MechanismSpec.quadratic(beta=math.nan, theta=1.0)


def test_negative_argument_raises(quad_spec):
    with pytest.raises(MechanismError):
        quad_spec.psi(-1.0)


def test_config_round_trip(quad_spec, stable_spec, custom_spec):
    for spec in (quad_spec, stable_spec, custom_spec):
        assert MechanismSpec.from_config(spec.to_config()) == spec


def test_config_errors():
    with pytest.raises(MechanismError):
        MechanismSpec.from_config({"kind": "quadratic", "beta": 1.0})
    with pytest.raises(MechanismError):
        MechanismSpec.from_config({"kind": "cubic"})


def test_capability_error_is_not_a_domain_error():
    assert issubclass(CapabilityError, NotImplementedError)
    assert not issubclass(CapabilityError, MechanismError)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=1e6, allow_nan=False))
def test_scalar_and_array_paths_agree(x):
    spec = MechanismSpec.custom(alpha=1.0, beta=0.3, atoms=[(1.0, 1.0), (2.0, 0.01)])
    scalar = spec.psi_tilde_ratio(float(x))
    vector = spec.psi_tilde_ratio(np.array([x]))[0]
    assert scalar == pytest.approx(vector, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1e-8, max_value=1e4), st.floats(min_value=1e-8, max_value=1e4))
def test_psi_tilde_prime_is_increasing(a, b):
    spec = MechanismSpec.custom(alpha=1.0, beta=1.0, atoms=[(1.0, 1.0)])
    lo, hi = sorted((a, b))
    assert spec.psi_tilde_prime(lo) <= spec.psi_tilde_prime(hi)
