"""Sigma factorization: second-order gate, omega map, tilde problem."""

import numpy as np
import pytest

from beamosc import sigma as sg
from beamosc.sigma import (SigmaError, build_omega, check_pencil_positivity,
                           check_second_order_positivity, compose_V,
                           solve_sigma, transform_tilde, weak_identity_residual)
from beamosc.transform import build_tau, push_forward

from conftest import load_spec


# --- closed forms for the uniform beam ------------------------------------
# With p = 1 and q = 0 the flux system is sigma'' = 0, so the canonical
# choice reduces to sigma* = 1 + t; normalization gives sigma = (2/3)(1+t).

def test_uniform_sigma_closed_form(reductions):
    _, sig, _ = reductions["uniform_beam"]
    ts = np.linspace(0.0, 1.0, 41)
    np.testing.assert_allclose(sig.sigma(ts), (2.0 / 3.0) * (1.0 + ts),
                               rtol=1e-10)
    assert sig.sigma_at_1 == pytest.approx(4.0 / 3.0, rel=1e-10)


def test_uniform_gamma_closed_form(reductions):
    _, sig, tilde = reductions["uniform_beam"]
    # end flux gamma = sigma'(1) = 2/3; boundary constant gamma*sigma(1)
    assert sig.gamma == pytest.approx(2.0 / 3.0, rel=1e-10)
    assert tilde.gamma_sigma1 == pytest.approx(8.0 / 9.0, rel=1e-10)


def test_uniform_omega_closed_form(reductions):
    _, sig, tilde = reductions["uniform_beam"]
    ts = np.linspace(0.0, 1.0, 41)
    np.testing.assert_allclose(tilde.omega(ts),
                               (2.0 / 3.0) * (ts + 0.5 * ts**2), rtol=1e-10)


def test_uniform_tilde_coefficients_closed_form(reductions):
    _, _, tilde = reductions["uniform_beam"]
    ts = np.linspace(0.0, 1.0, 41)
    om = (2.0 / 3.0) * (ts + 0.5 * ts**2)
    np.testing.assert_allclose(tilde.p(om), (8.0 / 27.0) * (1.0 + ts) ** 3,
                               rtol=1e-9)
    np.testing.assert_allclose(tilde.r(om), 1.0 / ((2.0 / 3.0) * (1.0 + ts)),
                               rtol=1e-9)
    assert tilde.alpha == 0.0


def test_sigma_normalized_to_unit_integral(reductions):
    for name in ("uniform_beam", "multipoint", "variable_coeffs"):
        _, sig, tilde = reductions[name]
        # omega(1) = int_0^1 sigma = 1 by normalization
        assert tilde.omega(1.0) == pytest.approx(1.0, abs=1e-12)


def test_sigma_uniformly_positive(reductions):
    for name in ("multipoint", "variable_coeffs", "large_alpha"):
        _, sig, _ = reductions[name]
        assert sig.min_sigma() > 0.0


def test_omega_monotone_and_invertible(reductions):
    _, _, tilde = reductions["multipoint"]
    ts = np.linspace(0.0, 1.0, 101)
    om = tilde.omega(ts)
    assert np.all(np.diff(om) > 0.0)
    np.testing.assert_allclose(tilde.omega.inverse(om), ts, atol=1e-10)


def test_flux_jump_at_atoms(reductions):
    # the flux p*sigma' jumps by w*sigma(t_i) across each atom, balancing
    # the atom term of the weak identity
    hat, sig, _ = reductions["multipoint"]
    eps = 1e-12
    for atom in hat.atoms:
        jump = sig.flux(atom.location + eps) - sig.flux.left_value(atom.location)
        assert jump == pytest.approx(atom.weight * float(sig.sigma(atom.location)),
                                     rel=1e-8)


def test_weak_identity_residual_small(reductions):
    for name in ("uniform_beam", "multipoint", "variable_coeffs"):
        hat, sig, _ = reductions[name]
        tests = [(lambda t: np.asarray(t), lambda t: np.ones_like(np.asarray(t))),
                 (lambda t: np.asarray(t) ** 2, lambda t: 2.0 * np.asarray(t)),
                 (np.sin, np.cos)]
        assert weak_identity_residual(hat, sig, tests) < 1e-6


def test_positivity_gates_pass_on_fixtures(reductions):
    for name in ("uniform_beam", "multipoint", "large_alpha"):
        hat, _, _ = reductions[name]
        ok, _ = check_pencil_positivity(hat)
        assert ok
        ok, _ = check_second_order_positivity(hat)
        assert ok


def test_negative_q_fails_gate():
    spec = load_spec("negative_q")
    hat = push_forward(spec, build_tau(spec.interfaces))
    ok, piv = check_second_order_positivity(hat)
    assert not ok and piv <= 0.0
    with pytest.raises(SigmaError):
        solve_sigma(hat)


def test_family_shift_changes_sigma_not_gamma_ratio(reductions):
    # two admissible members of the sigma family give different sigma but
    # both are positive, normalized, and produce valid tilde problems
    hat, sig0, _ = reductions["multipoint"]
    sig5 = solve_sigma(hat, extra_shift=5.0)
    assert sig5.shift == pytest.approx(sig0.shift + 5.0)
    assert sig5.min_sigma() > 0.0
    t5 = transform_tilde(hat, sig5, build_omega(sig5))
    assert t5.omega(1.0) == pytest.approx(1.0, abs=1e-12)
    assert abs(float(sig5.sigma(0.5)) - float(sig0.sigma(0.5))) > 1e-6


def test_compose_V_polynomial(reductions):
    _, sig, tilde = reductions["uniform_beam"]
    ts = np.linspace(0.0, 1.0, 21)

    def u(s):
        return np.asarray(s) ** 2

    def du(s):
        return 2.0 * np.asarray(s)

    vals, dvals = compose_V(u, du, tilde.omega, sig.sigma, ts)
    om = (2.0 / 3.0) * (ts + 0.5 * ts**2)
    np.testing.assert_allclose(vals, om**2, rtol=1e-10)
    # (Vu)' = sigma * u'(omega)
    np.testing.assert_allclose(dvals, (2.0 / 3.0) * (1.0 + ts) * 2.0 * om,
                               rtol=1e-10)
