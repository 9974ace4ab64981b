import math
import warnings

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from qecinsitu.channels import (
    AnisotropicParams,
    ChannelParams,
    FlipProbs,
    RateTriple,
    anisotropic_effective,
    bitflip_probability,
    bloch_generator,
    bloch_ode_solve,
    choi_of_unital,
    composite_coeffs,
    flip_probs_of_choi,
    p_of_tau,
    rotation_matrix,
    transfer_matrix_of_anisotropic,
)

angle = st.floats(-10.0, 10.0)


@st.composite
def unit_axes(draw):
    v = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(v)
    if n < 1e-3:
        return (0.0, 0.0, 1.0)
    return tuple(v / n)


@st.composite
def pauli_triples(draw):
    w = np.array([draw(st.floats(0.0, 1.0)) for _ in range(4)])
    if w.sum() == 0:
        w[0] = 1.0
    w /= w.sum()
    return tuple(w[1:])


# --- p(tau) and the composite coefficients ---

def test_p_of_tau_values():
    assert p_of_tau(3.0, 0.0) == 0.0
    assert p_of_tau(math.inf, 1.0) == 0.5
    assert p_of_tau(0.01, 10.0) == pytest.approx(0.5 * (1 - math.exp(-0.4)), abs=1e-15)


def test_p_of_tau_matches_numerical_rate_equation():
    # dp/dt = 2 gamma (1 - 2 p), p(0) = 0
    sol = scipy.integrate.solve_ivp(lambda t, p: 2 * 0.01 * (1 - 2 * p), (0, 10), [0.0],
                                    method="RK45", rtol=1e-12, atol=1e-14)
    assert sol.y[0, -1] == pytest.approx(p_of_tau(0.01, 10.0), abs=1e-10)


@pytest.mark.parametrize("args", [(-1, 1), (1, -1)])
def test_p_of_tau_rejects_negative(args):
    with pytest.raises(ValueError):
        p_of_tau(*args)


@pytest.mark.parametrize("kw", [dict(omega=-1), dict(gamma=-0.1), dict(tau=-1)])
def test_channel_params_validation(kw):
    base = dict(omega=1.0, gamma=0.01, tau=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        ChannelParams(**base)


def test_identity_channel():
    cc = composite_coeffs(ChannelParams(0, 0, 2.0))
    assert (cc.P, cc.Q, cc.C) == (0.0, 1.0, 0.0)


def test_counter_rotation_cancels_unitary_part():
    cc = composite_coeffs(ChannelParams(1.0, 0.01, 0.72, omega_c=1.0))
    assert cc.P == pytest.approx(0.5 * (1 - math.exp(-0.0288)), abs=1e-15)
    assert cc.P == pytest.approx(p_of_tau(0.01, 0.72), abs=1e-15)


@settings(max_examples=300)
@given(st.floats(0, 20), st.floats(0, 5), st.floats(0, 20), st.floats(-20, 20))
def test_composite_invariants(omega, gamma, tau, omega_c):
    cc = composite_coeffs(ChannelParams(omega, gamma, tau, omega_c))
    assert cc.P + cc.Q == 1.0
    assert 0.0 <= cc.P <= 1.0
    assert abs(cc.C) <= 0.5
    decay = math.exp(-4 * gamma * tau)
    assert cc.P <= 0.5 * (1 + decay) + 1e-15
    if math.cos((omega - omega_c) * tau) >= 0:
        assert cc.P <= 0.5 + 1e-15
    # P and C sit on a circle of radius decay/2 about (1/2, 0)
    assert (cc.P - 0.5) ** 2 + cc.C**2 == pytest.approx(0.25 * decay**2, abs=1e-12)


@given(st.floats(0, 20), st.floats(0, 5), st.floats(0, 20))
def test_flip_probability_is_even_in_omega(omega, gamma, tau):
    assert bitflip_probability(omega, gamma, tau) == bitflip_probability(-omega, gamma, tau)


def test_small_tau_expansion():
    omega, gamma = 1.0, 0.01
    taus = np.linspace(1e-3, 0.1, 200)
    resid = np.abs(bitflip_probability(omega, gamma, taus) - (0.25 * (omega * taus) ** 2 + 2 * gamma * taus))
    # next terms: -4 gamma^2 tau^2 and -omega^2 gamma tau^3
    c = np.max((resid - 4 * gamma**2 * taus**2) / taus**3)
    assert c < 0.02
    assert np.all(resid <= 4 * gamma**2 * taus**2 + c * taus**3 + 1e-17)
    # with no decoherence the residual is pure higher order
    pure = np.abs(bitflip_probability(omega, 0.0, taus) - 0.25 * (omega * taus) ** 2)
    assert np.all(pure <= 0.01 * taus**3)


# --- anisotropic channel and Choi route ---

def test_anisotropic_identity():
    fp = anisotropic_effective(AnisotropicParams(0, 0, 0))
    assert fp.as_array().tolist() == [1.0, 0.0, 0.0, 0.0]


def test_anisotropic_bitflip_reduces_to_composite():
    rng = np.random.default_rng(0)
    for _ in range(100):
        omega, gamma, tau = rng.uniform(0, 3), rng.uniform(0, 0.5), rng.uniform(0, 5)
        p = p_of_tau(gamma, tau)
        fp = anisotropic_effective(AnisotropicParams(p, 0, 0, (1, 0, 0), omega * tau))
        assert fp.Px == pytest.approx(composite_coeffs(ChannelParams(omega, gamma, tau)).P, abs=1e-13)


@given(st.floats(0, 1), unit_axes())
def test_depolarizing_without_rotation_is_unchanged(P, axis):
    fp = anisotropic_effective(AnisotropicParams(P / 3, P / 3, P / 3, axis, 0.0))
    np.testing.assert_allclose(fp.as_array(), [1 - P, P / 3, P / 3, P / 3], atol=1e-12)


@given(unit_axes(), angle)
def test_fully_depolarizing_absorbs_any_rotation(axis, theta):
    fp = anisotropic_effective(AnisotropicParams(0.25, 0.25, 0.25, axis, theta))
    np.testing.assert_allclose(fp.as_array(), [0.25] * 4, atol=1e-12)


def test_rotation_adds_coherent_error_to_depolarizing():
    fp = anisotropic_effective(AnisotropicParams(0.01, 0.01, 0.01, (0, 0, 1), 1.0))
    assert fp.Pz > 0.01 + 0.2


def test_anisotropic_rejects_bad_axis():
    with pytest.raises(ValueError):
        AnisotropicParams(0.1, 0, 0, (1, 1, 0), 0.3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@settings(max_examples=300)
@given(pauli_triples(), unit_axes(), angle)
def test_anisotropic_matches_choi_route(ps, axis, theta):
    direct = anisotropic_effective(AnisotropicParams(*ps, axis, theta))
    assert sum(direct.as_array()) == pytest.approx(1.0, abs=1e-12)
    B = rotation_matrix(axis, theta) @ transfer_matrix_of_anisotropic(*ps)
    np.testing.assert_allclose(flip_probs_of_choi(choi_of_unital(B)).as_array(), direct.as_array(), atol=1e-10)


def test_transfer_matrix_examples():
    np.testing.assert_array_equal(transfer_matrix_of_anisotropic(0, 0, 0), np.eye(3))
    np.testing.assert_allclose(transfer_matrix_of_anisotropic(0.2, 0, 0), np.diag([1, 0.6, 0.6]))
    np.testing.assert_allclose(transfer_matrix_of_anisotropic(0.25, 0.25, 0.25), np.zeros((3, 3)), atol=1e-15)


@given(pauli_triples(), unit_axes(), angle)
def test_unital_channel_is_contractive(ps, axis, theta):
    B = rotation_matrix(axis, theta) @ transfer_matrix_of_anisotropic(*ps)
    assert np.linalg.svd(B, compute_uv=False).max() <= 1 + 1e-9


# --- rotations ---

def test_rotation_handedness_golden():
    # Right-handed: a quarter turn about z takes x to +y.
    R = rotation_matrix((0, 0, 1), math.pi / 2)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rotation_agrees_with_bloch_generator_sense():
    R = rotation_matrix((0, 0, 1), 0.7)
    np.testing.assert_allclose(R, scipy.linalg.expm(0.7 * bloch_generator(1.0, (0, 0, 1), RateTriple(0, 0, 0))),
                               atol=1e-14)


@given(unit_axes(), angle, angle)
def test_rotation_group_properties(axis, a, b):
    Ra = rotation_matrix(axis, a)
    np.testing.assert_allclose(Ra @ Ra.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(Ra) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(Ra @ rotation_matrix(axis, b), rotation_matrix(axis, a + b), atol=1e-12)
    np.testing.assert_allclose(rotation_matrix(axis, 0.0), np.eye(3), atol=1e-15)


# --- process matrix ---

def test_choi_identity_and_bitflip():
    np.testing.assert_allclose(choi_of_unital(np.eye(3)), np.diag([2, 0, 0, 0]))
    p = 0.13
    chi = choi_of_unital(np.diag([1, 1 - 2 * p, 1 - 2 * p]))
    np.testing.assert_allclose(chi, np.diag([2 * (1 - p), 2 * p, 0, 0]), atol=1e-15)
    fp = flip_probs_of_choi(chi)
    assert fp.as_array() == pytest.approx([1 - p, p, 0, 0], abs=1e-15)


@given(pauli_triples(), unit_axes(), angle)
def test_choi_structure(ps, axis, theta):
    chi = choi_of_unital(rotation_matrix(axis, theta) @ transfer_matrix_of_anisotropic(*ps))
    np.testing.assert_allclose(chi, chi.conj().T, atol=1e-12)
    assert np.trace(chi).real == pytest.approx(2.0, abs=1e-12)
    assert np.all(np.diag(chi).real >= -1e-12)


def test_coherence_term_in_process_matrix():
    rng = np.random.default_rng(1)
    for _ in range(100):
        omega, gamma, tau = rng.uniform(0, 3), rng.uniform(0, 0.5), rng.uniform(0, 5)
        p = p_of_tau(gamma, tau)
        chi = choi_of_unital(rotation_matrix((1, 0, 0), omega * tau) @ transfer_matrix_of_anisotropic(p, 0, 0))
        cc = composite_coeffs(ChannelParams(omega, gamma, tau))
        assert chi[0, 1].imag == pytest.approx(2 * cc.C, abs=1e-10)
        assert chi[1, 0] == pytest.approx(-chi[0, 1], abs=1e-15)


def test_flip_probs_of_choi_clamps_rounding_noise():
    chi = np.diag([2.0, 0.0, 0.0, -2e-10]).astype(complex)
    chi[0, 0] += 2e-10
    with pytest.warns(RuntimeWarning):
        fp = flip_probs_of_choi(chi)
    assert fp.Pz == 0.0


def test_flip_probs_of_choi_rejects_unphysical():
    chi = np.diag([2.0 + 2e-8, 0.0, 0.0, -2e-8]).astype(complex)
    with pytest.raises(ValueError):
        flip_probs_of_choi(chi)


def test_flip_probs_validation():
    with pytest.raises(ValueError):
        FlipProbs(0.5, 0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        FlipProbs(1.2, -0.2, 0.0, 0.0)


# --- Bloch equation ---

def test_bloch_zero_time_is_identity():
    np.testing.assert_array_equal(bloch_ode_solve(1.3, (0, 1, 0), RateTriple(0.1, 0.2, 0.3), 0.0), np.eye(3))


def test_bloch_pure_dephasing():
    r = RateTriple(0.05, 0.02, 0.11)
    tau = 2.5
    expect = np.diag(np.exp(-4 * tau * np.array([r.gamma_y + r.gamma_z, r.gamma_x + r.gamma_z, r.gamma_x + r.gamma_y])))
    np.testing.assert_allclose(bloch_ode_solve(0.0, (1, 0, 0), r, tau), expect, atol=1e-12)


def test_bloch_commuting_case_matches_composite():
    for omega, gamma, tau in [(1.0, 0.01, 0.72), (2.3, 0.2, 1.7), (0.4, 0.05, 4.0)]:
        B = bloch_ode_solve(omega, (1, 0, 0), RateTriple(gamma, 0, 0), tau)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fp = flip_probs_of_choi(choi_of_unital(B))
        cc = composite_coeffs(ChannelParams(omega, gamma, tau))
        assert fp.Q == pytest.approx(cc.Q, abs=1e-6)
        assert fp.Px == pytest.approx(cc.P, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 3), unit_axes(), st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 3))
def test_bloch_matches_matrix_exponential(omega, axis, gx, gy, gz, tau):
    r = RateTriple(gx, gy, gz)
    np.testing.assert_allclose(bloch_ode_solve(omega, axis, r, tau),
                               scipy.linalg.expm(tau * bloch_generator(omega, axis, r)), atol=1e-10)


def test_bloch_integrator_is_fourth_order():
    args = (2.0, (0.6, 0.0, 0.8), RateTriple(0.1, 0.05, 0.2), 3.0)
    exact = scipy.linalg.expm(3.0 * bloch_generator(*args[:3]))
    errs = [np.abs(bloch_ode_solve(*args, steps=n) - exact).max() for n in (10, 20, 40)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 12 < coarse / fine < 20
