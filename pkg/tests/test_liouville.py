import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from lacsim.liouville import (
    RelaxationSpec,
    coherent_liouvillian,
    liouvillian,
    ordered_product,
    propagator,
    relaxation_superoperator,
    rho_to_vec,
    vec_to_rho,
)
from lacsim.spinops import SpinSystemSpec, SystemKind, hamiltonian_at, spin_half_operators

SINGLE = SpinSystemSpec(SystemKind.SINGLE_SPIN)
TWO_ISO = SpinSystemSpec(SystemKind.TWO_SPIN_ISOTROPIC, a_iso=0.2)


def _random_hermitian(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (a + a.conj().T)


def _random_density(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_vectorization_convention():
    rho = np.arange(4).reshape(2, 2) + 0j
    v = rho_to_vec(rho)
    # rho[i, j] -> v[i*dim + j]
    assert v[0] == rho[0, 0] and v[1] == rho[0, 1] and v[2] == rho[1, 0]
    assert np.array_equal(vec_to_rho(v, 2), rho)


def test_coherent_diagonal_hamiltonian_rotates_coherence_only():
    omega = 0.7
    h = np.diag([0.5 * omega, -0.5 * omega]).astype(complex)
    l_coh = coherent_liouvillian(h)
    rho = np.array([[0.6, 0.2 + 0.1j], [0.2 - 0.1j, 0.4]])
    drho = vec_to_rho(l_coh @ rho_to_vec(rho), 2)
    assert abs(drho[0, 0]) < 1e-15 and abs(drho[1, 1]) < 1e-15
    assert np.isclose(drho[0, 1], -1j * omega * rho[0, 1])


def test_coherent_zero_hamiltonian():
    assert np.allclose(coherent_liouvillian(np.zeros((4, 4))), 0.0)


def test_coherent_matches_commutator_on_random_input():
    rng = np.random.default_rng(7)
    for dim in (2, 4):
        h = _random_hermitian(rng, dim)
        rho = _random_density(rng, dim)
        l_coh = coherent_liouvillian(h)
        direct = -1j * (h @ rho - rho @ h)
        assert np.allclose(vec_to_rho(l_coh @ rho_to_vec(rho), dim), direct, atol=1e-13)


def test_rabi_oscillation_against_closed_form():
    v_coupling = 0.3
    h = v_coupling * spin_half_operators()[0]
    l_coh = coherent_liouvillian(h)
    dt = 0.02
    u = propagator(l_coh, dt)
    vec = rho_to_vec(np.diag([1.0, 0.0]).astype(complex))
    for step in range(1, 501):
        vec = u @ vec
        expected = np.cos(0.5 * v_coupling * step * dt) ** 2
        assert abs(vec[0].real - expected) < 1e-10


def test_relaxation_equalizes_populations():
    relax = RelaxationSpec(r1=1.0)
    r = relaxation_superoperator(relax, SINGLE)
    u = propagator(r, 50.0)
    rho = vec_to_rho(u @ rho_to_vec(np.diag([1.0, 0.0]).astype(complex)), 2)
    assert np.allclose(np.diag(rho).real, [0.5, 0.5], atol=1e-12)


def test_pump_only_fixed_point_is_bright():
    relax = RelaxationSpec(pump_j=0.5)
    r = relaxation_superoperator(relax, SINGLE)
    u = propagator(r, 100.0)
    rho = vec_to_rho(u @ rho_to_vec(np.eye(2, dtype=complex) / 2), 2)
    assert np.allclose(np.diag(rho).real, [1.0, 0.0], atol=1e-12)


def test_pump_r1_balance_by_long_propagation():
    # rate balance (r1/2)(p_a - p_b) = j p_b  ->  p_b = (r1/2)/(j + r1)
    relax = RelaxationSpec(r1=1e-4, pump_j=0.01)
    r = relaxation_superoperator(relax, SINGLE)
    u = propagator(r, 500.0)
    vec = rho_to_vec(np.eye(2, dtype=complex) / 2)
    for _ in range(20):
        vec = u @ vec
    expected = (1e-4 / 2) / (0.01 + 1e-4)
    assert abs(vec[3].real - expected) < 1e-10


def test_nuclear_coherences_not_damped():
    relax = RelaxationSpec(r1=0.3, r2=0.8, pump_j=0.1)
    r = relaxation_superoperator(relax, TWO_ISO)
    dim = 4
    # alpha-manifold nuclear coherence |a,up><a,dn| = element (0, 1)
    idx = 0 * dim + 1
    assert abs(r[idx, idx]) < 1e-15
    # beta-manifold nuclear coherence (2, 3)
    idx = 2 * dim + 3
    assert abs(r[idx, idx]) < 1e-15


@pytest.mark.parametrize("damps,expected_extra", [(True, 0.05), (False, 0.0)])
def test_electron_coherence_decay_rates(damps, expected_extra):
    relax = RelaxationSpec(r2=0.8, pump_j=0.1, pump_damps_coherence=damps)
    r = relaxation_superoperator(relax, TWO_ISO)
    dim = 4
    for i in range(dim):
        for j in range(dim):
            if (i // 2) != (j // 2):
                assert np.isclose(r[i * dim + j, i * dim + j], -(0.8 + expected_extra))


def test_trace_preservation_left_null_vector():
    rng = np.random.default_rng(3)
    for system in (SINGLE, TWO_ISO):
        dim = system.dim
        relax = RelaxationSpec(r1=0.2, r2=0.7, pump_j=0.05)
        l_total = liouvillian(system, relax, 0.4)
        rho = _random_density(rng, dim)
        drho = vec_to_rho(l_total @ rho_to_vec(rho), dim)
        assert abs(np.trace(drho)) < 1e-12


@given(
    r1=st.floats(min_value=0.0, max_value=2.0),
    r2=st.floats(min_value=0.0, max_value=2.0),
    pump=st.floats(min_value=0.0, max_value=1.0),
    omega=st.floats(min_value=-3.0, max_value=3.0),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=30, deadline=None)
def test_propagation_preserves_trace_and_hermiticity(r1, r2, pump, omega, seed):
    rng = np.random.default_rng(seed)
    relax = RelaxationSpec(r1=r1, r2=r2, pump_j=pump)
    l_total = liouvillian(TWO_ISO, relax, omega)
    u = propagator(l_total, 0.37)
    rho = _random_density(rng, 4)
    vec = rho_to_vec(rho)
    for _ in range(50):
        vec = u @ vec
    out = vec_to_rho(vec, 4)
    assert abs(np.trace(out) - 1.0) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_hermiticity_over_a_million_steps():
    relax = RelaxationSpec(r1=1e-3, r2=0.1, pump_j=0.02)
    u = propagator(liouvillian(SINGLE, relax, 0.3), 0.05)
    vec = rho_to_vec(np.diag([0.9, 0.1]).astype(complex))
    # iterate u^(2^20) via repeated squaring plus a tail of explicit steps
    power = u.copy()
    for _ in range(20):
        power = power @ power
    vec = power @ vec
    out = vec_to_rho(vec, 2)
    assert np.max(np.abs(out - out.conj().T)) < 1e-10
    assert abs(np.trace(out) - 1.0) < 1e-10


def test_unitary_propagation_conserves_purity():
    l_coh = coherent_liouvillian(hamiltonian_at(SpinSystemSpec(SystemKind.SINGLE_SPIN, v_perturbation=0.3), 0.5))
    u = propagator(l_coh, 0.11)
    vec = rho_to_vec(np.diag([1.0, 0.0]).astype(complex))
    for _ in range(2000):
        vec = u @ vec
    rho = vec_to_rho(vec, 2)
    assert abs(np.trace(rho @ rho).real - 1.0) < 1e-10


def test_propagator_semigroup_property():
    relax = RelaxationSpec(r1=0.1, r2=0.4, pump_j=0.02)
    l_total = liouvillian(TWO_ISO, relax, 0.8)
    dt = 0.6
    half = propagator(l_total, dt / 2)
    assert np.max(np.abs(half @ half - propagator(l_total, dt))) < 1e-10


def test_propagator_identity_and_rotation():
    assert np.allclose(propagator(np.zeros((4, 4)), 1.3), np.eye(4))
    omega = 0.9
    l_coh = coherent_liouvillian(omega * spin_half_operators()[2])
    u = propagator(l_coh, 0.7)
    rho = np.array([[0.5, 0.25], [0.25, 0.5]], dtype=complex)
    out = vec_to_rho(u @ rho_to_vec(rho), 2)
    assert np.isclose(out[0, 1], rho[0, 1] * np.exp(-1j * omega * 0.7), atol=1e-13)
    assert np.isclose(out[0, 0], rho[0, 0], atol=1e-13)


def test_propagator_agrees_with_scipy_on_random_generators():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    assert np.allclose(propagator(a, 0.31), scipy.linalg.expm(a * 0.31), atol=1e-12)


def test_propagator_input_validation():
    with pytest.raises(ValueError):
        propagator(np.zeros((4, 4)), 0.0)
    with pytest.raises(ValueError):
        propagator(np.zeros((4, 4)), float("nan"))
    with pytest.raises(ValueError):
        propagator(np.zeros((4, 3)), 0.1)
    with pytest.raises(ValueError):
        coherent_liouvillian(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_relaxation_spec_validation():
    with pytest.raises(ValueError):
        RelaxationSpec(r1=-0.1)
    with pytest.raises(ValueError):
        RelaxationSpec(r2=float("inf"))


def test_ordered_product_matches_sequential():
    rng = np.random.default_rng(2)
    for count in (1, 2, 3, 7, 64, 129):
        mats = rng.standard_normal((count, 3, 3)) + 1j * rng.standard_normal((count, 3, 3))
        expected = np.eye(3, dtype=complex)
        for m in mats:
            expected = m @ expected
        assert np.allclose(ordered_product(mats), expected, atol=1e-10)
