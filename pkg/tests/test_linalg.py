import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kperiod.errors import ContractViolation
from kperiod.linalg import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    bloch_vector,
    expm_skew,
    fidelity,
    fold_phase,
    hermitian_eig,
    ordered_product,
    unitarity_error,
    unitary_eigenphases,
    validate_density,
)
from oracles import jacobi_eigs, taylor_expm


def random_hermitian(seed, d, scale=1.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(seed, d):
    return expm_skew(random_hermitian(seed, d), 1.0)


dims = st.integers(min_value=2, max_value=8)
seeds = st.integers(min_value=0, max_value=2**31)


@settings(max_examples=40, deadline=None)
@given(seeds, dims, st.floats(0.01, 20.0))
def test_expm_matches_taylor_oracle(seed, d, s):
    h = random_hermitian(seed, d)
    np.testing.assert_allclose(expm_skew(h, s), taylor_expm(-1j * s * h), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds, dims)
def test_expm_is_unitary(seed, d):
    assert unitarity_error(expm_skew(random_hermitian(seed, d, 5.0), 3.0)) < 1e-12


def test_expm_2x2_zero_generator_and_stack():
    assert np.allclose(expm_skew(np.zeros((2, 2)), 1.0), np.eye(2))
    # exp(-i pi sigma_z) = -I
    assert np.allclose(expm_skew(0.5 * SIGMA_Z, 2 * np.pi), -np.eye(2), atol=1e-14)
    stack = np.stack([random_hermitian(i, 2) for i in range(5)])
    out = expm_skew(stack, 0.7)
    for h, u in zip(stack, out):
        np.testing.assert_allclose(u, taylor_expm(-0.7j * h), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, dims)
def test_hermitian_eig_matches_jacobi(seed, d):
    h = random_hermitian(seed, d)
    w, v = hermitian_eig(h)
    np.testing.assert_allclose(w, jacobi_eigs(h), atol=1e-10)
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(h @ v, v * w, atol=1e-10)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(d), atol=1e-12)


def test_hermitian_eig_rejects_bad_input():
    with pytest.raises(ContractViolation):
        hermitian_eig(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(ContractViolation):
        hermitian_eig(np.eye(9))
    with pytest.raises(ContractViolation):
        hermitian_eig(np.eye(1))
    with pytest.raises(ContractViolation):
        hermitian_eig(np.ones((2, 3)))
    with pytest.raises(ContractViolation):
        hermitian_eig(np.array([[np.nan, 0], [0, 1]]))


@settings(max_examples=30, deadline=None)
@given(seeds, dims)
def test_unitary_eigenphases_reconstruct(seed, d):
    u = random_unitary(seed, d)
    phases, z = unitary_eigenphases(u)
    assert np.all((phases >= 0) & (phases < 2 * np.pi))
    np.testing.assert_allclose(z @ np.diag(np.exp(1j * phases)) @ z.conj().T, u, atol=1e-10)
    np.testing.assert_allclose(z.conj().T @ z, np.eye(d), atol=1e-10)


def test_unitary_eigenphases_degenerate_gives_orthonormal_basis():
    phases, z = unitary_eigenphases(-np.eye(2))
    np.testing.assert_allclose(phases, [np.pi, np.pi])
    np.testing.assert_allclose(z.conj().T @ z, np.eye(2), atol=1e-14)


def test_unitary_eigenphases_rejects_non_unitary():
    with pytest.raises(ContractViolation):
        unitary_eigenphases(2 * np.eye(2))


def test_fold_phase():
    np.testing.assert_allclose(fold_phase([-0.1, 2 * np.pi, 7.0]),
                               [2 * np.pi - 0.1, 0.0, 7.0 - 2 * np.pi])


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 40), st.sampled_from([2, 3, 6]))
def test_ordered_product_matches_reduce(seed, n, d):
    mats = np.stack([random_unitary(seed + i, d) for i in range(n)])
    expected = functools.reduce(lambda acc, m: m @ acc, mats[1:], mats[0])
    np.testing.assert_allclose(ordered_product(mats), expected, atol=1e-11)


def test_bloch_vector_axes():
    s = 1 / np.sqrt(2)
    for psi, b in [
        ([1, 0], [0, 0, 1]),
        ([0, 1], [0, 0, -1]),
        ([s, s], [1, 0, 0]),
        ([s, 1j * s], [0, 1, 0]),
    ]:
        np.testing.assert_allclose(bloch_vector(np.array(psi, dtype=complex)), b, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_bloch_vector_is_expectation_of_paulis(seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    psi /= np.linalg.norm(psi)
    expect = [np.vdot(psi, p @ psi).real for p in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
    np.testing.assert_allclose(bloch_vector(psi), expect, atol=1e-14)
    assert abs(fidelity(psi, psi) - 1) < 1e-14


def test_validate_density():
    validate_density(np.eye(4) / 4)
    with pytest.raises(ContractViolation):
        validate_density(np.eye(2))
    with pytest.raises(ContractViolation):
        validate_density(np.diag([1.5, -0.5]))


def test_spec_examples():
    np.testing.assert_allclose(hermitian_eig(SIGMA_Z)[0], [-1, 1])
    w, v = hermitian_eig(np.eye(2))
    np.testing.assert_allclose(w, [1, 1])
    np.testing.assert_allclose(v.conj().T @ v, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(unitary_eigenphases(np.eye(3))[0], 0, atol=1e-15)
    np.testing.assert_allclose(expm_skew(SIGMA_X, np.pi / 2), -1j * SIGMA_X, atol=1e-15)
    np.testing.assert_allclose(expm_skew(random_hermitian(3, 4), 0.0), np.eye(4), atol=1e-15)
    phases, _ = unitary_eigenphases(expm_skew(SIGMA_X, 0.3))
    np.testing.assert_allclose(sorted(phases), [0.3, 2 * np.pi - 0.3], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, dims, st.floats(-10, 10))
def test_linalg_invariants(seed, d, s):
    h = random_hermitian(seed, d)
    np.testing.assert_allclose(expm_skew(h, s) @ expm_skew(h, -s), np.eye(d), atol=1e-10)
    assert abs(hermitian_eig(h)[0].sum() - np.trace(h).real) < 1e-10
    u = expm_skew(h, s)
    phases, _ = unitary_eigenphases(u)
    diff = np.angle(np.exp(1j * (phases.sum() - np.angle(np.linalg.det(u)))))
    assert abs(diff) < 1e-9
