import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kperiod.errors import ContractViolation, IntegratorAccuracyError
from kperiod.fixtures import PAPER_SIM
from kperiod.floquet import (
    IntegratorConfig,
    floquet_axis,
    floquet_decompose,
    fold_unit,
    intra_period_trajectory,
    monodromy,
    propagate,
    qed,
    qed_batch,
    stroboscopic_evolve,
    tls_decomposition,
    tls_qed_grid,
)
from kperiod.hamiltonians import TLS_GROUND, DriveParams, TlsModel, nv_periodic, tls_periodic
from kperiod.linalg import SIGMA_Z, bloch_vector, expm_skew, fidelity, unitarity_error
from oracles import direct_propagator, rwa_qed, tls_h

TLS = TlsModel(1.0)


def random_state(rng, d=2):
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return psi / np.linalg.norm(psi)


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(32)
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="rk4")


def test_free_evolution_is_minus_identity():
    u = monodromy(tls_periodic(TLS, DriveParams(0.0, 1.0)))
    np.testing.assert_allclose(u, -np.eye(2), atol=1e-10)


@pytest.mark.parametrize("amp,nu", [(0.5042, 1.0), (0.3, 0.8), (1.1, 1.7), (0.05, 1.3)])
def test_monodromy_matches_adaptive_rk_oracle(amp, nu):
    u = monodromy(tls_periodic(TLS, DriveParams(amp, nu)), nu)
    ref = direct_propagator(tls_h(1.0, amp, nu), 2, 1 / nu)
    np.testing.assert_allclose(u, ref, atol=1e-9)
    assert unitarity_error(u) < 1e-12


def test_monodromy_nv_matches_adaptive_rk_oracle():
    ham = nv_periodic(PAPER_SIM, 35.0, 7.5)
    u = monodromy(ham, 7.5, IntegratorConfig(8192))
    ref = direct_propagator(lambda t: ham(t), 6, 1 / 7.5, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(u, ref, atol=1e-7)
    assert unitarity_error(u) < 1e-9


def test_cf4_converges_at_fourth_order():
    ham = tls_periodic(TLS, DriveParams(0.7, 1.0))
    exact = monodromy(ham, cfg=IntegratorConfig(8192))
    e1 = np.abs(monodromy(ham, cfg=IntegratorConfig(64)) - exact).max()
    e2 = np.abs(monodromy(ham, cfg=IntegratorConfig(128)) - exact).max()
    assert 12 < e1 / e2 < 20  # 2^4 = 16
    m1 = np.abs(monodromy(ham, cfg=IntegratorConfig(64, "midpoint")) - exact).max()
    m2 = np.abs(monodromy(ham, cfg=IntegratorConfig(128, "midpoint")) - exact).max()
    assert 3 < m1 / m2 < 5  # 2^2 = 4


def test_midpoint_cross_check_agrees():
    ham = tls_periodic(TLS, DriveParams(0.5042, 1.0))
    a = monodromy(ham, cfg=IntegratorConfig(1024))
    b = monodromy(ham, cfg=IntegratorConfig(16384, "midpoint"))
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_step_doubling_convergence_and_error():
    ham = tls_periodic(TLS, DriveParams(0.5, 1.0))
    monodromy(ham, check_convergence=True)
    strong = tls_periodic(TlsModel(1.0), DriveParams(400.0, 1.0))
    with pytest.raises(IntegratorAccuracyError):
        monodromy(strong, cfg=IntegratorConfig(64), check_convergence=True)


def test_two_period_reintegration_equals_square():
    rng = np.random.default_rng(7)
    for _ in range(5):
        amp, nu = rng.uniform(0, 1.2), rng.uniform(0.5, 2.0)
        ham = tls_periodic(TLS, DriveParams(amp, nu, rng.uniform(0, 2 * np.pi)))
        u = monodromy(ham, nu)
        u2 = propagate(ham, 0.0, 2 / nu, 2048)
        np.testing.assert_allclose(u2, u @ u, atol=1e-8)


def test_decompose_examples():
    dec = floquet_decompose(-np.eye(2), 1.0)
    np.testing.assert_allclose(dec.quasi_energies, [0.5, 0.5])
    assert dec.degenerate
    theta = 0.4
    u = expm_skew(SIGMA_Z, theta)  # exp(-i theta sigma_z)
    dec = floquet_decompose(u, 2.0)
    np.testing.assert_allclose(sorted(dec.quasi_energies),
                               sorted(np.array([theta, 2 * np.pi - theta]) * 2.0 / (2 * np.pi)), atol=1e-12)
    assert not dec.degenerate
    # mode 1 is the bare ground state (eigenvalue e^{-i theta (-1)} = e^{i theta})
    assert abs(dec.modes[1, 0]) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1.2), st.floats(0.5, 2.0), st.floats(0, 2 * np.pi))
def test_decomposition_invariants(amp, nu, phase):
    dec = tls_decomposition(TLS, DriveParams(amp, nu, phase))
    assert unitarity_error(dec.monodromy) < 1e-9
    assert np.all((dec.quasi_energies >= 0) & (dec.quasi_energies < nu))
    np.testing.assert_allclose(dec.modes.conj().T @ dec.modes, np.eye(2), atol=1e-9)
    np.testing.assert_allclose(dec.monodromy @ dec.modes, dec.modes * dec.eigenvalues, atol=1e-9)
    assert abs(dec.modes[1, 0]) ** 2 >= 0.5 - 1e-12
    # folding consistency: shifting a quasi-energy by a multiple of nu_d leaves qed unchanged
    for m in (-2, 1, 3):
        shifted = dec.quasi_energies + np.array([m * nu, 0.0])
        assert fold_unit((shifted[1] - shifted[0]) / nu) == pytest.approx(dec.qed, abs=1e-9)


def test_qed_examples(roots):
    assert qed(TLS, DriveParams(0.0, 1.0)) == 0.0
    q = qed(TLS, DriveParams(0.01, 1.0))
    assert q == pytest.approx(rwa_qed(0.01, 1.0, 1.0), rel=0.05)
    assert qed(TLS, DriveParams(roots[2], 1.0)) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ContractViolation):
        qed(PAPER_SIM, DriveParams(1.0, 7.5))
    with pytest.raises(ContractViolation):
        floquet_decompose(expm_skew(np.diag([1.0, 2.0, 3.0]), 1.0), 1.0).qed


def test_qed_batch_matches_scalar_path():
    amps = np.linspace(0, 1.2, 17)
    grid = tls_qed_grid(TLS, amps, 1.0, chunk=5)
    single = [qed(TLS, DriveParams(a, 1.0)) for a in amps]
    np.testing.assert_allclose(grid, single, atol=1e-12)
    assert qed_batch(np.stack([-np.eye(2)] * 2)).shape == (2,)


def test_rwa_regime_small_amplitudes():
    for a in (0.002, 0.005, 0.02):
        assert qed(TLS, DriveParams(a, 1.0)) == pytest.approx(rwa_qed(a, 1.0, 1.0), rel=0.02)


def test_stroboscopic_evolve_matches_powers():
    rng = np.random.default_rng(1)
    dec = tls_decomposition(TLS, DriveParams(0.37, 1.1))
    psi0 = random_state(rng)
    np.testing.assert_allclose(stroboscopic_evolve(psi0, 0, dec), psi0, atol=1e-14)
    for n in (1, 2, 7, 50):
        ref = np.linalg.matrix_power(dec.monodromy, n) @ psi0
        np.testing.assert_allclose(stroboscopic_evolve(psi0, n, dec), ref, atol=1e-8)
    batch = stroboscopic_evolve(psi0, np.arange(5), dec)
    assert batch.shape == (5, 2)
    with pytest.raises(ContractViolation):
        stroboscopic_evolve(np.ones(3), 1, dec)


def test_norm_preserved_over_long_runs():
    dec = tls_decomposition(TLS, DriveParams(0.41, 1.0))
    psi = stroboscopic_evolve(random_state(np.random.default_rng(2)), np.arange(0, 10001, 97), dec)
    assert np.max(np.abs(np.linalg.norm(psi, axis=1) - 1)) < 1e-8


def test_seven_period_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(4):
        amp, nu = rng.uniform(0.0, 1.2), rng.uniform(0.5, 2.0)
        u = monodromy(tls_periodic(TLS, DriveParams(amp, nu)), nu)
        ref = direct_propagator(tls_h(1.0, amp, nu), 2, 7 / nu)
        np.testing.assert_allclose(np.linalg.matrix_power(u, 7), ref, atol=1e-7)


def test_period_doubling_at_root(roots):
    dec = tls_decomposition(TLS, DriveParams(roots[2], 1.0))
    rng = np.random.default_rng(5)
    for _ in range(5):
        psi0 = random_state(rng)
        assert fidelity(psi0, stroboscopic_evolve(psi0, 2, dec)) >= 1 - 1e-8
    psi1 = stroboscopic_evolve(TLS_GROUND, 1, dec)
    assert bloch_vector(psi1)[2] == pytest.approx(0.7099, abs=1e-3)


def test_k_tupling_universality(roots):
    rng = np.random.default_rng(9)
    for k, amp in roots.items():
        dec = tls_decomposition(TLS, DriveParams(amp, 1.0))
        for _ in range(5):
            psi0 = random_state(rng)
            assert fidelity(psi0, stroboscopic_evolve(psi0, k, dec)) >= 1 - 1e-7
            for n in range(1, k):
                assert fidelity(psi0, stroboscopic_evolve(psi0, n, dec)) < 1 - 1e-4


def test_intra_period_trajectory():
    ham = tls_periodic(TLS, DriveParams(0.0, 1.0))
    times, states = intra_period_trajectory(TLS_GROUND, 2, 16, ham)
    assert len(times) == 33 and times[-1] == pytest.approx(2.0)
    np.testing.assert_allclose(bloch_vector(states)[:, 2], -1.0, atol=1e-12)

    rng = np.random.default_rng(4)
    psi0 = random_state(rng)
    ham = tls_periodic(TLS, DriveParams(0.45, 1.2))
    dec = floquet_decompose(monodromy(ham), 1.2)
    _, states = intra_period_trajectory(psi0, 3, 1, ham)
    for n in range(4):
        np.testing.assert_allclose(states[n], stroboscopic_evolve(psi0, n, dec), atol=1e-8)
    _, states = intra_period_trajectory(psi0, 3, 10, ham)
    for n in range(4):
        np.testing.assert_allclose(states[10 * n], stroboscopic_evolve(psi0, n, dec), atol=1e-8)


def test_trajectory_closes_at_period_doubling(roots):
    ham = tls_periodic(TLS, DriveParams(roots[2], 1.0))
    _, states = intra_period_trajectory(TLS_GROUND, 2, 64, ham)
    b = bloch_vector(states)
    assert np.linalg.norm(b[-1] - b[0]) < 1e-6
    assert np.linalg.norm(b[64] - b[0]) > 1.0  # half way it is at the flip state


def test_floquet_axis(roots):
    axis = floquet_axis(tls_decomposition(TLS, DriveParams(0.0, 1.3)))
    assert abs(abs(axis[2]) - 1) < 1e-10
    with pytest.raises(ContractViolation):
        floquet_axis(floquet_decompose(-np.eye(2), 1.0))

    rng = np.random.default_rng(8)
    dec = tls_decomposition(TLS, DriveParams(0.33, 0.9))
    axis = floquet_axis(dec)
    assert np.linalg.norm(axis) == pytest.approx(1.0, abs=1e-10)
    b_mode2 = bloch_vector(dec.modes[:, 1])
    np.testing.assert_allclose(b_mode2, -axis, atol=1e-10)
    psi0 = random_state(rng)
    b0 = bloch_vector(psi0)
    traj = bloch_vector(stroboscopic_evolve(psi0, np.arange(51), dec))
    assert np.max(np.abs((traj - b0) @ axis)) < 1e-7

    a0 = floquet_axis(tls_decomposition(TLS, DriveParams(roots[2], 1.0)))
    angles = []
    for d in (1e-3, 2e-3, 4e-3):
        a1 = floquet_axis(tls_decomposition(TLS, DriveParams(roots[2] + d, 1.0)))
        angles.append(math.acos(min(1.0, float(a0 @ a1))))
    assert angles[0] < angles[1] < angles[2]
    assert angles[2] / angles[0] == pytest.approx(4.0, rel=0.1)
