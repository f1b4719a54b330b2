import math

import numpy as np
import pytest

from kperiod.errors import ContractViolation, NotFoundError
from kperiod.fixtures import PAPER_SIM
from kperiod.floquet import qed
from kperiod.hamiltonians import DriveParams, TlsModel
from kperiod.ktupling import (
    ScanConfig,
    find_amplitude,
    find_amplitude_nv,
    ktupling_residual,
    nv_tls_abstraction,
    predicted_modulation_period,
    revival_fidelity,
    scan_manifold,
    wrap_residual,
)
from oracles import bisect, rwa_qed

TLS = TlsModel(1.0)


def test_wrap_residual_range():
    x = np.linspace(-3, 3, 1001)
    w = wrap_residual(x)
    assert np.all((w >= -0.5) & (w < 0.5))
    np.testing.assert_allclose(w - x, np.round(w - x), atol=1e-12)


def test_residual_examples(roots):
    assert abs(ktupling_residual(roots[2], 1.0, 1, 2, TLS)) < 1e-8
    assert ktupling_residual(0.0, 1.0, 1, 2, TLS) == -0.5
    lo = ktupling_residual(roots[2] - 0.01, 1.0, 1, 2, TLS)
    hi = ktupling_residual(roots[2] + 0.01, 1.0, 1, 2, TLS)
    assert lo * hi < 0
    arr = ktupling_residual(np.array([0.1, 0.2]), 1.0, 1, 3, TLS)
    assert arr.shape == (2,)


def test_find_period_doubling():
    p = find_amplitude(1, 2, 1.0, TLS)
    assert p.amplitude == pytest.approx(0.5042, abs=5e-4)
    assert abs(p.residual) < 1e-8
    assert p.bracket_width < 1e-6
    assert p.n_roots >= 1
    assert p.certificate_fidelity >= 1 - 1e-7


def test_root_agrees_with_independent_bisection():
    """Plain bisection on |qed - 1/2| from a hand-picked bracket."""
    ref = bisect(lambda a: qed(TLS, DriveParams(a, 1.0)) - 0.5, 0.45, 0.55, tol=1e-11)
    assert find_amplitude(1, 2, 1.0, TLS, certify=False).amplitude == pytest.approx(ref, abs=1e-8)


def test_higher_k_roots_near_rotating_wave_estimate(roots):
    for k in (3, 4, 5):
        # rotating-wave estimate: sqrt(0 + A^2) / nu_d = 1/k
        assert roots[k] == pytest.approx(1.0 / k, rel=0.05)
        assert rwa_qed(roots[k], 1.0, 1.0) == pytest.approx(1.0 / k, rel=0.05)
        assert revival_fidelity(roots[k], 1.0, k, TLS) >= 1 - 1e-7
    assert roots[2] > roots[3] > roots[4] > roots[5]


def test_label_swap_jump_is_not_a_root():
    # above resonance the two modes swap labels where both overlap |g> equally,
    # producing a sign change of the residual that is not a zero
    amps = np.linspace(0, 1.2, 1024)
    r = ktupling_residual(amps, 1.1, 1, 2, TLS)
    jumps = np.flatnonzero((r[:-1] * r[1:] < 0) & (np.abs(r[:-1]) + np.abs(r[1:]) < 0.5)
                           & (np.abs(r[:-1] - r[1:]) > 0.05))
    assert len(jumps) >= 1
    p = find_amplitude(1, 2, 1.1, TLS, ScanConfig(grid_points=1024), certify=False)
    assert abs(p.residual) < 1e-8


def test_not_found_lists_range():
    with pytest.raises(NotFoundError, match=r"no bracket.*\[0, 0\.1\]"):
        find_amplitude(1, 2, 1.0, TLS, ScanConfig(0.0, 0.1, 256))


@pytest.mark.parametrize("j,k", [(2, 4), (0, 3), (3, 3), (1, 1)])
def test_invalid_jk(j, k):
    with pytest.raises(ContractViolation):
        find_amplitude(j, k, 1.0, TLS)


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(1.0, 0.5)
    with pytest.raises(ValueError):
        ScanConfig(grid_points=1)


def test_scaled_model_roots_scale_with_delta0():
    big = TlsModel(7.5)
    p = find_amplitude(1, 2, 7.5, big, certify=False)
    assert p.amplitude / 7.5 == pytest.approx(0.5042236, abs=1e-6)


def test_manifold_single_point_and_continuity():
    curve, pts = scan_manifold(1, 2, [1.0], TLS)
    assert curve.points == [(1.0, pytest.approx(find_amplitude(1, 2, 1.0, TLS, certify=False).amplitude))]
    nus = np.linspace(0.9, 1.1, 21)
    curve, pts = scan_manifold(1, 2, nus[::-1], TLS, ScanConfig(grid_points=1024))
    assert curve.gaps == []
    got_nu = [p[0] for p in curve.points]
    assert got_nu == sorted(got_nu)
    amps = np.array([p[1] for p in curve.points])
    assert np.all(np.abs([p.residual for p in pts]) < 1e-8)
    # continuity: the root rises smoothly with nu_d, no jumps on a 0.01 Delta0 grid
    steps = np.diff(amps)
    assert np.all(steps > 0) and np.max(steps) < 0.02
    assert all(p.n_roots == 1 for p in pts)
    for p in pts[::5]:
        assert revival_fidelity(p.amplitude, p.nu_d, 2, TLS) >= 1 - 1e-7


def test_predicted_modulation_period(roots):
    assert predicted_modulation_period(roots[2], 1.0, 1, 2, TLS) > 1e7
    a = roots[2] + np.array([-0.02, -0.01, -0.005, 0.005, 0.01, 0.02])
    tau = predicted_modulation_period(a, 1.0, 1, 2, TLS)
    r = np.abs(ktupling_residual(a, 1.0, 1, 2, TLS))
    np.testing.assert_allclose(tau, 1 / r)
    product = tau * np.abs(a - roots[2])
    # hyperbola law: tau |A - A_P2| roughly constant on each side
    assert np.ptp(product[:3]) / product[:3].mean() < 0.05
    assert np.ptp(product[3:]) / product[3:].mean() < 0.05


def test_residual_scaling_definition():
    # tau = 1/|residual|: a drive whose residual is 0.01 has a 100-period envelope
    a = bisect(lambda x: ktupling_residual(x, 1.0, 1, 2, TLS) + 0.01, 0.3, 0.5, tol=1e-12)
    assert predicted_modulation_period(a, 1.0, 1, 2, TLS) == pytest.approx(100.0, rel=1e-6)


def test_nv_root_maps_through_calibration():
    ab = nv_tls_abstraction(PAPER_SIM)
    assert ab.tls.delta0 == pytest.approx(7.5, rel=1e-9)
    p = find_amplitude_nv(1, 2, PAPER_SIM, certify=False)
    assert p.unit == "mV"
    assert p.amplitude * ab.mhz_per_mv / 7.5 == pytest.approx(0.5042236, abs=1e-6)
    assert 33 < p.amplitude < 36
    assert math.isnan(p.certificate_fidelity)
