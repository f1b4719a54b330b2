"""Locating period k-tupling drive amplitudes.

A drive amplitude ``A`` is a k-tupling point when the folded quasi-energy
difference equals ``j/k``.  Roots are bracketed on a grid and refined by
bisection on the wrapped residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import ContractViolation, NotFoundError
from .floquet import (
    IntegratorConfig,
    floquet_decompose,
    monodromy,
    stroboscopic_evolve,
    tls_qed_grid,
)
from .hamiltonians import (
    DriveParams,
    NvModel,
    TlsModel,
    drive_matrix_element,
    nv_eigenstructure,
    nv_periodic,
    tls_periodic,
)
from .linalg import normalize

MAX_BISECTIONS = 80
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class ScanConfig:
    """Amplitude search window in units of the level spacing."""

    a_min: float = 0.0
    a_max: float = 1.2
    grid_points: int = 2048

    def __post_init__(self):
        if not self.a_max > self.a_min:
            raise ValueError("scan window must have a_max > a_min")
        if self.grid_points < 2:
            raise ValueError("scan grid needs at least two points")


@dataclass(frozen=True)
class KTuplingPoint:
    j: int
    k: int
    amplitude: float
    nu_d: float
    residual: float
    n_roots: int = 1
    bracket_width: float = 0.0
    certificate_fidelity: float = math.nan
    unit: str = "MHz"


@dataclass(frozen=True)
class ManifoldCurve:
    j: int
    k: int
    points: list = field(default_factory=list)  # (nu_d, amplitude) sorted by nu_d
    gaps: list = field(default_factory=list)  # nu_d values without a root


def wrap_residual(x):
    """Wrap into ``[-1/2, 1/2)``."""
    return np.mod(np.asarray(x) + 0.5, 1.0) - 0.5


def _check_jk(j, k):
    if k < 2 or j < 1 or j >= k or math.gcd(j, k) != 1:
        raise ContractViolation(f"need 1 <= j < k with gcd(j, k) = 1, got j={j}, k={k}")


def ktupling_residual(amplitude, nu_d, j, k, model: TlsModel,
                      cfg: IntegratorConfig = IntegratorConfig()):
    """Signed distance of ``qed`` from ``j/k``, wrapped into ``[-1/2, 1/2)``.

    ``amplitude`` may be an array.
    """
    q = tls_qed_grid(model, np.atleast_1d(amplitude), nu_d, cfg=cfg)
    r = wrap_residual(q - j / k)
    return float(r[0]) if np.ndim(amplitude) == 0 else r


def _brackets(amps, res):
    """Grid intervals holding a genuine zero crossing.

    A sign change where the residual jumps across the wrap (magnitudes near
    1/2) is not a root and is skipped.
    """
    out = []
    for i in range(len(amps) - 1):
        r0, r1 = res[i], res[i + 1]
        if r0 == 0.0:
            out.append((amps[i], amps[i]))
        elif r0 * r1 < 0 and abs(r0) + abs(r1) < 0.5:
            out.append((amps[i], amps[i + 1]))
    if res[-1] == 0.0:
        out.append((amps[-1], amps[-1]))
    return out


def revival_fidelity(amplitude, nu_d, k, model: TlsModel, n_states=10, seed=0,
                     cfg: IntegratorConfig = IntegratorConfig()):
    """Smallest ``|<psi0|psi(k T_d)>|^2`` over random initial states."""
    dec = floquet_decompose(monodromy(tls_periodic(model, DriveParams(amplitude, nu_d)), nu_d, cfg), nu_d)
    rng = np.random.default_rng(seed)
    worst = 1.0
    for _ in range(n_states):
        psi0 = normalize(rng.normal(size=2) + 1j * rng.normal(size=2))
        psik = stroboscopic_evolve(psi0, k, dec)
        worst = min(worst, abs(np.vdot(psi0, psik)) ** 2)
    return float(worst)


def _refine(lo, hi, nu_d, j, k, model, cfg, scale):
    """Bisection on the wrapped residual; returns ``(amplitude, residual, width)``."""
    r_lo = ktupling_residual(lo, nu_d, j, k, model, cfg)
    mid, r_mid = lo, r_lo
    for _ in range(MAX_BISECTIONS):
        if hi - lo < 1e-13 * scale and abs(r_mid) < RESIDUAL_TOL:
            break
        mid = 0.5 * (lo + hi)
        r_mid = ktupling_residual(mid, nu_d, j, k, model, cfg)
        if r_mid == 0.0:
            lo = hi = mid
            break
        if (r_mid < 0) == (r_lo < 0):
            lo, r_lo = mid, r_mid
        else:
            hi = mid
    return mid, r_mid, hi - lo


def find_amplitude(j, k, nu_d, model: TlsModel, scan: ScanConfig = ScanConfig(),
                   cfg: IntegratorConfig = IntegratorConfig(), certify=True):
    """Smallest amplitude in the scan window where ``qed = j/k``.

    Every bracket is refined; brackets that collapse onto a jump of the
    residual (where the two Floquet modes swap their labels) instead of a
    zero are discarded.  The returned point records how many genuine roots
    the grid showed.  Raises :class:`NotFoundError` if none is left.
    """
    _check_jk(j, k)
    scale = model.delta0
    amps = np.linspace(scan.a_min, scan.a_max, scan.grid_points) * scale
    res = ktupling_residual(amps, nu_d, j, k, model, cfg)
    brackets = _brackets(amps, res)
    found = []
    for lo, hi in brackets:
        root = _refine(lo, hi, nu_d, j, k, model, cfg, scale)
        if abs(root[1]) < RESIDUAL_TOL:
            found.append(root)
    if not found:
        what = "no bracket" if not brackets else f"no bracket with a genuine zero ({len(brackets)} jump(s) only)"
        raise NotFoundError(
            f"{what} for j/k = {j}/{k} at nu_d = {nu_d:g} in amplitude range "
            f"[{amps[0]:g}, {amps[-1]:g}] ({scan.grid_points} points)"
        )
    mid, r_mid, width = found[0]
    fid = revival_fidelity(mid, nu_d, k, model, cfg=cfg) if certify else math.nan
    return KTuplingPoint(j, k, float(mid), float(nu_d), float(r_mid), len(found),
                         float(width), fid)


def scan_manifold(j, k, nu_d_values, model: TlsModel, scan: ScanConfig = ScanConfig(),
                  cfg: IntegratorConfig = IntegratorConfig(), certify=False):
    points, gaps = [], []
    for nu in sorted(float(v) for v in nu_d_values):
        try:
            p = find_amplitude(j, k, nu, model, scan, cfg, certify=certify)
        except NotFoundError:
            gaps.append(nu)
            continue
        points.append(p)
    return ManifoldCurve(j, k, [(p.nu_d, p.amplitude) for p in points], gaps), points


def predicted_modulation_period(amplitude, nu_d, j, k, model: TlsModel,
                                cfg: IntegratorConfig = IntegratorConfig()):
    """``1/|xi|`` in units of ``T_d``; ``inf`` exactly on the manifold."""
    r = ktupling_residual(amplitude, nu_d, j, k, model, cfg)
    r = np.abs(np.asarray(r))
    with np.errstate(divide="ignore"):
        tau = np.where(r == 0.0, np.inf, 1.0 / np.where(r == 0.0, 1.0, r))
    return float(tau) if np.ndim(tau) == 0 else tau


@dataclass(frozen=True)
class NvTlsAbstraction:
    """Two-level stand-in for the selected NV transition.

    ``mhz_per_mv`` maps instrument amplitude to the effective two-level
    drive amplitude (the renormalised amplitude times ``delta0``).
    """

    tls: TlsModel
    mhz_per_mv: float
    alpha_sq: float


def nv_tls_abstraction(model: NvModel) -> NvTlsAbstraction:
    s = nv_eigenstructure(model)
    coupling = drive_matrix_element(model, s) * model.amplitude_calibration
    return NvTlsAbstraction(TlsModel(s.delta0), coupling, s.alpha_sq)


def find_amplitude_nv(j, k, model: NvModel, nu_d=None, scan: ScanConfig = ScanConfig(),
                      cfg: IntegratorConfig = IntegratorConfig(), certify=True):
    """k-tupling amplitude of the NV model in instrument units (mV).

    The root is found on the two-level abstraction and mapped back through
    the drive calibration; six-level checks belong to the experiment module.
    """
    ab = nv_tls_abstraction(model)
    nu = ab.tls.delta0 if nu_d is None else nu_d
    p = find_amplitude(j, k, nu, ab.tls, scan, cfg, certify)
    return replace(p, amplitude=p.amplitude / ab.mhz_per_mv,
                   bracket_width=p.bracket_width / ab.mhz_per_mv, unit="mV")


NV_INTEGRATOR = IntegratorConfig(steps_per_period=8192)


def nv_ktupling_residual(a_rf, j, k, model: NvModel, nu_d=None,
                         cfg: IntegratorConfig = NV_INTEGRATOR):
    """Residual of the six-level model at instrument amplitude ``a_rf`` (mV).

    Of the six Floquet modes, the two carrying most weight on the driven
    pair (the reference level and its hybridised partner) play the role of
    the two-level modes; mode 1 is the one closer to the reference level.
    """
    s = nv_eigenstructure(model)
    nu = s.delta0 if nu_d is None else nu_d
    dec = floquet_decompose(monodromy(nv_periodic(model, a_rf, nu), nu, cfg), nu)
    on_ref = np.abs(s.state_ref.conj() @ dec.modes) ** 2
    on_pair = on_ref + np.abs(s.state_plus.conj() @ dec.modes) ** 2
    pair = np.argsort(-on_pair, kind="stable")[:2]
    first, second = sorted(pair, key=lambda i: -on_ref[i])
    q = (dec.quasi_energies[second] - dec.quasi_energies[first]) / nu
    return float(wrap_residual(q - j / k))


def find_amplitude_nv_six_level(j, k, model: NvModel, nu_d=None, window=(0.8, 1.25),
                                grid_points=19, cfg: IntegratorConfig = NV_INTEGRATOR):
    """k-tupling amplitude (mV) of the full six-level model.

    The two-level abstraction supplies the starting estimate; the root is
    bracketed on ``window`` times that estimate and polished with Brent's
    method.  Counter-rotating and hyperfine-detuned levels shift the root by
    a few percent relative to the abstraction.
    """
    _check_jk(j, k)
    guess = find_amplitude_nv(j, k, model, nu_d, certify=False).amplitude
    amps = np.linspace(window[0] * guess, window[1] * guess, grid_points)
    res = np.array([nv_ktupling_residual(a, j, k, model, nu_d, cfg) for a in amps])

    def f(a):
        return nv_ktupling_residual(a, j, k, model, nu_d, cfg)

    found = []
    for lo, hi in _brackets(amps, res):
        root = lo if lo == hi else brentq(f, lo, hi, xtol=1e-12 * guess, rtol=1e-14)
        r = f(root)
        if abs(r) < RESIDUAL_TOL:
            found.append((root, r))
    if not found:
        raise NotFoundError(f"no six-level bracket for j/k = {j}/{k} in "
                            f"[{amps[0]:g}, {amps[-1]:g}] mV")
    # the root nearest the abstraction is the continuation of the two-level one
    root, r = min(found, key=lambda x: abs(x[0] - guess))
    nu = nv_eigenstructure(model).delta0 if nu_d is None else nu_d
    return KTuplingPoint(j, k, float(root), float(nu), float(r), len(found), 0.0, math.nan, "mV")
