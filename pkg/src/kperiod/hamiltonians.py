"""Model Hamiltonians: the driven two-level system and the NV- + 15N spin system.

Units: hbar = 1 and every energy is an ordinary frequency in MHz, so times
are in microseconds and a Hamiltonian ``H`` generates ``exp(-2 pi i H t)``.

The six-level basis is the tensor product ``{m_S = +1, 0, -1} x {m_I = +1/2, -1/2}``
in exactly that order (see :data:`BASIS_LABELS`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, linear_sum_assignment

from .errors import CalibrationError, ContractViolation
from .linalg import SIGMA_X, SIGMA_Z, hermitian_eig, validate_density

TLS_GROUND = np.array([0.0, 1.0], dtype=complex)
TLS_EXCITED = np.array([1.0, 0.0], dtype=complex)

BASIS_LABELS = [(ms, mi) for ms in (1, 0, -1) for mi in (0.5, -0.5)]

_S2 = np.sqrt(2.0)
SPIN1_X = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / _S2
SPIN1_Y = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / _S2
SPIN1_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
SPIN_HALF_X = SIGMA_X / 2
SPIN_HALF_Y = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SPIN_HALF_Z = SIGMA_Z / 2
_I3 = np.eye(3)
_I2 = np.eye(2)

# Literature constants for 15NV- (hyperfine from the EPR study the model follows).
GAMMA_E_MHZ_PER_G = -2.8025
GAMMA_15N_MHZ_PER_G = -4.316e-4
D_ZFS_MHZ = 2870.0
A_PAR_15N_MHZ = 3.03
A_PERP_15N_MHZ = 3.65


def basis_index(m_s, m_i):
    """Position of ``|m_S, m_I>`` in the six-level basis."""
    if m_s not in (1, 0, -1) or m_i not in (0.5, -0.5):
        raise ValueError(f"no basis state |{m_s}, {m_i}>")
    return (1 - m_s) * 2 + (0 if m_i > 0 else 1)


def basis_state(m_s, m_i):
    psi = np.zeros(6, dtype=complex)
    psi[basis_index(m_s, m_i)] = 1.0
    return psi


@dataclass(frozen=True)
class DriveParams:
    """Sinusoidal drive ``amplitude * sin(2 pi frequency t + phase)``.

    ``amplitude`` is in MHz for the two-level model; the NV builders take
    their instrument amplitude (mV) separately.  It may also be an array,
    in which case Hamiltonians gain a matching batch axis.
    """

    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ContractViolation("drive frequency must be positive")
        if np.any(np.asarray(self.amplitude) < 0):
            raise ContractViolation("drive amplitude must be non-negative")

    @property
    def period(self):
        return 1.0 / self.frequency


@dataclass(frozen=True)
class TlsModel:
    delta0: float = 1.0

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ContractViolation("level spacing must be positive")


@dataclass(frozen=True)
class NvModel:
    """Static and drive parameters of the NV- + 15N ground-state manifold.

    Gyromagnetic ratios carry their sign and enter as ``-gamma * S_z * B_z``.
    ``amplitude_calibration`` converts instrument mV into drive field (G), so
    the electron drive term is ``-drive_coupling * S_x * calibration * A_RF``.
    """

    d_zfs: float = D_ZFS_MHZ
    b_z: float = 1020.874
    gamma_e: float = GAMMA_E_MHZ_PER_G
    gamma_n: float = GAMMA_15N_MHZ_PER_G
    a_par: float = A_PAR_15N_MHZ
    a_perp: float = A_PERP_15N_MHZ
    drive_coupling: float = GAMMA_E_MHZ_PER_G
    amplitude_calibration: float = 1.0
    nuclear_drive: bool = True

    def __post_init__(self):
        values = [self.d_zfs, self.b_z, self.gamma_e, self.gamma_n, self.a_par,
                  self.a_perp, self.drive_coupling, self.amplitude_calibration]
        if not all(np.isfinite(values)):
            raise ContractViolation("NV model parameters must be finite")
        if not self.d_zfs > 0:
            raise ContractViolation("zero-field splitting must be positive")


@dataclass(frozen=True)
class PlParams:
    bright_level: float = 1.0
    dark_level: float = 0.7

    def __post_init__(self):
        if not self.bright_level > self.dark_level:
            raise ContractViolation("bright PL level must exceed the dark level")


@dataclass(frozen=True)
class PeriodicHamiltonian:
    """``H(t) = static + amplitude * sin(2 pi frequency t + phase) * coupling``.

    Calling it with an array of times returns shape
    ``t.shape + amplitude.shape + (d, d)``.
    """

    static: np.ndarray
    coupling: np.ndarray
    amplitude: float | np.ndarray
    frequency: float
    phase: float = 0.0

    @property
    def dim(self):
        return self.static.shape[-1]

    @property
    def period(self):
        return 1.0 / self.frequency

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        s = np.sin(2 * np.pi * self.frequency * t + self.phase)
        return np.multiply.outer(s, np.asarray(self.amplitude, dtype=float))

    def __call__(self, t):
        f = self.envelope(t)
        return self.static + f[..., None, None] * self.coupling


def tls_periodic(model: TlsModel, drive: DriveParams) -> PeriodicHamiltonian:
    return PeriodicHamiltonian(
        static=0.5 * model.delta0 * SIGMA_Z,
        coupling=SIGMA_X,
        amplitude=drive.amplitude,
        frequency=drive.frequency,
        phase=drive.phase,
    )


def tls_hamiltonian(model: TlsModel, drive: DriveParams, t):
    """``(delta0/2) sigma_z + A sin(2 pi nu_d t + phi0) sigma_x``."""
    return tls_periodic(model, drive)(t)


def nv_static(model: NvModel):
    """Time-independent part of the six-level Hamiltonian (MHz)."""
    kron = np.kron
    h = model.d_zfs * kron(SPIN1_Z @ SPIN1_Z - (2.0 / 3.0) * _I3, _I2)
    h = h - model.gamma_e * model.b_z * kron(SPIN1_Z, _I2)
    h = h - model.gamma_n * model.b_z * kron(_I3, SPIN_HALF_Z)
    h = h + model.a_par * kron(SPIN1_Z, SPIN_HALF_Z)
    h = h + model.a_perp * (kron(SPIN1_X, SPIN_HALF_X) + kron(SPIN1_Y, SPIN_HALF_Y))
    return h.astype(complex)


def nv_drive_operator(model: NvModel):
    """Operator multiplying the drive field (G) in the time-dependent part."""
    op = -model.drive_coupling * np.kron(SPIN1_X, _I2)
    if model.nuclear_drive:
        op = op - model.gamma_n * np.kron(_I3, SPIN_HALF_X)
    return op.astype(complex)


def nv_periodic(model: NvModel, a_rf, frequency, phase=0.0) -> PeriodicHamiltonian:
    """Driven six-level Hamiltonian for instrument amplitude ``a_rf`` (mV)."""
    field_amplitude = model.amplitude_calibration * np.asarray(a_rf, dtype=float)
    if np.any(field_amplitude < 0):
        raise ContractViolation("drive amplitude must be non-negative")
    return PeriodicHamiltonian(
        static=nv_static(model),
        coupling=nv_drive_operator(model),
        amplitude=field_amplitude if field_amplitude.ndim else float(field_amplitude),
        frequency=frequency,
        phase=phase,
    )


def nv_hamiltonian(model: NvModel, a_rf, drive: DriveParams, t):
    return nv_periodic(model, a_rf, drive.frequency, drive.phase)(t)


@dataclass(frozen=True)
class NvEigenStructure:
    energies: np.ndarray
    eigenstates: np.ndarray  # columns, ascending energy
    labels: list = field(default_factory=list)  # dominant |m_S, m_I> per column
    alpha_sq: float = 1.0
    delta0: float = 0.0
    index_plus: int = -1
    index_ref: int = -1
    at_crossing: bool = False

    @property
    def state_plus(self):
        return self.eigenstates[:, self.index_plus]

    @property
    def state_ref(self):
        return self.eigenstates[:, self.index_ref]


def dominant_labels(eigenstates):
    """Assign each eigenvector a distinct bare label by maximum total overlap."""
    weights = np.abs(eigenstates) ** 2  # [basis, eigenvector]
    rows, cols = linear_sum_assignment(-weights)
    labels = [None] * eigenstates.shape[1]
    for r, c in zip(rows, cols):
        labels[c] = BASIS_LABELS[r]
    return labels


def nv_eigenstructure(model: NvModel) -> NvEigenStructure:
    """Static eigenstructure around the GSLAC.

    ``alpha_sq`` is the ``|-1, 1/2>`` weight of the hybridised level
    ``|+>_alpha`` (the member of the ``{|-1,1/2>, |0,-1/2>}`` pair carrying
    more ``|-1,1/2>`` character); ``delta0`` is its energy above ``|0, 1/2>``.
    """
    energies, vecs = hermitian_eig(nv_static(model))
    w_a = np.abs(vecs[basis_index(-1, 0.5)]) ** 2
    w_b = np.abs(vecs[basis_index(0, -0.5)]) ** 2
    pair = np.argsort(w_a + w_b)[-2:]
    index_plus = int(pair[np.argmax(w_a[pair])])
    index_ref = int(np.argmax(np.abs(vecs[basis_index(0, 0.5)]) ** 2))
    scale = max(1.0, float(np.max(np.abs(energies))))
    at_crossing = abs(energies[pair[0]] - energies[pair[1]]) < 1e-12 * scale
    return NvEigenStructure(
        energies=energies,
        eigenstates=vecs,
        labels=dominant_labels(vecs),
        alpha_sq=float(min(1.0, w_a[index_plus])),
        delta0=float(energies[index_plus] - energies[index_ref]),
        index_plus=index_plus,
        index_ref=index_ref,
        at_crossing=bool(at_crossing),
    )


def nv_level_scan(model: NvModel, b_values):
    """Eigenenergies over a B_z grid with labels tracked by state overlap.

    Returns ``(labels, energies)`` where ``energies[i, j]`` belongs to the
    level that started as ``labels[j]`` at ``b_values[0]``.  Levels are
    followed by maximum overlap with the previous grid point (ties go to
    the energy order).
    """
    b_values = np.asarray(b_values, dtype=float)
    out = np.empty((len(b_values), 6))
    prev = None
    labels = None
    for i, b in enumerate(b_values):
        w, v = hermitian_eig(nv_static(replace(model, b_z=float(b))))
        if prev is None:
            labels = dominant_labels(v)
            order = np.arange(6)
        else:
            overlap = np.abs(prev.conj().T @ v) ** 2
            _, order = linear_sum_assignment(-overlap)
        out[i] = w[order]
        prev = v[:, order]
    return labels, out


def drive_matrix_element(model: NvModel, structure: NvEigenStructure):
    """``|<+_alpha| gamma_x S_x |0, 1/2>|`` in MHz per gauss."""
    sx = model.drive_coupling * np.kron(SPIN1_X, _I2)
    return float(abs(np.vdot(structure.state_plus, sx @ structure.state_ref)))


def renormalized_amplitude(model: NvModel, structure: NvEigenStructure, a_rf):
    """Drive strength of the selected transition relative to its spacing."""
    if not structure.delta0 > 0:
        raise ContractViolation("selected level spacing must be positive")
    field_amplitude = model.amplitude_calibration * np.asarray(a_rf, dtype=float)
    result = drive_matrix_element(model, structure) * field_amplitude / structure.delta0
    return float(result) if np.ndim(result) == 0 else result


def electronic_zero_projector():
    p = np.zeros((6, 6), dtype=complex)
    for mi in (0.5, -0.5):
        i = basis_index(0, mi)
        p[i, i] = 1.0
    return p


def pl_signal(state, pl: PlParams):
    """PL counts: affine in the total ``m_S = 0`` population (bare basis).

    ``state`` is a six-level state vector or density matrix; stacks of
    density matrices ``(..., 6, 6)`` are also accepted.
    """
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        p0 = np.sum(np.abs(state[[basis_index(0, 0.5), basis_index(0, -0.5)]]) ** 2)
    else:
        if state.ndim == 2:
            validate_density(state)
        p0 = (state[..., basis_index(0, 0.5), basis_index(0, 0.5)]
              + state[..., basis_index(0, -0.5), basis_index(0, -0.5)]).real
    return pl.dark_level + (pl.bright_level - pl.dark_level) * p0


def mixed_state_pl(pl: PlParams):
    return pl.dark_level + (pl.bright_level - pl.dark_level) * (2.0 / 6.0)


_CALIBRATION_BOUNDS = {
    "a_par": (0.0, 20.0),
    "a_perp": (1e-6, 20.0),
    "b_z": (900.0, 1100.0),
    "d_zfs": (2800.0, 2950.0),
}


def calibrate_hyperfine(template: NvModel, delta0, alpha_sq=None,
                        params=("a_par", "a_perp"), bounds=None, rtol=1e-3):
    """Tune model parameters so the eigenstructure hits ``delta0`` (and ``alpha_sq``).

    With ``alpha_sq=None`` only the spacing is matched and ``params`` must
    name a single parameter.  Raises :class:`CalibrationError` when the best
    point in the search box misses a target by more than ``rtol`` (relative).
    """
    targets = [float(delta0)] + ([] if alpha_sq is None else [float(alpha_sq)])
    # relative residuals, absolute for a zero target
    scale = np.array([abs(t) if t != 0 else 1.0 for t in targets])
    params = tuple(params)
    if len(params) != len(targets):
        raise ValueError("need exactly one free parameter per target")
    box = [(bounds or {}).get(p, _CALIBRATION_BOUNDS[p]) for p in params]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    def build(x):
        return replace(template, **{p: float(v) for p, v in zip(params, x)})

    def residual(x):
        s = nv_eigenstructure(build(x))
        got = [s.delta0] + ([] if alpha_sq is None else [s.alpha_sq])
        return (np.array(got) - targets) / scale

    x0 = np.clip([getattr(template, p) for p in params], lo, hi)
    x0 = np.where((x0 <= lo) | (x0 >= hi), 0.5 * (lo + hi), x0)
    sol = least_squares(residual, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    worst = float(np.max(np.abs(sol.fun)))
    if worst > rtol:
        raise CalibrationError(
            f"calibration missed targets {targets}: worst relative residual {worst:.3g}",
            best_residual=worst,
            best_params=dict(zip(params, sol.x.tolist())),
        )
    return build(sol.x)
