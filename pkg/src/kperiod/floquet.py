"""One-period propagators, Floquet decomposition and stroboscopic evolution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, IntegratorAccuracyError
from .hamiltonians import TLS_GROUND, DriveParams, TlsModel, tls_periodic
from .linalg import (
    TWO_PI,
    bloch_vector,
    expm_skew,
    ordered_product,
    unitarity_error,
    unitary_eigenphases,
)

_SQRT3 = np.sqrt(3.0)
# Gauss-Legendre nodes and weights of the two-exponential commutator-free scheme.
_CF4_NODES = (0.5 - _SQRT3 / 6.0, 0.5 + _SQRT3 / 6.0)
_CF4_A1 = (3.0 - 2.0 * _SQRT3) / 12.0
_CF4_A2 = (3.0 + 2.0 * _SQRT3) / 12.0

SCHEMES = ("cf4", "midpoint")
DEGENERACY_TOL = 1e-9
_FOLD_SNAP = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    steps_per_period: int = 1024
    scheme: str = "cf4"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.steps_per_period < 64:
            raise ValueError("steps_per_period must be at least 64")


def step_propagators(hamiltonian, t0, t1, n_steps, scheme="cf4"):
    """Short-time propagators for ``n_steps`` equal steps on ``[t0, t1]``.

    ``hamiltonian`` maps an array of times to ``(len(t), *batch, d, d)``.
    The result has shape ``(n_steps, *batch, d, d)``.
    """
    h = (t1 - t0) / n_steps
    starts = t0 + h * np.arange(n_steps)
    s = TWO_PI * h
    if scheme == "midpoint":
        return expm_skew(hamiltonian(starts + 0.5 * h), s)
    if scheme != "cf4":
        raise ValueError(f"unknown scheme {scheme!r}")
    h1 = hamiltonian(starts + _CF4_NODES[0] * h)
    h2 = hamiltonian(starts + _CF4_NODES[1] * h)
    first = expm_skew(_CF4_A2 * h1 + _CF4_A1 * h2, s)
    second = expm_skew(_CF4_A1 * h1 + _CF4_A2 * h2, s)
    return second @ first


def propagate(hamiltonian, t0, t1, n_steps, scheme="cf4"):
    """Time-ordered propagator ``U(t1, t0)``."""
    return ordered_product(step_propagators(hamiltonian, t0, t1, n_steps, scheme))


def monodromy(hamiltonian, nu_d=None, cfg: IntegratorConfig = IntegratorConfig(),
              check_convergence=False, tol=1e-8):
    """One-period propagator ``U(T_d, 0)`` of a ``T_d``-periodic Hamiltonian.

    With ``check_convergence`` the step count is doubled up to twice; if
    the last refinement still moves ``U`` by more than ``tol`` an
    :class:`IntegratorAccuracyError` is raised.
    """
    if nu_d is None:
        nu_d = hamiltonian.frequency
    period = 1.0 / nu_d
    n = cfg.steps_per_period
    u = propagate(hamiltonian, 0.0, period, n, cfg.scheme)
    if not check_convergence:
        return u
    for _ in range(2):
        n *= 2
        finer = propagate(hamiltonian, 0.0, period, n, cfg.scheme)
        change = float(np.max(np.abs(finer - u)))
        u = finer
        if change < tol:
            return u
    raise IntegratorAccuracyError(
        f"monodromy changed by {change:.3g} at {n} steps per period (tolerance {tol:g})"
    )


@dataclass(frozen=True)
class FloquetDecomposition:
    """Eigen-decomposition of a monodromy operator.

    ``quasi_energies[i]`` (MHz, folded into ``[0, nu_d)``) belongs to the
    mode in column ``i`` of ``modes``.  For two levels, column 0 is the mode
    with the larger overlap with the bare ground state.
    """

    monodromy: np.ndarray
    quasi_energies: np.ndarray
    modes: np.ndarray
    nu_d: float
    phase: float = 0.0
    degenerate: bool = False

    @property
    def dim(self):
        return self.modes.shape[0]

    @property
    def eigenvalues(self):
        return np.exp(-1j * TWO_PI * self.quasi_energies / self.nu_d)

    @property
    def qed(self):
        """Folded quasi-energy difference ``(eps_2 - eps_1)/nu_d`` in ``[0, 1)``."""
        if self.dim != 2:
            raise ContractViolation("quasi-energy difference is defined for two levels only")
        return fold_unit(
            (self.quasi_energies[1] - self.quasi_energies[0]) / self.nu_d
        )


def fold_unit(x):
    """Fold into ``[0, 1)``, snapping round-off just below 1 back to 0."""
    q = np.mod(x, 1.0)
    q = np.where(q > 1.0 - _FOLD_SNAP, 0.0, q)
    return float(q) if np.ndim(q) == 0 else q


def floquet_decompose(u, nu_d, phase=0.0, reference=None) -> FloquetDecomposition:
    phases, vecs = unitary_eigenphases(u)
    eps = np.mod(-phases * nu_d / TWO_PI, nu_d)
    eps = np.where(eps >= nu_d, 0.0, eps)
    d = len(eps)
    if d == 2:
        ref = TLS_GROUND if reference is None else np.asarray(reference)
        overlaps = np.abs(ref.conj() @ vecs) ** 2
        order = np.argsort(-overlaps, kind="stable")
    else:
        order = np.argsort(eps, kind="stable")
    eps = eps[order]
    vecs = vecs[:, order]
    gaps = np.abs(phases[:, None] - phases[None, :])
    gaps = np.minimum(gaps, TWO_PI - gaps)
    degenerate = bool(np.any(gaps[np.triu_indices(d, 1)] < DEGENERACY_TOL))
    return FloquetDecomposition(
        monodromy=np.asarray(u),
        quasi_energies=eps,
        modes=vecs,
        nu_d=float(nu_d),
        phase=float(phase),
        degenerate=degenerate,
    )


def tls_decomposition(model: TlsModel, drive: DriveParams,
                      cfg: IntegratorConfig = IntegratorConfig()) -> FloquetDecomposition:
    u = monodromy(tls_periodic(model, drive), drive.frequency, cfg)
    return floquet_decompose(u, drive.frequency, drive.phase)


def qed(model: TlsModel, drive: DriveParams, cfg: IntegratorConfig = IntegratorConfig()):
    """Quasi-energy difference of the driven two-level system, in units of ``nu_d``."""
    if not isinstance(model, TlsModel):
        raise ContractViolation("qed is only defined for the two-level model")
    return tls_decomposition(model, drive, cfg).qed


def qed_batch(unitaries, reference=TLS_GROUND):
    """Vectorised ``qed`` for a stack of two-level monodromies ``(..., 2, 2)``.

    Uses the same mode ordering as :func:`floquet_decompose`.
    """
    w, v = np.linalg.eig(unitaries)
    overlaps = np.abs(np.einsum("i,...ij->...j", np.conj(reference), v)) ** 2
    first = np.argmax(overlaps, axis=-1)
    phi = np.angle(w)
    take = np.take_along_axis
    phi1 = take(phi, first[..., None], axis=-1)[..., 0]
    phi2 = take(phi, (1 - first)[..., None], axis=-1)[..., 0]
    # eps = -phi nu/2pi, so (eps2 - eps1)/nu = (phi1 - phi2)/2pi
    return fold_unit((phi1 - phi2) / TWO_PI)


def tls_qed_grid(model: TlsModel, amplitudes, frequency, phase=0.0,
                 cfg: IntegratorConfig = IntegratorConfig(), chunk=128):
    """``qed`` over an amplitude grid, batched to bound memory."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    out = np.empty(len(amplitudes))
    for start in range(0, len(amplitudes), chunk):
        block = amplitudes[start:start + chunk]
        ham = tls_periodic(model, DriveParams(block, frequency, phase))
        out[start:start + chunk] = qed_batch(monodromy(ham, frequency, cfg))
    return out


def stroboscopic_evolve(psi0, n, dec: FloquetDecomposition):
    """``U^n psi0`` through the Floquet-mode expansion.

    ``n`` may be an integer or an array of integers (result gains a leading axis).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape[-1] != dec.dim:
        raise ContractViolation("state dimension does not match the decomposition")
    coeffs = dec.modes.conj().T @ psi0
    powers = np.power.outer(dec.eigenvalues, np.asarray(n))  # (d, *n)
    weighted = np.moveaxis(powers, 0, -1) * coeffs
    return weighted @ dec.modes.T


def intra_period_trajectory(psi0, n_periods, samples_per_period, hamiltonian,
                            cfg: IntegratorConfig = IntegratorConfig()):
    """Continuous-time states sampled uniformly within each period.

    Returns ``(times, states)`` with ``n_periods * samples_per_period + 1``
    samples, starting at ``t = 0``.
    """
    period = hamiltonian.period
    sub_steps = -(-cfg.steps_per_period // samples_per_period)
    dt = period / samples_per_period
    pieces = [
        propagate(hamiltonian, i * dt, (i + 1) * dt, sub_steps, cfg.scheme)
        for i in range(samples_per_period)
    ]
    psi = np.asarray(psi0, dtype=complex)
    states = [psi]
    for _ in range(n_periods):
        for piece in pieces:
            psi = piece @ psi
            states.append(psi)
    times = dt * np.arange(len(states))
    return times, np.array(states)


def floquet_axis(dec: FloquetDecomposition):
    """Bloch vector of Floquet mode 1 (mode 2 points the opposite way)."""
    if dec.dim != 2:
        raise ContractViolation("Floquet axis needs a two-level decomposition")
    if dec.degenerate:
        raise ContractViolation("Floquet axis undefined for degenerate quasi-energies")
    axis = bloch_vector(dec.modes[:, 0])
    return axis / np.linalg.norm(axis)


def check_unitary(u, tol=1e-9):
    err = unitarity_error(u)
    if err > tol:
        raise ContractViolation(f"propagator is not unitary (error {err:.3g})")
    return err
