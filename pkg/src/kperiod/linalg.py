"""Small dense complex linear algebra (dimension 2 to 8).

All routines accept a single matrix or a stack of matrices with shape
``(..., d, d)`` where that makes sense; the Floquet engine relies on the
stacked form to build many step propagators at once.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ContractViolation

TWO_PI = 2.0 * np.pi

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-9


def _as_square(m, name="matrix"):
    m = np.asarray(m, dtype=complex)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ContractViolation(f"{name} must be square, got shape {m.shape}")
    if not 2 <= m.shape[-1] <= 8:
        raise ContractViolation(f"{name} dimension must be in [2, 8], got {m.shape[-1]}")
    if not np.all(np.isfinite(m)):
        raise ContractViolation(f"{name} has non-finite entries")
    return m


def dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))


def hermiticity_error(m):
    m = np.asarray(m)
    return float(np.max(np.abs(m - dagger(m)))) if m.size else 0.0


def unitarity_error(u):
    """Max-abs entry of ``u^dagger u - I``."""
    u = np.asarray(u)
    eye = np.eye(u.shape[-1])
    return float(np.max(np.abs(dagger(u) @ u - eye)))


def normalize(psi):
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ContractViolation("cannot normalize the zero vector")
    return psi / norm


def hermitian_eig(m):
    """Eigen-decomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray, real, ascending
    eigenvectors : ndarray
        Column ``i`` is the eigenvector of ``eigenvalues[i]``.
    """
    m = _as_square(m)
    if m.ndim != 2:
        raise ContractViolation("hermitian_eig expects a single matrix")
    if hermiticity_error(m) > HERMITIAN_TOL:
        raise ContractViolation("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (m + dagger(m)))
    return w, v


def unitary_eigenphases(u):
    """Eigenphases of a unitary, folded to ``[0, 2*pi)``.

    The complex Schur form of a normal matrix is diagonal, so the Schur
    vectors form an orthonormal eigenbasis even inside degenerate
    eigenspaces.
    """
    u = _as_square(u)
    if u.ndim != 2:
        raise ContractViolation("unitary_eigenphases expects a single matrix")
    if unitarity_error(u) > UNITARY_TOL:
        raise ContractViolation("matrix is not unitary")
    t, z = scipy.linalg.schur(u, output="complex")
    phases = fold_phase(np.angle(np.diag(t)))
    return phases, z


def fold_phase(phi):
    """Map angles into ``[0, 2*pi)``."""
    out = np.mod(phi, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def expm_skew(h, s):
    """Return ``exp(-i s h)`` for Hermitian ``h`` (single or stacked).

    ``s`` may be a scalar or an array broadcasting against the stack shape.
    Two-level generators use the closed form
    ``exp(-i s (a0 + a.sigma)) = exp(-i s a0) (cos(s|a|) - i sin(s|a|) a.sigma/|a|)``;
    larger ones go through ``eigh``.
    """
    h = np.asarray(h, dtype=complex)
    s = np.asarray(s, dtype=float)
    if h.shape[-1] == 2:
        return _expm_skew_2x2(h, s)
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * s[..., None] * w)
    return (v * phase[..., None, :]) @ dagger(v)


def _expm_skew_2x2(h, s):
    a0 = 0.5 * (h[..., 0, 0] + h[..., 1, 1]).real
    az = 0.5 * (h[..., 0, 0] - h[..., 1, 1]).real
    ax = h[..., 0, 1].real
    ay = -h[..., 0, 1].imag
    r = np.sqrt(ax * ax + ay * ay + az * az)
    theta = s * r
    c = np.cos(theta)
    # sin(s r)/r without dividing by zero
    sinc = s * np.sinc(theta / np.pi)
    g = np.exp(-1j * s * a0)
    out = np.empty(np.broadcast_shapes(h.shape[:-2], np.shape(s)) + (2, 2), dtype=complex)
    out[..., 0, 0] = g * (c - 1j * sinc * az)
    out[..., 1, 1] = g * (c + 1j * sinc * az)
    out[..., 0, 1] = g * (-1j * sinc * (ax - 1j * ay))
    out[..., 1, 0] = g * (-1j * sinc * (ax + 1j * ay))
    return out


def ordered_product(mats):
    """Time-ordered product ``M[N-1] @ ... @ M[1] @ M[0]`` along axis 0.

    Pairwise reduction keeps the work vectorised over any trailing batch
    axes.
    """
    m = np.asarray(mats)
    while m.shape[0] > 1:
        if m.shape[0] % 2:
            tail = m[-1:]
            paired = m[1:-1:2] @ m[0:-1:2]
            m = np.concatenate([paired, tail], axis=0)
        else:
            m = m[1::2] @ m[0::2]
    return m[0]


def bloch_vector(psi):
    """Bloch vector ``<psi|sigma|psi>`` of a two-level state (basis: excited, ground)."""
    psi = np.asarray(psi, dtype=complex)
    rho01 = np.conj(psi[..., 0]) * psi[..., 1]
    x = 2.0 * rho01.real
    y = 2.0 * rho01.imag
    z = np.abs(psi[..., 0]) ** 2 - np.abs(psi[..., 1]) ** 2
    return np.stack([x, y, z], axis=-1)


def fidelity(psi, phi):
    """Pure-state fidelity ``|<psi|phi>|^2`` for normalised vectors."""
    return float(np.abs(np.vdot(psi, phi)) ** 2)


def validate_density(rho, tol=1e-10):
    rho = np.asarray(rho, dtype=complex)
    if abs(np.trace(rho) - 1) > tol:
        raise ContractViolation("density matrix trace differs from 1")
    if hermiticity_error(rho) > 1e-12:
        raise ContractViolation("density matrix is not Hermitian")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ContractViolation("density matrix has negative eigenvalues")
    return rho
