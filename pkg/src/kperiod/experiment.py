"""Synthetic stroboscopic measurement campaigns.

For each drive amplitude the state is propagated one drive period at a
time; after every period the observable (PL for the NV model, <sigma_z>
for the two-level reference) is recorded.  Decay toward the fully mixed
value is a single exponential in the number of periods and noise is drawn
per amplitude from an independent random stream.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .analysis import StroboscopicSeries, dft_magnitude
from .floquet import IntegratorConfig, floquet_decompose, monodromy, stroboscopic_evolve
from .hamiltonians import (
    BASIS_LABELS,
    TLS_GROUND,
    DriveParams,
    NvModel,
    PlParams,
    TlsModel,
    basis_index,
    mixed_state_pl,
    nv_eigenstructure,
    nv_periodic,
    pl_signal,
    tls_periodic,
)
from .linalg import dagger
from .ktupling import NV_INTEGRATOR



def default_remainder():
    """Half to ``|0,-1/2>``, half spread evenly over the ``m_S = +-1`` levels."""
    dark = [lab for lab in BASIS_LABELS if lab[0] != 0]
    out = {(0, -0.5): 0.5}
    out.update({lab: 0.5 / len(dark) for lab in dark})
    return out


@dataclass(frozen=True)
class ProtocolConfig:
    """Measurement protocol.

    ``amplitudes`` are instrument mV for the NV model and MHz for the
    two-level reference.  ``nu_d=None`` tunes the drive to the model's level
    spacing.  ``remainder`` maps ``(m_S, m_I)`` labels to relative weights
    of the ``1 - p_target`` population not in ``|0, 1/2>``.  ``shot_noise``
    is the expected photon count of a bright readout (measurement shots for
    the two-level reference); ``None`` disables noise.
    """

    amplitudes: tuple = ()
    n_periods: int = 200
    nu_d: float | None = None
    p_target: float = 0.95
    remainder: dict | None = None
    t_relax: float = math.inf
    shot_noise: float | None = None
    seed: int = 0
    pl: PlParams = field(default_factory=PlParams)
    integrator: IntegratorConfig = NV_INTEGRATOR

    def __post_init__(self):
        if not 0.0 <= self.p_target <= 1.0:
            raise ValueError("p_target must lie in [0, 1]")
        if self.n_periods < 1:
            raise ValueError("n_periods must be positive")
        if not self.t_relax > 0:
            raise ValueError("t_relax must be positive")
        if self.shot_noise is not None and not self.shot_noise > 0:
            raise ValueError("shot_noise must be positive")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))

    def remainder_weights(self):
        rem = default_remainder() if self.remainder is None else dict(self.remainder)
        total = sum(rem.values())
        if (0, 0.5) in rem or total <= 0 or any(v < 0 for v in rem.values()):
            raise ValueError("remainder must be non-negative weights over levels other than |0, 1/2>")
        return {lab: (1.0 - self.p_target) * v / total for lab, v in rem.items()}


@dataclass(frozen=True)
class CampaignDataset:
    series: list
    metadata: dict = field(default_factory=dict)

    @property
    def amplitudes(self):
        return np.array([s.amplitude for s in self.series])


def initial_density(cfg: ProtocolConfig):
    rho = np.zeros((6, 6), dtype=complex)
    rho[basis_index(0, 0.5), basis_index(0, 0.5)] = cfg.p_target
    for (ms, mi), p in cfg.remainder_weights().items():
        rho[basis_index(ms, mi), basis_index(ms, mi)] += p
    return rho


def density_trajectory(u, rho0, n_periods):
    """``rho(n T_d) = U^n rho0 U^-n`` for ``n = 1..n_periods``."""
    out = np.empty((n_periods,) + rho0.shape, dtype=complex)
    rho = rho0
    ud = dagger(u)
    for n in range(n_periods):
        rho = u @ rho @ ud
        out[n] = rho
    return out


def apply_decay(clean, mixed_value, t_relax, times):
    if math.isinf(t_relax):
        return np.asarray(clean, dtype=float).copy()
    return mixed_value + (clean - mixed_value) * np.exp(-np.asarray(times) / t_relax)


def _stream(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def poisson_readout(mean_pl, bright_level, shot_noise, rng):
    """Photon-counting readout scaled back to PL units.

    A bright readout yields ``shot_noise`` photons on average.
    """
    scale = bright_level / shot_noise
    lam = np.asarray(mean_pl) / scale
    counts = rng.poisson(lam)
    return counts * scale, np.sqrt(np.maximum(lam, 1.0)) * scale


def _nv_series(index, amplitude, model, nu_d, cfg, rho0):
    u = monodromy(nv_periodic(model, amplitude, nu_d), nu_d, cfg.integrator)
    times = np.arange(1, cfg.n_periods + 1)
    rhos = density_trajectory(u, rho0, cfg.n_periods)
    clean = pl_signal(rhos, cfg.pl)
    values = apply_decay(clean, mixed_state_pl(cfg.pl), cfg.t_relax, times)
    sigma = None
    if cfg.shot_noise is not None:
        values, sigma = poisson_readout(values, cfg.pl.bright_level, cfg.shot_noise,
                                        _stream(cfg.seed, index))
    return StroboscopicSeries(amplitude, times, values, sigma)


def _parallel_map(fn, items, workers):
    if workers <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def simulate_campaign(model: NvModel, cfg: ProtocolConfig, workers=1, fixture_name=""):
    """Six-level PL campaign over ``cfg.amplitudes`` (mV)."""
    structure = nv_eigenstructure(model)
    nu_d = structure.delta0 if cfg.nu_d is None else cfg.nu_d
    rho0 = initial_density(cfg)
    items = [(i, a, model, nu_d, cfg, rho0) for i, a in enumerate(cfg.amplitudes)]
    series = _parallel_map(_nv_series, items, workers)
    meta = {
        "kind": "nv",
        "fixture": fixture_name,
        "nu_d_mhz": nu_d,
        "delta0_mhz": structure.delta0,
        "alpha_sq": structure.alpha_sq,
        "seed": cfg.seed,
        "code_version": __version__,
        **{f"model.{k}": v for k, v in asdict(model).items()},
        **_protocol_meta(cfg),
    }
    return CampaignDataset(series, meta)


def _protocol_meta(cfg: ProtocolConfig):
    return {
        "protocol.n_periods": cfg.n_periods,
        "protocol.p_target": cfg.p_target,
        "protocol.t_relax": cfg.t_relax,
        "protocol.shot_noise": cfg.shot_noise,
        "protocol.n_amplitudes": len(cfg.amplitudes),
        "protocol.steps_per_period": cfg.integrator.steps_per_period,
        "protocol.scheme": cfg.integrator.scheme,
    }


def reference_campaign_tls(model: TlsModel, cfg: ProtocolConfig, workers=1):
    """<sigma_z> campaign of the bare two-level system starting in ``|g>``.

    Decay relaxes toward 0 (the mixed state).  With ``shot_noise`` set,
    each point is the mean of that many projective measurements.
    """
    nu_d = model.delta0 if cfg.nu_d is None else cfg.nu_d
    times = np.arange(1, cfg.n_periods + 1)

    def one(index, amplitude):
        ham = tls_periodic(model, DriveParams(amplitude, nu_d))
        dec = floquet_decompose(monodromy(ham, nu_d, cfg.integrator), nu_d)
        psi = stroboscopic_evolve(TLS_GROUND, times, dec)
        clean = np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2
        values = apply_decay(clean, 0.0, cfg.t_relax, times)
        sigma = None
        if cfg.shot_noise is not None:
            shots = int(cfg.shot_noise)
            p_up = np.clip(0.5 * (1 + values), 0.0, 1.0)
            ups = _stream(cfg.seed, index).binomial(shots, p_up)
            values = 2.0 * ups / shots - 1.0
            sigma = 2.0 * np.sqrt(np.maximum(p_up * (1 - p_up), 1.0 / shots) / shots)
        return StroboscopicSeries(amplitude, times, values, sigma)

    series = _parallel_map(one, list(enumerate(cfg.amplitudes)), workers)
    meta = {"kind": "tls", "nu_d_mhz": nu_d, "delta0_mhz": model.delta0,
            "seed": cfg.seed, "code_version": __version__, **_protocol_meta(cfg)}
    return CampaignDataset(series, meta)


def dft_campaign(dataset: CampaignDataset):
    """Stacked spectra: returns ``(amplitudes, freqs, mags[amplitude, freq])``."""
    rows = [dft_magnitude(s) for s in dataset.series]
    freqs = rows[0][0]
    return dataset.amplitudes, freqs, np.array([r[1] for r in rows])
