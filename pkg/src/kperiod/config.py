"""Run configuration: sectioned ``key = value`` files plus flag overrides.

Every key is declared in :data:`SCHEMA` with a type and default; unknown
sections or keys are rejected.  Physical quantities carry their unit in the
key name.  An empty value means "derive it" (for example ``nu_d_mhz`` empty
tunes the drive to the model's level spacing).
"""
from __future__ import annotations

import configparser
import math
from dataclasses import replace

from .errors import KPeriodError
from .experiment import NV_INTEGRATOR, ProtocolConfig
from .fixtures import FIXTURES
from .floquet import SCHEMES, IntegratorConfig
from .hamiltonians import PlParams, TlsModel
from .ktupling import ScanConfig


class ConfigError(KPeriodError, ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


# section -> key -> (converter, default text); "" means derived / unset
SCHEMA = {
    "model": {
        "kind": (_choice("tls", "nv"), "tls"),
        "fixture": (_choice(*FIXTURES), "paper-sim"),
    },
    "tls": {
        "delta0_mhz": (float, "1.0"),
    },
    "nv": {
        "d_zfs_mhz": (float, ""),
        "b_z_gauss": (float, ""),
        "gamma_e_mhz_per_gauss": (float, ""),
        "gamma_n_mhz_per_gauss": (float, ""),
        "a_par_mhz": (float, ""),
        "a_perp_mhz": (float, ""),
        "drive_coupling_mhz_per_gauss": (float, ""),
        "amplitude_calibration_gauss_per_mv": (float, ""),
        "nuclear_drive": (_bool, ""),
    },
    "drive": {
        "nu_d_mhz": (float, ""),
        "phase_rad": (float, "0.0"),
    },
    "ktupling": {
        "j": (int, "1"),
        "k": (int, "2"),
    },
    "scan": {
        "a_min_delta0": (float, "0.0"),
        "a_max_delta0": (float, "1.2"),
        "grid_points": (int, "2048"),
        "nu_d_min_mhz": (float, ""),
        "nu_d_max_mhz": (float, ""),
        "nu_d_points": (int, "11"),
    },
    "integrator": {
        "steps_per_period": (int, ""),
        "scheme": (_choice(*SCHEMES), "cf4"),
    },
    "protocol": {
        "amplitude_min_mhz": (float, "0.474"),
        "amplitude_max_mhz": (float, "0.534"),
        "amplitude_min_mv": (float, "33.0"),
        "amplitude_max_mv": (float, "37.5"),
        "amplitude_points": (int, "12"),
        "n_periods": (int, "200"),
        "p_target": (float, "0.95"),
        "t_relax_periods": (float, "inf"),
        "shot_noise_photons": (float, ""),
        "seed": (int, "0"),
    },
    "pl": {
        "bright_level_counts": (float, "1.0"),
        "dark_level_counts": (float, "0.7"),
    },
    "analysis": {
        "max_tau_fraction": (float, "0.5"),
        "min_per_branch": (int, "2"),
    },
    "trajectory": {
        "amplitude_mhz": (float, ""),
        "n_periods": (int, "2"),
        "samples_per_period": (int, "64"),
    },
    "output": {
        "image": (_bool, "true"),
        "image_scale": (int, "4"),
    },
}

_NV_FIELDS = {
    "d_zfs_mhz": "d_zfs",
    "b_z_gauss": "b_z",
    "gamma_e_mhz_per_gauss": "gamma_e",
    "gamma_n_mhz_per_gauss": "gamma_n",
    "a_par_mhz": "a_par",
    "a_perp_mhz": "a_perp",
    "drive_coupling_mhz_per_gauss": "drive_coupling",
    "amplitude_calibration_gauss_per_mv": "amplitude_calibration",
    "nuclear_drive": "nuclear_drive",
}


class RunConfig:
    """Resolved configuration; ``cfg["scan", "grid_points"]`` gives a typed value (``None`` if unset)."""

    def __init__(self, raw):
        self.raw = raw  # section -> key -> text
        self.values = {}
        for section, keys in SCHEMA.items():
            for key, (conv, _) in keys.items():
                text = raw[section][key]
                try:
                    self.values[section, key] = None if text == "" else conv(text)
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None

    def __getitem__(self, item):
        return self.values[item]

    def to_text(self):
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            lines.extend(f"{key} = {self.raw[section][key]}" for key in keys)
            lines.append("")
        return "\n".join(lines)

    # -- typed views ---------------------------------------------------

    @property
    def model_kind(self):
        return self["model", "kind"]

    def tls_model(self):
        return TlsModel(self["tls", "delta0_mhz"])

    def nv_model(self):
        base = FIXTURES[self["model", "fixture"]]
        changes = {field: self["nv", key] for key, field in _NV_FIELDS.items()
                   if self["nv", key] is not None}
        return replace(base, **changes)

    def integrator(self):
        steps = self["integrator", "steps_per_period"]
        if steps is None:
            steps = NV_INTEGRATOR.steps_per_period if self.model_kind == "nv" else 1024
        return IntegratorConfig(steps, self["integrator", "scheme"])

    def scan(self):
        return ScanConfig(self["scan", "a_min_delta0"], self["scan", "a_max_delta0"],
                          self["scan", "grid_points"])

    def pl(self):
        return PlParams(self["pl", "bright_level_counts"], self["pl", "dark_level_counts"])

    def amplitudes(self):
        unit = "mv" if self.model_kind == "nv" else "mhz"
        lo = self["protocol", f"amplitude_min_{unit}"]
        hi = self["protocol", f"amplitude_max_{unit}"]
        n = self["protocol", "amplitude_points"]
        if n < 1:
            raise ConfigError("amplitude_points must be positive")
        return tuple(float(a) for a in ([lo] if n == 1 else
                                        [lo + (hi - lo) * i / (n - 1) for i in range(n)]))

    def protocol(self):
        t_relax = self["protocol", "t_relax_periods"]
        return ProtocolConfig(
            amplitudes=self.amplitudes(),
            n_periods=self["protocol", "n_periods"],
            nu_d=self["drive", "nu_d_mhz"],
            p_target=self["protocol", "p_target"],
            t_relax=math.inf if t_relax is None else t_relax,
            shot_noise=self["protocol", "shot_noise_photons"],
            seed=self["protocol", "seed"],
            pl=self.pl(),
            integrator=self.integrator(),
        )


def default_raw():
    return {section: {key: default for key, (_, default) in keys.items()}
            for section, keys in SCHEMA.items()}


def parse_config_text(text, source="<config>"):
    """Section/key text overrides from a config file (unknown entries rejected)."""
    parser = configparser.ConfigParser(interpolation=None, default_section="\0unused")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            out[section, key] = value.strip()
    return out


def resolve_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides[(section, key)]``."""
    raw = default_raw()
    layers = []
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                layers.append(parse_config_text(fh.read(), str(path)))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    layers.append(overrides or {})
    for layer in layers:
        for (section, key), value in layer.items():
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            raw[section][key] = "" if value is None else str(value)
    return RunConfig(raw)
