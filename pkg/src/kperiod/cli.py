"""``kperiod`` command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 not found / insufficient
data, 4 numerical-contract violation.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    analyze_ktupling,
    consistent_within,
    dominant_frequency,
    hyperbola_report,
    summary_table,
)
from .config import ConfigError, resolve_config
from .csvio import (
    read_metadata,
    read_series_csv,
    write_ktupling_csv,
    write_metadata,
    write_report_csv,
    write_series_csv,
    write_spectrum_csv,
    write_trajectory_csv,
)
from .errors import ContractViolation, CsvParseError, InsufficientDataError, NotFoundError
from .experiment import CampaignDataset, dft_campaign, reference_campaign_tls, simulate_campaign
from .floquet import IntegratorConfig, intra_period_trajectory, tls_qed_grid
from .hamiltonians import TLS_GROUND, DriveParams, tls_periodic
from .ktupling import find_amplitude, find_amplitude_nv, find_amplitude_nv_six_level, scan_manifold
from .linalg import bloch_vector
from .render import HeatmapGrid, write_ppm

EXIT_OK, EXIT_USAGE, EXIT_NOT_FOUND, EXIT_CONTRACT = 0, 2, 3, 4


class UsageError(Exception):
    pass


# flag dest -> (section, key)
_OVERRIDES = {
    "model": ("model", "kind"),
    "fixture": ("model", "fixture"),
    "delta0": ("tls", "delta0_mhz"),
    "nu_d": ("drive", "nu_d_mhz"),
    "phase": ("drive", "phase_rad"),
    "j": ("ktupling", "j"),
    "k": ("ktupling", "k"),
    "scan_min": ("scan", "a_min_delta0"),
    "scan_max": ("scan", "a_max_delta0"),
    "grid_points": ("scan", "grid_points"),
    "nu_d_min": ("scan", "nu_d_min_mhz"),
    "nu_d_max": ("scan", "nu_d_max_mhz"),
    "nu_d_points": ("scan", "nu_d_points"),
    "steps": ("integrator", "steps_per_period"),
    "scheme": ("integrator", "scheme"),
    "amp_min_mhz": ("protocol", "amplitude_min_mhz"),
    "amp_max_mhz": ("protocol", "amplitude_max_mhz"),
    "amp_min_mv": ("protocol", "amplitude_min_mv"),
    "amp_max_mv": ("protocol", "amplitude_max_mv"),
    "amp_points": ("protocol", "amplitude_points"),
    "n_periods": ("protocol", "n_periods"),
    "p_target": ("protocol", "p_target"),
    "t_relax": ("protocol", "t_relax_periods"),
    "shot_noise": ("protocol", "shot_noise_photons"),
    "seed": ("protocol", "seed"),
    "max_tau_fraction": ("analysis", "max_tau_fraction"),
    "amplitude": ("trajectory", "amplitude_mhz"),
    "traj_periods": ("trajectory", "n_periods"),
    "samples": ("trajectory", "samples_per_period"),
    "image_scale": ("output", "image_scale"),
}


def _add_common(p):
    p.add_argument("--config", help="sectioned key = value config file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, default=1, help="parallel workers")
    p.add_argument("--print-config", action="store_true",
                   help="print the fully resolved configuration and exit")
    p.add_argument("--no-image", action="store_true", help="skip PPM rendering")
    p.add_argument("--image-scale", type=int)


def _add_model(p):
    p.add_argument("--model", choices=("tls", "nv"))
    p.add_argument("--fixture", help="NV fixture name (paper-sim, paper-exp)")
    p.add_argument("--delta0", type=float, help="two-level spacing (MHz)")
    p.add_argument("--nu-d", type=float, help="drive frequency (MHz); default in tune")
    p.add_argument("--phase", type=float, help="drive phase (rad)")
    p.add_argument("--steps", type=int, help="integrator steps per period")
    p.add_argument("--scheme", choices=("cf4", "midpoint"))


def _add_jk(p, k_required=False):
    p.add_argument("--j", type=int, help="numerator j (default 1)")
    p.add_argument("--k", type=int, required=k_required, help="period multiple k")


def _add_scan(p):
    p.add_argument("--scan-min", type=float, help="scan start (units of Delta0)")
    p.add_argument("--scan-max", type=float, help="scan end (units of Delta0)")
    p.add_argument("--grid-points", type=int)


def _add_protocol(p):
    p.add_argument("--amp-min-mhz", type=float)
    p.add_argument("--amp-max-mhz", type=float)
    p.add_argument("--amp-min-mv", type=float)
    p.add_argument("--amp-max-mv", type=float)
    p.add_argument("--amp-points", type=int)
    p.add_argument("--n-periods", type=int)
    p.add_argument("--p-target", type=float)
    p.add_argument("--t-relax", type=float, help="decay time (periods)")
    p.add_argument("--shot-noise", type=float, help="photons per bright readout")


def build_parser():
    parser = argparse.ArgumentParser(prog="kperiod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kperiod {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("find", help="locate a k-tupling amplitude")
    _add_common(p), _add_model(p), _add_jk(p), _add_scan(p)

    p = sub.add_parser("scan-manifold", help="k-tupling amplitude versus drive frequency")
    _add_common(p), _add_model(p), _add_jk(p), _add_scan(p)
    p.add_argument("--nu-d-min", type=float)
    p.add_argument("--nu-d-max", type=float)
    p.add_argument("--nu-d-points", type=int)

    p = sub.add_parser("sweep", help="stroboscopic heatmap over an amplitude grid")
    _add_common(p), _add_model(p), _add_protocol(p)

    p = sub.add_parser("spectrum", help="DFT heatmap of a campaign")
    _add_common(p), _add_model(p), _add_protocol(p)
    p.add_argument("--input", help="series CSV to transform instead of simulating")

    p = sub.add_parser("trajectory", help="intra-period Bloch trajectory of the two-level system")
    _add_common(p), _add_model(p), _add_jk(p), _add_scan(p)
    p.add_argument("--amplitude", type=float, help="drive amplitude (MHz); default the k-tupling root")
    p.add_argument("--traj-periods", type=int)
    p.add_argument("--samples", type=int, help="samples per period")

    p = sub.add_parser("simulate", help="synthetic measurement campaign")
    _add_common(p), _add_model(p), _add_protocol(p)

    p = sub.add_parser("analyze", help="k-tupling analysis of a series CSV")
    _add_common(p)
    p.add_argument("--input", required=True, help="series CSV (amplitude,n,value,sigma)")
    p.add_argument("--k", type=int, nargs="+", required=True)
    p.add_argument("--unit", help="amplitude unit label (default from the metadata sidecar)")
    p.add_argument("--max-tau-fraction", type=float)
    return parser


def _resolve(args):
    overrides = {}
    for dest, target in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None and not isinstance(value, list):
            overrides[target] = value
    return resolve_config(args.config, overrides)


def _check_jk(cfg):
    j, k = cfg["ktupling", "j"], cfg["ktupling", "k"]
    if k < 2 or not 1 <= j < k or math.gcd(j, k) != 1:
        raise UsageError(f"need k >= 2, 1 <= j < k and gcd(j, k) = 1 (got j={j}, k={k})")
    return j, k


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _maybe_image(args, cfg, path, grid):
    if args.no_image or not cfg["output", "image"]:
        return
    write_ppm(path, grid, cfg["output", "image_scale"])
    print(f"wrote {path}")


def _tls_nu(cfg):
    nu = cfg["drive", "nu_d_mhz"]
    return cfg.tls_model().delta0 if nu is None else nu


def cmd_find(args, cfg):
    j, k = _check_jk(cfg)
    if cfg.model_kind == "nv":
        model = cfg.nv_model()
        p = find_amplitude_nv(j, k, model, cfg["drive", "nu_d_mhz"], cfg.scan(), IntegratorConfig())
        six = find_amplitude_nv_six_level(j, k, model, cfg["drive", "nu_d_mhz"], cfg=cfg.integrator())
        print(f"A_P{k} = {p.amplitude:.10g} mV on the two-level abstraction  "
              f"(j/k = {j}/{k}, nu_d = {p.nu_d:.10g} MHz)")
        print(f"A_P{k} = {six.amplitude:.10g} mV in the six-level model "
              f"(residual {six.residual:.3g})")
    else:
        model = cfg.tls_model()
        p = find_amplitude(j, k, _tls_nu(cfg), model, cfg.scan(), cfg.integrator())
        print(f"A_P{k} = {p.amplitude:.10g} MHz = {p.amplitude / model.delta0:.10g} Delta0  "
              f"(j/k = {j}/{k}, nu_d = {p.nu_d:.10g} MHz)")
    print(f"residual = {p.residual:.3g}; brackets found = {p.n_roots}; "
          f"revival fidelity = {p.certificate_fidelity:.12f}")
    rows = [p, six] if cfg.model_kind == "nv" else [p]
    path = write_ktupling_csv(_outdir(args) / "ktupling.csv", rows)
    print(f"wrote {path}")


def cmd_scan_manifold(args, cfg):
    j, k = _check_jk(cfg)
    if cfg.model_kind != "tls":
        raise UsageError("scan-manifold works on the two-level model")
    model = cfg.tls_model()
    lo, hi = cfg["scan", "nu_d_min_mhz"], cfg["scan", "nu_d_max_mhz"]
    lo = 0.9 * model.delta0 if lo is None else lo
    hi = 1.1 * model.delta0 if hi is None else hi
    grid = np.linspace(lo, hi, cfg["scan", "nu_d_points"])
    curve, points = scan_manifold(j, k, grid, model, cfg.scan(), cfg.integrator())
    for nu, a in curve.points:
        print(f"nu_d = {nu:.6f} MHz  A_P{k} = {a:.10f} MHz")
    if curve.gaps:
        print("no root at nu_d = " + ", ".join(f"{g:.6f}" for g in curve.gaps))
    path = write_ktupling_csv(_outdir(args) / "manifold.csv", points)
    print(f"wrote {path}")


def _campaign(cfg, threads):
    pcfg = cfg.protocol()
    if cfg.model_kind == "nv":
        fixture = cfg["model", "fixture"]
        return simulate_campaign(cfg.nv_model(), pcfg, threads, fixture), "mV"
    return reference_campaign_tls(cfg.tls_model(), pcfg, threads), "MHz"


def _series_grid(dataset):
    amps = dataset.amplitudes
    times = dataset.series[0].times
    values = np.array([s.values for s in dataset.series]).T  # rows = n
    return HeatmapGrid(amps, times, values)


def _write_dataset(out, stem, dataset, unit):
    csv_path = write_series_csv(out / f"{stem}.csv", dataset.series)
    meta = dict(dataset.metadata, amplitude_unit=unit)
    meta_path = write_metadata(out / f"{stem}.meta", meta)
    print(f"wrote {csv_path}\nwrote {meta_path}")


def cmd_sweep(args, cfg):
    dataset, unit = _campaign(cfg, args.threads)
    out = _outdir(args)
    _write_dataset(out, "sweep", dataset, unit)
    grid = _series_grid(dataset)
    if cfg.model_kind == "tls":
        grid = HeatmapGrid(grid.x, grid.y, grid.values, -1.0, 1.0)
    _maybe_image(args, cfg, out / "sweep.ppm", grid)


def cmd_simulate(args, cfg):
    dataset, unit = _campaign(cfg, args.threads)
    out = _outdir(args)
    _write_dataset(out, "dataset", dataset, unit)
    _maybe_image(args, cfg, out / "dataset.ppm", _series_grid(dataset))


def cmd_spectrum(args, cfg):
    if args.input:
        dataset = CampaignDataset(read_series_csv(args.input))
    else:
        dataset, _ = _campaign(cfg, args.threads)
    amps, freqs, mags = dft_campaign(dataset)
    ridge_ref = None
    if not args.input and cfg.model_kind == "tls":
        q = tls_qed_grid(cfg.tls_model(), amps, _tls_nu(cfg), cfg["drive", "phase_rad"], cfg.integrator())
        ridge_ref = np.minimum(q, 1.0 - q)
    for i, s in enumerate(dataset.series):
        line = f"A = {s.amplitude:.6g}: dominant frequency {dominant_frequency(s):.4f} / T_d"
        if ridge_ref is not None:
            line += f" (quasi-energy difference {ridge_ref[i]:.4f})"
        print(line)
    out = _outdir(args)
    path = write_spectrum_csv(out / "spectrum.csv", amps, freqs, mags)
    print(f"wrote {path}")
    _maybe_image(args, cfg, out / "spectrum.ppm", HeatmapGrid(amps, freqs, mags.T))


def cmd_trajectory(args, cfg):
    if cfg.model_kind != "tls":
        raise UsageError("trajectory works on the two-level model")
    model = cfg.tls_model()
    nu = _tls_nu(cfg)
    amp = cfg["trajectory", "amplitude_mhz"]
    if amp is None:
        j, k = _check_jk(cfg)
        amp = find_amplitude(j, k, nu, model, cfg.scan(), cfg.integrator(), certify=False).amplitude
    drive = DriveParams(amp, nu, cfg["drive", "phase_rad"])
    n_per = cfg["trajectory", "n_periods"]
    times, states = intra_period_trajectory(TLS_GROUND, n_per, cfg["trajectory", "samples_per_period"],
                                            tls_periodic(model, drive), cfg.integrator())
    bloch = np.array([bloch_vector(s) for s in states])
    closure = float(np.linalg.norm(bloch[-1] - bloch[0]))
    print(f"A = {amp:.10g} MHz, {n_per} periods, {len(times)} samples; "
          f"|b(end) - b(0)| = {closure:.3e}")
    path = write_trajectory_csv(_outdir(args) / "trajectory.csv", times, bloch)
    print(f"wrote {path}")


def cmd_analyze(args, cfg):
    series = read_series_csv(args.input)
    unit = args.unit
    if unit is None:
        meta_path = Path(args.input).with_suffix(".meta")
        meta = read_metadata(meta_path) if meta_path.exists() else {}
        unit = meta.get("amplitude_unit", "arb")
    analyses = []
    for k in args.k:
        if k < 1:
            raise UsageError("k must be positive")
        an = analyze_ktupling(series, k, cfg["analysis", "max_tau_fraction"],
                              cfg["analysis", "min_per_branch"])
        analyses.append(an)
        for sub in an.subsequences:
            print(hyperbola_report(sub.fit, k, unit, label=f" (subsequence {sub.index})"))
        agree = consistent_within([s.fit.a_p for s in an.subsequences],
                                  [s.fit.sigma_a_p for s in an.subsequences])
        print(f"k = {k}: subsequence estimates {'agree' if agree else 'DISAGREE'} within 3 sigma\n")
    table = summary_table(analyses, unit)
    print(table)
    out = _outdir(args)
    csv_path = write_report_csv(out / "report.csv", analyses)
    txt_path = out / "report.txt"
    txt_path.write_text(table + "\n", encoding="utf-8")
    print(f"wrote {csv_path}\nwrote {txt_path}")


COMMANDS = {
    "find": cmd_find,
    "scan-manifold": cmd_scan_manifold,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "trajectory": cmd_trajectory,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(args)
        if args.print_config:
            print(cfg.to_text(), end="")
            return EXIT_OK
        COMMANDS[args.command](args, cfg)
    except (NotFoundError, InsufficientDataError) as exc:
        print(f"kperiod {args.command}: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except ContractViolation as exc:
        print(f"kperiod {args.command}: numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (UsageError, ConfigError, CsvParseError, ValueError) as exc:
        # ValueError here comes from config dataclass validation (bad parameter values)
        print(f"kperiod {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
