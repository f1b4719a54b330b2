"""CSV and sidecar serialisation.

All files are UTF-8 with LF line endings and a mandatory header row.
Floats are written with 17 significant digits so a write/read round trip
reproduces them exactly.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from .analysis import StroboscopicSeries
from .errors import CsvParseError
from .ktupling import KTuplingPoint

SERIES_HEADER = ["amplitude", "n", "value", "sigma"]
KTUPLING_HEADER = ["j", "k", "nu_d_MHz", "A_root", "residual", "certificate_fidelity"]
SPECTRUM_HEADER = ["amplitude", "frequency", "magnitude"]
TRAJECTORY_HEADER = ["t", "x", "y", "z"]
REPORT_HEADER = ["k", "subsequence", "A_P", "sigma_A_P", "C_minus", "sigma_C_minus",
                 "C_plus", "sigma_C_plus", "rms_residual"]


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_rows(path, header, converters):
    """Yield ``(line_number, converted_row)``; malformed input raises :class:`CsvParseError`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise CsvParseError(path, 1, "empty file (header row required)") from None
        if [h.strip() for h in first] != header:
            raise CsvParseError(path, 1, f"expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise CsvParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            out = []
            for name, conv, cell in zip(header, converters, row):
                try:
                    out.append(conv(cell.strip()))
                except ValueError:
                    raise CsvParseError(path, line, f"bad value {cell!r} for {name}") from None
            yield line, out


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def _opt_float(text):
    return None if text == "" else float(text)


def write_series_csv(path, series_list):
    rows = []
    for s in series_list:
        sig = s.sigma if s.sigma is not None else [None] * len(s)
        rows.extend((s.amplitude, int(n), v, e) for n, v, e in zip(s.times, s.values, sig))
    return write_rows(path, SERIES_HEADER, rows)


def read_series_csv(path):
    """Series grouped by amplitude, sorted by amplitude."""
    groups = {}
    for line, (amp, n, value, sigma) in read_rows(path, SERIES_HEADER, [float, _int, float, _opt_float]):
        groups.setdefault(amp, []).append((line, n, value, sigma))
    out = []
    for amp in sorted(groups):
        rows = sorted(groups[amp], key=lambda r: r[1])
        for (l0, n0, *_), (l1, n1, *_) in zip(rows, rows[1:]):
            if n0 == n1:
                raise CsvParseError(path, l1, f"duplicate n = {n1} for amplitude {amp!r}")
        sig = [r[3] for r in rows]
        if any(s is None for s in sig) and not all(s is None for s in sig):
            raise CsvParseError(path, rows[0][0], f"sigma partly missing for amplitude {amp!r}")
        out.append(StroboscopicSeries(
            amp,
            np.array([r[1] for r in rows]),
            np.array([r[2] for r in rows]),
            None if sig[0] is None else np.array(sig),
        ))
    return out


def write_ktupling_csv(path, points):
    return write_rows(path, KTUPLING_HEADER, [
        (p.j, p.k, p.nu_d, p.amplitude, p.residual, p.certificate_fidelity) for p in points
    ])


def read_ktupling_csv(path):
    conv = [_int, _int, float, float, float, float]
    return [KTuplingPoint(j, k, a, nu, r, certificate_fidelity=f)
            for _, (j, k, nu, a, r, f) in read_rows(path, KTUPLING_HEADER, conv)]


def write_spectrum_csv(path, amplitudes, freqs, mags):
    rows = [(a, f, m) for a, row in zip(amplitudes, mags) for f, m in zip(freqs, row)]
    return write_rows(path, SPECTRUM_HEADER, rows)


def read_spectrum_csv(path):
    rows = [r for _, r in read_rows(path, SPECTRUM_HEADER, [float, float, float])]
    amps = sorted({r[0] for r in rows})
    freqs = sorted({r[1] for r in rows})
    mags = np.full((len(amps), len(freqs)), np.nan)
    ia = {a: i for i, a in enumerate(amps)}
    jf = {f: j for j, f in enumerate(freqs)}
    for a, f, m in rows:
        mags[ia[a], jf[f]] = m
    return np.array(amps), np.array(freqs), mags


def write_trajectory_csv(path, times, bloch):
    return write_rows(path, TRAJECTORY_HEADER, [(t, *b) for t, b in zip(times, bloch)])


def read_trajectory_csv(path):
    rows = [r for _, r in read_rows(path, TRAJECTORY_HEADER, [float] * 4)]
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1:]


def write_report_csv(path, analyses):
    rows = []
    for an in analyses:
        for sub in an.subsequences:
            f = sub.fit
            rows.append((an.k, sub.index, f.a_p, f.sigma_a_p, f.c_minus, f.sigma_c_minus,
                         f.c_plus, f.sigma_c_plus, f.rms_residual))
        rows.append((an.k, 0, an.a_pk, an.sigma_a_pk, an.c_k, an.sigma_c_k, an.c_k, an.sigma_c_k, None))
    return write_rows(path, REPORT_HEADER, rows)


def read_report_csv(path):
    conv = [_int, _int] + [_opt_float] * 7
    return [r for _, r in read_rows(path, REPORT_HEADER, conv)]


def write_metadata(path, meta):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in meta.items():
            fh.write(f"{key} = {fmt(value) if isinstance(value, float) else value}\n")
    return path


def read_metadata(path):
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CsvParseError(path, line_no, "expected 'key = value'")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta
