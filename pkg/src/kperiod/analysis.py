"""Analysis of stroboscopic series: spectra, subsequences, modulation fits.

The pipeline for a k-tupling campaign is

1. split every series into ``k`` subsequences ``n = l, l + k, l + 2k, ...``;
2. fit each subsequence with one damped cosine to get its modulation
   period ``tau`` (units of the drive period);
3. fit ``1/tau = |A - A_P| / C`` (one slope per side of the apex) over the
   amplitude grid, separately per subsequence;
4. combine the ``k`` estimates by inverse-variance weighting.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import ContractViolation, InsufficientDataError


@dataclass(frozen=True)
class StroboscopicSeries:
    amplitude: float
    times: np.ndarray
    values: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.sigma is not None:
            object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
            if self.sigma.shape != values.shape:
                raise ContractViolation("sigma length does not match values")
        if times.shape != values.shape or times.ndim != 1:
            raise ContractViolation("times and values must be 1-D of equal length")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ContractViolation("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def _uniform_spacing(series):
    d = np.diff(series.times)
    if len(d) == 0 or np.any(d != d[0]):
        raise ContractViolation("series is not uniformly sampled")
    return d[0]


def dft_magnitude(series: StroboscopicSeries):
    """One-sided DFT magnitude of the mean-removed series.

    Frequencies are in cycles per drive period.  The normalisation makes
    ``sum(mag**2) == N/2 * var(values)`` hold exactly.

    Returns
    -------
    freqs, mags : ndarray
    """
    if len(series) < 8:
        raise ContractViolation("need at least 8 samples for a spectrum")
    step = _uniform_spacing(series)
    n = len(series)
    x = series.values - series.values.mean()
    spec = np.abs(np.fft.rfft(x)) / np.sqrt(n)
    spec[0] /= np.sqrt(2.0)
    if n % 2 == 0:
        spec[-1] /= np.sqrt(2.0)
    freqs = np.fft.rfftfreq(n, d=step)
    return freqs, spec


def dominant_frequency(series: StroboscopicSeries):
    """Frequency of the largest non-DC bin."""
    freqs, mags = dft_magnitude(series)
    return float(freqs[1 + np.argmax(mags[1:])])


def spectral_peaks(series: StroboscopicSeries, threshold=0.05):
    """Local maxima of the Hann-windowed spectrum above ``threshold * max``.

    The window keeps sidelobes of a single off-bin tone (about 3% of the
    peak) below the default threshold, so each counted peak is a separate
    frequency component.
    """
    n = len(series)
    step = _uniform_spacing(series)
    x = series.values - series.values.mean()
    mags = np.abs(np.fft.rfft(x * np.hanning(n)))
    freqs = np.fft.rfftfreq(n, d=step)
    mags[0] = 0.0
    top = mags.max()
    if top == 0:
        return np.array([])
    padded = np.concatenate([[0.0], mags, [0.0]])
    is_peak = (padded[1:-1] > padded[:-2]) & (padded[1:-1] >= padded[2:])
    keep = is_peak & (mags >= threshold * top)
    return freqs[keep]


def decompose_subsequences(series: StroboscopicSeries, k):
    """Split into ``k`` series; entry ``l - 1`` holds times ``n = l (mod k)``."""
    if k < 1:
        raise ValueError("k must be positive")
    out = []
    for l in range(1, k + 1):
        mask = np.mod(series.times - l, k) == 0
        out.append(StroboscopicSeries(
            series.amplitude,
            series.times[mask],
            series.values[mask],
            None if series.sigma is None else series.sigma[mask],
        ))
    return out


@dataclass(frozen=True)
class DampedCosineFit:
    """``offset + amplitude * exp(-n/decay_time) * cos(2 pi n / tau + phase)``."""

    offset: float
    amplitude: float
    tau: float
    decay_time: float
    phase: float
    rms_residual: float
    converged: bool
    sigma_tau: float = math.nan
    params: tuple = ()

    @property
    def frequency(self):
        return 0.0 if math.isinf(self.tau) else 1.0 / self.tau


def _damped_cosine(p, n):
    c, a, f, g, phi = p
    env = np.exp(-g * n)
    arg = 2 * np.pi * f * n + phi
    return c + a * env * np.cos(arg)


def _damped_cosine_jac(p, n):
    c, a, f, g, phi = p
    env = np.exp(-g * n)
    arg = 2 * np.pi * f * n + phi
    cos, sin = np.cos(arg), np.sin(arg)
    return np.column_stack([
        np.ones_like(n),
        env * cos,
        -a * env * sin * 2 * np.pi * n,
        -a * n * env * cos,
        -a * env * sin,
    ])


def _seed_from_spectrum(n, y, pad=16):
    """Frequency, amplitude and phase of the strongest component.

    A zero-padded transform refines the peak beyond the bin spacing.
    """
    x = y - y.mean()
    step = n[1] - n[0]
    m = len(x) * pad
    spec = np.fft.rfft(x, m)
    freqs = np.fft.rfftfreq(m, d=step)
    i = 1 + int(np.argmax(np.abs(spec[1:])))
    f = freqs[i]
    # phase referenced to the actual sample times
    z = np.sum(x * np.exp(-2j * np.pi * f * n))
    amp = 2 * abs(z) / len(x)
    return f, amp, float(np.angle(z))


def fit_damped_cosine(sub: StroboscopicSeries, init=None, noise_floor=None,
                      max_nfev=2000):
    """Least-squares fit of one damped cosine (Levenberg-Marquardt).

    ``init`` may give ``(offset, amplitude, frequency, decay_rate, phase)``;
    otherwise seeds come from the spectral peak.  A series whose variance
    does not exceed its noise floor is reported unconverged with infinite
    period.
    """
    if len(sub) < 10:
        raise ContractViolation("need at least 10 points for a modulation fit")
    n = sub.times.astype(float)
    y = sub.values
    w = None if sub.sigma is None else 1.0 / np.where(sub.sigma > 0, sub.sigma, np.inf)
    var = float(np.var(y))
    if noise_floor is None:
        noise_floor = float(np.mean(sub.sigma ** 2)) if sub.sigma is not None else 0.0
    if var <= max(noise_floor, 1e-24 * max(1.0, float(np.mean(y)) ** 2)):
        return DampedCosineFit(float(np.mean(y)), 0.0, math.inf, math.inf, 0.0,
                               float(np.sqrt(var)), False)

    def resid(p):
        r = _damped_cosine(p, n) - y
        return r if w is None else r * w

    def jac(p):
        j = _damped_cosine_jac(p, n)
        return j if w is None else j * w[:, None]

    if init is not None:
        seeds = [np.asarray(init, dtype=float)]
    else:
        f0, a0, ph0 = _seed_from_spectrum(n, y)
        seeds = [np.array([y.mean(), a0, f0 * s, 0.0, ph0]) for s in (1.0, 0.9, 1.1)]
    best = None
    for p0 in seeds:
        sol = least_squares(resid, p0, jac=jac, method="lm", xtol=1e-12,
                            ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
        if best is None or sol.cost < best.cost:
            best = sol
    c, a, f, g, phi = best.x
    if a < 0:
        a, phi = -a, phi + np.pi
    if f < 0:
        f, phi = -f, -phi
    phi = float(np.mod(phi + np.pi, 2 * np.pi) - np.pi)
    rms = float(np.sqrt(np.mean((_damped_cosine(best.x, n) - y) ** 2)))
    # a growing envelope is outside the model; tiny negative rates are round-off
    growing = -g * (n[-1] - n[0]) > 0.1
    converged = bool(best.status > 0 and f > 0 and not growing)
    sigma_f = _parameter_sigmas(best.jac, best.fun, len(n))[2]
    tau = 1.0 / f if f > 0 else math.inf
    return DampedCosineFit(
        offset=float(c),
        amplitude=float(a),
        tau=float(tau),
        decay_time=float(1.0 / g) if g > 0 else math.inf,
        phase=phi,
        rms_residual=rms,
        converged=converged,
        sigma_tau=float(sigma_f / f ** 2) if f > 0 else math.inf,
        params=(float(c), float(a), float(f), float(g), phi),
    )


def _parameter_sigmas(jac, fun, n_points):
    """Standard errors from ``(J^T J)^-1`` scaled by the reduced chi-square."""
    jac = np.asarray(jac)
    dof = max(1, n_points - jac.shape[1])
    scale = float(np.sum(np.asarray(fun) ** 2)) / dof
    try:
        cov = np.linalg.inv(jac.T @ jac) * scale
    except np.linalg.LinAlgError:
        return np.full(jac.shape[1], np.inf)
    return np.sqrt(np.abs(np.diag(cov)))


@dataclass(frozen=True)
class HyperbolaFit:
    """``tau = C_minus/(A_P - A)`` below the apex, ``C_plus/(A - A_P)`` above.

    A missing branch has ``None`` coefficient and uncertainty.
    """

    a_p: float
    sigma_a_p: float
    c_minus: float | None
    sigma_c_minus: float | None
    c_plus: float | None
    sigma_c_plus: float | None
    rms_residual: float
    n_minus: int = 0
    n_plus: int = 0

    def coefficient(self):
        """Inverse-variance mean of the available branch coefficients."""
        pairs = [(c, s) for c, s in ((self.c_minus, self.sigma_c_minus),
                                     (self.c_plus, self.sigma_c_plus)) if c is not None]
        return weighted_mean([c for c, _ in pairs], [s for _, s in pairs])


def weighted_mean(values, sigmas):
    """Inverse-variance weighted mean and its standard error.

    Zero or missing uncertainties fall back to the plain mean.
    """
    values = np.asarray(values, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if len(values) == 0:
        raise InsufficientDataError("nothing to average")
    if np.all(np.isfinite(sigmas)) and np.all(sigmas > 0):
        w = 1.0 / sigmas ** 2
        return float(np.sum(w * values) / np.sum(w)), float(1.0 / np.sqrt(np.sum(w)))
    if len(values) == 1:
        return float(values[0]), math.nan
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


def _v_model(p, a, left):
    ap, s_minus, s_plus = p
    return np.where(left, s_minus * (ap - a), s_plus * (a - ap))


def _v_jac(p, a, left):
    ap, s_minus, s_plus = p
    j = np.zeros((len(a), 3))
    j[:, 0] = np.where(left, s_minus, -s_plus)
    j[:, 1] = np.where(left, ap - a, 0.0)
    j[:, 2] = np.where(left, 0.0, a - ap)
    return j


def _line(a, y, w):
    """Weighted straight-line fit ``y = c0 + c1 a``."""
    design = np.column_stack([np.ones_like(a), a]) * w[:, None]
    coef, *_ = np.linalg.lstsq(design, y * w, rcond=None)
    return coef


def _fit_split(a, y, w, split):
    """Two-branch fit with points ``[:split]`` below the apex."""
    left = np.arange(len(a)) < split
    cl = _line(a[left], y[left], w[left]) if left.sum() >= 2 else None
    cr = _line(a[~left], y[~left], w[~left]) if (~left).sum() >= 2 else None
    s_minus = -cl[1] if cl is not None else None
    s_plus = cr[1] if cr is not None else None
    if s_minus is None or s_minus <= 0:
        s_minus = s_plus if s_plus and s_plus > 0 else 1.0
    if s_plus is None or s_plus <= 0:
        s_plus = s_minus
    lo, hi = a[split - 1], a[split]
    ap0 = 0.5 * (lo + hi)
    if cl is not None and cr is not None and cl[1] != cr[1]:
        ap0 = (cr[0] - cl[0]) / (cl[1] - cr[1])
    span = hi - lo
    lo_b, hi_b = lo - 1e-12 * span, hi + 1e-12 * span
    ap0 = min(max(ap0, lo), hi)
    if ap0 <= lo_b or ap0 >= hi_b:
        ap0 = 0.5 * (lo + hi)

    def resid(p):
        return (_v_model(p, a, left) - y) * w

    def jac(p):
        return _v_jac(p, a, left) * w[:, None]

    sol = least_squares(resid, [ap0, s_minus, s_plus], jac=jac,
                        bounds=([lo_b, 0.0, 0.0], [hi_b, np.inf, np.inf]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    return sol, left


def _fit_single(a, y, w, side):
    """One-branch fit; ``side = -1`` means every point lies below the apex."""
    c = _line(a, y, w)
    slope = side * c[1]
    if slope <= 0:
        return None
    ap0 = -c[0] / c[1]
    left = np.full(len(a), side < 0)

    def resid(p):
        ap, s = p
        full = (ap, s, 0.0) if side < 0 else (ap, 0.0, s)
        return (_v_model(full, a, left) - y) * w

    def jac(p):
        ap, s = p
        full = (ap, s, 0.0) if side < 0 else (ap, 0.0, s)
        j = _v_jac(full, a, left)
        return (j[:, [0, 1]] if side < 0 else j[:, [0, 2]]) * w[:, None]

    if side < 0:
        bounds = ([a.max(), 0.0], [np.inf, np.inf])
        ap0 = max(ap0, a.max())
    else:
        bounds = ([-np.inf, 0.0], [a.min(), np.inf])
        ap0 = min(ap0, a.min())
    sol = least_squares(resid, [ap0, slope], jac=jac, bounds=bounds,
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    return sol


def fit_hyperbola(points):
    """Fit ``tau = C/|A - A_P|`` with separate ``C`` on each side of ``A_P``.

    Parameters
    ----------
    points : sequence of ``(A, tau, sigma_tau)``; ``sigma_tau`` may be ``None``.

    The fit runs in the linearised space ``1/tau = |A - A_P|/C``.  Every
    split of the sorted amplitudes into two branches is tried (plus the
    one-branch alternatives); the Akaike criterion picks the winner so a
    one-sided data set is not forced into a V.
    """
    pts = sorted((float(p[0]), float(p[1]), None if len(p) < 3 else p[2]) for p in points)
    a = np.array([p[0] for p in pts])
    tau = np.array([p[1] for p in pts])
    if len(a) < 2 or np.ptp(a) == 0:
        raise ContractViolation("hyperbola fit needs at least two distinct amplitudes")
    y = 1.0 / tau
    sig = [p[2] for p in pts]
    if all(s is not None and np.isfinite(s) and s > 0 for s in sig):
        w = tau ** 2 / np.array(sig, dtype=float)
    else:
        w = np.ones_like(a)
    n = len(a)
    floor = 1e-28 * float(np.sum((y * w) ** 2))

    def aic(cost, k):
        return n * math.log((2 * cost + floor) / n + 1e-300) + 2 * k

    candidates = []
    # a branch holding a single point is fitted exactly by any slope, so each
    # side of a V needs at least two amplitudes to carry information
    for split in range(2, n - 1):
        if a[split] == a[split - 1]:
            continue
        sol, left = _fit_split(a, y, w, split)
        if sol.x[1] > 0 and sol.x[2] > 0 and left.sum() >= 2 and (~left).sum() >= 2:
            candidates.append((aic(sol.cost, 3), "two", sol, left))
    for side in (-1, 1):
        sol = _fit_single(a, y, w, side)
        if sol is not None and sol.x[1] > 0:
            candidates.append((aic(sol.cost, 2), side, sol, np.full(n, side < 0)))
    if not candidates:
        raise ContractViolation("no admissible hyperbola for these points")
    _, kind, sol, left = min(candidates, key=lambda c: c[0])
    sig_p = _parameter_sigmas(sol.jac, sol.fun, n)
    rms = float(np.sqrt(np.mean((sol.fun / w) ** 2)))
    if kind == "two":
        ap, sm, sp = sol.x
        return HyperbolaFit(float(ap), float(sig_p[0]), float(1 / sm), float(sig_p[1] / sm ** 2),
                            float(1 / sp), float(sig_p[2] / sp ** 2), rms, int(left.sum()), int((~left).sum()))
    ap, s = sol.x
    c, sc = float(1 / s), float(sig_p[1] / s ** 2)
    if kind < 0:
        return HyperbolaFit(float(ap), float(sig_p[0]), c, sc, None, None, rms, n, 0)
    return HyperbolaFit(float(ap), float(sig_p[0]), None, None, c, sc, rms, 0, n)


@dataclass(frozen=True)
class SubsequenceResult:
    index: int  # l in 1..k
    points: list  # (A, tau, sigma_tau) used in the hyperbola fit
    fit: HyperbolaFit
    excluded: list = field(default_factory=list)  # (A, reason)


@dataclass(frozen=True)
class KTuplingAnalysis:
    k: int
    subsequences: list
    a_pk: float
    sigma_a_pk: float
    c_k: float
    sigma_c_k: float


def analyze_ktupling(dataset, k, max_tau_fraction=0.5, min_per_branch=2,
                     rel_sigma_floor=1e-4):
    """Full subsequence / damped-cosine / hyperbola pipeline for one ``k``.

    ``dataset`` is a list of :class:`StroboscopicSeries` over an amplitude
    grid.  Fitted periods longer than ``max_tau_fraction`` of the
    observation window are dropped as unresolved.  Each period's
    uncertainty is floored at ``rel_sigma_floor * tau`` so noise-free fits
    do not get arbitrary weights.
    """
    if not dataset:
        raise InsufficientDataError("empty dataset")
    window = max(int(s.times[-1]) for s in dataset)
    tau_max = max_tau_fraction * window
    per_sub = [[] for _ in range(k)]
    excluded = [[] for _ in range(k)]
    for series in sorted(dataset, key=lambda s: s.amplitude):
        for l, sub in enumerate(decompose_subsequences(series, k)):
            fit = fit_damped_cosine(sub)
            if not fit.converged:
                excluded[l].append((series.amplitude, "unconverged"))
            elif fit.tau > tau_max:
                excluded[l].append((series.amplitude, "unresolved"))
            else:
                sig = math.hypot(fit.sigma_tau, rel_sigma_floor * fit.tau)
                per_sub[l].append((series.amplitude, fit.tau, sig))
    results = []
    for l in range(k):
        pts = per_sub[l]
        if len(pts) < 2 * min_per_branch - 1:
            raise InsufficientDataError(
                f"subsequence {l + 1} of k={k}: only {len(pts)} usable amplitudes")
        fit = fit_hyperbola(pts)
        if fit.n_minus < min_per_branch or fit.n_plus < min_per_branch:
            raise InsufficientDataError(
                f"subsequence {l + 1} of k={k}: branches have {fit.n_minus} and "
                f"{fit.n_plus} usable amplitudes (need {min_per_branch} each)")
        results.append(SubsequenceResult(l + 1, pts, fit, excluded[l]))
    a_pk, s_a = weighted_mean([r.fit.a_p for r in results], [r.fit.sigma_a_p for r in results])
    cs = [r.fit.coefficient() for r in results]
    c_k, s_c = weighted_mean([c for c, _ in cs], [s for _, s in cs])
    return KTuplingAnalysis(k, results, a_pk, s_a, c_k, s_c)


def consistent_within(values, sigmas, nsigma=3.0):
    """True when every pair agrees within ``nsigma`` combined standard errors."""
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            if abs(values[i] - values[j]) > nsigma * math.hypot(sigmas[i], sigmas[j]):
                return False
    return True


def format_measurement(value, sigma, decimals=None):
    """``"35.844 ± 0.018"``; by default at least three decimals and two significant digits of sigma."""
    if decimals is None:
        decimals = 3
        if sigma > 0 and math.isfinite(sigma):
            decimals = max(3, 1 - math.floor(math.log10(sigma)))
    return f"{value:.{decimals}f} ± {sigma:.{decimals}f}"


_MEASUREMENT = re.compile(r"([-+]?\d+(?:\.\d+)?)\s*(?:±|\+/-|\\pm)\s*(\d+(?:\.\d+)?)")


def parse_measurement(text):
    """Read ``"35.844 ± 0.018"`` (also ``+/-``) back into floats."""
    m = _MEASUREMENT.search(text)
    if m is None:
        raise ValueError(f"no 'value ± sigma' in {text!r}")
    return float(m.group(1)), float(m.group(2))


def hyperbola_report(fit: HyperbolaFit, k, unit="mV", label=""):
    """One-paragraph summary in the layout of a publication caption."""
    tag = f"A_P{k}{label}"
    lines = [f"{tag} = {format_measurement(fit.a_p, fit.sigma_a_p)} {unit}"]
    if fit.c_plus is not None:
        lines.append(f"hyperbola A > A_P{k}: ({format_measurement(fit.c_plus, fit.sigma_c_plus)})/|A-A_P{k}|")
    if fit.c_minus is not None:
        lines.append(f"hyperbola A < A_P{k}: ({format_measurement(fit.c_minus, fit.sigma_c_minus)})/|A-A_P{k}|")
    return "\n".join(lines)


def summary_table(analyses, unit="mV"):
    """Text table with columns ``k | A_Pk | C_k/T_d``."""
    head = f"{'k':>3} | {'A_Pk (' + unit + ')':>22} | {'C_k/T_d (' + unit + ')':>22}"
    rows = [head, "-" * len(head)]
    for an in analyses:
        rows.append(f"{an.k:>3} | {format_measurement(an.a_pk, an.sigma_a_pk):>22} | "
                    f"{format_measurement(an.c_k, an.sigma_c_k):>22}")
    return "\n".join(rows)
