"""Characterisation of thermalization traces.

Every routine accepts any object with ``times`` and ``values`` arrays
(:class:`~prethermal.propagation.EvolutionTrace`,
:class:`~prethermal.acquisition.DecayTrace`) or a plain ``(times, values)``
pair.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, signal, stats

from .errors import (
    DegenerateTrace,
    InsufficientData,
    NoCrossing,
    NoCusp,
    NonConvergence,
    TooFewPoints,
)


def _arrays(trace):
    if isinstance(trace, tuple):
        t, y = trace
    else:
        t, y = trace.times, trace.values
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


# -- stretched exponential ----------------------------------------------------

@dataclass
class StretchedFit:
    amplitude: float
    lifetime: float
    alpha: float
    residual_rms: float
    covariance: np.ndarray
    n_points: int
    alpha_fixed: bool = False
    iterations: int = 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(-((t / self.lifetime) ** self.alpha))

    @property
    def rate(self) -> float:
        return 1.0 / self.lifetime

    @property
    def errors(self) -> dict:
        sd = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        names = ["amplitude", "lifetime"] + ([] if self.alpha_fixed else ["alpha"])
        return dict(zip(names, sd.tolist()))


def _stretched_terms(t, amp, life, alpha):
    ratio = t / life
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(ratio > 0, ratio**alpha, 0.0)
        ulog = np.where(ratio > 0, u * np.log(np.where(ratio > 0, ratio, 1.0)), 0.0)
    e = np.exp(-u)
    return u, ulog, e


def fit_stretched_exponential(trace, alpha_fixed: float | None = None, max_iter: int = 200,
                              xtol: float = 1e-8) -> StretchedFit:
    """Least-squares fit of ``A exp(-(t/T)^alpha)``.

    Starts from ``A = max(y)``, ``T`` from the 1/e crossing (or an
    extrapolation when the trace never gets there) and ``alpha = 0.5``.
    Uses a bounded trust-region solver with the analytic Jacobian.
    """
    t, y = _arrays(trace)
    if len(t) < 10:
        raise InsufficientData("stretched fit needs at least 10 points")
    if np.max(y) <= 0:
        raise DegenerateTrace("trace has no positive values")
    if np.ptp(y) <= 1e-12 * abs(np.max(y)):
        raise DegenerateTrace("constant trace: lifetime unbounded")
    amp0 = float(np.max(y))
    alpha0 = 0.5 if alpha_fixed is None else float(alpha_fixed)
    life0 = _initial_lifetime(t, y / amp0, alpha0)

    def resid(p):
        a = alpha0 if alpha_fixed is not None else p[2]
        _, _, e = _stretched_terms(t, p[0], p[1], a)
        return p[0] * e - y

    def jac(p):
        a = alpha0 if alpha_fixed is not None else p[2]
        u, ulog, e = _stretched_terms(t, p[0], p[1], a)
        cols = [e, p[0] * e * u * a / p[1]]
        if alpha_fixed is None:
            cols.append(-p[0] * e * ulog)
        return np.column_stack(cols)

    p0 = [amp0, life0] + ([] if alpha_fixed is not None else [alpha0])
    lo = [0.0, 1e-300] + ([] if alpha_fixed is not None else [1e-3])
    hi = [np.inf, np.inf] + ([] if alpha_fixed is not None else [2.0])
    res = optimize.least_squares(resid, p0, jac=jac, bounds=(lo, hi), method="trf", x_scale="jac",
                                 xtol=xtol, ftol=1e-14, gtol=1e-14, max_nfev=max_iter)
    if res.status <= 0:
        raise NonConvergence(f"stretched fit did not converge: {res.message}")
    p = res.x
    dof = max(len(t) - len(p), 1)
    sse = float(res.fun @ res.fun)
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * sse / dof
    except np.linalg.LinAlgError:
        cov = np.full((len(p), len(p)), np.inf)
    return StretchedFit(
        amplitude=float(p[0]),
        lifetime=float(p[1]),
        alpha=float(alpha0 if alpha_fixed is not None else p[2]),
        residual_rms=math.sqrt(sse / len(t)),
        covariance=cov,
        n_points=len(t),
        alpha_fixed=alpha_fixed is not None,
        iterations=int(res.nfev),
    )


def _initial_lifetime(t, y_norm, alpha):
    try:
        return one_over_e_lifetime((t, y_norm), plateau=1.0)
    except NoCrossing:
        pass
    # extrapolate from the last point that has decayed at all
    ok = (y_norm > 0) & (y_norm < 1) & (t > 0)
    if not np.any(ok):
        return float(t[-1]) if t[-1] > 0 else 1.0
    i = np.nonzero(ok)[0][-1]
    return float(t[i] * (-math.log(y_norm[i])) ** (-1.0 / alpha))


# -- multi exponential --------------------------------------------------------

@dataclass
class MultiExpFit:
    amplitudes: np.ndarray
    lifetimes: np.ndarray
    residual_rms: float
    n_points: int

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.outer(t, 1.0 / self.lifetimes)) @ self.amplitudes

    @property
    def k(self) -> int:
        return len(self.lifetimes)


def _nnls_residual(t, y, log_tau):
    m = np.exp(-np.outer(t, np.exp(-log_tau)))
    amps, _ = optimize.nnls(m, y)
    return m @ amps - y, amps


def _varpro(t, y, log_tau0, max_iter):
    res = optimize.least_squares(lambda lt: _nnls_residual(t, y, lt)[0], log_tau0, method="trf",
                                 xtol=1e-10, ftol=1e-14, gtol=1e-14, max_nfev=max_iter)
    if res.status < 0:
        raise NonConvergence(res.message)
    r, amps = _nnls_residual(t, y, res.x)
    return res.x, amps, r


def fit_multi_exponential(trace, k: int = 5, max_iter: int = 400) -> MultiExpFit:
    """Non-negative sum of ``k`` exponentials by variable projection.

    Amplitudes come from a non-negative linear solve for every trial set of
    lifetimes. One starting lifetime is taken from the single-exponential
    optimum, so the residual never exceeds that of the best single term.
    """
    t, y = _arrays(trace)
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(t) < 5 * k:
        raise InsufficientData(f"need at least {5 * k} points for k={k}")
    span = float(t[-1] - t[0])
    step = float(np.min(np.diff(t)))
    grid = np.log(np.geomspace(max(step, span * 1e-4), span, k)) if k > 1 else np.array([math.log(span / 2)])
    single_lt, _, _ = _varpro(t, y, np.array([math.log(span / 2)]), max_iter)
    if k > 1:
        grid[np.argmin(np.abs(grid - single_lt[0]))] = single_lt[0]
    else:
        grid = single_lt
    lt, amps, r = _varpro(t, y, grid, max_iter)
    order = np.argsort(lt)
    return MultiExpFit(amplitudes=amps[order], lifetimes=np.exp(lt[order]),
                       residual_rms=math.sqrt(float(r @ r) / len(t)), n_points=len(t))


# -- lifetimes ----------------------------------------------------------------

def one_over_e_lifetime(trace, plateau: float | None = None) -> float:
    """First downward crossing of ``plateau / e`` by linear interpolation.

    ``plateau`` defaults to the first value of the trace.
    """
    t, y = _arrays(trace)
    ref = float(y[0]) if plateau is None else float(plateau)
    level = ref / math.e
    below = np.nonzero(y < level)[0]
    if len(below) == 0:
        raise NoCrossing(f"trace never falls below {level:.4g}")
    i = int(below[0])
    if i == 0:
        return float(t[0])
    t0, t1, y0, y1 = t[i - 1], t[i], y[i - 1], y[i]
    return float(t0 + (y0 - level) * (t1 - t0) / (y0 - y1))


def censored_lifetime(trace, plateau: float | None = None) -> tuple[float, bool]:
    """``(lifetime, censored)``; a censored value is the last time, a lower bound."""
    try:
        return one_over_e_lifetime(trace, plateau), False
    except NoCrossing:
        t, _ = _arrays(trace)
        return float(t[-1]), True


# -- cusp / regimes -----------------------------------------------------------

@dataclass
class CuspFit:
    cusp_time: float
    slope_before: float
    slope_after: float
    intercept_after: float
    rms_one: float
    rms_two: float

    @property
    def improvement(self) -> float:
        return 1.0 - self.rms_two / self.rms_one if self.rms_one > 0 else 0.0


def _hinge_sse(x, y, xb):
    basis = np.column_stack([np.ones_like(x), x, np.maximum(0.0, x - xb)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    r = basis @ coef - y
    return float(r @ r), coef


def cusp_fit(trace, max_candidates: int = 400) -> CuspFit:
    """Continuous two-segment line fit of ``ln s`` against ``sqrt(t)``."""
    t, y = _arrays(trace)
    ok = (t > 0) & (y > 0)
    t, y = t[ok], y[ok]
    if len(t) < 8 or t[-1] / t[0] < 10:
        raise InsufficientData("cusp detection needs a trace spanning at least one decade in time")
    x, ly = np.sqrt(t), np.log(y)
    line = np.polyfit(x, ly, 1)
    r1 = np.polyval(line, x) - ly
    rms1 = math.sqrt(float(r1 @ r1) / len(x))
    inner = x[2:-2]
    if len(inner) > max_candidates:
        inner = inner[np.linspace(0, len(inner) - 1, max_candidates).round().astype(int)]
    sse = np.array([_hinge_sse(x, ly, xb)[0] for xb in inner])
    j = int(np.argmin(sse))
    lo = inner[max(j - 1, 0)]
    hi = inner[min(j + 1, len(inner) - 1)]
    best = inner[j]
    if hi > lo:
        ref = optimize.minimize_scalar(lambda xb: _hinge_sse(x, ly, xb)[0], bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10 * hi})
        if ref.fun <= sse[j]:
            best = float(ref.x)
    sse_best, coef = _hinge_sse(x, ly, best)
    return CuspFit(cusp_time=best**2, slope_before=float(coef[1]), slope_after=float(coef[1] + coef[2]),
                   intercept_after=float(coef[0] - coef[2] * best), rms_one=rms1, rms_two=math.sqrt(sse_best / len(x)))


def detect_cusp(trace, min_improvement: float = 0.2) -> float:
    """Cusp time ``t*``; raises :class:`NoCusp` unless two segments cut the RMS by > 20%."""
    fit = _significant_cusp(trace, min_improvement)
    return fit.cusp_time


def _significant_cusp(trace, min_improvement: float = 0.2) -> CuspFit:
    fit = cusp_fit(trace)
    _, y = _arrays(trace)
    scale = max(1.0, float(np.max(np.abs(np.log(y[y > 0])))))
    if fit.rms_one <= 1e-12 * scale:
        raise NoCusp("trace is a straight line in (sqrt t, ln s)")
    if fit.improvement <= min_improvement:
        raise NoCusp(f"two-segment fit improves RMS by only {fit.improvement:.1%}")
    return fit


@dataclass
class RegimeSegmentation:
    cusp_time: float | None
    boundaries: dict
    labels: np.ndarray
    local_alpha_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    local_alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def present(self) -> list[str]:
        return [k for k, v in self.boundaries.items() if v is not None]


def local_alpha(trace, plateau: float, start: float = 0.0, window_decades: float = 0.5):
    """Sliding log-log slope of ``-ln(s / plateau)``, the local stretch exponent."""
    t, y = _arrays(trace)
    ok = (t > start) & (t > 0) & (y > 0) & (y < plateau)
    t, y = t[ok], y[ok]
    if len(t) < 3:
        return np.zeros(0), np.zeros(0)
    lt, lz = np.log(t), np.log(-np.log(y / plateau))
    half = 0.5 * window_decades * math.log(10)
    centres, slopes = [], []
    for i in range(len(t)):
        sel = np.abs(lt - lt[i]) <= half
        if sel.sum() >= 3 and np.ptp(lt[sel]) > 0:
            centres.append(t[i])
            slopes.append(np.polyfit(lt[sel], lz[sel], 1)[0])
    return np.array(centres), np.array(slopes)


def segment_regimes(trace, infinite_temperature: float = 0.02, alpha_target: float = 0.5,
                    alpha_tolerance: float = 0.15, window_decades: float = 0.5) -> RegimeSegmentation:
    """Split a trace into transient (I), plateau (II), unconstrained decay (III)
    and infinite temperature (IV). Absent regimes map to ``None``.

    The cusp is searched only up to the first ``1/e`` crossing so that
    late-time curvature cannot capture the two-segment fit.
    """
    t, y = _arrays(trace)
    s = y / y[0]
    crossed = np.nonzero(s < 1 / math.e)[0]
    early = slice(0, int(crossed[0]) + 1 if len(crossed) else len(t))
    try:
        cusp = _significant_cusp((t[early], s[early]))
        tstar = cusp.cusp_time
        # plateau amplitude: the post-cusp segment extrapolated back to t = 0
        plateau = math.exp(cusp.intercept_after)
    except (NoCusp, InsufficientData):
        tstar, plateau = None, 1.0
    start = tstar if tstar is not None else 0.0
    ta, alpha = local_alpha((t, s), plateau, start, window_decades)
    depart = np.nonzero(np.abs(alpha - alpha_target) > alpha_tolerance)[0]
    t23 = float(ta[depart[0]]) if len(depart) else None
    cold = np.nonzero(s < infinite_temperature)[0]
    t4 = float(t[cold[0]]) if len(cold) else None
    end = float(t[-1])
    boundaries = {}
    labels = np.empty(len(t), dtype="<U3")
    labels[:] = "II"
    if tstar is None:
        boundaries["I"] = None
    else:
        boundaries["I"] = (0.0, tstar)
        labels[t <= tstar] = "I"
    # II runs from the cusp (or 0) to the first of the later boundaries
    later = [v for v in (t23, t4) if v is not None]
    boundaries["II"] = (start, min(later) if later else end)
    if t23 is not None and (t4 is None or t23 < t4):
        boundaries["III"] = (t23, t4 if t4 is not None else end)
        labels[(t > t23)] = "III"
    else:
        boundaries["III"] = None
    if t4 is not None:
        boundaries["IV"] = (t4, end)
        labels[t >= t4] = "IV"
    else:
        boundaries["IV"] = None
    return RegimeSegmentation(cusp_time=tstar, boundaries=boundaries, labels=labels,
                              local_alpha_times=ta, local_alpha=alpha)


# -- harmonics ----------------------------------------------------------------

@dataclass
class HarmonicSpectrum:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    harmonics: np.ndarray
    tau: float
    primary_frequency: float | None
    bin_width: float
    spectrum_frequencies: np.ndarray
    spectrum: np.ndarray
    noise_floor: float

    def harmonic(self, n: int) -> float | None:
        hit = np.nonzero(self.harmonics == n)[0]
        return float(self.frequencies[hit[0]]) if len(hit) else None


def harmonic_spectrum(trace, tau: float | None = None, expected_primary: float | None = None,
                      threshold: float = 4.0, rel_tol: float = 0.1, primary_fraction: float = 0.25,
                      min_points: int = 64) -> HarmonicSpectrum:
    """Peaks of the linearly detrended FFT of a per-pulse sampled trace.

    Peaks must exceed ``threshold`` times the median spectral magnitude and
    are reported at their bin frequencies. The primary is the
    lowest-frequency peak holding at least ``primary_fraction`` of the
    strongest peak, since a fundamental is the lowest member of its series
    and need not be the loudest. With ``expected_primary`` (Hz) the
    strongest peak within ``rel_tol`` of it is used instead. Other peaks
    within ``rel_tol * f1`` of an integer multiple ``n f1`` are labelled
    ``n``; the strongest peak per ``n`` is kept.
    """
    t, y = _arrays(trace)
    if len(y) < min_points:
        raise InsufficientData(f"need at least {min_points} points, got {len(y)}")
    if tau is None:
        tau = float(t[1] - t[0])
    n = len(y)
    mag = 2.0 * np.abs(np.fft.rfft(signal.detrend(y, type="linear"))) / n
    freqs = np.fft.rfftfreq(n, d=tau)
    floor = float(np.median(mag[1:]))
    # zero padding lets the Nyquist bin register as a peak
    padded = np.concatenate([[0.0], mag, [0.0]])
    peaks, _ = signal.find_peaks(padded, height=threshold * floor if floor > 0 else 0.0)
    peaks = peaks - 1
    peaks = peaks[peaks > 0]
    # a flat floor of zeros (pure tones) still needs some magnitude
    peaks = peaks[mag[peaks] > 1e-12 * (mag.max() if mag.size else 1.0)]
    bin_width = 1.0 / (n * tau)
    pf = peaks * bin_width
    pa = mag[peaks]
    if len(peaks) == 0:
        return HarmonicSpectrum(np.zeros(0), np.zeros(0), np.zeros(0, dtype=int), tau, None, bin_width,
                                freqs, mag, floor)
    if expected_primary is not None:
        near = np.nonzero(np.abs(pf - expected_primary) <= max(rel_tol * expected_primary, bin_width))[0]
        i1 = int(near[np.argmax(pa[near])]) if len(near) else None
    else:
        i1 = int(np.nonzero(pa >= primary_fraction * pa.max())[0][0])
    if i1 is None:
        return HarmonicSpectrum(pf, pa, np.zeros(len(pf), dtype=int), tau, None, bin_width, freqs, mag, floor)
    f1 = pf[i1]
    idx = np.rint(pf / f1).astype(int)
    ok = (idx >= 1) & (np.abs(pf - idx * f1) <= rel_tol * f1 * np.maximum(idx, 1))
    labels = np.where(ok, idx, 0)
    labels[i1] = 1
    keep = []
    for h in sorted(set(labels[labels > 0].tolist())):
        cand = np.nonzero(labels == h)[0]
        keep.append(int(cand[np.argmax(pa[cand])]) if h != 1 else i1)
    keep = np.array(keep, dtype=int)
    return HarmonicSpectrum(frequencies=pf[keep], amplitudes=pa[keep], harmonics=labels[keep], tau=tau,
                            primary_frequency=float(f1), bin_width=bin_width, spectrum_frequencies=freqs,
                            spectrum=mag, noise_floor=floor)


@dataclass
class HarmonicSlopes:
    slopes: dict
    intercepts: dict
    ratios: dict
    points: dict


def harmonic_slope_fit(spectra) -> HarmonicSlopes:
    """Fit ``f_n`` against the drive-predicted ``theta / (2 pi tau)`` per harmonic.

    ``spectra`` is a sequence of ``(theta, HarmonicSpectrum)``. Harmonics
    seen at fewer than two flip angles are skipped.
    """
    spectra = [(th, sp) for th, sp in spectra if sp.primary_frequency is not None]
    if len(spectra) < 4:
        raise TooFewPoints("need at least four flip angles with a detected primary")
    points: dict[int, list] = {}
    for th, sp in spectra:
        x = th / (2 * math.pi * sp.tau)
        for f, h in zip(sp.frequencies, sp.harmonics):
            if h > 0:
                points.setdefault(int(h), []).append((x, float(f)))
    slopes, intercepts = {}, {}
    for h, pts in sorted(points.items()):
        if len(pts) < 2:
            continue
        x, f = np.array(pts).T
        slope, icpt = np.polyfit(x, f, 1)
        slopes[h], intercepts[h] = float(slope), float(icpt)
    # ratios to the primary slope, for n >= 2 only
    ratios = {h: s / slopes[1] for h, s in slopes.items() if h != 1} if 1 in slopes else {}
    return HarmonicSlopes(slopes=slopes, intercepts=intercepts, ratios=ratios,
                          points={h: p for h, p in points.items()})


# -- scaling ------------------------------------------------------------------

@dataclass
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    mode: str
    n_points: int


def decay_rate_scaling(points, mode: str = "semilog") -> ScalingFit:
    """Linear fits of lifetime data against the drive.

    ``semilog``: ``ln(1/T)`` against ``J tau``. ``loglog``: ``ln T``
    against ``ln omega``. ``points`` holds ``(x, fit)`` pairs where ``fit``
    is a :class:`StretchedFit` or a bare lifetime.
    """
    if len(points) < 3:
        raise TooFewPoints("scaling fit needs at least three points")
    x = np.array([p[0] for p in points], dtype=float)
    life = np.array([p[1].lifetime if isinstance(p[1], StretchedFit) else p[1] for p in points], dtype=float)
    if mode == "semilog":
        xs, ys = x, -np.log(life)
    elif mode == "loglog":
        xs, ys = np.log(x), np.log(life)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lr = stats.linregress(xs, ys)
    return ScalingFit(slope=float(lr.slope), intercept=float(lr.intercept), r_squared=float(lr.rvalue**2),
                      mode=mode, n_points=len(xs))


def throughput_gain(epsilon: float, t1_ratio: float, t2_ratio: float) -> float:
    """``0.5 eps^2 (T1 ratio)^2 (T2'/T2*)`` speed-up over thermal FID readout."""
    if epsilon <= 0 or t1_ratio <= 0 or t2_ratio <= 0:
        raise ValueError("all inputs must be positive")
    return 0.5 * epsilon**2 * t1_ratio**2 * t2_ratio


# -- reports ------------------------------------------------------------------

def fit_report(fit, settings: dict | None = None) -> dict:
    """JSON-ready ``{model, params, errors, residual_rms, n_points, settings}``."""
    if isinstance(fit, StretchedFit):
        params = {"amplitude": fit.amplitude, "lifetime": fit.lifetime, "alpha": fit.alpha}
        return {"model": "stretched_exponential", "params": params, "errors": fit.errors,
                "residual_rms": fit.residual_rms, "n_points": fit.n_points,
                "settings": dict(settings or {}, alpha_fixed=fit.alpha_fixed)}
    if isinstance(fit, MultiExpFit):
        params = {"amplitudes": fit.amplitudes.tolist(), "lifetimes": fit.lifetimes.tolist()}
        return {"model": "multi_exponential", "params": params, "errors": {},
                "residual_rms": fit.residual_rms, "n_points": fit.n_points,
                "settings": dict(settings or {}, k=fit.k)}
    if isinstance(fit, ScalingFit):
        return {"model": f"scaling_{fit.mode}", "params": {"slope": fit.slope, "intercept": fit.intercept},
                "errors": {}, "residual_rms": None, "n_points": fit.n_points,
                "settings": dict(settings or {}, r_squared=fit.r_squared)}
    raise TypeError(f"no report format for {type(fit).__name__}")


def stretched_from_report(report: dict) -> StretchedFit:
    p = report["params"]
    return StretchedFit(amplitude=p["amplitude"], lifetime=p["lifetime"], alpha=p["alpha"],
                        residual_rms=report["residual_rms"], covariance=np.zeros((3, 3)),
                        n_points=report["n_points"], alpha_fixed=report["settings"].get("alpha_fixed", False))


def segmentation_report(seg: RegimeSegmentation) -> dict:
    return {"cusp_time": seg.cusp_time,
            "boundaries": {k: (list(v) if v is not None else None) for k, v in seg.boundaries.items()},
            "labels": seg.labels.tolist(),
            "local_alpha_times": seg.local_alpha_times.tolist(), "local_alpha": seg.local_alpha.tolist()}


def spectrum_report(sp: HarmonicSpectrum) -> dict:
    d = {k: v for k, v in asdict(sp).items()}
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
