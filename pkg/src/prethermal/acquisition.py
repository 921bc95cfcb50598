"""Synthetic heterodyne acquisition and per-window amplitude extraction.

Each acquisition window between two pulses holds a sampled carrier at the
heterodyne frequency whose amplitude is the transverse signal at that
time. The amplitude is recovered from the DFT bin nearest the carrier. This
acts as a band-pass filter of width about ``1/t_acq``. The resulting one
point per window is packaged as a :class:`DecayTrace` and may be smoothed
with a centred moving average.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import HETERODYNE_FREQUENCY_HZ, SAMPLE_INTERVAL_S
from .errors import InvalidConfig, WindowSmallerThanStep, WindowTooShort


@dataclass(frozen=True)
class AcquisitionConfig:
    heterodyne_frequency: float = HETERODYNE_FREQUENCY_HZ
    sample_interval: float = SAMPLE_INTERVAL_S
    window_length: float = 2e-6
    noise_sigma: float = 0.0
    polarization_scale: float = 1.0
    t1_envelope: float | None = None
    rng_seed: int = 0
    phase_mode: str = "coherent"

    def __post_init__(self):
        if self.sample_interval <= 0:
            raise InvalidConfig("sample_interval must be positive")
        if self.window_length < 10 / self.heterodyne_frequency - 1e-18:
            raise InvalidConfig("window must hold at least ten carrier periods")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be non-negative")
        if self.phase_mode not in ("coherent", "random"):
            raise InvalidConfig(f"unknown phase_mode {self.phase_mode!r}")

    @property
    def samples_per_window(self) -> int:
        return int(math.floor(self.window_length / self.sample_interval + 1e-9))

    def noise_for_snr(self, amplitude: float, snr: float) -> float:
        """``noise_sigma`` giving the requested amplitude SNR of one extracted point."""
        # The extracted amplitude has standard deviation sigma * sqrt(2 / L).
        return self.polarization_scale * amplitude * math.sqrt(self.samples_per_window / 2) / snr


@dataclass
class RawWindow:
    samples: np.ndarray
    start_time: float

    def __len__(self):
        return len(self.samples)


@dataclass
class DecayTrace:
    times: np.ndarray
    amplitudes: np.ndarray
    filter_state: str | None = None
    tau: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def values(self) -> np.ndarray:
        return self.amplitudes

    def __len__(self):
        return len(self.times)


def synthesize_window(amplitude: float, phase: float, start_time: float, config: AcquisitionConfig,
                      rng: np.random.Generator | None = None) -> RawWindow:
    n = config.samples_per_window
    t = np.arange(n) * config.sample_interval
    env = math.exp(-start_time / config.t1_envelope) if config.t1_envelope else 1.0
    x = config.polarization_scale * amplitude * env * np.cos(2 * math.pi * config.heterodyne_frequency * t + phase)
    if config.noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        x = x + rng.normal(0.0, config.noise_sigma, n)
    return RawWindow(samples=x, start_time=start_time)


def carrier_bin(n_samples: int, config: AcquisitionConfig) -> int:
    return int(round(config.heterodyne_frequency * n_samples * config.sample_interval))


def extract_amplitude(window: RawWindow, config: AcquisitionConfig) -> float:
    """``2/L |X_k|`` at the DFT bin ``k`` nearest the carrier."""
    x = np.asarray(window.samples, dtype=float)
    n = len(x)
    if n < 2:
        raise WindowTooShort("window needs at least two samples")
    k = carrier_bin(n, config)
    # Single-bin DFT; avoids an O(L log L) transform of the whole window.
    coef = np.exp(-2j * math.pi * k * np.arange(n) / n) @ x
    return 2.0 * abs(coef) / n


def assemble_trace(amplitudes, tau: float) -> DecayTrace:
    amps = np.asarray(amplitudes, dtype=float)
    if amps.size == 0:
        raise ValueError("amplitudes must be non-empty")
    return DecayTrace(times=np.arange(len(amps)) * tau, amplitudes=amps.copy(), tau=tau,
                      metadata={"tau_s": tau})


def moving_average(trace: DecayTrace, window: float) -> DecayTrace:
    """Centred moving mean over ``floor(window / tau)`` points.

    Near the ends the window shrinks to the points available. For an even
    count the window spans ``m/2`` points before and ``m/2 - 1`` after.
    """
    tau = trace.tau if trace.tau is not None else float(np.median(np.diff(trace.times)))
    if window < tau * (1 - 1e-12):
        raise WindowSmallerThanStep(f"window {window} is shorter than the step {tau}")
    m = max(1, int(math.floor(window / tau + 1e-9)))
    y = trace.amplitudes
    n = len(y)
    before, after = m // 2, m - m // 2 - 1
    c = np.concatenate([[0.0], np.cumsum(y)])
    i = np.arange(n)
    lo = np.clip(i - before, 0, n)
    hi = np.clip(i + after + 1, 0, n)
    out = (c[hi] - c[lo]) / (hi - lo)
    meta = dict(trace.metadata, moving_average_s=window)
    return DecayTrace(times=trace.times.copy(), amplitudes=out, filter_state=f"moving_average({window})",
                      tau=tau, metadata=meta)


def iter_windows(values, tau: float, config: AcquisitionConfig):
    """Yield one synthetic window per trace point, one at a time."""
    rng = np.random.default_rng(config.rng_seed)
    for n, v in enumerate(values):
        t = n * tau
        if config.phase_mode == "coherent":
            phase = math.fmod(2 * math.pi * config.heterodyne_frequency * t, 2 * math.pi)
        else:
            phase = rng.uniform(0, 2 * math.pi)
        yield synthesize_window(float(v), phase, t, config, rng)


def pipeline_round_trip(survival, config: AcquisitionConfig, tau: float | None = None) -> DecayTrace:
    """Synthesize, extract and assemble one amplitude per window.

    Extraction returns magnitudes, so negative survival values come back as
    ``|s|``. Memory use stays at one window regardless of trace length.
    """
    values = survival.survival if hasattr(survival, "survival") else np.asarray(survival, dtype=float)
    if tau is None:
        times = np.asarray(survival.times, dtype=float)
        tau = float(times[1] - times[0]) if len(times) > 1 else 1.0
    amps = np.fromiter((extract_amplitude(w, config) for w in iter_windows(values, tau, config)),
                       dtype=float, count=len(values))
    out = assemble_trace(amps, tau)
    out.metadata.update(polarization_scale=config.polarization_scale,
                        heterodyne_frequency_hz=config.heterodyne_frequency)
    return out


def write_raw_windows(path, windows, config: AcquisitionConfig) -> None:
    """Little-endian float32 samples plus a JSON sidecar at ``path + '.json'``."""
    path = Path(path)
    windows = list(windows)
    with open(path, "wb") as fh:
        for w in windows:
            fh.write(np.asarray(w.samples, dtype="<f4").tobytes())
    sidecar = {
        "delta_t_s": config.sample_interval,
        "t_acq_s": config.window_length,
        "f_het_hz": config.heterodyne_frequency,
        "start_times_s": [float(w.start_time) for w in windows],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def read_raw_windows(path) -> tuple[list[RawWindow], dict]:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    data = np.fromfile(path, dtype="<f4").astype(float)
    starts = meta["start_times_s"]
    if not starts:
        return [], meta
    per = len(data) // len(starts)
    wins = [RawWindow(samples=data[i * per:(i + 1) * per], start_time=t) for i, t in enumerate(starts)]
    return wins, meta
