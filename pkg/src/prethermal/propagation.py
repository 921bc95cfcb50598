"""Pulsed spin-lock evolution and survival-probability traces.

The drive is a train of flip-angle ``theta`` pulses about x separated by
``tau``. With delta pulses, one period is ``U = R_x(theta) exp(-i H tau)``.
The survival probability of the transverse state is

    s(n) = Tr(U^n I_x U^-n I_x) / Tr(I_x I_x),

normalised so that ``s(0) = 1``.

``U`` is diagonalised once (complex Schur form, which stays unitary even
for degenerate eigenphases). Writing ``A = Z^dagger I_x Z``, every sample is

    s(n) = sum_ab |A_ab|^2 exp(i (phi_a - phi_b) n) / Tr(I_x^2),

which costs O(4^N) per sample for any ``n``, including ``n ~ 10^9``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import DegeneratePulse, InvalidConfig, SubstepTooCoarse
from .spin_model import TWO_PI, HamiltonianSet, collective, collective_rotation, z_diagonal

_BLOCK = 512


@dataclass(frozen=True)
class ACField:
    amplitude: float  # Hz
    frequency: float  # Hz
    phase: float = 0.0


@dataclass(frozen=True)
class PulseSequenceSpec:
    flip_angle: float
    spacing: float
    pulse_count: int = 1000
    pulse_width: float = 0.0
    acquisition_window: float = 0.0
    pulse_model: str = "delta"
    ac_field: ACField | None = None

    def __post_init__(self):
        if self.spacing <= 0:
            raise InvalidConfig("pulse spacing tau must be positive")
        if not 0 <= self.pulse_width < self.spacing:
            raise InvalidConfig("pulse width must satisfy 0 <= t_p < tau")
        if self.acquisition_window > self.spacing - self.pulse_width + 1e-15:
            raise InvalidConfig("acquisition window must fit between pulses")
        if self.pulse_count < 1:
            raise InvalidConfig("pulse_count must be at least 1")
        if self.pulse_model not in ("delta", "finite"):
            raise InvalidConfig(f"unknown pulse model {self.pulse_model!r}")

    @property
    def drive_frequency(self) -> float:
        """Pulse repetition rate ``1/tau`` in Hz."""
        return 1.0 / self.spacing

    @property
    def resonant_ac_frequency(self) -> float:
        return self.flip_angle / (TWO_PI * self.spacing)


@dataclass
class EvolutionTrace:
    times: np.ndarray
    survival: np.ndarray
    bloch: np.ndarray | None = None
    pulse_index: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.survival = np.asarray(self.survival, dtype=float)
        if self.times.shape != self.survival.shape:
            raise ValueError("times and survival must have equal length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def values(self) -> np.ndarray:
        return self.survival

    def __len__(self):
        return len(self.times)


@dataclass
class CyclePropagator:
    unitary: np.ndarray
    eigenphases: np.ndarray
    eigenvectors: np.ndarray
    spacing: float
    n_spins: int

    @classmethod
    def from_unitary(cls, u: np.ndarray, spacing: float, n_spins: int) -> CyclePropagator:
        t, z = sla.schur(u, output="complex")
        return cls(unitary=u, eigenphases=np.angle(np.diag(t)), eigenvectors=z,
                   spacing=spacing, n_spins=n_spins)

    def unitarity_residual(self) -> float:
        u = self.unitary
        return float(np.linalg.norm(u.conj().T @ u - np.eye(len(u))))


def _expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def _pulse_unitary(h: np.ndarray, seq: PulseSequenceSpec, n: int) -> np.ndarray:
    if seq.pulse_model == "delta":
        return collective_rotation(seq.flip_angle, "x", n)
    if seq.pulse_width <= 0:
        raise DegeneratePulse("finite pulse model needs a positive pulse width")
    rabi = seq.flip_angle / seq.pulse_width  # rad/s
    return _expm_hermitian(h + rabi * collective("x", n), seq.pulse_width)


def cycle_unitary(h: HamiltonianSet, seq: PulseSequenceSpec) -> CyclePropagator:
    """Propagator for one drive period: free evolution, then the pulse."""
    ht = h.h_total
    free = seq.spacing - (seq.pulse_width if seq.pulse_model == "finite" else 0.0)
    u = _pulse_unitary(ht, seq, h.n_spins) @ _expm_hermitian(ht, free)
    return CyclePropagator.from_unitary(u, seq.spacing, h.n_spins)


def _phase_sum(phases, left, right, steps) -> np.ndarray:
    """``sum_ab left_ab right_ba exp(i (phi_a - phi_b) k)`` for each ``k`` in ``steps``."""
    m = left * right.T
    out = np.empty(len(steps), dtype=complex)
    for i in range(0, len(steps), _BLOCK):
        k = np.asarray(steps[i:i + _BLOCK], dtype=float)
        e = np.exp(1j * np.outer(k, phases))
        out[i:i + _BLOCK] = np.einsum("ka,ab,kb->k", e, m, e.conj(), optimize=True)
    return out


def _pulse_indices(n_max: int, indices) -> np.ndarray:
    if indices is None:
        return np.arange(n_max + 1)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(np.diff(idx) <= 0):
        raise ValueError("pulse indices must be non-negative and strictly increasing")
    return idx


def log_pulse_indices(n_max: int, count: int = 400) -> np.ndarray:
    """``0`` plus roughly log-spaced unique pulse counts up to ``n_max``."""
    grid = np.unique(np.round(np.logspace(0, math.log10(max(n_max, 1)), count)).astype(np.int64))
    return np.concatenate([[0], grid])


def evolve_survival(prop: CyclePropagator, n_pulses: int, indices=None, bloch: bool = False,
                    metadata: dict | None = None) -> EvolutionTrace:
    """Survival after ``n = 0..n_pulses`` periods (or the given pulse indices)."""
    idx = _pulse_indices(n_pulses, indices)
    n = prop.n_spins
    z = prop.eigenvectors
    ix = collective("x", n)
    norm = np.trace(ix @ ix).real
    a = z.conj().T @ ix @ z
    s = _phase_sum(prop.eigenphases, a, a, idx).real / norm
    b = None
    if bloch:
        comps = [s]
        for axis in ("y", "z"):
            bb = z.conj().T @ collective(axis, n) @ z
            comps.append(_phase_sum(prop.eigenphases, a, bb, idx).real / norm)
        b = np.column_stack(comps)
    return EvolutionTrace(times=idx * prop.spacing, survival=s, bloch=b, pulse_index=idx,
                          metadata=dict(metadata or {}))


def fid(h: HamiltonianSet, times, bloch: bool = False) -> EvolutionTrace:
    """Free induction decay of ``I_x`` under ``H = H_dd + H_z``."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("times must be non-negative and strictly increasing")
    w, v = np.linalg.eigh(h.h_total)
    ix = collective("x", h.n_spins)
    norm = np.trace(ix @ ix).real
    a = v.conj().T @ ix @ v
    # exp(-iHt) has phases -w t; reuse the pulse-index machinery with k = t.
    s = _phase_sum(-w, a, a, t).real / norm
    b = None
    if bloch:
        comps = [s]
        for axis in ("y", "z"):
            bb = v.conj().T @ collective(axis, h.n_spins) @ v
            comps.append(_phase_sum(-w, a, bb, t).real / norm)
        b = np.column_stack(comps)
    return EvolutionTrace(times=t, survival=s, bloch=b, metadata={"kind": "fid"})


def _ac_period(freq: float, tau: float, max_period: int) -> int | None:
    ratio = freq * tau
    frac = Fraction(ratio).limit_denominator(max_period)
    if abs(float(frac) - ratio) < 1e-12 * max(1.0, ratio):
        return frac.denominator
    return None


def _ac_pulse_unitaries(h: HamiltonianSet, seq: PulseSequenceSpec, substeps: int, first: int,
                        count: int):
    """Propagators for pulses ``first .. first+count-1`` including the AC field."""
    ac = seq.ac_field
    n = h.n_spins
    ht = h.h_total
    zdiag = z_diagonal(n)
    pulse = _pulse_unitary(ht, seq, n)
    free = seq.spacing - (seq.pulse_width if seq.pulse_model == "finite" else 0.0)
    dt = free / substeps
    for j in range(first, first + count):
        u = np.eye(2**n, dtype=complex)
        for m in range(substeps):
            t_mid = j * seq.spacing + (m + 0.5) * dt
            field_ = TWO_PI * ac.amplitude * math.cos(TWO_PI * ac.frequency * t_mid + ac.phase)
            u = _expm_hermitian(ht + np.diag(field_ * zdiag), dt) @ u
        yield pulse @ u


def evolve_with_ac_field(h: HamiltonianSet, seq: PulseSequenceSpec, indices=None,
                         substeps: int = 64, max_period: int = 1000) -> EvolutionTrace:
    """Survival with an added field ``b cos(2 pi f t + phi)`` along z.

    The field acts during free evolution, piecewise constant on ``substeps``
    midpoint slices per period. When ``f tau`` is rational with period
    ``q <= max_period`` pulses, the ``q``-pulse supercycle is diagonalised
    and arbitrary pulse counts are cheap. Otherwise pulses are applied one
    by one.
    """
    if seq.ac_field is None:
        raise InvalidConfig("sequence has no ac_field")
    if substeps < 64:
        raise SubstepTooCoarse(f"need at least 64 substeps per period, got {substeps}")
    idx = _pulse_indices(seq.pulse_count, indices)
    n = h.n_spins
    ix = collective("x", n)
    norm = np.trace(ix @ ix).real
    s = np.empty(len(idx))
    q = _ac_period(seq.ac_field.frequency, seq.spacing, max_period)
    if q is not None:
        steps = list(_ac_pulse_unitaries(h, seq, substeps, 0, q))
        partial = [np.eye(2**n, dtype=complex)]
        for u in steps[:-1]:
            partial.append(u @ partial[-1])
        w = steps[-1] @ partial[-1]
        prop = CyclePropagator.from_unitary(w, q * seq.spacing, n)
        z = prop.eigenvectors
        a = z.conj().T @ ix @ z
        for r in range(q):
            sel = np.nonzero(idx % q == r)[0]
            if len(sel) == 0:
                continue
            p = partial[r]
            b = z.conj().T @ (p.conj().T @ ix @ p) @ z
            s[sel] = _phase_sum(prop.eigenphases, a, b, idx[sel] // q).real / norm
    else:
        # Heisenberg picture: O_n = U_n^dagger O_{n-1} U_n.
        op = ix.astype(complex)
        want = {int(k): i for i, k in enumerate(idx)}
        if 0 in want:
            s[want[0]] = 1.0
        for j, u in enumerate(_ac_pulse_unitaries(h, seq, substeps, 0, int(idx[-1]))):
            op = u.conj().T @ op @ u
            if j + 1 in want:
                s[want[j + 1]] = np.vdot(op, ix).real / norm
    ac = seq.ac_field
    meta = {"ac_amplitude_hz": ac.amplitude, "ac_frequency_hz": ac.frequency, "ac_phase": ac.phase,
            "supercycle_pulses": q}
    return EvolutionTrace(times=idx * seq.spacing, survival=s, pulse_index=idx, metadata=meta)


def flip_angle_sweep(h: HamiltonianSet, template: PulseSequenceSpec, thetas, n_pulses: int | None = None):
    """Integrated survival ``sum_{n=0}^{N} s(n tau)`` for each flip angle.

    Returns ``(thetas, signal)`` as arrays.
    """
    thetas = np.asarray(thetas, dtype=float)
    n_pulses = template.pulse_count if n_pulses is None else n_pulses
    ht = h.h_total
    free = _expm_hermitian(ht, template.spacing - (template.pulse_width if template.pulse_model == "finite" else 0.0))
    ix = collective("x", h.n_spins)
    norm = np.trace(ix @ ix).real
    steps = np.arange(n_pulses + 1)
    out = np.empty(len(thetas))
    for i, th in enumerate(thetas):
        seq = replace(template, flip_angle=th)
        u = _pulse_unitary(ht, seq, h.n_spins) @ free
        prop = CyclePropagator.from_unitary(u, template.spacing, h.n_spins)
        a = prop.eigenvectors.conj().T @ ix @ prop.eigenvectors
        # sum over n of exp(i dphi n) in closed form would be ill-conditioned
        # near dphi = 0; summing the samples is cheap enough.
        out[i] = _phase_sum(prop.eigenphases, a, a, steps).real.sum() / norm
    return thetas, out


def average_traces(traces) -> EvolutionTrace:
    """Pointwise mean of traces sampled on identical grids."""
    traces = list(traces)
    first = traces[0]
    for tr in traces[1:]:
        if not np.array_equal(tr.times, first.times):
            raise ValueError("traces must share a time grid to be averaged")
    surv = np.mean([tr.survival for tr in traces], axis=0)
    bloch = None
    if all(tr.bloch is not None for tr in traces):
        bloch = np.mean([tr.bloch for tr in traces], axis=0)
    meta = dict(first.metadata)
    meta["realizations"] = len(traces)
    return EvolutionTrace(times=first.times, survival=surv, bloch=bloch,
                          pulse_index=first.pulse_index, metadata=meta)


# -- CSV exchange format -----------------------------------------------------

def trace_to_csv(trace, value_column: str = "survival") -> str:
    """Serialise with a ``#``-prefixed JSON metadata line and round-trip floats."""
    values = trace.survival if hasattr(trace, "survival") else trace.amplitudes
    buf = io.StringIO()
    buf.write("# " + json.dumps(trace.metadata, sort_keys=True, default=_json_default) + "\n")
    cols = ["time_s", value_column]
    bloch = getattr(trace, "bloch", None)
    if bloch is not None:
        cols += ["ix", "iy", "iz"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i, (t, v) in enumerate(zip(trace.times, values)):
        row = [repr(float(t)), repr(float(v))]
        if bloch is not None:
            row += [repr(float(x)) for x in bloch[i]]
        w.writerow(row)
    return buf.getvalue()


def write_trace_csv(trace, path, value_column: str = "survival") -> None:
    Path(path).write_text(trace_to_csv(trace, value_column))


def read_trace_csv(path) -> EvolutionTrace:
    """Read a trace written by :func:`write_trace_csv` (either value column name)."""
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = json.loads(lines[0][1:].strip() or "{}")
        lines = lines[1:]
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(header)))
    bloch = data[:, 2:5] if "ix" in header else None
    return EvolutionTrace(times=data[:, 0], survival=data[:, 1], bloch=bloch, metadata=meta)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
