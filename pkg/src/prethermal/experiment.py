"""Configuration, seeding and orchestration of simulation runs.

A run is described by one YAML document with the sections ``lattice``,
``disorder``, ``sequence``, ``sweep``, ``acquisition``, ``analysis`` and
``run``. Unknown keys are rejected. Random seeds never appear in the
document; every seed derives from ``run.master_seed`` through
:func:`derive_seed`, so results do not depend on job order or pool size.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from .acquisition import AcquisitionConfig
from .analysis import (
    censored_lifetime,
    cusp_fit,
    decay_rate_scaling,
    fit_multi_exponential,
    fit_report,
    fit_stretched_exponential,
    harmonic_spectrum,
    segment_regimes,
    segmentation_report,
    spectrum_report,
)
from .constants import MAX_DENSE_SPINS
from .errors import ConfigError, DegeneratePulse, EmptyLattice, InvalidConfig, NumericalError, PrethermalError
from .lattice import (
    DisorderModel,
    LatticeConfig,
    SpinLattice,
    coupling_scale,
    extract_cluster,
    generate_lattice,
    sample_disorder,
)
from .propagation import (
    ACField,
    EvolutionTrace,
    PulseSequenceSpec,
    average_traces,
    cycle_unitary,
    evolve_survival,
    evolve_with_ac_field,
    fid,
    log_pulse_indices,
    write_trace_csv,
)
from .spin_model import build_hamiltonians

log = logging.getLogger("prethermal")

ANALYSES = ("stretched", "multiexp", "one_over_e", "cusp", "regimes", "harmonics")
SWEEP_PARAMETERS = ("tau", "zeta", "theta", "f_ac")


def derive_seed(master_seed: int, *tags) -> int:
    """Stable 63-bit seed from ``sha256("master:tag1:tag2...")``."""
    key = ":".join(str(x) for x in (master_seed, *tags)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


_ANGLE = re.compile(r"^\s*([0-9.]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$")


def parse_angle(value) -> float:
    """Radians from a number or a string like ``"pi/2"`` or ``"3*pi/4"``."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _ANGLE.match(str(value))
    if not m:
        try:
            return float(value)
        except ValueError:
            raise InvalidConfig(f"cannot read angle {value!r}") from None
    num = float(m.group(1)) if m.group(1) else 1.0
    den = float(m.group(2)) if m.group(2) else 1.0
    return num * math.pi / den


@dataclass(frozen=True)
class SequenceConfig:
    """Drive description; exactly one of ``tau`` (s) and ``zeta`` is set.

    With ``zeta`` the spacing is ``zeta / J`` where ``J`` is the ensemble
    median coupling scale of the realizations.
    """

    flip_angle: float = math.pi / 2
    tau: float | None = None
    zeta: float | None = None
    pulse_count: int = 1000
    pulse_width: float = 0.0
    acquisition_window: float = 0.0
    pulse_model: str = "delta"
    mode: str = "driven"
    sampling: str = "linear"
    samples: int = 400
    ac_field: ACField | None = None

    def __post_init__(self):
        if (self.tau is None) == (self.zeta is None):
            raise InvalidConfig("sequence needs exactly one of tau and zeta")
        if self.tau is not None and self.tau <= 0:
            raise InvalidConfig("tau must be positive")
        if self.zeta is not None and self.zeta <= 0:
            raise InvalidConfig("zeta must be positive")
        if self.mode not in ("driven", "fid"):
            raise InvalidConfig(f"unknown sequence mode {self.mode!r}")
        if self.sampling not in ("linear", "log"):
            raise InvalidConfig(f"unknown sampling {self.sampling!r}")
        if self.samples < 2:
            raise InvalidConfig("samples must be at least 2")
        if self.pulse_model == "finite" and self.pulse_width <= 0:
            raise DegeneratePulse("finite pulse model needs a positive pulse width")
        if self.tau is not None:
            self.spec()

    def spec(self, coupling: float | None = None) -> PulseSequenceSpec:
        tau = self.tau if self.tau is not None else self.zeta / coupling
        return PulseSequenceSpec(flip_angle=self.flip_angle, spacing=tau, pulse_count=self.pulse_count,
                                 pulse_width=self.pulse_width, acquisition_window=self.acquisition_window,
                                 pulse_model=self.pulse_model, ac_field=self.ac_field)

    def indices(self) -> np.ndarray:
        if self.sampling == "log":
            return log_pulse_indices(self.pulse_count, self.samples)
        return np.arange(self.pulse_count + 1)


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise InvalidConfig(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        if len(self.values) == 0:
            raise InvalidConfig("sweep values must be non-empty")
        vals = tuple(parse_angle(v) if self.parameter == "theta" else float(v) for v in self.values)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class RunConfig:
    spins: int | None = 8
    realizations: int = 1
    master_seed: int = 0
    workers: int | None = None
    output_dir: str = "run"

    def __post_init__(self):
        if self.realizations < 1:
            raise InvalidConfig("realizations must be at least 1")
        if self.spins is not None and not 1 <= self.spins <= MAX_DENSE_SPINS:
            raise InvalidConfig(f"spins must lie in [1, {MAX_DENSE_SPINS}]")
        if self.workers is not None and self.workers < 1:
            raise InvalidConfig("workers must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    disorder: DisorderModel = field(default_factory=DisorderModel)
    sequence: SequenceConfig = field(default_factory=lambda: SequenceConfig(zeta=0.066))
    sweep: SweepConfig | None = None
    acquisition: AcquisitionConfig | None = None
    analysis: tuple = ()
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        bad = [a for a in self.analysis if a not in ANALYSES]
        if bad:
            raise InvalidConfig(f"unknown analysis {bad}; choose from {ANALYSES}")
        if self.sweep is not None and self.sweep.parameter == "f_ac" and self.sequence.ac_field is None:
            raise InvalidConfig("an f_ac sweep needs sequence.ac_field")
        if self.sweep is not None and self.sweep.parameter == "zeta" and self.sequence.zeta is None:
            raise InvalidConfig("a zeta sweep needs sequence.zeta (not tau)")
        if self.sweep is not None and self.sweep.parameter == "tau" and self.sequence.tau is None:
            raise InvalidConfig("a tau sweep needs sequence.tau (not zeta)")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=list))

    def experiment_dict(self) -> dict:
        """Everything that determines results (no pool size or output path)."""
        doc = self.to_dict()
        doc["run"].pop("workers")
        doc["run"].pop("output_dir")
        return doc

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.experiment_dict(), sort_keys=True).encode()).hexdigest()


# -- loading ------------------------------------------------------------------

_SEEDLESS = {"rng_seed"}


def _build(cls, doc, section: str, exclude=frozenset()):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InvalidConfig(f"section {section!r} must be a mapping")
    allowed = {f.name for f in fields(cls)} - set(exclude)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise InvalidConfig(f"unknown keys in {section}: {unknown}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise InvalidConfig(f"bad {section} section: {exc}") from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a parsed document and build the typed configuration."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InvalidConfig("configuration must be a mapping")
    sections = {"lattice", "disorder", "sequence", "sweep", "acquisition", "analysis", "run"}
    unknown = sorted(set(doc) - sections)
    if unknown:
        raise InvalidConfig(f"unknown sections: {unknown}")
    try:
        lat = dict(doc.get("lattice") or {})
        if "b0_direction" in lat:
            lat["b0_direction"] = tuple(lat["b0_direction"])
        lattice = _build(LatticeConfig, lat, "lattice", _SEEDLESS)
        disorder = _build(DisorderModel, doc.get("disorder"), "disorder", _SEEDLESS)
        seq = dict(doc.get("sequence") or {})
        if "flip_angle" in seq:
            seq["flip_angle"] = parse_angle(seq["flip_angle"])
        if seq.get("ac_field") is not None:
            seq["ac_field"] = _build(ACField, seq["ac_field"], "sequence.ac_field")
        if "tau" not in seq and "zeta" not in seq:
            seq["zeta"] = 0.066
        sequence = _build(SequenceConfig, seq, "sequence")
        sw = doc.get("sweep")
        sweep = None
        if sw is not None:
            sw = dict(sw)
            sw["values"] = tuple(sw.get("values") or ())
            sweep = _build(SweepConfig, sw, "sweep")
        acq = doc.get("acquisition")
        acquisition = _build(AcquisitionConfig, acq, "acquisition", _SEEDLESS) if acq is not None else None
        analysis = doc.get("analysis") or ()
        if isinstance(analysis, str):
            analysis = (analysis,)
        run = _build(RunConfig, doc.get("run"), "run")
        return ExperimentConfig(lattice=lattice, disorder=disorder, sequence=sequence, sweep=sweep,
                                acquisition=acquisition, analysis=tuple(analysis), run=run)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise InvalidConfig(str(exc)) from None


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    doc = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise InvalidConfig(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise InvalidConfig(f"invalid YAML: {exc}") from None
    cfg = config_from_dict(doc)
    if overrides:
        cfg = replace(cfg, run=replace(cfg.run, **{k: v for k, v in overrides.items() if v is not None}))
    return cfg


# -- realizations -------------------------------------------------------------

@dataclass
class Realization:
    index: int
    lattice: SpinLattice
    coupling: float
    lattice_seed: int
    disorder_seed: int


def realization(cfg: ExperimentConfig, index: int) -> Realization:
    """Lattice, cluster and disorder for one realization; pure in ``(cfg, index)``."""
    ls = derive_seed(cfg.run.master_seed, "lattice", index)
    ds = derive_seed(cfg.run.master_seed, "disorder", index)
    lat = generate_lattice(replace(cfg.lattice, rng_seed=ls))
    lat = sample_disorder(lat, replace(cfg.disorder, rng_seed=ds))
    n = cfg.run.spins
    if n is not None:
        if lat.spin_count < n:
            raise EmptyLattice(f"realization {index} has {lat.spin_count} spins, fewer than {n}")
        lat = extract_cluster(lat, n)
    elif lat.spin_count > MAX_DENSE_SPINS:
        raise InvalidConfig(f"{lat.spin_count} spins is too many for dense simulation; set run.spins")
    return Realization(index=index, lattice=lat, coupling=coupling_scale(lat), lattice_seed=ls, disorder_seed=ds)


def realizations(cfg: ExperimentConfig) -> list[Realization]:
    return [realization(cfg, r) for r in range(cfg.run.realizations)]


def ensemble_coupling(reals) -> float:
    """Median angular coupling scale over realizations (s^-1)."""
    return float(np.median([r.coupling for r in reals]))


def point_sequences(cfg: ExperimentConfig, coupling: float) -> list[SequenceConfig]:
    """Sequence for each sweep point (one entry without a sweep)."""
    base = cfg.sequence
    if cfg.sweep is None:
        return [base]
    out = []
    for v in cfg.sweep.values:
        p = cfg.sweep.parameter
        if p == "tau":
            out.append(replace(base, tau=v))
        elif p == "zeta":
            out.append(replace(base, zeta=v))
        elif p == "theta":
            out.append(replace(base, flip_angle=v))
        else:
            out.append(replace(base, ac_field=replace(base.ac_field, frequency=v)))
    # building the specs validates every point before any compute
    for s in out:
        s.spec(coupling)
    return out


# -- jobs ---------------------------------------------------------------------

@dataclass
class Job:
    point: int
    realization: int
    lattice: SpinLattice
    sequence: SequenceConfig
    coupling: float
    metadata: dict


def run_job(job: Job) -> EvolutionTrace:
    """Survival trace for one (point, realization); single-threaded BLAS."""
    with threadpool_limits(limits=1):
        seq = job.sequence.spec(job.coupling)
        idx = job.sequence.indices()
        h = build_hamiltonians(job.lattice)
        if job.sequence.mode == "fid":
            tr = fid(h, idx * seq.spacing)
            tr.pulse_index = idx
        elif seq.ac_field is not None:
            tr = evolve_with_ac_field(h, seq, indices=idx)
        else:
            tr = evolve_survival(cycle_unitary(h, seq), seq.pulse_count, indices=idx)
    tr.metadata = dict(tr.metadata, **job.metadata)
    return tr


def _safe_job(job: Job):
    try:
        return run_job(job)
    except PrethermalError as exc:
        return exc
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return NumericalError(str(exc))


def run_jobs(jobs, workers: int | None = None) -> list:
    """Run jobs in a bounded process pool; results (or errors) in job order."""
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) <= 1:
        return [_safe_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_safe_job, jobs))


def build_jobs(cfg: ExperimentConfig, reals=None):
    reals = realizations(cfg) if reals is None else reals
    coupling = ensemble_coupling(reals)
    seqs = point_sequences(cfg, coupling)
    jobs = []
    for p, seq in enumerate(seqs):
        spec = seq.spec(coupling)
        for r in reals:
            meta = {
                "point": p,
                "realization": r.index,
                "lattice_seed": r.lattice_seed,
                "disorder_seed": r.disorder_seed,
                "n_spins": r.lattice.spin_count,
                "coupling_scale": coupling,
                "tau_s": spec.spacing,
                "zeta": coupling * spec.spacing,
                "flip_angle": spec.flip_angle,
                "mode": seq.mode,
            }
            if spec.ac_field is not None:
                meta["ac_frequency_hz"] = spec.ac_field.frequency
            jobs.append(Job(point=p, realization=r.index, lattice=r.lattice, sequence=seq,
                            coupling=coupling, metadata=meta))
    return jobs, seqs, coupling


# -- analyses -----------------------------------------------------------------

def plateau_lifetime(trace) -> dict:
    """1/e lifetime normalised to the plateau at the cusp, if one is found.

    Without a cusp the plateau is the first value. A trace that never
    crosses yields its last time as a censored lower bound.
    """
    t, y = np.asarray(trace.times), np.asarray(trace.values)
    plateau, tstar = float(y[0]), None
    try:
        fit = cusp_fit((t, y))
        if fit.improvement > 0.2:
            tstar = fit.cusp_time
            plateau = float(np.interp(tstar, t, y))
    except PrethermalError:
        pass
    sel = t >= (tstar or 0.0)
    life, censored = censored_lifetime((t[sel], y[sel]), plateau)
    return {"lifetime_s": life, "censored": censored, "plateau": plateau, "cusp_time_s": tstar}


def run_analyses(trace, names, tau: float | None = None, theta: float | None = None) -> dict:
    """Reports keyed by analysis name; failures are reported, not raised."""
    out = {}
    for name in names:
        try:
            if name == "stretched":
                out[name] = fit_report(fit_stretched_exponential(trace))
            elif name == "multiexp":
                out[name] = fit_report(fit_multi_exponential(trace))
            elif name == "one_over_e":
                out[name] = plateau_lifetime(trace)
            elif name == "cusp":
                c = cusp_fit(trace)
                out[name] = asdict(c) | {"significant": c.improvement > 0.2}
            elif name == "regimes":
                out[name] = segmentation_report(segment_regimes(trace))
            elif name == "harmonics":
                expected = theta / (2 * math.pi * tau) if theta is not None and tau else None
                out[name] = spectrum_report(harmonic_spectrum(trace, tau, expected_primary=expected))
            else:
                raise InvalidConfig(f"unknown analysis {name!r}")
        except NumericalError as exc:
            out[name] = {"error": type(exc).__name__, "message": str(exc)}
    return out


# -- output -------------------------------------------------------------------

def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1, default=_default) + "\n")


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig, seeds: list, timings: dict, extra: dict | None = None):
    """List every file under ``out`` with its hash, plus seeds and timings."""
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    doc = {
        "software_version": __version__,
        "config_sha256": cfg.digest(),
        "config": cfg.experiment_dict(),
        "invocation": {"workers": cfg.run.workers, "output_dir": cfg.run.output_dir},
        "seeds": seeds,
        "files": [{"path": f, "sha256": _sha256(out / f)} for f in files],
        "timings_s": timings,
    }
    if extra:
        doc.update(extra)
    write_json(out / "manifest.json", doc)


@dataclass
class RunResult:
    output_dir: Path
    coupling: float
    points: list
    failures: list


def _seeds(jobs) -> list:
    return [{"point": j.point, "realization": j.realization, "lattice_seed": j.metadata["lattice_seed"],
             "disorder_seed": j.metadata["disorder_seed"]} for j in jobs]


def execute(cfg: ExperimentConfig, out: Path, per_realization: bool = True) -> RunResult:
    """Run every point and realization and write traces, reports and manifest."""
    t0 = time.perf_counter()
    reals = realizations(cfg)
    jobs, seqs, coupling = build_jobs(cfg, reals)
    t_setup = time.perf_counter() - t0
    results = run_jobs(jobs, cfg.run.workers)
    t_run = time.perf_counter() - t0 - t_setup
    out.mkdir(parents=True, exist_ok=True)
    R = cfg.run.realizations
    points, failures = [], []
    sweep = cfg.sweep is not None
    for p, seq in enumerate(seqs):
        chunk = results[p * R:(p + 1) * R]
        errs = [e for e in chunk if isinstance(e, Exception)]
        pdir = out / f"point_{p:03d}" if sweep else out
        pdir.mkdir(parents=True, exist_ok=True)
        if errs:
            failures.append({"point": p, "error": type(errs[0]).__name__, "message": str(errs[0])})
            points.append(None)
            continue
        if per_realization:
            for tr in chunk:
                write_trace_csv(tr, pdir / f"realization_{tr.metadata['realization']:03d}.csv")
        mean = average_traces(chunk)
        mean.metadata.pop("realization", None)
        mean.metadata.pop("lattice_seed", None)
        mean.metadata.pop("disorder_seed", None)
        write_trace_csv(mean, pdir / "mean.csv")
        spec = seq.spec(coupling)
        reports = run_analyses(mean, cfg.analysis, spec.spacing, spec.flip_angle)
        if reports:
            write_json(pdir / "analysis.json", reports)
        points.append({"point": p, "tau_s": spec.spacing, "zeta": coupling * spec.spacing,
                       "flip_angle": spec.flip_angle, "trace": mean, "reports": reports,
                       "value": cfg.sweep.values[p] if sweep else None})
    extra = {}
    if sweep:
        extra["sweep"] = {"parameter": cfg.sweep.parameter, "values": list(cfg.sweep.values),
                          "failures": failures}
        scaling = sweep_scaling(points)
        if scaling is not None:
            write_json(out / "scaling.json", scaling)
    write_manifest(out, cfg, _seeds(jobs),
                   {"setup": t_setup, "compute": t_run, "total": time.perf_counter() - t0}, extra)
    return RunResult(output_dir=out, coupling=coupling, points=points, failures=failures)


def sweep_scaling(points) -> dict | None:
    """Semilog rate-versus-zeta fit over successful points with stretched fits."""
    pairs = []
    for pt in points:
        if pt is None:
            continue
        rep = pt["reports"].get("stretched")
        if rep is not None and "params" in rep:
            pairs.append((pt["zeta"], rep["params"]["lifetime"]))
        elif rep is None:
            try:
                pairs.append((pt["zeta"], fit_stretched_exponential(pt["trace"]).lifetime))
            except NumericalError:
                continue
    try:
        fit = decay_rate_scaling(pairs, mode="semilog")
    except NumericalError:
        return None
    return fit_report(fit, {"x": "zeta", "y": "ln(1/T)"}) | {"points": [list(p) for p in pairs]}
