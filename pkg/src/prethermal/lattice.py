"""Randomly occupied 13C sites on the diamond lattice and their couplings.

A conventional diamond cell is an FCC lattice with a two-atom basis, eight
atoms per cube. Each site of a ``K x K x K`` supercell is occupied
independently with probability equal to the isotope abundance. With
``periodic=True`` distances use the minimum image, which removes the surface
deficit of partners from bulk statistics. Pairs closer than the coupling
cutoff receive the secular dipolar coupling

    d_jk = (mu0 / 4pi) hbar gamma^2 (3 cos^2 beta_jk - 1) / r_jk^3,

reported in Hz. On-site fields ``c_j`` (Hz) are drawn separately from a
:class:`DisorderModel`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .constants import (
    DIAMOND_LATTICE_CONSTANT_NM,
    DIPOLAR_PREFACTOR_HZ_NM3,
    MIN_SEPARATION_NM,
    REFERENCE_DISORDER_VARIANCE_KHZ2,
)
from .errors import CoincidentSites, EmptyLattice, InvalidConfig, TooManySpins

_FCC = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
DIAMOND_BASIS = np.vstack([_FCC, _FCC + 0.25])

# Nearest-neighbour bond directions of the diamond lattice.
NN_BONDS = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / math.sqrt(3.0)


@dataclass(frozen=True)
class LatticeConfig:
    abundance: float = 0.01
    supercell_extent: int = 8
    lattice_constant: float = DIAMOND_LATTICE_CONSTANT_NM
    b0_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    max_spins: int = 4096
    coupling_cutoff_radius: float | None = None
    periodic: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise InvalidConfig(f"abundance must lie in [0, 1], got {self.abundance}")
        if int(self.supercell_extent) != self.supercell_extent or self.supercell_extent < 1:
            raise InvalidConfig("supercell_extent must be a positive integer")
        if self.lattice_constant <= 0:
            raise InvalidConfig("lattice_constant must be positive")
        b = np.asarray(self.b0_direction, dtype=float)
        if b.shape != (3,) or abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise InvalidConfig("b0_direction must be a unit 3-vector")
        if self.max_spins < 1:
            raise InvalidConfig("max_spins must be positive")
        if self.coupling_cutoff_radius is not None and self.coupling_cutoff_radius <= 0:
            raise InvalidConfig("coupling_cutoff_radius must be positive or None")
        if self.periodic and self.cutoff > 0.5 * self.box_length:
            raise InvalidConfig("a periodic cutoff may not exceed half the box length")
        object.__setattr__(self, "b0_direction", tuple(float(x) for x in b))

    @property
    def cutoff(self) -> float:
        if self.coupling_cutoff_radius is not None:
            return self.coupling_cutoff_radius
        return 0.5 * self.supercell_extent * self.lattice_constant

    @property
    def box_length(self) -> float:
        return self.supercell_extent * self.lattice_constant

    @property
    def expected_spins(self) -> float:
        return self.abundance * len(DIAMOND_BASIS) * self.supercell_extent**3


@dataclass(frozen=True)
class DisorderModel:
    """Static Gaussian on-site fields; ``variance`` is in kHz^2."""

    variance: float = REFERENCE_DISORDER_VARIANCE_KHZ2
    distribution: str = "gaussian"
    rng_seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise InvalidConfig("disorder variance must be non-negative")
        if self.distribution not in ("gaussian", "none"):
            raise InvalidConfig(f"unknown disorder distribution {self.distribution!r}")


@dataclass(eq=False)
class SpinLattice:
    positions: np.ndarray
    couplings: dict[tuple[int, int], float]
    disorder_fields: np.ndarray
    config: LatticeConfig = field(default_factory=LatticeConfig)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.disorder_fields = np.asarray(self.disorder_fields, dtype=float)
        if self.disorder_fields.shape != (self.spin_count,):
            raise InvalidConfig("disorder_fields must have one entry per spin")
        for j, k in self.couplings:
            if not 0 <= j < k < self.spin_count:
                raise InvalidConfig(f"coupling index pair {(j, k)} is not ordered j < k")

    @property
    def spin_count(self) -> int:
        return len(self.positions)

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric ``(n, n)`` array of couplings in Hz, zero diagonal."""
        n = self.spin_count
        d = np.zeros((n, n))
        for (j, k), v in self.couplings.items():
            d[j, k] = d[k, j] = v
        return d

    def scaled(self, factor: float) -> SpinLattice:
        return replace(self, couplings={p: factor * v for p, v in self.couplings.items()})

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "couplings": [[j, k, d] for (j, k), d in sorted(self.couplings.items())],
            "disorder_Hz": self.disorder_fields.tolist(),
            "config": asdict(self.config) | {"b0_direction": list(self.config.b0_direction)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SpinLattice:
        cfg = dict(doc.get("config", {}))
        if "b0_direction" in cfg:
            cfg["b0_direction"] = tuple(cfg["b0_direction"])
        return cls(
            positions=np.array(doc["positions"], dtype=float).reshape(-1, 3),
            couplings={(int(j), int(k)): float(d) for j, k, d in doc["couplings"]},
            disorder_fields=np.array(doc["disorder_Hz"], dtype=float),
            config=LatticeConfig(**cfg),
        )


def dipolar_coupling(r_j, r_k, b0_direction=(1.0, 0.0, 0.0)) -> float:
    """Secular dipolar coupling between two 13C spins, in Hz.

    Parameters
    ----------
    r_j, r_k : array_like
        Positions in nm.
    b0_direction : array_like
        Unit vector along the static field.
    """
    r = np.asarray(r_k, dtype=float) - np.asarray(r_j, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist < MIN_SEPARATION_NM:
        raise CoincidentSites(f"sites separated by {dist:.3g} nm")
    cos_beta = float(np.dot(r, np.asarray(b0_direction, dtype=float))) / dist
    return DIPOLAR_PREFACTOR_HZ_NM3 * (3.0 * cos_beta**2 - 1.0) / dist**3


def _pair_couplings(positions: np.ndarray, b0: np.ndarray, cutoff: float, box: float | None = None) -> dict:
    n = len(positions)
    if n < 2:
        return {}
    pairs = cKDTree(positions, boxsize=box).query_pairs(cutoff, output_type="ndarray")
    if len(pairs) == 0:
        return {}
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    r = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    if box is not None:
        r -= box * np.round(r / box)
    dist = np.linalg.norm(r, axis=1)
    if np.any(dist < MIN_SEPARATION_NM):
        raise CoincidentSites("two occupied sites coincide")
    cos_beta = r @ b0 / dist
    d = DIPOLAR_PREFACTOR_HZ_NM3 * (3.0 * cos_beta**2 - 1.0) / dist**3
    return {(int(j), int(k)): float(v) for (j, k), v in zip(pairs, d)}


def lattice_sites(extent: int, lattice_constant: float = DIAMOND_LATTICE_CONSTANT_NM) -> np.ndarray:
    """All diamond sites of an open ``extent^3`` supercell, in nm."""
    cells = np.stack(np.meshgrid(*[np.arange(extent)] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    return ((cells[:, None, :] + DIAMOND_BASIS[None]) * lattice_constant).reshape(-1, 3)


def generate_lattice(config: LatticeConfig) -> SpinLattice:
    """Occupy diamond sites at random and compute the coupling network.

    Raises :class:`TooManySpins` when the expected occupation exceeds
    ``config.max_spins``; the realised count is never truncated.
    """
    if config.expected_spins > config.max_spins:
        raise TooManySpins(
            f"expected {config.expected_spins:.1f} spins exceeds max_spins={config.max_spins}"
        )
    rng = np.random.default_rng(config.rng_seed)
    sites = lattice_sites(config.supercell_extent, config.lattice_constant)
    positions = sites[rng.random(len(sites)) < config.abundance]
    b0 = np.asarray(config.b0_direction)
    return SpinLattice(
        positions=positions,
        couplings=_pair_couplings(positions, b0, config.cutoff, config.box_length if config.periodic else None),
        disorder_fields=np.zeros(len(positions)),
        config=config,
    )


def extract_cluster(lattice: SpinLattice, n_spins: int, center=None) -> SpinLattice:
    """Keep the ``n_spins`` occupied sites nearest to ``center``.

    The default centre is the middle of the supercell. All pairs inside the
    cluster are coupled (no cutoff, open boundaries), and the disorder fields
    travel with their spins.
    """
    if n_spins < 1 or n_spins > lattice.spin_count:
        raise EmptyLattice(f"cannot take {n_spins} spins from a lattice of {lattice.spin_count}")
    cfg = lattice.config
    if center is None:
        center = np.full(3, 0.5 * cfg.supercell_extent * cfg.lattice_constant)
    dist = np.linalg.norm(lattice.positions - np.asarray(center, dtype=float), axis=1)
    keep = np.sort(np.argsort(dist, kind="stable")[:n_spins])
    positions = lattice.positions[keep]
    return SpinLattice(
        positions=positions,
        couplings=_pair_couplings(positions, np.asarray(cfg.b0_direction), np.inf),
        disorder_fields=lattice.disorder_fields[keep],
        config=cfg,
    )


def strongest_couplings(lattice: SpinLattice) -> np.ndarray:
    """Per-spin maximum of ``|d_jk|`` over partners (Hz); 0 for isolated spins."""
    return np.abs(lattice.coupling_matrix()).max(axis=1) if lattice.spin_count else np.zeros(0)


def median_coupling(lattice: SpinLattice) -> float:
    """Median over spins of each spin's strongest coupling magnitude, in Hz."""
    if lattice.spin_count < 2:
        raise EmptyLattice("median coupling needs at least two spins")
    return float(np.median(strongest_couplings(lattice)))


def coupling_scale(lattice: SpinLattice) -> float:
    """Angular coupling scale ``J = 2 pi * median_coupling`` in s^-1.

    This is the scale that enters ``zeta = J tau``.
    """
    return 2 * math.pi * median_coupling(lattice)


def sample_disorder(lattice: SpinLattice, model: DisorderModel) -> SpinLattice:
    n = lattice.spin_count
    if model.distribution == "none" or model.variance == 0:
        fields = np.zeros(n)
    else:
        rng = np.random.default_rng(model.rng_seed)
        fields = rng.normal(0.0, math.sqrt(model.variance) * 1e3, size=n)
    return replace(lattice, disorder_fields=fields)


def save_lattice(lattice: SpinLattice, path) -> None:
    Path(path).write_text(json.dumps(lattice.to_dict(), sort_keys=True, indent=1) + "\n")


def load_lattice(path) -> SpinLattice:
    return SpinLattice.from_dict(json.loads(Path(path).read_text()))
