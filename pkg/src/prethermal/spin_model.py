"""Dense spin-1/2 many-body operators and the leading-order average Hamiltonian.

Spin operators are Pauli matrices divided by two. Qubit 0 is the leftmost
tensor factor. Hamiltonians are returned in angular frequency (rad/s).

Sign convention: propagators are ``exp(-i H t)`` and the pulse rotation is
``R = exp(-i theta I_x)``. The toggling-frame Hamiltonian after ``j`` pulses
is ``R^-j H R^j = exp(i j theta I_x) H exp(-i j theta I_x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .constants import MAX_DENSE_SPINS
from .errors import DimensionTooLarge, NonPeriodicFlipAngle

TWO_PI = 2 * math.pi

_SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}


def _check_size(n: int, max_spins: int = MAX_DENSE_SPINS) -> None:
    if n > max_spins:
        raise DimensionTooLarge(f"{n} spins exceeds the dense limit of {max_spins}")


@lru_cache(maxsize=64)
def _single(axis: str, j: int, n: int) -> np.ndarray:
    m = np.kron(np.eye(2**j), _SIGMA[axis])
    m = np.kron(m, np.eye(2 ** (n - j - 1)))
    m.setflags(write=False)
    return m


def spin_operator(axis: str, j: int, n: int) -> np.ndarray:
    """``I_{j,axis}`` embedded in ``n`` spins."""
    _check_size(n)
    return _single(axis, j, n).copy()


@lru_cache(maxsize=32)
def _collective(axis: str, n: int) -> np.ndarray:
    if axis == "z":
        # diagonal: sum_j (1/2 - bit_j)
        bits = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
        m = np.diag((0.5 - bits).sum(axis=1)).astype(complex)
    else:
        m = sum(_single(axis, j, n) for j in range(n))
    m.setflags(write=False)
    return m


def collective(axis: str, n: int) -> np.ndarray:
    """``I_axis = sum_j I_{j,axis}``."""
    _check_size(n)
    return _collective(axis, n).copy()


def z_diagonal(n: int) -> np.ndarray:
    """Diagonal of the collective ``I_z`` as a real vector."""
    return _collective("z", n).diagonal().real.copy()


@dataclass
class HamiltonianSet:
    h_dd: np.ndarray
    h_z: np.ndarray
    n_spins: int

    @property
    def h_total(self) -> np.ndarray:
        return self.h_dd + self.h_z

    @property
    def dimension(self) -> int:
        return 2**self.n_spins


@dataclass
class AverageHamiltonian:
    h_f0: np.ndarray
    cycle_pulses: int
    flip_angle: float


def _pair_term(j, k, n, weights):
    wz, wy, wx = weights
    return (
        wz * _single("z", j, n) @ _single("z", k, n)
        + wy * _single("y", j, n) @ _single("y", k, n)
        + wx * _single("x", j, n) @ _single("x", k, n)
    )


def _coupled_sum(lattice, weights, max_spins):
    n = lattice.spin_count
    _check_size(n, max_spins)
    h = np.zeros((2**n, 2**n), dtype=complex)
    for (j, k), d in lattice.couplings.items():
        if d != 0.0:
            h += TWO_PI * d * _pair_term(j, k, n, weights)
    return h


def build_dipolar_hamiltonian(lattice, max_spins: int = MAX_DENSE_SPINS) -> np.ndarray:
    """``sum_{j<k} 2 pi d_jk (3 I_jz I_kz - I_j . I_k)`` in rad/s."""
    return _coupled_sum(lattice, (2.0, -1.0, -1.0), max_spins)


def flip_flop_hamiltonian(lattice, max_spins: int = MAX_DENSE_SPINS) -> np.ndarray:
    """Closed form ``sum 2 pi d_jk (3/2 (I_jz I_kz + I_jy I_ky) - I_j . I_k)``.

    This is what the dipolar Hamiltonian averages to under a pi/2 train
    about x.
    """
    return _coupled_sum(lattice, (0.5, 0.5, -1.0), max_spins)


def build_onsite_hamiltonian(lattice, max_spins: int = MAX_DENSE_SPINS) -> np.ndarray:
    """``sum_j 2 pi c_j I_jz`` in rad/s (diagonal)."""
    n = lattice.spin_count
    _check_size(n, max_spins)
    bits = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    diag = ((0.5 - bits) * (TWO_PI * lattice.disorder_fields)[None, :]).sum(axis=1)
    return np.diag(diag).astype(complex)


def build_hamiltonians(lattice, max_spins: int = MAX_DENSE_SPINS) -> HamiltonianSet:
    return HamiltonianSet(
        h_dd=build_dipolar_hamiltonian(lattice, max_spins),
        h_z=build_onsite_hamiltonian(lattice, max_spins),
        n_spins=lattice.spin_count,
    )


def collective_rotation(theta: float, axis: str, n: int) -> np.ndarray:
    """``exp(-i theta I_axis)`` as a product of single-spin rotations."""
    _check_size(n)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    one = {
        "x": np.array([[c, -1j * s], [-1j * s, c]]),
        "y": np.array([[c, -s], [s, c]], dtype=complex),
        "z": np.array([[c - 1j * s, 0], [0, c + 1j * s]]),
    }[axis]
    u = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        u = np.kron(u, one)
    return u


def toggled_hamiltonian(h: np.ndarray, theta: float, j: int) -> np.ndarray:
    n = int(round(math.log2(h.shape[0])))
    r = collective_rotation(j * theta, "x", n)
    return r.conj().T @ h @ r


def cycle_length(theta: float, max_pulses: int = 10_000, tol: float = 1e-9) -> int:
    """Smallest ``N_k`` with ``N_k * theta = 0 (mod 2 pi)``."""
    frac = Fraction(theta / TWO_PI).limit_denominator(max_pulses)
    if abs(float(frac) - theta / TWO_PI) > tol:
        raise NonPeriodicFlipAngle(f"no cycle of at most {max_pulses} pulses for theta={theta!r}")
    return frac.denominator


def average_hamiltonian(h: np.ndarray, theta: float, max_pulses: int = 10_000) -> AverageHamiltonian:
    """Cycle-normalised toggling-frame average ``(1/N_k) sum_{j=1}^{N_k} H^(j)``."""
    nk = cycle_length(theta, max_pulses)
    n = int(round(math.log2(h.shape[0])))
    r = collective_rotation(theta, "x", n)
    acc = np.zeros_like(h, dtype=complex)
    hj = h.astype(complex)
    for _ in range(nk):
        hj = r.conj().T @ hj @ r
        acc += hj
    return AverageHamiltonian(h_f0=acc / nk, cycle_pulses=nk, flip_angle=theta)


def magnus_parameter(coupling: float, tau: float) -> float:
    """Expansion parameter ``zeta = 2 pi J / omega`` with ``omega = 2 pi / tau``.

    ``coupling`` is the angular coupling scale J in s^-1, so ``zeta = J tau``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return coupling * tau


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a @ b - b @ a))
