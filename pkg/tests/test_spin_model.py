import itertools
import math

import numpy as np
import pytest
import scipy.linalg as sla

from prethermal.errors import DimensionTooLarge, NonPeriodicFlipAngle
from prethermal.lattice import SpinLattice
from prethermal.spin_model import (
    average_hamiltonian,
    build_dipolar_hamiltonian,
    build_hamiltonians,
    build_onsite_hamiltonian,
    collective,
    collective_rotation,
    commutator_norm,
    cycle_length,
    flip_flop_hamiltonian,
    magnus_parameter,
    spin_operator,
    toggled_hamiltonian,
)

from conftest import random_cluster

SX = np.array([[0, 1], [1, 0]]) / 2
SY = np.array([[0, -1j], [1j, 0]]) / 2
SZ = np.array([[1, 0], [0, -1]]) / 2


def test_two_spin_spectrum():
    d_hz = 850.0
    lat = SpinLattice(positions=[[0, 0, 0], [1, 0, 0]], couplings={(0, 1): d_hz}, disorder_fields=[0, 0])
    d = 2 * math.pi * d_hz
    w = np.linalg.eigvalsh(build_dipolar_hamiltonian(lat))
    assert np.allclose(np.sort(w), np.sort([d / 2, d / 2, 0, -d]), atol=1e-9 * d)


def test_zero_couplings_give_zero():
    lat = SpinLattice(positions=np.eye(3), couplings={(0, 1): 0.0, (0, 2): 0.0, (1, 2): 0.0},
                      disorder_fields=[0, 0, 0])
    assert not np.any(build_dipolar_hamiltonian(lat))
    assert not np.any(build_onsite_hamiltonian(lat))


def test_hamiltonians_hermitian_traceless(cluster6):
    h = build_hamiltonians(cluster6)
    for m in (h.h_dd, h.h_z):
        assert np.linalg.norm(m - m.conj().T) < 1e-10
        assert abs(np.trace(m)) < 1e-9 * np.linalg.norm(m)
    assert h.dimension == 64


def test_single_spin_onsite():
    lat = SpinLattice(positions=[[0, 0, 0]], couplings={}, disorder_fields=[1000.0])
    w = np.linalg.eigvalsh(build_onsite_hamiltonian(lat))
    assert np.allclose(w, [-math.pi * 1e3, math.pi * 1e3])


def test_three_spin_onsite_enumeration():
    c = np.array([120.0, -75.0, 33.0])
    lat = SpinLattice(positions=np.eye(3), couplings={}, disorder_fields=c)
    diag = build_onsite_hamiltonian(lat).diagonal().real
    # basis state index b has spin j up when bit (n-1-j) is 0
    expect = [sum((0.5 if s == 0 else -0.5) * 2 * math.pi * cj for s, cj in zip(bits, c))
              for bits in itertools.product((0, 1), repeat=3)]
    assert np.allclose(diag, expect, rtol=0, atol=1e-9)


def test_dimension_cap():
    lat = SpinLattice(positions=np.arange(39.0).reshape(13, 3), couplings={}, disorder_fields=np.zeros(13))
    with pytest.raises(DimensionTooLarge):
        build_dipolar_hamiltonian(lat)


def test_spin_operator_embedding():
    op = spin_operator("y", 1, 3)
    assert np.allclose(op, np.kron(np.kron(np.eye(2), SY), np.eye(2)))


def test_rotation_identity_and_double_cover():
    for n in (1, 2, 3):
        assert np.allclose(collective_rotation(0.0, "x", n), np.eye(2**n))
        assert np.allclose(collective_rotation(2 * math.pi, "x", n), (-1) ** n * np.eye(2**n), atol=1e-14)


@pytest.mark.parametrize("axis,sigma", [("x", SX), ("y", SY), ("z", SZ)])
def test_rotation_matches_expm(axis, sigma):
    theta = 0.731
    assert np.allclose(collective_rotation(theta, axis, 1), sla.expm(-1j * theta * sigma))
    u = collective_rotation(theta, axis, 3)
    assert np.linalg.norm(u.conj().T @ u - np.eye(8)) < 1e-12


def test_pi_rotation_flips_z():
    r = collective_rotation(math.pi, "x", 1)
    assert np.allclose(r.conj().T @ SZ @ r, -SZ)


def test_toggled_z_at_quarter_turn():
    # R^dagger I_z R with R = exp(-i pi/2 I_x), written out by hand
    r = np.array([[1, -1j], [-1j, 1]]) / math.sqrt(2)
    expect = r.conj().T @ SZ @ r
    got = toggled_hamiltonian(SZ.astype(complex), math.pi / 2, 1)
    assert np.allclose(got, expect)
    assert np.allclose(got, -SY) or np.allclose(got, SY)


def test_toggled_full_turn_and_spectrum(cluster6):
    h = build_hamiltonians(cluster6).h_total
    assert np.allclose(toggled_hamiltonian(h, math.pi / 2, 4), h, atol=1e-9 * np.abs(h).max())
    hj = toggled_hamiltonian(h, 0.4, 3)
    assert np.allclose(np.linalg.eigvalsh(hj), np.linalg.eigvalsh(h), atol=1e-8 * np.abs(h).max())
    assert np.linalg.norm(hj) == pytest.approx(np.linalg.norm(h), rel=1e-12)


def test_cycle_length():
    assert cycle_length(math.pi / 2) == 4
    assert cycle_length(math.pi / 4) == 8
    assert cycle_length(2 * math.pi / 3) == 3
    assert cycle_length(2 * math.pi) == 1
    with pytest.raises(NonPeriodicFlipAngle):
        cycle_length(1.0)


def test_average_matches_flip_flop(cluster6):
    hdd = build_dipolar_hamiltonian(cluster6)
    avg = average_hamiltonian(hdd, math.pi / 2)
    ff = flip_flop_hamiltonian(cluster6)
    assert avg.cycle_pulses == 4
    assert np.linalg.norm(avg.h_f0 - ff) / np.linalg.norm(ff) < 1e-10


def test_average_conserves_ix(cluster6):
    h = build_hamiltonians(cluster6)
    avg = average_hamiltonian(h.h_total, math.pi / 2).h_f0
    assert commutator_norm(collective("x", 6), avg) < 1e-10 * np.linalg.norm(avg)


@pytest.mark.parametrize("theta", [math.pi / 2, math.pi / 4, 2 * math.pi / 3])
def test_onsite_averages_out(cluster6, theta):
    hz = build_onsite_hamiltonian(cluster6)
    assert np.linalg.norm(average_hamiltonian(hz, theta).h_f0) < 1e-10 * np.linalg.norm(hz)


def test_average_cyclic_shift(cluster6):
    h = build_hamiltonians(cluster6).h_total
    shifted = toggled_hamiltonian(h, math.pi / 2, 1)
    a = average_hamiltonian(h, math.pi / 2).h_f0
    b = average_hamiltonian(shifted, math.pi / 2).h_f0
    assert np.linalg.norm(a - b) < 1e-10 * np.linalg.norm(a)


def test_magnus_parameter():
    assert magnus_parameter(660.0, 99.28e-6) == pytest.approx(0.0655, abs=5e-5)
    assert magnus_parameter(0.0, 1e-4) == 0.0
    assert magnus_parameter(660.0, 1e-15) == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(ValueError):
        magnus_parameter(660.0, 0.0)


def test_eq1_on_many_instances():
    for seed in range(5):
        lat = random_cluster(5, 100 + seed)
        avg = average_hamiltonian(build_dipolar_hamiltonian(lat), math.pi / 2).h_f0
        ff = flip_flop_hamiltonian(lat)
        assert np.linalg.norm(avg - ff) < 1e-10 * np.linalg.norm(ff)
