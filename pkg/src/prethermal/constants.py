"""Physical constants and default parameters.

All frequencies that describe couplings and on-site fields are stored in Hz
(cycles per second). Conversion to angular frequency happens only when
Hamiltonians are assembled.
"""

import math

MU0_OVER_4PI = 1e-7  # T^2 m^3 / J
HBAR = 1.054571817e-34  # J s
GAMMA_13C_HZ_PER_T = 10.7e6  # gamma / 2pi
GAMMA_13C = 2 * math.pi * GAMMA_13C_HZ_PER_T  # rad s^-1 T^-1

DIAMOND_LATTICE_CONSTANT_NM = 0.3567

# Dipolar prefactor (mu0/4pi) hbar gamma^2 / 2pi, in Hz nm^3.
DIPOLAR_PREFACTOR_HZ_NM3 = MU0_OVER_4PI * HBAR * GAMMA_13C**2 / (2 * math.pi) * 1e27

MIN_SEPARATION_NM = 1e-4
MAX_DENSE_SPINS = 12

# Reference scales of the 13C experiment. The coupling scale and the on-site
# field variance are quoted as angular frequencies (s^-1, s^-2).
REFERENCE_COUPLING_SCALE = 660.0  # s^-1
REFERENCE_ZETA = 0.066
REFERENCE_DISORDER_VARIANCE_ANGULAR = 0.4e6  # s^-2
# Same variance expressed for fields stored in Hz, in kHz^2.
REFERENCE_DISORDER_VARIANCE_KHZ2 = REFERENCE_DISORDER_VARIANCE_ANGULAR / (2 * math.pi) ** 2 / 1e6

HETERODYNE_FREQUENCY_HZ = 20e6
SAMPLE_INTERVAL_S = 1e-9
POLARIZATION_ENHANCEMENT = 223.0
