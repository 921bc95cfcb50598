"""Integrated signal against flip angle; dips mark theta = pi and 2 pi."""

import math

import numpy as np
from scipy.signal import argrelmin

from _common import ensemble, parser, write_rows
from prethermal.propagation import PulseSequenceSpec, flip_angle_sweep


def main():
    p = parser(__doc__, spins=6, realizations=4)
    p.add_argument("--zeta", type=float, default=0.066)
    p.add_argument("--pulses", type=int, default=400)
    p.add_argument("--step", type=float, default=0.05)
    args = p.parse_args()
    reals, hams, J = ensemble(args)
    thetas = np.append(np.arange(1, int(2 * math.pi / args.step) + 1) * args.step, 2 * math.pi)
    template = PulseSequenceSpec(math.pi / 2, args.zeta / J, pulse_count=args.pulses)
    total = sum(flip_angle_sweep(h, template, thetas)[1] for h in hams) / len(hams)
    print("local minima (rad):", np.round(thetas[argrelmin(total)[0]], 3).tolist())
    write_rows(args.output / "flip_angle_dips.csv", ["theta", "integrated_signal"], zip(thetas, total))


if __name__ == "__main__":
    main()
