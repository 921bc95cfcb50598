"""Decay rate against AC field frequency at tau = 100 us."""

import math

import numpy as np

from _common import ensemble, parser, write_rows
from prethermal.analysis import censored_lifetime
from prethermal.propagation import ACField, PulseSequenceSpec, average_traces, evolve_with_ac_field


def main():
    p = parser(__doc__, spins=6, realizations=3)
    p.add_argument("--tau", type=float, default=100e-6)
    p.add_argument("--amplitude", type=float, default=40.0, help="AC field amplitude in Hz")
    p.add_argument("--pulses", type=int, default=600)
    p.add_argument("--frequencies", type=float, nargs="+", default=[1750, 2125, 2500, 2875, 3250])
    p.add_argument("--phases", type=int, default=4)
    args = p.parse_args()
    reals, hams, J = ensemble(args)
    rows = []
    for f in args.frequencies:
        traces = [evolve_with_ac_field(h, PulseSequenceSpec(math.pi / 2, args.tau, pulse_count=args.pulses,
                                                            ac_field=ACField(args.amplitude, f, ph)))
                  for h in hams for ph in np.arange(args.phases) * 2 * math.pi / args.phases]
        life, censored = censored_lifetime(average_traces(traces))
        rows.append((f, 1 / life, int(censored)))
        print(f"f_ac={f / 1e3:.3f} kHz rate {'<=' if censored else '='} {1 / life:.2f} s^-1")
    write_rows(args.output / "ac_sensing.csv", ["f_ac_hz", "rate_per_s", "rate_is_upper_bound"], rows)


if __name__ == "__main__":
    main()
