"""Free induction decay against the driven pi/2 train on one ensemble."""

import math

import numpy as np

from _common import ensemble, parser, write_rows
from prethermal.analysis import censored_lifetime, one_over_e_lifetime
from prethermal.experiment import plateau_lifetime
from prethermal.propagation import PulseSequenceSpec, average_traces, cycle_unitary, evolve_survival, fid, \
    log_pulse_indices


def main():
    p = parser(__doc__)
    p.add_argument("--zeta", type=float, default=0.02)
    p.add_argument("--pulses", type=int, default=10**7)
    args = p.parse_args()
    reals, hams, J = ensemble(args)
    tau = args.zeta / J
    free = average_traces([fid(h, np.linspace(0, 50 / J, 2001)) for h in hams])
    idx = log_pulse_indices(args.pulses, 300)
    seq = PulseSequenceSpec(math.pi / 2, tau, pulse_count=args.pulses)
    driven = average_traces([evolve_survival(cycle_unitary(h, seq), args.pulses, indices=idx) for h in hams])
    t_fid = one_over_e_lifetime(free)
    d = plateau_lifetime(driven)
    print(f"J = {J:.1f} s^-1, tau = {tau * 1e6:.2f} us")
    print(f"FID 1/e: {t_fid * 1e3:.3f} ms ({t_fid * J:.2f}/J)")
    bound = ">=" if d["censored"] else "="
    print(f"driven 1/e {bound} {d['lifetime_s']:.3f} s ({d['lifetime_s'] * J:.3g}/J), "
          f"ratio {bound} {d['lifetime_s'] / t_fid:.3g}")
    write_rows(args.output / "fid.csv", ["time_s", "survival"], zip(free.times, free.survival))
    write_rows(args.output / "driven.csv", ["time_s", "survival"], zip(driven.times, driven.survival))


if __name__ == "__main__":
    main()
