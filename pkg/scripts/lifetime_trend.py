"""Plateau lifetime against zeta = J tau for the pi/2 drive."""

import math

from _common import ensemble, parser, write_rows
from prethermal.analysis import fit_stretched_exponential
from prethermal.errors import NumericalError
from prethermal.experiment import plateau_lifetime
from prethermal.propagation import PulseSequenceSpec, average_traces, cycle_unitary, evolve_survival, \
    log_pulse_indices


def main():
    p = parser(__doc__, realizations=16)
    p.add_argument("--zetas", type=float, nargs="+", default=[0.02, 0.05, 0.1, 0.2, 0.4])
    p.add_argument("--pulses", type=int, default=10**7)
    args = p.parse_args()
    reals, hams, J = ensemble(args)
    idx = log_pulse_indices(args.pulses, 300)
    rows = []
    for z in args.zetas:
        seq = PulseSequenceSpec(math.pi / 2, z / J, pulse_count=args.pulses)
        tr = average_traces([evolve_survival(cycle_unitary(h, seq), args.pulses, indices=idx) for h in hams])
        d = plateau_lifetime(tr)
        try:
            fit = fit_stretched_exponential(tr)
            alpha, life = fit.alpha, fit.lifetime
        except NumericalError:
            alpha = life = float("nan")
        rows.append((z, d["lifetime_s"] * J, int(d["censored"]), d["plateau"], tr.survival[-1], life * J, alpha))
        print(f"zeta={z:<5} 1/e {'>=' if d['censored'] else '='} {d['lifetime_s'] * J:.3g}/J "
              f"plateau={d['plateau']:.3f} final s={tr.survival[-1]:.3f}")
    write_rows(args.output / "lifetime_trend.csv",
               ["zeta", "lifetime_J", "censored", "plateau", "final_survival", "stretched_lifetime_J", "alpha"], rows)


if __name__ == "__main__":
    main()
