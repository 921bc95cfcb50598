"""Regime-I spectra and harmonic slopes across flip angles."""

import math

from _common import ensemble, parser, write_rows
from prethermal.analysis import harmonic_slope_fit, harmonic_spectrum
from prethermal.errors import TooFewPoints
from prethermal.propagation import PulseSequenceSpec, average_traces, cycle_unitary, evolve_survival


def main():
    p = parser(__doc__, spins=6)
    p.add_argument("--zeta", type=float, default=0.01)
    p.add_argument("--pulses", type=int, default=512)
    args = p.parse_args()
    reals, hams, J = ensemble(args)
    tau = args.zeta / J
    spectra, rows = [], []
    for k in (6, 4, 3, 2):
        theta = math.pi / k
        seq = PulseSequenceSpec(theta, tau, pulse_count=args.pulses)
        tr = average_traces([evolve_survival(cycle_unitary(h, seq), args.pulses) for h in hams])
        sp = harmonic_spectrum(tr, tau)
        spectra.append((theta, sp))
        rows += [(theta, f * tau, a, n) for f, a, n in zip(sp.frequencies, sp.amplitudes, sp.harmonics)]
        peaks = ", ".join(f"n={n}: {f * tau:.4f}" for f, n in zip(sp.frequencies, sp.harmonics))
        print(f"theta=pi/{k}: predicted f1 tau = {1 / (2 * k):.4f}; peaks {peaks}")
    write_rows(args.output / "harmonics.csv", ["theta", "f_tau", "amplitude", "harmonic"], rows)
    try:
        fit = harmonic_slope_fit(spectra)
        print("slopes", {n: round(s, 3) for n, s in fit.slopes.items()})
        print("ratios to n=1", {n: round(r, 3) for n, r in fit.ratios.items()})
    except TooFewPoints as exc:
        print(f"no slope fit: {exc}")


if __name__ == "__main__":
    main()
