"""Helpers shared by the experiment scripts."""

import argparse
import csv
from pathlib import Path

from prethermal.experiment import ExperimentConfig, RunConfig, ensemble_coupling, realizations
from prethermal.spin_model import build_hamiltonians


def parser(description, spins=8, realizations=8):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--spins", type=int, default=spins)
    p.add_argument("--realizations", type=int, default=realizations)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=Path("results"))
    return p


def ensemble(args):
    """Realizations, their Hamiltonians and the ensemble coupling scale J (s^-1)."""
    cfg = ExperimentConfig(run=RunConfig(spins=args.spins, realizations=args.realizations, master_seed=args.seed))
    reals = realizations(cfg)
    return reals, [build_hamiltonians(r.lattice) for r in reals], ensemble_coupling(reals)


def write_rows(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}")
