"""Exact vs approximate particle weights as kappa sweeps from 0 to 5.

Takes one analysis point of a short LMCPF run and writes the curve to CSV.
"""
import argparse
from pathlib import Path

import numpy as np

from lmcpf.config import ExperimentConfig
from lmcpf.experiment import compare_weights_curve, instance_from_record, run_cycle_experiment, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cycles", type=int, default=50)
    ap.add_argument("--point", type=int, default=0)
    ap.add_argument("--members", type=int, default=10)
    ap.add_argument("--out", default="out/weights_curve.csv")
    args = ap.parse_args()

    cfg = ExperimentConfig(members=args.members, cycles=args.cycles, spinup_cycles=0)
    res = run_cycle_experiment(cfg)
    q = instance_from_record(cfg, res.records[-1], args.point)
    rows = compare_weights_curve(q, np.linspace(1e-3, 5.0, 101))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, ("kappa", "member", "exact", "approx"), rows)

    L = q.L
    for kappa_idx in (0, 20, 50, 100):
        block = rows[kappa_idx * L:(kappa_idx + 1) * L]
        gap = max(abs(r[2] - r[3]) for r in block)
        print(f"kappa={block[0][0]:.3f} max|exact-approx|={gap:.4f}")


if __name__ == "__main__":
    main()
