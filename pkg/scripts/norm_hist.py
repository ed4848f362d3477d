"""Norm histograms of Gaussian draws with decaying component variances sigma_j = eta / j**nu."""
import argparse
from pathlib import Path

from lmcpf.diagnostics import DecayModel, simulate_norm_histogram
from lmcpf.experiment import write_csv

PAIRS = [(4, 0), (15, 0.5), (30, 1), (40, 2), (50, 3)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=40)
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--bin-width", type=float, default=1.0)
    ap.add_argument("--out", default="out/norm_hist")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed, (eta, nu) in enumerate(PAIRS):
        h = simulate_norm_histogram(DecayModel(eta, nu), args.dim, args.draws, seed, args.bin_width)
        write_csv(out / f"eta{eta}_nu{nu}.csv", ("left", "right", "count"),
                  zip(h.edges[:-1], h.edges[1:], h.counts))
        print(f"eta={eta:<3} nu={nu:<4} mean={h.mean:8.3f} median={h.median:8.3f}")


if __name__ == "__main__":
    main()
