"""Regenerate the bundled five-domain toy dataset under data/toy/."""

import argparse
from pathlib import Path

from geospot.synthetic import write_toy_dataset

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "toy"))
    ap.add_argument("--n-samples", type=int, default=120)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--binary", action="store_true", help="write embeddings in the GSPT binary format")
    args = ap.parse_args()
    path = write_toy_dataset(args.out, n_samples=args.n_samples, seed=args.seed, binary=args.binary)
    print(f"wrote {path}")
