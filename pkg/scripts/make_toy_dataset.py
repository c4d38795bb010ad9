#!/usr/bin/env python3
"""Generate the synthetic unpaired-enhancement dataset.

Writes source/ (distorted), target/ (clean, different scenes) and the
held-out pairs used for scoring into --out.
"""

import argparse

from retouch.toydata import write_toy_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--n-source", type=int, default=200)
    ap.add_argument("--n-target", type=int, default=200)
    ap.add_argument("--n-holdout", type=int, default=50)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    dirs = write_toy_dataset(
        args.out, n_source=args.n_source, n_target=args.n_target,
        n_holdout=args.n_holdout, size=args.size, seed=args.seed,
    )
    for name, path in dirs.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
