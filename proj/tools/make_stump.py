"""Writes the 2-D stump fixture: x0, x1 ~ U[0, 10], label = 1 iff x0 > 5."""
import argparse
import csv

import numpy as np


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="data/stump_2d.csv")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    x = rng.uniform(0.0, 10.0, size=(args.rows, 2))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x0", "x1", "label"])
        for a, b in x:
            w.writerow([repr(float(a)), repr(float(b)), int(a > 5.0)])


if __name__ == "__main__":
    main()
