"""Regenerate the bundled 5% Durbin-Watson bounds table.

Bounds are computed exactly (Imhof inversion) rather than transcribed, so
the table can be rebuilt for any grid:

    python scripts/make_dw_table.py src/netstress/data/dw_bounds_5pct.csv
"""

import csv
import sys

from netstress.stats import dw_exact_bounds

N_GRID = (list(range(6, 101)) + list(range(105, 201, 5)) + list(range(250, 501, 50))
          + list(range(600, 1001, 100)) + [1500, 2000])
K_MAX = 10


def main(path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "k", "dL", "dU"])
        for k in range(1, K_MAX + 1):
            for n in N_GRID:
                if n - (k + 1) < 2:
                    continue
                dl, du = dw_exact_bounds(n, k)
                w.writerow([n, k, f"{dl:.4f}", f"{du:.4f}"])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "dw_bounds_5pct.csv")
