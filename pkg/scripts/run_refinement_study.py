"""Dyadic-refinement convergence of the time-discrete flow.

Runs the circle flow at dyadic subdivision levels j..j+1 and prints the
bounded-Lipschitz distances between consecutive final states; the
distances should halve per level, witnessing the Cauchy property behind
the unique limit flow.

Usage: python scripts/run_refinement_study.py [j_first j_last]
"""

import sys

from varmcf.flow import refinement_study
from varmcf.ingest import ShapeSpec, generate


def main() -> int:
    j_first, j_last = (int(sys.argv[1]), int(sys.argv[2])) if len(sys.argv) > 2 else (3, 6)
    v0 = generate(ShapeSpec("circle", samples=100))
    rows = refinement_study(v0, eps=0.1, levels=range(j_first, j_last + 1), horizon=0.1)
    print(f"{'level':>5} {'distance':>14} {'ratio':>8}")
    for row in rows:
        ratio = "" if row.ratio is None else f"{row.ratio:8.4f}"
        print(f"{row.level:5d} {row.distance:14.6e} {ratio}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
