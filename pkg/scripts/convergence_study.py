#!/usr/bin/env python3
"""h-refinement study for the Dirichlet solver against a closed-form solution.

Solves the boundary-value problem on [-box, box]^3 for a shrinking sequence
of spacings and reports the interior max error, Newton iteration counts and
the observed convergence order between consecutive levels.  The scheme is
second order, so the orders should settle near 2.

Example:
    python3 scripts/convergence_study.py --h-list 0.2,0.1,0.05 --out results/
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from sigma2lab.candidates import Counterexample, Quadratic
from sigma2lab.core_ops import Grid, ScalarField
from sigma2lab.solver import DirichletProblem, newton_solve


def make_candidate(name: str, kappa: float):
    if name == "counterexample":
        return Counterexample(kappa)
    if name == "quadratic":
        return Quadratic.standard(3)
    raise SystemExit(f"unknown candidate {name!r}")


def run_level(candidate, box: float, h: float):
    m = int(round(2.0 * box / h)) + 1
    grid = Grid(((-box, box),) * 3, (m,) * 3)
    start = time.perf_counter()
    report = newton_solve(DirichletProblem.from_candidate(grid, candidate))
    elapsed = time.perf_counter() - start
    exact = ScalarField.sample(grid, candidate)
    gap = np.abs(report.solution.values - exact.values)
    return {
        "h": h,
        "nodes_per_axis": m,
        "converged": report.converged,
        "iterations": report.iterations,
        "residual_norm": report.residual_norm,
        "interior_max_error": float(gap[1:-1, 1:-1, 1:-1].max()),
        "seconds": elapsed,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--candidate", default="counterexample", choices=("counterexample", "quadratic"))
    ap.add_argument("--kappa", type=float, default=0.25)
    ap.add_argument("--box", type=float, default=1.0, help="half-width of the cube")
    ap.add_argument("--h-list", default="0.2,0.1,0.05", help="comma-separated spacings, coarse to fine")
    ap.add_argument("--out", help="directory for convergence.csv and convergence.json")
    args = ap.parse_args(argv)

    candidate = make_candidate(args.candidate, args.kappa)
    h_values = [float(tok) for tok in args.h_list.split(",") if tok.strip()]

    rows = []
    for h in h_values:
        row = run_level(candidate, args.box, h)
        rows.append(row)
        print(
            f"h={row['h']:<8g} m={row['nodes_per_axis']:<4d} iters={row['iterations']:<3d} "
            f"err={row['interior_max_error']:.6e}  ({row['seconds']:.1f}s)"
        )

    print()
    print("observed orders between consecutive levels:")
    for prev, cur in zip(rows, rows[1:]):
        if prev["interior_max_error"] == 0 or cur["interior_max_error"] == 0:
            order = float("nan")
        else:
            order = math.log(prev["interior_max_error"] / cur["interior_max_error"]) / math.log(
                prev["h"] / cur["h"]
            )
        print(f"  h {prev['h']:g} -> {cur['h']:g}: order {order:.3f}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        (out / "convergence.json").write_text(
            json.dumps({"candidate": args.candidate, "box": args.box, "rows": rows}, indent=2, sort_keys=True)
        )
        print(f"\nwrote {out / 'convergence.csv'} and {out / 'convergence.json'}")

    return 0 if all(r["converged"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
