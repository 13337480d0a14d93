"""Mesh-refinement study: errors against closed forms and identity residuals.

Writes one CSV row per (problem, domain, n_r) and prints observed rates.

    python scripts/refinement_study.py --out results/refinement.csv
"""

import argparse
import csv
import math
from pathlib import Path

import numpy as np

from serrinlab import closed_forms as cf
from serrinlab import diagnostics as dg
from serrinlab.closed_forms import PLaplaceParams
from serrinlab.geometry import StarDomain
from serrinlab.solver import SolverConfig, run_problem

CASES = [
    ("exterior", "disk", StarDomain.ball(2), 1.5),
    ("exterior", "sphere", StarDomain.ball(3), 2.0),
    ("exterior", "ellipse_1.5", StarDomain.ellipse(1.5, 1.0), 1.5),
    ("interior", "sphere", StarDomain.ball(3), 2.0),
    ("torsion", "ellipse_2", StarDomain.ellipse(2.0, 1.0), None),
]


def nodal_error(res):
    mesh = res.mesh
    d = res.domain
    if res.problem == "torsion" and not d.is_ball:
        a, b = 2.0, 1.0
        x, y = mesh.planar[..., 0], mesh.planar[..., 1]
        exact = (x * x / a**2 + y * y / b**2 - 1) * a * a * b * b / (a * a + b * b)
    elif res.problem == "exterior" and d.is_ball:
        exact = (1.0 / mesh.radii) ** res.params.decay
    elif res.problem == "interior" and d.is_ball:
        S = cf.interior_singular_potential(res.params, mesh.radii[-1, 0] ** (d.dimension - 1) * res.params.omega,
                                           mesh.radii)
        exact = S + res.lattice[-1] - S[-1]
    else:
        return float("nan")
    return float(np.max(np.abs(res.lattice - exact)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", default="32,64,128,256")
    ap.add_argument("--out", default="results/refinement.csv")
    args = ap.parse_args(argv)
    levels = [int(v) for v in args.levels.split(",")]
    cfg = SolverConfig()
    rows = []
    for problem, label, d, p in CASES:
        prev = None
        for n_r in levels:
            n_a = max(16, n_r // 2 if d.dimension == 2 and not d.is_ball else n_r // 4)
            res = run_problem(problem, d, p, cfg, n_r, n_a)
            rep = dg.run_diagnostics(res, force=True)
            row = {
                "problem": problem, "domain": label, "p": p, "n_r": n_r, "n_a": n_a,
                "converged": res.converged, "iterations": res.iterations,
                "nodal_error": nodal_error(res),
                "pohozaev_rel_residual": rep.get("pohozaev_rel_residual"),
                "capacity_rel_difference": rep.get("capacity_rel_difference"),
                "gradient_rel_spread": rep.get("gradient_rel_spread"),
            }
            err = row["nodal_error"]
            row["rate"] = math.log2(prev / err) if prev and err == err and err > 0 else None
            prev = err
            rows.append(row)
            rate = "-" if row["rate"] is None else f"{row['rate']:.2f}"
            print(f"{problem:9s} {label:12s} n_r={n_r:4d} err={err:.3e} rate={rate} "
                  f"pohozaev={row['pohozaev_rel_residual']}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
