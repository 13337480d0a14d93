"""Verdict behaviour for ellipses approaching the disk, across resolutions.

    python scripts/threshold_study.py --out results/thresholds.csv
"""

import argparse
import csv
from pathlib import Path

from serrinlab import diagnostics as dg
from serrinlab.geometry import StarDomain
from serrinlab.solver import SolverConfig, run_problem


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--aspects", default="1.0,1.002,1.02,1.1,1.5")
    ap.add_argument("--resolutions", default="16x8,32x16,128x32")
    ap.add_argument("--p", type=float, default=1.5)
    ap.add_argument("--out", default="results/thresholds.csv")
    args = ap.parse_args(argv)
    cfg = SolverConfig()
    rows = []
    for res_txt in args.resolutions.split(","):
        n_r, n_a = (int(v) for v in res_txt.split("x"))
        for a in (float(v) for v in args.aspects.split(",")):
            d = StarDomain.ball(2) if a == 1.0 else StarDomain.ellipse(a, 1.0)
            th = dg.calibrate_thresholds(d, "exterior", args.p, cfg, n_r, n_a)
            res = run_problem("exterior", d, args.p, cfg, n_r, n_a)
            tors = run_problem("torsion", d, None, cfg, n_r, n_a)
            rep = dg.run_diagnostics(res, tors, th, force=True)
            row = {"a": a, "n_r": n_r, "n_a": n_a, "verdict": rep.verdict.value}
            for key, entry in dg.VERDICT_SIGNALS.items():
                row[entry] = rep[entry]
                row[f"threshold_{key}"] = getattr(th, key)
            rows.append(row)
            print(f"a={a:<6g} {n_r:4d}x{n_a:<3d} {rep.verdict.value:22s} "
                  + " ".join(f"{k}={rep[e]:.2e}/{getattr(th, k):.1e}" for k, e in dg.VERDICT_SIGNALS.items()))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
