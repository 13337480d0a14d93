"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 solver non-convergence.
The default output directory is taken from ``$SERRINLAB_OUT`` when ``--out``
is not given.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from serrinlab import closed_forms as cf
from serrinlab import diagnostics as dg
from serrinlab import geometry
from serrinlab.errors import SerrinLabError, UnconvergedError
from serrinlab.geometry import StarDomain
from serrinlab.solver import PROBLEMS, SolverConfig, run_problem

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNCONVERGED = 3
OUT_ENV = "SERRINLAB_OUT"
MANIFEST_SCHEMA = 1

log = logging.getLogger("serrinlab")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """Everything needed to repeat a ``solve`` run."""

    scenario: str
    domain: dict
    p: float | None
    N: int
    solver: dict
    outputs: dict = field(default_factory=dict)
    deterministic: bool = False
    calibrate: bool = True
    force_diagnostics: bool = False
    schema_version: int = MANIFEST_SCHEMA

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise UsageError("manifest must be a JSON object")
        if data.get("schema_version") != MANIFEST_SCHEMA:
            raise UsageError(f"unsupported manifest schema {data.get('schema_version')!r}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise UsageError(f"malformed manifest: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            return cls.from_json(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read manifest {path}: {exc}") from exc


@contextlib.contextmanager
def thread_limit(n: int | None):
    """Cap BLAS/OpenMP threads; ``n=1`` gives serial reductions."""
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------


def _resolution(text: str | None):
    if text is None:
        return None
    try:
        n_r, n_a = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--resolution expects n_r,n_a (got {text!r})") from None
    return n_r, n_a


def _float_list(text: str, name: str) -> list[float]:
    items = [v for v in text.split(",") if v.strip()]
    if not items:
        raise UsageError(f"{name} is empty")
    try:
        return [float(v) for v in items]
    except ValueError:
        raise UsageError(f"{name} expects comma-separated numbers (got {text!r})") from None


def _load_domain(args) -> StarDomain:
    if args.domain:
        d = StarDomain.load(args.domain)
        if args.dim is not None and args.dim != d.dimension:
            raise UsageError(f"--dim {args.dim} contradicts the domain dimension {d.dimension}")
        return d
    return StarDomain.ball(args.dim or 2, 1.0)


def _solver_config(args, base: SolverConfig | None = None) -> SolverConfig:
    data = (base or SolverConfig()).to_dict()
    res = _resolution(getattr(args, "resolution", None))
    if res:
        data["n_r"], data["n_a"] = res
    if getattr(args, "rout_factor", None) is not None:
        data["rout_factor"] = args.rout_factor
    if getattr(args, "linear_solver", None):
        data["linear_solver"] = args.linear_solver
    return SolverConfig.from_dict(data)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "serrinlab_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _default_p(scenario, d, p):
    if scenario == "conformal":
        return float(d.dimension)
    if scenario == "torsion":
        return None
    if p is None:
        raise UsageError(f"--p is required for the {scenario} scenario")
    return float(p)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def geometry_report(d: StarDomain) -> dict:
    gap = geometry.curvature_gap(d)
    return {
        "dimension": d.dimension,
        "volume": geometry.volume(d),
        "surface": geometry.surface_measure(d),
        "h0": geometry.h0(d),
        "isoperimetric_deficit": geometry.isoperimetric_deficit(d),
        "minkowski_residual": geometry.minkowski_residual(d, 1024),
        "star_support_min": geometry.star_support_min(d),
        "curvature_gap_min": gap[0],
        "curvature_gap_max": gap[1],
    }


def cmd_geometry(args) -> int:
    d = _load_domain(args)
    rep = geometry_report(d)
    if args.json:
        print(json.dumps(rep, sort_keys=True, indent=2))
    else:
        for k, v in rep.items():
            print(f"{k:24s} {v:.10g}" if isinstance(v, float) else f"{k:24s} {v}")
    return EXIT_OK


def execute_manifest(man: RunManifest, out: Path) -> int:
    """Run a manifest, write its outputs into ``out``; returns the exit code."""
    d = StarDomain.from_config(man.domain)
    cfg = SolverConfig.from_dict(man.solver)
    t0 = time.perf_counter()
    with thread_limit(1 if man.deterministic else None):
        res = run_problem(man.scenario, d, man.p, cfg)
        torsion = None
        if man.scenario != "torsion":
            torsion = run_problem("torsion", d, None, cfg)
        if not res.converged and not man.force_diagnostics:
            log.error("%s solve did not converge after %d iterations", man.scenario, res.iterations)
            (out / "manifest.json").write_text(man.to_json())
            return EXIT_UNCONVERGED
        thresholds = (
            dg.calibrate_thresholds(d, man.scenario, man.p, cfg) if man.calibrate else dg.VerdictThresholds()
        )
        report = dg.run_diagnostics(res, torsion, thresholds, force=man.force_diagnostics)
    report.meta["deterministic"] = man.deterministic
    if not man.deterministic:
        report.meta["wall_seconds"] = time.perf_counter() - t0
    man.outputs = {
        "report": "report.json",
        "field": "field.csv",
        "boundary_profile": "boundary_profile.csv",
        "manifest": "manifest.json",
    }
    report.write(out / man.outputs["report"])
    res.write_field_csv(out / man.outputs["field"])
    dg.write_boundary_profile(res, out / man.outputs["boundary_profile"])
    (out / man.outputs["manifest"]).write_text(man.to_json())
    print(f"verdict: {report.verdict.value}")
    print(f"report: {out / man.outputs['report']}")
    return EXIT_OK if res.converged else EXIT_UNCONVERGED


def cmd_solve(args) -> int:
    if args.manifest:
        man = RunManifest.load(args.manifest)
        if args.deterministic:
            man.deterministic = True
    else:
        if not args.scenario:
            raise UsageError("--scenario is required (or --manifest)")
        d = _load_domain(args)
        man = RunManifest(
            scenario=args.scenario,
            domain=d.to_config(),
            p=_default_p(args.scenario, d, args.p),
            N=d.dimension,
            solver=_solver_config(args).to_dict(),
            deterministic=args.deterministic,
            calibrate=not args.no_calibrate,
            force_diagnostics=args.force_diagnostics,
        )
    return execute_manifest(man, _out_dir(args))


SWEEP_COLUMNS = (
    "converged", "iterations", "capacity_volume", "capacity_flux", "pohozaev_rel_residual",
    "gradient_mean", "gradient_rel_spread", "gradient_mean_rel_error", "ring_flux_variation",
    "soap_bubble_rel_deficit", "conformal_rel_residual",
)


def cmd_sweep(args) -> int:
    d = _load_domain(args)
    if not args.scenario:
        raise UsageError("--scenario is required")
    if (args.p_list is None) == (args.resolutions is None):
        raise UsageError("give exactly one of --p-list or --resolutions")
    base = _solver_config(args)
    runs = []
    if args.p_list is not None:
        for p in _float_list(args.p_list, "--p-list"):
            runs.append(("p", p, base.n_r, base.n_a, p))
    else:
        for n in _float_list(args.resolutions, "--resolutions"):
            n_r = int(n)
            n_a = base.n_a if args.fixed_angular else max(8, n_r // 4)
            runs.append(("n_r", n_r, n_r, n_a, _default_p(args.scenario, d, args.p)))
    out = _out_dir(args)
    rows = []
    status = EXIT_OK
    with thread_limit(1 if args.deterministic else None):
        for name, value, n_r, n_a, p in runs:
            p = _default_p(args.scenario, d, p)
            res = run_problem(args.scenario, d, p, base, n_r, n_a)
            if not res.converged:
                status = EXIT_UNCONVERGED
            rep = dg.run_diagnostics(res, None, None, force=True)
            row = {"parameter": name, "value": value, "p": p, "n_r": n_r, "n_a": n_a}
            if args.scenario == "exterior" and d.is_ball:
                R = 1.0 / geometry.h0(d)
                ref = cf.ball_capacity(res.params, R)
                row["capacity_reference"] = ref
                row["capacity_rel_error"] = abs(rep["capacity_flux"] - ref) / ref
            for k in SWEEP_COLUMNS:
                if rep.get(k) is not None:
                    row[k] = rep[k]
            rows.append(row)
    columns = []
    for row in rows:
        columns += [k for k in row if k not in columns]
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(k, "")) for k in columns])
    print(path.read_text(), end="")
    return status


def _cell(v):
    if isinstance(v, bool) or not isinstance(v, float):
        return v
    return repr(v)


def cmd_formulas(args) -> int:
    if args.list or not args.name:
        for name, (sig, _) in sorted(cf.FORMULAS.items()):
            print(f"{name} {sig}")
        return EXIT_OK
    if args.name not in cf.FORMULAS:
        raise UsageError(f"unknown formula {args.name!r}; try 'formulas --list'")
    sig, fn = cf.FORMULAS[args.name]
    names = sig.split()
    if len(args.args) != len(names):
        raise UsageError(f"{args.name} expects {len(names)} arguments: {sig}")
    try:
        values = [float(v) for v in args.args]
    except ValueError:
        raise UsageError(f"{args.name} arguments must be numbers") from None
    out = fn(*values)
    out = float(out[0]) if hasattr(out, "__len__") else float(out)
    print(repr(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _common(sp):
    sp.add_argument("--domain", help="domain config JSON (default: unit ball of --dim)")
    sp.add_argument("--dim", type=int, choices=(2, 3), help="dimension N")


def _solver_flags(sp):
    sp.add_argument("--p", type=float, help="exponent p")
    sp.add_argument("--scenario", choices=PROBLEMS)
    sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./serrinlab_out)")
    sp.add_argument("--resolution", help="n_r,n_a")
    sp.add_argument("--rout-factor", type=float, help="truncation radius over domain diameter")
    sp.add_argument("--linear-solver", choices=("cg-amg", "cg-jacobi", "direct"))
    sp.add_argument("--deterministic", action="store_true", help="serial reductions, no timings")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="serrinlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geometry", help="print geometric quantities of a domain")
    _common(g)
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_geometry)

    s = sub.add_parser("solve", help="run a scenario and write report + CSV dumps")
    _common(s)
    _solver_flags(s)
    s.add_argument("--force-diagnostics", action="store_true", help="diagnose unconverged solves")
    s.add_argument("--no-calibrate", action="store_true", help="use fixed verdict floors")
    s.add_argument("--manifest", help="rerun a manifest.json written by an earlier solve")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="diagnostics table over p or resolution")
    _common(w)
    _solver_flags(w)
    w.add_argument("--p-list", help="comma-separated exponents")
    w.add_argument("--resolutions", help="comma-separated n_r values (n_a = n_r/4 unless --fixed-angular)")
    w.add_argument("--fixed-angular", action="store_true")
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("formulas", help="evaluate a closed-form expression")
    f.add_argument("name", nargs="?")
    f.add_argument("args", nargs="*")
    f.add_argument("--list", action="store_true")
    f.set_defaults(func=cmd_formulas)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UnconvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNCONVERGED
    except (UsageError, SerrinLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
