"""Integral identities and proof quantities evaluated on solver output.

Every function here refuses unconverged results unless ``force=True``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from serrinlab import closed_forms as cf
from serrinlab import geometry
from serrinlab.closed_forms import PLaplaceParams
from serrinlab.errors import ParameterError, UnconvergedError
from serrinlab.fem import edge_values
from serrinlab.geometry import StarDomain
from serrinlab.solver import SolveResult, SolverConfig, solve_exterior_capacitary, run_problem

SCHEMA_VERSION = 1
HADAMARD_CONVENTION = (
    "phi is the outward normal speed of the boundary; "
    "d Cap / dt = + int_Gamma phi u_nu^2 dS for p = 2"
)


def _require_converged(res: SolveResult, force: bool = False):
    if not (res.converged or force):
        raise UnconvergedError(
            f"{res.problem} solve did not converge; pass force=True to diagnose anyway"
        )


def _params(res: SolveResult, params):
    if params is not None:
        return params
    if res.params is None:
        raise ParameterError("exponent parameters are required for this diagnostic")
    return res.params


# --------------------------------------------------------------------------
# capacity and Pohozaev
# --------------------------------------------------------------------------


def truncation_tail(res: SolveResult, params: PLaplaceParams | None = None) -> float:
    """Energy of the decay mode beyond the truncation sphere, fitted to the outer ring."""
    params = _params(res, params)
    mesh = res.mesh
    R = mesh.radial_map.fixed_radius
    k = params.decay
    edge = mesh.outer
    u_mean = float(np.sum(edge.weights * edge_values(edge, res.u)) / np.sum(edge.weights))
    A = u_mean * R**k
    p, N = params.p, params.N
    return params.omega * (k * A) ** p * R ** (N - p * (k + 1)) / k


def capacity_volume_bulk(res: SolveResult, params: PLaplaceParams | None = None,
                         force: bool = False) -> float:
    """int |grad u|^p over the truncated annulus."""
    _require_converged(res, force)
    params = _params(res, params)
    t = np.einsum("cqd,cqd->cq", res.grad_qp, res.grad_qp)
    return float(np.sum(res.mesh.quad.weights * t ** (params.p / 2)))


def capacity_volume(res: SolveResult, params: PLaplaceParams | None = None,
                    force: bool = False) -> float:
    """Volume form of the capacity, bulk plus analytic tail beyond R_out."""
    return capacity_volume_bulk(res, params, force) + truncation_tail(res, params)


def capacity_flux(res: SolveResult, params: PLaplaceParams | None = None,
                  force: bool = False) -> float:
    """Boundary form int_Gamma |grad u|^{p-1} dS."""
    _require_converged(res, force)
    p = _params(res, params).p if res.params or params else res.p
    return res.boundary.integrate(res.grad_norm ** (p - 1))


def pohozaev_terms(res: SolveResult, params: PLaplaceParams | None = None,
                   force: bool = False) -> tuple[float, float]:
    """Left side (N-p) int |grad u|^p and right side (p-1) int_Gamma |grad u|^p <x-z, nu>."""
    params = _params(res, params)
    lhs = (params.N - params.p) * capacity_volume(res, params, force)
    bs = res.boundary
    rhs = (params.p - 1) * bs.integrate(res.grad_norm**params.p * bs.support)
    return lhs, rhs


def pohozaev_residual(res: SolveResult, params: PLaplaceParams | None = None,
                      force: bool = False) -> float:
    """(lhs - rhs) / lhs of the Rellich-Pohozaev identity, origin at the star center."""
    lhs, rhs = pohozaev_terms(res, params, force)
    return (lhs - rhs) / lhs


def gamma_flux_estimate(res: SolveResult, params: PLaplaceParams | None = None,
                        force: bool = False) -> float:
    """gamma from the conserved mid-ring flux, which equals gamma^(p-1)."""
    _require_converged(res, force)
    p = res.p if params is None else params.p
    return res.far_flux ** (1.0 / (p - 1))


def ring_flux_variation(res: SolveResult) -> float:
    """max |flux_i - flux_0| / flux_0 over the rings up to the mid ring."""
    f = res.ring_flux[: res.mesh.n_r // 2 + 1]
    return float(np.max(np.abs(f - f[0])) / abs(f[0]))


# --------------------------------------------------------------------------
# boundary gradient and P-function
# --------------------------------------------------------------------------


@dataclass
class GradientProfile:
    mean: float
    std: float
    min: float
    max: float
    rel_spread: float
    expected: float
    mean_rel_error: float
    max_rel_deviation: float


def overdetermination_profile(res: SolveResult, expected: float, force: bool = False) -> GradientProfile:
    """Surface-weighted statistics of |grad u| on Gamma against an expected constant."""
    _require_converged(res, force)
    w = res.boundary.weights
    g = res.grad_norm
    mean = float(np.dot(w, g) / w.sum())
    std = float(np.sqrt(np.dot(w, (g - mean) ** 2) / w.sum()))
    return GradientProfile(
        mean=mean, std=std, min=float(g.min()), max=float(g.max()), rel_spread=std / mean,
        expected=float(expected), mean_rel_error=abs(mean - expected) / abs(expected),
        max_rel_deviation=float(np.max(np.abs(g - expected)) / abs(expected)),
    )


@dataclass
class PFunctionStats:
    values: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    boundary_values: np.ndarray = field(repr=False)
    interior_max: float
    interior_max_point: tuple
    interior_max_ring: int
    boundary_max: float
    boundary_max_angle: float
    boundary_mean: float
    far_ring_mean: float
    far_ring_spread: float
    limit_geometric: float | None
    limit_from_capacity: float | None

    def summary(self) -> dict:
        d = asdict(self)
        for k in ("values", "points", "boundary_values"):
            d.pop(k)
        d["interior_max_point"] = list(self.interior_max_point)
        return d


def p_function_field(res: SolveResult, params: PLaplaceParams | None = None,
                     force: bool = False) -> PFunctionStats:
    """P = |grad u|^p / u^{p(N-1)/(N-p)} at cell centers, with boundary and far-field statistics."""
    _require_converged(res, force)
    params = _params(res, params)
    mesh = res.mesh
    center = mesh.evaluate([0.5], [0.5])
    grad = np.einsum("ca,cad->cd", res.u[mesh.cells], center.grads[:, 0])
    u_c = res.u[mesh.cells].mean(axis=1)
    P = cf.p_function_value(u_c, np.linalg.norm(grad, axis=-1), params)
    bvals = cf.p_function_value(np.ones_like(res.grad_norm), res.grad_norm, params)
    if res.problem == "interior":
        bvals = cf.p_function_value(
            np.full_like(res.grad_norm, res.u[mesh.dof[mesh.gamma_ring]][0]), res.grad_norm, params
        )
    imax = int(np.argmax(P))
    w = center.weights[:, 0]
    far_ring = mesh.n_r - 1 if mesh.kind == "exterior" else 0
    sel = mesh.cell_ring == far_ring
    far_mean = float(np.sum(P[sel] * w[sel]) / np.sum(w[sel]))
    far_spread = float((P[sel].max() - P[sel].min()) / far_mean)
    pts = center.points[:, 0]
    c = np.asarray(mesh.domain.center)
    if mesh.dimension == 2:
        loc = tuple(float(v) for v in c + pts[imax])
    else:
        loc = (float(c[0] + pts[imax, 0]), float(c[1]), float(c[2] + pts[imax, 1]))
    limit_geo = limit_cap = None
    if mesh.kind == "exterior":
        limit_geo = cf.p_function_limit(mesh.domain, params)
        cap = capacity_flux(res, params, force=True)
        limit_cap = cf.p_function_limit_from_capacity(cap, params)
    jb = int(np.argmax(bvals))
    return PFunctionStats(
        values=P, points=pts, boundary_values=bvals,
        interior_max=float(P[imax]), interior_max_point=loc, interior_max_ring=int(mesh.cell_ring[imax]),
        boundary_max=float(bvals[jb]), boundary_max_angle=float(res.boundary.angles[jb]),
        boundary_mean=float(res.boundary.integrate(bvals) / res.boundary.weights.sum()),
        far_ring_mean=far_mean, far_ring_spread=far_spread,
        limit_geometric=limit_geo, limit_from_capacity=limit_cap,
    )


# --------------------------------------------------------------------------
# geometry-level quantities
# --------------------------------------------------------------------------


def curvature_gap(d: StarDomain) -> tuple[float, float]:
    """(min, max) of H0 - H over Gamma."""
    return geometry.curvature_gap(d)


def soap_bubble_terms(d: StarDomain, torsion: SolveResult, force: bool = False) -> tuple[float, float]:
    """(int (H0 - H) |grad tau|^2 dS, int |grad tau|^2 dS) on the torsion mesh's boundary nodes."""
    _require_converged(torsion, force)
    if torsion.problem != "torsion":
        raise ParameterError("soap bubble deficit needs a torsion solve")
    bs = torsion.boundary
    g2 = torsion.grad_norm**2
    return bs.integrate((geometry.h0(d) - bs.mean_curvature) * g2), bs.integrate(g2)


def soap_bubble_deficit(d: StarDomain, torsion: SolveResult, force: bool = False) -> float:
    return soap_bubble_terms(d, torsion, force)[0]


def conformal_isoperimetric_residual(d: StarDomain) -> float:
    """N |Omega| - |Gamma|^{N/(N-1)} / omega_N^{1/(N-1)} (zero exactly for balls)."""
    N = d.dimension
    G = geometry.surface_measure(d)
    return N * geometry.volume(d) - G ** (N / (N - 1)) / geometry.unit_sphere_measure(N) ** (1 / (N - 1))


def conformal_balance(res: SolveResult, force: bool = False) -> dict:
    """Compare c^{N-1} |Gamma| (c = mean boundary gradient) with gamma^{N-1} (ring flux)."""
    _require_converged(res, force)
    N = res.mesh.dimension
    w = res.boundary.weights
    c = float(np.dot(w, res.grad_norm) / w.sum())
    lhs = c ** (N - 1) * float(w.sum())
    rhs = res.far_flux
    return {"c": c, "c_pow_surface": lhs, "gamma_pow": rhs, "gamma": rhs ** (1.0 / (N - 1)),
            "rel_residual": (lhs - rhs) / rhs}


def shape_derivative_check(d: StarDomain, perturbation, step: float, params: PLaplaceParams | None = None,
                           cfg: SolverConfig | None = None, n_r: int | None = None,
                           n_a: int | None = None) -> tuple[float, float]:
    """Central difference of the capacity under ``rho -> rho +- step * perturbation``
    against the boundary integral int_Gamma phi u_nu^2 dS, phi = perturbation * <omega, nu>.

    Sign convention: see ``HADAMARD_CONVENTION``.
    """
    params = params or PLaplaceParams(2.0, d.dimension)
    if params.p != 2.0 or d.dimension != 3:
        raise ParameterError("shape derivative check is implemented for p = 2, N = 3 only")
    cfg = cfg or SolverConfig()
    from serrinlab.mesh import exterior_radius

    r_out = exterior_radius(d, cfg.rout_factor)
    base = solve_exterior_capacitary(d, params, cfg, n_r, n_a, r_out=r_out)
    plus = solve_exterior_capacitary(d.perturbed(perturbation, step), params, cfg, n_r, n_a, r_out=r_out)
    minus = solve_exterior_capacitary(d.perturbed(perturbation, -step), params, cfg, n_r, n_a, r_out=r_out)
    fd = (capacity_flux(plus) - capacity_flux(minus)) / (2 * step)
    bs = base.boundary
    speed = perturbation.derivatives(bs.angles)[0] * bs.ray_cosine
    hadamard = bs.integrate(speed * base.u_nu**2)
    return float(fd), float(hadamard)


# --------------------------------------------------------------------------
# report and verdict
# --------------------------------------------------------------------------


class Verdict(str, enum.Enum):
    CONSISTENT_WITH_BALL = "consistent_with_ball"
    NOT_BALL = "not_ball"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class VerdictThresholds:
    """Per-signal thresholds on relative quantities; ``margin`` separates not_ball from inconclusive."""

    spread: float = 1e-3
    soap_bubble: float = 1e-3
    isoperimetric: float = 1e-6
    margin: float = 2.0
    source: str = "default floors"


VERDICT_SIGNALS = {
    "spread": "gradient_rel_spread",
    "soap_bubble": "soap_bubble_rel_deficit",
    "isoperimetric": "isoperimetric_rel_deficit",
}


@dataclass
class DiagnosticsReport:
    meta: dict
    entries: dict
    thresholds: VerdictThresholds | None = None
    verdict: Verdict | None = None

    def __getitem__(self, key):
        return self.entries[key]

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def to_dict(self) -> dict:
        def encode(v):
            if isinstance(v, (bool, np.bool_)):
                return bool(v)
            if isinstance(v, (float, np.floating, int, np.integer)):
                x = float(v)
                return {"value": x, "rounded": f"{x:.6g}"}
            if isinstance(v, dict):
                return {k: encode(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [encode(x) for x in v]
            return v

        return {
            "schema_version": SCHEMA_VERSION,
            "meta": self.meta,
            "entries": {k: encode(v) for k, v in self.entries.items()},
            "thresholds": asdict(self.thresholds) if self.thresholds else None,
            "verdict": self.verdict.value if self.verdict else None,
        }

    def to_json(self) -> str:
        """Sorted-key JSON; floats are written at shortest round-trip precision."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True) + "\n"

    def write(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_json())


def symmetry_verdict(report: DiagnosticsReport, thresholds: VerdictThresholds) -> Verdict:
    """not_ball if any signal exceeds margin * threshold, consistent if all are within
    their thresholds, inconclusive otherwise. Missing signals are skipped."""
    values = {}
    for key, entry in VERDICT_SIGNALS.items():
        v = report.get(entry)
        if v is not None:
            values[key] = abs(float(v))
    if not values:
        return Verdict.INCONCLUSIVE
    if any(v > thresholds.margin * getattr(thresholds, k) for k, v in values.items()):
        return Verdict.NOT_BALL
    if all(v <= getattr(thresholds, k) for k, v in values.items()):
        return Verdict.CONSISTENT_WITH_BALL
    return Verdict.INCONCLUSIVE


def equal_volume_ball(d: StarDomain) -> StarDomain:
    N = d.dimension
    R = (N * geometry.volume(d) / geometry.unit_sphere_measure(N)) ** (1.0 / N)
    return StarDomain.ball(N, R, d.center)


def ball_null_residuals(d: StarDomain, problem: str, p: float | None, cfg: SolverConfig,
                        n_r: int | None = None, n_a: int | None = None) -> dict:
    """Verdict signals measured on the equal-volume ball at the given resolution.

    Spread null: deviation of the boundary gradient from its exact constant.
    Soap-bubble null: imbalance plus twice the torsion gradient error (the
    integrand carries |grad tau|^2).
    """
    ball = equal_volume_ball(d)
    R = float(ball.radius.derivatives(np.zeros(1))[0][0])
    res = run_problem(problem, ball, p, cfg, n_r, n_a)
    spread_null = 0.0
    if problem in ("exterior", "interior", "conformal"):
        prof = overdetermination_profile(res, _expected_gradient(res), force=True)
        spread_null = max(prof.rel_spread, prof.mean_rel_error)
    tors = res if problem == "torsion" else run_problem("torsion", ball, None, cfg, n_r, n_a)
    s, norm = soap_bubble_terms(ball, tors, force=True)
    grad_err = abs(float(np.mean(tors.grad_norm)) - R) / R
    return {
        "spread": spread_null,
        "soap_bubble": abs(s) / norm + 2.0 * grad_err,
        "isoperimetric": abs(geometry.isoperimetric_deficit(ball)) / geometry.volume(ball),
        "n_r": res.mesh.n_r,
        "n_a": res.mesh.n_a,
    }


def calibrate_thresholds(d: StarDomain, problem: str, p: float | None, cfg: SolverConfig,
                         n_r: int | None = None, n_a: int | None = None,
                         factor: float = 3.0, floors: VerdictThresholds | None = None) -> VerdictThresholds:
    """Thresholds at ``factor`` times the ball-case residuals, never below ``floors``."""
    floors = floors or VerdictThresholds()
    null = ball_null_residuals(d, problem, p, cfg, n_r, n_a)
    return VerdictThresholds(
        spread=max(factor * null["spread"], floors.spread),
        soap_bubble=max(factor * null["soap_bubble"], floors.soap_bubble),
        isoperimetric=max(factor * null["isoperimetric"], floors.isoperimetric),
        margin=floors.margin,
        source=f"{factor:g}x equal-volume ball residuals at n_r={null['n_r']}, n_a={null['n_a']}",
    )


def _expected_gradient(res: SolveResult) -> float:
    d = res.domain
    if res.problem == "exterior":
        return cf.serrin_constant(d, res.params)
    if res.problem == "interior":
        return 1.0
    if res.problem == "conformal":
        # ball of radius R = 1/H0 with u = 0 at R_out: u = 1 - ln(r/R)/ln(R_out/R)
        R = 1.0 / geometry.h0(d)
        return 1.0 / (R * math.log(res.mesh.radial_map.fixed_radius / R))
    if res.problem == "torsion":
        return 1.0 / geometry.h0(d)
    raise ParameterError(f"no expected boundary gradient for {res.problem}")


def geometry_entries(d: StarDomain) -> dict:
    gap = geometry.curvature_gap(d)
    V = geometry.volume(d)
    iso = geometry.isoperimetric_deficit(d)
    return {
        "volume": V,
        "surface": geometry.surface_measure(d),
        "h0": geometry.h0(d),
        "isoperimetric_deficit": iso,
        "isoperimetric_rel_deficit": iso / V,
        "minkowski_residual": geometry.minkowski_residual(d, 1024),
        "star_support_min": geometry.star_support_min(d),
        "curvature_gap_min": gap[0],
        "curvature_gap_max": gap[1],
        "conformal_isoperimetric_residual": conformal_isoperimetric_residual(d),
    }


def run_diagnostics(res: SolveResult, torsion: SolveResult | None = None,
                    thresholds: VerdictThresholds | None = None, force: bool = False) -> DiagnosticsReport:
    """Evaluate every diagnostic that applies to ``res`` and assemble the report."""
    _require_converged(res, force)
    if torsion is not None:
        _require_converged(torsion, force)
    d = res.domain
    mesh = res.mesh
    entries = geometry_entries(d)
    entries["omega_convention_ball_capacity_p2_N3"] = cf.omega_convention_check()["ball_capacity_p2_N3_R1"]
    entries["converged"] = bool(res.converged)
    entries["iterations"] = res.iterations
    entries["ring_flux_inner"] = float(res.ring_flux[0])
    entries["ring_flux_mid"] = res.far_flux
    entries["ring_flux_variation"] = ring_flux_variation(res)

    if res.problem in ("exterior", "interior", "conformal"):
        prof = overdetermination_profile(res, _expected_gradient(res), force=True)
        entries.update({f"gradient_{k}": v for k, v in asdict(prof).items()})

    if res.problem == "exterior":
        params = res.params
        bulk = capacity_volume_bulk(res, params, True)
        tail = truncation_tail(res, params)
        cap_v = bulk + tail
        cap_f = capacity_flux(res, params, True)
        lhs, rhs = pohozaev_terms(res, params, True)
        pstats = p_function_field(res, params, True)
        entries.update({
            "capacity_volume": cap_v,
            "capacity_volume_bulk": bulk,
            "capacity_volume_tail": tail,
            "capacity_flux": cap_f,
            "capacity_rel_difference": (cap_v - cap_f) / cap_f,
            "capacity_from_geometry": cf.capacity_from_geometry(d, params),
            "capacity_isoperimetric_bound": cf.capacity_isoperimetric_bound(params, entries["volume"]),
            "pohozaev_lhs": lhs,
            "pohozaev_rhs": rhs,
            "pohozaev_abs_residual": lhs - rhs,
            "pohozaev_rel_residual": (lhs - rhs) / lhs,
            "serrin_constant": cf.serrin_constant(d, params),
            "gamma_flux": gamma_flux_estimate(res, params, True),
            "gamma_capacity": cf.gamma_from_capacity(cap_f, params),
            "p_function_boundary_formula": cf.p_function_boundary(d, params),
            "p_function_limit_formula": cf.p_function_limit(d, params),
            **{f"p_function_{k}": v for k, v in pstats.summary().items()},
        })
    elif res.problem == "interior":
        params = res.params
        pstats = p_function_field(res, params, True)
        entries.update({
            "source_strength": res.extras.get("source_strength"),
            "excision_flux": res.extras.get("excision_flux"),
            "interior_constant_c": cf.interior_constant_c(d, params),
            **{f"p_function_{k}": v for k, v in pstats.summary().items()
               if k not in ("limit_geometric", "limit_from_capacity")},
        })
        if d.is_ball:
            entries["singular_profile_max_rel_error"] = interior_profile_error(res)
    elif res.problem == "conformal":
        entries.update({f"conformal_{k}": v for k, v in conformal_balance(res, True).items()})
    elif res.problem == "torsion":
        torsion = res if torsion is None else torsion

    if torsion is not None:
        s, norm = soap_bubble_terms(d, torsion, True)
        entries.update({
            "soap_bubble_deficit": s,
            "soap_bubble_norm": norm,
            "soap_bubble_rel_deficit": s / norm,
            "torsion_gradient_mean": float(np.dot(torsion.boundary.weights, torsion.grad_norm)
                                           / torsion.boundary.weights.sum()),
        })

    meta = {
        "problem": res.problem,
        "p": res.p,
        "N": mesh.dimension,
        "n_r": mesh.n_r,
        "n_a": mesh.n_a,
        "fixed_radius": mesh.radial_map.fixed_radius,
        "domain": d.to_config(),
        "config": res.config.to_dict() if res.config else None,
        "forced": bool(force and not res.converged),
        "hadamard_convention": HADAMARD_CONVENTION,
        "omega_convention": cf.omega_convention_check()["omega_N"],
    }
    report = DiagnosticsReport(meta=meta, entries=entries)
    if thresholds is not None:
        report.thresholds = thresholds
        report.verdict = symmetry_verdict(report, thresholds)
    return report


def interior_profile_error(res: SolveResult) -> float:
    """max |u - (S(r) + C)| / |S(r) + C| with S the leading singular term and C fixed on Gamma."""
    params = res.params
    K = geometry.surface_measure(res.domain)
    S = cf.interior_singular_potential(params, K, res.mesh.radii)
    rho = res.domain.radius.derivatives(res.mesh.angles)[0]
    C = res.u[res.mesh.dof[res.mesh.gamma_ring]][0] - cf.interior_singular_potential(params, K, rho)
    ref = S + C[None, :]
    return float(np.max(np.abs(res.lattice - ref) / np.abs(ref)))


def write_boundary_profile(res: SolveResult, path) -> None:
    """CSV of the boundary samples together with u_nu and |grad u|."""
    bs = res.boundary
    dim = bs.points.shape[1]
    names = "xyz"[:dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", *[f"x_{c}" for c in names], *[f"nu_{c}" for c in names],
                    "H", "w", "u_nu", "grad_norm"])
        for i in range(len(bs)):
            row = [bs.angles[i], *bs.points[i], *bs.normals[i], bs.mean_curvature[i], bs.weights[i],
                   res.u_nu[i], res.grad_norm[i]]
            w.writerow([repr(float(v)) for v in row])
