"""Regularized p-Laplace solves on mapped structured grids.

The discrete problem minimizes

    E(u) = int (|grad u|^2 + eps^2)^{p/2} / p dx
           + sum_edges beta int (u^2 + eps_b^2)^{p/2} / p dS  -  F . u

over bilinear fields with Dirichlet data, by lagged diffusivity: each step
freezes ``a = (|grad u_k|^2 + eps^2)^{(p-2)/2}`` and solves the SPD weighted
Laplace system. For p <= 2 the frozen quadratic majorizes E, so the energy
cannot increase; for p > 2 the step is damped until it does not.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from serrinlab import closed_forms as cf
from serrinlab import geometry
from serrinlab.closed_forms import PLaplaceParams
from serrinlab.errors import ConfigError, ParameterError
from serrinlab.fem import Assembler, edge_load, edge_values, gradients, solve_spd
from serrinlab.geometry import BoundarySamples, StarDomain
from serrinlab.mesh import (
    Mesh,
    build_exterior_mesh,
    build_interior_mesh,
    build_mesh,
    build_torsion_mesh,
    exterior_radius,
)

log = logging.getLogger(__name__)

PROBLEMS = ("exterior", "conformal", "interior", "torsion")


@dataclass(frozen=True)
class SolverConfig:
    epsilon_rel: float = 1e-8
    max_iter: int = 200
    energy_tol: float = 1e-9
    step_tol: float = 1e-9
    damping: float = 1.0
    linear_tol: float = 1e-10
    linear_solver: str = "cg-amg"
    rout_factor: float = 32.0
    excision_factor: float = 1.0 / 64.0
    n_r: int = 256
    n_a: int = 64

    def __post_init__(self):
        for name in ("epsilon_rel", "energy_tol", "step_tol", "linear_tol", "rout_factor",
                     "excision_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("energy_tol", "step_tol", "linear_tol"):
            if not getattr(self, name) < 1:
                raise ConfigError(f"{name} must be below 1")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.linear_solver not in ("cg-amg", "cg-jacobi", "direct"):
            raise ConfigError(f"unknown linear solver {self.linear_solver!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        return cls(**data)


@dataclass
class BoundaryConditions:
    """Dirichlet values plus natural terms.

    ``robin`` maps an edge name ('inner'/'outer') to beta: the condition
    ``|grad u|^{p-2} du/dn = -beta |u|^{p-2} u`` on that ring (n outward).
    ``load`` is added to the right-hand side (e.g. a prescribed boundary flux).
    """

    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    robin: dict = field(default_factory=dict)
    load: np.ndarray | None = None


@dataclass(eq=False)
class SolveResult:
    problem: str
    mesh: Mesh
    p: float
    u: np.ndarray
    converged: bool
    iterations: int
    energy_history: list
    linear_iterations: list
    epsilon: float
    grad_qp: np.ndarray
    boundary: BoundarySamples
    u_nu: np.ndarray
    grad_norm: np.ndarray
    ring_flux: np.ndarray
    config: SolverConfig | None = None
    params: PLaplaceParams | None = None
    exact: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def domain(self) -> StarDomain:
        return self.mesh.domain

    @property
    def lattice(self) -> np.ndarray:
        """Nodal values on the (n_r + 1, n_ang) lattice."""
        return self.u[self.mesh.dof]

    @property
    def far_flux(self) -> float:
        """Conserved p-flux through the mid ring."""
        return float(self.ring_flux[self.mesh.n_r // 2])

    def write_field_csv(self, path) -> None:
        pts = self.mesh.space_points()
        dim = pts.shape[-1]
        lat = self.lattice
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ring", "angle_index", "r", "angle", *[f"x_{c}" for c in "xyz"[:dim]], "u"])
            for i in range(self.mesh.n_r + 1):
                for j in range(self.mesh.n_ang):
                    w.writerow(
                        [i, j, repr(float(self.mesh.radii[i, j])), repr(float(self.mesh.angles[j]))]
                        + [repr(float(v)) for v in pts[i, j]]
                        + [repr(float(lat[i, j]))]
                    )

    def manifest(self) -> dict:
        return {
            "problem": self.problem,
            "domain": self.domain.to_config(),
            "p": self.p,
            "N": self.mesh.dimension,
            "n_r": self.mesh.n_r,
            "n_a": self.mesh.n_a,
            "fixed_radius": self.mesh.radial_map.fixed_radius,
            "config": self.config.to_dict() if self.config else None,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_energy": self.energy_history[-1] if self.energy_history else None,
            "epsilon": self.epsilon,
        }


# --------------------------------------------------------------------------
# boundary post-processing
# --------------------------------------------------------------------------


def boundary_samples_for(mesh: Mesh) -> BoundarySamples:
    """Boundary quadrature aligned with the mesh's Gamma ring nodes."""
    return geometry.samples_on_nodes(mesh.domain, mesh.n_a)


def boundary_normal_derivative(mesh: Mesh, u: np.ndarray, bs: BoundarySamples) -> np.ndarray:
    """u_nu on Gamma from 3-point one-sided differences along each ray.

    Since u is constant on Gamma its gradient is normal there, so the ray
    derivative equals ``u_nu <nu, omega>``.
    """
    g = mesh.gamma_ring
    step = 1 if g == 0 else -1
    lat = u[mesh.dof]
    r = mesh.radii
    h1 = r[g + step] - r[g]
    h2 = r[g + 2 * step] - r[g]
    du = (
        -(h1 + h2) / (h1 * h2) * lat[g]
        + h2 / (h1 * (h2 - h1)) * lat[g + step]
        - h1 / (h2 * (h2 - h1)) * lat[g + 2 * step]
    )
    return du / bs.ray_cosine


def ring_fluxes(mesh: Mesh, grad_qp: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """Flux of -coeff grad u outward through each band between rings i and i+1.

    Computed variationally with the test function equal to 1 on rings <= i,
    which makes it independent of i up to the solve tolerance.
    """
    q = mesh.quad
    g_psi = q.grads[:, :, 0, :] + q.grads[:, :, 3, :]
    per_cell = np.sum(coeff * q.weights * np.einsum("cqd,cqd->cq", grad_qp, g_psi), axis=1)
    return np.bincount(mesh.cell_ring, weights=per_cell, minlength=mesh.n_r)


# --------------------------------------------------------------------------
# generic solve
# --------------------------------------------------------------------------


def _energy(mesh, asm_data, u, p, eps, bcs, eps_b, F):
    g = gradients(mesh, u)
    t = np.einsum("cqd,cqd->cq", g, g)
    E = float(np.sum(mesh.quad.weights * (t + eps * eps) ** (p / 2) / p))
    for name, beta in bcs.robin.items():
        edge = getattr(mesh, name)
        ue = edge_values(edge, u)
        E += float(beta * np.sum(edge.weights * (ue * ue + eps_b * eps_b) ** (p / 2) / p))
    return E - float(F @ u), g, t


def solve_p_laplace(mesh: Mesh, p: float, bcs: BoundaryConditions, rhs=None,
                    cfg: SolverConfig | None = None, u0=None, problem: str = "custom",
                    params: PLaplaceParams | None = None) -> SolveResult:
    """Minimize the regularized p-Dirichlet energy by damped lagged diffusivity."""
    cfg = cfg or SolverConfig()
    if not p > 1:
        raise ParameterError("p must exceed 1")
    n = mesh.n_dofs
    F = np.zeros(n) if rhs is None else np.asarray(rhs, dtype=float).copy()
    if bcs.load is not None:
        F = F + bcs.load
    dd = np.asarray(bcs.dirichlet_dofs, dtype=int)
    is_free = np.ones(n, dtype=bool)
    is_free[dd] = False
    if not np.any(is_free):
        raise ConfigError("boundary conditions leave no free unknowns")
    free = np.flatnonzero(is_free)

    u = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    u[dd] = bcs.dirichlet_values

    asm = Assembler(mesh)
    g0 = gradients(mesh, u)
    mean_grad = float(np.sum(mesh.quad.weights * np.linalg.norm(g0, axis=-1)) / np.sum(mesh.quad.weights))
    eps = cfg.epsilon_rel * max(mean_grad, 1e-300)
    eps_b = 0.0
    if bcs.robin:
        ub = np.concatenate([np.abs(edge_values(getattr(mesh, k), u)).ravel() for k in bcs.robin])
        eps_b = cfg.epsilon_rel * max(float(np.mean(ub)), 1e-300)

    E, g, t = _energy(mesh, None, u, p, eps, bcs, eps_b, F)
    history = [E]
    lin_its = []
    linear = p == 2.0
    alpha = cfg.damping
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        coeff = (t + eps * eps) ** ((p - 2) / 2)
        bnd = {}
        for name, beta in bcs.robin.items():
            ue = edge_values(getattr(mesh, name), u)
            bnd[name] = beta * (ue * ue + eps_b * eps_b) ** ((p - 2) / 2)
        A = asm.matrix(coeff, bnd)
        A_ff = A[free][:, free]
        b = F[free] - A[free][:, dd] @ u[dd]
        x, k = solve_spd(A_ff, b, u[free], cfg.linear_solver, cfg.linear_tol)
        lin_its.append(k)
        target = u.copy()
        target[free] = x

        accepted = False
        a = alpha
        while a >= 1e-10:
            trial = u + a * (target - u)
            E_new, g_new, t_new = _energy(mesh, None, trial, p, eps, bcs, eps_b, F)
            if E_new <= E + 1e-13 * abs(E):
                accepted = True
                break
            a *= 0.5
        if not accepted:
            log.warning("damping exhausted at iteration %d", it)
            break
        step = float(np.max(np.abs(trial - u)))
        scale = max(float(np.max(np.abs(trial))), 1e-300)
        dE = abs(E - E_new)
        gradient_energy = float(np.sum(mesh.quad.weights * (t_new + eps * eps) ** (p / 2) / p))
        u, E, g, t = trial, E_new, g_new, t_new
        history.append(E)
        alpha = min(cfg.damping, 2 * a)
        if linear and a == 1.0:
            converged = True
            break
        if dE <= cfg.energy_tol * max(abs(E), gradient_energy) and step <= cfg.step_tol * scale:
            converged = True
            break
    if not converged:
        log.warning("lagged diffusivity did not converge in %d iterations", it)

    coeff = (t + eps * eps) ** ((p - 2) / 2)
    bs = boundary_samples_for(mesh)
    u_nu = boundary_normal_derivative(mesh, u, bs)
    return SolveResult(
        problem=problem, mesh=mesh, p=float(p), u=u, converged=converged, iterations=it,
        energy_history=history, linear_iterations=lin_its, epsilon=eps, grad_qp=g,
        boundary=bs, u_nu=u_nu, grad_norm=np.abs(u_nu), ring_flux=ring_fluxes(mesh, g, coeff),
        config=cfg, params=params,
    )


# --------------------------------------------------------------------------
# the four boundary-value problems
# --------------------------------------------------------------------------


def _resolution(cfg, n_r, n_a):
    return (cfg.n_r if n_r is None else n_r), (cfg.n_a if n_a is None else n_a)


def _ray_angles(mesh):
    return np.broadcast_to(mesh.angles, mesh.radii.shape)


def solve_exterior_capacitary(d: StarDomain, params: PLaplaceParams, cfg: SolverConfig | None = None,
                              n_r: int | None = None, n_a: int | None = None,
                              r_out: float | None = None) -> SolveResult:
    """u = 1 on Gamma, decay-mode Robin condition on the truncation sphere.

    ``r_out`` overrides the truncation radius derived from ``cfg.rout_factor``.
    """
    cfg = cfg or SolverConfig()
    params.require_subcritical()
    if params.N != d.dimension:
        raise ParameterError("params.N must match the domain dimension")
    n_r, n_a = _resolution(cfg, n_r, n_a)
    if r_out is None:
        mesh = build_exterior_mesh(d, cfg, n_r, n_a)
    else:
        if r_out < 2.0 * d.circumradius():
            raise ConfigError("truncation radius is below twice the circumradius")
        mesh = build_mesh(d, "exterior", n_r, n_a, r_out)
    R = mesh.radial_map.fixed_radius
    k = params.decay
    rho = d.radius.derivatives(mesh.angles)[0]
    u0 = ((rho[None, :] / mesh.radii) ** k).ravel()
    bcs = BoundaryConditions(
        dirichlet_dofs=mesh.dof[0],
        dirichlet_values=np.ones(mesh.n_ang),
        robin={"outer": (k / R) ** (params.p - 1)},
    )
    return solve_p_laplace(mesh, params.p, bcs, None, cfg, u0=u0, problem="exterior", params=params)


def solve_conformal_exterior(d: StarDomain, cfg: SolverConfig | None = None,
                             n_r: int | None = None, n_a: int | None = None) -> SolveResult:
    """p = N: u = 1 on Gamma and u = 0 on the truncation sphere."""
    cfg = cfg or SolverConfig()
    N = d.dimension
    n_r, n_a = _resolution(cfg, n_r, n_a)
    mesh = build_exterior_mesh(d, cfg, n_r, n_a)
    R = mesh.radial_map.fixed_radius
    rho = d.radius.derivatives(mesh.angles)[0]
    u0 = (1.0 - np.log(mesh.radii / rho[None, :]) / np.log(R / rho[None, :])).ravel()
    bcs = BoundaryConditions(
        dirichlet_dofs=np.concatenate([mesh.dof[0], mesh.dof[n_r]]),
        dirichlet_values=np.concatenate([np.ones(mesh.n_ang), np.zeros(mesh.n_ang)]),
    )
    return solve_p_laplace(mesh, float(N), bcs, None, cfg, u0=u0, problem="conformal",
                           params=PLaplaceParams(float(N), N))


def solve_interior_punctured(d: StarDomain, params: PLaplaceParams, cfg: SolverConfig | None = None,
                             n_r: int | None = None, n_a: int | None = None) -> SolveResult:
    """Point source of strength |Gamma| at the star center, u = const on Gamma.

    The source is replaced by a uniform outward p-flux on a small excised
    sphere; the discrete flux is normalized to equal |Gamma| exactly.
    """
    cfg = cfg or SolverConfig()
    params.require_subcritical()
    if params.N != d.dimension:
        raise ParameterError("params.N must match the domain dimension")
    n_r, n_a = _resolution(cfg, n_r, n_a)
    mesh = build_interior_mesh(d, cfg, n_r, n_a)
    K = geometry.surface_measure(d)
    c = cf.interior_constant_c(d, params)
    m = edge_load(mesh, mesh.inner, 1.0)
    load = K * m / m.sum()
    rho = d.radius.derivatives(mesh.angles)[0]
    u0 = (c + cf.interior_singular_potential(params, K, mesh.radii)
          - cf.interior_singular_potential(params, K, rho[None, :])).ravel()
    bcs = BoundaryConditions(
        dirichlet_dofs=mesh.dof[n_r],
        dirichlet_values=np.full(mesh.n_ang, c),
        load=load,
    )
    res = solve_p_laplace(mesh, params.p, bcs, None, cfg, u0=u0, problem="interior", params=params)
    res.extras.update(source_strength=K, boundary_value=c, excision_flux=float(load.sum()),
                      excision_radius=mesh.radial_map.fixed_radius)
    return res


def solve_torsion(d: StarDomain, cfg: SolverConfig | None = None,
                  n_r: int | None = None, n_a: int | None = None) -> SolveResult:
    """Delta tau = N in Omega, tau = 0 on Gamma, on the polar mesh with a merged pole node."""
    cfg = cfg or SolverConfig()
    N = d.dimension
    n_r, n_a = _resolution(cfg, n_r, n_a)
    mesh = build_torsion_mesh(d, n_r, n_a)
    q = mesh.quad
    row_load = np.einsum("cq,qa->ca", q.weights, q.shape)
    F = -N * np.bincount(mesh.cells.ravel(), weights=row_load.ravel(), minlength=mesh.n_dofs)
    bcs = BoundaryConditions(
        dirichlet_dofs=mesh.dof[n_r], dirichlet_values=np.zeros(mesh.n_ang)
    )
    res = solve_p_laplace(mesh, 2.0, bcs, F, cfg, problem="torsion")
    return res


SOLVERS = {
    "exterior": solve_exterior_capacitary,
    "conformal": solve_conformal_exterior,
    "interior": solve_interior_punctured,
    "torsion": solve_torsion,
}


def run_problem(problem: str, d: StarDomain, p: float | None, cfg: SolverConfig,
                n_r: int | None = None, n_a: int | None = None) -> SolveResult:
    if problem in ("exterior", "interior"):
        if p is None:
            raise ParameterError(f"{problem} problem needs p")
        return SOLVERS[problem](d, PLaplaceParams(float(p), d.dimension), cfg, n_r, n_a)
    if problem in ("conformal", "torsion"):
        return SOLVERS[problem](d, cfg, n_r, n_a)
    raise ConfigError(f"unknown problem {problem!r}; choose from {', '.join(PROBLEMS)}")


# --------------------------------------------------------------------------
# closed-form fields sampled on a mesh
# --------------------------------------------------------------------------


def sample_exact_field(mesh: Mesh, p: float, value_fn, grad_fn, problem: str,
                       params: PLaplaceParams | None = None) -> SolveResult:
    """Wrap an analytic field as a SolveResult with exact gradients at quadrature points.

    ``value_fn`` and ``grad_fn`` take offsets from the star center in the
    solver frame, shape (..., 2).
    """
    lattice_vals = value_fn(mesh.planar)
    u = np.zeros(mesh.n_dofs)
    u[mesh.dof.ravel()] = lattice_vals.ravel()
    g = grad_fn(mesh.quad.points)
    bs = boundary_samples_for(mesh)
    ring = mesh.planar[mesh.gamma_ring]
    grad_b = grad_fn(ring)
    u_nu = np.einsum("jd,jd->j", grad_b, bs.planar_normals)
    t = np.einsum("cqd,cqd->cq", g, g)
    with np.errstate(divide="ignore"):
        coeff = t ** ((p - 2) / 2) if p != 2 else np.ones_like(t)
    return SolveResult(
        problem=problem, mesh=mesh, p=float(p), u=u, converged=True, iterations=0,
        energy_history=[], linear_iterations=[], epsilon=0.0, grad_qp=g, boundary=bs,
        u_nu=u_nu, grad_norm=np.linalg.norm(grad_b, axis=-1), ring_flux=ring_fluxes(mesh, g, coeff),
        params=params, exact=True,
    )


def exact_ball_exterior(d: StarDomain, params: PLaplaceParams, cfg: SolverConfig | None = None,
                        n_r: int | None = None, n_a: int | None = None) -> SolveResult:
    """Closed-form capacitary potential of a ball centered at the star center."""
    if not d.is_ball:
        raise ParameterError("exact exterior field is only known for balls")
    cfg = cfg or SolverConfig()
    n_r, n_a = _resolution(cfg, n_r, n_a)
    mesh = build_mesh(d, "exterior", n_r, n_a, exterior_radius(d, cfg.rout_factor))
    R = float(d.radius.derivatives(np.zeros(1))[0][0])
    k = params.decay

    def value(x):
        return (R / np.linalg.norm(x, axis=-1)) ** k

    def grad(x):
        r = np.linalg.norm(x, axis=-1)
        return (-k * R**k * r ** (-k - 2))[..., None] * x

    return sample_exact_field(mesh, params.p, value, grad, "exterior", params)
