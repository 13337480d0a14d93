"""Mapped structured grids over star-shaped domains.

Nodes sit on rays from the star center: ``x = z + r(s, t) omega(t)`` with
``s`` in [0, 1] the radial lattice coordinate and ``t`` the angle. The
bilinear space is defined in (s, t) and pushed through the exact map, so the
inner and outer rings coincide with the true curves.

For N=3 everything lives in the meridian half-plane; volume and surface
measures carry the factor ``2 pi * (distance to axis)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from serrinlab.errors import ConfigError
from serrinlab.geometry import StarDomain, angular_nodes, direction_vectors

GAUSS2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5]))
GAUSS3 = (
    np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]),
    np.array([5.0, 8.0, 5.0]) / 18.0,
)

KINDS = ("exterior", "interior", "torsion")


def _bilinear(xi, eta):
    """Shape functions and reference derivatives, node order (i,j),(i+1,j),(i+1,j+1),(i,j+1)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=-1)
    dxi = np.stack([-(1 - eta), 1 - eta, eta, -eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, xi, 1 - xi], axis=-1)
    return N, dxi, deta


@dataclass(frozen=True)
class RadialMap:
    """r(s, t) between an inner and an outer radius function along each ray."""

    kind: str
    domain: StarDomain
    fixed_radius: float  # R_out (exterior), excision radius (interior), unused (torsion)

    def __call__(self, s, t):
        """Return (r, dr/ds, dr/dt)."""
        rho, drho, _ = self.domain.radius.derivatives(t)
        if self.kind == "torsion":
            return s * rho, rho, s * drho
        lf = np.log(self.fixed_radius)
        lr = np.log(rho)
        if self.kind == "exterior":
            r = np.exp((1 - s) * lr + s * lf)
            return r, r * (lf - lr), r * (1 - s) * drho / rho
        r = np.exp((1 - s) * lf + s * lr)
        return r, r * (lr - lf), r * s * drho / rho


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Basis data at reference points of every cell."""

    shape: np.ndarray  # (nq, 4)
    grads: np.ndarray  # (ncell, nq, 4, 2)
    weights: np.ndarray  # (ncell, nq), includes the axisymmetric factor
    points: np.ndarray  # (ncell, nq, 2) offsets from the center, solver frame


@dataclass(frozen=True, eq=False)
class EdgeQuadrature:
    """1D quadrature on one ring (inner or outer boundary)."""

    dofs: np.ndarray  # (nedge, 2)
    shape: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nedge, nq) surface element times quadrature weight


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: StarDomain
    kind: str
    n_r: int
    n_a: int
    radial_map: RadialMap
    s: np.ndarray
    angles: np.ndarray
    radii: np.ndarray  # (n_r + 1, n_ang)
    planar: np.ndarray  # (n_r + 1, n_ang, 2)
    dof: np.ndarray  # (n_r + 1, n_ang) lattice -> dof
    n_dofs: int
    cells: np.ndarray  # (ncell, 4) dof indices
    cell_ring: np.ndarray
    cell_angle: np.ndarray
    quad: CellQuadrature
    inner: EdgeQuadrature
    outer: EdgeQuadrature

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def n_ang(self) -> int:
        return len(self.angles)

    @property
    def periodic(self) -> bool:
        return self.domain.dimension == 2

    @property
    def gamma_ring(self) -> int:
        """Lattice ring index of the physical boundary."""
        return 0 if self.kind == "exterior" else self.n_r

    def ring_dofs(self, i: int) -> np.ndarray:
        return np.unique(self.dof[i])

    def space_points(self) -> np.ndarray:
        """Node coordinates in R^N, shape (n_r + 1, n_ang, N)."""
        c = np.asarray(self.domain.center)
        if self.dimension == 2:
            return c + self.planar
        out = np.zeros(self.planar.shape[:-1] + (3,))
        out[..., 0] = c[0] + self.planar[..., 0]
        out[..., 1] = c[1]
        out[..., 2] = c[2] + self.planar[..., 1]
        return out

    def evaluate(self, xi, eta) -> CellQuadrature:
        """Physical basis gradients and measure at reference points (xi[q], eta[q])."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        shape, dxi, deta = _bilinear(xi, eta)
        i = self.cell_ring
        j = self.cell_angle
        ds = self.s[i + 1] - self.s[i]
        dt = np.pi / self.n_a if not self.periodic else 2 * np.pi / self.n_a
        s = self.s[i][:, None] + xi[None, :] * ds[:, None]
        t = self.angles[j][:, None] + eta[None, :] * dt
        r, r_s, r_t = self.radial_map(s, t)
        om, dom = direction_vectors(self.dimension, t)
        x_s = r_s[..., None] * om * ds[:, None, None]
        x_t = (r_t[..., None] * om + r[..., None] * dom) * dt
        a, c = x_s[..., 0], x_s[..., 1]
        b, d = x_t[..., 0], x_t[..., 1]
        det = a * d - b * c
        gx = (d[..., None] * dxi - c[..., None] * deta) / det[..., None]
        gy = (-b[..., None] * dxi + a[..., None] * deta) / det[..., None]
        grads = np.stack([gx, gy], axis=-1)
        points = r[..., None] * om
        measure = np.abs(det)
        if self.dimension == 3:
            measure = measure * 2.0 * np.pi * points[..., 0]
        return CellQuadrature(shape=shape, grads=grads, weights=measure, points=points)


def _edge_quadrature(kind, domain, rmap, s_value, dofs_ring, angles, n_a, periodic):
    xg, wg = GAUSS3
    dt = 2 * np.pi / n_a if periodic else np.pi / n_a
    j = np.arange(n_a)
    j1 = (j + 1) % len(angles) if periodic else j + 1
    t = angles[j][:, None] + xg[None, :] * dt
    r, _, r_t = rmap(np.full_like(t, s_value), t)
    om, dom = direction_vectors(domain.dimension, t)
    x_t = r_t[..., None] * om + r[..., None] * dom
    dS = np.linalg.norm(x_t, axis=-1) * dt * wg[None, :]
    if domain.dimension == 3:
        dS = dS * 2.0 * np.pi * r * om[..., 0]
    shape = np.stack([1 - xg, xg], axis=-1)
    return EdgeQuadrature(dofs=np.stack([dofs_ring[j], dofs_ring[j1]], axis=-1), shape=shape, weights=dS)


def build_mesh(d: StarDomain, kind: str, n_r: int, n_a: int, fixed_radius: float | None = None) -> Mesh:
    """Structured mesh of the given kind. ``fixed_radius`` is R_out or the excision radius."""
    if kind not in KINDS:
        raise ConfigError(f"unknown mesh kind {kind!r}")
    if n_r < 2 or n_a < 4:
        raise ConfigError("mesh needs n_r >= 2 and n_a >= 4")
    if kind != "torsion":
        if fixed_radius is None or not fixed_radius > 0:
            raise ConfigError(f"{kind} mesh needs a positive fixed radius")
    rmap = RadialMap(kind, d, float(fixed_radius or 0.0))
    periodic = d.dimension == 2
    angles, _ = angular_nodes(d.dimension, n_a)
    n_ang = len(angles)
    s = np.linspace(0.0, 1.0, n_r + 1)
    S, T = np.meshgrid(s, angles, indexing="ij")
    radii, _, _ = rmap(S, T)
    om, _ = direction_vectors(d.dimension, T)
    planar = radii[..., None] * om
    if np.any(np.diff(radii, axis=0) <= 0):
        raise ConfigError("radial map is not monotone: check fixed radius against the domain")

    lattice = np.arange((n_r + 1) * n_ang).reshape(n_r + 1, n_ang)
    if kind == "torsion":
        dof = np.empty_like(lattice)
        dof[0] = 0
        dof[1:] = lattice[1:] - n_ang + 1
        n_dofs = n_r * n_ang + 1
    else:
        dof = lattice
        n_dofs = lattice.size

    ii, jj = np.meshgrid(np.arange(n_r), np.arange(n_a), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    jn = (jj + 1) % n_ang if periodic else jj + 1
    cells = np.stack([dof[ii, jj], dof[ii + 1, jj], dof[ii + 1, jn], dof[ii, jn]], axis=-1)

    mesh = Mesh(
        domain=d, kind=kind, n_r=n_r, n_a=n_a, radial_map=rmap, s=s, angles=angles,
        radii=radii, planar=planar, dof=dof, n_dofs=n_dofs, cells=cells,
        cell_ring=ii, cell_angle=jj, quad=None, inner=None, outer=None,
    )
    xg, wg = GAUSS2
    XI, ETA = np.meshgrid(xg, xg, indexing="ij")
    quad = mesh.evaluate(XI.ravel(), ETA.ravel())
    gw = np.outer(wg, wg).ravel()
    quad = CellQuadrature(quad.shape, quad.grads, quad.weights * gw[None, :], quad.points)
    if np.any(quad.weights < 0) or not np.all(np.isfinite(quad.weights)):
        raise ConfigError("non-positive cell Jacobian")
    object.__setattr__(mesh, "quad", quad)
    object.__setattr__(
        mesh, "inner", _edge_quadrature(kind, d, rmap, 0.0, dof[0], angles, n_a, periodic)
    )
    object.__setattr__(
        mesh, "outer", _edge_quadrature(kind, d, rmap, 1.0, dof[n_r], angles, n_a, periodic)
    )
    return mesh


def exterior_radius(d: StarDomain, rout_factor: float) -> float:
    R_out = rout_factor * d.diameter()
    if R_out < 2.0 * d.circumradius():
        raise ConfigError(
            f"truncation radius {R_out:.4g} is below twice the circumradius {d.circumradius():.4g}"
        )
    return R_out


def excision_radius(d: StarDomain, excision_factor: float) -> float:
    if not 0 < excision_factor <= 0.25:
        raise ConfigError("excision radius must be small against the inradius (factor <= 1/4)")
    return excision_factor * d.inradius_about_center()


def build_exterior_mesh(d: StarDomain, cfg, n_r: int, n_a: int) -> Mesh:
    if n_r < 8 or n_a < 8:
        raise ConfigError("exterior mesh needs n_r, n_a >= 8")
    return build_mesh(d, "exterior", n_r, n_a, exterior_radius(d, cfg.rout_factor))


def build_interior_mesh(d: StarDomain, cfg, n_r: int, n_a: int) -> Mesh:
    return build_mesh(d, "interior", n_r, n_a, excision_radius(d, cfg.excision_factor))


def build_torsion_mesh(d: StarDomain, n_r: int, n_a: int) -> Mesh:
    return build_mesh(d, "torsion", n_r, n_a)
