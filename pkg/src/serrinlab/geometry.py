"""Star-shaped C^2 domains given as radial graphs over the unit sphere.

In the plane (N=2) the boundary is ``x = z + rho(theta) (cos theta, sin theta)``.
In space (N=3) only surfaces of revolution are supported: the profile
``rho(phi)`` is a function of the polar angle measured from the symmetry axis,
which passes through the center ``z`` parallel to the third coordinate axis.

Angular integrals use the periodic trapezoid rule for N=2 and Clenshaw-Curtis
weights in ``cos(phi)`` for N=3; both are spectrally accurate for smooth
profiles.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from serrinlab.errors import InvalidDomainError

DEFAULT_QUADRATURE = {2: 4096, 3: 1024}
_VALIDATION_SAMPLES = 4096


# --------------------------------------------------------------------------
# radius functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigRadius:
    """rho(t) = sum_k a_k cos(k t) + sum_k b_k sin(k t), with b_0 ignored."""

    cos_coeffs: tuple[float, ...]
    sin_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))
        if not self.cos_coeffs:
            raise InvalidDomainError("cos_coeffs must contain at least the constant term")
        if not all(math.isfinite(c) for c in self.cos_coeffs + self.sin_coeffs):
            raise InvalidDomainError("radius coefficients must be finite")

    def derivatives(self, t):
        """Return ``(rho, rho', rho'')`` at angles ``t``."""
        t = np.asarray(t, dtype=float)
        r0 = np.zeros_like(t)
        r1 = np.zeros_like(t)
        r2 = np.zeros_like(t)
        for k, a in enumerate(self.cos_coeffs):
            if a == 0.0:
                continue
            c, s = np.cos(k * t), np.sin(k * t)
            r0 += a * c
            r1 -= a * k * s
            r2 -= a * k * k * c
        for k, b in enumerate(self.sin_coeffs):
            if k == 0 or b == 0.0:
                continue
            c, s = np.cos(k * t), np.sin(k * t)
            r0 += b * s
            r1 += b * k * c
            r2 -= b * k * k * s
        return r0, r1, r2

    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.cos_coeffs[1:]) and all(
            b == 0.0 for b in self.sin_coeffs[1:]
        )

    def to_config(self) -> dict:
        return {"cos_coeffs": list(self.cos_coeffs), "sin_coeffs": list(self.sin_coeffs)}

    def __add__(self, other: "TrigRadius") -> "TrigRadius":
        n_c = max(len(self.cos_coeffs), len(other.cos_coeffs))
        n_s = max(len(self.sin_coeffs), len(other.sin_coeffs))
        pad = lambda v, n: list(v) + [0.0] * (n - len(v))  # noqa: E731
        return TrigRadius(
            tuple(np.add(pad(self.cos_coeffs, n_c), pad(other.cos_coeffs, n_c))),
            tuple(np.add(pad(self.sin_coeffs, n_s), pad(other.sin_coeffs, n_s))),
        )

    def scaled(self, factor: float) -> "TrigRadius":
        return TrigRadius(
            tuple(factor * c for c in self.cos_coeffs),
            tuple(factor * b for b in self.sin_coeffs),
        )


@dataclass(frozen=True)
class EllipseRadius:
    """Polar graph of the ellipse (or spheroid profile) with semi-axis ``a`` along t=0.

    rho(t) = a b / sqrt(a^2 sin^2 t + b^2 cos^2 t).
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidDomainError("ellipse semi-axes must be positive")

    def derivatives(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.a, self.b
        q = a * a * np.sin(t) ** 2 + b * b * np.cos(t) ** 2
        dq = (a * a - b * b) * np.sin(2 * t)
        ddq = 2 * (a * a - b * b) * np.cos(2 * t)
        r0 = a * b * q**-0.5
        r1 = -0.5 * a * b * q**-1.5 * dq
        r2 = a * b * (0.75 * q**-2.5 * dq * dq - 0.5 * q**-1.5 * ddq)
        return r0, r1, r2

    def is_constant(self) -> bool:
        return self.a == self.b

    def to_config(self) -> dict:
        return {"ellipse": [self.a, self.b]}


@dataclass(frozen=True)
class PerturbedRadius:
    """``base + step * direction`` for radius functions without a closed sum."""

    base: object
    direction: object
    step: float

    def derivatives(self, t):
        b = self.base.derivatives(t)
        d = self.direction.derivatives(t)
        return tuple(bi + self.step * di for bi, di in zip(b, d))

    def is_constant(self) -> bool:
        return self.step == 0.0 and self.base.is_constant()

    def to_config(self) -> dict:
        return {
            "perturbed": {
                "base": self.base.to_config(),
                "direction": self.direction.to_config(),
                "step": self.step,
            }
        }


def _radius_from_config(cfg: dict):
    if "ellipse" in cfg:
        a, b = cfg["ellipse"]
        return EllipseRadius(float(a), float(b))
    if "perturbed" in cfg:
        sub = cfg["perturbed"]
        return PerturbedRadius(
            _radius_from_config(sub["base"]),
            _radius_from_config(sub["direction"]),
            float(sub["step"]),
        )
    if "cos_coeffs" not in cfg:
        raise InvalidDomainError("domain config needs cos_coeffs (or ellipse)")
    return TrigRadius(tuple(cfg["cos_coeffs"]), tuple(cfg.get("sin_coeffs", ())))


# --------------------------------------------------------------------------
# angular quadrature
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _clenshaw_curtis(n: int) -> np.ndarray:
    """Weights for int_0^pi g(phi) sin(phi) dphi at phi_j = j pi / n, j = 0..n."""
    j = np.arange(n + 1)
    k = np.arange(1, n // 2 + 1)
    b = np.full(k.shape, 2.0)
    if n % 2 == 0:
        b[-1] = 1.0
    c = np.full(n + 1, 2.0)
    c[0] = c[-1] = 1.0
    cos_terms = np.cos(2.0 * np.outer(j, k) * np.pi / n)
    w = (c / n) * (1.0 - cos_terms @ (b / (4.0 * k * k - 1.0)))
    w.setflags(write=False)
    return w


def angular_nodes(dimension: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Angles and base quadrature weights for ``n`` angular intervals.

    N=2: ``n`` periodic nodes, weights ``2 pi / n`` (integrates ``dtheta``).
    N=3: ``n + 1`` nodes including both poles, Clenshaw-Curtis weights that
    integrate ``sin(phi) dphi``.
    """
    if dimension == 2:
        theta = 2.0 * np.pi * np.arange(n) / n
        return theta, np.full(n, 2.0 * np.pi / n)
    if dimension == 3:
        return np.pi * np.arange(n + 1) / n, _clenshaw_curtis(n)
    raise InvalidDomainError(f"dimension must be 2 or 3, got {dimension}")


def direction_vectors(dimension: int, t):
    """Unit direction omega(t) and its derivative, in the solver's 2D frame.

    For N=3 the frame is the meridian half-plane (distance from axis, height).
    """
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t), np.sin(t)
    if dimension == 2:
        return np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)
    return np.stack([s, c], axis=-1), np.stack([c, -s], axis=-1)


def meridian_to_space(center: np.ndarray, planar: np.ndarray) -> np.ndarray:
    """Map meridian-plane offsets (rho_cyl, height) to points in R^3 at azimuth 0."""
    out = np.zeros(planar.shape[:-1] + (3,))
    out[..., 0] = center[0] + planar[..., 0]
    out[..., 1] = center[1]
    out[..., 2] = center[2] + planar[..., 1]
    return out


# --------------------------------------------------------------------------
# domain + samples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundarySample:
    angle: float
    point: np.ndarray
    normal: np.ndarray
    mean_curvature: float
    weight: float
    support: float


@dataclass(frozen=True)
class BoundarySamples:
    """Struct-of-arrays quadrature on the boundary; iterate for per-node records.

    ``points`` and ``normals`` are in full space coordinates (N columns).
    ``planar_normals`` are the same normals in the solver frame.
    """

    angles: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    planar_normals: np.ndarray
    mean_curvature: np.ndarray
    weights: np.ndarray
    support: np.ndarray
    ray_cosine: np.ndarray  # <nu, omega> = rho / sqrt(rho^2 + rho'^2)

    def __len__(self) -> int:
        return len(self.angles)

    def __getitem__(self, i: int) -> BoundarySample:
        return BoundarySample(
            float(self.angles[i]),
            self.points[i],
            self.normals[i],
            float(self.mean_curvature[i]),
            float(self.weights[i]),
            float(self.support[i]),
        )

    def __iter__(self) -> Iterator[BoundarySample]:
        for i in range(len(self)):
            yield self[i]

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def to_csv(self, path) -> None:
        dim = self.points.shape[1]
        names = "xyz"[:dim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["angle", *[f"x_{c}" for c in names], *[f"nu_{c}" for c in names], "H", "w"]
            )
            for i in range(len(self)):
                w.writerow(
                    [repr(float(self.angles[i]))]
                    + [repr(float(v)) for v in self.points[i]]
                    + [repr(float(v)) for v in self.normals[i]]
                    + [repr(float(self.mean_curvature[i])), repr(float(self.weights[i]))]
                )


@dataclass(frozen=True)
class StarDomain:
    dimension: int
    center: tuple[float, ...]
    radius: object

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise InvalidDomainError(f"dimension must be 2 or 3, got {self.dimension}")
        center = tuple(float(c) for c in self.center)
        if len(center) != self.dimension:
            raise InvalidDomainError("center must have one coordinate per dimension")
        object.__setattr__(self, "center", center)
        if self.dimension == 3 and isinstance(self.radius, TrigRadius):
            if any(b != 0.0 for b in self.radius.sin_coeffs[1:]):
                raise InvalidDomainError(
                    "N=3 profiles are even in the polar angle: sin_coeffs must vanish"
                )
        span = 2 * np.pi if self.dimension == 2 else np.pi
        t = np.linspace(0.0, span, _VALIDATION_SAMPLES + 1)
        r0, r1, r2 = self.radius.derivatives(t)
        if not np.all(np.isfinite(r0) & np.isfinite(r1) & np.isfinite(r2)):
            raise InvalidDomainError("radius function is not finite on the sample grid")
        if np.min(r0) <= 0.0:
            raise InvalidDomainError(
                f"radius function must be positive (min sample {np.min(r0):.6g})"
            )

    # constructors -----------------------------------------------------------

    @classmethod
    def ball(cls, dimension: int, R: float = 1.0, center=None) -> "StarDomain":
        center = (0.0,) * dimension if center is None else center
        return cls(dimension, center, TrigRadius((float(R),)))

    @classmethod
    def ellipse(cls, a: float, b: float, center=(0.0, 0.0)) -> "StarDomain":
        return cls(2, center, EllipseRadius(a, b))

    @classmethod
    def from_coeffs(cls, dimension, cos_coeffs, sin_coeffs=(), center=None) -> "StarDomain":
        center = (0.0,) * dimension if center is None else center
        return cls(dimension, center, TrigRadius(tuple(cos_coeffs), tuple(sin_coeffs)))

    @classmethod
    def from_config(cls, cfg: dict) -> "StarDomain":
        try:
            dim = int(cfg["dimension"])
            center = cfg.get("center", [0.0] * dim)
            return cls(dim, tuple(center), _radius_from_config(cfg))
        except InvalidDomainError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDomainError(f"malformed domain config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "StarDomain":
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidDomainError(f"cannot read domain config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InvalidDomainError("domain config must be a JSON object")
        return cls.from_config(cfg)

    def to_config(self) -> dict:
        return {"dimension": self.dimension, "center": list(self.center), **self.radius.to_config()}

    def perturbed(self, direction, step: float) -> "StarDomain":
        """Domain with radius ``rho + step * direction``, same center."""
        if isinstance(self.radius, TrigRadius) and isinstance(direction, TrigRadius):
            radius = self.radius + direction.scaled(step)
        else:
            radius = PerturbedRadius(self.radius, direction, float(step))
        return StarDomain(self.dimension, self.center, radius)

    # basic queries ----------------------------------------------------------

    @property
    def is_ball(self) -> bool:
        return self.radius.is_constant()

    def radius_at(self, t):
        return self.radius.derivatives(t)

    def circumradius(self) -> float:
        """Largest distance from the center to the boundary."""
        span = 2 * np.pi if self.dimension == 2 else np.pi
        t = np.linspace(0.0, span, _VALIDATION_SAMPLES + 1)
        return float(np.max(self.radius.derivatives(t)[0]))

    def inradius_about_center(self) -> float:
        """Distance from the center to the boundary."""
        span = 2 * np.pi if self.dimension == 2 else np.pi
        t = np.linspace(0.0, span, _VALIDATION_SAMPLES + 1)
        return float(np.min(self.radius.derivatives(t)[0]))

    def diameter(self, n: int = 512) -> float:
        t, _ = angular_nodes(self.dimension, n)
        rho = self.radius.derivatives(t)[0]
        omega, _ = direction_vectors(self.dimension, t)
        pts = rho[:, None] * omega
        if self.dimension == 2:
            diff = pts[:, None, :] - pts[None, :, :]
            return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))
        # points on opposite meridians of the surface of revolution
        rc = pts[:, 0]
        h = pts[:, 1]
        d2 = (rc[:, None] + rc[None, :]) ** 2 + (h[:, None] - h[None, :]) ** 2
        return float(np.sqrt(np.max(d2)))


def boundary_samples(d: StarDomain, n: int) -> BoundarySamples:
    """Quadrature nodes on the boundary with normals, mean curvature and weights."""
    if n < 16:
        raise ValueError("boundary_samples needs n >= 16")
    return samples_on_nodes(d, n)


def samples_on_nodes(d: StarDomain, n: int) -> BoundarySamples:
    """``boundary_samples`` without the resolution floor, for coarse mesh rings."""
    t, base_w = angular_nodes(d.dimension, n)
    rho, d1, d2 = d.radius.derivatives(t)
    omega, domega = direction_vectors(d.dimension, t)
    L = np.sqrt(rho * rho + d1 * d1)
    planar_nu = (rho[:, None] * omega - d1[:, None] * domega) / L[:, None]
    kappa = (rho * rho + 2 * d1 * d1 - rho * d2) / L**3
    center = np.asarray(d.center)
    planar_pts = rho[:, None] * omega
    if d.dimension == 2:
        H = kappa
        weights = base_w * L
        points = center + planar_pts
        normals = planar_nu
    else:
        s = np.sin(t)
        on_axis = np.abs(s) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa2 = np.where(on_axis, kappa, planar_nu[:, 0] / (rho * np.where(on_axis, 1.0, s)))
        H = 0.5 * (kappa + kappa2)
        weights = base_w * 2.0 * np.pi * rho * L
        points = meridian_to_space(center, planar_pts)
        normals = meridian_to_space(np.zeros(3), planar_nu)
    support = rho * rho / L
    return BoundarySamples(
        angles=t,
        rho=rho,
        drho=d1,
        points=points,
        normals=normals,
        planar_normals=planar_nu,
        mean_curvature=H,
        weights=weights,
        support=support,
        ray_cosine=rho / L,
    )


# --------------------------------------------------------------------------
# scalar geometric quantities
# --------------------------------------------------------------------------


def _n_default(d: StarDomain, n):
    return DEFAULT_QUADRATURE[d.dimension] if n is None else n


def unit_sphere_measure(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} (2 pi for N=2, 4 pi for N=3)."""
    if N < 1:
        raise ValueError("dimension must be positive")
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def volume(d: StarDomain, n: int | None = None) -> float:
    """|Omega| = (1/N) * integral of rho^N over the unit sphere."""
    n = _n_default(d, n)
    t, w = angular_nodes(d.dimension, n)
    rho = d.radius.derivatives(t)[0]
    if d.dimension == 2:
        return float(np.dot(w, rho**2) / 2.0)
    return float(2.0 * np.pi * np.dot(w, rho**3) / 3.0)


def surface_measure(d: StarDomain, n: int | None = None) -> float:
    return float(np.sum(boundary_samples(d, _n_default(d, n)).weights))


def h0(d: StarDomain, n: int | None = None) -> float:
    """Reference curvature |Gamma| / (N |Omega|)."""
    return surface_measure(d, n) / (d.dimension * volume(d, n))


def isoperimetric_deficit(d: StarDomain, n: int | None = None) -> float:
    """|Gamma|^{N/(N-1)} / (N omega_N^{1/(N-1)}) - |Omega|, non-negative."""
    N = d.dimension
    G = surface_measure(d, n)
    om = unit_sphere_measure(N)
    return G ** (N / (N - 1)) / (N * om ** (1.0 / (N - 1))) - volume(d, n)


def minkowski_residual(d: StarDomain, n: int | None = None) -> float:
    """int_Gamma H <x - z, nu> dS - |Gamma| at angular resolution ``n``."""
    bs = boundary_samples(d, _n_default(d, n))
    return float(np.dot(bs.weights, bs.mean_curvature * bs.support) - np.sum(bs.weights))


def star_support_min(d: StarDomain, n: int | None = None) -> float:
    """Minimum of <x - z, nu> over the boundary samples."""
    return float(np.min(boundary_samples(d, _n_default(d, n)).support))


def curvature_gap(d: StarDomain, n: int | None = None) -> tuple[float, float]:
    """(min, max) of H0 - H over the boundary."""
    n = _n_default(d, n)
    bs = boundary_samples(d, n)
    gap = h0(d, n) - bs.mean_curvature
    return float(np.min(gap)), float(np.max(gap))


def random_trig_domain(rng: np.random.Generator, dimension: int = 2, modes: int = 5,
                       amplitude: float = 0.25) -> StarDomain:
    """A random radial graph 1 + sum a_k cos(k t) + b_k sin(k t) with rho >= 1 - amplitude."""
    a = rng.normal(size=modes)
    b = rng.normal(size=modes) if dimension == 2 else np.zeros(modes)
    scale = amplitude / (np.sum(np.abs(a)) + np.sum(np.abs(b)))
    cos = (1.0, *(scale * a))
    sin = (0.0, *(scale * b)) if dimension == 2 else ()
    return StarDomain.from_coeffs(dimension, cos, sin)

