"""Explicit formulas for p-capacitary potentials, capacities and P-function values.

All formulas take ``omega_N`` to be the surface measure of the unit sphere
``S^{N-1}``; with this normalization the ball capacity for p=2, N=3, R=1 is
``4 pi`` (see ``omega_convention_check``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from serrinlab import geometry
from serrinlab.errors import ParameterError
from serrinlab.geometry import StarDomain, unit_sphere_measure


@dataclass(frozen=True)
class PLaplaceParams:
    p: float
    N: int

    def __post_init__(self):
        if self.N not in (2, 3):
            raise ParameterError(f"dimension N must be 2 or 3, got {self.N}")
        if not (self.p > 1.0):
            raise ParameterError(f"exponent p must exceed 1, got {self.p}")
        if self.p > self.N:
            raise ParameterError(f"exponent p={self.p} exceeds the dimension N={self.N}")

    @property
    def decay(self) -> float:
        """(N - p) / (p - 1): the decay exponent of the fundamental solution."""
        self.require_subcritical()
        return (self.N - self.p) / (self.p - 1.0)

    @property
    def p_exponent(self) -> float:
        """p (N - 1) / (N - p): the power of u in the P-function denominator."""
        self.require_subcritical()
        return self.p * (self.N - 1) / (self.N - self.p)

    @property
    def omega(self) -> float:
        return unit_sphere_measure(self.N)

    def require_subcritical(self):
        if not self.p < self.N:
            raise ParameterError(f"this formula needs p < N (got p={self.p}, N={self.N})")


def _check_positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise ParameterError(f"{name} must be positive")


def fundamental_solution(params: PLaplaceParams, r):
    """Radial fundamental solution ((p-1)/(N-p)) omega_N^{-1/(p-1)} r^{-(N-p)/(p-1)}."""
    params.require_subcritical()
    _check_positive("r", r)
    p = params.p
    return (p - 1) / (params.N - p) * params.omega ** (-1.0 / (p - 1)) * np.power(r, -params.decay)


def ball_exterior_potential(params: PLaplaceParams, R: float, x0, x):
    """Capacitary potential of the ball B_R(x0): (R / |x - x0|)^{(N-p)/(p-1)}."""
    params.require_subcritical()
    dist = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(x0, dtype=float), axis=-1)
    if np.any(dist < R * (1 - 1e-14)):
        raise ParameterError("point lies inside the ball")
    return (R / dist) ** params.decay


def ball_capacity(params: PLaplaceParams, R: float) -> float:
    """omega_N ((N-p)/(p-1))^{p-1} R^{N-p}."""
    _check_positive("R", R)
    return params.omega * params.decay ** (params.p - 1) * R ** (params.N - params.p)


def serrin_constant(d: StarDomain, params: PLaplaceParams) -> float:
    """Value of |grad u| on the boundary forced by the overdetermined condition."""
    return params.decay * geometry.h0(d)


def capacity_from_geometry(d: StarDomain, params: PLaplaceParams) -> float:
    """((N-p)/(p-1))^{p-1} |Gamma|^p / (N |Omega|)^{p-1}; exact only when |grad u| is constant."""
    p = params.p
    G = geometry.surface_measure(d)
    V = geometry.volume(d)
    return params.decay ** (p - 1) * G**p / (params.N * V) ** (p - 1)


def gamma_from_capacity(cap: float, params: PLaplaceParams) -> float:
    """Far-field amplitude gamma = Cap^{1/(p-1)} in u ~ gamma * mu."""
    _check_positive("capacity", cap)
    return cap ** (1.0 / (params.p - 1.0))


def p_function_value(u, grad_norm, params: PLaplaceParams):
    """P = |grad u|^p / u^{p(N-1)/(N-p)}."""
    _check_positive("u", u)
    return np.power(grad_norm, params.p) / np.power(u, params.p_exponent)


def p_function_limit(d: StarDomain, params: PLaplaceParams) -> float:
    """Limit of P at infinity when the capacity takes its overdetermined value."""
    p, N = params.p, params.N
    G = geometry.surface_measure(d)
    V = geometry.volume(d)
    return params.decay**p * (params.omega * (N * V) ** (p - 1) / G**p) ** (p / (N - p))


def p_function_limit_from_capacity(cap: float, params: PLaplaceParams) -> float:
    """Limit of P at infinity for a potential of capacity ``cap``."""
    return params.decay**params.p_exponent * (params.omega / cap) ** (
        params.p / (params.N - params.p)
    )


def p_function_boundary(d: StarDomain, params: PLaplaceParams) -> float:
    """P on Gamma when u = 1 and |grad u| equals the Serrin constant."""
    return (params.decay * geometry.h0(d)) ** params.p


def conformal_log_potential(N: int, c: float, surface: float, x0, x):
    """-c (|Gamma| / omega_N)^{1/(N-1)} ln|x - x0|, zero additive constant (p = N)."""
    if N not in (2, 3):
        raise ParameterError(f"dimension N must be 2 or 3, got {N}")
    _check_positive("surface", surface)
    dist = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(x0, dtype=float), axis=-1)
    _check_positive("|x - x0|", dist)
    return -conformal_log_coefficient(N, c, surface) * np.log(dist)


def conformal_log_coefficient(N: int, c: float, surface: float) -> float:
    return c * (surface / unit_sphere_measure(N)) ** (1.0 / (N - 1))


def interior_singular_potential(params: PLaplaceParams, surface: float, r):
    """Leading singular term ((p-1)/(N-p)) (|Gamma|/omega_N)^{1/(p-1)} r^{-(N-p)/(p-1)}."""
    params.require_subcritical()
    _check_positive("surface", surface)
    _check_positive("r", r)
    p = params.p
    amp = (p - 1) / (params.N - p) * (surface / params.omega) ** (1.0 / (p - 1))
    return amp * np.power(r, -params.decay)


def interior_singular_gradient(params: PLaplaceParams, surface: float, r):
    """|d/dr| of ``interior_singular_potential``: (|Gamma|/omega_N)^{1/(p-1)} r^{-(N-1)/(p-1)}."""
    params.require_subcritical()
    _check_positive("r", r)
    return (surface / params.omega) ** (1.0 / (params.p - 1)) * np.power(
        r, -(params.N - 1) / (params.p - 1)
    )


def interior_constant_c(d: StarDomain, params: PLaplaceParams) -> float:
    """Boundary value ((p-1)/(N-p)) N|Omega|/|Gamma| used for the punctured problem."""
    return 1.0 / (params.decay * geometry.h0(d))


def capacity_isoperimetric_bound(params: PLaplaceParams, vol: float) -> float:
    """Capacity of the ball with the same volume: a lower bound for any domain."""
    _check_positive("volume", vol)
    N, p = params.N, params.p
    return (
        params.omega
        * params.decay ** (p - 1)
        * (N * vol / params.omega) ** ((N - p) / N)
    )


def omega_convention_check() -> dict:
    """Evaluate the ball capacity for p=2, N=3, R=1 under the adopted omega_N.

    The exterior Newtonian capacity of the unit ball is 4 pi, which pins
    omega_N to the unit-sphere surface measure rather than the ball volume.
    """
    value = ball_capacity(PLaplaceParams(2.0, 3), 1.0)
    return {
        "omega_N": "surface measure of S^{N-1}",
        "ball_capacity_p2_N3_R1": value,
        "expected": 4.0 * math.pi,
        "consistent": abs(value - 4.0 * math.pi) < 1e-12,
    }


FORMULAS = {
    "fundamental_solution": ("p N r", lambda p, N, r: fundamental_solution(PLaplaceParams(p, int(N)), r)),
    "ball_exterior_potential": (
        "p N R dist",
        lambda p, N, R, dist: ball_exterior_potential(PLaplaceParams(p, int(N)), R, [0.0], [dist]),
    ),
    "ball_capacity": ("N p R", lambda N, p, R: ball_capacity(PLaplaceParams(p, int(N)), R)),
    "serrin_constant": (
        "R N p",
        lambda R, N, p: serrin_constant(StarDomain.ball(int(N), R), PLaplaceParams(p, int(N))),
    ),
    "gamma_from_capacity": (
        "cap p N",
        lambda cap, p, N: gamma_from_capacity(cap, PLaplaceParams(p, int(N))),
    ),
    "p_function_value": (
        "u grad p N",
        lambda u, g, p, N: p_function_value(u, g, PLaplaceParams(p, int(N))),
    ),
    "interior_singular_potential": (
        "p N surface r",
        lambda p, N, S, r: interior_singular_potential(PLaplaceParams(p, int(N)), S, r),
    ),
    "capacity_isoperimetric_bound": (
        "p N volume",
        lambda p, N, V: capacity_isoperimetric_bound(PLaplaceParams(p, int(N)), V),
    ),
    "conformal_log_potential": (
        "N c surface dist",
        lambda N, c, S, dist: conformal_log_potential(int(N), c, S, [0.0], [dist]),
    ),
    "unit_sphere_measure": ("N", lambda N: unit_sphere_measure(int(N))),
}
