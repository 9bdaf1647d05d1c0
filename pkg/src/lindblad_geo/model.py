"""Domain types, coordinate charts and the affine Lie-algebra structure of the
two-level Lindblad system

    x' = -Gamma x + u2 z
    y' = -Gamma y - u1 z
    z' = gamma_minus - gamma_plus z + u1 y - u2 x,      |u| <= 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameters, PolarSingularity

#: chart band: phi must stay in [PHI_MIN, pi - PHI_MIN]
PHI_MIN = 1e-6


@dataclass(frozen=True)
class DissipationParams:
    """Dephasing rate ``Gamma`` and relaxation rates ``gamma_plus``, ``gamma_minus``."""

    Gamma: float
    gamma_plus: float
    gamma_minus: float = 0.0

    def __post_init__(self):
        G, gp, gm = float(self.Gamma), float(self.gamma_plus), float(self.gamma_minus)
        if not all(map(math.isfinite, (G, gp, gm))):
            raise InvalidParameters("dissipation rates must be finite")
        if not gp > 0.0:
            raise InvalidParameters(f"gamma_plus must be positive, got {gp}")
        if G < gp / 2.0:
            raise InvalidParameters(f"need Gamma >= gamma_plus/2, got Gamma={G}, gamma_plus={gp}")
        if gp < abs(gm):
            raise InvalidParameters(f"need gamma_plus >= |gamma_minus|, got {gp} < {abs(gm)}")

    @property
    def integrable(self) -> bool:
        return self.gamma_minus == 0.0

    @property
    def detuning(self) -> float:
        """gamma_plus - Gamma, the amplitude of the meridian current."""
        return self.gamma_plus - self.Gamma

    @property
    def is_grusin(self) -> bool:
        return self.integrable and self.Gamma == self.gamma_plus

    def as_dict(self) -> dict:
        return {"Gamma": self.Gamma, "gamma_plus": self.gamma_plus, "gamma_minus": self.gamma_minus}


@dataclass(frozen=True)
class CartesianState:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.x**2 + self.y**2 + self.z**2 > 1.0 + 1e-12:
            raise InvalidParameters("state outside the Bloch ball")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class SphericalState:
    """Radius, colatitude and unwrapped longitude."""

    rho: float
    phi: float
    theta: float

    def __post_init__(self):
        if not self.rho > 0.0:
            raise InvalidParameters("rho must be positive")
        if self.rho > 1.0 + 1e-12:
            raise InvalidParameters("state outside the Bloch ball")
        check_chart(self.phi)

    @property
    def psi(self) -> float:
        """Angle to the equator, pi/2 - phi."""
        return math.pi / 2 - self.phi

    @property
    def r(self) -> float:
        return math.log(self.rho)


@dataclass(frozen=True)
class ReducedCostate:
    """Duals of (r = ln rho, phi, theta)."""

    p_r: float
    p_phi: float
    p_theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_r, self.p_phi, self.p_theta], dtype=float)


@dataclass(frozen=True)
class ExtremalPoint:
    """Phase-space point in the reduced chart (r, phi, theta; p_r, p_phi, p_theta).

    ``epsilon`` is the level label (1 normal, 0 abnormal); it is not inferred.
    """

    r: float
    phi: float
    theta: float
    costate: ReducedCostate
    epsilon: int = 1
    t: float = 0.0

    @classmethod
    def from_array(cls, y, epsilon: int = 1, t: float = 0.0) -> "ExtremalPoint":
        y = np.asarray(y, dtype=float)
        return cls(float(y[0]), float(y[1]), float(y[2]),
                   ReducedCostate(float(y[3]), float(y[4]), float(y[5])), epsilon, t)

    def as_array(self) -> np.ndarray:
        c = self.costate
        return np.array([self.r, self.phi, self.theta, c.p_r, c.p_phi, c.p_theta], dtype=float)

    @property
    def state(self) -> SphericalState:
        return SphericalState(math.exp(self.r), self.phi, self.theta)

    def with_costate(self, p_r=None, p_phi=None, p_theta=None) -> "ExtremalPoint":
        c = self.costate
        return ExtremalPoint(self.r, self.phi, self.theta,
                             ReducedCostate(c.p_r if p_r is None else p_r,
                                            c.p_phi if p_phi is None else p_phi,
                                            c.p_theta if p_theta is None else p_theta),
                             self.epsilon, self.t)


@dataclass(frozen=True)
class AffineField:
    """Affine vector field q -> A q + a."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    matrix: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float).reshape(3, 3))

    def __call__(self, q) -> np.ndarray:
        return self.matrix @ np.asarray(q, dtype=float) + self.translation

    def __eq__(self, other):
        if not isinstance(other, AffineField):
            return NotImplemented
        return (np.array_equal(self.translation, other.translation)
                and np.array_equal(self.matrix, other.matrix))

    def __add__(self, other: "AffineField") -> "AffineField":
        return AffineField(self.translation + other.translation, self.matrix + other.matrix)

    def scaled(self, k: float) -> "AffineField":
        return AffineField(k * self.translation, k * self.matrix)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.translation) or np.any(self.matrix))


@dataclass(frozen=True)
class LocusPoint:
    """A conjugate or cut point.  ``point`` is (r, phi, theta); r is 0 on the sphere."""

    point: tuple
    t: float
    kind: str
    seed: object = None

    @property
    def theta_phi(self) -> tuple:
        return (self.point[2], self.point[1])


def check_chart(phi, phi_min: float = PHI_MIN):
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(~np.isfinite(phi_arr)) or np.any(phi_arr < phi_min) or np.any(phi_arr > math.pi - phi_min):
        raise PolarSingularity(f"colatitude {phi} outside the chart band [{phi_min}, pi - {phi_min}]")


def to_spherical(q: CartesianState) -> SphericalState:
    x, y, z = q.x, q.y, q.z
    if x == 0.0 and y == 0.0:
        raise PolarSingularity("x = y = 0 lies on the polar axis")
    rho = math.sqrt(x * x + y * y + z * z)
    phi = math.atan2(math.hypot(x, y), z)
    return SphericalState(rho, phi, math.atan2(y, x))


def to_cartesian(s: SphericalState) -> CartesianState:
    sp = math.sin(s.phi)
    return CartesianState(s.rho * sp * math.cos(s.theta), s.rho * sp * math.sin(s.theta),
                          s.rho * math.cos(s.phi))


def spherical_jacobian(rho, phi, theta) -> np.ndarray:
    """d(x, y, z)/d(rho, phi, theta)."""
    sp, cp, st, ct = math.sin(phi), math.cos(phi), math.sin(theta), math.cos(theta)
    return np.array([
        [sp * ct, rho * cp * ct, -rho * sp * st],
        [sp * st, rho * cp * st, rho * sp * ct],
        [cp, -rho * sp, 0.0],
    ])


def spherical_costate_to_cartesian(rho, phi, theta, p_rho, p_phi, p_theta) -> np.ndarray:
    """Pull a spherical covector back to Cartesian: p_sph = J^T p_cart."""
    J = spherical_jacobian(rho, phi, theta)
    return np.linalg.solve(J.T, np.array([p_rho, p_phi, p_theta], dtype=float))


def bloch_radial_derivative(q: CartesianState, params: DissipationParams) -> float:
    """rho * drho/dt, independent of the control."""
    return (-params.Gamma * (q.x**2 + q.y**2) - params.gamma_plus * q.z**2
            + params.gamma_minus * q.z)


def lie_bracket(f: AffineField, g: AffineField) -> AffineField:
    """[(a, A), (b, B)] = (A b - B a, A B - B A)."""
    A, a = f.matrix, f.translation
    B, b = g.matrix, g.translation
    return AffineField(A @ b - B @ a, A @ B - B @ A)


G1_MATRIX = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
G2_MATRIX = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
G3_MATRIX = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def drift_matrices(params: DissipationParams) -> tuple[AffineField, AffineField, AffineField]:
    """Affine generators (G0 + v0, G1, G2) with F0(q) = G0 q + v0, Fi(q) = Gi q."""
    G0 = np.diag([-params.Gamma, -params.Gamma, -params.gamma_plus])
    v0 = np.array([0.0, 0.0, params.gamma_minus])
    return AffineField(v0, G0), AffineField(np.zeros(3), G1_MATRIX), AffineField(np.zeros(3), G2_MATRIX)


def cartesian_field(q, u, params: DissipationParams) -> np.ndarray:
    """Bilinear vector field F0 + u1 F1 + u2 F2 written out component-wise."""
    x, y, z = (float(v) for v in q)
    u1, u2 = (float(v) for v in u)
    G, gp, gm = params.Gamma, params.gamma_plus, params.gamma_minus
    return np.array([-G * x + u2 * z, -G * y - u1 * z, gm - gp * z + u1 * y - u2 * x])


def rotate_z(q, angle: float) -> np.ndarray:
    """Coordinates of q in the frame rotated by ``angle`` about the z axis."""
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = (float(v) for v in q)
    return np.array([x * c + y * s, -x * s + y * c, z])


def rotate_control(u, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([u[0] * c + u[1] * s, -u[0] * s + u[1] * c])
