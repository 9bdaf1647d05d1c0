"""Hamiltonians of the time-minimal problem, their vector fields and the
extremal control.

Reduced chart: r = ln rho, colatitude phi, longitude theta.  With
``a(phi) = gamma_plus cos^2 + Gamma sin^2`` and
``c(phi) = (gamma_plus - Gamma) sin(2 phi) / 2`` the integrable (gamma_minus = 0)
true Hamiltonian reads ``H = -a p_r + c p_phi + Q``,
``Q = sqrt(p_phi^2 + p_theta^2 cot^2 phi)``.

All functions broadcast over numpy arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotIntegrable, SwitchingSurface
from .model import DissipationParams, ExtremalPoint, ReducedCostate, check_chart

#: switching guard: below this Q the order-zero control is ill-conditioned
Q_MIN = 1e-9


class HamiltonianKind(enum.Enum):
    FULL_SPHERICAL = "full_spherical"
    REDUCED_INTEGRABLE = "reduced_integrable"
    GRUSIN_FAMILY = "grusin_family"
    ENERGY_REDUCED = "energy_reduced"


@dataclass(frozen=True)
class ControlValue:
    u1: float
    u2: float

    @property
    def norm(self) -> float:
        return math.hypot(self.u1, self.u2)


def _require_integrable(params: DissipationParams):
    if not params.integrable:
        raise NotIntegrable(f"gamma_minus = {params.gamma_minus} != 0")


def radial_rate(phi, params: DissipationParams):
    """a(phi) = gamma_plus cos^2 phi + Gamma sin^2 phi, so that r' = -a."""
    return params.gamma_plus * np.cos(phi) ** 2 + params.Gamma * np.sin(phi) ** 2


def meridian_current(phi, params: DissipationParams):
    """c(phi) = (gamma_plus - Gamma) sin(2 phi) / 2."""
    return 0.5 * params.detuning * np.sin(2.0 * phi)


def switching_distance(costate: ReducedCostate, phi):
    """Q = sqrt(p_phi^2 + p_theta^2 cot^2 phi); zero exactly on the switching surface."""
    return _q(phi, costate.p_phi, costate.p_theta)


def _q(phi, p_phi, p_theta):
    cot = np.cos(phi) / np.sin(phi)
    return np.sqrt(p_phi**2 + (p_theta * cot) ** 2)


def h_full_spherical(rho, phi, p_rho, p_phi, p_theta, params: DissipationParams):
    """True Hamiltonian in (rho, phi, theta) for any gamma_minus."""
    check_chart(phi)
    G, gp, gm = params.Gamma, params.gamma_plus, params.gamma_minus
    cp, sp = np.cos(phi), np.sin(phi)
    drift_rho = gm * cp - rho * (gp * cp**2 + G * sp**2)
    drift_phi = -gm * sp / rho + 0.5 * np.sin(2.0 * phi) * (gp - G)
    return drift_rho * p_rho + drift_phi * p_phi + _q(phi, p_phi, p_theta)


def h_reduced(phi, p_r, p_phi, p_theta, params: DissipationParams):
    """Integrable true Hamiltonian; r and theta are cyclic and do not enter."""
    _require_integrable(params)
    check_chart(phi)
    return (-radial_rate(phi, params) * p_r + meridian_current(phi, params) * p_phi
            + _q(phi, p_phi, p_theta))


def hamiltonian_value(z: ExtremalPoint, params: DissipationParams) -> float:
    c = z.costate
    return float(h_reduced(z.phi, c.p_r, c.p_phi, c.p_theta, params))


def extremal_rhs_reduced(y, params: DissipationParams, q_min: float = Q_MIN) -> np.ndarray:
    """Hamiltonian vector field of :func:`h_reduced`.

    ``y`` has shape (..., 6) ordered (r, phi, theta, p_r, p_phi, p_theta).
    """
    _require_integrable(params)
    y = np.asarray(y, dtype=float)
    phi, p_r, p_phi, p_th = y[..., 1], y[..., 3], y[..., 4], y[..., 5]
    check_chart(phi)
    Q = _q(phi, p_phi, p_th)
    if np.any(Q <= q_min):
        raise SwitchingSurface(f"Q = {np.min(Q):.3e} below the guard {q_min:.1e}")
    D = params.detuning
    s, c = np.sin(phi), np.cos(phi)
    cot = c / s
    out = np.zeros_like(y)
    out[..., 0] = -radial_rate(phi, params)
    out[..., 1] = 0.5 * D * np.sin(2 * phi) + p_phi / Q
    out[..., 2] = p_th * cot**2 / Q
    # -dH/dphi; a'(phi) = -D sin(2 phi), c'(phi) = D cos(2 phi)
    out[..., 4] = -D * np.sin(2 * phi) * p_r - D * np.cos(2 * phi) * p_phi + p_th**2 * c / (Q * s**3)
    return out


def extremal_control(costate: ReducedCostate, phi, q_min: float = Q_MIN) -> ControlValue:
    """Order-zero control v = (H1, H2)/Q with lifts H1 = -p_theta cot phi, H2 = p_phi."""
    h1 = -costate.p_theta * math.cos(phi) / math.sin(phi)
    h2 = costate.p_phi
    Q = math.hypot(h1, h2)
    if Q <= q_min:
        raise SwitchingSurface(f"Q = {Q:.3e} below the guard {q_min:.1e}")
    return ControlValue(h1 / Q, h2 / Q)


def control_arrays(phi, p_phi, p_theta):
    """Vectorized order-zero control; returns (u1, u2)."""
    h1 = -p_theta * np.cos(phi) / np.sin(phi)
    Q = np.hypot(h1, p_phi)
    return h1 / Q, p_phi / Q


def grusin_metric_coefficient(phi, lam):
    """G_lambda(phi) = sin^2 phi / (1 - lambda sin^2 phi)."""
    X = np.sin(phi) ** 2
    return X / (1.0 - lam * X)


def grusin_family_h(phi, p_phi, p_theta, lam):
    """H_lambda = (p_phi^2 + p_theta^2 / G_lambda(phi)) / 2."""
    if np.any(np.asarray(lam) < 0.0) or np.any(np.asarray(lam) > 1.0):
        raise DomainError(f"lambda = {lam} outside [0, 1]")
    check_chart(phi)
    X = np.sin(phi) ** 2
    return 0.5 * (p_phi**2 + p_theta**2 * (1.0 - lam * X) / X)


def grusin_h1(phi, p_phi, p_theta):
    """Grusin Hamiltonian (p_phi^2 + p_theta^2 cot^2 phi) / 2, a first integral for every lambda."""
    check_chart(phi)
    return 0.5 * (p_phi**2 + (p_theta * np.cos(phi) / np.sin(phi)) ** 2)


def grusin_family_rhs(y, lam) -> np.ndarray:
    """Geodesic field of H_lambda, ``y = (phi, theta, p_phi, p_theta)``."""
    y = np.asarray(y, dtype=float)
    phi, p_phi, p_th = y[..., 0], y[..., 2], y[..., 3]
    check_chart(phi)
    s, c = np.sin(phi), np.cos(phi)
    out = np.zeros_like(y)
    out[..., 0] = p_phi
    out[..., 1] = p_th * (1.0 / s**2 - lam)
    out[..., 2] = p_th**2 * c / s**3
    return out


def energy_hamiltonian(phi, p_r, p_phi, p_theta, params: DissipationParams):
    """Normal energy-cost Hamiltonian -a p_r + c p_phi + (p_theta^2 cot^2 + p_phi^2)/2."""
    _require_integrable(params)
    check_chart(phi)
    cot = np.cos(phi) / np.sin(phi)
    return (-radial_rate(phi, params) * p_r + meridian_current(phi, params) * p_phi
            + 0.5 * ((p_theta * cot) ** 2 + p_phi**2))


def energy_rhs(y, params: DissipationParams) -> np.ndarray:
    _require_integrable(params)
    y = np.asarray(y, dtype=float)
    phi, p_r, p_phi, p_th = y[..., 1], y[..., 3], y[..., 4], y[..., 5]
    check_chart(phi)
    D = params.detuning
    s, c = np.sin(phi), np.cos(phi)
    out = np.zeros_like(y)
    out[..., 0] = -radial_rate(phi, params)
    out[..., 1] = 0.5 * D * np.sin(2 * phi) + p_phi
    out[..., 2] = p_th * (c / s) ** 2
    out[..., 4] = -D * np.sin(2 * phi) * p_r - D * np.cos(2 * phi) * p_phi + p_th**2 * c / s**3
    return out


def energy_potential(phi, p_r, p_theta, params: DissipationParams):
    """Potential V with phi'^2/2 + V(phi) = h on energy-case extremals."""
    _require_integrable(params)
    check_chart(phi)
    D = params.Gamma - params.gamma_plus
    cot = np.cos(phi) / np.sin(phi)
    return (-p_r * radial_rate(phi, params) - 0.5 * (np.sin(2 * phi) ** 2 / 4.0) * D**2
            + 0.5 * p_theta**2 * cot**2)


def energy_quartic(X, h, p_r, p_theta, params: DissipationParams):
    """P(X) with (dX/dt)^2 = P(X), X = sin^2 phi."""
    _require_integrable(params)
    D = params.Gamma - params.gamma_plus
    return 4.0 * (1.0 - X) * (-X**3 * D**2 + X**2 * D * (2 * p_r + D)
                              + X * (2 * h + 2 * p_r * params.gamma_plus + p_theta**2) - p_theta**2)

