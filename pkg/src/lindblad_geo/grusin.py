"""The metric family g_lambda = dphi^2 + G_lambda(phi) dtheta^2 on the two-sphere,
G_lambda = X / (1 - lambda X), X = sin^2 phi.

lambda = 0 is the round sphere, lambda = 1 the Grusin model tan^2 phi, whose
metric blows up on the equator.  Geodesics are parametrized by arc length
(H_lambda = 1/2) unless stated otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels as K
from .errors import BranchError, CurvatureBlowup, DomainError, PolarSingularity
from .hamiltonians import grusin_family_h, grusin_metric_coefficient
from .integrator import (AntipodalParallel, EquatorCross, Tolerances, grusin_system, integrate,
                         integrate_system_with_fields)
from .model import LocusPoint, check_chart

UNIT_LEVEL_TOL = 1e-8


def _check_lambda(lam, closed=True):
    if not (0.0 <= lam <= 1.0) or (not closed and lam == 1.0):
        raise DomainError(f"lambda = {lam} outside {'[0, 1]' if closed else '[0, 1)'}")


# ---------------------------------------------------------------- curvature

def curvature(lam, phi):
    """Gauss curvature K = ((1 - lam) - 2 lam cos^2 phi) / (1 - lam sin^2 phi)^2."""
    _check_lambda(lam)
    phi = np.asarray(phi, dtype=float)
    den = 1.0 - lam * np.sin(phi) ** 2
    if lam == 1.0 and np.any(np.abs(np.cos(phi)) < 1e-12):
        raise CurvatureBlowup("Grusin curvature diverges on the equator")
    K = ((1.0 - lam) - 2.0 * lam * np.cos(phi) ** 2) / den**2
    return float(K) if K.ndim == 0 else K


def curvature_derivative(lam, phi):
    """dK/dphi = 4 lam sin cos (2(1 - lam) - lam cos^2) / (1 - lam sin^2)^3."""
    _check_lambda(lam)
    phi = np.asarray(phi, dtype=float)
    s, c = np.sin(phi), np.cos(phi)
    if lam == 1.0 and np.any(np.abs(c) < 1e-12):
        raise CurvatureBlowup("Grusin curvature diverges on the equator")
    dK = 4.0 * lam * s * c * (2.0 * (1.0 - lam) - lam * c**2) / (1.0 - lam * s**2) ** 3
    return float(dK) if dK.ndim == 0 else dK


def curvature_numeric(G: Callable, phi, h: float = 2e-4):
    """K = -(sqrt G)'' / sqrt G by fourth-order central differences.

    The five-point stencil keeps the error near 1e-7 even close to the equator
    at lambda = 1, where |K| is in the hundreds and three points lose ~1e-4.
    """
    g = lambda x: np.sqrt(G(x))
    phi = np.asarray(phi, dtype=float)
    d2 = (-g(phi + 2 * h) + 16.0 * g(phi + h) - 30.0 * g(phi) + 16.0 * g(phi - h) - g(phi - 2 * h)) / (12.0 * h * h)
    K = -d2 / g(phi)
    return float(K) if K.ndim == 0 else K


def curvature_extremum(lam) -> float | None:
    """Interior critical colatitude of K in (0, pi/2), if any (cos^2 = 2(1 - lam)/lam)."""
    _check_lambda(lam)
    if lam == 0.0:
        return None
    u = 2.0 * (1.0 - lam) / lam
    if not 0.0 < u < 1.0:
        return None
    return math.acos(math.sqrt(u))


def count_interior_zeros(values) -> int:
    """Strict sign changes of a sampled function (exact zeros are skipped)."""
    v = np.asarray(values, dtype=float)
    s = np.sign(v[v != 0.0])
    return int(np.count_nonzero(s[1:] != s[:-1]))


# ---------------------------------------------------------------- metric points

@dataclass(frozen=True)
class MetricFamilyPoint:
    lam: float
    phi: float
    p_phi: float
    p_theta: float

    def __post_init__(self):
        _check_lambda(self.lam)
        check_chart(self.phi)

    @property
    def G(self) -> float:
        return float(grusin_metric_coefficient(self.phi, self.lam))

    @property
    def h(self) -> float:
        return float(grusin_family_h(self.phi, self.p_phi, self.p_theta, self.lam))

    @property
    def unit_speed(self) -> bool:
        return abs(self.h - 0.5) <= UNIT_LEVEL_TOL

    @property
    def X(self) -> float:
        return math.sin(self.phi) ** 2

    @property
    def clairaut_angle(self) -> float:
        """Angle with the parallel, cos psi = p_theta / sqrt G (unit speed)."""
        return math.acos(max(-1.0, min(1.0, self.p_theta / math.sqrt(self.G))))

    def as_state(self, theta: float = 0.0) -> np.ndarray:
        return np.array([self.phi, theta, self.p_phi, self.p_theta])


def unit_costate(lam, phi0, p_theta, branch: int = 1) -> float:
    """p_phi(0) on H_lambda = 1/2: +-sqrt(1 - p_theta^2 (1/sin^2 phi0 - lam))."""
    _check_lambda(lam)
    check_chart(phi0)
    rad = 1.0 - p_theta**2 * (1.0 / math.sin(phi0) ** 2 - lam)
    if rad < -1e-14:
        raise DomainError(f"|p_theta| = {abs(p_theta)} exceeds sqrt G(phi0)")
    return math.copysign(math.sqrt(max(rad, 0.0)), branch)


def p_theta_bound(lam, phi0=math.pi / 2) -> float:
    """sqrt G_lambda(phi0); infinite on the Grusin equator."""
    _check_lambda(lam)
    X = math.sin(phi0) ** 2
    den = 1.0 - lam * X
    return math.inf if den <= 0.0 else math.sqrt(X / den)


def clairaut_constant(lam, phi, phi_dot, theta_dot):
    """sqrt G cos psi from a unit-speed velocity; equals p_theta = G theta'."""
    G = grusin_metric_coefficient(phi, lam)
    return G * theta_dot / np.sqrt(phi_dot**2 + G * theta_dot**2)


# ---------------------------------------------------------------- closed-form geodesics

def _unwrapped_arctan(k, u):
    """arctan(k tan u) continued across the poles of tan (adds pi per half turn)."""
    n = np.floor((u + math.pi / 2) / math.pi)
    return np.arctan(k * np.tan(u)) + n * math.pi


def grusin_geodesic_closed_form(phi0, p_phi0, p_theta, t, lam: float = 1.0, theta0: float = 0.0):
    """(phi(t), theta(t)) on H_lambda = 1/2 in closed form.

    cos phi = -A sin(m t + K) with m^2 = 1 + lam p_theta^2 and A = sqrt(E)/m,
    E = 1 - p_theta^2 (1 - lam).  For lam = 1 this is m^2 = 1 + p_theta^2.
    """
    _check_lambda(lam)
    check_chart(phi0)
    s0, x0 = math.sin(phi0), math.cos(phi0)
    h2 = p_phi0**2 + p_theta**2 * (1.0 / s0**2 - lam)
    if abs(h2 - 1.0) > 2 * UNIT_LEVEL_TOL:
        raise BranchError(f"initial covector not on the unit level (2H = {h2:.12g})")
    E = 1.0 - p_theta**2 * (1.0 - lam)
    if E <= 0.0:
        raise BranchError("degenerate level: no phi-oscillation (E <= 0)")
    m = math.sqrt(E + p_theta**2)
    A = math.sqrt(E) / m
    if abs(x0) > A * (1.0 + 1e-12):
        raise BranchError("phi0 outside the oscillation band of this covector")
    K = math.atan2(-x0, s0 * p_phi0 / m)
    t = np.asarray(t, dtype=float)
    u = m * t + K
    phi = np.arccos(np.clip(-A * np.sin(u), -1.0, 1.0))
    if p_theta == 0.0:
        theta = np.full_like(u, theta0)
    else:
        k = abs(p_theta) / m
        theta = (theta0 + math.copysign(1.0, p_theta) * (_unwrapped_arctan(k, u) - _unwrapped_arctan(k, K))
                 - lam * p_theta * t)
    if t.ndim == 0:
        return float(phi), float(theta)
    return phi, theta


def half_period(lam, p_theta) -> float:
    return math.pi / math.sqrt(1.0 + lam * p_theta**2)


# ---------------------------------------------------------------- return map

@dataclass(frozen=True)
class ReturnMapSample:
    lam: float
    p_theta: float
    delta_theta: float
    period: float


def return_map_domain(lam) -> tuple[float, float]:
    _check_lambda(lam)
    return (0.0, math.inf if lam == 1.0 else 1.0 / math.sqrt(1.0 - lam))


def return_map(lam, p_theta) -> float:
    """Longitude gained between consecutive equator crossings.

    R = pi - alpha pi p / (sqrt(alpha + 1) sqrt(alpha + 1 + alpha p^2)), alpha = lam/(1 - lam);
    at lam = 1 the limit pi - pi p / sqrt(1 + p^2).
    """
    lo, hi = return_map_domain(lam)
    if not lo < p_theta < hi:
        raise DomainError(f"p_theta = {p_theta} outside ({lo}, {hi})")
    if lam == 1.0:
        return math.pi - math.pi * p_theta / math.sqrt(1.0 + p_theta**2)
    alpha = lam / (1.0 - lam)
    return math.pi - alpha * math.pi * p_theta / (math.sqrt(alpha + 1.0) * math.sqrt(alpha + 1.0 + alpha * p_theta**2))


def return_map_numeric(lam, p_theta, tol: Tolerances = Tolerances()) -> ReturnMapSample:
    """Integrate from the equator (p_phi > 0) to the next equator crossing."""
    lo, hi = return_map_domain(lam)
    if not lo < p_theta < hi:
        raise DomainError(f"p_theta = {p_theta} outside ({lo}, {hi})")
    p_phi0 = unit_costate(lam, math.pi / 2, p_theta, +1)
    y0 = np.array([math.pi / 2, 0.0, p_phi0, p_theta])
    t_max = 4.0 * half_period(lam, p_theta) + 1.0
    traj = integrate(grusin_system(lam), y0, (0.0, t_max), tol, [EquatorCross(stop_after=1)])
    hits = traj.events_named(EquatorCross.name)
    if not hits:
        raise DomainError("no return to the equator")
    ev = hits[0]
    return ReturnMapSample(lam, p_theta, float(ev.y[1]), 2.0 * ev.t)


# ---------------------------------------------------------------- conjugate points

def level_tangent_variation(lam, phi0, p_phi0, p_theta) -> np.ndarray:
    """Vertical Jacobi field (0, 0, dp_phi, dp_theta) tangent to the H_lambda level."""
    w = 1.0 / math.sin(phi0) ** 2 - lam
    return np.array([0.0, 0.0, -p_theta * w, p_phi0])


def conjugate_determinant(traj_y, lam) -> np.ndarray:
    """det[dq, q'] along the flow, rows (phi, theta, p_phi, p_theta, d...)."""
    phi, p_phi, p_th = traj_y[..., 0], traj_y[..., 2], traj_y[..., 3]
    dphi, dth = traj_y[..., 4], traj_y[..., 5]
    qdot_phi = p_phi
    qdot_th = p_th * (1.0 / np.sin(phi) ** 2 - lam)
    return dphi * qdot_th - dth * qdot_phi


def conjugate_time(lam, phi0, p_phi0, p_theta, t_max: float | None = None,
                   tol: Tolerances = Tolerances(), theta0: float = 0.0):
    """First conjugate time and point (phi, theta) or None before ``t_max``."""
    _check_lambda(lam)
    if t_max is None:
        t_max = 2.5 * half_period(lam, p_theta) * 2.0
    y0 = np.array([phi0, theta0, p_phi0, p_theta])
    dz = level_tangent_variation(lam, phi0, p_phi0, p_theta)
    dz = dz / np.linalg.norm(dz)
    traj, _ = integrate_system_with_fields(grusin_system(lam), y0, dz, (0.0, t_max), tol)
    roots = traj.find_roots(lambda y: conjugate_determinant(y, lam))
    if not roots:
        if traj.status == K.STATUS_POLAR:
            raise PolarSingularity(f"geodesic leaves the chart at t = {traj.t_end:.6g} before a conjugate point")
        return None
    tc = roots[0]
    y = traj(tc)
    return tc, float(y[0]), float(y[1])


def conjugate_locus_sphere(lam, phi0, p_theta_grid: Sequence[float], branch: int = 1,
                           tol: Tolerances = Tolerances(), t_max: float | None = None) -> list[LocusPoint]:
    """First conjugate points of unit geodesics from (phi0, 0), one per p_theta."""
    _check_lambda(lam)
    check_chart(phi0)
    out = []
    for p_th in p_theta_grid:
        p_phi0 = unit_costate(lam, phi0, p_th, branch)
        seed = MetricFamilyPoint(lam, phi0, p_phi0, float(p_th))
        res = conjugate_time(lam, phi0, p_phi0, p_th, t_max, tol)
        if res is None:
            continue
        tc, phi, theta = res
        out.append(LocusPoint((0.0, phi, theta), tc, "conjugate", seed))
    return out


def covector_sweep(lam, phi0, n: int, margin: float = 1e-3) -> list[tuple[float, float]]:
    """(p_phi0, p_theta) pairs on the unit level with p_theta > 0, ordered from p_phi0 = 1 to -1.

    On the Grusin equator every p_theta is admissible with p_phi0 = +-1; there the
    sweep runs up a geometric p_theta ladder on the + branch and back down on the - branch.
    """
    g0 = p_theta_bound(lam, phi0)
    if math.isinf(g0):
        ladder = np.geomspace(margin, 1.0 / margin, max(n // 2, 2))
        return [(1.0, float(p)) for p in ladder] + [(-1.0, float(p)) for p in ladder[::-1]]
    # cosine spacing resolves the cusps that sit at both ends of the sweep
    alphas = margin + (math.pi - 2 * margin) * 0.5 * (1.0 - np.cos(np.linspace(0.0, math.pi, n)))
    return [(math.cos(a), math.sin(a) * g0) for a in alphas]


def full_conjugate_locus(lam, phi0, n: int = 161, margin: float = 1e-3,
                         tol: Tolerances = Tolerances()) -> np.ndarray:
    """Closed (theta, phi) polyline: the p_theta > 0 half and its mirror about theta = pi."""
    half = []
    for p_phi0, p_th in covector_sweep(lam, phi0, n, margin):
        res = conjugate_time(lam, phi0, p_phi0, p_th, None, tol)
        if res is not None:
            half.append((res[2], res[1]))
    half = np.array(half).reshape(-1, 2)
    mirror = mirror_opposite_meridian(half)[::-1]
    return np.vstack([half, mirror])


def mirror_opposite_meridian(points, theta0: float = 0.0) -> np.ndarray:
    """Reflection theta -> 2(theta0 + pi) - theta on (theta, phi) rows."""
    p = np.array(points, dtype=float).reshape(-1, 2)
    p[:, 0] = 2.0 * (theta0 + math.pi) - p[:, 0]
    return p


def _drop_near_duplicates(p, rel: float = 1e-3):
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    scale = rel * np.median(seg) if seg.size else 0.0
    keep = [0]
    for i in range(1, len(p)):
        if np.linalg.norm(p[i] - p[keep[-1]]) > scale:
            keep.append(i)
    return p[keep]


def tangent_reversals(points, closed: bool = True) -> list[int]:
    """Indices where consecutive discrete tangents point backwards (cusp signature).

    Points closer than a small fraction of the median spacing are merged first,
    so duplicated junction samples cannot hide or fake a reversal.
    """
    p = _drop_near_duplicates(np.asarray(points, dtype=float))
    if closed:
        if np.linalg.norm(p[-1] - p[0]) <= 1e-3 * np.median(np.linalg.norm(np.diff(p, axis=0), axis=1)):
            p = p[:-1]
        p = np.vstack([p, p[:2]])
    d = np.diff(p, axis=0)
    dots = np.einsum("ij,ij->i", d[:-1], d[1:])
    return [int(i) + 1 for i in np.nonzero(dots < 0.0)[0]]


def tangent_sign_changes(points) -> tuple[int, int]:
    """Sign changes of the theta and phi tangent components along an open polyline."""
    d = np.diff(np.asarray(points, dtype=float), axis=0)
    return count_interior_zeros(d[:, 0]), count_interior_zeros(d[:, 1])


# ---------------------------------------------------------------- cut locus

@dataclass(frozen=True)
class CutLocus:
    lam: float
    phi0: float
    kind: str               # "point", "parallel_arc" or "equator_minus_point"
    phi: float              # parallel carrying the cut locus
    theta_range: tuple      # swept longitude interval
    points: tuple           # LocusPoint records, one per sampled pair
    max_time_mismatch: float = 0.0


def antipodal_pair(lam, phi0, p_theta, tol: Tolerances = Tolerances()):
    """Meeting of the +-p_phi(0) geodesics on phi = pi - phi0.

    Returns (t_plus, t_minus, y_plus, y_minus) at the paired crossings.
    """
    target = math.pi - phi0
    T2 = half_period(lam, p_theta)
    crossings = {}
    for branch in (1, -1):
        y0 = np.array([phi0, 0.0, unit_costate(lam, phi0, p_theta, branch), p_theta])
        traj = integrate(grusin_system(lam), y0, (0.0, 1.5 * T2 + 0.5), tol,
                         [AntipodalParallel(target)])
        crossings[branch] = [(e.t, e.y) for e in traj.events_named(AntipodalParallel.name)]
    best = None
    for tp, yp in crossings[1]:
        for tm, ym in crossings[-1]:
            cand = (abs(tp - tm) + abs(tp - T2), tp, tm, yp, ym)
            if best is None or cand[0] < best[0]:
                best = cand
    if best is None:
        raise DomainError("geodesic pair does not reach the antipodal parallel")
    return best[1], best[2], best[3], best[4]


def cut_locus_sphere(lam, phi0, p_theta_grid: Sequence[float] | None = None, n: int = 24,
                     tol: Tolerances = Tolerances()) -> CutLocus:
    """Cut locus of (phi0, 0) built from equal-time +-p_phi(0) intersections."""
    _check_lambda(lam)
    check_chart(phi0)
    target = math.pi - phi0
    if lam == 0.0:
        pt = LocusPoint((0.0, target, math.pi), math.pi, "cut", None)
        return CutLocus(lam, phi0, "point", target, (math.pi, math.pi), (pt,))
    equatorial = abs(phi0 - math.pi / 2) < 1e-12
    bound = p_theta_bound(lam, phi0)
    if p_theta_grid is None:
        top = bound if math.isfinite(bound) else 20.0
        p_theta_grid = np.linspace(0.02, 0.98, n) * top
    pts = []
    mism = 0.0
    for p_th in p_theta_grid:
        tp, tm, yp, ym = antipodal_pair(lam, phi0, float(p_th), tol)
        mism = max(mism, abs(tp - tm))
        seed = MetricFamilyPoint(lam, phi0, unit_costate(lam, phi0, p_th, 1), float(p_th))
        pts.append(LocusPoint((0.0, float(yp[0]), 0.5 * float(yp[1] + ym[1])), 0.5 * (tp + tm), "cut", seed))
    thetas = [p.point[2] for p in pts]
    lo, hi = min(thetas), max(thetas)
    kind = "equator_minus_point" if (equatorial and lam == 1.0) else "parallel_arc"
    # the p_theta < 0 half is the mirror image about the opposite meridian
    lo, hi = min(lo, 2 * math.pi - hi), max(hi, 2 * math.pi - lo)
    return CutLocus(lam, phi0, kind, target, (lo, hi), tuple(pts), mism)
