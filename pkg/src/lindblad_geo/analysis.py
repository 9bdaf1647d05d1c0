"""Integrable-case analysis: level sets in the (phi, p_phi) plane, extremal
classification, periods, symmetric pairs, conjugate and cut points, the
Zermelo current and the equatorial normal form.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from . import kernels as K
from .errors import DomainError, GrusinDegenerate, NoBarrier, NotPeriodic, PolarSingularity
from .hamiltonians import (_require_integrable, extremal_rhs_reduced, h_reduced, meridian_current,
                           radial_rate)
from .integrator import (Tolerances, ComponentCrossing, integrate, integrate_extremal,
                         integrate_system_with_fields, normal_form_system, reduced_system)
from .model import DissipationParams, ExtremalPoint, LocusPoint, ReducedCostate, check_chart

APERIODIC_PPHI = 1e4
APERIODIC_PHIDOT = 1e-6
SINGULAR_PROXIMITY = 1e-3


class LevelKind(str, enum.Enum):
    COMPACT_PERIODIC = "CompactPeriodic"
    NONCOMPACT_APERIODIC = "NoncompactAperiodic"


@dataclass(frozen=True)
class LevelSetClass:
    kind: LevelKind
    turning_phis: tuple
    period: float | None
    singular_phis: tuple
    level: float = 1.0
    phi_end: float | None = None

    @property
    def periodic(self) -> bool:
        return self.kind is LevelKind.COMPACT_PERIODIC

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "turning_phis": list(self.turning_phis), "period": self.period,
                "singular_phis": list(self.singular_phis), "level": self.level, "phi_end": self.phi_end}


# ---------------------------------------------------------------- level-set algebra

def _level_coeffs(phi, p_r, p_theta, epsilon, params):
    """(1 - c^2) p^2 + 2 b c p + (w^2 - b^2) = 0 with b = eps + a p_r, w = p_theta cot phi."""
    b = epsilon + radial_rate(phi, params) * p_r
    c = meridian_current(phi, params)
    w2 = (p_theta * math.cos(phi) / math.sin(phi)) ** 2
    return 1.0 - c * c, 2.0 * b * c, w2 - b * b, b, c


def level_discriminant(phi, p_r, p_theta, epsilon, params: DissipationParams) -> float:
    """Reduced discriminant b^2 - (1 - c^2) p_theta^2 cot^2 phi of the p_phi quadratic."""
    _require_integrable(params)
    check_chart(phi)
    A, _, _, b, _ = _level_coeffs(phi, p_r, p_theta, epsilon, params)
    return b * b - A * (p_theta * math.cos(phi) / math.sin(phi)) ** 2


def pphi_roots(phi, p_r, p_theta, epsilon, params: DissipationParams, rel_tol: float = 1e-12) -> tuple:
    """Real p_phi with h_reduced = epsilon at fixed (phi, p_r, p_theta), ascending.

    A double root (zero discriminant) is returned twice.  When the leading
    coefficient vanishes the equation is linear and at most one root exists.
    Squaring can introduce roots of Q = -(b - c p); those are discarded.
    """
    _require_integrable(params)
    check_chart(phi)
    A, B, C, b, c = _level_coeffs(phi, p_r, p_theta, epsilon, params)
    scale = max(abs(A), abs(B), abs(C), 1e-300)
    if abs(A) <= rel_tol * scale:
        cand = [] if B == 0.0 else [-C / B]
    else:
        disc = b * b - A * (C + b * b)
        if disc < -rel_tol * max(b * b, 1.0):
            return ()
        if disc <= rel_tol * max(b * b, 1.0):
            p = -B / (2.0 * A)
            return (p, p) if b - c * p >= 0.0 else ()
        sq = math.sqrt(disc)
        cand = sorted([(-b * c - sq) / A, (-b * c + sq) / A])
    return tuple(p for p in cand if b - c * p >= -1e-12 * max(1.0, abs(b)))


def singular_phi(params: DissipationParams) -> tuple:
    """Colatitudes where (gamma_plus - Gamma)^2 sin^2(2 phi) / 4 = 1."""
    _require_integrable(params)
    D = abs(params.detuning)
    if D < 2.0:
        raise NoBarrier(f"|Gamma - gamma_plus| = {D} < 2")
    h = 0.5 * math.asin(min(1.0, 2.0 / D))
    pts = sorted({round(v, 15) for v in (h, math.pi / 2 - h, math.pi / 2 + h, math.pi - h)})
    return tuple(pts)


def turning_polynomial(p_r, p_theta, epsilon, params: DissipationParams) -> np.polynomial.Polynomial:
    """X b(X)^2 - p_theta^2 (1 - X)(1 - D^2 X (1 - X)); its roots in (0, 1) are the turning X = sin^2 phi."""
    P = np.polynomial.Polynomial
    gp, G = params.gamma_plus, params.Gamma
    D = params.detuning
    b = P([epsilon + gp * p_r, (G - gp) * p_r])
    X = P([0.0, 1.0])
    return X * b * b - p_theta**2 * (1 - X) * (1 - D**2 * X * (1 - X))


def turning_phis(p_r, p_theta, epsilon, params: DissipationParams) -> tuple:
    """Colatitudes with phi' = 0 on the level (Delta = 0 with the admissible sign)."""
    _require_integrable(params)
    poly = turning_polynomial(p_r, p_theta, epsilon, params)
    out = []
    for X in poly.roots():
        if abs(X.imag) > 1e-9 or not 0.0 < X.real < 1.0:
            continue
        X = X.real
        for _ in range(3):
            d = poly.deriv()(X)
            if d != 0.0:
                X -= poly(X) / d
        psi = math.asin(math.sqrt(min(max(X, 0.0), 1.0)))
        for phi in (psi, math.pi - psi):
            A, _, _, b, _ = _level_coeffs(phi, p_r, p_theta, epsilon, params)
            # double root p = -b c / (1 - c^2) must satisfy Q = b / (1 - c^2) > 0
            if A != 0.0 and b / A > 0.0:
                out.append(phi)
    return tuple(sorted(set(round(v, 13) for v in out)))


def symmetric_partner(z0: ExtremalPoint) -> ExtremalPoint:
    """(phi, p_phi) -> (pi - phi, -p_phi), everything else unchanged."""
    c = z0.costate
    return ExtremalPoint(z0.r, math.pi - z0.phi, z0.theta, ReducedCostate(c.p_r, -c.p_phi, c.p_theta),
                         z0.epsilon, z0.t)


def normalize_to_level(z0: ExtremalPoint, params: DissipationParams, epsilon: int = 1) -> ExtremalPoint:
    """Rescale the costate so that h_reduced = epsilon (the state curve is unchanged)."""
    h = float(h_reduced(z0.phi, z0.costate.p_r, z0.costate.p_phi, z0.costate.p_theta, params))
    if not h > 0.0:
        raise DomainError(f"seed has H = {h:.6g} <= 0 and cannot be normalized to a positive level")
    k = epsilon / h
    c = z0.costate
    return ExtremalPoint(z0.r, z0.phi, z0.theta, ReducedCostate(k * c.p_r, k * c.p_phi, k * c.p_theta),
                         epsilon, z0.t)


def seed_level(z0: ExtremalPoint, params: DissipationParams) -> float:
    c = z0.costate
    return float(h_reduced(z0.phi, c.p_r, c.p_phi, c.p_theta, params))


def _phi_dot(y, params):
    return extremal_rhs_reduced(y, params)[..., 1]


# ---------------------------------------------------------------- classification

def orbit_period(z0: ExtremalPoint, params: DissipationParams, t_max: float = 200.0,
                 tol: Tolerances = Tolerances()) -> float:
    """First return to {phi = phi0} with the same sign of phi' (or to {p_phi = p_phi0} at a turning point)."""
    y0 = z0.as_array()
    f0 = extremal_rhs_reduced(y0, params)
    if abs(f0[1]) > 1e-8:
        ev = ComponentCrossing(1, z0.phi, int(np.sign(f0[1])), 1, "section")
    else:
        ev = ComponentCrossing(4, z0.costate.p_phi, int(np.sign(f0[4])), 1, "section")
    traj = integrate_extremal(z0, params, (0.0, t_max), tol, [ev])
    hits = traj.events_named("section")
    if not hits:
        raise NotPeriodic(f"no return to the section within t = {t_max}")
    return hits[0].t


def classify_extremal(z0: ExtremalPoint, params: DissipationParams, t_max: float = 50.0,
                      tol: Tolerances = Tolerances()) -> LevelSetClass:
    """Periodic if the seed returns to its section within ``t_max``; aperiodic if it
    ends with |p_phi| > 1e4, |phi'| < 1e-6 within 1e-3 of a singular parallel."""
    _require_integrable(params)
    level = seed_level(z0, params)
    c = z0.costate
    sing = singular_phi(params) if abs(params.detuning) >= 2.0 else ()
    turns = turning_phis(c.p_r, c.p_theta, level, params)
    y0 = z0.as_array()
    f0 = extremal_rhs_reduced(y0, params)
    if abs(f0[1]) > 1e-8:
        ev = ComponentCrossing(1, z0.phi, int(np.sign(f0[1])), 1, "section")
    else:
        ev = ComponentCrossing(4, c.p_phi, int(np.sign(f0[4])), 1, "section")
    traj = integrate_extremal(z0, params, (0.0, t_max), tol, [ev])
    hits = traj.events_named("section")
    if hits:
        return LevelSetClass(LevelKind.COMPACT_PERIODIC, turns, hits[0].t, sing, level, float(traj.y_end[1]))
    y = traj.y_end
    phid = float(_phi_dot(y, params))
    near = any(abs(y[1] - s) <= SINGULAR_PROXIMITY for s in sing)
    if abs(y[4]) > APERIODIC_PPHI and abs(phid) < APERIODIC_PHIDOT and near:
        return LevelSetClass(LevelKind.NONCOMPACT_APERIODIC, turns, None, sing, level, float(y[1]))
    raise NotPeriodic(f"extremal neither returned nor reached a singular parallel by t = {t_max}")


def classify_level_set(p_r, p_theta, epsilon, params: DissipationParams, phi0: float,
                       branch: int = 0, t_max: float = 50.0, tol: Tolerances = Tolerances()) -> LevelSetClass:
    """Classify the level component through the ``branch``-th root of the p_phi quadratic at phi0."""
    roots = pphi_roots(phi0, p_r, p_theta, epsilon, params)
    if not roots:
        raise DomainError(f"level {epsilon} does not meet phi = {phi0}")
    z0 = ExtremalPoint(0.0, phi0, 0.0, ReducedCostate(p_r, roots[branch], p_theta), int(epsilon))
    return classify_extremal(z0, params, t_max, tol)


# ---------------------------------------------------------------- symmetric pairs and cut points

@dataclass(frozen=True)
class AntipodalIntersection:
    t_half: float
    q_plus: np.ndarray
    q_minus: np.ndarray
    mismatch: dict
    seeds: tuple


def antipodal_intersection(z0: ExtremalPoint, params: DissipationParams,
                           tol: Tolerances = Tolerances(), t_max: float = 200.0) -> AntipodalIntersection:
    """Integrate the two root-seeded extremals at phi0 for half a period."""
    _require_integrable(params)
    c = z0.costate
    level = seed_level(z0, params)
    roots = pphi_roots(z0.phi, c.p_r, c.p_theta, level, params)
    if len(roots) < 2 or abs(roots[0] - roots[1]) < 1e-12:
        raise DomainError("need two distinct p_phi roots at phi0")
    other = roots[0] if abs(roots[1] - c.p_phi) < abs(roots[0] - c.p_phi) else roots[1]
    z1 = z0.with_costate(p_phi=other)
    T = orbit_period(z0, params, t_max, tol)
    tr0 = integrate_extremal(z0, params, (0.0, 0.5 * T), tol)
    tr1 = integrate_extremal(z1, params, (0.0, 0.5 * T), tol)
    a, b = tr0.y_end[:3], tr1.y_end[:3]
    target = math.pi - z0.phi
    mismatch = {"r": abs(a[0] - b[0]), "theta": abs(a[2] - b[2]), "phi": abs(a[1] - b[1]),
                "phi_target": max(abs(a[1] - target), abs(b[1] - target))}
    if mismatch["phi_target"] > 1e-4:
        raise DomainError("level component is not centrally symmetric: half period misses the antipodal parallel")
    return AntipodalIntersection(0.5 * T, a.copy(), b.copy(), mismatch, (z0, z1))


def cut_point(z0: ExtremalPoint, params: DissipationParams, tol: Tolerances = Tolerances()) -> LocusPoint:
    """Equal-time meeting point of the two root-seeded extremals."""
    if z0.costate.p_theta == 0.0:
        raise DomainError("cut points need p_theta != 0")
    ai = antipodal_intersection(z0, params, tol)
    q = 0.5 * (ai.q_plus + ai.q_minus)
    return LocusPoint((float(q[0]), float(q[1]), float(q[2])), ai.t_half, "cut", z0)


# ---------------------------------------------------------------- conjugate points

def _level_basis(v) -> np.ndarray:
    """Orthonormal basis of the plane orthogonal to v (rows)."""
    _, _, vt = np.linalg.svd(np.asarray(v, dtype=float).reshape(1, -1))
    return vt[1:]


def jacobi_determinant(y, params: DissipationParams, mode: str) -> np.ndarray:
    """Rank test along a co-integrated state (base + Jacobi fields)."""
    qd = extremal_rhs_reduced(y[..., :6], params)
    if mode == "full":
        d1, d2 = y[..., 6:9], y[..., 12:15]
        M = np.stack([d1, d2, qd[..., :3]], axis=-1)
        return np.linalg.det(M)
    return y[..., 7] * qd[..., 2] - y[..., 8] * qd[..., 1]


def _initial_fields(z0: ExtremalPoint, params, mode):
    qd = extremal_rhs_reduced(z0.as_array(), params)[:3]
    if mode == "full":
        dp = _level_basis(qd)
    else:
        v = np.array([0.0, -qd[2], qd[1]])
        n = np.linalg.norm(v)
        if n == 0.0:
            raise DomainError("velocity vanishes in the (phi, theta) plane")
        dp = (v / n)[None, :]
    return np.hstack([np.zeros_like(dp), dp])


def resolve_mode(params: DissipationParams, mode: str) -> str:
    if mode == "auto":
        return "reduced" if params.detuning == 0.0 else "full"
    if mode not in ("full", "reduced"):
        raise ValueError(f"unknown conjugate mode {mode!r}")
    return mode


def conjugate_time(z0: ExtremalPoint, params: DissipationParams, t_max: float,
                   tol: Tolerances = Tolerances(), mode: str = "auto"):
    """First conjugate time and point, or None before ``t_max``.

    ``full``: two vertical Jacobi fields spanning the level slice plus q' in
    (r, phi, theta).  ``reduced``: p_r held fixed, one level-tangent field plus
    q' in (phi, theta).  ``auto`` picks ``reduced`` when Gamma = gamma_plus,
    where the 3x3 determinant vanishes identically.
    """
    _require_integrable(params)
    mode = resolve_mode(params, mode)
    fields0 = _initial_fields(z0, params, mode)
    traj, _ = integrate_system_with_fields(reduced_system(params), z0.as_array(), fields0,
                                           (0.0, t_max), tol, epsilon=z0.epsilon)
    roots = traj.find_roots(lambda y: jacobi_determinant(y, params, mode))
    if not roots:
        if traj.status == K.STATUS_POLAR:
            raise PolarSingularity(f"extremal leaves the chart at t = {traj.t_end:.6g} before a conjugate point")
        return None
    tc = roots[0]
    y = traj(tc)
    return tc, LocusPoint((float(y[0]), float(y[1]), float(y[2])), tc, "conjugate", z0)


def _sweep_one(args):
    phi0, p_r, epsilon, params, p_theta, p_phi0, t_max, tol, mode, r0, theta0 = args
    seed = ExtremalPoint(r0, phi0, theta0, ReducedCostate(p_r, p_phi0, p_theta), int(epsilon))
    try:
        seed = normalize_to_level(seed, params, epsilon)
    except DomainError as exc:
        return ("skip", p_phi0, str(exc))
    try:
        res = conjugate_time(seed, params, t_max, tol, mode)
    except PolarSingularity as exc:
        return ("skip", p_phi0, str(exc))
    if res is None:
        return ("none", p_phi0, None)
    return ("ok", p_phi0, res[1])


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Map preserving input order; ``jobs > 1`` fans out over processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


@dataclass
class LocusSweep:
    points: list = field(default_factory=list)
    sources: list = field(default_factory=list)  # input p_phi0 of each point
    skipped: list = field(default_factory=list)
    no_conjugate: list = field(default_factory=list)

    def theta_phi(self) -> np.ndarray:
        return np.array([p.theta_phi for p in self.points], dtype=float).reshape(-1, 2)


def conjugate_locus_sweep(phi0, p_r, epsilon, params: DissipationParams, p_theta, p_phi0_grid,
                          t_max: float = 20.0, tol: Tolerances = Tolerances(), mode: str = "auto",
                          jobs: int = 1, r0: float = 0.0, theta0: float = 0.0) -> LocusSweep:
    """First conjugate points for seeds (phi0; p_r, p_phi0, p_theta) rescaled to H = epsilon."""
    _require_integrable(params)
    items = [(phi0, p_r, epsilon, params, p_theta, float(pp), t_max, tol, mode, r0, theta0)
             for pp in p_phi0_grid]
    out = LocusSweep()
    for status, pp, payload in parallel_map(_sweep_one, items, jobs):
        if status == "ok":
            out.points.append(payload)
            out.sources.append(pp)
        elif status == "skip":
            out.skipped.append((pp, payload))
        else:
            out.no_conjugate.append(pp)
    return out


def hausdorff(a, b) -> float:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return math.inf
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


# ---------------------------------------------------------------- Zermelo current

def zermelo_current(phi, params: DissipationParams):
    _require_integrable(params)
    return meridian_current(phi, params)


def finsler_regime(params: DissipationParams) -> bool:
    """The current can be compensated by feedback (|gamma_plus - Gamma| < 2)."""
    return abs(params.detuning) < 2.0


def barrier_band(params: DissipationParams) -> tuple:
    """Open phi-intervals where |current| > 1, one per hemisphere, centred at pi/4 and 3pi/4."""
    if abs(params.detuning) <= 2.0:
        return ()
    s = singular_phi(params)
    return ((s[0], s[1]), (s[2], s[3]))


# ---------------------------------------------------------------- normal form

class SynthesisType(str, enum.Enum):
    BSB = "BSB"
    BB = "BB"


def normal_form_classify(params: DissipationParams) -> SynthesisType:
    D = params.detuning
    if D == 0.0:
        raise GrusinDegenerate("gamma_plus = Gamma: the normal form has no singular structure")
    return SynthesisType.BSB if D < 0.0 else SynthesisType.BB


def normal_form_rhs(state, u, params: DissipationParams) -> np.ndarray:
    """x' = 1 + ((gamma_plus - Gamma)/Gamma) y^2, y' = (Gamma - gamma_plus) y + u2, z' = y u1."""
    x, y, z = (float(v) for v in state)
    u1, u2 = (float(v) for v in u)
    G, gp = params.Gamma, params.gamma_plus
    return np.array([1.0 + (gp - G) / G * y * y, (G - gp) * y + u2, y * u1])


def normal_form_legendre(params: DissipationParams) -> float:
    """d/du2 of the second derivative of the switching function along y = 0 (p_x = 1).

    Positive values make the singular line y = 0 the fastest way east and the
    small-time synthesis BSB; negative values rule it out (BB).
    """
    return -2.0 * params.detuning / params.Gamma


def simulate_normal_form(params: DissipationParams, controls: Sequence[tuple], state0=(0.0, 0.0, 0.0),
                         tol: Tolerances = Tolerances()) -> np.ndarray:
    """Piecewise-constant controls [(duration, u1, u2), ...]; returns the state after each piece."""
    y = np.asarray(state0, dtype=float)
    out = [y.copy()]
    for dur, u1, u2 in controls:
        if dur > 0.0:
            traj = integrate(normal_form_system(params, u1, u2), y, (0.0, float(dur)), tol)
            y = traj.y_end.copy()
        out.append(y.copy())
    return np.array(out)


@dataclass(frozen=True)
class SingularArcCheck:
    x_singular: float
    x_bang: float
    y_end_bang: float
    singular_better: bool
    classification: SynthesisType


def normal_form_singular_check(params: DissipationParams, T: float = 1.0, amp: float = 1.0,
                               tol: Tolerances = Tolerances()) -> SingularArcCheck:
    """Race the singular line against a bang-bang meridian arc of the same duration.

    Both start and end on y = 0 (z is untouched: u1 = 0).  The singular arc
    wins in x exactly when the normal form is BSB.
    """
    S = simulate_normal_form(params, [(T, 0.0, 0.0)], tol=tol)[-1]
    k = params.Gamma - params.gamma_plus
    # u2 = +amp, then -amp for the time that brings y back to 0
    t1 = T / 2.0
    if k == 0.0:
        t2 = t1
    else:
        y1 = amp / k * (math.exp(k * t1) - 1.0)
        # y' = k y - amp from y1 reaches 0 at t2
        arg = 1.0 - k * y1 / amp
        t2 = -math.log(arg) / k if arg > 0.0 else math.inf
    if not math.isfinite(t2):
        raise DomainError("bang arc cannot return to the singular line")
    B = simulate_normal_form(params, [(t1, 0.0, amp), (t2, 0.0, -amp)], tol=tol)[-1]
    # compare progress per unit time
    x_s, x_b = S[0] / T, B[0] / (t1 + t2)
    return SingularArcCheck(float(x_s), float(x_b), float(B[1]), bool(x_s > x_b),
                            normal_form_classify(params))
