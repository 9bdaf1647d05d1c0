"""Adaptive propagation of extremals and Jacobi fields.

The stepping itself happens in :func:`lindblad_geo.kernels.dopri5`; this module
wraps it with typed systems, event bookkeeping and dense-output queries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import kernels as K
from .errors import StepFailure, SwitchingSurface
from .hamiltonians import Q_MIN, _require_integrable
from .model import PHI_MIN, DissipationParams, ExtremalPoint, check_chart

EVENT_XTOL = 1e-14


@dataclass(frozen=True)
class Tolerances:
    atol: float = 1e-10
    rtol: float = 1e-10
    max_steps: int = 2_000_000
    h0: float = 0.0

    def as_dict(self) -> dict:
        return {"atol": self.atol, "rtol": self.rtol, "max_steps": self.max_steps}


@dataclass(frozen=True)
class System:
    """A vector field known to the compiled kernel."""

    kind: int
    par: np.ndarray
    phi_index: int | None = None

    @property
    def dim(self) -> int:
        return K.BASE_DIM[self.kind]


def reduced_system(params: DissipationParams, q_min: float = Q_MIN, phi_min: float = PHI_MIN) -> System:
    _require_integrable(params)
    return System(K.REDUCED, np.array([params.Gamma, params.gamma_plus, q_min, phi_min]), 1)


def grusin_system(lam: float, phi_min: float = PHI_MIN) -> System:
    return System(K.GRUSIN, np.array([float(lam), phi_min]), 0)


def energy_system(params: DissipationParams, phi_min: float = PHI_MIN) -> System:
    _require_integrable(params)
    return System(K.ENERGY, np.array([params.Gamma, params.gamma_plus, phi_min]), 1)


def normal_form_system(params: DissipationParams, u1: float, u2: float) -> System:
    return System(K.NORMAL_FORM, np.array([params.Gamma, params.gamma_plus, float(u1), float(u2)]))


# ---------------------------------------------------------------- events

class EventKind:
    """Base class.  ``terminal`` events stop the run."""

    terminal = False
    name = "event"

    def residual(self, system: System, y):
        raise NotImplementedError

    def direction(self) -> int:
        return 0


@dataclass(frozen=True)
class ComponentCrossing(EventKind):
    """``y[index] == value``; stops after ``stop_after`` hits when positive."""

    index: int
    value: float
    dir: int = 0
    stop_after: int = 0
    label: str = "crossing"

    @property
    def terminal(self):
        return self.stop_after > 0

    @property
    def name(self):
        return self.label

    def residual(self, system, y):
        return y[..., self.index] - self.value

    def direction(self):
        return self.dir


@dataclass(frozen=True)
class EquatorCross(EventKind):
    dir: int = 0
    stop_after: int = 0
    name = "equator"

    @property
    def terminal(self):
        return self.stop_after > 0

    def residual(self, system, y):
        return y[..., system.phi_index] - math.pi / 2

    def direction(self):
        return self.dir


@dataclass(frozen=True)
class AntipodalParallel(EventKind):
    phi_target: float
    dir: int = 0
    stop_after: int = 0
    name = "antipodal_parallel"

    @property
    def terminal(self):
        return self.stop_after > 0

    def residual(self, system, y):
        return y[..., system.phi_index] - self.phi_target

    def direction(self):
        return self.dir


@dataclass(frozen=True)
class FunctionEvent(EventKind):
    """Recording event on an arbitrary vectorized scalar ``fn(y)``."""

    fn: Callable
    label: str = "function"
    dir: int = 0

    @property
    def name(self):
        return self.label

    def residual(self, system, y):
        return self.fn(y)

    def direction(self):
        return self.dir


@dataclass(frozen=True)
class SwitchingGuard(EventKind):
    terminal = True
    name = "switching_guard"


@dataclass(frozen=True)
class PolarBand(EventKind):
    terminal = True
    name = "polar_band"


@dataclass(frozen=True)
class ConjugateDet(EventKind):
    """Sign change of a Jacobi determinant; produced by the conjugate-point code."""

    name = "conjugate"


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    y: np.ndarray


# ---------------------------------------------------------------- trajectory

def _dense(ts, rc, t):
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    m = rc.shape[0]
    if ts[-1] >= ts[0]:
        i = np.searchsorted(ts, t, side="left") - 1
    else:
        i = np.searchsorted(-ts, -t, side="left") - 1
    i = np.clip(i, 0, m - 1)
    h = ts[i + 1] - ts[i]
    th = ((t - ts[i]) / h)[:, None]
    th1 = 1.0 - th
    c = rc[i]
    out = c[:, 0] + th * (c[:, 1] + th1 * (c[:, 2] + th * (c[:, 3] + th1 * c[:, 4])))
    return out[0] if scalar else out


@dataclass
class Trajectory:
    system: System
    t: np.ndarray
    y: np.ndarray
    rcont: np.ndarray
    status: int
    n_rejected: int = 0
    events: list = field(default_factory=list)
    epsilon: int = 1

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def y_end(self) -> np.ndarray:
        return self.y[-1]

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @property
    def base(self) -> np.ndarray:
        """Step-point values of the base (non-variational) components."""
        return self.y[:, : self.system.dim]

    def __call__(self, t):
        if self.rcont.shape[0] == 0:
            return self.y[0] if np.ndim(t) == 0 else np.repeat(self.y[:1], np.size(t), axis=0)
        return _dense(self.t, self.rcont, t)

    def samples(self) -> list[tuple[float, ExtremalPoint]]:
        if self.system.kind not in (K.REDUCED, K.ENERGY):
            raise TypeError("samples are defined for the reduced chart only")
        return [(float(t), ExtremalPoint.from_array(row[:6], self.epsilon, float(t)))
                for t, row in zip(self.t, self.y)]

    def events_named(self, name: str) -> list[Event]:
        return [e for e in self.events if e.kind == name]

    def find_roots(self, g: Callable, direction: int = 0, t_min: float | None = None) -> list[float]:
        """All sign changes of ``g(y)`` between step points, refined on dense output.

        A root exactly at the start point is not reported.
        """
        vals = np.asarray(g(self.y), dtype=float)
        roots = []
        for k in range(len(vals) - 1):
            a, b = vals[k], vals[k + 1]
            if not (np.isfinite(a) and np.isfinite(b)):
                continue
            up = a < 0.0 <= b
            down = a > 0.0 >= b
            if not ((direction >= 0 and up) or (direction <= 0 and down)):
                continue
            ta, tb = self.t[k], self.t[k + 1]
            if b == 0.0:
                tr = float(tb)
            else:
                tr = brentq(lambda s: float(g(self(s)[None, :])[0]), min(ta, tb), max(ta, tb),
                            xtol=EVENT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)
            if t_min is None or abs(tr - self.t0) >= abs(t_min - self.t0):
                roots.append(tr)
        return roots


def _terminal_arrays(system: System, events: Sequence[EventKind]):
    idx, val, dirs, cnt = [], [], [], []
    for ev in events:
        if isinstance(ev, ComponentCrossing) and ev.stop_after > 0:
            idx.append(ev.index)
            val.append(ev.value)
            dirs.append(ev.dir)
            cnt.append(ev.stop_after)
        elif isinstance(ev, (EquatorCross, AntipodalParallel)) and ev.stop_after > 0:
            idx.append(system.phi_index)
            val.append(math.pi / 2 if isinstance(ev, EquatorCross) else ev.phi_target)
            dirs.append(ev.dir)
            cnt.append(ev.stop_after)
    return (np.array(idx, dtype=np.int64), np.array(val, dtype=float),
            np.array(dirs, dtype=np.int64), np.array(cnt, dtype=np.int64))


def _check_start(system: System, y0):
    if system.phi_index is not None:
        check_chart(y0[system.phi_index], system.par[-1] if system.kind != K.REDUCED else system.par[3])
    if system.kind == K.REDUCED:
        phi, p_phi, p_th = y0[1], y0[4], y0[5]
        Q = math.hypot(p_phi, p_th * math.cos(phi) / math.sin(phi))
        if Q <= system.par[2]:
            raise SwitchingSurface(f"initial Q = {Q:.3e} on the switching surface")


def _clip_to_event(system, ts, ys, rc, ev_arrays, tol):
    """Redo the last step so the run ends on the terminal crossing instead of past it."""
    idx, val, dirs, _ = ev_arrays
    ta, tb = ts[-2], ts[-1]
    last = Trajectory(system, ts[-2:], ys[-2:], rc[-1:], 0)
    te, hit = tb, -1
    for e, (i, v, d) in enumerate(zip(idx, val, dirs)):
        roots = last.find_roots(lambda y, i=i, v=v: y[..., i] - v, int(d))
        if roots and abs(roots[0] - ta) < abs(te - ta):
            te, hit = roots[0], e
    if hit < 0:
        return ts, ys, rc
    no_ev = (np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64))
    y_a = np.ascontiguousarray(ys[-2])
    i, v = idx[hit], val[hit]
    best = None
    # the step endpoint differs from the dense interpolant at O(tol); Newton on the step length
    for _ in range(4):
        part = K.dopri5(system.kind, y_a, ta, te, system.par, tol.atol, tol.rtol, te - ta,
                        tol.max_steps, *no_ev)
        if part[4] != K.STATUS_END:
            break
        best = part
        g = part[1][-1, i] - v
        rate = field_value(system, part[1][-1, : system.dim])[i]
        if g == 0.0 or rate == 0.0 or abs(g) <= 4e-16 * max(1.0, abs(v)):
            break
        te_new = te - g / rate
        if not (min(ta, tb) < te_new <= max(ta, tb)):
            break
        te = te_new
    if best is None:
        return ts, ys, rc
    ts2, ys2, rc2 = best[0], best[1], best[2]
    return (np.concatenate([ts[:-1], ts2[1:]]), np.concatenate([ys[:-1], ys2[1:]]),
            np.concatenate([rc[:-1], rc2]))


def integrate(system: System, y0, t_span, tol: Tolerances = Tolerances(),
              events: Sequence[EventKind] = (), epsilon: int = 1) -> Trajectory:
    """Propagate ``y0`` (base state plus any variational copies) over ``t_span``."""
    y0 = np.ascontiguousarray(y0, dtype=float)
    nb = system.dim
    if y0.ndim != 1 or y0.shape[0] % nb:
        raise ValueError(f"state length {y0.shape} incompatible with base dimension {nb}")
    _check_start(system, y0)
    t0, t1 = (float(v) for v in t_span)
    ev_arrays = _terminal_arrays(system, events)
    ts, ys, rc, n_acc, status, n_rej = K.dopri5(
        system.kind, y0, t0, t1, system.par, tol.atol, tol.rtol, tol.h0, tol.max_steps, *ev_arrays)
    traj = Trajectory(system, ts, ys, rc, int(status), int(n_rej), [], epsilon)
    if status == K.STATUS_STEP_FAILURE:
        raise StepFailure(f"step size underflow at t = {ts[-1]:.6g}")
    if status == K.STATUS_MAX_STEPS:
        raise StepFailure(f"step budget of {tol.max_steps} exhausted at t = {ts[-1]:.6g}")

    # events are located on the unclipped run so a crossing at the clipped end is not lost
    log = []
    for ev in events:
        if isinstance(ev, (SwitchingGuard, PolarBand, ConjugateDet)):
            continue
        for tr in traj.find_roots(lambda y, ev=ev: ev.residual(system, y), ev.direction()):
            log.append(Event(tr, ev.name, traj(tr)))
    if status == K.STATUS_EVENT:
        ts, ys, rc = _clip_to_event(system, ts, ys, rc, ev_arrays, tol)
        traj = Trajectory(system, ts, ys, rc, int(status), int(n_rej), [], epsilon)
        # the polished crossing moves by O(tol) from the dense-output root
        slack = 1e-7 * max(1.0, abs(traj.t_end))
        reach = abs(traj.t_end - t0)
        log = [e if abs(e.t - traj.t_end) > slack else Event(traj.t_end, e.kind, traj.y_end.copy())
               for e in log if abs(e.t - t0) <= reach + slack]
    if status == K.STATUS_POLAR:
        phi_min = system.par[3] if system.kind == K.REDUCED else system.par[-1]
        pi_ = system.phi_index
        g = lambda y: np.minimum(y[..., pi_] - phi_min, math.pi - phi_min - y[..., pi_])
        roots = traj.find_roots(g, -1)
        tr = roots[-1] if roots else traj.t_end
        log.append(Event(tr, PolarBand.name, traj(tr)))
    elif status == K.STATUS_SWITCHING:
        log.append(Event(traj.t_end, SwitchingGuard.name, traj.y_end.copy()))
    log.sort(key=lambda e: abs(e.t - t0))
    traj.events = log
    return traj


def integrate_extremal(z0: ExtremalPoint, params: DissipationParams, t_span,
                       tol: Tolerances = Tolerances(), events: Sequence[EventKind] = (),
                       q_min: float = Q_MIN) -> Trajectory:
    """Reduced extremal flow from ``z0``.  Stops at guards; raises on step failure."""
    return integrate(reduced_system(params, q_min), z0.as_array(), t_span, tol, events, z0.epsilon)


# ---------------------------------------------------------------- Jacobi fields

@dataclass(frozen=True)
class JacobiFrame:
    """Tangent vectors (delta q, delta p) along ``base``; rows of ``fields``."""

    base: ExtremalPoint
    fields: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fields", np.atleast_2d(np.asarray(self.fields, dtype=float)))

    @classmethod
    def vertical(cls, base: ExtremalPoint, delta_p) -> "JacobiFrame":
        dp = np.atleast_2d(np.asarray(delta_p, dtype=float))
        if np.linalg.matrix_rank(dp) < dp.shape[0]:
            raise ValueError("initial costate variations are linearly dependent")
        return cls(base, np.hstack([np.zeros_like(dp), dp]))

    @property
    def is_vertical(self) -> bool:
        n = self.fields.shape[1] // 2
        return not np.any(self.fields[:, :n])

    @property
    def delta_q(self) -> np.ndarray:
        return self.fields[:, : self.fields.shape[1] // 2]


@dataclass
class JacobiFlow:
    trajectory: Trajectory
    n_fields: int

    def fields(self, t) -> np.ndarray:
        """Array (..., n_fields, dim) of Jacobi fields at ``t``."""
        nb = self.trajectory.system.dim
        y = self.trajectory(t)
        return y[..., nb:].reshape(y.shape[:-1] + (self.n_fields, nb))

    def frame(self, t) -> JacobiFrame:
        y = self.trajectory(t)
        return JacobiFrame(ExtremalPoint.from_array(y[:6], self.trajectory.epsilon, float(t)),
                           self.fields(t))

    def step_fields(self) -> np.ndarray:
        nb = self.trajectory.system.dim
        return self.trajectory.y[:, nb:].reshape(-1, self.n_fields, nb)


def integrate_system_with_fields(system: System, y0, fields0, t_span, tol: Tolerances = Tolerances(),
                                 events: Sequence[EventKind] = (), epsilon: int = 1):
    fields0 = np.atleast_2d(np.asarray(fields0, dtype=float))
    traj = integrate(system, np.concatenate([np.asarray(y0, float), fields0.ravel()]),
                     t_span, tol, events, epsilon)
    return traj, JacobiFlow(traj, fields0.shape[0])


def integrate_with_jacobi(z0: ExtremalPoint, frame0: JacobiFrame, params: DissipationParams, t_span,
                          tol: Tolerances = Tolerances(), events: Sequence[EventKind] = (),
                          q_min: float = Q_MIN):
    """Co-integrate the extremal and the variational system (analytic Jacobian)."""
    if not frame0.is_vertical:
        raise ValueError("Jacobi frame must be vertical at t = 0")
    return integrate_system_with_fields(reduced_system(params, q_min), z0.as_array(), frame0.fields,
                                        t_span, tol, events, z0.epsilon)


def field_jacobian(system: System, y) -> np.ndarray:
    """Analytic Jacobian of the base field at ``y`` (for tests and diagnostics)."""
    y = np.ascontiguousarray(y, dtype=float)
    nb = system.dim
    J = np.zeros((nb, nb))
    if system.kind == K.REDUCED:
        K.reduced_jacobian(y, system.par, J)
    elif system.kind == K.GRUSIN:
        K.grusin_jacobian(y, system.par, J)
    else:
        raise NotImplementedError("analytic Jacobian only for reduced and Grusin systems")
    return J


def field_value(system: System, y) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=float)
    out = np.empty_like(y)
    K.field(system.kind, y, system.par, out, np.zeros((system.dim, system.dim)))
    return out

