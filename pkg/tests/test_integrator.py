import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lindblad_geo import kernels as K
from lindblad_geo.analysis import normal_form_rhs
from lindblad_geo.errors import PolarSingularity, StepFailure, SwitchingSurface
from lindblad_geo.hamiltonians import (
    energy_hamiltonian, energy_rhs, extremal_rhs_reduced, grusin_family_rhs, h_reduced,
)
from lindblad_geo.integrator import (
    AntipodalParallel, ComponentCrossing, EquatorCross, FunctionEvent, JacobiFrame, Tolerances,
    energy_system, field_jacobian, field_value, grusin_system, integrate, integrate_extremal,
    integrate_with_jacobi, normal_form_system, reduced_system,
)
from lindblad_geo.model import DissipationParams, ExtremalPoint, ReducedCostate

PAIR = ExtremalPoint(0.0, math.pi / 4, 0.0, ReducedCostate(1.0, -1.0, 2.0))
P25 = DissipationParams(2.5, 2.0)

phis = st.floats(0.1, math.pi - 0.1)
moments = st.floats(-4.0, 4.0)


def _fd_jacobian(f, y, h=1e-6):
    J = np.zeros((len(y), len(y)))
    for k in range(len(y)):
        e = np.zeros(len(y))
        e[k] = h
        J[:, k] = (f(y + e) - f(y - e)) / (2 * h)
    return J


class TestFields:
    @given(phis, moments, moments.filter(lambda v: abs(v) > 0.1), moments)
    def test_reduced_matches_reference(self, phi, p_r, pphi, pth):
        y = np.array([0.1, phi, 0.2, p_r, pphi, pth])
        assert field_value(reduced_system(P25), y) == pytest.approx(extremal_rhs_reduced(y, P25), rel=1e-13, abs=1e-13)

    @given(phis, moments, moments, st.floats(0, 1))
    def test_grusin_matches_reference(self, phi, pphi, pth, lam):
        y = np.array([phi, 0.3, pphi, pth])
        assert field_value(grusin_system(lam), y) == pytest.approx(grusin_family_rhs(y, lam), rel=1e-13, abs=1e-13)

    @given(phis, moments, moments, moments)
    def test_energy_matches_reference(self, phi, p_r, pphi, pth):
        y = np.array([0.0, phi, 0.0, p_r, pphi, pth])
        assert field_value(energy_system(P25), y) == pytest.approx(energy_rhs(y, P25), rel=1e-13, abs=1e-13)

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_normal_form_matches_reference(self, u1, u2, yv):
        s = np.array([0.2, yv, -0.1])
        assert field_value(normal_form_system(P25, u1, u2), s) == pytest.approx(normal_form_rhs(s, (u1, u2), P25))

    def test_normal_form_origin(self):
        assert normal_form_rhs((0, 0, 0), (0, 1), P25) == pytest.approx([1.0, 1.0, 0.0])

    @given(phis, moments, moments.filter(lambda v: abs(v) > 0.2), moments,
           st.sampled_from([P25, DissipationParams(4.5, 2.0), DissipationParams(2.0, 2.0)]))
    def test_reduced_jacobian_fd(self, phi, p_r, pphi, pth, params):
        sysm = reduced_system(params)
        y = np.array([0.0, phi, 0.0, p_r, pphi, pth])
        J = field_jacobian(sysm, y)
        assert J == pytest.approx(_fd_jacobian(lambda v: field_value(sysm, v), y), rel=1e-6, abs=1e-6)

    @given(phis, moments, moments, st.floats(0, 1))
    def test_grusin_jacobian_fd(self, phi, pphi, pth, lam):
        sysm = grusin_system(lam)
        y = np.array([phi, 0.0, pphi, pth])
        J = field_jacobian(sysm, y)
        assert J == pytest.approx(_fd_jacobian(lambda v: field_value(sysm, v), y), rel=1e-6, abs=1e-5)

    def test_variational_copies(self):
        sysm = reduced_system(P25)
        y = PAIR.as_array()
        dz = np.array([0.0, 0.1, 0.0, 0.3, -0.2, 0.5])
        out = field_value(sysm, np.concatenate([y, dz]))
        assert out[6:] == pytest.approx(field_jacobian(sysm, y) @ dz)


class TestDopri:
    def test_grusin_meridian(self):
        # unit-speed meridian geodesic phi = pi/4 + t, stopped by the polar band
        traj = integrate(grusin_system(1.0), [math.pi / 4, 0.0, 1.0, 0.0], (0.0, 10.0))
        assert traj.status == K.STATUS_POLAR
        ts = np.linspace(0.0, traj.t_end, 50)
        assert traj(ts)[:, 0] == pytest.approx(math.pi / 4 + ts, abs=1e-9)
        band = traj.events_named("polar_band")
        assert len(band) == 1 and band[0].y[0] == pytest.approx(math.pi - 1e-6, abs=1e-9)

    def test_pair_conservation(self):
        traj = integrate_extremal(PAIR, P25, (0.0, 20.0))
        Y = traj.base
        H = h_reduced(Y[:, 1], Y[:, 3], Y[:, 4], Y[:, 5], P25)
        assert np.max(np.abs(H - H[0])) <= 1e-8
        assert np.all(Y[:, 3] == 1.0) and np.all(Y[:, 5] == 2.0)

    def test_tolerance_convergence(self):
        # error against a tight reference shrinks with the tolerance
        ref = integrate_extremal(PAIR, P25, (0.0, 5.0), Tolerances(1e-13, 1e-13)).y_end
        errs = [np.max(np.abs(integrate_extremal(PAIR, P25, (0.0, 5.0), Tolerances(t, t)).y_end - ref))
                for t in (1e-6, 1e-8, 1e-10)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-8

    def test_dense_output_accuracy(self):
        traj = integrate_extremal(PAIR, P25, (0.0, 6.0))
        for t in (0.37, 2.9, 5.55):
            direct = integrate_extremal(PAIR, P25, (0.0, t)).y_end
            assert traj(t) == pytest.approx(direct, abs=1e-8)

    def test_dense_output_vectorized(self):
        traj = integrate_extremal(PAIR, P25, (0.0, 3.0))
        ts = np.array([0.1, 1.0, 2.5])
        Y = traj(ts)
        assert Y.shape == (3, 6)
        assert Y[1] == pytest.approx(traj(1.0))
        assert traj(0.0) == pytest.approx(PAIR.as_array(), abs=1e-15)

    def test_backward_round_trip(self):
        fwd = integrate_extremal(PAIR, P25, (0.0, 4.0), Tolerances(1e-12, 1e-12))
        back = integrate(reduced_system(P25), fwd.y_end, (4.0, 0.0), Tolerances(1e-12, 1e-12))
        assert back.y_end == pytest.approx(PAIR.as_array(), abs=1e-8)
        assert back(2.0) == pytest.approx(fwd(2.0), abs=1e-8)

    def test_deterministic(self):
        a = integrate_extremal(PAIR, P25, (0.0, 10.0))
        b = integrate_extremal(PAIR, P25, (0.0, 10.0))
        assert np.array_equal(a.y, b.y) and np.array_equal(a.t, b.t)

    def test_step_budget(self):
        with pytest.raises(StepFailure):
            integrate_extremal(PAIR, P25, (0.0, 20.0), Tolerances(max_steps=10))

    def test_start_on_switching_surface(self):
        z = ExtremalPoint(0.0, math.pi / 2, 0.0, ReducedCostate(1.0, 0.0, 2.0))
        with pytest.raises(SwitchingSurface):
            integrate_extremal(z, P25, (0.0, 1.0))

    def test_start_outside_chart(self):
        with pytest.raises(PolarSingularity):
            integrate(grusin_system(0.5), [0.0, 0.0, 1.0, 0.0], (0.0, 1.0))

    def test_bad_state_length(self):
        with pytest.raises(ValueError):
            integrate(grusin_system(0.5), [1.0, 0.0, 1.0], (0.0, 1.0))

    def test_energy_conservation(self):
        y0 = np.array([0.0, 1.0, 0.0, 0.4, 0.3, 0.8])
        traj = integrate(energy_system(P25), y0, (0.0, 10.0))
        Y = traj.base
        h = energy_hamiltonian(Y[:, 1], Y[:, 3], Y[:, 4], Y[:, 5], P25)
        assert np.max(np.abs(h - h[0])) < 1e-8


class TestEvents:
    def test_terminal_equator(self):
        z = ExtremalPoint(0.0, 1.0, 0.0, ReducedCostate(1.0, 2.0, 2.0))
        traj = integrate_extremal(z, P25, (0.0, 20.0), events=[EquatorCross(stop_after=1)])
        assert traj.status == K.STATUS_EVENT
        assert traj.y_end[1] == pytest.approx(math.pi / 2, abs=1e-12)
        assert traj.events_named("equator")[0].t == pytest.approx(traj.t_end, abs=1e-12)

    def test_recording_events(self):
        traj = integrate_extremal(PAIR, P25, (0.0, 20.0), events=[AntipodalParallel(3 * math.pi / 4)])
        evs = traj.events_named("antipodal_parallel")
        assert len(evs) >= 2
        for e in evs:
            assert e.y[1] == pytest.approx(3 * math.pi / 4, abs=1e-10)
        assert [e.t for e in evs] == sorted(e.t for e in evs)

    def test_direction_filter(self):
        up = integrate_extremal(PAIR, P25, (0.0, 20.0), events=[EquatorCross(dir=1)]).events
        down = integrate_extremal(PAIR, P25, (0.0, 20.0), events=[EquatorCross(dir=-1)]).events
        both = integrate_extremal(PAIR, P25, (0.0, 20.0), events=[EquatorCross()]).events
        assert len(up) + len(down) == len(both)
        traj = integrate_extremal(PAIR, P25, (0.0, 20.0))
        for e in up:
            assert field_value(traj.system, e.y)[1] > 0

    def test_component_crossing_stop(self):
        traj = integrate_extremal(PAIR, P25, (0.0, 20.0),
                                  events=[ComponentCrossing(2, 1.0, dir=1, stop_after=1, label="theta1")])
        assert traj.y_end[2] == pytest.approx(1.0, abs=1e-12)
        assert traj.events_named("theta1")

    def test_function_event(self):
        traj = integrate_extremal(PAIR, P25, (0.0, 10.0),
                                  events=[FunctionEvent(lambda y: y[..., 4], label="p_phi_zero")])
        for e in traj.events_named("p_phi_zero"):
            assert abs(e.y[4]) < 1e-10

    def test_root_at_start_skipped(self):
        z = ExtremalPoint(0.0, math.pi / 2, 0.0, ReducedCostate(1.0, 1.0, 2.0))
        traj = integrate_extremal(z, P25, (0.0, 1.0), events=[EquatorCross()])
        assert all(e.t > 0 for e in traj.events)


class TestJacobi:
    def _frame(self, z, dp):
        return JacobiFrame.vertical(z, dp)

    def test_vertical_frame(self):
        f = self._frame(PAIR, [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert f.is_vertical and f.delta_q.shape == (2, 3) and not np.any(f.delta_q)
        with pytest.raises(ValueError):
            self._frame(PAIR, [[0.0, 1.0, 0.0], [0.0, 2.0, 0.0]])

    def test_linearity(self):
        dp = np.array([0.2, -0.5, 0.8])
        fr = JacobiFrame(PAIR, np.hstack([np.zeros((2, 3)), [dp, 2 * dp]]))
        _, f1 = integrate_with_jacobi(PAIR, fr, P25, (0.0, 10.0))
        F = f1.fields(np.linspace(0.0, 10.0, 7))
        assert F[:, 1] == pytest.approx(2 * F[:, 0], rel=1e-10, abs=1e-12)

    def test_finite_difference_oracle(self):
        dp = np.array([0.1, 0.4, -0.3])
        T, h = 7.0, 1e-6
        _, flow = integrate_with_jacobi(PAIR, self._frame(PAIR, dp), P25, (0.0, T),
                                        Tolerances(1e-12, 1e-12))
        tight = Tolerances(1e-13, 1e-13)
        zp = ExtremalPoint.from_array(PAIR.as_array() + np.r_[0, 0, 0, h * dp])
        zm = ExtremalPoint.from_array(PAIR.as_array() - np.r_[0, 0, 0, h * dp])
        fd = (integrate_extremal(zp, P25, (0, T), tight).y_end - integrate_extremal(zm, P25, (0, T), tight).y_end) / (2 * h)
        v = flow.fields(T)[0]
        assert np.linalg.norm(v - fd) / np.linalg.norm(fd) <= 1e-5

    def test_frame_at_time(self):
        _, flow = integrate_with_jacobi(PAIR, self._frame(PAIR, [[0.0, 1.0, 0.0]]), P25, (0.0, 2.0))
        fr = flow.frame(1.0)
        assert fr.base.t == 1.0 and fr.fields.shape == (1, 6)
        assert flow.step_fields().shape[1:] == (1, 6)

    def test_non_vertical_rejected(self):
        with pytest.raises(ValueError):
            integrate_with_jacobi(PAIR, JacobiFrame(PAIR, [[1, 0, 0, 0, 0, 0]]), P25, (0, 1))
