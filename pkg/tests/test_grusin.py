import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lindblad_geo.errors import BranchError, CurvatureBlowup, DomainError, PolarSingularity
from lindblad_geo.grusin import (
    MetricFamilyPoint, antipodal_pair, clairaut_constant, conjugate_locus_sphere, conjugate_time,
    count_interior_zeros, covector_sweep, curvature, curvature_derivative, curvature_extremum,
    curvature_numeric, cut_locus_sphere, full_conjugate_locus, grusin_geodesic_closed_form,
    half_period, mirror_opposite_meridian, p_theta_bound, return_map, return_map_domain,
    return_map_numeric, tangent_reversals, tangent_sign_changes, unit_costate,
)
from lindblad_geo.hamiltonians import grusin_metric_coefficient
from lindblad_geo.integrator import Tolerances, grusin_system, integrate

lams = st.floats(0.0, 1.0)


class TestCurvature:
    @given(st.floats(0.05, math.pi - 0.05))
    def test_round_sphere(self, phi):
        assert curvature(0.0, phi) == pytest.approx(1.0, abs=1e-15)

    def test_grusin_reference_value(self):
        assert curvature(1.0, math.pi / 4) == pytest.approx(-4.0, abs=1e-12)

    def test_grusin_negative(self):
        phi = np.linspace(0.05, 1.5, 40)
        assert np.all(curvature(1.0, phi) < 0.0)

    def test_grusin_equator_blows_up(self):
        with pytest.raises(CurvatureBlowup):
            curvature(1.0, math.pi / 2)

    def test_fd_round_sphere(self):
        assert curvature_numeric(lambda p: np.sin(p) ** 2, 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_fd_family_member(self):
        G = lambda p: grusin_metric_coefficient(p, 0.5)
        assert curvature_numeric(G, 0.7) == pytest.approx(curvature(0.5, 0.7), abs=1e-6)

    def test_fd_grusin(self):
        assert curvature_numeric(lambda p: np.tan(p) ** 2, math.pi / 4) == pytest.approx(-4.0, abs=1e-5)

    @given(st.floats(0.0, 0.99), st.floats(0.1, math.pi - 0.1))
    def test_derivative_fd(self, lam, phi):
        h = 1e-6
        fd = (curvature(lam, phi + h) - curvature(lam, phi - h)) / (2 * h)
        assert curvature_derivative(lam, phi) == pytest.approx(fd, rel=1e-5, abs=1e-4)

    @pytest.mark.parametrize("lam", [0.7, 0.8, 0.9, 0.95])
    def test_extremum_is_critical(self, lam):
        phi = curvature_extremum(lam)
        assert phi is not None and 0 < phi < math.pi / 2
        assert curvature_derivative(lam, phi) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("lam", [0.0, 0.2, 0.5, 2 / 3])
    def test_no_extremum_below_two_thirds(self, lam):
        assert curvature_extremum(lam) is None
        phi = np.linspace(1e-3, math.pi / 2 - 1e-3, 400)
        assert count_interior_zeros(curvature_derivative(lam, phi)) == 0

    def test_zero_counter(self):
        assert count_interior_zeros([1, 2, -1, 0, -3, 4]) == 2

    def test_lambda_domain(self):
        with pytest.raises(DomainError):
            curvature(1.5, 1.0)


class TestMetricPoint:
    def test_unit_speed(self):
        p_th = 0.5
        pp = unit_costate(0.3, 1.0, p_th)
        pt = MetricFamilyPoint(0.3, 1.0, pp, p_th)
        assert pt.unit_speed and pt.h == pytest.approx(0.5)
        assert math.cos(pt.clairaut_angle) == pytest.approx(p_th / math.sqrt(pt.G))
        assert pt.as_state(0.2)[1] == 0.2

    def test_bound(self):
        assert p_theta_bound(1.0) == math.inf
        assert p_theta_bound(0.0, 1.0) == pytest.approx(math.sin(1.0))
        with pytest.raises(DomainError):
            unit_costate(0.0, 1.0, 1.0)

    @given(st.floats(0.0, 0.95), st.floats(0.3, 1.4), st.floats(0.05, 0.95))
    def test_clairaut_conserved(self, lam, phi0, frac):
        p_th = frac * p_theta_bound(lam, phi0)
        y0 = [phi0, 0.0, unit_costate(lam, phi0, p_th), p_th]
        traj = integrate(grusin_system(lam), y0, (0.0, 3.0))
        Y = traj.base
        G = grusin_metric_coefficient(Y[:, 0], lam)
        c = clairaut_constant(lam, Y[:, 0], Y[:, 2], Y[:, 3] / G)
        assert c == pytest.approx(np.full(len(c), p_th), abs=1e-9)


class TestClosedForm:
    def test_meridian(self):
        t = np.linspace(0, 1, 5)
        phi, theta = grusin_geodesic_closed_form(math.pi / 4, 1.0, 0.0, t)
        assert phi == pytest.approx(math.pi / 4 + t, abs=1e-12)
        assert np.all(theta == 0.0)

    def test_equatorial_amplitude(self):
        pp = unit_costate(1.0, math.pi / 2, 1.0)
        t = np.linspace(0.0, 2 * half_period(1.0, 1.0), 400)
        phi, _ = grusin_geodesic_closed_form(math.pi / 2, pp, 1.0, t)
        assert np.max(np.abs(np.cos(phi))) == pytest.approx(1 / math.sqrt(2), abs=1e-5)

    @given(st.floats(0.0, 1.0), st.floats(0.4, 1.5), st.floats(0.05, 0.9), st.sampled_from([1, -1]))
    def test_matches_integration(self, lam, phi0, frac, branch):
        bound = p_theta_bound(lam, phi0)
        p_th = frac * min(bound, 3.0)
        if 1.0 - p_th**2 * (1.0 - lam) <= 1e-3:
            return
        pp = unit_costate(lam, phi0, p_th, branch)
        T = 2 * half_period(lam, p_th)
        traj = integrate(grusin_system(lam), [phi0, 0.3, pp, p_th], (0.0, T), Tolerances(1e-12, 1e-12))
        ts = np.linspace(0.0, traj.t_end, 60)
        phi, theta = grusin_geodesic_closed_form(phi0, pp, p_th, ts, lam, 0.3)
        Y = traj(ts)
        assert np.max(np.abs(phi - Y[:, 0])) <= 1e-6
        assert np.max(np.abs(theta - Y[:, 1])) <= 1e-6

    def test_off_level(self):
        with pytest.raises(BranchError):
            grusin_geodesic_closed_form(1.0, 2.0, 0.5, 0.0)

    def test_degenerate_level(self):
        # p_theta = 1/sqrt(1 - lam): parallel orbit, no oscillation
        with pytest.raises(BranchError):
            grusin_geodesic_closed_form(math.pi / 2, 0.0, math.sqrt(2.0), 0.0, lam=0.5)


class TestReturnMap:
    @given(st.floats(0.01, 0.99))
    def test_round_sphere(self, p):
        assert return_map(0.0, p) == pytest.approx(math.pi, abs=1e-15)

    def test_reference_value(self):
        assert return_map(0.5, 1.0) == pytest.approx(math.pi * (1 - 1 / math.sqrt(6)), abs=1e-14)
        assert return_map(0.5, 1.0) == pytest.approx(1.8591, abs=1e-4)

    def test_grusin_limit(self):
        assert return_map(1.0, 1e6) < 1e-5
        assert return_map(1.0, 1e3) < return_map(1.0, 10.0) < return_map(1.0, 0.1)

    def test_alpha_form(self):
        # equivalent form pi (1 - alpha p / sqrt(1 + alpha p^2)) with alpha = lam
        for lam, p in [(0.3, 0.7), (0.9, 2.0)]:
            assert return_map(lam, p) == pytest.approx(math.pi - math.pi * lam * p / math.sqrt(1 + lam * p * p))

    def test_domain(self):
        assert return_map_domain(0.75) == pytest.approx((0.0, 2.0))
        with pytest.raises(DomainError):
            return_map(0.75, 2.5)
        with pytest.raises(DomainError):
            return_map_numeric(0.75, 2.0)

    def test_numeric_round_sphere(self):
        for p in (0.1, 0.5, 0.9):
            assert return_map_numeric(0.0, p).delta_theta == pytest.approx(math.pi, abs=1e-8)

    def test_numeric_period(self):
        s = return_map_numeric(0.6, 0.8)
        assert s.period == pytest.approx(2 * half_period(0.6, 0.8), abs=1e-8)
        assert s.delta_theta == pytest.approx(return_map(0.6, 0.8), abs=1e-8)

    def test_monotone_convex(self):
        lo, hi = return_map_domain(0.8)
        p = np.linspace(0.05, 0.95, 30) * hi
        R = np.array([return_map_numeric(0.8, v).delta_theta for v in p])
        d1 = np.diff(R)
        assert np.all(d1 < 0)
        assert np.all(np.diff(d1) > 0)


class TestConjugateLocus:
    def test_round_sphere_antipode(self):
        for phi0 in (math.pi / 3, math.pi / 2):
            bound = p_theta_bound(0.0, phi0)
            for frac in (0.2, 0.6):
                tc, phi, theta = conjugate_time(0.0, phi0, unit_costate(0.0, phi0, frac * bound), frac * bound)
                assert tc == pytest.approx(math.pi, abs=1e-8)
                assert (theta, phi) == pytest.approx((math.pi, math.pi - phi0), abs=1e-6)

    def test_meridian_leaves_chart(self):
        with pytest.raises(PolarSingularity):
            conjugate_time(0.0, math.pi / 2, 1.0, 0.0)

    def test_locus_sphere_records(self):
        pts = conjugate_locus_sphere(0.0, math.pi / 3, [0.2, 0.4, 0.6])
        assert len(pts) == 3
        assert all(p.kind == "conjugate" and p.seed.unit_speed for p in pts)

    def test_cusps(self):
        closed = full_conjugate_locus(0.8, math.pi / 3, n=121)
        assert len(tangent_reversals(closed)) == 4

    def test_equatorial_grusin_folds(self):
        closed = full_conjugate_locus(1.0, math.pi / 2, n=121)
        assert len(tangent_reversals(closed)) == 2
        # no reversal sits on the equator
        for i in tangent_reversals(closed):
            assert abs(closed[i % len(closed), 1] - math.pi / 2) > 0.1

    def test_sweep_shape(self):
        sw = covector_sweep(0.5, 1.0, 11)
        assert sw[0][0] == pytest.approx(1.0, abs=1e-5) and sw[-1][0] == pytest.approx(-1.0, abs=1e-5)
        for pp, pt in sw:
            assert MetricFamilyPoint(0.5, 1.0, pp, pt).unit_speed
        eq = covector_sweep(1.0, math.pi / 2, 10)
        assert {pp for pp, _ in eq} == {1.0, -1.0}

    def test_mirror(self):
        m = mirror_opposite_meridian([[1.0, 0.5]])
        assert m[0] == pytest.approx([2 * math.pi - 1.0, 0.5])

    def test_reversal_detector(self):
        t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
        astroid = np.c_[np.cos(t) ** 3, np.sin(t) ** 3]
        assert len(tangent_reversals(astroid)) == 4
        circle = np.c_[np.cos(t), np.sin(t)]
        assert tangent_reversals(circle) == []
        assert tangent_sign_changes(circle[:150]) == (0, 1)


class TestCutLocus:
    def test_round_sphere_point(self):
        c = cut_locus_sphere(0.0, math.pi / 3)
        assert c.kind == "point" and (c.points[0].point[2], c.phi) == pytest.approx((math.pi, 2 * math.pi / 3))

    def test_antipodal_parallel_pair(self):
        tp, tm, yp, ym = antipodal_pair(0.5, math.pi / 3, 0.9)
        assert abs(tp - tm) <= 1e-8
        assert yp[0] == pytest.approx(2 * math.pi / 3, abs=1e-10)
        assert yp[1] == pytest.approx(ym[1], abs=1e-8)

    def test_parallel_arc(self):
        c = cut_locus_sphere(0.5, math.pi / 3, n=8)
        assert c.kind == "parallel_arc" and c.phi == pytest.approx(2 * math.pi / 3)
        assert c.max_time_mismatch <= 1e-8
        assert all(p.point[1] == pytest.approx(2 * math.pi / 3, abs=1e-9) for p in c.points)

    def test_equator_minus_point(self):
        grid = [0.1, 1.0, 5.0, 30.0]
        c = cut_locus_sphere(1.0, math.pi / 2, grid)
        assert c.kind == "equator_minus_point"
        for p, pt in zip(c.points, grid):
            assert p.point[2] == pytest.approx(return_map(1.0, pt), abs=1e-7)
            assert p.point[1] == pytest.approx(math.pi / 2, abs=1e-9)
        thetas = [p.point[2] for p in c.points]
        assert max(thetas) > 0.9 * math.pi and min(thetas) < 0.05
