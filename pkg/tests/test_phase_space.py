import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsdyn.phase_space import (
    ActionAngle,
    PhasePoint,
    WindowKind,
    angle_difference,
    bin_window,
    cps_surface_volume,
    draw_triangle_actions,
    from_action_angle,
    half_space_window,
    sample_cps,
    sample_initial_window,
    scaled_action_difference,
    to_action_angle,
    triangle_window,
    y_t_closed_form,
)
from cpsdyn.propagator import TWO_PI, Hamiltonian2, PropagatorAngles, evolution_matrix, propagator_angles

gammas = st.floats(-0.45, 3.0, allow_nan=False)
angles = st.floats(0.0, TWO_PI, allow_nan=False, exclude_max=True)


def test_action_angle_examples():
    aa = to_action_angle(PhasePoint(math.sqrt(2), 0.0, 0.0, math.sqrt(2), gamma=0.0))
    assert (aa.e1, aa.e2) == pytest.approx((1.0, 1.0))
    assert (aa.th1, aa.th2) == pytest.approx((0.0, math.pi / 2))
    aa = to_action_angle(PhasePoint(-1.0, 0.0, 0.0, 0.0, gamma=0.3))
    assert (aa.e1, aa.e2, aa.th1, aa.th2) == (0.5, 0.0, math.pi, 0.0)


def test_zero_action_angle_is_zero():
    aa = to_action_angle(PhasePoint(np.zeros(3), np.ones(3), -0.0 * np.ones(3), np.zeros(3)))
    np.testing.assert_array_equal(aa.th1, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-12, 5.0), st.floats(1e-12, 5.0), angles, angles, gammas)
def test_round_trip(e1, e2, th1, th2, gamma):
    pt = from_action_angle(ActionAngle(e1, e2, th1, th2, gamma))
    aa = to_action_angle(pt)
    back = from_action_angle(aa)
    for a, b in ((pt.x1, back.x1), (pt.x2, back.x2), (pt.p1, back.p1), (pt.p2, back.p2)):
        assert abs(a - b) <= 1e-14 * max(1.0, abs(a))
    assert 0.0 <= aa.th1 < TWO_PI and 0.0 <= aa.th2 < TWO_PI


def test_negative_action_rejected():
    with pytest.raises(ValueError):
        from_action_angle(ActionAngle(-1e-3, 1.0, 0.0, 0.0))


def test_gamma_domain():
    with pytest.raises(ValueError):
        PhasePoint(1.0, 0.0, 0.0, 0.0, gamma=-0.5)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 2.0])
def test_scaled_action_difference_examples(gamma):
    r = 1 + 2 * gamma
    def y(e1, e2):
        return scaled_action_difference(from_action_angle(ActionAngle(e1, e2, 0.0, 0.0, gamma)))
    assert y(r, 0.0) == pytest.approx(0.5)
    assert y(0.0, r) == pytest.approx(-0.5)
    assert y(r / 2, r / 2) == pytest.approx(0.0, abs=1e-15)
    assert y(0.75 * r, 0.25 * r) == pytest.approx(0.25)


def test_angle_difference_examples():
    assert angle_difference(ActionAngle(1, 1, 0.0, 0.0)) == 0.0
    assert angle_difference(ActionAngle(1, 1, 1.5 * math.pi, 0.5 * math.pi)) == pytest.approx(math.pi)
    assert angle_difference(ActionAngle(1, 1, 0.1, 0.05)) == pytest.approx(TWO_PI - 0.05)


def test_y_t_trivial_angles():
    y0 = np.linspace(-0.5, 0.5, 11)
    stay = PropagatorAngles(0.0, 0.0, 0.4, 1.0, 0.0)
    swap = PropagatorAngles(math.pi / 2, 0.0, 0.4, 1.0, 0.0)
    np.testing.assert_allclose(y_t_closed_form(y0, 0.7, stay), y0, atol=1e-15)
    np.testing.assert_allclose(y_t_closed_form(y0, 0.7, swap), -y0, atol=1e-15)
    quarter = PropagatorAngles(math.pi / 4, 0.0, 0.0, 0.0, 0.0)
    assert y_t_closed_form(0.25, math.pi / 2, quarter) == pytest.approx(0.0, abs=1e-16)


def test_y_t_rejects_out_of_range():
    with pytest.raises(ValueError):
        y_t_closed_form(0.6, 0.0, PropagatorAngles(0.1, 0.0, 0.0, 0.0, 0.0))


@settings(max_examples=150, deadline=None)
@given(st.floats(-0.5, 0.5), angles, angles, gammas, st.floats(0, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3))
def test_y_t_matches_coefficient_propagation(y0, th1, thd, gamma, t, h11, re, im):
    h = Hamiltonian2(h11, 2.0, re, im)
    r = 1 + 2 * gamma
    pt = from_action_angle(ActionAngle(r * (y0 + 0.5), r * (0.5 - y0), th1, th1 + thd, gamma))
    u = evolution_matrix(h, t).matrix()
    g = u @ np.array([pt.g1, pt.g2])
    moved = PhasePoint.from_coefficients(g[0], g[1], gamma)
    assert float(moved.constraint_residual()) <= 1e-12 * max(1.0, r)
    yt = scaled_action_difference(moved)
    assert abs(y_t_closed_form(y0, thd, propagator_angles(h, t)) - yt) <= 1e-12


@given(st.floats(-0.5, 0.5), angles)
def test_y_t_periodic_in_angle(y0, thd):
    ang = PropagatorAngles(0.7, 0.2, 1.3, 4.0, 2.0)
    assert y_t_closed_form(y0, thd, ang) == y_t_closed_form(y0, thd + TWO_PI, ang) or \
        abs(y_t_closed_form(y0, thd, ang) - y_t_closed_form(y0, thd + TWO_PI, ang)) <= 1e-15


def test_surface_volume():
    assert cps_surface_volume(0.0, 2) == pytest.approx(4 * math.pi**2)
    assert cps_surface_volume(0.5, 2) == pytest.approx(8 * math.pi**2)
    assert cps_surface_volume(7.0, 1) == pytest.approx(TWO_PI)
    with pytest.raises(ValueError):
        cps_surface_volume(-0.5, 2)


@given(st.floats(-0.5, 0.5))
def test_half_space_partition(y):
    assert half_space_window(1, y) + half_space_window(2, y) == 1.0


def test_half_space_convention_at_zero():
    assert half_space_window(1, 0.0) == 0.0
    assert half_space_window(2, 0.0) == 1.0
    with pytest.raises(ValueError):
        half_space_window(3, 0.1)


def test_triangle_and_bin_windows():
    assert triangle_window(1, 1.5, 0.4) == 1.0
    assert triangle_window(1, 1.5, 0.6) == 0.0
    assert triangle_window(2, 0.2, 1.1) == 1.0
    assert bin_window(1, 1.2, 0.9) == 1.0
    assert bin_window(2, 1.2, 0.9) == 0.0
    assert bin_window(2, 0.3, 1.9) == 1.0


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_sample_cps_statistics(gamma):
    rng = np.random.default_rng(11)
    n = 10**6
    pt = sample_cps(gamma, rng, n)
    assert float(np.max(pt.constraint_residual())) < 1e-12
    y = scaled_action_difference(pt)
    assert abs(y.mean()) <= 3 / math.sqrt(12 * n)
    assert abs(np.mean(y > 0) - 0.5) <= 3 * 0.5 / 1e3
    aa = to_action_angle(pt)
    assert abs(aa.th1.mean() - math.pi) <= 3 * TWO_PI / math.sqrt(12 * n)


def test_samplers_deterministic():
    a = sample_cps(0.5, np.random.default_rng(3), 100)
    b = sample_cps(0.5, np.random.default_rng(3), 100)
    np.testing.assert_array_equal(a.x1, b.x1)
    np.testing.assert_array_equal(a.p2, b.p2)


def test_sampled_y_independent_of_gamma():
    ys = [scaled_action_difference(sample_initial_window(1, WindowKind.HALF_SPACE, g, np.random.default_rng(9), 200))
          for g in (0.0, 0.5, 1.0)]
    np.testing.assert_allclose(ys[1], ys[0], atol=1e-15)
    np.testing.assert_allclose(ys[2], ys[0], atol=1e-15)


@pytest.mark.parametrize("n", [1, 2])
def test_half_space_sampler_sign(n):
    pt = sample_initial_window(n, WindowKind.HALF_SPACE, 0.5, np.random.default_rng(2), 50000)
    y = scaled_action_difference(pt)
    assert np.all(y > 0) if n == 1 else np.all(y < 0)
    assert float(np.max(pt.constraint_residual())) < 1e-12


@pytest.mark.parametrize("n", [1, 2])
def test_triangle_sampler_region(n):
    pt = sample_initial_window(n, WindowKind.SQC_TRIANGLE, 0.5, np.random.default_rng(4), 20000)
    aa = to_action_angle(pt)
    en, eo = (aa.e1, aa.e2) if n == 1 else (aa.e2, aa.e1)
    assert np.all((en >= 1 - 1e-12) & (en <= 2 + 1e-12))
    assert np.all(en + eo <= 2 + 1e-12)
    assert np.all(triangle_window(n, aa.e1 + 1e-13 * (n == 2), aa.e2 + 1e-13 * (n == 1)) >= 0)


def test_triangle_acceptance_fraction():
    size = 200000
    _, _, proposals = draw_triangle_actions(np.random.default_rng(8), size)
    frac = size / proposals
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / proposals)


def test_sampler_rejects_bin_window():
    with pytest.raises(ValueError):
        sample_initial_window(1, WindowKind.SQC_BIN, 0.5, np.random.default_rng(0), 4)
    with pytest.raises(ValueError):
        sample_initial_window(3, WindowKind.HALF_SPACE, 0.5, np.random.default_rng(0), 4)
