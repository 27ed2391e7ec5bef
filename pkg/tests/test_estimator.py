import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsdyn import phase_space as ps
from cpsdyn.estimator import (
    BLOCK_SIZE,
    DegenerateRepresentationError,
    EnsembleConfig,
    _Mixing,
    _propagate_y,
    _UniformTable,
    covariant_from_angles,
    novel_from_angles,
    quadrature_oracle_p,
    run_covariant,
    run_novel,
    run_sqc_twf,
    sqc_from_angles,
    symmetry_checks,
)
from cpsdyn.propagator import Hamiltonian2, PropagatorAngles, evolution_matrix, exact_population_matrix, propagator_angles
from cpsdyn.representations import (
    HALF_PI,
    FGenerator,
    IsomorphismRep,
    Provenance,
    builtin_rep,
    sqz_closed_forms,
    weight,
)

REPS = ("sqz", "case1", "case2")
LAMBDA2 = Hamiltonian2.coupled(2.0)
T_QUARTER = math.pi / (2 * math.sqrt(20.0))


def angles_at(xi, alpha=0.3):
    """Synthetic propagator angles with the given mixing angles and varphi - psi = alpha."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    zero = np.zeros_like(xi)
    return PropagatorAngles(xi, zero, zero, zero + alpha, zero)


def cfg(n=20000, seed=1, times=(0.0,), **kw):
    return EnsembleConfig(n, seed, times=np.asarray(times, dtype=float), **kw)


# --- configuration ---------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(n_traj=0), dict(times=[]), dict(times=[0.0, np.nan]), dict(times=[1.0, 0.5]),
                                dict(seed=-1), dict(threads=0), dict(gamma=-0.5)])
def test_config_rejects_bad_values(kw):
    base = dict(n_traj=10, seed=0, times=[0.0])
    base.update(kw)
    with pytest.raises(ValueError):
        EnsembleConfig(**base)


def test_config_blocks_and_read_only_times():
    c = cfg(n=2 * BLOCK_SIZE + 5, times=[0.0, 1.0])
    assert c.block_sizes() == [BLOCK_SIZE, BLOCK_SIZE, 5]
    assert c.n_blocks == 3
    with pytest.raises(ValueError):
        c.times[0] = 3.0


# --- kernels ----------------------------------------------------------------------------

def test_uniform_table_accuracy():
    for name in REPS:
        f = builtin_rep(name).f
        table = _UniformTable(f)
        x = np.random.default_rng(0).random(20000) * 0.5
        x = np.concatenate([x, [0.0, 0.5, 0.5 - 1e-14]])
        assert float(np.max(np.abs(table(x) - f(x)))) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 5), st.floats(-10, 10), st.floats(-5, 5), st.floats(-5, 5))
def test_closed_form_y_matches_full_propagation(t, h11, re, im):
    h = Hamiltonian2(h11, 2.0, re, im)
    rng = np.random.default_rng(3)
    y0, th1, thd = ps.draw_cps(rng, 64)
    ang = propagator_angles(h, np.array([t]))
    yt = _propagate_y(y0, thd, _Mixing.from_angles(ang))[:, 0]
    pt = ps._point_from_y(y0, th1, thd, 0.5)
    g = evolution_matrix(h, t).matrix() @ np.stack([pt.g1, pt.g2])
    ref = ps.scaled_action_difference(ps.PhasePoint.from_coefficients(g[0], g[1], 0.5))
    np.testing.assert_allclose(yt, ref, atol=1e-12)


def test_triangle_action_update_matches_full_propagation():
    h = Hamiltonian2(1.0, -2.0, 0.7, 0.4)
    t = 0.9
    mix = _Mixing.from_angles(propagator_angles(h, np.array([t])))
    pt = ps.sample_initial_window(1, ps.WindowKind.SQC_TRIANGLE, 0.5, np.random.default_rng(5), 500)
    aa = ps.to_action_angle(pt)
    thd = ps.angle_difference(aa)
    root = np.sqrt(aa.e1 * aa.e2)
    e1t = np.stack([aa.e1, aa.e2, root * np.cos(thd), -root * np.sin(thd)], axis=1) @ mix.action_matrix()
    g = evolution_matrix(h, t).matrix() @ np.stack([pt.g1, pt.g2])
    np.testing.assert_allclose(e1t[:, 0], np.abs(g[0]) ** 2 / 2, atol=1e-12)


@pytest.mark.parametrize("name", REPS)
def test_per_trajectory_contributions_non_negative(name):
    rep = builtin_rep(name)
    rng = np.random.default_rng(9)
    mix = _Mixing.from_angles(angles_at(np.linspace(0, HALF_PI, 17)))
    for n in (1, 2):
        y0, _, thd = ps.draw_half_space(n, rng, 5000)
        yt = _propagate_y(y0, thd, mix)
        w = weight(rep, np.broadcast_to(y0[:, None], yt.shape), yt)
        for m in (1, 2):
            assert np.all(w * ps.half_space_window(m, yt) >= 0.0)


# --- exact limits -------------------------------------------------------------------------

@pytest.mark.parametrize("name", REPS)
def test_time_zero_is_identity_exactly(name):
    s = run_novel(LAMBDA2, builtin_rep(name), cfg(times=[0.0, 0.1]))
    np.testing.assert_array_equal(s.pop[0], np.eye(2))
    np.testing.assert_array_equal(s.stderr[0], 0.0)


def test_sqc_time_zero_is_identity_exactly():
    s = run_sqc_twf(LAMBDA2, cfg(times=[0.0, 0.1]))
    np.testing.assert_array_equal(s.pop[0], np.eye(2))
    np.testing.assert_array_equal(s.cbar[0], 1.0)


@pytest.mark.parametrize("name", REPS)
def test_uncoupled_hamiltonian_never_transfers(name):
    s = run_novel(Hamiltonian2(10.0, 2.0), builtin_rep(name), cfg(times=np.linspace(0, 5, 11)))
    np.testing.assert_array_equal(s.pop, np.broadcast_to(np.eye(2), s.pop.shape))
    np.testing.assert_array_equal(s.p[:, 0, 1], 0.0)
    np.testing.assert_array_equal(s.p[:, 1, 0], 0.0)
    rep = symmetry_checks(s)
    assert rep.z_p12_p21 == 0.0 and rep.passed


@pytest.mark.parametrize("name", REPS)
def test_full_swap(name):
    c = cfg()
    s = novel_from_angles(angles_at(HALF_PI), builtin_rep(name), c)
    np.testing.assert_array_equal(s.p[0, 0, 0], 0.0)
    np.testing.assert_array_equal(s.p[0, 1, 1], 0.0)
    np.testing.assert_array_equal(s.pop[0], [[0.0, 1.0], [1.0, 0.0]])


def test_sqc_full_swap():
    s = sqc_from_angles(angles_at(HALF_PI), cfg())
    np.testing.assert_array_equal(s.pop[0], [[0.0, 1.0], [1.0, 0.0]])


# --- structure ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lambda2_series():
    times = np.linspace(0, 2 * math.pi / math.sqrt(80.0), 25)
    c = cfg(n=60000, seed=11, times=times)
    return {name: run_novel(LAMBDA2, builtin_rep(name), c) for name in REPS} | {
        "sqc": run_sqc_twf(LAMBDA2, c), "cov": run_covariant(LAMBDA2, 0.5, c)}


@pytest.mark.parametrize("name", REPS + ("sqc",))
def test_rows_sum_to_one(lambda2_series, name):
    s = lambda2_series[name]
    np.testing.assert_array_equal(s.pop.sum(axis=2), 1.0)
    assert np.all((s.pop >= 0) & (s.pop <= 1))
    assert np.all(s.p >= 0) and np.all(s.cbar > 0)


@pytest.mark.parametrize("name", REPS + ("sqc",))
def test_matches_exact_populations(lambda2_series, name):
    s = lambda2_series[name]
    exact = exact_population_matrix(LAMBDA2, s.times)
    ref = np.swapaxes(exact, 1, 2)  # pop[n-1, m-1] = |U_mn|^2
    z = np.abs(s.pop - ref) / np.maximum(s.stderr, 1e-300)
    mask = s.stderr > 0
    assert float(np.max(z[mask])) <= 4.0
    assert float(np.max(np.abs(s.pop - ref)[~mask], initial=0.0)) <= 1e-15


@pytest.mark.parametrize("name", REPS + ("sqc",))
def test_symmetries(lambda2_series, name):
    report = symmetry_checks(lambda2_series[name], tolerance=4.0)
    assert report.passed, report.as_dict()


@pytest.mark.parametrize("name", ("case1", "case2"))
def test_normalisation_matches_profile(lambda2_series, name):
    s = lambda2_series[name]
    xi_prof = builtin_rep(name).xi(s.xi)
    for n in (0, 1):
        err = s.cbar_stderr[1:, n]
        assert float(np.max(np.abs(s.cbar[1:, n] - xi_prof[1:]) / err)) <= 4.0


def test_squeezed_raw_estimates_match_closed_forms(lambda2_series):
    s = lambda2_series["sqz"]
    p11, p12, cbar = sqz_closed_forms(s.xi)
    sel = s.p_stderr[:, 0, 1] > 0
    for est, ref, err in ((s.p[:, 0, 0], p11, s.p_stderr[:, 0, 0]), (s.p[:, 0, 1], p12, s.p_stderr[:, 0, 1]),
                          (s.cbar[:, 0], cbar, s.cbar_stderr[:, 0])):
        assert float(np.max(np.abs(est[sel] - ref[sel]) / err[sel])) <= 4.0


def test_covariant_rows_and_identity(lambda2_series):
    s = lambda2_series["cov"]
    # the row sum of each trajectory is 2 (e_n(0) - gamma), independent of time
    np.testing.assert_allclose(s.cbar, np.broadcast_to(s.cbar[0], s.cbar.shape), atol=1e-12)
    assert np.all(np.abs(s.cbar[0] - 1.0) <= 3 * s.cbar_stderr[0])
    z0 = np.abs(s.pop[0] - np.eye(2)) / s.stderr[0]
    assert float(z0.max()) <= 3.0
    exact = np.swapaxes(exact_population_matrix(LAMBDA2, s.times), 1, 2)
    assert float(np.max(np.abs(s.pop - exact) / s.stderr)) <= 4.0


def test_quarter_period_point():
    c = cfg(n=200000, seed=5, times=[T_QUARTER])
    for s in (run_novel(LAMBDA2, builtin_rep("sqz"), c, states=(1,)), run_covariant(LAMBDA2, 0.5, c, states=(1,))):
        assert abs(s.pop[0, 0, 0] - 0.8) <= 3 * s.stderr[0, 0, 0]


# --- determinism --------------------------------------------------------------------------

def test_thread_count_and_gamma_do_not_change_results():
    times = np.linspace(0, 1, 7)
    n = 3 * BLOCK_SIZE + 17
    base = run_novel(LAMBDA2, builtin_rep("case2"), EnsembleConfig(n, 123, 0.5, times, threads=1))
    for kw in (dict(threads=4), dict(gamma=0.0), dict(threads=3, gamma=2.0)):
        other = run_novel(LAMBDA2, builtin_rep("case2"), EnsembleConfig(n, 123, times=times, **{"gamma": 0.5, **kw}))
        np.testing.assert_array_equal(other.pop, base.pop)
        np.testing.assert_array_equal(other.stderr, base.stderr)
        np.testing.assert_array_equal(other.cbar, base.cbar)


def test_sqc_and_covariant_thread_determinism():
    times = np.linspace(0, 1, 5)
    for run in (lambda c: run_sqc_twf(LAMBDA2, c), lambda c: run_covariant(LAMBDA2, 0.3, c)):
        a = run(EnsembleConfig(10000, 4, times=times, threads=1))
        b = run(EnsembleConfig(10000, 4, times=times, threads=5))
        np.testing.assert_array_equal(a.p, b.p)
        np.testing.assert_array_equal(a.p_stderr, b.p_stderr)


def test_different_seeds_differ():
    a = run_novel(LAMBDA2, builtin_rep("sqz"), cfg(seed=1, times=[0.1]))
    b = run_novel(LAMBDA2, builtin_rep("sqz"), cfg(seed=2, times=[0.1]))
    assert a.p[0, 0, 0] != b.p[0, 0, 0]


# --- series container ----------------------------------------------------------------------

def test_single_state_series():
    s = run_novel(LAMBDA2, builtin_rep("sqz"), cfg(times=[0.0, 0.2]), states=(1,))
    assert s.states == (1,)
    assert np.all(np.isnan(s.pop[:, 1, :]))
    assert len(s) == 2
    t, est = next(iter(s))
    assert t == 0.0 and est.xi == 0.0
    with pytest.raises(ValueError):
        symmetry_checks(s)
    with pytest.raises(ValueError):
        run_novel(LAMBDA2, builtin_rep("sqz"), cfg(), states=(3,))
    with pytest.raises(ValueError):
        s.pop[0, 0, 0] = 1.0


def test_angles_must_match_grid():
    with pytest.raises(ValueError):
        novel_from_angles(angles_at([0.1, 0.2]), builtin_rep("sqz"), cfg())


def test_degenerate_generator_aborts():
    zero = IsomorphismRep(FGenerator(lambda y: 0.0 * y, Provenance.TABLE, name="zero"), None, "zero")
    with pytest.raises(DegenerateRepresentationError, match="normalisation factor"):
        run_novel(LAMBDA2, zero, cfg(times=[0.0, 0.3]))


# --- quadrature oracle ------------------------------------------------------------------------

def test_oracle_squeezed_closed_forms():
    p11, p12 = quadrature_oracle_p(builtin_rep("sqz"), math.pi / 4)
    assert p11 == pytest.approx(1 - 2 / math.pi, abs=1e-8)
    assert p12 == pytest.approx(1 - 2 / math.pi, abs=1e-8)
    for xi in np.linspace(0.05, HALF_PI - 0.05, 9):
        a, b, _ = sqz_closed_forms(xi)
        q11, q12 = quadrature_oracle_p(builtin_rep("sqz"), xi)
        assert q11 == pytest.approx(float(a), abs=1e-8)
        assert q12 == pytest.approx(float(b), abs=1e-8)


@pytest.mark.parametrize("name", REPS)
def test_oracle_complementary_limits(name):
    r = builtin_rep(name)
    for xi in (0.2, 0.7, 1.1):
        assert quadrature_oracle_p(r, xi)[0] == pytest.approx(quadrature_oracle_p(r, HALF_PI - xi)[1], abs=1e-14)


@pytest.mark.parametrize("name", REPS)
def test_oracle_ratios_equal_profile(name):
    r = builtin_rep(name)
    for xi in np.linspace(0.05, HALF_PI - 0.05, 12):
        p11, p12 = quadrature_oracle_p(r, xi)
        target = float(r.xi(xi))
        assert p11 / math.cos(xi) ** 2 == pytest.approx(target, abs=1e-6)
        assert p12 / math.sin(xi) ** 2 == pytest.approx(target, abs=1e-6)


def test_oracle_rejects_degenerate_angles():
    for xi in (0.0, HALF_PI):
        with pytest.raises(ValueError):
            quadrature_oracle_p(builtin_rep("sqz"), xi)


@pytest.mark.parametrize("name", REPS)
def test_oracle_agrees_with_monte_carlo(name):
    xis = np.array([0.3, 0.8, 1.2])
    s = novel_from_angles(angles_at(xis), builtin_rep(name), cfg(n=200000, seed=21, times=[0.0, 1.0, 2.0]), states=(1,))
    for k, xi in enumerate(xis):
        q11, q12 = quadrature_oracle_p(builtin_rep(name), xi)
        assert abs(s.p[k, 0, 0] - q11) <= 4 * s.p_stderr[k, 0, 0]
        assert abs(s.p[k, 0, 1] - q12) <= 4 * s.p_stderr[k, 0, 1]
