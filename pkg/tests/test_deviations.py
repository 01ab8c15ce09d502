"""Perturbation pairs, damping estimation, a-priori bounds and rate fits.

The quantitative fixtures here are hand-derived by the method of
characteristics for unit advection on [0, 1] starting from rest:

* constant forcing eps      -> ||W||_P = eps * t * sqrt(1 - 2 t / 3), t <= 1
* constant boundary data    -> ||W||_P = eps * sqrt(2 t),             t <= 1
* constant initial data     -> ||W||_P = eps * sqrt(1 - t),           t <= 1
"""

import numpy as np
import pytest

from ibvplab import (
    DataBundle,
    Grid1D,
    PerturbationSpec,
    build_sbp_operator,
    bound_rhs_boundary,
    bound_rhs_forcing,
    bound_rhs_initial,
    cauchy_schwarz_check,
    classify_longtime,
    constant_perturbation,
    deviation_series,
    estimate_delta0,
    eta_series,
    fit_short_time_rate,
    make_advection,
    make_burgers_split,
    make_problem,
    run_perturbation_pair,
    theta_integral,
    verify_bound,
    write_series_csv,
)

EPS = 1e-3


def advection_base(n=201, order=4):
    sys = make_advection(1.0)
    grid = Grid1D(0.0, 1.0, n)
    op = build_sbp_operator(order, grid)
    data = DataBundle(initial=lambda x: np.zeros((1, len(np.atleast_1d(x)))))
    return make_problem(sys, grid, op, data)


@pytest.fixture(scope="module")
def advection_series():
    """One deviation series per perturbation kind (shared, read-only)."""
    base = advection_base()
    out = {}
    for kind in ("forcing", "boundary", "initial"):
        pert = constant_perturbation(kind, EPS, sides=("left",))
        w = run_perturbation_pair(base, pert, 2.0, cfl=0.5)
        out[kind] = deviation_series(w, base, pert)
    return out


# ----------------------------------------------------------------------------
# perturbation specs
# ----------------------------------------------------------------------------


def test_spec_requires_exactly_one_kind():
    with pytest.raises(ValueError):
        PerturbationSpec(kind="forcing", amplitude=EPS)  # missing shape
    with pytest.raises(ValueError):
        PerturbationSpec(
            kind="forcing",
            amplitude=EPS,
            forcing_shape=lambda x, t: np.zeros((1, len(np.atleast_1d(x)))),
            initial_shape=lambda x: np.zeros((1, len(np.atleast_1d(x)))),
        )
    with pytest.raises(ValueError):
        constant_perturbation("volumetric", EPS)


def test_boundary_perturbation_needs_an_inflow_side():
    base = advection_base(n=64)
    pert = constant_perturbation("boundary", EPS, sides=("right",))
    with pytest.raises(ValueError, match="right"):
        run_perturbation_pair(base, pert, 0.1, cfl=0.5)


def test_pair_run_shares_time_grid():
    base = advection_base(n=64)
    pert = constant_perturbation("initial", EPS)
    w = run_perturbation_pair(base, pert, 0.3, cfl=0.5)
    assert w.times[0] == 0.0 and w.times[-1] == pytest.approx(0.3)
    # the deviation starts exactly at the perturbation profile
    np.testing.assert_allclose(w.states[0], EPS * np.ones((1, 64)), atol=1e-15)


# ----------------------------------------------------------------------------
# closed-form agreement (coarse tolerance; the acceptance suite tightens it)
# ----------------------------------------------------------------------------


def test_forcing_deviation_matches_characteristics(advection_series):
    s = advection_series["forcing"]
    sel = (s.times >= 0.05) & (s.times <= 0.999)
    exact = EPS * s.times[sel] * np.sqrt(1.0 - 2.0 * s.times[sel] / 3.0)
    np.testing.assert_allclose(s.w_norm[sel], exact, rtol=1e-2)


def test_boundary_deviation_matches_characteristics(advection_series):
    s = advection_series["boundary"]
    sel = (s.times >= 0.05) & (s.times <= 0.999)
    exact = EPS * np.sqrt(2.0 * s.times[sel])
    np.testing.assert_allclose(s.w_norm[sel], exact, rtol=1e-2)


def test_initial_deviation_matches_characteristics(advection_series):
    s = advection_series["initial"]
    sel = (s.times >= 0.05) & (s.times <= 0.899)
    exact = EPS * np.sqrt(1.0 - s.times[sel])
    np.testing.assert_allclose(s.w_norm[sel], exact, rtol=1e-2)


# ----------------------------------------------------------------------------
# eta / theta / delta0
# ----------------------------------------------------------------------------


def test_eta_vanishes_before_anything_reaches_outflow(advection_series):
    """Boundary-driven deviation: zero outflow until the front arrives at 1."""
    s = advection_series["boundary"]
    early = s.times < 0.9
    assert np.max(s.eta[early]) <= 1e-10


def test_eta_series_floors_tiny_norms():
    eta = eta_series(np.array([0.0, 1e-30, 1.0]), np.array([0.0, 1.0, 0.5]), 1.0)
    assert eta[0] == 0.0 and eta[1] == 0.0
    assert eta[2] == pytest.approx(0.5)


def test_theta_is_cumulative_trapezoid():
    times = np.linspace(0.0, 1.0, 11)
    eta = np.ones_like(times)
    theta = theta_integral(times, eta)
    np.testing.assert_allclose(theta, times, atol=1e-14)


def test_initial_kind_theta_matches_log_form(advection_series):
    """For the shrinking support, theta(0, t) = -0.5 log(1 - t) exactly."""
    s = advection_series["initial"]
    sel = (s.times >= 0.1) & (s.times <= 0.8)
    np.testing.assert_allclose(
        s.theta[sel], -0.5 * np.log(1.0 - s.times[sel]), rtol=2e-2
    )


def test_delta0_for_forcing_run_near_half(advection_series):
    d0 = estimate_delta0(advection_series["forcing"], window=(0.01, 2.0))
    assert d0.delta0 == pytest.approx(0.5, rel=0.02)
    assert d0.method == "infimum_of_mean_eta"


def test_delta0_zero_when_eta_vanishes(advection_series):
    d0 = estimate_delta0(advection_series["boundary"], window=(0.01, 2.0))
    assert d0.delta0 == 0.0


def test_delta0_lower_bounds_theta_increments(advection_series):
    """theta(xi, t) >= delta0 (t - xi) on the window, the defining property."""
    s = advection_series["forcing"]
    window = (0.01, 2.0)
    d0 = estimate_delta0(s, window)
    sel = (s.times >= window[0]) & (s.times <= window[1])
    t = s.times[sel]
    th = s.theta[sel]
    for i in range(0, len(t) - 1, 37):
        gaps = th[i + 1 :] - th[i] - d0.delta0 * (t[i + 1 :] - t[i])
        assert np.min(gaps) >= -1e-10


# ----------------------------------------------------------------------------
# bounds
# ----------------------------------------------------------------------------


def test_forcing_bound_holds_and_saturates(advection_series):
    s = advection_series["forcing"]
    d0 = estimate_delta0(s, window=(0.01, 2.0))
    rep = verify_bound("forcing", s, d0)
    assert rep.passed
    assert rep.max_ratio <= 1.0 + 1e-6
    # bound value is (1 - exp(-delta0 t)) / delta0 * running max ||dF||
    expected = (
        -np.expm1(-d0.delta0 * s.times[-1]) / d0.delta0 * np.max(s.dual_forcing_norm)
    )
    assert rep.bound[-1] == pytest.approx(expected, rel=1e-12)


def test_boundary_bound_with_zero_delta0_is_linear_in_t(advection_series):
    s = advection_series["boundary"]
    d0 = estimate_delta0(s, window=(0.01, 2.0))
    assert d0.delta0 == 0.0
    t_probe = 0.5
    expected = 2.0 * t_probe * np.max(s.boundary_data_norm_sq)
    assert bound_rhs_boundary(s, d0, t_probe) == pytest.approx(expected, rel=1e-12)


def test_initial_bound_equals_norm_at_zero(advection_series):
    s = advection_series["initial"]
    d0 = estimate_delta0(s, window=(0.01, 2.0))
    h0 = s.deltaH_norm
    assert bound_rhs_initial(s, d0, 0.0, h0) == pytest.approx(h0**2)
    rep = verify_bound("initial", s, d0)
    assert rep.passed


def test_sharper_initial_bound_between_measured_and_rate_bound(advection_series):
    """exp(-2 theta) form: below the delta0 bound, above the measurement."""
    s = advection_series["initial"]
    d0 = estimate_delta0(s, window=(0.01, 2.0))
    h0 = s.deltaH_norm
    for t in (0.2, 0.5, 0.8):
        sharper = bound_rhs_initial(s, d0, t, h0, form="theta")
        rate = bound_rhs_initial(s, d0, t, h0, form="rate")
        k = s.index_of(t)
        assert sharper <= rate + 1e-18
        assert s.w_norm_sq[k] <= sharper * (1.0 + 1e-2)


def test_growth_factor_series_branch_continuous():
    """The small-delta0*t series must join the closed form smoothly.

    Straddle the branch point x = delta0 * t = 1e-8 at fixed t, so the two
    evaluations differ only in which formula they take.
    """
    from ibvplab.deviations import _growth_factor

    t = 1.0
    for rate in (1.0, 2.0):
        series_side = _growth_factor(0.9999e-8, t, rate)
        closed_side = _growth_factor(1.0001e-8, t, rate)
        assert series_side == pytest.approx(closed_side, rel=1e-9)
        assert series_side == pytest.approx(rate * t, rel=1e-7)
    # delta0 = 0 reduces to rate * t exactly
    assert _growth_factor(0.0, 0.3, 2.0) == pytest.approx(0.6)


def test_verify_bound_rejects_unknown_kind(advection_series):
    s = advection_series["forcing"]
    d0 = estimate_delta0(s, window=(0.01, 2.0))
    with pytest.raises(ValueError):
        verify_bound("volumetric", s, d0)


def test_cauchy_schwarz_certificate():
    base = advection_base(n=64)
    rng = np.random.default_rng(29)
    w = rng.normal(size=(1, 64))
    df = rng.normal(size=(1, 64))
    cert = cauchy_schwarz_check(w, df, base.system.mass_matrix, base.op)
    assert cert.lhs <= cert.rhs + 1e-12
    assert cert.ok


# ----------------------------------------------------------------------------
# rate fits and long-time classification
# ----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kind,target", [("forcing", 1.0), ("boundary", 0.5), ("initial", 0.0)]
)
def test_short_time_slopes(advection_series, kind, target):
    fit = fit_short_time_rate(
        advection_series[kind], window=(0.01, 0.1), target_slope=target
    )
    assert fit.passed
    assert abs(fit.slope - target) <= 0.05
    assert fit.rms_residual <= 0.02


def test_rate_fit_needs_enough_samples(advection_series):
    s = advection_series["forcing"]
    with pytest.raises(ValueError):
        fit_short_time_rate(s, window=(0.01001, 0.01002), target_slope=1.0)
    with pytest.raises(ValueError):
        fit_short_time_rate(s, window=(0.0, 0.1), target_slope=1.0)


def test_longtime_forcing_saturates(advection_series):
    v = classify_longtime(advection_series["forcing"], horizon=2.0)
    assert v.verdict == "saturates"
    assert v.saturation_level == pytest.approx(EPS / np.sqrt(3.0), rel=1e-2)


def test_longtime_boundary_saturates(advection_series):
    v = classify_longtime(advection_series["boundary"], horizon=2.0)
    assert v.verdict == "saturates"
    assert v.saturation_level == pytest.approx(EPS * np.sqrt(2.0), rel=1e-2)


def test_longtime_rejects_short_horizon(advection_series):
    with pytest.raises(ValueError):
        classify_longtime(advection_series["forcing"], horizon=1.0)


def test_destabilized_run_grows_immediately():
    """Wrong-sign penalty: the deviation explodes within a fraction of a
    transit (the full blow-up path is covered in the solver tests)."""
    base = advection_base(n=101)
    bad = make_problem(base.system, base.grid, base.op, base.data, penalty_scale=-1.0)
    pert = constant_perturbation("boundary", EPS, sides=("left",))
    w = run_perturbation_pair(bad, pert, 0.05, cfl=0.5)
    s = deviation_series(w, bad, pert)
    assert s.w_norm[-1] > 100.0 * EPS


# ----------------------------------------------------------------------------
# burgers pair mechanics and csv
# ----------------------------------------------------------------------------


def test_burgers_pair_uses_shared_time_step():
    sysb = make_burgers_split()
    grid = Grid1D(0.0, 1.0, 101)
    op = build_sbp_operator(4, grid)
    data = DataBundle(
        initial=lambda x: np.ones((1, len(np.atleast_1d(x)))),
        g_left=lambda t: np.array([np.sqrt(1.0 / 3.0)]),
    )
    base = make_problem(sysb, grid, op, data)
    pert = constant_perturbation("initial", EPS)
    w = run_perturbation_pair(base, pert, 0.2, cfl=0.5)
    s = deviation_series(w, base, pert)
    assert not s.linear
    assert s.w_norm[0] == pytest.approx(EPS, rel=1e-10)
    # smooth regime: the nonlinear deviation stays O(eps)
    assert np.max(s.w_norm) <= 10.0 * EPS


def test_series_csv_roundtrip(tmp_path, advection_series):
    s = advection_series["forcing"]
    d0 = estimate_delta0(s, window=(0.01, 2.0))
    rep = verify_bound("forcing", s, d0)
    path = tmp_path / "series.csv"
    write_series_csv(s, rep, path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (len(s.times), 8)
    np.testing.assert_allclose(rows[:, 0], s.times)
    np.testing.assert_allclose(rows[:, 1], s.w_norm)
    header = path.read_text().splitlines()[0]
    assert header.split(",") == [
        "t", "w_norm", "w_norm_sq", "outflow", "eta", "theta", "bound_rhs", "ratio",
    ]
