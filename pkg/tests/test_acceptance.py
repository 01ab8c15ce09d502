"""End-to-end acceptance suite.

Nine checks, one per advertised guarantee, each printing a single
``[PASS]``/``[FAIL]`` line (run ``pytest -s`` to see the lines for passing
tests; pytest shows captured output for failing ones automatically):

1. SBP operator algebra: Q + Q^T = B exactly, polynomials differentiated
   exactly through the boundary closure order.
2. Discrete energy-rate identity at random states for all three systems.
3. Design-order convergence (boundary closure order + 1) on the advection
   solution that is smooth through the boundaries.
4. Short-time growth exponents of the three deviation kinds: slope 1
   (forcing), 1/2 (boundary), 0 (initial) -- linear and nonlinear system.
5. Deviation norms match the hand-derived characteristics formulas to 1%,
   improving under grid refinement.
6. A-priori energy bounds hold (ratio <= 1) and are tight (>= 0.95).
7. Long-time behaviour: forcing and boundary deviations saturate at the
   predicted levels, a compatible initial deviation leaves the domain.
8. Negative control: a wrong-sign penalty breaks the bound and blows up.
9. Suite artifacts are byte-identical across output paths and worker counts.
"""

import json

import numpy as np
import pytest

from ibvplab import (
    DataBundle,
    Grid1D,
    PerturbationSpec,
    SolverBlowupError,
    build_sbp_operator,
    bound_rhs_initial,
    classify_longtime,
    constant_perturbation,
    convergence_study,
    deviation_series,
    energy_rate_identity,
    estimate_delta0,
    fit_short_time_rate,
    make_advection,
    make_burgers_split,
    make_problem,
    make_wave_system,
    matched_boundary_data,
    parse_config,
    polynomial_exactness_report,
    rk4_solve,
    run_perturbation_pair,
    run_suite,
    smooth_switch_on,
    verify_bound,
)

EPS = 1e-3


def _line(num, name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}/9: {name} ({detail})")
    return ok


def zero_init(n_comp):
    return lambda x: np.zeros((n_comp, len(np.atleast_1d(x))))


def advection_problem(n, order=4, penalty_scale=1.0):
    sys = make_advection(1.0)
    grid = Grid1D(0.0, 1.0, n)
    op = build_sbp_operator(order, grid)
    data = DataBundle(initial=zero_init(1))
    return make_problem(sys, grid, op, data, penalty_scale=penalty_scale)


def burgers_problem(n=201, order=4):
    sysb = make_burgers_split()
    grid = Grid1D(0.0, 1.0, n)
    op = build_sbp_operator(order, grid)
    gval = matched_boundary_data(sysb, "left", np.array([1.0]))
    data = DataBundle(
        initial=lambda x: np.ones((1, len(np.atleast_1d(x)))),
        g_left=lambda t: gval,
    )
    return make_problem(sysb, grid, op, data)


def series_for(base, kind, t_end, shape=None):
    if shape is None:
        pert = constant_perturbation(kind, EPS, sides=("left",))
    else:
        pert = shape
    w = run_perturbation_pair(base, pert, t_end, cfl=0.5)
    return deviation_series(w, base, pert)


@pytest.fixture(scope="module")
def series401():
    """Constant unit-amplitude perturbations on the n = 401 advection base."""
    base = advection_problem(401)
    return {k: series_for(base, k, 2.0) for k in ("forcing", "boundary", "initial")}


@pytest.fixture(scope="module")
def series1601():
    base = advection_problem(1601)
    return {k: series_for(base, k, 1.0) for k in ("forcing", "boundary", "initial")}


# ----------------------------------------------------------------------------
# 1. operator algebra
# ----------------------------------------------------------------------------


def test_c1_sbp_operator_algebra():
    worst_sbp = 0.0
    worst_poly = 0.0
    for order in (2, 4, 6):
        for n in (32, 201):
            grid = Grid1D(0.0, 1.0, n)
            op = build_sbp_operator(order, grid)
            q = op.skew_matrix.toarray()
            b = np.zeros((n, n))
            b[0, 0] = -1.0
            b[-1, -1] = 1.0
            worst_sbp = max(worst_sbp, np.max(np.abs(q + q.T - b)))
            report = polynomial_exactness_report(op)
            worst_poly = max(
                worst_poly, max(report[k] for k in range(order // 2 + 1))
            )
    ok = worst_sbp <= 1e-13 and worst_poly <= 1e-11
    assert _line(
        1,
        "SBP operator algebra",
        ok,
        f"max |Q+Q^T-B| = {worst_sbp:.2e}, max exactness residual = {worst_poly:.2e}",
    )


# ----------------------------------------------------------------------------
# 2. energy identity
# ----------------------------------------------------------------------------


def test_c2_discrete_energy_identity():
    grid = Grid1D(0.0, 1.0, 96)
    op = build_sbp_operator(4, grid)
    problems = {
        "advection": make_problem(
            make_advection(1.3), grid, op, DataBundle(initial=zero_init(1))
        ),
        "wave": make_problem(
            make_wave_system(0.8), grid, op, DataBundle(initial=zero_init(2))
        ),
    }
    sysb = make_burgers_split()
    gval = matched_boundary_data(sysb, "left", np.array([1.0]))
    problems["burgers"] = make_problem(
        sysb,
        grid,
        op,
        DataBundle(
            initial=lambda x: np.ones((1, len(np.atleast_1d(x)))),
            g_left=lambda t: gval,
        ),
    )
    rng = np.random.default_rng(2026)
    worst = 0.0
    for label, prob in problems.items():
        n_comp = prob.initial_state.shape[0]
        for _ in range(50):
            if label == "burgers":
                # keep the state sign-definite so the inflow side is fixed
                state = 1.0 + rng.uniform(-0.4, 0.4, size=(n_comp, grid.n_points))
            else:
                state = rng.uniform(-1.0, 1.0, size=(n_comp, grid.n_points))
            balance = energy_rate_identity(prob, state, rng.uniform(0.0, 1.0))
            worst = max(worst, balance.residual / max(1.0, abs(balance.lhs)))
    ok = worst <= 1e-10
    assert _line(
        2,
        "discrete energy-rate identity",
        ok,
        f"worst relative residual over 150 random states = {worst:.2e}",
    )


# ----------------------------------------------------------------------------
# 3. convergence at design order
# ----------------------------------------------------------------------------


def test_c3_design_order_convergence(tmp_path):
    text = """
[system]
label = advection
speed = 1.0

[grid]
sizes = 51, 101, 201
order = 4

[perturbation]
kinds = forcing
eps = 1e-3

[analysis]
t_end = 0.5
rate_window = 0.01, 0.1
delta0_window = 0.01, 0.5
"""
    rep = convergence_study(parse_config(text, out_dir=str(tmp_path)))
    ok = rep.passed and rep.observed_order >= 2.75
    assert _line(
        3,
        "design-order convergence",
        ok,
        f"observed order {rep.observed_order:.3f} (expected {rep.expected_order:.1f}, "
        f"errors {', '.join(f'{e:.2e}' for e in rep.errors)})",
    )


# ----------------------------------------------------------------------------
# 4. short-time growth exponents
# ----------------------------------------------------------------------------


def test_c4_short_time_growth_exponents():
    targets = {"forcing": 1.0, "boundary": 0.5, "initial": 0.0}
    adv = advection_problem(201)
    burg = burgers_problem(201)
    slopes = {}
    ok = True
    for kind, target in targets.items():
        for label, base, tol in (("adv", adv, 0.05), ("burg", burg, 0.10)):
            s = series_for(base, kind, 0.2)
            fit = fit_short_time_rate(
                s, window=(0.01, 0.1), target_slope=target, slope_tol=tol
            )
            slopes[f"{label}-{kind}"] = fit.slope
            ok = ok and fit.passed and abs(fit.slope - target) <= tol
    detail = ", ".join(f"{k} {v:+.3f}" for k, v in slopes.items())
    assert _line(4, "short-time growth exponents", ok, detail)


# ----------------------------------------------------------------------------
# 5. closed-form oracles
# ----------------------------------------------------------------------------


def _oracle_errors(series):
    errs = {}
    for kind, s in series.items():
        t = s.times
        if kind == "forcing":
            sel = (t >= 0.05) & (t <= 0.999)
            exact = EPS * t[sel] * np.sqrt(1.0 - 2.0 * t[sel] / 3.0)
        elif kind == "boundary":
            sel = (t >= 0.05) & (t <= 0.999)
            exact = EPS * np.sqrt(2.0 * t[sel])
        else:
            sel = (t >= 0.05) & (t <= 0.899)
            exact = EPS * np.sqrt(1.0 - t[sel])
        errs[kind] = np.max(np.abs(s.w_norm[sel] - exact) / exact)
    return errs


def test_c5_closed_form_oracles(series401, series1601):
    coarse = _oracle_errors(series401)
    fine = _oracle_errors(series1601)
    ok = all(coarse[k] <= 1e-2 for k in coarse)
    ok = ok and all(fine[k] <= 1e-2 for k in fine)
    ok = ok and all(fine[k] < coarse[k] for k in coarse)
    detail = ", ".join(
        f"{k} {coarse[k]:.1e}->{fine[k]:.1e}" for k in ("forcing", "boundary", "initial")
    )
    assert _line(5, "closed-form deviation oracles", ok, f"max rel err {detail}")


# ----------------------------------------------------------------------------
# 6. a-priori bounds
# ----------------------------------------------------------------------------


def test_c6_a_priori_bounds(series401):
    base = advection_problem(401)
    ramp = PerturbationSpec(
        kind="boundary",
        amplitude=EPS,
        boundary_shape_left=lambda t: np.array([smooth_switch_on(t, 0.05)]),
    )
    w = run_perturbation_pair(base, ramp, 2.0, cfl=0.5)
    s_bnd = deviation_series(w, base, ramp)

    ratios = {}
    ok = True
    for kind, s in (
        ("forcing", series401["forcing"]),
        ("boundary", s_bnd),
        ("initial", series401["initial"]),
    ):
        d0 = estimate_delta0(s, window=(0.01, 2.0))
        rep = verify_bound(kind, s, d0)
        ratios[kind] = rep.max_ratio
        ok = ok and rep.passed and rep.max_ratio <= 1.0 + 1e-6
        ok = ok and rep.max_ratio >= 0.95  # the bound must also be tight

    # sharper theta-form of the initial bound: still above the measurement,
    # below (or equal to) the delta0 rate form
    s0 = series401["initial"]
    d0 = estimate_delta0(s0, window=(0.01, 2.0))
    h0 = s0.deltaH_norm
    theta_ratio = 0.0
    for t in (0.2, 0.5, 0.8):
        sharper = bound_rhs_initial(s0, d0, t, h0, form="theta")
        theta_ratio = max(theta_ratio, s0.w_norm_sq[s0.index_of(t)] / sharper)
    ok = ok and 0.95 <= theta_ratio <= 1.0 + 1e-2
    detail = ", ".join(f"{k} ratio {v:.4f}" for k, v in ratios.items())
    assert _line(
        6, "a-priori energy bounds", ok, f"{detail}, theta-form {theta_ratio:.4f}"
    )


# ----------------------------------------------------------------------------
# 7. long-time behaviour
# ----------------------------------------------------------------------------


def test_c7_long_time_saturation_and_decay(series401):
    vf = classify_longtime(series401["forcing"], horizon=2.0)
    vb = classify_longtime(series401["boundary"], horizon=2.0)
    ok = vf.verdict == "saturates" and vb.verdict == "saturates"
    ok = ok and abs(vf.saturation_level - EPS / np.sqrt(3.0)) <= 1e-2 * EPS
    ok = ok and abs(vb.saturation_level - EPS * np.sqrt(2.0)) <= 1e-2 * EPS

    # an initial deviation that is smooth and boundary-compatible must leave
    # the domain; order 6 keeps the closure wake below one part in 10^6
    base = advection_problem(401, order=6)
    pert = PerturbationSpec(
        kind="initial",
        amplitude=EPS,
        initial_shape=lambda x: (np.sin(np.pi * np.atleast_1d(x)) ** 4)[None, :],
    )
    w = run_perturbation_pair(base, pert, 2.0, cfl=0.5)
    s = deviation_series(w, base, pert)
    vh = classify_longtime(s, horizon=2.0)
    peak = np.max(s.w_norm)
    tail = np.max(s.w_norm[s.times >= 1.5]) / peak
    ok = ok and vh.verdict == "decays" and tail <= 1e-6
    assert _line(
        7,
        "long-time saturation / decay",
        ok,
        f"forcing sat {vf.saturation_level / EPS:.4f}/sqrt3^-1={1 / np.sqrt(3):.4f}, "
        f"boundary sat {vb.saturation_level / EPS:.4f}/sqrt2={np.sqrt(2):.4f}, "
        f"initial tail/peak {tail:.1e}",
    )


# ----------------------------------------------------------------------------
# 8. negative control
# ----------------------------------------------------------------------------


def test_c8_destabilized_negative_control():
    bad = advection_problem(101, penalty_scale=-1.0)
    pert = constant_perturbation("boundary", EPS, sides=("left",))
    w = run_perturbation_pair(bad, pert, 0.05, cfl=0.5)
    s = deviation_series(w, bad, pert)
    d0 = estimate_delta0(s, window=(0.005, 0.05))
    rep = verify_bound("boundary", s, d0)
    bound_broken = not rep.passed

    sysa = make_advection(1.0)
    grid = Grid1D(0.0, 1.0, 101)
    op = build_sbp_operator(4, grid)
    data = DataBundle(initial=zero_init(1), g_left=lambda t: np.array([1.0]))
    blown = make_problem(sysa, grid, op, data, penalty_scale=-1.0)
    try:
        rk4_solve(blown, 5.0, cfl=0.5)
        blew_up, t_blow = False, np.nan
    except SolverBlowupError as err:
        blew_up, t_blow = True, err.time
    ok = bound_broken and blew_up
    assert _line(
        8,
        "destabilized negative control",
        ok,
        f"bound ratio {rep.max_ratio:.2e} (broken: {bound_broken}), "
        f"blow-up at t = {t_blow:.4f}",
    )


# ----------------------------------------------------------------------------
# 9. reproducible artifacts
# ----------------------------------------------------------------------------


def test_c9_deterministic_artifacts(tmp_path):
    text = """
[system]
label = advection
speed = 1.0

[grid]
sizes = 64
order = 4

[perturbation]
kinds = forcing
eps = 1e-3

[analysis]
t_end = 0.2
rate_window = 0.01, 0.1
delta0_window = 0.01, 0.2
"""
    c1 = parse_config(text, out_dir=str(tmp_path / "a"), workers=1)
    c2 = parse_config(text, out_dir=str(tmp_path / "b"), workers=3)
    run_suite(c1)
    run_suite(c2)
    s1 = (tmp_path / "a" / "summary.json").read_text()
    s2 = (tmp_path / "b" / "summary.json").read_text()
    ok = s1 == s2 and json.loads(s1)["config_hash"] == c1.config_hash()
    assert _line(
        9,
        "deterministic artifacts",
        ok,
        f"summary.json byte-identical across out dirs/workers: {s1 == s2}",
    )
