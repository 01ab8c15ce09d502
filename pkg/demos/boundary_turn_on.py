"""Why switching boundary data on abruptly breaks the energy bound.

The a-priori bound for boundary-data errors is derived assuming the solution
trace *equals* the data.  Weak (penalty) enforcement only drives the trace
towards the data, and when the data jumps from 0 to eps at t = 0 the trace
overshoots before settling: the boundary term 2 q g transiently exceeds the
2 g^2 the bound accounts for, and the ratio measured/bound pokes above 1 for
a few boundary-layer times.  This is a property of the weak formulation, not
a bug, and it is scale-invariant: refining the grid shrinks the overshoot
window but not its height.

The cure on the data side is to switch the perturbation on smoothly.  With a
quintic ramp (continuous second derivative) over a twentieth of a transit,
the trace tracks the data, the overshoot disappears, and the bound holds
with room to spare while remaining tight.

Run from the repository root::

    python demos/boundary_turn_on.py
"""

import numpy as np

from ibvplab import (
    DataBundle,
    Grid1D,
    PerturbationSpec,
    build_sbp_operator,
    deviation_series,
    estimate_delta0,
    make_advection,
    make_problem,
    run_perturbation_pair,
    smooth_switch_on,
    verify_bound,
)

EPS = 1e-3
RAMP_TIME = 0.05


def base_problem(n=401, order=4):
    grid = Grid1D(0.0, 1.0, n)
    op = build_sbp_operator(order, grid)
    data = DataBundle(initial=lambda x: np.zeros((1, len(np.atleast_1d(x)))))
    return make_problem(make_advection(1.0), grid, op, data)


def boundary_perturbation(profile):
    return PerturbationSpec(
        kind="boundary",
        amplitude=EPS,
        boundary_shape_left=lambda t: np.array([profile(t)]),
    )


def trace_overshoot(w):
    """Peak inflow-node deviation relative to its settled value."""
    trace = np.array([states[0, 0] for states in w.states])
    return np.max(trace) / trace[-1]


def report(label, base, pert, t_end=2.0):
    w = run_perturbation_pair(base, pert, t_end, cfl=0.5)
    s = deviation_series(w, base, pert)
    d0 = estimate_delta0(s, window=(0.01, t_end))
    rep = verify_bound("boundary", s, d0)
    print(f"{label}:")
    print(f"  inflow trace overshoots its settled value by {trace_overshoot(w):.3f} x")
    print(f"  max measured/bound    {rep.max_ratio:.4f}  "
          f"({'bound holds' if rep.passed else 'bound VIOLATED'})")
    return s, rep


def main():
    base = base_problem()
    print(f"advection a=1, n=401, order 4, boundary perturbation eps={EPS}\n")

    s_jump, rep_jump = report(
        "abrupt turn-on (data jumps to eps at t=0)", base, boundary_perturbation(lambda t: 1.0)
    )
    print()
    s_ramp, rep_ramp = report(
        f"quintic ramp over {RAMP_TIME} transit times",
        base,
        boundary_perturbation(lambda t: smooth_switch_on(t, RAMP_TIME)),
    )
    print()

    # The overshoot is a boundary-layer effect: it lives on the first few
    # grid cells worth of time and does not converge away.
    print("abrupt case under grid refinement (the overshoot is scale-invariant):")
    for n in (101, 201, 401):
        b = base_problem(n=n)
        pert = boundary_perturbation(lambda t: 1.0)
        w = run_perturbation_pair(b, pert, 0.2, cfl=0.5)
        s = deviation_series(w, b, pert)
        d0 = estimate_delta0(s, window=(0.01, 0.2))
        rep = verify_bound("boundary", s, d0)
        print(f"  n = {n:4d}: trace overshoot {trace_overshoot(w):.3f} x, "
              f"max ratio {rep.max_ratio:.4f}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("\nmatplotlib not available; skipping the figure")
        return

    def ratio(rep, sel):
        denom = np.where(rep.bound[sel] > 0.0, rep.bound[sel], np.nan)
        return rep.measured[sel] / denom

    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    with np.errstate(invalid="ignore", divide="ignore"):
        sel = s_jump.times <= 0.5
        ax0.plot(s_jump.times[sel], ratio(rep_jump, sel), label="abrupt")
        sel = s_ramp.times <= 0.5
        ax0.plot(s_ramp.times[sel], ratio(rep_ramp, sel), "--", label="ramped")
    ax0.axhline(1.0, color="k", lw=0.6)
    ax0.set_xlabel("t")
    ax0.set_ylabel("measured / bound")
    ax0.legend(frameon=False)
    ax1.plot(s_jump.times, s_jump.w_norm / EPS, label="abrupt")
    ax1.plot(s_ramp.times, s_ramp.w_norm / EPS, "--", label="ramped")
    ax1.set_xlabel("t")
    ax1.set_ylabel(r"$\|w\|_P / \epsilon$")
    fig.tight_layout()
    out = __file__.replace(".py", ".png")
    fig.savefig(out, dpi=150)
    print(f"\nfigure written to {out}")


if __name__ == "__main__":
    main()
