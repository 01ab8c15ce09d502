"""Deviation analysis for single-source data perturbations.

Perturb exactly one data source of a base problem -- the forcing (dF), the
boundary data (dG) or the initial data (dH) -- and study the deviation
W = U_perturbed - U_base.  The machinery follows the energy analysis of the
difference problem:

- the outflow ratio  eta(t) = outflow(t) / |W|_P^2,
- its integral      theta(0,t) = int_0^t eta,
- the damping rate  delta0 = inf over sampled sub-intervals of the mean eta,

give a-priori bounds on the deviation that this module both evaluates and
verifies against the measured runs:

    forcing:   |W|_P    <=  (1 - e^{-delta0 t}) / delta0 * max_t |dF|_{P^-1}
    boundary:  |W|_P^2  <=  (1 - e^{-2 delta0 t}) / delta0 * max_t |dG|^2
    initial:   |W|_P^2  <=  e^{-2 delta0 t} |dH|_P^2
               (sharper: e^{-2 theta(0,t)} |dH|_P^2)

Short-time growth is fitted on a log-log window (expected exponents: 1 for
forcing, 1/2 for boundary, 0 for initial perturbations) and the long-time
verdict is classified as decay, saturation or growth.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ibvplab.sbp import quad_inner_product
from ibvplab.solver import (
    SemiDiscreteProblem,
    Trajectory,
    make_problem,
    max_characteristic_speed,
    rk4_solve,
)
from ibvplab.systems import DataBundle, boundary_eigenstructure, boundary_term_split

__all__ = [
    "PerturbationSpec",
    "DeviationSeries",
    "DampingEstimate",
    "BoundReport",
    "RateFit",
    "LongtimeVerdict",
    "CauchySchwarzCertificate",
    "constant_perturbation",
    "run_perturbation_pair",
    "deviation_series",
    "eta_series",
    "theta_integral",
    "estimate_delta0",
    "bound_rhs_forcing",
    "bound_rhs_boundary",
    "bound_rhs_initial",
    "verify_bound",
    "fit_short_time_rate",
    "classify_longtime",
    "cauchy_schwarz_check",
    "write_series_csv",
]

PERTURBATION_KINDS = ("forcing", "boundary", "initial")

#: |W|_P^2 below this multiple of the domain length counts as vanished and
#: eta is set to 0 there (conservative: shrinks theta, weakens every bound).
W_NORM_SQ_FLOOR = 1e-20

#: eta at or below this level anywhere in the window makes estimate_delta0
#: return the conservative value 0.
ETA_VANISH = 1e-13

#: Bounds smaller than this are excluded from measured/bound ratios.
BOUND_FLOOR = 1e-14


@dataclass(frozen=True)
class PerturbationSpec:
    """One active data perturbation: kind, amplitude and shape.

    The shape matching the kind must be provided (for ``boundary`` at least
    one side); the others must stay ``None`` so that exactly one error source
    is active.  Shapes are unit profiles multiplied by ``amplitude``:
    ``forcing_shape(x, t) -> (n_comp, len(x))``, ``boundary_shape_*(t) ->
    scalar or (n_neg,)``, ``initial_shape(x) -> (n_comp, len(x))``.
    """

    kind: str
    amplitude: float
    forcing_shape: Callable[[np.ndarray, float], np.ndarray] | None = None
    boundary_shape_left: Callable[[float], np.ndarray] | None = None
    boundary_shape_right: Callable[[float], np.ndarray] | None = None
    initial_shape: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"kind must be one of {PERTURBATION_KINDS}, got {self.kind!r}")
        active = {
            "forcing": self.forcing_shape is not None,
            "boundary": self.boundary_shape_left is not None
            or self.boundary_shape_right is not None,
            "initial": self.initial_shape is not None,
        }
        if not active[self.kind]:
            raise ValueError(f"perturbation of kind {self.kind!r} is missing its shape")
        stray = [k for k, flag in active.items() if flag and k != self.kind]
        if stray:
            raise ValueError(
                f"only one error source may be active: kind={self.kind!r} "
                f"but shapes also given for {stray}"
            )


def constant_perturbation(
    kind: str,
    amplitude: float,
    n_comp: int = 1,
    sides: tuple[str, ...] = ("left", "right"),
) -> PerturbationSpec:
    """The default flat perturbation of unit shape in every component/slot."""
    ones_field = lambda x, t=None: np.ones((n_comp, len(np.atleast_1d(x))))
    if kind == "forcing":
        return PerturbationSpec(kind=kind, amplitude=amplitude, forcing_shape=ones_field)
    if kind == "initial":
        return PerturbationSpec(
            kind=kind, amplitude=amplitude, initial_shape=lambda x: ones_field(x)
        )
    if kind == "boundary":
        unit = lambda t: 1.0
        return PerturbationSpec(
            kind=kind,
            amplitude=amplitude,
            boundary_shape_left=unit if "left" in sides else None,
            boundary_shape_right=unit if "right" in sides else None,
        )
    raise ValueError(f"kind must be one of {PERTURBATION_KINDS}, got {kind!r}")


@dataclass(frozen=True)
class DeviationSeries:
    """Per-time measurements of a deviation run plus the data norms the
    bounds refer to."""

    times: np.ndarray
    w_norm: np.ndarray
    w_norm_sq: np.ndarray
    outflow: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    dual_forcing_norm: np.ndarray
    boundary_data_norm_sq: np.ndarray
    kind: str
    amplitude: float
    linear: bool
    transit_time: float

    @property
    def deltaH_norm(self) -> float:
        """|dH|_P at t = 0 (meaningful for initial-data perturbations)."""
        return float(self.w_norm[0])

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not a sampled time of this series")
        return idx


@dataclass(frozen=True)
class DampingEstimate:
    """Certified lower rate delta0 with theta(t) - theta(xi) >= delta0 (t - xi)
    on the estimation window."""

    delta0: float
    window: tuple[float, float]
    method: str = "infimum_of_mean_eta"


@dataclass(frozen=True)
class BoundReport:
    kind: str
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    max_ratio: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class RateFit:
    window: tuple[float, float]
    slope: float
    intercept: float
    rms_residual: float
    target_slope: float
    passed: bool


@dataclass(frozen=True)
class LongtimeVerdict:
    verdict: str  # decays | saturates | grows
    peak: float
    final: float
    tail_change: float
    saturation_level: float


@dataclass(frozen=True)
class CauchySchwarzCertificate:
    lhs: float
    rhs: float
    ok: bool


def _perturbed_data(
    base: SemiDiscreteProblem, pert: PerturbationSpec
) -> DataBundle:
    """Add the scaled perturbation shape to the matching base data source."""
    data = base.data
    eps = pert.amplitude

    if pert.kind == "forcing":
        shape = pert.forcing_shape
        base_f = data.forcing

        def forcing(x, t, _shape=shape, _base=base_f):
            extra = eps * np.asarray(_shape(x, t), dtype=float)
            if _base is None:
                return extra
            return np.asarray(_base(x, t), dtype=float) + extra

        return dataclasses.replace(data, forcing=forcing)

    if pert.kind == "initial":
        shape = pert.initial_shape
        base_h = data.initial

        def initial(x, _shape=shape, _base=base_h):
            return np.asarray(_base(x), dtype=float) + eps * np.asarray(_shape(x), dtype=float)

        return dataclasses.replace(data, initial=initial)

    # boundary
    replacements = {}
    for side, shape, bc, base_g in (
        ("left", pert.boundary_shape_left, base.bc_left, data.g_left),
        ("right", pert.boundary_shape_right, base.bc_right, data.g_right),
    ):
        if shape is None:
            continue
        if bc.n_neg == 0:
            raise ValueError(
                f"boundary perturbation targets side {side!r}, "
                f"which has no incoming characteristic"
            )

        def g(t, _shape=shape, _base=base_g, _n=bc.n_neg):
            extra = eps * np.broadcast_to(np.atleast_1d(np.asarray(_shape(t), dtype=float)), (_n,))
            if _base is None:
                return extra
            return np.atleast_1d(np.asarray(_base(t), dtype=float)) + extra

        replacements["g_" + side] = g
    return dataclasses.replace(data, **replacements)


def run_perturbation_pair(
    base: SemiDiscreteProblem,
    pert: PerturbationSpec,
    t_end: float,
    cfl: float = 0.5,
    store_stride: int = 1,
) -> Trajectory:
    """Solve base and perturbed problems on a shared time grid; return W.

    The deviation trajectory references the base problem; for self-linearized
    systems the boundary states of the perturbed run are kept in the metadata
    so the deviation's boundary terms can be evaluated at the instantaneous
    linearization state.
    """
    perturbed = make_problem(
        base.system, base.grid, base.op, _perturbed_data(base, pert), base.penalty_scale
    )
    # One shared step, set by the base problem, keeps the two time grids
    # identical so the difference of states is well defined.
    speed = max_characteristic_speed(base, base.initial_state)
    if speed <= 0.0:
        raise ValueError("characteristic speed is zero; nothing propagates")
    dt = cfl * base.grid.spacing / speed
    base_traj = rk4_solve(base, t_end, cfl=cfl, store_stride=store_stride, dt=dt)
    pert_traj = rk4_solve(perturbed, t_end, cfl=cfl, store_stride=store_stride, dt=dt)
    if base_traj.times.shape != pert_traj.times.shape or np.any(
        base_traj.times != pert_traj.times
    ):
        raise RuntimeError("paired runs diverged in time sampling")

    metadata = {"kind": pert.kind, "amplitude": pert.amplitude}
    if base.system.linearization_mode == "self":
        metadata["linearization_boundary"] = {
            "left": pert_traj.states[:, :, 0].copy(),
            "right": pert_traj.states[:, :, -1].copy(),
        }
    return Trajectory(
        times=base_traj.times,
        states=pert_traj.states - base_traj.states,
        step_size=base_traj.step_size,
        problem=base,
        metadata=metadata,
    )


def eta_series(
    w_norm_sq: np.ndarray, outflow: np.ndarray, domain_length: float
) -> np.ndarray:
    """Outflow-to-energy ratio with the vanishing-deviation convention."""
    floor = W_NORM_SQ_FLOOR * domain_length
    return np.where(w_norm_sq >= floor, outflow / np.maximum(w_norm_sq, floor), 0.0)


def theta_integral(times: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Cumulative trapezoidal integral of eta from the first sample."""
    return np.concatenate([[0.0], cumulative_trapezoid(eta, times)])


def _outflow_history(w: Trajectory, prob: SemiDiscreteProblem) -> np.ndarray:
    linearization = w.metadata.get("linearization_boundary")
    total = np.zeros(len(w.times))
    for side in ("left", "right"):
        idx = 0 if side == "left" else -1
        w_b = w.states[:, :, idx]  # (n_times, n_comp)
        if linearization is None:
            es = prob.eigenstructure(side, prob.initial_state)
            c = w_b @ es.rotation  # row k = (T^T W_k)^T
            total += c * c @ es.positive_part
        else:
            states_b = linearization[side]
            for k in range(len(w.times)):
                es = boundary_eigenstructure(prob.system, side, states_b[k])
                total[k] += boundary_term_split(es, w_b[k])[0]
    return total


def deviation_series(
    w: Trajectory, prob: SemiDiscreteProblem, pert: PerturbationSpec
) -> DeviationSeries:
    """Measure |W|_P, outflow, eta, theta and the perturbation data norms."""
    if not np.all(np.isfinite(w.states)):
        raise ValueError("deviation trajectory contains non-finite values")
    p = prob.system.mass_matrix
    weights = prob.op.quad_weights
    w_norm_sq = np.einsum("tin,ij,tjn,n->t", w.states, p, w.states, weights)
    w_norm_sq = np.maximum(w_norm_sq, 0.0)
    outflow = _outflow_history(w, prob)
    eta = eta_series(w_norm_sq, outflow, prob.grid.length)
    theta = theta_integral(w.times, eta)

    x = prob.grid.nodes
    p_inv = prob.mass_inverse
    eps = pert.amplitude
    dual = np.zeros(len(w.times))
    if pert.kind == "forcing":
        for k, t in enumerate(w.times):
            df = eps * np.asarray(pert.forcing_shape(x, t), dtype=float)
            dual[k] = np.sqrt(max(quad_inner_product(df, p_inv @ df, prob.op), 0.0))
    g_sq = np.zeros(len(w.times))
    if pert.kind == "boundary":
        for side, shape, bc in (
            ("left", pert.boundary_shape_left, prob.bc_left),
            ("right", pert.boundary_shape_right, prob.bc_right),
        ):
            if shape is None:
                continue
            for k, t in enumerate(w.times):
                dg = eps * np.broadcast_to(
                    np.atleast_1d(np.asarray(shape(t), dtype=float)), (bc.n_neg,)
                )
                g_sq[k] += float(dg @ dg)

    return DeviationSeries(
        times=w.times,
        w_norm=np.sqrt(w_norm_sq),
        w_norm_sq=w_norm_sq,
        outflow=outflow,
        eta=eta,
        theta=theta,
        dual_forcing_norm=dual,
        boundary_data_norm_sq=g_sq,
        kind=pert.kind,
        amplitude=eps,
        linear=prob.system.linearization_mode != "self",
        transit_time=prob.grid.length / max_characteristic_speed(prob, prob.initial_state),
    )


def estimate_delta0(series: DeviationSeries, window: tuple[float, float]) -> DampingEstimate:
    """Largest certified rate d with theta(t) - theta(xi) >= d (t - xi) on the
    window.

    The infimum over all sampled pairs is attained on an adjacent pair, since
    every chord slope of theta is an average of the adjacent-interval slopes
    it spans; so only adjacent slopes are evaluated.  If eta effectively
    vanishes anywhere in the window the conservative value 0 is returned.
    """
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty window {window}")
    sel = np.nonzero((series.times >= t0 - 1e-12) & (series.times <= t1 + 1e-12))[0]
    if len(sel) < 2:
        raise ValueError(f"window {window} contains fewer than two samples")
    if np.min(series.eta[sel]) <= ETA_VANISH:
        return DampingEstimate(delta0=0.0, window=(t0, t1))
    slopes = np.diff(series.theta[sel]) / np.diff(series.times[sel])
    return DampingEstimate(delta0=max(0.0, float(np.min(slopes))), window=(t0, t1))


def _growth_factor(delta0: float, t: float, rate: float) -> float:
    """(1 - e^{-rate*delta0*t}) / delta0 with a 3-term series near 0."""
    x = delta0 * t
    if x < 1e-8:
        # series of (1 - e^{-rate x})/delta0 in x, exact limit at delta0 = 0
        return rate * t * (1.0 - 0.5 * rate * x + (rate * x) ** 2 / 6.0)
    return float(-np.expm1(-rate * x) / delta0)


def bound_rhs_forcing(series: DeviationSeries, d0: DampingEstimate, t: float) -> float:
    """Forcing bound on |W|_P: (1 - e^{-delta0 t})/delta0 * max |dF|_{P^-1}."""
    idx = series.index_of(t)
    running_max = float(np.max(series.dual_forcing_norm[: idx + 1]))
    return _growth_factor(d0.delta0, t, rate=1.0) * running_max


def bound_rhs_boundary(series: DeviationSeries, d0: DampingEstimate, t: float) -> float:
    """Boundary bound on |W|_P^2: (1 - e^{-2 delta0 t})/delta0 * max |dG|^2."""
    idx = series.index_of(t)
    running_max = float(np.max(series.boundary_data_norm_sq[: idx + 1]))
    return _growth_factor(d0.delta0, t, rate=2.0) * running_max


def bound_rhs_initial(
    series: DeviationSeries,
    d0: DampingEstimate,
    t: float,
    deltaH_norm: float,
    form: str = "rate",
) -> float:
    """Initial-data bound on |W|_P^2: e^{-2 delta0 t} |dH|_P^2.

    ``form="theta"`` gives the sharper bound e^{-2 theta(0,t)} |dH|_P^2 from
    the same derivation (theta >= delta0 * t on the certified window).
    """
    if form == "rate":
        return float(np.exp(-2.0 * d0.delta0 * t) * deltaH_norm**2)
    if form == "theta":
        theta_t = series.theta[series.index_of(t)]
        return float(np.exp(-2.0 * theta_t) * deltaH_norm**2)
    raise ValueError(f"form must be 'rate' or 'theta', got {form!r}")


def _bound_curve(series: DeviationSeries, d0: DampingEstimate) -> tuple[np.ndarray, np.ndarray]:
    """(measured, bound) arrays over all sampled times for the series' kind."""
    if series.kind == "forcing":
        measured = series.w_norm
        factors = np.array([_growth_factor(d0.delta0, t, 1.0) for t in series.times])
        bound = factors * np.maximum.accumulate(series.dual_forcing_norm)
    elif series.kind == "boundary":
        measured = series.w_norm_sq
        factors = np.array([_growth_factor(d0.delta0, t, 2.0) for t in series.times])
        bound = factors * np.maximum.accumulate(series.boundary_data_norm_sq)
    else:
        measured = series.w_norm_sq
        bound = np.exp(-2.0 * d0.delta0 * series.times) * series.deltaH_norm**2
    return measured, bound


def verify_bound(
    kind: str,
    series: DeviationSeries,
    d0: DampingEstimate,
    tolerance: float | None = None,
) -> BoundReport:
    """Check measured deviation against the matching a-priori bound.

    The ratio is evaluated wherever the bound exceeds a small floor; pass
    means max ratio <= 1 + tolerance (1e-6 for linear systems, 5e-2 for
    self-linearized ones where the bound describes the linearization).
    """
    if kind not in PERTURBATION_KINDS:
        raise ValueError(f"kind must be one of {PERTURBATION_KINDS}, got {kind!r}")
    if kind != series.kind:
        raise ValueError(
            f"bound kind {kind!r} does not match the series perturbation {series.kind!r}"
        )
    if tolerance is None:
        tolerance = 1e-6 if series.linear else 5e-2
    measured, bound = _bound_curve(series, d0)
    valid = bound > BOUND_FLOOR
    max_ratio = float(np.max(measured[valid] / bound[valid])) if np.any(valid) else 0.0
    return BoundReport(
        kind=kind,
        times=series.times,
        measured=measured,
        bound=bound,
        max_ratio=max_ratio,
        tolerance=float(tolerance),
        passed=max_ratio <= 1.0 + tolerance,
    )


def fit_short_time_rate(
    series: DeviationSeries,
    window: tuple[float, float],
    target_slope: float,
    slope_tol: float = 0.05,
    rms_tol: float = 0.02,
) -> RateFit:
    """Least-squares slope of log |W|_P versus log t over the window."""
    t0, t1 = window
    if t0 <= 0.0:
        raise ValueError("fit window must start at a strictly positive time")
    sel = (series.times >= t0 - 1e-12) & (series.times <= t1 + 1e-12)
    if np.count_nonzero(sel) < 3:
        raise ValueError(f"window {window} contains fewer than three samples")
    w = series.w_norm[sel]
    if np.min(w) < 1e-13:
        raise ValueError("deviation norm below 1e-13 inside the fit window; nothing to fit")
    log_t = np.log(series.times[sel])
    log_w = np.log(w)
    slope, intercept = np.polyfit(log_t, log_w, 1)
    residual = log_w - (slope * log_t + intercept)
    rms = float(np.sqrt(np.mean(residual**2)))
    passed = abs(slope - target_slope) <= slope_tol and rms <= rms_tol
    return RateFit(
        window=(t0, t1),
        slope=float(slope),
        intercept=float(intercept),
        rms_residual=rms,
        target_slope=float(target_slope),
        passed=passed,
    )


def classify_longtime(series: DeviationSeries, horizon: float) -> LongtimeVerdict:
    """Long-time verdict at the horizon: decays, saturates or grows.

    Decay means the deviation has fallen below 1e-6 of its peak; saturation
    means the relative change over the last 20% of the horizon is below 1%.
    The horizon must cover at least two characteristic transits so that the
    boundary has had a chance to act.
    """
    if series.times[-1] < horizon - 1e-9:
        raise ValueError(
            f"run too short: series ends at {series.times[-1]:.6g}, horizon {horizon:.6g}"
        )
    if horizon < 2.0 * series.transit_time - 1e-9:
        raise ValueError(
            f"horizon {horizon:.6g} shorter than two characteristic transits "
            f"({2 * series.transit_time:.6g})"
        )
    peak = float(np.max(series.w_norm))
    final = float(series.w_norm[np.argmin(np.abs(series.times - horizon))])
    tail = series.w_norm[series.times >= 0.8 * horizon - 1e-12]
    tail_change = float((np.max(tail) - np.min(tail)) / max(final, 1e-300))
    level = float(np.mean(tail))
    if final <= 1e-6 * peak:
        verdict = "decays"
    elif tail_change <= 0.01:
        verdict = "saturates"
    else:
        verdict = "grows"
    return LongtimeVerdict(
        verdict=verdict,
        peak=peak,
        final=final,
        tail_change=tail_change,
        saturation_level=level,
    )


def cauchy_schwarz_check(
    w_state: np.ndarray,
    delta_f: np.ndarray,
    mass_matrix: np.ndarray,
    op,
) -> CauchySchwarzCertificate:
    """Discrete weighted Cauchy-Schwarz: <W, dF>_I <= |W|_P |dF|_{P^-1}."""
    w_state = np.asarray(w_state, dtype=float)
    delta_f = np.asarray(delta_f, dtype=float)
    p = np.asarray(mass_matrix, dtype=float)
    p_inv = np.linalg.inv(p)
    lhs = quad_inner_product(w_state, delta_f, op)
    w_norm = np.sqrt(max(quad_inner_product(w_state, p @ w_state, op), 0.0))
    f_norm = np.sqrt(max(quad_inner_product(delta_f, p_inv @ delta_f, op), 0.0))
    rhs = w_norm * f_norm
    return CauchySchwarzCertificate(lhs=float(lhs), rhs=float(rhs), ok=lhs <= rhs + 1e-12)


def write_series_csv(
    series: DeviationSeries, report: BoundReport | None, path
) -> None:
    """Per-run CSV: t, w_norm, w_norm_sq, outflow, eta, theta, bound, ratio."""
    bound = report.bound if report is not None else np.zeros(len(series.times))
    measured = report.measured if report is not None else np.zeros(len(series.times))
    with open(path, "w") as stream:
        stream.write("t,w_norm,w_norm_sq,outflow,eta,theta,bound_rhs,ratio\n")
        for k in range(len(series.times)):
            ratio = measured[k] / bound[k] if bound[k] > BOUND_FLOOR else 0.0
            row = (
                series.times[k],
                series.w_norm[k],
                series.w_norm_sq[k],
                series.outflow[k],
                series.eta[k],
                series.theta[k],
                bound[k],
                ratio,
            )
            stream.write(",".join(repr(float(v)) for v in row) + "\n")
