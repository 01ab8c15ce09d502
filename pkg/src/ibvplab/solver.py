"""Semi-discrete assembly and time integration.

The split-form system is discretized in space with an SBP operator ``D`` and
the characteristic boundary condition is imposed weakly through penalty
terms acting on the boundary rows:

    P u_t = -D(A u) - A^T D u + F
            - (sigma / H_00)  T- sqrt(|L-|) (sqrt(|L-|) C- - G_left)  e_0
            - (sigma / H_NN)  T- sqrt(|L-|) (sqrt(|L-|) C- - G_right) e_N.

Because D = H^{-1} Q with Q + Q^T = B, multiplying by u^T H telescopes the
volume terms to the boundary, giving the exact semi-discrete energy rate

    d/dt |u|^2_{P,H} = 2<u, F>_H
        + sum_sides [ -2*outflow + 2(1-sigma) q^T q + 2 sigma q^T G ],

with q = sqrt(|L-|) C- per side.  The default penalty scale sigma = 1 makes
the rate exactly ``-2*outflow + 2 q^T G`` -- the discrete mirror of the
continuous identity with no artificial boundary damping -- which is what lets
the damping-rate measurements downstream be compared against theory.
``energy_rate_identity`` evaluates both sides of the identity; the residual
is round-off only.

Time integration is classic RK4 with data evaluated at stage times; the last
step is shortened to land on ``t_end`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ibvplab.sbp import Grid1D, SbpOperatorSet, quad_inner_product
from ibvplab.systems import (
    BoundaryCondition,
    BoundaryEigenstructure,
    DataBundle,
    SystemSpec,
    boundary_eigenstructure,
    boundary_term_split,
)

__all__ = [
    "SemiDiscreteProblem",
    "Trajectory",
    "SolverBlowupError",
    "AdmissibilityError",
    "EnergyBalance",
    "make_problem",
    "assemble_rhs",
    "rk4_solve",
    "energy_rate_identity",
    "norm_history",
    "write_trajectory_csv",
    "write_norm_csv",
    "CFL_MAX",
]

#: Upper limit for the CFL number; beyond this RK4 leaves its stability
#: region for the widest-spectrum operator in the family (order 6).
CFL_MAX = 1.5

#: Abort threshold for the solution norm.
BLOWUP_NORM = 1e12


class SolverBlowupError(RuntimeError):
    """Raised when the solution norm exceeds the blow-up threshold."""

    def __init__(self, time: float, norm: float):
        super().__init__(f"solution norm {norm:.3e} exceeded {BLOWUP_NORM:.0e} at t = {time:.6g}")
        self.time = time
        self.norm = norm


class AdmissibilityError(RuntimeError):
    """Raised when a self-linearized run changes its boundary inflow count."""


class EnergyBalance(NamedTuple):
    lhs: float
    rhs: float
    residual: float


@dataclass(frozen=True)
class SemiDiscreteProblem:
    """A fully assembled semi-discrete IBVP.

    Construction samples the initial data and fixes the boundary-condition
    dimensions from the eigenstructure at the initial boundary states; for
    self-linearized systems the inflow counts are re-asserted every
    right-hand-side evaluation (admissibility).
    """

    system: SystemSpec
    grid: Grid1D
    op: SbpOperatorSet
    data: DataBundle
    bc_left: BoundaryCondition
    bc_right: BoundaryCondition
    penalty_scale: float = 1.0
    initial_state: np.ndarray = field(init=False, repr=False)
    mass_inverse: np.ndarray = field(init=False, repr=False)
    _frozen_eigenstructure: dict = field(init=False, repr=False)

    def __post_init__(self) -> None:
        x = self.grid.nodes
        u0 = np.asarray(self.data.initial(x), dtype=float)
        u0 = u0.reshape(self.system.n_comp, self.grid.n_points)
        if not np.all(np.isfinite(u0)):
            raise ValueError("initial data contains non-finite values")
        object.__setattr__(self, "initial_state", u0)
        object.__setattr__(self, "mass_inverse", np.linalg.inv(self.system.mass_matrix))
        cache = {}
        if self.system.linearization_mode == "frozen":
            # Constant coefficients: the boundary rotation never changes.
            cache = {
                side: boundary_eigenstructure(self.system, side, u0[:, 0 if side == "left" else -1])
                for side in ("left", "right")
            }
        object.__setattr__(self, "_frozen_eigenstructure", cache)

    def eigenstructure(self, side: str, state: np.ndarray) -> BoundaryEigenstructure:
        if self._frozen_eigenstructure:
            return self._frozen_eigenstructure[side]
        idx = 0 if side == "left" else -1
        return boundary_eigenstructure(self.system, side, state[:, idx])

    def pnorm_sq(self, state: np.ndarray) -> float:
        """Squared solution norm <u, P u>_H."""
        weighted = self.system.mass_matrix @ state
        return quad_inner_product(state, weighted, self.op)


@dataclass(frozen=True)
class Trajectory:
    """Time history of one solver run."""

    times: np.ndarray
    states: np.ndarray  # (n_times, n_comp, n_points)
    step_size: float
    problem: SemiDiscreteProblem
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory contains non-finite states")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def make_problem(
    system: SystemSpec,
    grid: Grid1D,
    op: SbpOperatorSet,
    data: DataBundle,
    penalty_scale: float = 1.0,
) -> SemiDiscreteProblem:
    """Build a problem, deriving boundary-condition slots from the data bundle.

    Sides whose eigenstructure (at the initial boundary state) has no incoming
    characteristic accept no boundary data; supplying some is an error naming
    the side.  Sides that need data but got none default to homogeneous.
    """
    x = grid.nodes
    u0 = np.asarray(data.initial(x), dtype=float).reshape(system.n_comp, grid.n_points)
    bcs = {}
    for side, g in (("left", data.g_left), ("right", data.g_right)):
        idx = 0 if side == "left" else -1
        es = boundary_eigenstructure(system, side, u0[:, idx])
        if es.n_neg == 0:
            if g is not None:
                raise ValueError(
                    f"side {side!r} has no incoming characteristic; "
                    f"boundary data there is not allowed"
                )
            bcs[side] = BoundaryCondition(side=side, n_neg=0, data=lambda t: np.zeros(0))
        else:
            if g is None:
                zero = np.zeros(es.n_neg)
                bcs[side] = BoundaryCondition(side=side, n_neg=es.n_neg, data=lambda t, z=zero: z)
            else:
                bcs[side] = BoundaryCondition(side=side, n_neg=es.n_neg, data=g)
    return SemiDiscreteProblem(
        system=system,
        grid=grid,
        op=op,
        data=data,
        bc_left=bcs["left"],
        bc_right=bcs["right"],
        penalty_scale=penalty_scale,
    )


def _sat_contribution(
    prob: SemiDiscreteProblem,
    es: BoundaryEigenstructure,
    bc: BoundaryCondition,
    w_boundary: np.ndarray,
    t: float,
) -> np.ndarray:
    """Penalty vector for one boundary node (before the P^{-1} factor)."""
    if es.n_neg != bc.n_neg:
        raise AdmissibilityError(
            f"inflow count on side {es.side!r} changed to {es.n_neg} "
            f"(boundary condition provides {bc.n_neg} values)"
        )
    if es.n_neg == 0:
        return np.zeros(prob.system.n_comp)
    k = len(es.eigenvalues) - es.n_neg
    sqrt_lam = np.sqrt(-es.negative_part[k:])
    c_minus = es.rotation[:, k:].T @ w_boundary
    residual = sqrt_lam * c_minus - bc.value(t)
    weight = prob.op.quad_weights[0 if es.side == "left" else -1]
    return -(prob.penalty_scale / weight) * (es.rotation[:, k:] * sqrt_lam) @ residual


def assemble_rhs(prob: SemiDiscreteProblem, state: np.ndarray, t: float) -> np.ndarray:
    """Semi-discrete right-hand side du/dt at one state and time."""
    state = np.asarray(state, dtype=float)
    if state.shape != (prob.system.n_comp, prob.grid.n_points):
        raise ValueError(
            f"state shape {state.shape} does not match "
            f"({prob.system.n_comp}, {prob.grid.n_points})"
        )
    if not np.all(np.isfinite(state)):
        raise ValueError(f"non-finite state at t = {t:.6g}")

    # Linearization state: the solution itself.  For the frozen (constant
    # coefficient) systems the flux ignores its argument.
    a = prob.system.flux_at(state)
    flux_field = np.einsum("ijn,jn->in", a, state)
    du = prob.op.derivative(state)
    rhs = -prob.op.derivative(flux_field) - np.einsum("jin,jn->in", a, du)
    if prob.data.forcing is not None:
        rhs = rhs + np.asarray(prob.data.forcing(prob.grid.nodes, t), dtype=float).reshape(
            rhs.shape
        )

    for side, bc in (("left", prob.bc_left), ("right", prob.bc_right)):
        idx = 0 if side == "left" else -1
        es = prob.eigenstructure(side, state)
        rhs[:, idx] += _sat_contribution(prob, es, bc, state[:, idx], t)
    return prob.mass_inverse @ rhs


def max_characteristic_speed(prob: SemiDiscreteProblem, state: np.ndarray) -> float:
    """Largest |eigenvalue| of P^{-1} (A + A^T) over the grid nodes."""
    a = prob.system.flux_at(state)
    p_min = float(np.linalg.eigvalsh(prob.system.mass_matrix)[0])
    speed = 0.0
    for node in range(state.shape[1]):
        a_sym = a[:, :, node] + a[:, :, node].T
        speed = max(speed, float(np.max(np.abs(np.linalg.eigvalsh(a_sym)))))
    return speed / p_min


def rk4_solve(
    prob: SemiDiscreteProblem,
    t_end: float,
    cfl: float = 0.5,
    store_stride: int = 1,
    dt: float | None = None,
) -> Trajectory:
    """Integrate with classic RK4 at step cfl*h/max_speed.

    Stores every ``store_stride``-th step (plus the final one).  Aborts with
    :class:`SolverBlowupError` if the solution norm passes 1e12.  An explicit
    ``dt`` overrides the CFL-derived step (used to put paired runs on one
    shared time grid).
    """
    if t_end <= 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if not 0.0 < cfl <= CFL_MAX:
        raise ValueError(f"cfl must lie in (0, {CFL_MAX}], got {cfl}")
    if store_stride < 1:
        raise ValueError("store_stride must be a positive integer")

    if dt is None:
        speed = max_characteristic_speed(prob, prob.initial_state)
        if speed <= 0.0:
            raise ValueError("characteristic speed is zero; nothing propagates")
        dt = cfl * prob.grid.spacing / speed
    elif dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")

    u = prob.initial_state.copy()
    t = 0.0
    times = [0.0]
    states = [u.copy()]
    step_index = 0
    while t < t_end - 1e-12 * t_end:
        step = min(dt, t_end - t)
        k1 = assemble_rhs(prob, u, t)
        k2 = assemble_rhs(prob, u + 0.5 * step * k1, t + 0.5 * step)
        k3 = assemble_rhs(prob, u + 0.5 * step * k2, t + 0.5 * step)
        k4 = assemble_rhs(prob, u + step * k3, t + step)
        u = u + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + step
        step_index += 1
        norm_sq = prob.pnorm_sq(u)
        if not np.isfinite(norm_sq) or norm_sq > BLOWUP_NORM**2:
            raise SolverBlowupError(time=t, norm=float(np.sqrt(max(norm_sq, 0.0))))
        if step_index % store_stride == 0 or t >= t_end - 1e-12 * t_end:
            times.append(t)
            states.append(u.copy())

    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        step_size=dt,
        problem=prob,
        metadata={"cfl": cfl, "t_end": t_end},
    )


def energy_rate_identity(prob: SemiDiscreteProblem, state: np.ndarray, t: float) -> EnergyBalance:
    """Evaluate both sides of the discrete energy identity at one state.

    lhs = 2 <u, P du/dt>_H, the instantaneous rate of |u|^2_{P,H};
    rhs = the same rate rearranged into boundary outflow/penalty/data terms
    plus the forcing inner product.  The two agree to round-off for every
    state -- this is the discrete counterpart of the continuous energy method
    and holds whether or not the boundary condition is currently satisfied.
    """
    state = np.asarray(state, dtype=float).reshape(prob.system.n_comp, prob.grid.n_points)
    rate = assemble_rhs(prob, state, t)
    lhs = 2.0 * quad_inner_product(state, prob.system.mass_matrix @ rate, prob.op)

    rhs = 0.0
    for side, bc in (("left", prob.bc_left), ("right", prob.bc_right)):
        idx = 0 if side == "left" else -1
        es = prob.eigenstructure(side, state)
        w_b = state[:, idx]
        outflow, inflow = boundary_term_split(es, w_b)
        k = len(es.eigenvalues) - es.n_neg
        sqrt_lam = np.sqrt(-es.negative_part[k:])
        q = sqrt_lam * (es.rotation[:, k:].T @ w_b)
        g = bc.value(t) if es.n_neg else np.zeros(0)
        rhs += -2.0 * (outflow + inflow) - 2.0 * prob.penalty_scale * float(q @ (q - g))
    if prob.data.forcing is not None:
        f = np.asarray(prob.data.forcing(prob.grid.nodes, t), dtype=float).reshape(state.shape)
        rhs += 2.0 * quad_inner_product(state, f, prob.op)
    return EnergyBalance(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs))


def norm_history(traj: Trajectory) -> np.ndarray:
    """P-weighted solution norm at each stored time."""
    p = traj.problem.system.mass_matrix
    w = traj.problem.op.quad_weights
    norm_sq = np.einsum("tin,ij,tjn,n->t", traj.states, p, traj.states, w)
    return np.sqrt(np.maximum(norm_sq, 0.0))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Full state history: one row per (time, node), columns per component."""
    n_comp = traj.states.shape[1]
    header = "t,node," + ",".join(f"u{c}" for c in range(n_comp))
    with open(path, "w") as stream:
        stream.write(header + "\n")
        for k, t in enumerate(traj.times):
            for node in range(traj.states.shape[2]):
                values = ",".join(repr(traj.states[k, c, node]) for c in range(n_comp))
                stream.write(f"{t!r},{node},{values}\n")


def write_norm_csv(traj: Trajectory, path) -> None:
    """Summary history: t versus the P-weighted solution norm."""
    norms = norm_history(traj)
    with open(path, "w") as stream:
        stream.write("t,p_norm\n")
        for t, value in zip(traj.times, norms):
            stream.write(f"{t!r},{value!r}\n")
