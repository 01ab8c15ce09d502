"""Symmetric hyperbolic model systems in skew-symmetric split form.

A system is written as

    P U_t + (A(ubar) U)_x + A(ubar)^T U_x = F,   x in [x_L, x_R],

with a symmetric positive-definite ``P`` defining the solution norm
``|U|_P^2 = int U^T P U dx``.  The split flux makes the energy method produce
pure boundary terms: the growth rate of ``|U|_P^2`` is controlled by the
quadratic form ``W^T (n A_sym) W`` at each boundary, with ``n`` the outward
normal (-1 left, +1 right) and ``A_sym`` the symmetric part of ``A``.

Rotating with the orthonormal eigenvectors of ``n A_sym`` splits that form
into characteristic contributions

    W^T (n A_sym) W = (C+)^T L+ (C+) + (C-)^T L- (C-),   C = T^T W,

where ``L+ >= 0`` collects outgoing characteristics and ``L- <= 0`` incoming
ones.  The number of boundary conditions required equals the number of
negative eigenvalues, and the dissipative characteristic condition

    sqrt(|L-|) C- = G

bounds the incoming contribution by ``-G^T G`` from below.

Three concrete systems are provided: scalar advection, a 2x2 wave system and
the split-form Burgers equation (its own linearization state).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SystemSpec",
    "BoundaryEigenstructure",
    "BoundaryCondition",
    "DataBundle",
    "make_advection",
    "make_wave_system",
    "make_burgers_split",
    "system_from_label",
    "boundary_eigenstructure",
    "count_required_bcs",
    "boundary_term_split",
    "matched_boundary_data",
    "verify_dissipativity",
    "DissipativityCertificate",
    "EIGENVALUE_TOL",
]

#: Eigenvalues within this tolerance of zero carry no boundary condition.
EIGENVALUE_TOL = 1e-12

#: Spectral limits accepted for the norm matrix P ("order one" weights).
P_EIG_RANGE = (0.1, 10.0)


@dataclass(frozen=True)
class SystemSpec:
    """A hyperbolic system in split form.

    ``flux_coefficient`` maps a linearization state of shape ``(n_comp,)`` or
    ``(n_comp, m)`` to the matrix ``A`` of shape ``(n_comp, n_comp)`` or
    ``(n_comp, n_comp, m)``.  ``linearization_mode`` is ``"frozen"`` when the
    coefficients do not depend on the evolving solution and ``"self"`` when
    the system is its own linearization state (nonlinear case).
    """

    n_comp: int
    mass_matrix: np.ndarray
    flux_coefficient: Callable[[np.ndarray], np.ndarray]
    linearization_mode: str
    label: str
    forcing: Callable[[np.ndarray, float], np.ndarray] | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.mass_matrix, dtype=float)
        if p.shape != (self.n_comp, self.n_comp):
            raise ValueError(
                f"mass matrix shape {p.shape} does not match n_comp={self.n_comp}"
            )
        if np.max(np.abs(p - p.T)) > 1e-13:
            raise ValueError("mass matrix must be symmetric (tolerance 1e-13)")
        eigs = np.linalg.eigvalsh(p)
        if eigs[0] <= 0.0:
            raise ValueError("mass matrix must be positive definite")
        if eigs[0] < P_EIG_RANGE[0] or eigs[-1] > P_EIG_RANGE[1]:
            raise ValueError(
                f"mass matrix eigenvalues {eigs} outside the accepted range {P_EIG_RANGE}"
            )
        if self.linearization_mode not in ("frozen", "self"):
            raise ValueError(
                f"linearization_mode must be 'frozen' or 'self', got {self.linearization_mode!r}"
            )
        object.__setattr__(self, "mass_matrix", p)

    def flux_at(self, ubar: np.ndarray) -> np.ndarray:
        """Evaluate A at a linearization state, broadcasting over nodes."""
        a = np.asarray(self.flux_coefficient(np.asarray(ubar, dtype=float)), dtype=float)
        if a.shape[:2] != (self.n_comp, self.n_comp):
            raise ValueError(
                f"flux coefficient returned shape {a.shape}, "
                f"expected leading ({self.n_comp}, {self.n_comp})"
            )
        return a


@dataclass(frozen=True)
class BoundaryEigenstructure:
    """Orthonormal diagonalization of ``n * A_sym`` at one boundary.

    Eigenvalues are sorted descending so the trailing ``n_neg`` columns of
    ``rotation`` span the incoming characteristics.
    """

    side: str
    normal_sign: int
    rotation: np.ndarray
    eigenvalues: np.ndarray
    positive_part: np.ndarray
    negative_part: np.ndarray
    n_neg: int

    def characteristic_variables(self, w_boundary: np.ndarray) -> np.ndarray:
        """Rotate a boundary state into characteristic variables C = T^T W."""
        return self.rotation.T @ np.asarray(w_boundary, dtype=float)


@dataclass(frozen=True)
class BoundaryCondition:
    """Characteristic boundary data: sqrt(|L-|) C- = data(t), length n_neg."""

    side: str
    n_neg: int
    data: Callable[[float], np.ndarray]

    def value(self, t: float) -> np.ndarray:
        g = np.atleast_1d(np.asarray(self.data(t), dtype=float))
        if g.shape != (self.n_neg,):
            raise ValueError(
                f"boundary data on side {self.side!r} has shape {g.shape}, "
                f"expected ({self.n_neg},)"
            )
        return g


@dataclass(frozen=True)
class DataBundle:
    """Problem data: forcing F(x, t), boundary data G(t) per side, initial H(x).

    ``forcing(x, t)`` returns an array of shape ``(n_comp, len(x))``;
    ``initial(x)`` likewise.  Boundary data callables return vectors sized by
    the side's incoming-characteristic count (``None`` stands for no data /
    homogeneous where no condition is required).
    """

    initial: Callable[[np.ndarray], np.ndarray]
    forcing: Callable[[np.ndarray, float], np.ndarray] | None = None
    g_left: Callable[[float], np.ndarray] | None = None
    g_right: Callable[[float], np.ndarray] | None = None


def _constant_flux(matrix: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    matrix = np.asarray(matrix, dtype=float)

    def flux(ubar: np.ndarray) -> np.ndarray:
        trailing = np.shape(ubar)[1:]
        return np.broadcast_to(
            matrix.reshape(matrix.shape + (1,) * len(trailing)),
            matrix.shape + trailing,
        )

    return flux


def make_advection(a: float) -> SystemSpec:
    """Scalar advection u_t + a u_x = F in split form: A = a/2 constant.

    The split flux (A u)_x + A u_x with A = a/2 reproduces a*u_x exactly.
    """
    if a == 0.0:
        raise ValueError("advection speed must be nonzero (no transport, eta degenerate)")
    return SystemSpec(
        n_comp=1,
        mass_matrix=np.array([[1.0]]),
        flux_coefficient=_constant_flux(np.array([[a / 2.0]])),
        linearization_mode="frozen",
        label="advection",
    )


def make_wave_system(c: float) -> SystemSpec:
    """Symmetric 2x2 wave system u_t = c v_x, v_t = c u_x.

    Written in split form with the constant symmetric A = -(c/2)[[0,1],[1,0]]:
    (A U)_x + A^T U_x = 2 A U_x = -c [[0,1],[1,0]] U_x, i.e. the system above.
    Boundary eigenvalues are +-c/2 at both ends, so each side carries exactly
    one incoming characteristic.
    """
    if c <= 0.0:
        raise ValueError("wave speed must be positive")
    coupling = np.array([[0.0, 1.0], [1.0, 0.0]])
    return SystemSpec(
        n_comp=2,
        mass_matrix=np.eye(2),
        flux_coefficient=_constant_flux(-(c / 2.0) * coupling),
        linearization_mode="frozen",
        label="wave",
    )


def make_burgers_split() -> SystemSpec:
    """Burgers equation u_t + u u_x = F in self-linearized split form.

    With A(ubar) = ubar/3 and ubar = u, the split flux gives
    (u^2/3)_x + (u/3) u_x = u u_x.  The smooth (pre-shock) regime is the
    caller's responsibility; boundary admissibility (fixed sign of u at each
    boundary) is asserted while solving.
    """

    def flux(ubar: np.ndarray) -> np.ndarray:
        ubar = np.asarray(ubar, dtype=float)
        return (ubar[0] / 3.0).reshape((1, 1) + ubar.shape[1:])

    return SystemSpec(
        n_comp=1,
        mass_matrix=np.array([[1.0]]),
        flux_coefficient=flux,
        linearization_mode="self",
        label="burgers",
    )


_SYSTEM_FACTORIES = {
    "advection": make_advection,
    "wave": make_wave_system,
    "burgers": lambda *_: make_burgers_split(),
}


def system_from_label(label: str, parameter: float = 1.0) -> SystemSpec:
    """Resolve a config label ('advection', 'wave', 'burgers') to a system."""
    try:
        factory = _SYSTEM_FACTORIES[label]
    except KeyError:
        raise ValueError(
            f"unknown system label {label!r}; available: {sorted(_SYSTEM_FACTORIES)}"
        ) from None
    return factory(parameter)


def boundary_eigenstructure(
    sys: SystemSpec, side: str, boundary_state: np.ndarray
) -> BoundaryEigenstructure:
    """Diagonalize n*A_sym at a boundary state.

    Eigenvalues are sorted descending (ties in magnitude broken by the signed
    value, which the plain descending sort already implements), and entries
    within ``EIGENVALUE_TOL`` of zero are flattened to exact zeros so that
    grazing characteristics carry no boundary condition.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    normal = -1 if side == "left" else +1
    a = sys.flux_at(np.asarray(boundary_state, dtype=float).reshape(sys.n_comp))
    if not np.all(np.isfinite(a)):
        raise ValueError(f"flux coefficient non-finite at boundary state {boundary_state}")
    m = 0.5 * normal * (a + a.T)
    eigvals, eigvecs = np.linalg.eigh(m)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    eigvals[np.abs(eigvals) < EIGENVALUE_TOL] = 0.0
    lam_plus = np.where(eigvals > 0.0, eigvals, 0.0)
    lam_minus = np.where(eigvals < 0.0, eigvals, 0.0)
    return BoundaryEigenstructure(
        side=side,
        normal_sign=normal,
        rotation=eigvecs,
        eigenvalues=eigvals,
        positive_part=lam_plus,
        negative_part=lam_minus,
        n_neg=int(np.count_nonzero(eigvals < 0.0)),
    )


def count_required_bcs(es: BoundaryEigenstructure) -> int:
    """Number of boundary conditions = number of incoming characteristics."""
    return es.n_neg


def matched_boundary_data(
    sys: SystemSpec, side: str, boundary_state: np.ndarray
) -> np.ndarray:
    """Boundary data G that a given boundary state satisfies exactly.

    Evaluates sqrt(|L-|) C- at the state (with the eigenstructure taken at
    that same state), so feeding the result back as data makes the state an
    exact solution of the characteristic condition.  Useful for steady base
    states and for driving a run with a known exact solution.
    """
    es = boundary_eigenstructure(sys, side, boundary_state)
    if es.n_neg == 0:
        return np.zeros(0)
    k = len(es.eigenvalues) - es.n_neg
    c_minus = es.rotation[:, k:].T @ np.asarray(boundary_state, dtype=float)
    return np.sqrt(np.abs(es.negative_part[k:])) * c_minus


def boundary_term_split(
    es: BoundaryEigenstructure, w_boundary: np.ndarray
) -> tuple[float, float]:
    """Split W^T (n A_sym) W into (outflow_part >= 0, inflow_part <= 0)."""
    w_boundary = np.asarray(w_boundary, dtype=float)
    if w_boundary.shape != es.eigenvalues.shape:
        raise ValueError(
            f"boundary state has shape {w_boundary.shape}, "
            f"expected {es.eigenvalues.shape}"
        )
    c = es.characteristic_variables(w_boundary)
    outflow = float(np.sum(es.positive_part * c * c))
    inflow = float(np.sum(es.negative_part * c * c))
    return outflow, inflow


@dataclass(frozen=True)
class DissipativityCertificate:
    """Witness of the boundary-term lower bound W^T(n A_sym)W >= -G^T G."""

    boundary_term: float
    lower_bound: float
    margin: float
    bc_residual: float
    ok: bool = field(default=True)


def verify_dissipativity(
    es: BoundaryEigenstructure,
    bc: BoundaryCondition,
    w_boundary: np.ndarray,
    t: float,
    bc_tol: float = 1e-10,
) -> DissipativityCertificate:
    """Certify the dissipative boundary bound at one boundary state.

    Requires the state actually to satisfy the characteristic condition
    sqrt(|L-|) C- = G(t) (residual <= bc_tol); under it the inflow part equals
    -G^T G exactly, so the margin over the lower bound is the outflow part.
    """
    g = bc.value(t) if bc.n_neg else np.zeros(0)
    c = es.characteristic_variables(w_boundary)
    c_minus = c[len(c) - es.n_neg :]
    scaled = np.sqrt(np.abs(es.negative_part[len(c) - es.n_neg :])) * c_minus
    residual = float(np.max(np.abs(scaled - g))) if es.n_neg else 0.0
    if residual > bc_tol:
        raise ValueError(
            f"boundary state violates the characteristic condition: "
            f"residual {residual:.3e} > {bc_tol:.1e}"
        )
    outflow, inflow = boundary_term_split(es, w_boundary)
    term = outflow + inflow
    bound = -float(g @ g)
    return DissipativityCertificate(
        boundary_term=term,
        lower_bound=bound,
        margin=term - bound,
        bc_residual=residual,
        ok=term >= bound - 1e-12,
    )
