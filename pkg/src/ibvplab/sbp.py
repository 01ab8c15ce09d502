"""Summation-by-parts (SBP) first-derivative operators on uniform 1-D grids.

An SBP operator is a difference matrix ``D = H^{-1} Q`` together with a
diagonal positive norm (quadrature) matrix ``H`` such that

    Q + Q^T = B = diag(-1, 0, ..., 0, 1).

The pair mimics integration by parts exactly in the discrete inner product
``<u, v>_H = u^T H v``:

    <u, D v>_H + <D u, v>_H = u_N v_N - u_0 v_0,

which is the identity all of the energy estimates downstream rest on.  The
interior stencils are the standard central differences of order ``2s`` and the
boundary closures are one-sided stencils of order ``s``, so the global
convergence rate for first-order hyperbolic problems is ``s + 1``.

Only diagonal-norm operators are provided (orders 2, 4 and 6); a diagonal
``H`` is what allows the norm to double as a quadrature rule and keeps the
energy method valid for variable coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid1D",
    "SbpOperatorSet",
    "build_sbp_operator",
    "quad_inner_product",
    "polynomial_exactness_report",
]

#: Supported interior accuracy orders.
SUPPORTED_ORDERS = (2, 4, 6)

#: Minimum number of grid points per order: the two boundary closures must not
#: overlap, with at least one genuinely interior row between them.
MIN_POINTS = {2: 4, 4: 12, 6: 16}


def _frac_array(rows) -> np.ndarray:
    """Convert a nested list of fraction strings to a float array."""
    return np.array([[float(Fraction(entry)) for entry in row] for row in rows])


# ----------------------------------------------------------------------------
# Closure coefficient tables.
#
# Each entry provides the boundary block of the norm (scaled by 1/h), the
# upper-left block of Q (columns may extend past the block to couple into the
# interior stencil), and the right half of the antisymmetric interior stencil.
# The lower-right corner follows by the symmetry Q -> -Q reversed, H reversed.
# Coefficients are stored as exact rationals so that Q + Q^T = B holds to
# round-off no matter how the entries combine.
# ----------------------------------------------------------------------------

_H_BLOCK = {
    2: _frac_array([["1/2"]])[0],
    4: _frac_array([["17/48", "59/48", "43/48", "49/48"]])[0],
    6: _frac_array(
        [["13649/43200", "12013/8640", "2711/4320", "5359/4320", "7877/8640", "43801/43200"]]
    )[0],
}

_Q_BLOCK = {
    2: _frac_array([["-1/2", "1/2"]]),
    4: _frac_array(
        [
            ["-1/2", "59/96", "-1/12", "-1/32", "0", "0"],
            ["-59/96", "0", "59/96", "0", "0", "0"],
            ["1/12", "-59/96", "0", "59/96", "-1/12", "0"],
            ["1/32", "0", "-59/96", "0", "2/3", "-1/12"],
        ]
    ),
    6: _frac_array(
        [
            # fmt: off
            ["-1/2", "385081/599400", "-85759/1918080", "-25273/177600",
             "316607/9590400", "55417/4795200", "0", "0", "0"],
            ["-385081/599400", "0", "127681/319680", "690233/1918080",
             "-30719/319680", "-22081/1065600", "0", "0", "0"],
            ["85759/1918080", "-127681/319680", "0", "182429/479520",
             "-1021/71040", "-3637/319680", "0", "0", "0"],
            ["25273/177600", "-690233/1918080", "-182429/479520", "0",
             "123791/191808", "-614387/9590400", "1/60", "0", "0"],
            ["-316607/9590400", "30719/319680", "1021/71040", "-123791/191808",
             "0", "70057/99900", "-3/20", "1/60", "0"],
            ["-55417/4795200", "22081/1065600", "3637/319680", "614387/9590400",
             "-70057/99900", "0", "3/4", "-3/20", "1/60"],
            # fmt: on
        ]
    ),
}

# Right half (j > 0) of the antisymmetric interior stencil of Q.
_Q_INTERIOR = {
    2: _frac_array([["1/2"]])[0],
    4: _frac_array([["2/3", "-1/12"]])[0],
    6: _frac_array([["3/4", "-3/20", "1/60"]])[0],
}


@dataclass(frozen=True)
class Grid1D:
    """A uniform grid on ``[x_left, x_right]`` with ``n_points`` nodes."""

    x_left: float
    x_right: float
    n_points: int

    def __post_init__(self) -> None:
        if not self.x_right > self.x_left:
            raise ValueError(
                f"grid interval is empty: x_left={self.x_left}, x_right={self.x_right}"
            )
        if self.n_points < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return (self.x_right - self.x_left) / (self.n_points - 1)

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_left, self.x_right, self.n_points)


@dataclass(frozen=True)
class SbpOperatorSet:
    """An SBP pair ``(H, Q)`` with the derived difference operator ``D``.

    Attributes
    ----------
    accuracy_order:
        Interior accuracy order (2, 4 or 6).  Boundary rows are accurate to
        order ``accuracy_order // 2``.
    grid:
        The grid the operator was built for.
    quad_weights:
        Diagonal of ``H``; positive quadrature weights that sum to the domain
        length.
    skew_matrix:
        ``Q`` as a sparse CSR matrix; satisfies ``Q + Q^T = B``.
    diff_matrix:
        ``D = H^{-1} Q`` as a sparse CSR matrix.
    left_selector / right_selector:
        Unit basis vectors picking out the first and last grid values.
    """

    accuracy_order: int
    grid: Grid1D
    quad_weights: np.ndarray
    skew_matrix: sp.csr_matrix
    diff_matrix: sp.csr_matrix
    left_selector: np.ndarray = field(repr=False, default=None)
    right_selector: np.ndarray = field(repr=False, default=None)

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    def derivative(self, values: np.ndarray) -> np.ndarray:
        """Apply ``D`` along the last axis of ``values``."""
        if values.shape[-1] != self.n_points:
            raise ValueError(
                f"last axis has length {values.shape[-1]}, expected {self.n_points}"
            )
        if values.ndim == 1:
            return self.diff_matrix @ values
        flat = values.reshape(-1, self.n_points)
        return (self.diff_matrix @ flat.T).T.reshape(values.shape)


def build_sbp_operator(order: int, grid: Grid1D) -> SbpOperatorSet:
    """Assemble the diagonal-norm SBP operator of the given interior order.

    Raises
    ------
    ValueError
        If ``order`` is not one of 2, 4, 6, or the grid is too small for the
        two boundary closures to fit without overlap.
    """
    if order not in SUPPORTED_ORDERS:
        raise ValueError(
            f"unsupported order {order}; supported orders are {list(SUPPORTED_ORDERS)}"
        )
    n = grid.n_points
    if n < MIN_POINTS[order]:
        raise ValueError(
            f"order {order} needs at least {MIN_POINTS[order]} points, got {n}"
        )

    h = grid.spacing
    h_block = _H_BLOCK[order]
    q_block = _Q_BLOCK[order]
    q_int = _Q_INTERIOR[order]
    bw = q_block.shape[0]  # closure depth

    weights = np.ones(n)
    weights[:bw] = h_block
    weights[n - bw :] = h_block[::-1]
    weights *= h

    q = sp.lil_matrix((n, n))
    # Upper-left closure block, and the lower-right one by central antisymmetry
    # (rotate the block by 180 degrees and flip the sign).
    rows, cols = q_block.shape
    q[:rows, :cols] = q_block
    q[n - rows :, n - cols :] = -q_block[::-1, ::-1]
    # Interior antisymmetric stencil.
    for row in range(bw, n - bw):
        for k, coeff in enumerate(q_int, start=1):
            q[row, row + k] = coeff
            q[row, row - k] = -coeff
    q = q.tocsr()

    d = sp.diags(1.0 / weights) @ q
    e_left = np.zeros(n)
    e_left[0] = 1.0
    e_right = np.zeros(n)
    e_right[-1] = 1.0
    return SbpOperatorSet(
        accuracy_order=order,
        grid=grid,
        quad_weights=weights,
        skew_matrix=q,
        diff_matrix=d.tocsr(),
        left_selector=e_left,
        right_selector=e_right,
    )


def quad_inner_product(u: np.ndarray, v: np.ndarray, op: SbpOperatorSet) -> float:
    """Discrete inner product ``<u, v>_H`` induced by the operator norm.

    Both arrays must have the grid as their last axis; any leading axes
    (e.g. solution components) are summed over as well.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    if u.shape[-1] != op.n_points:
        raise ValueError(
            f"last axis has length {u.shape[-1]}, expected {op.n_points}"
        )
    return float(np.sum(u * v * op.quad_weights))


def polynomial_exactness_report(
    op: SbpOperatorSet, grid: Grid1D | None = None
) -> dict[int, float]:
    """Max-norm error of ``D x^k`` against ``k x^{k-1}`` for each degree.

    Degrees run from 0 up to the interior order.  Boundary closures are exact
    only to degree ``accuracy_order // 2``, so errors for higher degrees are
    expected to be O(1) at the ends; the low-degree rows document exactness.
    """
    grid = op.grid if grid is None else grid
    if grid.n_points != op.n_points:
        raise ValueError("grid does not match the operator size")
    x = grid.nodes
    report: dict[int, float] = {}
    for degree in range(op.accuracy_order + 1):
        exact = degree * x ** (degree - 1) if degree > 0 else np.zeros_like(x)
        report[degree] = float(np.max(np.abs(op.derivative(x**degree) - exact)))
    return report
