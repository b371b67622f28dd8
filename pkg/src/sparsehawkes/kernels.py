"""Interaction kernels: nonnegative functions on [0, A] with mass below one."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

# kernels with mass below this are treated as zero and pruned from active sets
ZERO_MASS_TOL = 1e-12


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class HistogramKernel:
    """Piecewise-constant kernel on the regular grid t_i = i*A/I.

    ``heights[i]`` is the value on the cell (t_i, t_{i+1}].
    """

    horizon: float
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        object.__setattr__(self, "heights", h)
        if self.horizon <= 0 or not np.isfinite(self.horizon):
            raise KernelError(f"horizon must be positive, got {self.horizon}")
        if h.ndim != 1 or h.size == 0:
            raise KernelError("heights must be a non-empty 1-d array")
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise KernelError("heights must be finite and nonnegative")
        if self.mass >= 1.0:
            raise KernelError(
                f"kernel mass {self.mass} >= 1 violates the stationarity support set"
            )

    @property
    def bin_count(self) -> int:
        return self.heights.size

    @property
    def bin_width(self) -> float:
        return self.horizon / self.heights.size

    @property
    def mass(self) -> float:
        # exact bin-weighted sum
        return float(np.sum(self.heights) * self.bin_width)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.bin_count + 1)

    def sup(self) -> float:
        return float(np.max(self.heights))

    def __call__(self, x) -> np.ndarray:
        """Evaluate at lags x; zero outside (0, A]. Cell (t_i, t_{i+1}] maps to heights[i]."""
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x <= self.horizon)
        idx = np.ceil(x * self.bin_count / self.horizon).astype(int) - 1
        idx = np.clip(idx, 0, self.bin_count - 1)
        return np.where(inside, self.heights[idx], 0.0)

    def weights(self) -> np.ndarray:
        """Cell masses (w_2, ..., w_{I+1}) = heights * bin width."""
        return self.heights * self.bin_width


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def spline_quadrature(horizon: float, order: int, coefficient_count: int):
    """(points, weights, basis) for exact-at-desk-scale integration of
    exp(theta . basis) over [0, horizon]: composite 32-node Gauss-Legendre per
    knot interval; basis has shape (len(points), coefficient_count)."""
    knots, degree = _bspline_design(horizon, order, coefficient_count)
    breaks = np.unique(knots)
    mid = 0.5 * (breaks[:-1] + breaks[1:])
    half = 0.5 * np.diff(breaks)
    pts = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    wts = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    basis = np.empty((pts.size, coefficient_count))
    for j in range(coefficient_count):
        c = np.zeros(coefficient_count)
        c[j] = 1.0
        basis[:, j] = BSpline(knots, c, degree, extrapolate=False)(pts)
    return pts, wts, basis


def _bspline_design(horizon: float, order: int, coefficient_count: int):
    """Clamped uniform B-spline basis of the given order on [0, horizon]."""
    degree = order - 1
    n_inner = coefficient_count - order
    if n_inner < 0:
        raise KernelError(
            f"coefficient_count {coefficient_count} must be >= order {order}"
        )
    inner = np.linspace(0.0, horizon, n_inner + 2)[1:-1]
    knots = np.concatenate(
        [np.zeros(order), inner, np.full(order, horizon)]
    )
    return knots, degree


@dataclass(frozen=True)
class SplineKernel:
    """Log-spline kernel h(x) = exp(sum_j theta_j B_j(x)) on [0, A].

    B_1..B_J is the clamped B-spline basis of the given order on the regular
    grid. Strictly positive on [0, A]; the constructor rejects coefficient
    vectors whose mass reaches 1.
    """

    horizon: float
    order: int
    coefficients: np.ndarray
    _spline: BSpline = field(init=False, repr=False, compare=False)
    _mass: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        theta = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", theta)
        if self.horizon <= 0:
            raise KernelError("horizon must be positive")
        if self.order < 1:
            raise KernelError("spline order must be >= 1")
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise KernelError("coefficients must be a finite 1-d array")
        knots, degree = _bspline_design(self.horizon, self.order, theta.size)
        object.__setattr__(
            self, "_spline", BSpline(knots, theta, degree, extrapolate=False)
        )
        object.__setattr__(self, "_mass", self._quad_mass())
        if self._mass >= 1.0:
            raise KernelError(f"spline kernel mass {self._mass} >= 1")

    @property
    def coefficient_count(self) -> int:
        return self.coefficients.size

    def knot_breaks(self) -> np.ndarray:
        """Distinct knot abscissae (the quadrature segmentation)."""
        return np.unique(self._spline.t)

    def _quad_mass(self) -> float:
        # composite 32-node Gauss-Legendre per knot interval; exact to ~1e-15
        # on these smooth integrands at desk scale
        breaks = self.knot_breaks()
        mid = 0.5 * (breaks[:-1] + breaks[1:])
        half = 0.5 * np.diff(breaks)
        pts = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        wts = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        return float(np.dot(wts, self._eval_inside(pts)))

    def _eval_inside(self, x):
        return np.exp(self._spline(x))

    @property
    def mass(self) -> float:
        return self._mass

    def sup(self) -> float:
        # exp(sum theta_j B_j) <= exp(max theta) since the basis is a partition
        # of unity; cheap and safe for thinning bounds
        return float(np.exp(np.max(self.coefficients)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= self.horizon)
        out = np.zeros_like(x, dtype=float)
        if np.any(inside):
            out[inside] = np.exp(self._spline(x[inside]))
        return np.where(inside, out, 0.0)
