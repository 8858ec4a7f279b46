"""Kernels, the order-4 Nadaraya-Watson surface estimator and local-linear detrending."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BandwidthTooSmallError, EvalGrid, FunctionalSeries, ParameterError, ceil_tol

SINGULAR_RTOL = 1e-12


def kernel_k(x):
    """Order-4 kernel (45 - 150 x^2 + 105 x^4) / 32 on |x| < 1."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    val = (45.0 - 150.0 * x2 + 105.0 * x2 * x2) / 32.0
    out = np.where(np.abs(x) < 1.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def kernel_h(x):
    """Epanechnikov kernel 0.75 (1 - x^2) on |x| < 1."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < 1.0, 0.75 * (1.0 - x * x), 0.0)
    return float(out) if out.ndim == 0 else out


def nw_weights(n: int, b_n: float, u) -> np.ndarray:
    """Rows K((i/n - u)/b_n) / (n b_n), i = 1..n, one row per u."""
    i = np.arange(1, n + 1) / n
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return kernel_k((i[None, :] - u[:, None]) / b_n) / (n * b_n)


def nw_estimate(series: FunctionalSeries, b_n: float, grid: EvalGrid) -> np.ndarray:
    """Unnormalized Nadaraya-Watson estimate m_hat(u, t) on the grid.

    The kernel sum is divided by n b_n, not by the sum of weights; the
    bootstrap radius scalings depend on this form.
    """
    n = series.n
    if not 0 < b_n < 0.5:
        raise ParameterError(f"b_n must lie in (0, 1/2), got {b_n}")
    if 2 * ceil_tol(n * b_n) < 4:
        raise ParameterError("bandwidth too small: need 2*ceil(n b_n) >= 4")
    grid.check_interior(b_n)
    cols = grid.column_indices(series)
    return nw_weights(n, b_n, grid.u_values) @ series.values[:, cols]


@dataclass(frozen=True)
class ResidualMatrix:
    values: np.ndarray
    d_n: float


def local_linear_hat(n: int, d_n: float, rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Hat matrix Q of the local-linear fit at the design points u = i/n.

    Row i holds the closed-form weights l_j(i) = H_j (S2 - x_j S1) / (S0 S2 - S1^2)
    with x_j = (j - i)/n, so that fitted = Q @ X. ``rows`` (0-based) restricts
    the output to a subset of evaluation points.
    """
    if d_n <= 0:
        raise ParameterError("bandwidth must be positive")
    idx = np.arange(n) if rows is None else np.asarray(rows)
    x = (np.arange(n)[None, :] - idx[:, None]) / n
    h = kernel_h(x / d_n)
    s0 = h.sum(axis=1)
    s1 = (h * x).sum(axis=1)
    s2 = (h * x * x).sum(axis=1)
    det = s0 * s2 - s1 * s1
    bad = ~(det > SINGULAR_RTOL * s0 * s2) | (np.count_nonzero(h, axis=1) < 3)
    if np.any(bad):
        i = int(idx[np.argmax(bad)]) + 1
        raise BandwidthTooSmallError(
            f"local-linear system singular at u = {i}/{n} with d_n = {d_n}; increase the bandwidth"
        )
    return h * (s2[:, None] - x * s1[:, None]) / det[:, None]


def local_linear_fit(series: FunctionalSeries, d_n: float) -> tuple[np.ndarray, ResidualMatrix]:
    """Column-wise local-linear fit in u with the Epanechnikov kernel.

    Returns the fitted values at the design points and the residuals
    X_i(t_k) - m_tilde(i/n, t_k).
    """
    q = local_linear_hat(series.n, d_n)
    fitted = q @ series.values
    resid = series.values - fitted
    resid.setflags(write=False)
    return fitted, ResidualMatrix(resid, d_n)
