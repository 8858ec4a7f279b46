"""Long-run variance field from differences of adjacent partial sums."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EvalGrid, FunctionalSeries, ParameterError
from .smoothing import kernel_h

WEIGHT_GUARD = 1e-300


@dataclass(frozen=True)
class LrvParams:
    w: int
    tau: float

    def check(self, n: int) -> None:
        if self.w < 2:
            raise ParameterError(f"LRV block length w must be >= 2, got {self.w}")
        if 3 * self.w > n:
            raise ParameterError(f"LRV block length w = {self.w} exceeds n/3 for n = {n}")
        if not 0 < self.tau < 1:
            raise ParameterError(f"LRV bandwidth tau must lie in (0, 1), got {self.tau}")


def default_lrv_params(n: int) -> LrvParams:
    """w = floor(n^(2/7)), tau = n^(-1/7)."""
    if n < 27:
        raise ParameterError(f"default LRV parameters need n >= 27, got {n}")
    w = int(np.floor(n ** (2.0 / 7.0) + 1e-9))
    return LrvParams(w=w, tau=float(n ** (-1.0 / 7.0)))


def difference_statistics(values: np.ndarray, w: int) -> np.ndarray:
    """w Delta_j^2 / 2 for j = w..n-w (rows) and every column.

    Delta_j = (S_{j-w+1,w} - S_{j+1,w}) / sqrt(w) with S_{k,r} the partial
    sum of X_k..X_{k+r-1} scaled by 1/sqrt(r).
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    c = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    j = np.arange(w, n - w + 1)  # 1-based
    left = c[j] - c[j - w]        # X_{j-w+1} + ... + X_j
    right = c[j + w] - c[j]       # X_{j+1} + ... + X_{j+w}
    d = left - right
    return d * d / (2.0 * w)


class LrvField:
    """sigma_hat^2(u, t_k) for a fixed series; the Delta statistics are computed once."""

    def __init__(self, series: FunctionalSeries, params: Optional[LrvParams] = None):
        self.series = series
        self.params = params or default_lrv_params(series.n)
        self.params.check(series.n)
        self._d2 = difference_statistics(series.values, self.params.w)
        self._d2.setflags(write=False)
        n, w = series.n, self.params.w
        self._j = np.arange(w, n - w + 1) / n

    def weights(self, u) -> np.ndarray:
        """Normalised weights over the valid index set, one row per (clamped) u."""
        n, w = self.series.n, self.params.w
        u = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), w / n, 1.0 - w / n)
        h = kernel_h((self._j[None, :] - u[:, None]) / self.params.tau)
        tot = h.sum(axis=1)
        if np.any(tot < WEIGHT_GUARD):
            raise ParameterError(f"LRV weights vanish: tau = {self.params.tau} too small for n = {n}")
        return h / tot[:, None]

    def evaluate(self, u, t_indices=None) -> np.ndarray:
        d2 = self._d2 if t_indices is None else self._d2[:, np.asarray(t_indices)]
        d2t = np.ascontiguousarray(d2.T)
        wts = self.weights(u)
        out = np.empty((wts.shape[0], d2t.shape[0]))
        # reduce along a contiguous last axis so a cell's value does not depend
        # on how many other cells are evaluated with it
        step = max(1, 2_000_000 // max(1, d2t.size))
        for a in range(0, wts.shape[0], step):
            out[a : a + step] = (wts[a : a + step, None, :] * d2t[None, :, :]).sum(axis=-1)
        return out

    def __call__(self, u: float, t_index: int) -> float:
        return float(self.evaluate([u], [t_index])[0, 0])


def lrv_estimate(series: FunctionalSeries, params: LrvParams, u: float, t_index: int) -> float:
    """sigma_hat^2(u, t_k) at a single point (0-based column index)."""
    return LrvField(series, params)(u, t_index)


def lrv_field(series: FunctionalSeries, params: Optional[LrvParams], grid: EvalGrid) -> np.ndarray:
    field = LrvField(series, params)
    return field.evaluate(grid.u_values, grid.column_indices(series))
