"""Simultaneous confidence bands with one argument held fixed."""
from __future__ import annotations

import math
from typing import Literal, Optional

import numpy as np

from .bootstrap import (
    bootstrap_quantile,
    check_residuals,
    multiplier_matrix,
    normalising_sigma,
    surface_constant,
    surface_varying,
    _check_common,
    SigmaFn,
)
from .core import (
    ConfidenceBand,
    DegenerateError,
    EvalGrid,
    FunctionalSeries,
    ParameterError,
    TuningRecord,
    ceil_tol,
    floor_tol,
    interior_design_points,
    interior_interval,
)
from .lrv import LrvField, LrvParams
from .smoothing import kernel_k, local_linear_fit, nw_weights

Mode = Literal["constant", "varying"]


def band_fixed_t(
    series: FunctionalSeries,
    t_index: int,
    b_n: float,
    d_n: float,
    m_n: int,
    alpha: float = 0.05,
    B: int = 1000,
    mode: Mode = "constant",
    seed: int = 0,
    lrv_params: Optional[LrvParams] = None,
    u_values: Optional[np.ndarray] = None,
    workers: int = 1,
) -> ConfidenceBand:
    """Band for u -> m(u, t_k) with t_k fixed (0-based column index).

    This is the surface pipeline run on the single residual column, so a
    p = 1 series gives exactly the surface restricted to that column.
    """
    col = series.column(t_index)
    u = interior_design_points(series.n, b_n) if u_values is None else np.asarray(u_values, dtype=float)
    grid = EvalGrid(u, col.t_grid)
    if mode == "constant":
        surf = surface_constant(col, b_n, d_n, m_n, alpha, B, grid, seed, workers)
        radius = surf.radius
    elif mode == "varying":
        surf = surface_varying(col, b_n, d_n, m_n, lrv_params, alpha, B, grid, seed, workers)
        radius = surf.radius[:, 0]
    else:
        raise ParameterError(f"unknown width mode {mode!r}")
    return ConfidenceBand(
        axis="t",
        fixed_value=float(series.t_grid[t_index]),
        grid=u,
        center=surf.center[:, 0],
        radius=radius,
        level=1 - alpha,
        width_mode=mode,
        tuning=surf.tuning,
    )


def local_window(n: int, u_star: float, b_n: float) -> tuple[int, int]:
    """1-based index range [ceil(n u - n b), floor(n u + n b)] clipped to [1, n]."""
    lo = max(1, ceil_tol(n * u_star - n * b_n))
    hi = min(n, floor_tol(n * u_star + n * b_n))
    return lo, hi


def fixed_u_blocks(scaled_resid: np.ndarray, u_star: float, b_n: float, m_prime: int) -> np.ndarray:
    """S_j(u) for j = lo..hi-m'+1, shape (n_j, p).

    S_j(u) = (sum_{r=j}^{j+h-1} - sum_{r=j+h}^{j+m'-1}) K((r/n - u)/b_n) e_r / sqrt(m').
    """
    e = np.asarray(scaled_resid, dtype=float)
    n = e.shape[0]
    lo, hi = local_window(n, u_star, b_n)
    size = hi - lo + 1
    if size < m_prime + 2:
        raise ParameterError(
            f"local window of {size} points around u = {u_star} is too short for m' = {m_prime}"
        )
    r = np.arange(lo, hi + 1)
    z = kernel_k((r / n - u_star) / b_n)[:, None] * e[lo - 1 : hi]
    cs = np.vstack([np.zeros((1, e.shape[1])), np.cumsum(z, axis=0)])
    h = m_prime // 2
    j = np.arange(size - m_prime + 1)
    return (2.0 * cs[j + h] - cs[j] - cs[j + m_prime]) / math.sqrt(m_prime)


def fixed_u_draws(blocks: np.ndarray, B: int, seed: int, n_mult: int) -> np.ndarray:
    """T^(r) = |sum_j S_j R_j|_inf with fresh multipliers R_j per replicate."""
    R = multiplier_matrix(seed, B, n_mult)[:, : blocks.shape[0]]
    return np.abs(R @ blocks).max(axis=1)


def band_fixed_u(
    series: FunctionalSeries,
    u_star: float,
    b_n: float,
    d_n: float,
    m_n: int,
    alpha: float = 0.05,
    B: int = 1000,
    mode: Mode = "constant",
    seed: int = 0,
    lrv_params: Optional[LrvParams] = None,
    workers: int = 1,
    sigma_fn: Optional[SigmaFn] = None,
) -> ConfidenceBand:
    """Band for t -> m(u*, t) with u* in [b_n, 1 - b_n] fixed.

    Unlike the surface bootstrap the multipliers are not shifted: there is a
    single u, so each block gets its own R_j. In varying mode the residuals
    are divided by sigma_hat(u*, t_k), with u* rather than i/n as first
    argument.
    """
    del workers  # single matrix product; nothing to split
    mp = _check_common(series, b_n, m_n, alpha, B)
    lo_u, hi_u = interior_interval(series.n, b_n)
    if not lo_u - 1e-12 <= u_star <= hi_u + 1e-12:
        raise ParameterError(f"u* = {u_star} outside [{lo_u}, {hi_u}]")
    n = series.n
    _, res = local_linear_fit(series, d_n)
    check_residuals(res.values, series.values)

    lo, hi = local_window(n, u_star, b_n)
    e = res.values
    params = None
    floor_hits = 0
    if mode == "varying":
        if sigma_fn is None:
            field = LrvField(series, lrv_params)
            params = field.params
            sig_u = np.sqrt(field.evaluate([u_star]))[0]
        else:
            sig_u = np.asarray(sigma_fn(np.array([u_star]), np.arange(series.p)))[0]
        sig_u, _, floor_hits = normalising_sigma(sig_u, sig_u)
        e = e / sig_u[None, :]
    elif mode != "constant":
        raise ParameterError(f"unknown width mode {mode!r}")

    blocks = fixed_u_blocks(e, u_star, b_n, mp)
    T = fixed_u_draws(blocks, B, seed, hi - lo + 1)
    tq = bootstrap_quantile(T, alpha).value
    if not tq > 0:
        raise DegenerateError("bootstrap quantile is zero")
    # hi - lo - m' + 2 equals the number of blocks entering the statistic
    scale = math.sqrt(2.0) / (math.sqrt(n * b_n) * math.sqrt(hi - lo - mp + 2))
    radius = tq * scale if mode == "constant" else sig_u * (tq * scale)
    center = (nw_weights(n, b_n, [u_star]) @ series.values)[0]
    rec = TuningRecord(
        b_n=b_n,
        d_n=d_n,
        m_n=int(m_n),
        w=params.w if params else None,
        tau=params.tau if params else None,
        B=B,
        seed=seed,
        quantile_value=tq,
        floor_hits=floor_hits,
    )
    return ConfidenceBand(
        axis="u",
        fixed_value=float(u_star),
        grid=series.t_grid,
        center=center,
        radius=radius,
        level=1 - alpha,
        width_mode=mode,
        tuning=rec,
    )
