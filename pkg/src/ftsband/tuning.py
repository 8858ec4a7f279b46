"""Data-driven choice of d_n (MGCV), b_n = 1.2 d_n and the bootstrap window (minimal volatility)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .bands import fixed_u_blocks, local_window
from .bootstrap import BlockSumAccessor, check_residuals, normalising_sigma
from .core import (
    BandwidthTooSmallError,
    FunctionalSeries,
    NumericalError,
    ParameterError,
    TuningRecord,
    ceil_tol,
)
from .lrv import LrvField, LrvParams, default_lrv_params
from .smoothing import local_linear_fit, local_linear_hat

SURFACE_FACTOR = 1.2
MV_MAX_COORDS = 20_000
_TIE_RTOL = 1e-20


@dataclass(frozen=True)
class BandwidthGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise ParameterError("bandwidth grid is empty")
        if np.any(np.diff(v) <= 0) or v[0] <= 0 or v[-1] >= 0.5:
            raise ParameterError("bandwidth candidates must be strictly increasing inside (0, 1/2)")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class WindowGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=int)
        if v.size < 5:
            raise ParameterError(f"minimal volatility needs at least 5 window candidates, got {v.size}")
        if np.any(v % 2) or np.any(np.diff(v) <= 0) or v[0] < 2:
            raise ParameterError("window candidates must be increasing even integers >= 2")
        object.__setattr__(self, "values", v)


def default_bandwidth_grid(n: int) -> BandwidthGrid:
    """12 log-spaced candidates in [max(4/n, n^-0.45), 0.35]."""
    lo = max(4.0 / n, n ** -0.45)
    return BandwidthGrid(np.geomspace(lo, 0.35, 12))


def default_window_grid(n: int, b_n: float, max_size: int = 20) -> WindowGrid:
    """Even windows 4, 6, ... up to ceil(n b_n) / 2, at most ``max_size`` of them.

    The bootstrap normalisation is only accurate while m' is small against
    n b_n, so the grid stops at half of ceil(n b_n). When that leaves fewer
    than five candidates the first five admissible even windows are used.
    """
    c = ceil_tol(n * b_n)
    values = np.arange(4, c // 2 + 1, 2)
    if values.size < 5:
        values = np.arange(4, 2 * c, 2)[:5]
    if values.size < 5:
        values = np.arange(2, 2 * c, 2)[:5]
    return WindowGrid(values[:max_size])


def surface_bandwidth(d_n: float) -> float:
    b = SURFACE_FACTOR * d_n
    if not 0 < b < 0.5:
        raise ParameterError(f"b_n = 1.2 * {d_n} = {b} is not inside (0, 1/2)")
    return b


def _argmin_first(crit: np.ndarray, tol: float) -> int:
    ok = np.isfinite(crit)
    if not ok.any():
        raise NumericalError("no admissible candidate")
    best = np.min(crit[ok])
    return int(np.flatnonzero(ok & (crit <= best + tol))[0])


def mgcv_curve(series: FunctionalSeries, grid: Optional[BandwidthGrid] = None) -> tuple[np.ndarray, np.ndarray]:
    """(candidates, MGCV values); inadmissible candidates get +inf.

    MGCV(b) = max_s RSS_s(b) / (1 - tr Q(b) / n)^2 with Q(b) the local-linear
    hat matrix at the design points (the same for every column).
    """
    grid = grid or default_bandwidth_grid(series.n)
    n = series.n
    X = series.values
    crit = np.full(grid.values.size, np.inf)
    for g, b in enumerate(grid.values):
        try:
            q = local_linear_hat(n, b)
        except BandwidthTooSmallError:
            continue
        tr = float(np.trace(q))
        if tr >= n:
            continue
        rss = ((q @ X - X) ** 2).sum(axis=0)
        crit[g] = rss.max() / (1.0 - tr / n) ** 2
    return grid.values, crit


def mgcv_bandwidth(series: FunctionalSeries, grid: Optional[BandwidthGrid] = None) -> float:
    cands, crit = mgcv_curve(series, grid)
    if not np.isfinite(crit).any():
        raise NumericalError("MGCV: every bandwidth candidate was inadmissible")
    energy = float((series.values ** 2).sum(axis=0).max())
    return float(cands[_argmin_first(crit, _TIE_RTOL * energy)])


def mgcv_local_curve(
    series: FunctionalSeries, u_star: float, grid: Optional[BandwidthGrid] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Localised MGCV: residual sums over [ceil(nu - nb), floor(nu + nb)], trace scaled by 2nb."""
    grid = grid or default_bandwidth_grid(series.n)
    n = series.n
    X = series.values
    crit = np.full(grid.values.size, np.inf)
    for g, b in enumerate(grid.values):
        lo, hi = local_window(n, u_star, b)
        rows = np.arange(lo - 1, hi)
        try:
            q = local_linear_hat(n, b, rows)
        except BandwidthTooSmallError:
            continue
        tr = float(q[np.arange(rows.size), rows].sum())
        denom = 1.0 - tr / (2.0 * n * b)
        if denom <= 0:
            continue
        rss = ((q @ X - X[rows]) ** 2).sum(axis=0)
        crit[g] = rss.max() / denom**2
    return grid.values, crit


def mgcv_bandwidth_local(series: FunctionalSeries, u_star: float, grid: Optional[BandwidthGrid] = None) -> float:
    cands, crit = mgcv_local_curve(series, u_star, grid)
    if not np.isfinite(crit).any():
        raise NumericalError("local MGCV: every bandwidth candidate was inadmissible")
    energy = float((series.values ** 2).sum(axis=0).max())
    return float(cands[_argmin_first(crit, _TIE_RTOL * energy)])


# --- minimal volatility -------------------------------------------------------

def mv_curve(diamond: np.ndarray) -> np.ndarray:
    """MV(k) for k = 3..M-2 (1-based) from the M x R matrix of S-diamond values.

    se uses divisor 4 over the five neighbouring windows k-2..k+2.
    """
    d = np.asarray(diamond, dtype=float)
    M = d.shape[0]
    if M < 5:
        raise ParameterError("minimal volatility needs at least 5 windows")
    out = np.empty(M - 4)
    for q, k in enumerate(range(2, M - 2)):  # 0-based centre
        out[q] = np.std(d[k - 2 : k + 3], axis=0, ddof=1).mean()
    return out


def _coord_index(total: int, max_coords: int) -> np.ndarray:
    stride = max(1, math.ceil(total / max_coords))
    return np.arange(0, total, stride)


def surface_diamond(E: np.ndarray, b_n: float, windows: Sequence[int], max_coords: int = MV_MAX_COORDS) -> np.ndarray:
    """S-diamond_{m, r} = mean_j block_m(j, r)^2 over flat coordinates r = (k-1)p + s."""
    rows = []
    for m in windows:
        acc = BlockSumAccessor(E, b_n, int(m))
        total = acc.n_k * acc.p
        keep = _coord_index(total, max_coords)
        vals = np.empty(total)
        for k0, k1 in acc.k_chunks(1):
            blk = acc.blocks(k0, k1)  # (kc, p, n_j)
            vals[k0 * acc.p : k1 * acc.p] = (blk * blk).mean(axis=-1).ravel()
        rows.append(vals[keep])
    return np.vstack(rows)


def _select(windows: np.ndarray, diamond: np.ndarray) -> tuple[int, np.ndarray]:
    mv = mv_curve(diamond)
    k = int(np.argmin(mv))  # first minimiser -> smallest window on ties
    return int(windows[k + 2]), mv


def _normalised_residuals(series, b_n, d_n, lrv_params):
    _, res = local_linear_fit(series, d_n)
    check_residuals(res.values, series.values)
    field = LrvField(series, lrv_params)
    u = series.u_design
    sig = np.sqrt(field.evaluate(u))
    inner = (u >= b_n) & (u <= 1 - b_n)
    sig, _, _ = normalising_sigma(sig, sig[inner] if inner.any() else sig)
    return res.values / sig


def minimal_volatility_window(
    series: FunctionalSeries,
    b_n: float,
    d_n: float,
    lrv_params: Optional[LrvParams] = None,
    window_grid: Optional[WindowGrid] = None,
    max_coords: int = MV_MAX_COORDS,
    return_curve: bool = False,
):
    """Window m' minimising the volatility of the sigma-normalised block variances."""
    wg = window_grid or default_window_grid(series.n, b_n)
    if wg.values[-1] >= 2 * ceil_tol(series.n * b_n):
        raise ParameterError("largest window candidate must be below 2*ceil(n b_n)")
    E = _normalised_residuals(series, b_n, d_n, lrv_params)
    diamond = surface_diamond(E, b_n, wg.values, max_coords)
    m, mv = _select(wg.values, diamond)
    return (m, mv) if return_curve else m


def minimal_volatility_window_local(
    series: FunctionalSeries,
    u_star: float,
    b_n: float,
    d_n: float,
    lrv_params: Optional[LrvParams] = None,
    window_grid: Optional[WindowGrid] = None,
    return_curve: bool = False,
):
    """Minimal volatility for the fixed-u band, over its p block coordinates."""
    wg = window_grid or default_window_grid(series.n, b_n)
    _, res = local_linear_fit(series, d_n)
    check_residuals(res.values, series.values)
    field = LrvField(series, lrv_params)
    sig_u = np.sqrt(field.evaluate([u_star]))[0]
    sig_u, _, _ = normalising_sigma(sig_u, sig_u)
    e = res.values / sig_u[None, :]
    diamond = np.vstack([(fixed_u_blocks(e, u_star, b_n, int(m)) ** 2).mean(axis=0) for m in wg.values])
    m, mv = _select(wg.values, diamond)
    return (m, mv) if return_curve else m


# --- orchestration ------------------------------------------------------------

Target = Literal["surface", "band_t", "band_u"]


def auto_tune(
    series: FunctionalSeries,
    target: Target = "surface",
    fixed: Optional[float] = None,
    lrv_params: Optional[LrvParams] = None,
    bandwidth_grid: Optional[BandwidthGrid] = None,
    window_grid: Optional[WindowGrid] = None,
    b_n: Optional[float] = None,
    d_n: Optional[float] = None,
    m_n: Optional[int] = None,
) -> TuningRecord:
    """Fill in d_n, b_n and m_n; explicit values always win over selection.

    For ``band_t`` the selection runs on the single column ``fixed`` (a t value),
    for ``band_u`` the localised criteria around u* = ``fixed`` are used.
    """
    params = lrv_params or default_lrv_params(series.n)
    src = {}
    data = series
    if target == "band_t":
        data = series.column(series.t_index(fixed))

    if d_n is None:
        if b_n is not None:
            d_n = b_n / SURFACE_FACTOR
            src["d_n"] = "derived"
        elif target == "band_u":
            d_n = mgcv_bandwidth_local(data, fixed, bandwidth_grid)
            src["d_n"] = "mgcv-local"
        else:
            d_n = mgcv_bandwidth(data, bandwidth_grid)
            src["d_n"] = "mgcv"
    else:
        src["d_n"] = "override"
    if b_n is None:
        b_n = surface_bandwidth(d_n)
        src["b_n"] = "1.2*d_n"
    else:
        src["b_n"] = "override"
    if m_n is None:
        if target == "band_u":
            m_n = minimal_volatility_window_local(data, fixed, b_n, d_n, params, window_grid)
        else:
            m_n = minimal_volatility_window(data, b_n, d_n, params, window_grid)
        src["m_n"] = "minimal-volatility"
    else:
        src["m_n"] = "override"
    src.setdefault("w", "default" if lrv_params is None else "override")
    rec = TuningRecord(b_n=float(b_n), d_n=float(d_n), m_n=int(m_n), w=params.w, tau=params.tau, sources=src)
    rec.validate(series.n)
    return rec
