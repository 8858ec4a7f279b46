"""Shared-multiplier block bootstrap for simultaneous confidence surfaces.

The bootstrap works on the rearranged vectors whose k-th p-block is
A(r) * eps_{r+k-1}, r = 1..2c-1 with c = ceil(n b_n) and A(r) = K((r - c)/(n b_n)).
Block sums over windows of length m' = 2 floor(m_n / 2) are multiplied by
standard normal variables R_{k+j-1}; the shift by k makes neighbouring
statistics share multipliers, which mirrors the overlap of the rearranged
vectors. Indices in docstrings are 1-based, array indices 0-based.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    ConfidenceSurface,
    DegenerateError,
    EvalGrid,
    FunctionalSeries,
    ParameterError,
    TuningRecord,
    ceil_tol,
    floor_tol,
    theory_grid,
)
from .lrv import LrvField, LrvParams
from .smoothing import kernel_k, local_linear_fit, nw_estimate

SIGMA_FLOOR_REL = 1e-6
ZERO_RESIDUAL_RTOL = 1e-11
_CHUNK_ELEMENTS = 4_000_000


# --- random streams -----------------------------------------------------------

def replicate_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox stream for (seed, key...); independent of the order streams are requested in."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def multiplier_matrix(seed: int, B: int, length: int, stream: int = 0) -> np.ndarray:
    """B x length standard normal multipliers; row r comes from stream (seed, stream, r)."""
    out = np.empty((B, length))
    for r in range(B):
        out[r] = replicate_rng(seed, stream, r).standard_normal(length)
    return out


# --- building blocks ----------------------------------------------------------

def m_prime_of(m_n: int) -> int:
    return 2 * (int(m_n) // 2)


def kernel_weights(n: int, b_n: float, m_prime: Optional[int] = None) -> np.ndarray:
    """A(r) = K((r - c)/(n b_n)) for r = 1..2c-1, c = ceil(n b_n)."""
    c = ceil_tol(n * b_n)
    if c < 1:
        raise ParameterError(f"n b_n = {n * b_n} gives an empty kernel window")
    r = np.arange(1, 2 * c)
    a = kernel_k((r - c) / (n * b_n))
    if m_prime is not None and m_prime > a.size:
        raise ParameterError(f"window m' = {m_prime} longer than the kernel weight vector ({a.size})")
    return np.atleast_1d(a)


def radius_scale(n: int, b_n: float, m_prime: int) -> float:
    """sqrt(2) / (sqrt(n b_n) sqrt(2c - m')), the factor turning T_q into a radius."""
    c = ceil_tol(n * b_n)
    return math.sqrt(2.0) / (math.sqrt(n * b_n) * math.sqrt(2 * c - m_prime))


class BlockSumAccessor:
    """Lazy view of the block sums block(j, k, s).

    block(j, k, s) = (sum_{r=j}^{j+h-1} - sum_{r=j+h}^{j+m'-1}) A(r) E[r+k-1, s] / sqrt(m')
    for j = 1..2c-m', k = 1..n-2c+1, s = 1..p. Blocks are produced in k-chunks
    from prefix sums over r; the full tensor is never held at once.
    """

    def __init__(self, residuals: np.ndarray, b_n: float, m_prime: int):
        e = np.asarray(residuals, dtype=float)
        if e.ndim == 1:
            e = e[:, None]
        self.E = e
        self.n, self.p = e.shape
        self.b_n = b_n
        self.c = ceil_tol(self.n * b_n)
        self.L = 2 * self.c
        m_prime = int(m_prime)
        if m_prime % 2 or not 2 <= m_prime < self.L:
            raise ParameterError(
                f"window m' = {m_prime} must be even with 2 <= m' < 2*ceil(n b_n) = {self.L}"
            )
        self.m_prime = m_prime
        self.h = m_prime // 2
        self.A = kernel_weights(self.n, b_n, m_prime)
        self.n_j = self.L - m_prime
        self.n_k = self.n - self.L + 1
        if self.n_k < 1:
            raise ParameterError(f"2*ceil(n b_n) = {self.L} exceeds n = {self.n}")

    @property
    def multiplier_length(self) -> int:
        return self.n - self.m_prime

    def block(self, j: int, k: int, s: int) -> float:
        """Direct evaluation of a single block (1-based indices)."""
        if not (1 <= j <= self.n_j and 1 <= k <= self.n_k and 1 <= s <= self.p):
            raise IndexError(f"block index ({j}, {k}, {s}) out of range")
        first = sum(self.A[r - 1] * self.E[r + k - 2, s - 1] for r in range(j, j + self.h))
        second = sum(self.A[r - 1] * self.E[r + k - 2, s - 1] for r in range(j + self.h, j + self.m_prime))
        return (first - second) / math.sqrt(self.m_prime)

    def blocks(self, k0: int = 0, k1: Optional[int] = None, columns=None) -> np.ndarray:
        """Blocks for 0-based k in [k0, k1), shape (k1 - k0, p, n_j)."""
        k1 = self.n_k if k1 is None else k1
        e = self.E if columns is None else self.E[:, columns]
        win = sliding_window_view(e, self.L - 1, axis=0)[k0:k1]  # (kc, p, 2c-1)
        f = win * self.A
        cs = np.zeros(f.shape[:-1] + (f.shape[-1] + 1,))
        np.cumsum(f, axis=-1, out=cs[..., 1:])
        j = np.arange(self.n_j)
        out = 2.0 * cs[..., j + self.h] - cs[..., j] - cs[..., j + self.m_prime]
        return out / math.sqrt(self.m_prime)

    def k_chunks(self, B: int):
        kc = max(1, _CHUNK_ELEMENTS // max(1, B * self.n_j))
        return [(k0, min(k0 + kc, self.n_k)) for k0 in range(0, self.n_k, kc)]


def block_sum(accessor: BlockSumAccessor, j: int, k: int, s: int) -> float:
    return accessor.block(j, k, s)


def draw_many(accessor: BlockSumAccessor, multipliers: np.ndarray, workers: int = 1) -> np.ndarray:
    """T^(r) = max_{k,s} |sum_j block(j,k,s) R^(r)_{k+j-1}| for each row of ``multipliers``.

    The k-range is split into chunks whose size depends only on the problem
    shape, so the result is bit-identical for any ``workers``.
    """
    R = np.atleast_2d(np.asarray(multipliers, dtype=float))
    if R.shape[1] != accessor.multiplier_length:
        raise ValueError(
            f"expected {accessor.multiplier_length} multipliers per replicate, got {R.shape[1]}"
        )
    B = R.shape[0]
    win = sliding_window_view(R, accessor.n_j, axis=1)  # (B, n_k, n_j)

    def chunk_max(bounds):
        k0, k1 = bounds
        blk = np.ascontiguousarray(accessor.blocks(k0, k1).transpose(0, 2, 1))  # (kc, n_j, p)
        rk = np.ascontiguousarray(win[:, k0:k1, :].transpose(1, 0, 2))  # (kc, B, n_j)
        tk = np.matmul(rk, blk)  # (kc, B, p)
        return np.abs(tk).max(axis=(0, 2))

    chunks = accessor.k_chunks(B)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(chunk_max, chunks))
    else:
        parts = [chunk_max(c) for c in chunks]
    return np.max(np.vstack(parts), axis=0)


def draw_T(accessor: BlockSumAccessor, multipliers: np.ndarray) -> float:
    R = np.asarray(multipliers, dtype=float)
    if R.ndim != 1:
        raise ValueError("draw_T takes a single multiplier vector")
    return float(draw_many(accessor, R[None, :])[0])


@dataclass(frozen=True)
class BootstrapDraws:
    sorted_draws: np.ndarray
    alpha: float
    index: int  # 1-based order statistic

    @property
    def value(self) -> float:
        return float(self.sorted_draws[self.index - 1])


def quantile_index(B: int, alpha: float) -> int:
    return min(B, max(1, floor_tol((1.0 - alpha) * B)))


def bootstrap_quantile(draws, alpha: float) -> BootstrapDraws:
    """Order statistic T_{floor((1 - alpha) B)} of the sorted draws (1-based, clamped to >= 1)."""
    d = np.sort(np.asarray(draws, dtype=float).ravel())
    if d.size == 0:
        raise ValueError("no bootstrap draws")
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    d.setflags(write=False)
    return BootstrapDraws(d, alpha, quantile_index(d.size, alpha))


# --- pipelines ----------------------------------------------------------------

def check_residuals(residuals: np.ndarray, data: np.ndarray) -> None:
    scale = float(np.max(np.abs(data))) if data.size else 0.0
    if float(np.max(np.abs(residuals))) <= ZERO_RESIDUAL_RTOL * scale or not np.any(residuals):
        raise DegenerateError(
            "residuals vanish (mean is affine in u): the bootstrap would give a zero-width region"
        )


def _check_common(series: FunctionalSeries, b_n: float, m_n: int, alpha: float, B: int) -> int:
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if B < 10:
        raise ParameterError(f"need B >= 10 bootstrap replicates, got {B}")
    if not 0 < b_n < 0.5:
        raise ParameterError(f"b_n must lie in (0, 1/2), got {b_n}")
    mp = m_prime_of(m_n)
    c = ceil_tol(series.n * b_n)
    if not 2 <= mp < 2 * c:
        raise ParameterError(
            f"window m' = {mp} must satisfy 2 <= m' < 2*ceil(n b_n) = {2 * c}; retune m_n or b_n"
        )
    return mp


def bootstrap_statistic(E: np.ndarray, b_n: float, m_prime: int, B: int, seed: int, workers: int = 1) -> np.ndarray:
    acc = BlockSumAccessor(E, b_n, m_prime)
    R = multiplier_matrix(seed, B, acc.multiplier_length)
    return draw_many(acc, R, workers=workers)


def normalising_sigma(field_values: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Floor sigma_hat at 1e-6 times the median of ``reference``; returns (floored, floor, hits)."""
    med = float(np.median(reference))
    floor = SIGMA_FLOOR_REL * med
    if not floor > 0:
        raise DegenerateError("long-run variance estimate is identically zero")
    hits = int(np.count_nonzero(field_values < floor))
    return np.maximum(field_values, floor), floor, hits


SigmaFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _sigma(series, lrv_params, sigma_fn: Optional[SigmaFn]):
    if sigma_fn is not None:
        return sigma_fn, None
    field = LrvField(series, lrv_params)
    return (lambda u, cols: np.sqrt(field.evaluate(u, cols))), field.params


def surface_constant(
    series: FunctionalSeries,
    b_n: float,
    d_n: float,
    m_n: int,
    alpha: float = 0.05,
    B: int = 1000,
    grid: Optional[EvalGrid] = None,
    seed: int = 0,
    workers: int = 1,
) -> ConfidenceSurface:
    """Constant-width simultaneous confidence surface m_hat(u, t) +/- r_1."""
    mp = _check_common(series, b_n, m_n, alpha, B)
    grid = grid if grid is not None else theory_grid(series, b_n)
    grid.check_interior(b_n)
    _, res = local_linear_fit(series, d_n)
    check_residuals(res.values, series.values)
    T = bootstrap_statistic(res.values, b_n, mp, B, seed, workers)
    tq = bootstrap_quantile(T, alpha).value
    if not tq > 0:
        raise DegenerateError("bootstrap quantile is zero")
    r1 = tq * radius_scale(series.n, b_n, mp)
    center = nw_estimate(series, b_n, grid)
    rec = TuningRecord(b_n=b_n, d_n=d_n, m_n=int(m_n), B=B, seed=seed, quantile_value=tq)
    return ConfidenceSurface(grid, center, r1, 1 - alpha, "constant", rec)


def surface_varying(
    series: FunctionalSeries,
    b_n: float,
    d_n: float,
    m_n: int,
    lrv_params: Optional[LrvParams] = None,
    alpha: float = 0.05,
    B: int = 1000,
    grid: Optional[EvalGrid] = None,
    seed: int = 0,
    workers: int = 1,
    sigma_fn: Optional[SigmaFn] = None,
) -> ConfidenceSurface:
    """Varying-width surface m_hat(u, t) +/- sigma_hat(u, t) r.

    Residuals are divided by sigma_hat(i/n, t_k) before the bootstrap.
    ``sigma_fn(u, columns)`` replaces the long-run variance estimate (for
    testing against a known sigma).
    """
    mp = _check_common(series, b_n, m_n, alpha, B)
    grid = grid if grid is not None else theory_grid(series, b_n)
    grid.check_interior(b_n)
    _, res = local_linear_fit(series, d_n)
    check_residuals(res.values, series.values)

    sig, params = _sigma(series, lrv_params, sigma_fn)
    cols_all = np.arange(series.p)
    u = series.u_design
    s_design = sig(u, cols_all)
    inner = (u >= b_n) & (u <= 1 - b_n)
    s_design, floor, hits = normalising_sigma(s_design, s_design[inner] if inner.any() else s_design)

    T = bootstrap_statistic(res.values / s_design, b_n, mp, B, seed, workers)
    tq = bootstrap_quantile(T, alpha).value
    if not tq > 0:
        raise DegenerateError("bootstrap quantile is zero")
    s_grid = np.maximum(sig(grid.u_values, grid.column_indices(series)), floor)
    radius = s_grid * (tq * radius_scale(series.n, b_n, mp))
    center = nw_estimate(series, b_n, grid)
    rec = TuningRecord(
        b_n=b_n,
        d_n=d_n,
        m_n=int(m_n),
        w=params.w if params else None,
        tau=params.tau if params else None,
        B=B,
        seed=seed,
        quantile_value=tq,
        floor_hits=hits,
    )
    return ConfidenceSurface(grid, center, radius, 1 - alpha, "varying", rec)


def rearranged_max_deviation(residuals: np.ndarray, b_n: float) -> float:
    """| (n b_n)^{-1/2} sum_{j=1}^{2c-1} Z_tilde_j |_inf using the rearranged (dense) vectors.

    Block k of Z_tilde_j is A(j) eps_{j+k-1}, k = 1..n-2c+1.
    """
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    n = e.shape[0]
    a = kernel_weights(n, b_n)
    win = sliding_window_view(e, a.size, axis=0)[: n - a.size]  # (n-2c+1, p, 2c-1)
    return float(np.max(np.abs(win @ a)) / math.sqrt(n * b_n))
