"""Simulation models (a)-(d) and the Monte-Carlo coverage harness."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional

import numpy as np

from .bands import band_fixed_t, band_fixed_u
from .bootstrap import replicate_rng, surface_constant, surface_varying
from .core import EvalGrid, FunctionalSeries, ParameterError, covers, interior_design_points
from .tuning import auto_tune

TRUNCATION = 60
T_DOF = 8


def mean_m1(u, t):
    u, t = np.asarray(u, dtype=float), np.asarray(t, dtype=float)
    return (1 + u) * (6 * (t - 0.5) ** 2 + 1)


def mean_m2(u, t):
    u, t = np.asarray(u, dtype=float), np.asarray(t, dtype=float)
    return (1 + u**2) * (6 * (t - 0.5) ** 2 * (1 + (t > 0.3)) + 1)


def coef_a(u):
    return 0.5 * np.cos(np.pi * np.asarray(u, dtype=float) / 3)


def coef_b(u):
    return 0.4 * np.asarray(u, dtype=float)


def coef_c(u):
    return 0.3 * np.asarray(u, dtype=float) ** 2


def d1(t):
    return 1 + 0.5 * np.sin(np.pi * np.asarray(t, dtype=float))


def d21(t):
    return 2 * np.asarray(t, dtype=float) - 1


def d22(t):
    t = np.asarray(t, dtype=float)
    return 6 * t**2 - 6 * t + 1


def _ma_filter(psi: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    """G_i = sum_j psi[i, j] e_{i-j}; innovations carry J pre-sample values first."""
    n, J1 = psi.shape
    e = np.asarray(innovations, dtype=float)
    if e.size != n + J1 - 1:
        raise ParameterError(f"need {n + J1 - 1} innovations (n + J), got {e.size}")
    lagged = np.lib.stride_tricks.sliding_window_view(e, J1)[:, ::-1]  # row i: e_i, e_{i-1}, ..., e_{i-J}
    return (psi * lagged).sum(axis=1)


def gen_g1(u_path, innovations, J: int = TRUNCATION) -> np.ndarray:
    """Locally stationary AR(1): G1(u_i) = sum_{j<=J} a(u_i)^j eps_{i-j}."""
    a = coef_a(u_path)
    psi = a[:, None] ** np.arange(J + 1)[None, :]
    return _ma_filter(psi, innovations)


def gen_g2(u_path, innovations, J: int = TRUNCATION) -> np.ndarray:
    """Locally stationary ARMA(1,1): psi_0 = 1, psi_j = b^(j-1) (b - c)."""
    b, c = coef_b(u_path), coef_c(u_path)
    j = np.arange(1, J + 1)
    psi = np.empty((b.size, J + 1))
    psi[:, 0] = 1.0
    psi[:, 1:] = b[:, None] ** (j - 1)[None, :] * (b - c)[:, None]
    return _ma_filter(psi, innovations)


Model = Literal["a", "b", "c", "d"]


@dataclass(frozen=True)
class ModelSpec:
    model: Model = "a"
    n: int = 500
    p: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("a", "b", "c", "d"):
            raise ParameterError(f"unknown model {self.model!r}")
        if self.n < 50:
            raise ParameterError("models need n >= 50")
        if self.p is None:
            object.__setattr__(self, "p", math.ceil(math.sqrt(self.n)))
        if self.p < 2:
            raise ParameterError("models need p >= 2")

    @property
    def mean(self) -> Callable:
        return mean_m1 if self.model in ("a", "b") else mean_m2


def true_mean(spec: ModelSpec, u, t) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    return spec.mean(u[:, None], t[None, :])


def simulate_model(spec: ModelSpec, rng: Optional[np.random.Generator] = None, zero_noise: bool = False) -> FunctionalSeries:
    """X_i(t_k) on the n x p grid; the two filtrations use independent innovations."""
    rng = rng if rng is not None else replicate_rng(spec.seed, 0)
    n, p = spec.n, spec.p
    u = np.arange(1, n + 1) / n
    t = np.arange(1, p + 1) / p
    eps = rng.standard_normal(n + TRUNCATION)
    eta = rng.standard_t(T_DOF, size=n + TRUNCATION)
    if zero_noise:
        eps[:] = 0.0
        eta[:] = 0.0
    g1 = gen_g1(u, eps)
    X = true_mean(spec, u, t)
    if spec.model in ("a", "c"):
        X = X + g1[:, None] * d1(t)[None, :] / 3
    else:
        g2 = gen_g2(u, eta)
        X = X + g1[:, None] * d21(t)[None, :] / 2 + g2[:, None] * d22(t)[None, :] / 2
    return FunctionalSeries(X)


# --- coverage -----------------------------------------------------------------

Kind = Literal["surface", "band_t", "band_u"]


@dataclass(frozen=True)
class PipelineConfig:
    kind: Kind = "surface"
    mode: Literal["constant", "varying"] = "constant"
    alpha: float = 0.05
    B: int = 500
    fixed: Optional[float] = None  # t for band_t, u* for band_u
    b_n: Optional[float] = None
    d_n: Optional[float] = None
    m_n: Optional[int] = None


@dataclass
class RunResult:
    run: int
    hit: bool
    b_n: float = float("nan")
    d_n: float = float("nan")
    m_n: int = 0
    quantile_value: float = float("nan")
    excess: float = float("nan")  # max over cells of distance outside the envelope (<= 0 on a hit)


@dataclass
class CoverageReport:
    runs: int
    hits: int
    results: list = field(default_factory=list)

    @property
    def coverage(self) -> float:
        return self.hits / self.runs

    @property
    def se(self) -> float:
        c = self.coverage
        return math.sqrt(c * (1 - c) / self.runs)


# A builder maps (series, spec, config, seed) to (lower, upper, truth, RunResult fields).
Builder = Callable[[FunctionalSeries, ModelSpec, PipelineConfig, int], tuple]


def default_builder(series: FunctionalSeries, spec: ModelSpec, cfg: PipelineConfig, seed: int):
    rec = auto_tune(series, cfg.kind, cfg.fixed, b_n=cfg.b_n, d_n=cfg.d_n, m_n=cfg.m_n)
    meta = dict(b_n=rec.b_n, d_n=rec.d_n, m_n=rec.m_n)
    if cfg.kind == "surface":
        grid = EvalGrid(interior_design_points(series.n, rec.b_n), series.t_grid)
        build = surface_constant if cfg.mode == "constant" else surface_varying
        if cfg.mode == "constant":
            obj = build(series, rec.b_n, rec.d_n, rec.m_n, cfg.alpha, cfg.B, grid, seed)
        else:
            obj = build(series, rec.b_n, rec.d_n, rec.m_n, None, cfg.alpha, cfg.B, grid, seed)
        truth = true_mean(spec, grid.u_values, grid.t_values)
    elif cfg.kind == "band_t":
        k = series.t_index(cfg.fixed)
        obj = band_fixed_t(series, k, rec.b_n, rec.d_n, rec.m_n, cfg.alpha, cfg.B, cfg.mode, seed)
        truth = spec.mean(obj.grid, series.t_grid[k])
    elif cfg.kind == "band_u":
        obj = band_fixed_u(series, cfg.fixed, rec.b_n, rec.d_n, rec.m_n, cfg.alpha, cfg.B, cfg.mode, seed)
        truth = spec.mean(cfg.fixed, obj.grid)
    else:
        raise ParameterError(f"unknown pipeline kind {cfg.kind!r}")
    meta["quantile_value"] = obj.tuning.quantile_value
    return obj.lower, obj.upper, truth, meta


def run_once(spec: ModelSpec, cfg: PipelineConfig, seed: int, run: int, builder: Optional[Builder] = None) -> RunResult:
    builder = builder or default_builder
    rng = replicate_rng(seed, 1, run)
    series = simulate_model(replace(spec, seed=seed), rng)
    boot_seed = int(replicate_rng(seed, 2, run).integers(2**63 - 1))
    try:
        lower, upper, truth, meta = builder(series, spec, cfg, boot_seed)
    except Exception as exc:
        raise RuntimeError(f"coverage run {run} failed: {exc}") from exc
    lower, upper, truth = (np.asarray(x, dtype=float) for x in (lower, upper, truth))
    with np.errstate(invalid="ignore"):
        excess = float(np.nanmax(np.maximum(lower - truth, truth - upper)))
    return RunResult(run=run, hit=covers(lower, upper, truth), excess=excess, **meta)


def _run_star(args):
    return run_once(*args)


def coverage_experiment(
    spec: ModelSpec,
    cfg: PipelineConfig,
    runs: int,
    seed: int = 0,
    workers: int = 1,
    builder: Optional[Builder] = None,
    progress: Optional[Callable[[RunResult], None]] = None,
) -> CoverageReport:
    """Fraction of runs whose envelope contains the true mean at every grid cell.

    Run r uses streams derived from (seed, r) only, so the report does not
    depend on ``workers``.
    """
    if runs < 20:
        raise ParameterError(f"coverage needs at least 20 runs, got {runs}")
    args = [(spec, cfg, seed, r, builder) for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_star, args))
    else:
        results = []
        for a in args:
            results.append(_run_star(a))
            if progress:
                progress(results[-1])
    return CoverageReport(runs=runs, hits=sum(r.hit for r in results), results=results)
