import math

import numpy as np
import pytest

from ftsband.bootstrap import replicate_rng
from ftsband.core import FunctionalSeries, NumericalError, ParameterError
from ftsband.simgen import ModelSpec, simulate_model
from ftsband.smoothing import local_linear_fit, local_linear_hat
from ftsband.tuning import (
    BandwidthGrid,
    WindowGrid,
    auto_tune,
    default_bandwidth_grid,
    default_window_grid,
    mgcv_bandwidth,
    mgcv_bandwidth_local,
    mgcv_curve,
    mgcv_local_curve,
    minimal_volatility_window,
    minimal_volatility_window_local,
    mv_curve,
    surface_diamond,
    surface_bandwidth,
)


def _series(n=300, p=4, seed=0, model="a"):
    return simulate_model(ModelSpec(model, n, p), replicate_rng(seed, 1))


GRID = BandwidthGrid(np.array([0.08, 0.1, 0.14, 0.2, 0.3]))


def test_affine_data_tie_breaks_to_smallest():
    n = 120
    u = np.arange(1, n + 1) / n
    s = FunctionalSeries(np.column_stack([1 + 2 * u, -u]))
    assert mgcv_bandwidth(s, GRID) == 0.08
    assert mgcv_bandwidth_local(s, 0.5, GRID) == 0.08


def test_single_candidate():
    s = _series()
    g = BandwidthGrid(np.array([0.15]))
    assert mgcv_bandwidth(s, g) == 0.15
    assert mgcv_bandwidth_local(s, 0.5, g) == 0.15


def test_all_candidates_inadmissible():
    s = _series(n=100)
    with pytest.raises(NumericalError):
        mgcv_bandwidth(s, BandwidthGrid(np.array([0.001, 0.005])))


def _wls_row(n, i, d):
    """Row i (1-based) of the local-linear hat matrix from an explicit 2x2 WLS solve."""
    x = np.arange(1, n + 1) / n - i / n
    w = np.array([0.75 * (1 - (v / d) ** 2) if abs(v / d) < 1 else 0.0 for v in x])
    D = np.column_stack([np.ones(n), x])
    M = np.linalg.solve(D.T @ (w[:, None] * D), D.T * w)
    return M[0]


def test_hat_trace_oracle():
    n, d = 40, 0.2
    q = local_linear_hat(n, d)
    tr = sum(_wls_row(n, i, d)[i - 1] for i in range(1, n + 1))
    assert float(np.trace(q)) == pytest.approx(tr, abs=1e-9)
    rows = np.arange(10, 30)
    ql = local_linear_hat(n, d, rows)
    assert np.allclose(ql, q[rows], atol=1e-15, rtol=0)


def test_mgcv_curve_oracle():
    n = 40
    rng = np.random.default_rng(3)
    X = rng.standard_normal((n, 2))
    s = FunctionalSeries(X)
    g = BandwidthGrid(np.array([0.15, 0.25]))
    _, crit = mgcv_curve(s, g)
    for c, d in zip(crit, g.values):
        Q = np.array([_wls_row(n, i, d) for i in range(1, n + 1)])
        rss = ((Q @ X - X) ** 2).sum(axis=0).max()
        assert c == pytest.approx(rss / (1 - np.trace(Q) / n) ** 2, rel=1e-9)


def test_mgcv_local_curve_oracle():
    n, u = 40, 0.5
    rng = np.random.default_rng(4)
    X = rng.standard_normal((n, 2))
    g = BandwidthGrid(np.array([0.15, 0.25]))
    _, crit = mgcv_local_curve(FunctionalSeries(X), u, g)
    for c, b in zip(crit, g.values):
        lo, hi = math.ceil(n * u - n * b - 1e-9), math.floor(n * u + n * b + 1e-9)
        Q = np.array([_wls_row(n, i, b) for i in range(lo, hi + 1)])
        rss = ((Q @ X - X[lo - 1 : hi]) ** 2).sum(axis=0).max()
        tr = sum(Q[q, i - 1] for q, i in enumerate(range(lo, hi + 1)))
        assert c == pytest.approx(rss / (1 - tr / (2 * n * b)) ** 2, rel=1e-9)


def test_trace_is_column_independent():
    n = 80
    q = local_linear_hat(n, 0.12)
    # fitting the unit vectors as columns recovers Q column by column; the
    # diagonal, hence the trace, cannot depend on which column is fitted
    fitted, _ = local_linear_fit(FunctionalSeries(np.eye(n)), 0.12)
    assert np.array_equal(fitted, q)
    assert np.trace(fitted) == np.trace(q)


def test_mgcv_scale_invariance():
    s = _series()
    _, a = mgcv_curve(s, GRID)
    _, b = mgcv_curve(FunctionalSeries(3.0 * s.values), GRID)
    assert np.allclose(b, 9.0 * a, rtol=1e-12)
    assert mgcv_bandwidth(s, GRID) == mgcv_bandwidth(FunctionalSeries(3.0 * s.values), GRID)


def test_surface_bandwidth():
    assert surface_bandwidth(0.1) == pytest.approx(0.12, abs=1e-15)
    assert surface_bandwidth(0.18) == pytest.approx(0.216, abs=1e-15)
    with pytest.raises(ParameterError):
        surface_bandwidth(0.45)


def test_default_grids():
    g = default_bandwidth_grid(500)
    assert g.values.size == 12
    assert g.values[0] == pytest.approx(500 ** -0.45) and g.values[-1] == pytest.approx(0.35)
    assert default_bandwidth_grid(100).values[0] == pytest.approx(max(0.04, 100 ** -0.45))
    w = default_window_grid(500, 0.12)  # ceil(n b) = 60
    assert list(w.values) == list(range(4, 31, 2))
    small = default_window_grid(100, 0.1)  # ceil(n b) = 10: half range too short
    assert list(small.values) == [4, 6, 8, 10, 12]
    with pytest.raises(ParameterError):  # only m' = 2, 4, 6, 8 are admissible
        default_window_grid(100, 0.05)
    assert default_window_grid(5000, 0.3).values.size == 20


def test_window_grid_validation():
    with pytest.raises(ParameterError):
        WindowGrid(np.array([4, 6, 8, 10]))
    with pytest.raises(ParameterError):
        WindowGrid(np.array([4, 6, 9, 10, 12]))


def _brute_diamond(E, b, m):
    n, p = E.shape
    c = math.ceil(n * b - 1e-9)
    L = 2 * c
    A = [(lambda x: (45 - 150 * x * x + 105 * x**4) / 32 if abs(x) < 1 else 0.0)((r - c) / (n * b)) for r in range(1, L)]
    h = m // 2
    out = []
    for k in range(1, n - L + 2):
        for s in range(p):
            tot = 0.0
            for j in range(1, L - m + 1):
                blk = 0.0
                for r in range(j, j + m):
                    sign = 1.0 if r < j + h else -1.0
                    blk += sign * A[r - 1] * E[r + k - 2, s]
                tot += (blk / math.sqrt(m)) ** 2
            out.append(tot / (L - m))
    return np.array(out)


def test_diamond_brute_force():
    rng = np.random.default_rng(6)
    E = rng.standard_normal((30, 2))
    d = surface_diamond(E, 0.2, [2, 4, 6])
    for q, m in enumerate([2, 4, 6]):
        assert np.allclose(d[q], _brute_diamond(E, 0.2, m), atol=1e-12, rtol=0)


def test_mv_curve_formula():
    rng = np.random.default_rng(7)
    D = rng.uniform(size=(7, 4))
    mv = mv_curve(D)
    assert mv.size == 3
    for q, k in enumerate(range(2, 5)):
        block = D[k - 2 : k + 3]
        se = np.sqrt(((block - block.mean(axis=0)) ** 2).sum(axis=0) / 4)
        assert mv[q] == pytest.approx(se.mean(), abs=1e-15)


def test_mv_range_contract():
    rng = np.random.default_rng(8)
    e = rng.standard_normal(300)
    s = FunctionalSeries(np.column_stack([e, e, e]))
    wg = WindowGrid(np.arange(4, 21, 2))
    m, mv = minimal_volatility_window(s, 0.1, 0.08, window_grid=wg, return_curve=True)
    assert np.all(np.isfinite(mv))
    assert m in wg.values[2:-2]
    assert m < 2 * math.ceil(300 * 0.1)


def test_mv_window_too_long_rejected():
    s = _series()
    with pytest.raises(ParameterError):
        minimal_volatility_window(s, 0.05, 0.05, window_grid=WindowGrid(np.arange(4, 40, 2)))


def test_mv_local_in_grid():
    s = _series()
    wg = WindowGrid(np.arange(4, 17, 2))
    m = minimal_volatility_window_local(s, 0.5, 0.12, 0.1, window_grid=wg)
    assert m in wg.values[2:-2]


def test_auto_tune_overrides_win():
    s = _series()
    rec = auto_tune(s, b_n=0.15, m_n=10)
    assert rec.b_n == 0.15 and rec.m_n == 10
    assert rec.sources["b_n"] == "override" and rec.sources["m_n"] == "override"
    assert rec.sources["d_n"] == "derived" and rec.d_n == pytest.approx(0.125)
    rec = auto_tune(s, d_n=0.1, m_n=12)
    assert rec.b_n == pytest.approx(0.12) and rec.sources["b_n"] == "1.2*d_n"


def test_auto_tune_selection_paths():
    s = _series()
    rec = auto_tune(s)
    assert rec.sources["d_n"] == "mgcv" and rec.sources["m_n"] == "minimal-volatility"
    assert rec.b_n == pytest.approx(1.2 * rec.d_n)
    rec.validate(s.n)
    rec_u = auto_tune(s, "band_u", 0.5)
    assert rec_u.sources["d_n"] == "mgcv-local"
    rec_t = auto_tune(s, "band_t", 0.5)
    assert rec_t.sources["d_n"] == "mgcv"
