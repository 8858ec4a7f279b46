import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftsband.bootstrap import (
    BlockSumAccessor,
    bootstrap_quantile,
    draw_many,
    draw_T,
    kernel_weights,
    multiplier_matrix,
    radius_scale,
    rearranged_max_deviation,
    replicate_rng,
    surface_constant,
    surface_varying,
)
from ftsband.core import DegenerateError, FunctionalSeries, ParameterError
from ftsband.simgen import gen_g1


def K(x):
    return (45 - 150 * x * x + 105 * x**4) / 32 if abs(x) < 1 else 0.0


def test_kernel_weights_small():
    a = kernel_weights(100, 0.05)
    assert a.size == 9
    assert a[4] == 1.40625
    for r in range(1, 10):
        assert a[r - 1] == pytest.approx(K((r - 5) / 5.0), abs=1e-15)


def test_kernel_weights_degenerate_window():
    a = kernel_weights(100, 0.005)
    assert a.size == 1 and a[0] == 1.40625
    with pytest.raises(ParameterError):
        kernel_weights(100, 0.05, m_prime=10)


def _brute_block(E, A, j, k, s, m):
    h = m // 2
    tot = 0.0
    for r in range(j, j + m):
        sign = 1.0 if r < j + h else -1.0
        tot += sign * A[r - 1] * E[r + k - 2, s - 1]
    return tot / math.sqrt(m)


def test_block_zero_and_ones():
    acc0 = BlockSumAccessor(np.zeros((60, 2)), 0.1, 4)
    assert np.all(acc0.blocks() == 0)
    acc = BlockSumAccessor(np.ones((60, 2)), 0.1, 4)
    A = acc.A
    for j in (1, 3, acc.n_j):
        want = (A[j - 1] + A[j] - A[j + 1] - A[j + 2]) / 2.0
        assert acc.block(j, 1, 1) == pytest.approx(want, abs=1e-14)


def test_block_smallest_window():
    rng = np.random.default_rng(0)
    E = rng.standard_normal((40, 2))
    acc = BlockSumAccessor(E, 0.1, 2)
    A = acc.A
    for j, k, s in [(1, 1, 1), (3, 5, 2), (acc.n_j, acc.n_k, 1)]:
        want = (A[j - 1] * E[j + k - 2, s - 1] - A[j] * E[j + k - 1, s - 1]) / math.sqrt(2)
        assert acc.block(j, k, s) == pytest.approx(want, abs=1e-14)


def test_vectorised_blocks_match_brute_force():
    rng = np.random.default_rng(1)
    E = rng.standard_normal((50, 3))
    acc = BlockSumAccessor(E, 0.13, 6)
    blk = acc.blocks()
    for k in range(1, acc.n_k + 1, 4):
        for s in range(1, 4):
            for j in range(1, acc.n_j + 1):
                assert blk[k - 1, s - 1, j - 1] == pytest.approx(_brute_block(E, acc.A, j, k, s, 6), abs=1e-12)


def test_last_row_never_touched():
    E = np.zeros((50, 2))
    E[-1] = 1e6
    acc = BlockSumAccessor(E, 0.1, 4)
    assert np.all(acc.blocks() == 0)


def test_draw_zero_multipliers():
    rng = np.random.default_rng(2)
    acc = BlockSumAccessor(rng.standard_normal((40, 2)), 0.1, 4)
    assert draw_T(acc, np.zeros(acc.multiplier_length)) == 0.0
    with pytest.raises(ValueError):
        draw_T(acc, np.zeros(acc.multiplier_length + 1))


def test_draw_single_k_oracle():
    rng = np.random.default_rng(3)
    E = rng.standard_normal((38, 1))
    acc1 = BlockSumAccessor(E, 0.5, 6)  # 2 ceil(n b) = n, so there is a single k
    assert acc1.n_k == 1
    R = rng.standard_normal(acc1.multiplier_length)
    want = abs(sum(_brute_block(E, acc1.A, j, 1, 1, 6) * R[j - 1] for j in range(1, acc1.n_j + 1)))
    assert draw_T(acc1, R) == pytest.approx(want, abs=1e-12)


def test_draw_shared_multiplier_oracle():
    rng = np.random.default_rng(4)
    E = rng.standard_normal((45, 2))
    acc = BlockSumAccessor(E, 0.1, 4)
    R = rng.standard_normal(acc.multiplier_length)
    best = 0.0
    for k in range(1, acc.n_k + 1):
        for s in range(1, 3):
            t = sum(_brute_block(E, acc.A, j, k, s, 4) * R[k + j - 2] for j in range(1, acc.n_j + 1))
            best = max(best, abs(t))
    assert draw_T(acc, R) == pytest.approx(best, abs=1e-12)


def test_conditional_variance_mc():
    rng = np.random.default_rng(5)
    E = rng.standard_normal((24, 2))
    acc = BlockSumAccessor(E, 0.15, 2)
    blk = acc.blocks()  # (n_k, p, n_j)
    R = rng.standard_normal((20_000, acc.multiplier_length))
    k, s = 2, 1
    idx = np.arange(acc.n_j) + k
    T = R[:, idx] @ blk[k, s]
    want = float((blk[k, s] ** 2).sum())
    assert abs(T.var() - want) < 0.05 * want


def test_quantile_examples():
    q = bootstrap_quantile(np.arange(100, 0, -1), 0.05)
    assert q.index == 95 and q.value == 95
    assert bootstrap_quantile(np.full(50, 3.3), 0.2).value == 3.3
    assert bootstrap_quantile(np.arange(10.0), 0.1).index == 9
    assert bootstrap_quantile(np.arange(10.0), 0.99).index == 1  # floor(0.1) = 0, clamped


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(10, 400), st.floats(0.01, 0.5))
def test_quantile_sort_oracle(seed, B, alpha):
    d = np.random.default_rng(seed).standard_normal(B)
    ref = sorted(d.tolist())[max(1, math.floor((1 - alpha) * B + 1e-9)) - 1]
    assert bootstrap_quantile(d, alpha).value == ref


def test_sign_symmetry_and_scale():
    rng = np.random.default_rng(6)
    E = rng.standard_normal((80, 3))
    R = rng.standard_normal((20, 80 - 6))
    acc = BlockSumAccessor(E, 0.1, 6)
    base = draw_many(acc, R)
    assert np.array_equal(draw_many(acc, -R), base)
    scaled = draw_many(BlockSumAccessor(4.0 * E, 0.1, 6), R)
    assert np.allclose(scaled, 4.0 * base, rtol=1e-13, atol=0)


def test_workers_bit_identical():
    rng = np.random.default_rng(7)
    E = rng.standard_normal((300, 5))
    acc = BlockSumAccessor(E, 0.1, 8)
    R = multiplier_matrix(11, 200, acc.multiplier_length)
    a = draw_many(acc, R, workers=1)
    b = draw_many(acc, R, workers=8)
    assert a.tobytes() == b.tobytes()


def test_streams_are_keyed():
    a = replicate_rng(3, 0, 5).standard_normal(4)
    replicate_rng(3, 0, 4).standard_normal(100)
    assert np.array_equal(a, replicate_rng(3, 0, 5).standard_normal(4))
    assert not np.array_equal(a, replicate_rng(3, 0, 6).standard_normal(4))
    M = multiplier_matrix(3, 6, 4)
    assert np.array_equal(M[5], a)


def _ar_series(n=300, p=4, seed=0):
    rng = replicate_rng(seed, 9)
    u = np.arange(1, n + 1) / n
    g = gen_g1(u, rng.standard_normal(n + 60))
    t = np.arange(1, p + 1) / p
    return FunctionalSeries(np.sin(2 * np.pi * u)[:, None] + g[:, None] * (1 + t)[None, :] / 3
                            + 0.2 * rng.standard_normal((n, p)))


def test_surface_constant_shape_and_determinism():
    s = _ar_series()
    a = surface_constant(s, 0.12, 0.1, 8, B=100, seed=3)
    b = surface_constant(s, 0.12, 0.1, 8, B=100, seed=3)
    assert a.center.tobytes() == b.center.tobytes() and a.radius == b.radius
    assert a.grid.u_values[0] >= 0.12 and a.grid.u_values[-1] <= 0.88
    assert a.radius == pytest.approx(a.tuning.quantile_value * radius_scale(300, 0.12, 8), rel=1e-15)
    c = surface_constant(s, 0.12, 0.1, 8, B=100, seed=4)
    assert c.radius != a.radius


def test_surface_radius_equivariance():
    s = _ar_series()
    a = surface_constant(s, 0.12, 0.1, 8, B=100, seed=3)
    b = surface_constant(FunctionalSeries(2.0 * s.values), 0.12, 0.1, 8, B=100, seed=3)
    assert b.radius == pytest.approx(2.0 * a.radius, rel=1e-12)


def test_zero_residuals_raise():
    n = 200
    u = np.arange(1, n + 1) / n
    s = FunctionalSeries(np.column_stack([1 + u, 2 - u]))
    with pytest.raises(DegenerateError):
        surface_constant(s, 0.12, 0.1, 8, B=50)
    with pytest.raises(DegenerateError):
        surface_varying(s, 0.12, 0.1, 8, B=50)


def test_window_too_long():
    with pytest.raises(ParameterError):
        surface_constant(_ar_series(), 0.05, 0.1, 30, B=50)


def test_sigma_hook_gives_proportional_radius():
    s = _ar_series()

    def sigma(u, cols):
        u = np.asarray(u, dtype=float)
        return (1 + u)[:, None] * (1 + np.asarray(cols))[None, :] / 2.0

    surf = surface_varying(s, 0.12, 0.1, 8, B=100, seed=1, sigma_fn=sigma)
    ratio = surf.radius / sigma(surf.grid.u_values, np.arange(s.p))
    assert np.ptp(ratio) <= 1e-12 * ratio.max()


def test_varying_radius_nearly_constant_homoscedastic():
    n = 2000
    rng = replicate_rng(21, 0)
    e = np.empty(n + 200)
    e[0] = 0.0
    z = rng.standard_normal(n + 200)
    for i in range(1, n + 200):
        e[i] = 0.5 * e[i - 1] + z[i]
    X = e[200:, None] * np.ones((1, 3))
    surf = surface_varying(FunctionalSeries(X), 0.1, 0.08, 10, B=50, seed=2)
    spread = (surf.radius.max() - surf.radius.min()) / surf.radius.mean()
    assert spread < 0.25


def test_rearranged_max_matches_sparse_definition():
    rng = np.random.default_rng(8)
    n, b = 30, 0.1
    E = rng.standard_normal((n, 2))
    c = math.ceil(n * b)
    best = 0.0
    for l in range(c, n - c + 1):
        for k in range(2):
            tot = sum(E[i - 1, k] * K((i - l) / (n * b)) for i in range(1, n + 1))
            best = max(best, abs(tot) / math.sqrt(n * b))
    assert rearranged_max_deviation(E, b) == pytest.approx(best, abs=1e-12)
