"""Data model: functional series, evaluation grids, confidence outputs, CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np

WidthMode = Literal["constant", "varying"]

GRID_TOL = 1e-9
_INTERIOR_TOL = 1e-12


class FtsError(Exception):
    """Base class for all library errors."""


class ParameterError(FtsError, ValueError):
    pass


class DataError(FtsError, ValueError):
    pass


class ParseError(DataError):
    pass


class GridError(DataError):
    pass


class NumericalError(FtsError, ArithmeticError):
    pass


class BandwidthTooSmallError(NumericalError):
    pass


class DegenerateError(NumericalError):
    """Raised when a confidence object would have zero width."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FunctionalSeries:
    """n observations of a curve on the uniform grid t_k = a + (b - a) k / p, k = 1..p."""

    values: np.ndarray
    space_domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"values must be a non-empty n x p matrix, got shape {v.shape}")
        bad = np.argwhere(~np.isfinite(v))
        if len(bad):
            i, k = bad[0]
            raise DataError(f"non-finite value at row {i + 1}, column {k + 1}")
        a, b = (float(x) for x in self.space_domain)
        if not b > a:
            raise ParameterError(f"space domain must satisfy a < b, got [{a}, {b}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "space_domain", (a, b))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def t_grid(self) -> np.ndarray:
        a, b = self.space_domain
        return a + (b - a) * np.arange(1, self.p + 1) / self.p

    @property
    def u_design(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def column(self, k: int) -> "FunctionalSeries":
        """The single-column series X_i(t_k) (0-based k)."""
        if not 0 <= k < self.p:
            raise ParameterError(f"column index {k} outside [0, {self.p - 1}]")
        return FunctionalSeries(self.values[:, k : k + 1], self.space_domain)

    def t_index(self, t: float) -> int:
        """Column index of the grid point nearest to t."""
        return int(np.argmin(np.abs(self.t_grid - t)))

    def to_unit(self, t):
        a, b = self.space_domain
        return (np.asarray(t, dtype=float) - a) / (b - a)


@dataclass(frozen=True)
class EvalGrid:
    """Points (u, t) at which a surface is evaluated; t values must lie on the series grid."""

    u_values: np.ndarray
    t_values: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u_values, dtype=float))
        t = np.atleast_1d(np.asarray(self.t_values, dtype=float))
        if u.size == 0 or t.size == 0:
            raise ParameterError("evaluation grid must be non-empty")
        if np.any(np.diff(u) < 0) or np.any(np.diff(t) < 0):
            raise ParameterError("grid values must be sorted")
        object.__setattr__(self, "u_values", _frozen(u))
        object.__setattr__(self, "t_values", _frozen(t))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u_values.size, self.t_values.size)

    def column_indices(self, series: FunctionalSeries) -> np.ndarray:
        tg = series.t_grid
        idx = np.searchsorted(tg, self.t_values)
        out = np.empty(self.t_values.size, dtype=int)
        for q, (t, i) in enumerate(zip(self.t_values, idx)):
            cands = [c for c in (i - 1, i) if 0 <= c < tg.size]
            best = min(cands, key=lambda c: abs(tg[c] - t))
            if abs(tg[best] - t) > GRID_TOL * max(1.0, abs(t)):
                raise GridError(f"t = {t!r} is not a point of the series grid")
            out[q] = best
        return out

    def check_interior(self, b_n: float) -> None:
        lo, hi = b_n - _INTERIOR_TOL, 1.0 - b_n + _INTERIOR_TOL
        if self.u_values[0] < lo or self.u_values[-1] > hi:
            raise ParameterError(
                f"u values must lie in [{b_n}, {1 - b_n}], got [{self.u_values[0]}, {self.u_values[-1]}]"
            )


def ceil_tol(x: float) -> int:
    """ceil that ignores floating-point excess below 1e-9 (500 * 0.12 -> 60)."""
    return int(math.ceil(x - 1e-9))


def floor_tol(x: float) -> int:
    return int(math.floor(x + 1e-9))


def interior_interval(n: int, b_n: float) -> tuple[float, float]:
    if not 0 < b_n < 0.5:
        raise ParameterError(f"bandwidth must lie in (0, 1/2), got {b_n}")
    return (b_n, 1.0 - b_n)


def interior_design_points(n: int, b_n: float) -> np.ndarray:
    """The design points l/n that fall inside [b_n, 1 - b_n]."""
    lo, hi = interior_interval(n, b_n)
    u = np.arange(1, n + 1) / n
    return u[(u >= lo - _INTERIOR_TOL) & (u <= hi + _INTERIOR_TOL)]


def theory_grid(series: FunctionalSeries, b_n: float) -> EvalGrid:
    """Default grid {l/n} x {t_k} restricted to the interior in u."""
    u = interior_design_points(series.n, b_n)
    if u.size == 0:
        raise ParameterError("no design point inside the interior interval")
    return EvalGrid(u, series.t_grid)


@dataclass
class TuningRecord:
    b_n: float
    d_n: float
    m_n: int
    w: Optional[int] = None
    tau: Optional[float] = None
    B: Optional[int] = None
    seed: Optional[int] = None
    quantile_value: Optional[float] = None
    sources: dict = field(default_factory=dict)
    floor_hits: int = 0

    @property
    def m_prime(self) -> int:
        return 2 * (self.m_n // 2)

    def validate(self, n: int) -> None:
        if not 0 < self.b_n < 0.5:
            raise ParameterError(f"b_n must lie in (0, 1/2), got {self.b_n}")
        c = ceil_tol(n * self.b_n)
        if not 2 <= self.m_prime < 2 * c:
            raise ParameterError(
                f"window m' = {self.m_prime} must satisfy 2 <= m' < 2*ceil(n b_n) = {2 * c}"
            )
        if self.w is not None and self.w < 2:
            raise ParameterError("LRV block length w must be >= 2")
        if self.tau is not None and not 0 < self.tau < 1:
            raise ParameterError("LRV bandwidth tau must lie in (0, 1)")


def _check_envelope(center, radius):
    if np.any(~np.isfinite(radius)) or np.any(radius <= 0):
        raise DegenerateError("confidence radius must be finite and strictly positive")


@dataclass(frozen=True)
class ConfidenceSurface:
    grid: EvalGrid
    center: np.ndarray
    radius: Union[float, np.ndarray]
    level: float
    width_mode: WidthMode
    tuning: Optional[TuningRecord] = None

    def __post_init__(self):
        c = _frozen(self.center)
        if c.shape != self.grid.shape:
            raise ParameterError(f"center shape {c.shape} does not match grid {self.grid.shape}")
        r = self.radius
        if np.ndim(r) == 0:
            r = float(r)
        else:
            r = _frozen(r)
            if r.shape != c.shape:
                raise ParameterError("radius field must match the grid shape")
        _check_envelope(c, np.asarray(r))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    def contains(self, truth: np.ndarray) -> bool:
        return covers(self.lower, self.upper, truth)


@dataclass(frozen=True)
class ConfidenceBand:
    axis: Literal["u", "t"]  # which argument is held fixed
    fixed_value: float
    grid: np.ndarray
    center: np.ndarray
    radius: Union[float, np.ndarray]
    level: float
    width_mode: WidthMode
    tuning: Optional[TuningRecord] = None

    def __post_init__(self):
        g = _frozen(self.grid)
        c = _frozen(self.center)
        if c.shape != g.shape:
            raise ParameterError("center must have one value per grid point")
        r = self.radius
        r = float(r) if np.ndim(r) == 0 else _frozen(r)
        _check_envelope(c, np.asarray(r))
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    def contains(self, truth: np.ndarray) -> bool:
        return covers(self.lower, self.upper, truth)


def covers(lower, upper, truth) -> bool:
    """True iff lower <= truth <= upper in every cell."""
    truth = np.asarray(truth, dtype=float)
    return bool(np.all((lower <= truth) & (truth <= upper)))


# --- CSV ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    # repr is the shortest decimal string that round-trips to the same double
    return repr(float(x))


def _parse_row(row, lineno):
    try:
        return [float(c) for c in row]
    except ValueError as exc:
        raise ParseError(f"line {lineno}: {exc}") from None


def load_csv(path, space_domain: tuple[float, float] = (0.0, 1.0), header: Optional[bool] = None) -> FunctionalSeries:
    """Read an n x p matrix of observations.

    ``header=None`` auto-detects a leading row of t values: a first row that is
    strictly increasing inside (a, b] and ends at b is taken as a header and
    must then match the uniform grid t_k = a + (b - a) k / p to within 1e-9.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    width = len(rows[0][1])
    for lineno, r in rows:
        if len(r) != width:
            raise ParseError(f"line {lineno}: expected {width} fields, got {len(r)}")

    first_line, first = rows[0]
    head_vals = _parse_row(first, first_line)
    if header is None:
        header = len(rows) > 1 and _looks_like_header(head_vals, space_domain)
    body = rows
    if header:
        a, b = space_domain
        grid = a + (b - a) * np.arange(1, width + 1) / width
        if not np.allclose(head_vals, grid, rtol=0, atol=GRID_TOL):
            raise GridError(f"header t values {head_vals} do not match the uniform grid {grid.tolist()}")
        body = rows[1:]

    data = []
    for lineno, r in body:
        vals = _parse_row(r, lineno)
        for k, v in enumerate(vals):
            if not math.isfinite(v):
                raise DataError(f"line {lineno}, column {k + 1}: non-finite value {r[k].strip()!r}")
        data.append(vals)
    if not data:
        raise ParseError(f"{path}: no data rows")
    return FunctionalSeries(np.array(data), space_domain)


def _looks_like_header(vals, space_domain) -> bool:
    a, b = space_domain
    v = np.asarray(vals)
    if not np.all(np.isfinite(v)):
        return False
    inside = np.all((v > a - GRID_TOL) & (v <= b + GRID_TOL))
    increasing = v.size == 1 or np.all(np.diff(v) > 0)
    ends_at_b = v.size >= 1 and abs(v[-1] - b) <= GRID_TOL
    return bool(inside and increasing and ends_at_b and v[0] > a + GRID_TOL)


def save_series_csv(series: FunctionalSeries, path, header: bool = True) -> None:
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(",".join(_fmt(t) for t in series.t_grid) + "\n")
        for row in series.values:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def save_surface_csv(surface: ConfidenceSurface, path) -> None:
    """Long format: one row per (u, t) cell in row-major grid order."""
    lo, hi = surface.lower, surface.upper
    with Path(path).open("w", newline="") as fh:
        fh.write("u,t,center,lower,upper\n")
        for a, u in enumerate(surface.grid.u_values):
            for b, t in enumerate(surface.grid.t_values):
                fh.write(
                    f"{_fmt(u)},{_fmt(t)},{_fmt(surface.center[a, b])},{_fmt(lo[a, b])},{_fmt(hi[a, b])}\n"
                )


def load_surface_csv(path) -> dict:
    """Read a surface CSV back into grid-shaped arrays (u, t, center, lower, upper)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        if [h.strip() for h in head] != ["u", "t", "center", "lower", "upper"]:
            raise ParseError(f"unexpected surface header {head}")
        rows = [_parse_row(r, i + 2) for i, r in enumerate(reader) if r]
    arr = np.array(rows)
    u = np.unique(arr[:, 0])
    t = np.unique(arr[:, 1])
    if arr.shape[0] != u.size * t.size:
        raise ParseError("surface rows do not form a full grid")
    shape = (u.size, t.size)
    return {
        "u": u,
        "t": t,
        "center": arr[:, 2].reshape(shape),
        "lower": arr[:, 3].reshape(shape),
        "upper": arr[:, 4].reshape(shape),
    }


def save_band_csv(band: ConfidenceBand, path) -> None:
    arg = "t" if band.axis == "u" else "u"
    lo, hi = band.lower, band.upper
    with Path(path).open("w", newline="") as fh:
        fh.write(f"{arg},center,lower,upper\n")
        for g, c, l, h in zip(band.grid, band.center, lo, hi):
            fh.write(f"{_fmt(g)},{_fmt(c)},{_fmt(l)},{_fmt(h)}\n")
