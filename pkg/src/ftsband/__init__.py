"""Simultaneous confidence surfaces and bands for the mean of a locally stationary functional time series."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    ConfidenceBand,
    ConfidenceSurface,
    EvalGrid,
    FunctionalSeries,
    TuningRecord,
    load_csv,
    save_surface_csv,
)
from .bands import band_fixed_t, band_fixed_u  # noqa: F401
from .bootstrap import surface_constant, surface_varying  # noqa: F401
from .tuning import auto_tune  # noqa: F401
