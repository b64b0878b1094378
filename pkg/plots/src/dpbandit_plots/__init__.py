"""Figure rendering for dpbandit experiment CSVs."""

from .render import (
    MissingSeries,
    PlotError,
    PlotSpec,
    Row,
    SchemaMismatch,
    load_rows,
    render,
    series_points,
)

__version__ = "0.1.0"
