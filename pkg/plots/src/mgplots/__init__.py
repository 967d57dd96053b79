"""Figure rendering for solver sweep CSVs."""

from .plot import MissingColumn, PlotSpec, SchemaMismatch, read_sweep, render

__all__ = ["MissingColumn", "PlotSpec", "SchemaMismatch", "read_sweep", "render"]
