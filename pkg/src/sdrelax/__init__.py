"""Relaxation toolkit for bulk-surface energies on broken fields."""

from .densities import (
    BulkDensity,
    SurfaceDensity,
    NonlinearDensity,
    bulk_preset,
    surface_preset,
    nonlinear_preset,
    check_bulk_axioms,
    check_surface_axioms,
    recession_bulk,
    linearize,
)
from .fields import (
    Mesh,
    BrokenField,
    CantorDescriptor,
    unit_interval,
    unit_square,
    centered_cube,
    bulk_energy,
    surface_energy,
    decompose,
    restrict,
    korn_poincare_gap,
    field_to_json,
    field_from_json,
)

__version__ = "0.1.0"
