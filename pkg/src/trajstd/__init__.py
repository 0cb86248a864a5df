"""Trajectory standardization, completion, safety measures, traffic-model
calibration and benchmark evaluation."""

__version__ = "0.1.0"

from .errors import (CalibrationError, ConfigurationError, ContractError, DataError, FitError,
                     IntegrityError, ParseError, PreconditionError, SchemaError, SimulationError,
                     TrajError)
from .schema import (CANONICAL_FIELDS, CanonicalScene, FieldCatalog, SceneMetadata, Track,
                     compute_coverage, default_catalog, validate_scene)
from .io import read_scene, write_scene

__all__ = [
    "__version__", "CalibrationError", "ConfigurationError", "ContractError", "DataError",
    "FitError", "IntegrityError", "ParseError", "PreconditionError", "SchemaError",
    "SimulationError", "TrajError", "CANONICAL_FIELDS", "CanonicalScene", "FieldCatalog",
    "SceneMetadata", "Track", "compute_coverage", "default_catalog", "validate_scene",
    "read_scene", "write_scene",
]
