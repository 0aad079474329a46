"""Leakage simulation, parameter estimation and Kriging for circular radio zones."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateGeometry,
    DegenerateVariogram,
    EstimationFailed,
    InsufficientSources,
    InvalidDistance,
    NotPositiveSemiDefinite,
    RDZError,
    SingularDesign,
    SingularSystem,
)
from .geometry import (
    PolarLocation,
    ZoneConfig,
    ZoneLayout,
    adjacent_sensor_distance,
    make_layout,
    place_sensors,
    place_transmitters,
)
from .shadowing import CorrelationParams, CovarianceMatrix, FieldPoint, build_covariance, sample_field
from .propagation import MeasurementSet, PropagationParams, mean_power, synthesize_measurements
from .estimation import FittedParams, fit_parameters
from .kriging import KrigingSolution, baseline_power, predict_all, predict_power
from .experiments import (
    ExperimentConfig,
    MetricReport,
    run_nmse_sweep,
    run_power_cdf_sweep,
    run_rmse_sweep,
    spacing_curve,
)
from .config import parse_config
