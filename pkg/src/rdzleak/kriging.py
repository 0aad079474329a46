"""Multi-transmitter ordinary Kriging of shadowing at unmonitored locations.

The shadowing of transmitter ``n`` at a target is predicted as a weighted
sum of the residuals of *all* transmitters at the ``K_s`` sensors nearest the
target. Weights sum to one and solve the bordered system

    [ C   1 ] [ lambda ]   [ c ]
    [ 1'  0 ] [   mu   ] = [ 1 ]

with ``C`` the data-data correlation matrix and ``c`` the target-data
correlations. Data points are ordered sensor-major, transmitter-minor.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidDistance, SingularSystem
from .estimation import FittedParams, extract_residuals
from .geometry import PolarLocation, ZoneLayout, polar_distance
from .propagation import MeasurementSet, PropagationParams, mean_power
from .shadowing import REGULARIZATION, CorrelationParams, FieldPoint, _point_arrays, correlation_block, field_points

DEFAULT_LOCAL_SENSORS = 6
RESIDUAL_TOLERANCE = 1e-8


@dataclass
class KrigingSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    points: tuple[FieldPoint, ...]
    target: FieldPoint | None = None


@dataclass
class KrigingSolution:
    weights: np.ndarray
    multiplier: float
    points: tuple[FieldPoint, ...] = ()
    residual: float = 0.0
    predicted_shadowing: float = np.nan
    predicted_power: float = np.nan
    fallback: bool = False


def select_local_sensors(
    target: PolarLocation, layout: ZoneLayout, count: int = DEFAULT_LOCAL_SENSORS
) -> np.ndarray:
    """0-based indices of the ``count`` sensors nearest ``target``.

    Sorted by distance; equal distances (to 1e-9 m) go to the lower index.
    """
    if not 1 <= count <= layout.K:
        raise ValueError(f"count must lie in [1, {layout.K}], got {count}")
    r = np.array([s.r for s in layout.sensors])
    phi = np.array([s.phi for s in layout.sensors])
    d = np.round(polar_distance(r, phi, target.r, target.phi), 9)
    order = np.lexsort((np.arange(layout.K), d))
    return order[:count]


def assemble_system(
    target: FieldPoint,
    local_points,
    params: CorrelationParams,
    layout: ZoneLayout,
    nugget: float = REGULARIZATION,
) -> KrigingSystem:
    """Bordered ordinary-Kriging system in correlation form.

    ``nugget`` is added to the data-block diagonal; pass 0 to test exact
    interpolation at a data point.
    """
    return assemble_multi(target.location, [target.tx_index], local_points, params, layout, nugget)[0]


def assemble_multi(location, tx_indices, local_points, params, layout, nugget=REGULARIZATION):
    """Systems for several target transmitters at one location.

    The matrix is shared; one right-hand side per entry of ``tx_indices``.
    """
    local_points = tuple(local_points)
    if not local_points:
        raise ValueError("local_points must be non-empty")
    targets = [FieldPoint(n, location) for n in tx_indices]
    ti, xy = _point_arrays(local_points + tuple(targets))
    corr = correlation_block(ti, xy, layout.tx_xy, params)
    m = len(local_points)
    mat = np.ones((m + 1, m + 1))
    mat[:m, :m] = corr[:m, :m]
    mat[np.arange(m), np.arange(m)] += nugget
    mat[m, m] = 0.0
    out = []
    for j, tgt in enumerate(targets):
        rhs = np.ones(m + 1)
        rhs[:m] = corr[m + j, :m]
        out.append(KrigingSystem(mat, rhs, local_points, tgt))
    return out


def solve_weights(system: KrigingSystem) -> KrigingSolution:
    """Solve the bordered system by LU with partial pivoting.

    Raises
    ------
    SingularSystem
        When the factorisation fails or the solution residual exceeds 1e-8.
    """
    return solve_many(system.matrix, system.rhs[:, None], system.points)[0]


def solve_many(matrix, rhs, points=()) -> list[KrigingSolution]:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(matrix, check_finite=True)
            x = scipy.linalg.lu_solve(lu, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    res = np.abs(matrix @ x - rhs).max(axis=0)
    if not np.all(np.isfinite(x)) or np.any(~(res < RESIDUAL_TOLERANCE)):
        raise SingularSystem(f"solution residual {res.max():.3e} exceeds {RESIDUAL_TOLERANCE}")
    return [
        KrigingSolution(weights=x[:-1, j], multiplier=float(x[-1, j]), points=tuple(points), residual=float(res[j]))
        for j in range(x.shape[1])
    ]


def baseline_power(target: FieldPoint, fitted: FittedParams, p_tx: float, layout: ZoneLayout) -> float:
    """Path-loss-only prediction, ignoring spatial correlation."""
    d = layout.distances_to(target.location)[target.tx_index - 1]
    if not d > 0:
        raise InvalidDistance("target coincides with the transmitter")
    return float(mean_power(PropagationParams(p_tx, fitted.eta), d))


def predict_power(
    target: FieldPoint,
    measurements: MeasurementSet,
    fitted: FittedParams,
    p_tx: float,
    n_local: int = DEFAULT_LOCAL_SENSORS,
    residuals=None,
) -> KrigingSolution:
    """Kriging prediction of the received power of one transmitter at ``target``."""
    return predict_all(target.location, measurements, fitted, p_tx, n_local, residuals, [target.tx_index])[0]


def predict_all(
    location: PolarLocation,
    measurements: MeasurementSet,
    fitted: FittedParams,
    p_tx: float,
    n_local: int = DEFAULT_LOCAL_SENSORS,
    residuals=None,
    tx_indices=None,
) -> list[KrigingSolution]:
    """Predictions for every transmitter (or ``tx_indices``) at ``location``.

    Falls back to the path-loss baseline, with ``fallback=True``, when the
    system cannot be solved.
    """
    layout = measurements.layout
    if tx_indices is None:
        tx_indices = list(range(1, layout.N + 1))
    if residuals is None:
        residuals = extract_residuals(measurements, fitted.eta, p_tx)
    local = select_local_sensors(location, layout, n_local)
    points = field_points((layout.sensors[k] for k in local), layout.N)
    data = residuals[:, local].T.ravel()  # sensor-major, transmitter-minor
    d = layout.distances_to(location)
    if np.any(~(d > 0)):
        raise InvalidDistance("target coincides with a transmitter")
    base = mean_power(PropagationParams(p_tx, fitted.eta), d)
    systems = assemble_multi(location, tx_indices, points, fitted.correlation_params(), layout)
    rhs = np.column_stack([s.rhs for s in systems])
    try:
        sols = solve_many(systems[0].matrix, rhs, points)
    except SingularSystem:
        return [
            KrigingSolution(
                np.full(len(points), np.nan), np.nan, tuple(points),
                predicted_shadowing=0.0, predicted_power=float(base[n - 1]), fallback=True,
            )
            for n in tx_indices
        ]
    for sol, n in zip(sols, tx_indices):
        sol.predicted_shadowing = float(sol.weights @ data)
        sol.predicted_power = float(base[n - 1]) + sol.predicted_shadowing
    return sols


PREDICTION_FIELDS = [
    "iter", "target_phi_rad", "tx_id", "y_true_dbm", "y_krige_dbm",
    "y_baseline_dbm", "n_local", "fallback_flag",
]


def write_predictions_csv(records, path, columns=PREDICTION_FIELDS) -> None:
    """Write per-prediction records (dicts holding at least ``columns``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([_fmt(rec[k]) for k in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
