"""Log-distance path loss and synthetic sensor measurements."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidDistance
from .geometry import PolarLocation, ZoneLayout
from .shadowing import CorrelationParams, build_covariance, field_points, sample_field

MIN_LINK_DISTANCE = 1.0


@dataclass(frozen=True)
class PropagationParams:
    p_tx: float = 30.0
    eta: float = 3.5

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass
class MeasurementSet:
    """Per-transmitter received powers at the boundary sensors.

    ``powers[n, k]`` is the power in dBm from transmitter ``n`` at sensor
    ``k`` (both 0-based). ``shadowing_truth`` is only set for simulated data.
    Optional target arrays carry ground truth at unmonitored locations that
    were drawn jointly with the sensor data.
    """

    layout: ZoneLayout
    powers: np.ndarray
    shadowing_truth: np.ndarray | None = None
    targets: tuple[PolarLocation, ...] = ()
    target_powers: np.ndarray | None = None
    target_shadowing: np.ndarray | None = None

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float)
        shape = (self.layout.N, self.layout.K)
        if self.powers.shape != shape:
            raise ValueError(f"powers has shape {self.powers.shape}, expected {shape}")
        if self.shadowing_truth is not None and np.shape(self.shadowing_truth) != shape:
            raise ValueError("shadowing_truth does not match the layout")

    def to_csv(self, path) -> None:
        """Write ``tx_id, sn_id, power_dbm[, shadowing_db]`` rows (1-based ids)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["tx_id", "sn_id", "power_dbm"]
            if self.shadowing_truth is not None:
                header.append("shadowing_db")
            w.writerow(header)
            for n in range(self.layout.N):
                for k in range(self.layout.K):
                    row = [n + 1, k + 1, repr(float(self.powers[n, k]))]
                    if self.shadowing_truth is not None:
                        row.append(repr(float(self.shadowing_truth[n, k])))
                    w.writerow(row)

    @classmethod
    def from_csv(cls, path, layout: ZoneLayout) -> "MeasurementSet":
        powers = np.full((layout.N, layout.K), np.nan)
        truth = None
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            has_truth = "shadowing_db" in (reader.fieldnames or [])
            if has_truth:
                truth = np.full_like(powers, np.nan)
            for row in reader:
                n, k = int(row["tx_id"]) - 1, int(row["sn_id"]) - 1
                powers[n, k] = float(row["power_dbm"])
                if has_truth and row["shadowing_db"] not in ("", None):
                    truth[n, k] = float(row["shadowing_db"])
        if np.isnan(powers).any():
            raise ValueError(f"{path}: measurement matrix is incomplete")
        if truth is not None and np.isnan(truth).any():
            truth = None
        return cls(layout, powers, truth)


def mean_power(params: PropagationParams, distance):
    """Path-loss mean ``p_tx - 10 * eta * log10(d)`` in dBm."""
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise InvalidDistance("distance must be positive")
    out = params.p_tx - 10.0 * params.eta * np.log10(d)
    return out if out.ndim else float(out)


def synthesize_measurements(
    layout: ZoneLayout,
    prop: PropagationParams,
    corr: CorrelationParams,
    rng: np.random.Generator,
    targets: Sequence[PolarLocation] = (),
) -> MeasurementSet:
    """Simulate one realisation of sensor powers.

    Shadowing for all ``N * K`` sensor variables, plus ``N`` variables per
    target location, is drawn in a single joint Gaussian sample.
    """
    targets = tuple(targets)
    d = layout.tx_sensor_distances
    d_t = np.array([layout.distances_to(t) for t in targets]).reshape(len(targets), layout.N).T
    if np.any(d < MIN_LINK_DISTANCE) or np.any(d_t < MIN_LINK_DISTANCE):
        raise InvalidDistance(f"link shorter than {MIN_LINK_DISTANCE} m; check the zone configuration")
    N, K = layout.N, layout.K
    if corr.sigma_w == 0:
        w = np.zeros(N * (K + len(targets)))
    else:
        pts = field_points(layout.sensors + targets, N)
        w = sample_field(build_covariance(pts, corr, layout), rng)
    # location-major ordering: w[loc * N + n]
    w_s = w[: N * K].reshape(K, N).T.copy()
    w_t = w[N * K :].reshape(len(targets), N).T.copy()
    powers = mean_power(prop, d) + w_s
    out = MeasurementSet(layout, powers, w_s)
    if targets:
        out.targets = targets
        out.target_shadowing = w_t
        out.target_powers = mean_power(prop, d_t) + w_t
    return out


class EmpiricalCDF:
    """Pooled empirical distribution of power samples."""

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("no samples")
        self.values = v

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.values.size

    def __len__(self):
        return self.values.size

    def quantile(self, q):
        return np.quantile(self.values, q)

    def table(self, n_points: int = 201) -> np.ndarray:
        """``(value, probability)`` pairs on an even probability grid."""
        p = np.linspace(0.0, 1.0, n_points)
        return np.column_stack([self.quantile(p), p])


def boundary_power_cdf(samples: Sequence[MeasurementSet]) -> EmpiricalCDF:
    if not samples:
        raise ValueError("samples must be non-empty")
    return EmpiricalCDF(np.concatenate([s.powers.ravel() for s in samples]))
