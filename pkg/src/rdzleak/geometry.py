"""Zone layout: transmitter and sensor placement, distances and angles.

Positions are polar ``(r, phi)`` about the zone centre. Sensors sit on the
circle of radius ``R0`` at angles ``(k - 1) * phi_delta`` for the 1-based
sensor id ``k``; arrays inside the package are 0-based.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ZoneConfig:
    """Geometry of a circular zone.

    Parameters
    ----------
    R0 : float
        Radius of the monitored boundary in metres.
    RG : float
        Width of the guard annulus in metres. Transmitters are confined to
        ``r <= R0 - RG``.
    phi_delta : float
        Angular spacing of the boundary sensors in radians. Must divide
        ``2*pi`` into an integer number of sensors.
    N : int
        Number of transmitters.
    """

    R0: float
    RG: float
    phi_delta: float
    N: int = 3

    def __post_init__(self):
        if not self.R0 > 0:
            raise ValueError(f"R0 must be positive, got {self.R0}")
        if not 0 <= self.RG <= self.R0:
            raise ValueError(f"RG must lie in [0, R0], got RG={self.RG}, R0={self.R0}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not 0 < self.phi_delta <= TWO_PI:
            raise ValueError(f"phi_delta must lie in (0, 2*pi], got {self.phi_delta}")
        K = round(TWO_PI / self.phi_delta)
        if abs(K * self.phi_delta - TWO_PI) > 1e-9 * TWO_PI:
            raise ValueError(
                f"phi_delta={self.phi_delta} rad does not divide the circle evenly"
            )
        # snap to the exact divisor so K * phi_delta == 2*pi to within an ulp
        object.__setattr__(self, "phi_delta", TWO_PI / K)
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def from_degrees(cls, R0, RG, phi_delta_deg, N=3):
        return cls(R0=R0, RG=RG, phi_delta=math.radians(phi_delta_deg), N=N)

    @property
    def K(self) -> int:
        return round(TWO_PI / self.phi_delta)

    @property
    def core_radius(self) -> float:
        return self.R0 - self.RG

    @property
    def d_delta(self) -> float:
        return float(adjacent_sensor_distance(self.R0, self.phi_delta))


@dataclass(frozen=True)
class PolarLocation:
    r: float
    phi: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"radius must be non-negative, got {self.r}")
        phi = math.fmod(float(self.phi), TWO_PI)
        if phi < 0:
            phi += TWO_PI
        if phi >= TWO_PI:
            phi = 0.0
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "phi", phi)

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.r * math.cos(self.phi), self.r * math.sin(self.phi)])


@dataclass(frozen=True)
class ZoneLayout:
    """Transmitters and sensors placed in a zone."""

    config: ZoneConfig
    transmitters: tuple[PolarLocation, ...]
    sensors: tuple[PolarLocation, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "transmitters", tuple(self.transmitters))
        sensors = tuple(self.sensors) if self.sensors else tuple(place_sensors(self.config))
        object.__setattr__(self, "sensors", sensors)
        if len(self.transmitters) != self.config.N:
            raise ValueError(
                f"expected {self.config.N} transmitters, got {len(self.transmitters)}"
            )
        if len(self.sensors) != self.config.K:
            raise ValueError(f"expected {self.config.K} sensors, got {len(self.sensors)}")
        limit = self.config.core_radius * (1 + 1e-12)
        for tx in self.transmitters:
            if tx.r > limit:
                raise ValueError(f"transmitter at r={tx.r} lies inside the guard area")

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def K(self) -> int:
        return self.config.K

    @cached_property
    def tx_xy(self) -> np.ndarray:
        """Cartesian transmitter positions, shape ``(N, 2)``."""
        return to_cartesian([t.r for t in self.transmitters], [t.phi for t in self.transmitters])

    @cached_property
    def sensor_xy(self) -> np.ndarray:
        """Cartesian sensor positions, shape ``(K, 2)``."""
        return to_cartesian([s.r for s in self.sensors], [s.phi for s in self.sensors])

    @cached_property
    def tx_sensor_distances(self) -> np.ndarray:
        """Matrix ``d[n, k]`` of transmitter-to-sensor distances, shape ``(N, K)``."""
        r_t = np.array([t.r for t in self.transmitters])[:, None]
        p_t = np.array([t.phi for t in self.transmitters])[:, None]
        r_s = np.array([s.r for s in self.sensors])[None, :]
        p_s = np.array([s.phi for s in self.sensors])[None, :]
        return polar_distance(r_t, p_t, r_s, p_s)

    def distances_to(self, location: PolarLocation) -> np.ndarray:
        """Distances from every transmitter to ``location``, shape ``(N,)``."""
        r_t = np.array([t.r for t in self.transmitters])
        p_t = np.array([t.phi for t in self.transmitters])
        return polar_distance(r_t, p_t, location.r, location.phi)


def to_cartesian(r, phi) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def polar_distance(r_a, phi_a, r_b, phi_b):
    """Law-of-cosines distance between polar points (broadcasts)."""
    sq = r_a * r_a + r_b * r_b - 2.0 * r_a * r_b * np.cos(np.abs(phi_a - phi_b))
    return np.sqrt(np.maximum(sq, 0.0))


def place_transmitters(config: ZoneConfig, rng: np.random.Generator) -> list[PolarLocation]:
    """Draw ``N`` transmitter positions inside the core area.

    The radius is uniform on ``[0, R0 - RG]`` (uniform in radius, not in
    area) and the azimuth is uniform on ``[0, 2*pi)``.
    """
    r = rng.uniform(0.0, config.core_radius, size=config.N)
    phi = rng.uniform(0.0, TWO_PI, size=config.N)
    return [PolarLocation(float(a), float(b)) for a, b in zip(r, phi)]


def place_sensors(config: ZoneConfig) -> list[PolarLocation]:
    return [PolarLocation(config.R0, k * config.phi_delta) for k in range(config.K)]


def make_layout(config: ZoneConfig, rng: np.random.Generator) -> ZoneLayout:
    return ZoneLayout(config, tuple(place_transmitters(config, rng)))


def adjacent_sensor_distance(R0, phi_delta):
    """Chord length between neighbouring boundary sensors.

    Uses the exact chord ``R0 * sqrt(2 * (1 - cos(phi_delta)))``, written as
    ``2 * R0 * sin(phi_delta / 2)`` for accuracy at small angles. Broadcasts
    over array arguments.
    """
    R0 = np.asarray(R0, dtype=float)
    phi_delta = np.asarray(phi_delta, dtype=float)
    out = 2.0 * R0 * np.abs(np.sin(phi_delta / 2.0))
    return out if out.ndim else float(out)


def distance_tx_sensor(tx: PolarLocation, sn: PolarLocation) -> float:
    return float(polar_distance(tx.r, tx.phi, sn.r, sn.phi))


def angle_at_receiver(tx_i: PolarLocation, tx_j: PolarLocation, rx: PolarLocation) -> float:
    """Angle subtended at ``rx`` by the two transmitters, in ``[0, pi]``."""
    d_i = distance_tx_sensor(tx_i, rx)
    d_j = distance_tx_sensor(tx_j, rx)
    if d_i == 0.0 or d_j == 0.0:
        raise DegenerateGeometry("receiver coincides with a transmitter")
    d_ij = distance_tx_sensor(tx_i, tx_j)
    c = (d_i * d_i + d_j * d_j - d_ij * d_ij) / (2.0 * d_i * d_j)
    return math.acos(min(1.0, max(-1.0, c)))


def angle_cosines(tx_xy: np.ndarray, rx_xy: np.ndarray) -> np.ndarray:
    """Cosines of the angles between transmitter pairs seen from each receiver.

    Parameters
    ----------
    tx_xy : ndarray, shape (N, 2)
    rx_xy : ndarray, shape (M, 2)

    Returns
    -------
    ndarray, shape (M, N, N)
        ``out[m, i, j] = cos(theta_ij)`` at receiver ``m``; the diagonal is 1.
    """
    tx_xy = np.asarray(tx_xy, dtype=float)
    rx_xy = np.atleast_2d(np.asarray(rx_xy, dtype=float))
    diff = tx_xy[None, :, :] - rx_xy[:, None, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(d == 0.0):
        raise DegenerateGeometry("receiver coincides with a transmitter")
    d_tx = np.hypot(*(tx_xy[:, None, :] - tx_xy[None, :, :]).transpose(2, 0, 1))
    c = (d[:, :, None] ** 2 + d[:, None, :] ** 2 - d_tx[None] ** 2) / (
        2.0 * d[:, :, None] * d[:, None, :]
    )
    c = np.clip(c, -1.0, 1.0)
    idx = np.arange(tx_xy.shape[0])
    c[:, idx, idx] = 1.0
    return c


def write_layout_csv(layout: ZoneLayout, path) -> None:
    """Write a layout as CSV with columns ``kind, id, r_m, phi_rad`` (1-based ids)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "id", "r_m", "phi_rad"])
        for n, t in enumerate(layout.transmitters, start=1):
            w.writerow(["tx", n, repr(t.r), repr(t.phi)])
        for k, s in enumerate(layout.sensors, start=1):
            w.writerow(["sn", k, repr(s.r), repr(s.phi)])


def read_layout_csv(path, config: ZoneConfig | None = None) -> ZoneLayout:
    """Read a layout written by :func:`write_layout_csv`.

    When ``config`` is omitted, ``R0`` and ``phi_delta`` are inferred from the
    sensor rows and ``RG`` is taken as ``R0 - max(tx radius)``.
    """
    txs: dict[int, PolarLocation] = {}
    sns: dict[int, PolarLocation] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            loc = PolarLocation(float(row["r_m"]), float(row["phi_rad"]))
            kind = row["kind"].strip()
            if kind == "tx":
                txs[int(row["id"])] = loc
            elif kind == "sn":
                sns[int(row["id"])] = loc
            else:
                raise ValueError(f"unknown row kind {kind!r}")
    transmitters = tuple(txs[i] for i in sorted(txs))
    sensors = tuple(sns[i] for i in sorted(sns))
    if config is None:
        if len(sensors) < 1:
            raise ValueError("layout file has no sensors")
        R0 = sensors[0].r
        core = max(t.r for t in transmitters)
        config = ZoneConfig(R0=R0, RG=R0 - core, phi_delta=TWO_PI / len(sensors), N=len(transmitters))
    return ZoneLayout(config, transmitters, sensors)


def sensor_angles(config: ZoneConfig) -> np.ndarray:
    return np.arange(config.K) * config.phi_delta

