"""Correlated log-normal shadowing over (transmitter, location) pairs.

The closed-form correlation between the shadowing of transmitter ``i`` at
location ``k`` and transmitter ``j`` at location ``m`` is

    (A * cos(theta_ij(k)) + B) * exp(-|l_k - l_m| * ln 2 / d_cor)

where ``theta_ij(k)`` is the angle the two transmitters subtend at ``k``.
Because the angle changes with location this is neither symmetric nor, once
symmetrised, positive semi-definite. The default ``"coregional"`` model
replaces the cosine factor by ``(S_k @ S_m)[i, j]`` with ``S_k`` the
symmetric square root of the co-located matrix ``A * cos(theta(k)) + B``.
That is a Schur product of two positive semi-definite kernels, so every
matrix it builds is a valid covariance; it equals the closed form at
co-located pairs and whenever the angles agree at ``k`` and ``m``.

Every variable has unit self-correlation. When ``A + B < 1`` the difference
``1 - A - B`` is a nugget: it appears on the diagonal only, never between
distinct variables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NotPositiveSemiDefinite
from .geometry import PolarLocation, ZoneLayout, angle_at_receiver, angle_cosines, to_cartesian

LN2 = math.log(2.0)
REGULARIZATION = 1e-9
PSD_TOLERANCE = 1e-6
MODELS = ("coregional", "mean", "first")


@dataclass(frozen=True)
class CorrelationParams:
    sigma_w: float = 8.0
    d_cor: float = 100.0
    A: float = 0.7
    B: float = 0.3

    def __post_init__(self):
        if not self.sigma_w >= 0:
            raise ValueError(f"sigma_w must be non-negative, got {self.sigma_w}")
        if not self.d_cor > 0:
            raise ValueError(f"d_cor must be positive, got {self.d_cor}")
        if self.A < 0:
            raise ValueError(f"A must be non-negative, got {self.A}")
        if self.A + self.B > 1 + 1e-12:
            raise ValueError(f"A + B must not exceed 1, got {self.A + self.B}")
        if self.B - self.A < -1 - 1e-12:
            raise ValueError(f"B - A must be at least -1, got {self.B - self.A}")


@dataclass(frozen=True)
class FieldPoint:
    """Shadowing variable of transmitter ``tx_index`` (1-based) at ``location``."""

    tx_index: int
    location: PolarLocation

    def __post_init__(self):
        if self.tx_index < 1:
            raise ValueError(f"tx_index is 1-based, got {self.tx_index}")


def field_points(locations: Iterable[PolarLocation], n_tx: int) -> list[FieldPoint]:
    """Points ordered location-major, transmitter-minor."""
    return [FieldPoint(n, loc) for loc in locations for n in range(1, n_tx + 1)]


def sensor_points(layout: ZoneLayout, sensors: Sequence[int] | None = None) -> list[FieldPoint]:
    """Field points for the given 0-based sensor indices (default: all)."""
    idx = range(layout.K) if sensors is None else sensors
    return field_points((layout.sensors[k] for k in idx), layout.N)


def acf(loc_a: PolarLocation, loc_b: PolarLocation, params: CorrelationParams) -> float:
    d = float(np.hypot(*(loc_a.xy - loc_b.xy)))
    return math.exp(-d / params.d_cor * LN2)


def ccf_colocated(
    tx_i: PolarLocation, tx_j: PolarLocation, rx: PolarLocation, params: CorrelationParams
) -> float:
    theta = angle_at_receiver(tx_i, tx_j, rx)
    return params.A * math.cos(theta) + params.B


def cross_correlation(
    point_a: FieldPoint,
    point_b: FieldPoint,
    params: CorrelationParams,
    layout: ZoneLayout,
    model: str = "coregional",
) -> float:
    """Correlation between two shadowing variables.

    ``model`` selects the cross-location cosine factor: ``"first"`` takes
    the angle at ``point_a`` only, ``"mean"`` averages the cosines seen from
    both locations, ``"coregional"`` (the default, positive semi-definite)
    uses the square-root construction described in the module docstring.
    """
    rho = acf(point_a.location, point_b.location, params)
    if point_a == point_b:
        return 1.0
    if model == "coregional":
        ti, xy = _point_arrays((point_a, point_b))
        return float(correlation_block(ti, xy, layout.tx_xy, params)[0, 1])
    tx_i = layout.transmitters[point_a.tx_index - 1]
    tx_j = layout.transmitters[point_b.tx_index - 1]
    if point_a.tx_index == point_b.tx_index:
        cos_term = 1.0
    else:
        cos_term = math.cos(angle_at_receiver(tx_i, tx_j, point_a.location))
        if model == "mean":
            cos_b = math.cos(angle_at_receiver(tx_i, tx_j, point_b.location))
            cos_term = 0.5 * (cos_term + cos_b)
        elif model != "first":
            raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    return (params.A * cos_term + params.B) * rho


def _point_arrays(points):
    ti = np.array([p.tx_index - 1 for p in points], dtype=np.intp)
    xy = to_cartesian([p.location.r for p in points], [p.location.phi for p in points])
    return ti, xy


def colocated_root(tx_xy: np.ndarray, loc_xy: np.ndarray, params: CorrelationParams) -> np.ndarray:
    """Symmetric square roots of ``A * cos(theta) + B`` at each location, ``(M, N, N)``."""
    c = params.A * angle_cosines(tx_xy, loc_xy) + params.B
    vals, vecs = np.linalg.eigh(c)
    vals = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * vals[:, None, :]) @ np.swapaxes(vecs, 1, 2)


def correlation_block(
    tx_index: np.ndarray,
    loc_xy: np.ndarray,
    tx_xy: np.ndarray,
    params: CorrelationParams,
    model: str = "coregional",
) -> np.ndarray:
    """Vectorised correlation matrix for points given as arrays.

    ``tx_index`` holds 0-based transmitter ids, ``loc_xy`` Cartesian
    locations with shape ``(P, 2)``. No regularisation is applied.
    """
    ti = np.asarray(tx_index, dtype=np.intp)
    loc_xy = np.asarray(loc_xy, dtype=float)
    P = ti.shape[0]
    diff = loc_xy[:, None, :] - loc_xy[None, :, :]
    rho = np.exp(np.hypot(diff[..., 0], diff[..., 1]) * (-LN2 / params.d_cor))
    if tx_xy.shape[0] == 1:
        out = (params.A + params.B) * rho
    elif model == "coregional":
        roots = colocated_root(tx_xy, loc_xy, params)
        v = roots[np.arange(P), ti]  # row ti of the root at each point's location
        out = (v @ v.T) * rho
    elif model in ("mean", "first"):
        cos_at = angle_cosines(tx_xy, loc_xy)
        cos = cos_at[np.arange(P)[:, None], ti[:, None], ti[None, :]]
        if model == "mean":
            cos = 0.5 * (cos + cos.T)
        out = (params.A * cos + params.B) * rho
    else:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    # nugget on identical variables (same transmitter, same place)
    nugget = 1.0 - params.A - params.B
    if nugget > 0:
        same = (ti[:, None] == ti[None, :]) & (rho == 1.0)
        out[same] += nugget
    return out


@dataclass
class CovarianceMatrix:
    """Correlation or covariance matrix over an ordered list of field points.

    ``entries`` already includes the diagonal regularisation.
    """

    points: tuple[FieldPoint, ...]
    entries: np.ndarray
    is_covariance: bool
    sigma_w: float
    regularization: float = 0.0
    psd_tolerance: float = PSD_TOLERANCE
    _factor: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def factor(self) -> np.ndarray:
        """Lower factor ``L`` with ``L @ L.T == entries``.

        Cholesky when possible, otherwise an eigen-decomposition with
        round-off negative eigenvalues clipped to zero.
        """
        if self._factor is None:
            self._factor = _psd_factor(self.entries, self._scale(), self.psd_tolerance)
        return self._factor

    def _scale(self) -> float:
        return self.sigma_w**2 if self.is_covariance and self.sigma_w > 0 else 1.0

    def submatrix(self, keep: Sequence[int]) -> "CovarianceMatrix":
        keep = np.asarray(keep, dtype=np.intp)
        return CovarianceMatrix(
            points=tuple(self.points[i] for i in keep),
            entries=self.entries[np.ix_(keep, keep)].copy(),
            is_covariance=self.is_covariance,
            sigma_w=self.sigma_w,
            regularization=self.regularization,
        )

    def to_csv(self, path) -> None:
        """Write ``row, col, value`` triples with 1-based indices."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "value"])
            for i, j in np.ndindex(self.entries.shape):
                w.writerow([i + 1, j + 1, repr(float(self.entries[i, j]))])


def _psd_factor(mat: np.ndarray, scale: float, tolerance: float = PSD_TOLERANCE) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] < -tolerance * scale:
        raise NotPositiveSemiDefinite(
            f"smallest eigenvalue {vals[0]:.3e} below tolerance {-tolerance * scale:.3e}"
        )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def build_covariance(
    points: Sequence[FieldPoint],
    params: CorrelationParams,
    geometry: ZoneLayout,
    covariance: bool = True,
    model: str = "coregional",
    psd_tolerance: float = PSD_TOLERANCE,
) -> CovarianceMatrix:
    """Assemble the (regularised) correlation or covariance matrix.

    Raises
    ------
    NotPositiveSemiDefinite
        If the regularised matrix has an eigenvalue below ``-psd_tolerance``
        times the variance scale.
    """
    points = tuple(points)
    if not points:
        raise ValueError("points must be non-empty")
    ti, xy = _point_arrays(points)
    entries = correlation_block(ti, xy, geometry.tx_xy, params, model=model)
    scale = params.sigma_w**2 if covariance else 1.0
    if covariance:
        entries *= scale
    eps = REGULARIZATION * scale
    entries[np.diag_indices_from(entries)] += eps
    cov = CovarianceMatrix(points, entries, covariance, params.sigma_w, eps, psd_tolerance)
    if scale > 0:
        cov.factor()
    return cov


def local_subset_covariance(
    all_points: Sequence[FieldPoint],
    keep: Iterable[int],
    params: CorrelationParams,
    geometry: ZoneLayout,
    covariance: bool = True,
    model: str = "coregional",
) -> CovarianceMatrix:
    """Covariance of a marginal subset; equivalent to dropping rows and columns."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must be non-empty")
    return build_covariance([all_points[i] for i in keep], params, geometry, covariance, model)


def sample_field(cov: CovarianceMatrix, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw zero-mean Gaussian shadowing ``w = L z`` in dB.

    Returns shape ``(P,)``, or ``(size, P)`` when ``size`` is given.
    """
    if not cov.is_covariance:
        raise ValueError("sample_field needs a matrix in covariance form")
    L = cov.factor()
    if size is None:
        return L @ rng.standard_normal(cov.size)
    return rng.standard_normal((size, cov.size)) @ L.T
