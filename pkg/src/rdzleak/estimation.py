"""Model-parameter estimation from boundary measurements.

Covers the path-loss exponent (least squares with the transmit power as a
known offset), the shadowing residuals, the cross-correlation coefficients
``A`` and ``B`` (maximum likelihood over a bounded grid) and the correlation
distance (exponential variogram fit).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import (
    DegenerateVariogram,
    EstimationFailed,
    InsufficientSources,
    SingularDesign,
)
from .geometry import ZoneLayout, angle_cosines
from .propagation import MeasurementSet
from .shadowing import LN2, REGULARIZATION, CorrelationParams

GRID_STEP = 0.01
REFINE_STEP = 0.001
FEASIBLE_MARGIN = 1e-3
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FitQualityWarning(UserWarning):
    """The variogram fit landed on a bound of its search box."""


@dataclass(frozen=True)
class FittedParams:
    eta: float
    sigma_w: float
    A: float
    B: float
    d_cor: float
    sill: float = math.nan
    range_: float = math.nan

    def correlation_params(self) -> CorrelationParams:
        return CorrelationParams(sigma_w=self.sigma_w, d_cor=self.d_cor, A=self.A, B=self.B)

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "FittedParams":
        vals = {}
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                vals[key.strip()] = float(value)
        return cls(**vals)

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list[str]:
        return [repr(float(v)) for v in asdict(self).values()]


@dataclass
class Semivariogram:
    lag_distance: np.ndarray
    gamma: np.ndarray
    pairs: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag_m", "gamma", "pairs"])
            for h, g, c in zip(self.lag_distance, self.gamma, self.pairs):
                w.writerow([repr(float(h)), repr(float(g)), int(c)])


def _log_distance(layout: ZoneLayout) -> np.ndarray:
    return -10.0 * np.log10(layout.tx_sensor_distances)


def estimate_eta(measurements: MeasurementSet, p_tx: float) -> float:
    """Least-squares path-loss exponent with ``p_tx`` as a fixed offset."""
    d = measurements.layout.tx_sensor_distances
    x = _log_distance(measurements.layout).ravel()
    if np.ptp(d) == 0 or not np.any(x):
        raise SingularDesign("all transmitter-sensor distances are equal")
    z = measurements.powers.ravel() - p_tx
    return math.fsum(x * z) / math.fsum(x * x)


def extract_residuals(measurements: MeasurementSet, eta_hat: float, p_tx: float) -> np.ndarray:
    return measurements.powers - p_tx + 10.0 * eta_hat * np.log10(measurements.layout.tx_sensor_distances)


def estimate_sigma_w(residuals) -> float:
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size < 2:
        raise ValueError("need at least two residuals")
    return float(np.std(r, ddof=1))


def _spectral_terms(residuals: np.ndarray, layout: ZoneLayout, sigma_w: float):
    # per sensor: eigenpairs of the angle-cosine matrix and projections of
    # the scaled residual vector and the ones vector onto the eigenvectors
    cos_k = angle_cosines(layout.tx_xy, layout.sensor_xy)
    lam, vec = np.linalg.eigh(cos_k)
    lam = np.clip(lam, 0.0, None)
    u = np.asarray(residuals, dtype=float).T / sigma_w
    p = np.einsum("kij,ki->kj", vec, u)
    q = vec.sum(axis=1)
    return lam, p, q


def cross_coeff_loglik(residuals, layout: ZoneLayout, sigma_w: float, A, B, eps: float = REGULARIZATION):
    """Log-likelihood of ``(A, B)`` summed over sensors, up to a constant.

    ``A`` and ``B`` may be arrays of equal shape. Each per-sensor matrix is
    ``sigma_w**2 * (A * cos(theta) + B + (1 - A - B + eps) * I)``: unit
    variance, with ``1 - A - B`` acting as a nugget. It is inverted through
    the eigenbasis of the cosine matrix plus a rank-one update for ``B``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    shape = np.broadcast_shapes(A.shape, B.shape)
    A = np.broadcast_to(A, shape).ravel()
    B = np.broadcast_to(B, shape).ravel()
    lam, p, q = _spectral_terms(residuals, layout, sigma_w)
    K, N = lam.shape
    pq, pp, qq = p * q, p * p, q * q
    const = N * math.log(sigma_w**2)
    out = np.empty(A.size)
    chunk = max(1, 32768 // K)
    for s in range(0, A.size, chunk):
        # arrays are (sensor, candidate): the long candidate axis stays innermost
        a = A[None, s : s + chunk]
        b = B[None, s : s + chunk]
        c = 1.0 - a - b + eps
        s11 = np.zeros((K, a.shape[1]))
        sw1 = np.zeros_like(s11)
        sww = np.zeros_like(s11)
        logdet = np.zeros_like(s11)
        prod = np.ones_like(s11)
        for n in range(N):
            den = lam[:, n, None] * a + c
            inv = 1.0 / den
            s11 += inv * qq[:, n, None]
            sw1 += inv * pq[:, n, None]
            sww += inv * pp[:, n, None]
            prod *= den
            if n % 8 == 7 or n == N - 1:
                logdet += np.log(prod)
                prod.fill(1.0)
        t = 1.0 + b * s11
        quad = sww - b * sw1**2 / t
        out[s : s + chunk] = -0.5 * ((logdet + np.log(t) + quad).sum(axis=0) + K * const)
    return out.reshape(shape) if shape else float(out[0])


def _feasible_grid(step: float, margin: float):
    n = int(math.floor((1.0 - margin) / step + 1e-9))
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    mask = i + j <= n
    return i[mask] * step, j[mask] * step


def estimate_cross_coeffs(
    residuals,
    layout: ZoneLayout,
    sigma_w_hat: float,
    step: float = GRID_STEP,
    refine_step: float = REFINE_STEP,
    margin: float = FEASIBLE_MARGIN,
) -> tuple[float, float]:
    """Maximum-likelihood ``(A, B)`` over ``{A >= 0, B >= 0, A + B <= 1 - margin}``.

    A coarse grid at ``step`` locates the best point, then a window of
    ``+-step`` around it is searched at ``refine_step``. Pass
    ``refine_step=None`` to stop after the coarse grid.
    """
    if layout.N < 2:
        raise InsufficientSources(f"need at least two transmitters, got {layout.N}")
    if not sigma_w_hat > 0:
        raise EstimationFailed("sigma_w_hat must be positive")
    A, B = _feasible_grid(step, margin)
    ll = cross_coeff_loglik(residuals, layout, sigma_w_hat, A, B)
    if not np.isfinite(ll).any():
        raise EstimationFailed("likelihood is not finite at any grid point")
    best = int(np.nanargmax(np.where(np.isfinite(ll), ll, -np.inf)))
    a0, b0 = A[best], B[best]
    if refine_step is None:
        return float(a0), float(b0)
    n = int(round(step / refine_step))
    off = np.arange(-n, n + 1) * refine_step
    ra, rb = np.meshgrid(a0 + off, b0 + off, indexing="ij")
    ra, rb = ra.ravel(), rb.ravel()
    ok = (ra >= -1e-12) & (rb >= -1e-12) & (ra + rb <= 1.0 - margin + 1e-12)
    ra, rb = np.clip(ra[ok], 0.0, None), np.clip(rb[ok], 0.0, None)
    rll = cross_coeff_loglik(residuals, layout, sigma_w_hat, ra, rb)
    rll = np.where(np.isfinite(rll), rll, -np.inf)
    k = int(np.argmax(rll))
    if rll[k] < ll[best]:
        return float(a0), float(b0)
    return float(ra[k]), float(rb[k])


def empirical_semivariogram(
    measurements: MeasurementSet, max_lag: int = 3, values=None
) -> Semivariogram:
    """Method-of-moments semivariogram at lags ``M * d_delta``, ``M = 1..max_lag``.

    Differences are taken between sensors ``k`` and ``k + M`` without
    wrapping around the circle. ``values`` replaces the raw powers, e.g. with
    the shadowing residuals.
    """
    vals = measurements.powers if values is None else np.asarray(values, dtype=float)
    N, K = vals.shape
    if not 1 <= max_lag < K:
        raise ValueError(f"max_lag must lie in [1, K), got {max_lag} with K={K}")
    d_delta = measurements.layout.config.d_delta
    lags = np.arange(1, max_lag + 1)
    gamma = np.empty(max_lag)
    pairs = N * (K - lags)
    for i, M in enumerate(lags):
        diff = vals[:, M:] - vals[:, :-M]
        gamma[i] = math.fsum((diff * diff).ravel()) / (2.0 * pairs[i])
    return Semivariogram(lags * d_delta, gamma, pairs)


def exponential_variogram(h, sill, range_):
    return sill * (1.0 - np.exp(-np.asarray(h, dtype=float) / range_))


def fit_variogram(
    vg: Semivariogram,
    sill_max: float | None = None,
    range_max: float | None = None,
    n_grid: int = 100,
) -> tuple[float, float]:
    """Least-squares fit of ``D * (1 - exp(-h / E))`` to the empirical points.

    For each ``E`` on a log-spaced grid over ``(0, range_max]`` the sill
    takes its least-squares value clipped to ``(0, sill_max]``; the best
    grid cell is then refined by golden-section search. Defaults: ``sill_max = 4 * max(gamma)``
    and ``range_max = 10 * max(lag)``.
    """
    h = np.asarray(vg.lag_distance, dtype=float)
    g = np.asarray(vg.gamma, dtype=float)
    if h.size < 2:
        raise ValueError("need at least two lags")
    if not np.any(g > 0):
        raise DegenerateVariogram("semivariogram is zero at every lag")
    sill_max = 4.0 * float(g.max()) if sill_max is None else float(sill_max)
    range_max = 10.0 * float(h.max()) if range_max is None else float(range_max)
    d_min = sill_max * 1e-3
    e_grid = np.geomspace(range_max * 1e-4, range_max, n_grid)

    # D has a closed form for fixed E, so search the profile in E only
    shape = 1.0 - np.exp(-h[None, :] / e_grid[:, None])  # (E, lag)
    d_opt = np.clip(shape @ g / np.einsum("ij,ij->i", shape, shape), d_min, sill_max)
    sse = ((d_opt[:, None] * shape - g) ** 2).sum(axis=1)
    j = int(np.argmin(sse))
    best = (float(sse[j]), float(d_opt[j]), float(e_grid[j]))

    def profile(log_e):
        f = 1.0 - np.exp(-h / math.exp(log_e))
        d = float(np.clip(f @ g / (f @ f), d_min, sill_max))
        return float(((d * f - g) ** 2).sum()), d

    lo = math.log(e_grid[max(j - 1, 0)])
    hi = math.log(e_grid[min(j + 1, n_grid - 1)])
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = profile(x1)[0], profile(x2)[0]
    for _ in range(80):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = profile(x1)[0]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = profile(x2)[0]
    x = 0.5 * (lo + hi)
    val, d = profile(x)
    if val <= best[0]:
        best = (val, d, math.exp(x))
    _, sill, rng_ = best
    if j == 0 or j == n_grid - 1:
        warnings.warn(
            f"variogram range {rng_:.4g} m sits on the search bound", FitQualityWarning, stacklevel=2
        )
    return sill, rng_


def dcor_from_range(E_hat: float) -> float:
    """Correlation distance implied by an exponential variogram range."""
    if not E_hat > 0:
        raise ValueError(f"range must be positive, got {E_hat}")
    return E_hat * LN2


def fit_parameters(
    measurements: MeasurementSet,
    p_tx: float,
    max_lag: int = 3,
    variogram_source: str = "powers",
) -> FittedParams:
    """Estimate every model parameter from one set of sensor measurements.

    ``variogram_source`` selects the values fed to the semivariogram:
    ``"powers"`` (raw received powers) or ``"residuals"`` (powers with the
    fitted path loss removed). With a single transmitter there is no
    cross-correlation to estimate and ``(A, B)`` is reported as ``(0, 1)``.
    """
    eta = estimate_eta(measurements, p_tx)
    res = extract_residuals(measurements, eta, p_tx)
    sigma = estimate_sigma_w(res)
    if measurements.layout.N >= 2:
        a, b = estimate_cross_coeffs(res, measurements.layout, sigma)
    else:
        a, b = 0.0, 1.0
    if variogram_source == "powers":
        vg = empirical_semivariogram(measurements, max_lag)
    elif variogram_source == "residuals":
        vg = empirical_semivariogram(measurements, max_lag, values=res)
    else:
        raise ValueError(f"variogram_source must be 'powers' or 'residuals', got {variogram_source!r}")
    sill, range_ = fit_variogram(vg, sill_max=4.0 * sigma**2, range_max=10.0 * measurements.layout.config.R0)
    return FittedParams(eta, sigma, a, b, dcor_from_range(range_), sill, range_)
