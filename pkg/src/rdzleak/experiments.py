"""Monte Carlo sweeps over zone geometry.

Every iteration draws from its own random stream, derived from
``(master_seed, experiment, iteration)``. Sweep points reuse the same
streams (common random numbers), so differences between points are not
blurred by independent sampling noise, and results do not depend on how
iterations are split across worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import RDZError
from .estimation import FittedParams, fit_parameters
from .geometry import TWO_PI, PolarLocation, ZoneConfig, adjacent_sensor_distance, make_layout
from .kriging import predict_all
from .propagation import EmpiricalCDF, PropagationParams, synthesize_measurements
from .shadowing import CorrelationParams

# stream identifiers; part of the seed derivation, so never renumber
EXP_RMSE = 1
EXP_NMSE = 2
EXP_CDF = 3

MODES = ("estimated", "oracle")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of a Monte Carlo run.

    Defaults reproduce the reference setting: 30 dBm transmitters, path-loss
    exponent 3.5, 8 dB shadowing with a 100 m correlation distance, cross
    coefficients (0.7, 0.3), three transmitters and a guard width of
    ``R0 / 10`` whenever ``RG_m`` is left unset.
    """

    p_tx_dbm: float = 30.0
    eta: float = 3.5
    sigma_w_db: float = 8.0
    d_cor_m: float = 100.0
    A: float = 0.7
    B: float = 0.3
    N: int = 3
    R0_m: float = 500.0
    RG_m: float | None = None
    phi_delta_deg: float = 10.0
    sweep_phi_deg: tuple = (5.0, 10.0, 15.0, 20.0, 30.0)
    sweep_R0_m: tuple = (500.0, 1000.0)
    sweep_RG_m: tuple = (50.0, 150.0, 300.0)
    spacing_R0_m: tuple = tuple(float(r) for r in range(100, 2001, 100))
    n_iterations: int = 2000
    n_cdf_samples: int = 20000
    master_seed: int = 20240611
    K_s: int = 6
    mode: str = "estimated"
    variogram_source: str = "powers"
    max_lag: int = 3
    target_offset_m: float = 0.0
    workers: int = 1

    def __post_init__(self):
        for name in ("sweep_phi_deg", "sweep_R0_m", "sweep_RG_m", "spacing_R0_m"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        if self.n_iterations < 1:
            raise ValueError(f"n_iterations must be at least 1, got {self.n_iterations}")
        if self.n_cdf_samples < 1:
            raise ValueError(f"n_cdf_samples must be at least 1, got {self.n_cdf_samples}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.variogram_source not in ("powers", "residuals"):
            raise ValueError(f"variogram_source must be 'powers' or 'residuals', got {self.variogram_source!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.target_offset_m < 0:
            raise ValueError("target_offset_m must be non-negative")
        # validate every zone the sweeps will build, and the correlation model
        self.zone()
        for phi in self.sweep_phi_deg:
            self.zone(phi_delta_deg=phi)
        for R0 in self.sweep_R0_m:
            self.zone(R0=R0)
        for RG in self.sweep_RG_m:
            self.zone(RG=RG)
        k_min = min(self.zone(phi_delta_deg=phi).K for phi in (self.phi_delta_deg, *self.sweep_phi_deg))
        if not 1 <= self.K_s <= k_min:
            raise ValueError(f"K_s must lie in [1, {k_min}], got {self.K_s}")
        self.correlation()

    def guard_width(self, R0: float) -> float:
        return R0 / 10.0 if self.RG_m is None else float(self.RG_m)

    def zone(self, R0=None, phi_delta_deg=None, RG=None) -> ZoneConfig:
        R0 = self.R0_m if R0 is None else float(R0)
        RG = self.guard_width(R0) if RG is None else float(RG)
        if not RG < R0:
            raise ValueError(f"RG must be smaller than R0, got RG={RG}, R0={R0}")
        phi = self.phi_delta_deg if phi_delta_deg is None else phi_delta_deg
        return ZoneConfig.from_degrees(R0, RG, phi, self.N)

    def propagation(self) -> PropagationParams:
        return PropagationParams(self.p_tx_dbm, self.eta)

    def correlation(self) -> CorrelationParams:
        return CorrelationParams(self.sigma_w_db, self.d_cor_m, self.A, self.B)

    def true_params(self) -> FittedParams:
        return FittedParams(self.eta, self.sigma_w_db, self.A, self.B, self.d_cor_m)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Canonical ``key=value`` echo, one line per field in declaration order."""
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_num(x) for x in v)
            elif isinstance(v, float):
                v = _num(v)
            elif v is None:
                v = "auto"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        """Git blob hash of :meth:`to_text` (``git hash-object`` compatible)."""
        data = self.to_text().encode()
        return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def iteration_rng(master_seed: int, experiment: int, iteration: int) -> np.random.Generator:
    """Independent generator for one iteration of one experiment."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(experiment, iteration))
    return np.random.default_rng(seq)


@dataclass
class MetricReport:
    """Per-sweep-point metrics plus optional per-sample detail.

    ``rows`` holds one dict per sweep point with the keys in ``columns``.
    ``records`` holds per-prediction or per-iteration rows when the sweep
    produces them, and ``tables`` named auxiliary tables (e.g. CDFs).
    """

    sweep: str
    columns: list
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    record_columns: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        _write_rows(path, self.columns, self.rows)

    def records_to_csv(self, path) -> None:
        _write_rows(path, self.record_columns, self.records)

    def check(self) -> list[str]:
        """Audit messages; an empty list means every invariant holds."""
        problems = []
        for r in self.rows:
            for k, v in r.items():
                if isinstance(v, float) and not math.isfinite(v):
                    problems.append(f"{self.sweep}: {k} is not finite at {_point_label(r)}")
                if k.startswith("rmse") and isinstance(v, float) and v < 0:
                    problems.append(f"{self.sweep}: {k} is negative at {_point_label(r)}")
        return problems


def _point_label(row) -> str:
    keys = [k for k in ("R0_m", "phi_delta_deg", "RG_m") if k in row]
    return ", ".join(f"{k}={_num(row[k])}" for k in keys)


def _write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _chunks(n: int, parts: int):
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _map_iterations(func, cfg: ExperimentConfig, point: dict, n: int) -> list:
    """Run ``func(cfg, point, start, stop)`` over ``range(n)``; results in iteration order."""
    chunks = _chunks(n, cfg.workers * 4 if cfg.workers > 1 else 1)
    if cfg.workers == 1:
        parts = [func(cfg, point, a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(func, cfg, point, a, b) for a, b in chunks]
            parts = [f.result() for f in futures]
    return [item for part in parts for item in part]


def _rmse_chunk(cfg: ExperimentConfig, point: dict, start: int, stop: int) -> list:
    zone = cfg.zone(point["R0_m"], point["phi_delta_deg"], point["RG_m"])
    prop, corr = cfg.propagation(), cfg.correlation()
    out = []
    for it in range(start, stop):
        rng = iteration_rng(cfg.master_seed, EXP_RMSE, it)
        layout = make_layout(zone, rng)
        target = PolarLocation(zone.R0 + cfg.target_offset_m, rng.uniform(0.0, TWO_PI))
        try:
            m = synthesize_measurements(layout, prop, corr, rng, targets=[target])
            if cfg.mode == "oracle":
                fitted = cfg.true_params()
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    fitted = fit_parameters(m, cfg.p_tx_dbm, cfg.max_lag, cfg.variogram_source)
            sols = predict_all(target, m, fitted, cfg.p_tx_dbm, cfg.K_s)
        except RDZError as exc:
            out.append({"iter": it, "failure": type(exc).__name__})
            continue
        for n, sol in enumerate(sols, start=1):
            out.append({
                "iter": it,
                "target_phi_rad": target.phi,
                "tx_id": n,
                "y_true_dbm": float(m.target_powers[n - 1, 0]),
                "y_krige_dbm": sol.predicted_power,
                "y_baseline_dbm": sol.predicted_power - sol.predicted_shadowing,
                "n_local": cfg.K_s,
                "fallback_flag": sol.fallback,
            })
    return out


def _rmse(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return math.nan
    return math.sqrt(math.fsum(e * e) / e.size)


RMSE_RECORD_COLUMNS = [
    "R0_m", "phi_delta_rad", "phi_delta_deg", "iter", "target_phi_rad", "target_phi_deg",
    "tx_id", "y_true_dbm", "y_krige_dbm", "y_baseline_dbm", "n_local", "fallback_flag",
]


def run_rmse_sweep(cfg: ExperimentConfig) -> MetricReport:
    """Kriging and path-loss baseline RMSE over the ``R0 x phi_delta`` grid.

    Squared errors are pooled over all transmitters of all iterations; the
    per-transmitter RMSE is reported alongside.
    """
    tx_cols = [f"rmse_krige_tx{n}" for n in range(1, cfg.N + 1)]
    columns = [
        "R0_m", "RG_m", "phi_delta_rad", "phi_delta_deg", "d_delta_m", "K", "K_s", "mode",
        "n_iterations", "n_predictions", "n_fallback", "n_failed",
        "rmse_krige", "rmse_baseline", *tx_cols,
    ]
    report = MetricReport("rmse", columns, record_columns=RMSE_RECORD_COLUMNS)
    for R0 in cfg.sweep_R0_m:
        for phi in cfg.sweep_phi_deg:
            point = {"R0_m": R0, "phi_delta_deg": phi, "RG_m": cfg.guard_width(R0)}
            zone = cfg.zone(R0, phi, point["RG_m"])
            recs = _map_iterations(_rmse_chunk, cfg, point, cfg.n_iterations)
            good = [r for r in recs if "failure" not in r]
            e_k = [r["y_krige_dbm"] - r["y_true_dbm"] for r in good]
            e_b = [r["y_baseline_dbm"] - r["y_true_dbm"] for r in good]
            row = {
                **point,
                "phi_delta_rad": zone.phi_delta,
                "d_delta_m": zone.d_delta,
                "K": zone.K,
                "K_s": cfg.K_s,
                "mode": cfg.mode,
                "n_iterations": cfg.n_iterations,
                "n_predictions": len(good),
                "n_fallback": sum(bool(r["fallback_flag"]) for r in good),
                "n_failed": len(recs) - len(good),
                "rmse_krige": _rmse(e_k),
                "rmse_baseline": _rmse(e_b),
            }
            for n, col in enumerate(tx_cols, start=1):
                row[col] = _rmse([e for e, r in zip(e_k, good) if r["tx_id"] == n])
            report.rows.append(row)
            for r in good:
                report.records.append({
                    "R0_m": R0,
                    "phi_delta_rad": zone.phi_delta,
                    "phi_delta_deg": phi,
                    **r,
                    "target_phi_deg": math.degrees(r["target_phi_rad"]),
                })
    return report


def _nmse_chunk(cfg: ExperimentConfig, point: dict, start: int, stop: int) -> list:
    zone = cfg.zone(cfg.R0_m, point["phi_delta_deg"], point["RG_m"])
    prop, corr = cfg.propagation(), cfg.correlation()
    out = []
    for it in range(start, stop):
        rng = iteration_rng(cfg.master_seed, EXP_NMSE, it)
        layout = make_layout(zone, rng)
        try:
            m = synthesize_measurements(layout, prop, corr, rng)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                f = fit_parameters(m, cfg.p_tx_dbm, cfg.max_lag, cfg.variogram_source)
        except RDZError as exc:
            out.append({"iter": it, "failure": type(exc).__name__})
            continue
        out.append({"iter": it, "eta": f.eta, "A": f.A, "B": f.B, "d_cor": f.d_cor, "sigma_w": f.sigma_w})
    return out


NMSE_COEFFS = ("eta", "A", "B", "d_cor")


def normalized_rmse(true_value: float, estimates) -> float:
    """``sqrt(mean(((x - x_hat) / x) ** 2))``; falls back to the absolute error when ``x == 0``."""
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        return math.nan
    scale = abs(true_value) if true_value != 0 else 1.0
    rel = (true_value - e) / scale
    return math.sqrt(math.fsum(rel * rel) / e.size)


def run_nmse_sweep(cfg: ExperimentConfig) -> MetricReport:
    """Normalised estimation error of ``eta``, ``A``, ``B`` and ``d_cor`` per ``phi_delta``.

    Iterations whose estimation raises are excluded and counted.
    """
    if cfg.N < 2:
        raise ValueError("the NMSE sweep needs at least two transmitters")
    truth = {"eta": cfg.eta, "A": cfg.A, "B": cfg.B, "d_cor": cfg.d_cor_m}
    columns = [
        "R0_m", "RG_m", "phi_delta_rad", "phi_delta_deg", "n_iterations", "n_failed",
        *[f"nmse_{c}" for c in NMSE_COEFFS],
        *[f"mean_{c}" for c in (*NMSE_COEFFS, "sigma_w")],
    ]
    record_columns = ["phi_delta_rad", "phi_delta_deg", "iter", "eta", "A", "B", "d_cor", "sigma_w"]
    report = MetricReport("nmse", columns, record_columns=record_columns)
    for phi in cfg.sweep_phi_deg:
        point = {"phi_delta_deg": phi, "RG_m": cfg.guard_width(cfg.R0_m)}
        zone = cfg.zone(cfg.R0_m, phi, point["RG_m"])
        recs = _map_iterations(_nmse_chunk, cfg, point, cfg.n_iterations)
        good = [r for r in recs if "failure" not in r]
        row = {
            "R0_m": cfg.R0_m,
            "RG_m": point["RG_m"],
            "phi_delta_rad": zone.phi_delta,
            "phi_delta_deg": phi,
            "n_iterations": cfg.n_iterations,
            "n_failed": len(recs) - len(good),
        }
        for c in NMSE_COEFFS:
            row[f"nmse_{c}"] = normalized_rmse(truth[c], [r[c] for r in good])
        for c in (*NMSE_COEFFS, "sigma_w"):
            vals = [r[c] for r in good]
            row[f"mean_{c}"] = math.fsum(vals) / len(vals) if vals else math.nan
        report.rows.append(row)
        for r in good:
            report.records.append({"phi_delta_rad": zone.phi_delta, "phi_delta_deg": phi, **r})
    return report


def _cdf_chunk(cfg: ExperimentConfig, point: dict, start: int, stop: int) -> list:
    zone = cfg.zone(cfg.R0_m, cfg.phi_delta_deg, point["RG_m"])
    prop, corr = cfg.propagation(), cfg.correlation()
    out = []
    for it in range(start, stop):
        rng = iteration_rng(cfg.master_seed, EXP_CDF, it)
        m = synthesize_measurements(make_layout(zone, rng), prop, corr, rng)
        out.append(m.powers.ravel())
    return out


CDF_QUANTILES = (0.1, 0.5, 0.9)


def run_power_cdf_sweep(cfg: ExperimentConfig, n_points: int = 201) -> MetricReport:
    """Pooled distribution of boundary sensor powers for each guard width.

    Realisations are drawn until ``n_cdf_samples`` powers are pooled; the
    surplus of the last realisation is dropped.
    """
    columns = [
        "R0_m", "RG_m", "phi_delta_rad", "phi_delta_deg", "n_realizations", "n_samples",
        "mean_power_dbm", *[f"p{int(q * 100)}_power_dbm" for q in CDF_QUANTILES],
    ]
    report = MetricReport("cdf", columns)
    zone0 = cfg.zone()
    per_draw = zone0.N * zone0.K
    n_real = -(-cfg.n_cdf_samples // per_draw)
    for RG in cfg.sweep_RG_m:
        zone = cfg.zone(cfg.R0_m, cfg.phi_delta_deg, RG)
        samples = np.concatenate(_map_iterations(_cdf_chunk, cfg, {"RG_m": RG}, n_real))
        cdf = EmpiricalCDF(samples[: cfg.n_cdf_samples])
        row = {
            "R0_m": cfg.R0_m,
            "RG_m": RG,
            "phi_delta_rad": zone.phi_delta,
            "phi_delta_deg": cfg.phi_delta_deg,
            "n_realizations": n_real,
            "n_samples": len(cdf),
            "mean_power_dbm": math.fsum(cdf.values) / len(cdf),
        }
        for q in CDF_QUANTILES:
            row[f"p{int(q * 100)}_power_dbm"] = float(cdf.quantile(q))
        report.rows.append(row)
        report.tables[f"RG_{_num(RG)}"] = cdf.table(n_points)
    return report


def percentile_gaps(report: MetricReport, q: float = 0.9) -> np.ndarray:
    """Drops of the ``q`` power quantile between consecutive guard widths, in dB."""
    p = report.column(f"p{int(q * 100)}_power_dbm")
    return p[:-1] - p[1:]


def spacing_curve(R0_values, phi_delta_deg_values) -> MetricReport:
    """Adjacent-sensor spacing over a grid of zone radii and angle spacings."""
    columns = ["R0_m", "phi_delta_rad", "phi_delta_deg", "d_delta_m"]
    report = MetricReport("spacing", columns)
    for phi in phi_delta_deg_values:
        rad = math.radians(phi)
        for R0 in R0_values:
            report.rows.append({
                "R0_m": float(R0),
                "phi_delta_rad": rad,
                "phi_delta_deg": float(phi),
                "d_delta_m": float(adjacent_sensor_distance(R0, rad)),
            })
    return report


def write_metadata(cfg: ExperimentConfig, path, extra: dict | None = None) -> None:
    """Run-metadata text: config echo, seed and content hash of the config."""
    with open(path, "w") as fh:
        fh.write(f"config_hash={cfg.content_hash()}\n")
        fh.write(f"master_seed={cfg.master_seed}\n")
        for k, v in (extra or {}).items():
            fh.write(f"{k}={v}\n")
        fh.write("# config\n")
        fh.write(cfg.to_text())
