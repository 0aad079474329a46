"""Command-line front end.

Subcommands ``rmse``, ``nmse``, ``cdf`` and ``spacing`` run the Monte Carlo
sweeps and write CSV tables; ``predict`` runs the full estimate-then-Krige
pipeline once on a measurement file. Every run writes ``manifest.txt``
listing the files it produced.

Exit status: 0 on success, 2 for configuration or usage errors, 3 for
unreadable or inconsistent input data, 4 when a post-run audit fails and
1 for any other modelling error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_config
from .errors import ConfigError, RDZError
from .estimation import fit_parameters
from .experiments import (
    ExperimentConfig,
    MetricReport,
    run_nmse_sweep,
    run_power_cdf_sweep,
    run_rmse_sweep,
    spacing_curve,
    write_metadata,
)
from .geometry import PolarLocation, read_layout_csv
from .kriging import predict_all, write_predictions_csv
from .propagation import MeasurementSet

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DATA, EXIT_AUDIT = 0, 1, 2, 3, 4


class AuditFailed(RDZError):
    pass


@dataclass
class RunManifest:
    config_path: str | None
    parameters: str
    out_dir: Path
    seed: int
    subcommand: str
    started: str = ""
    finished: str = ""
    files: list = field(default_factory=list)

    def add(self, path) -> Path:
        path = Path(path)
        self.files.append(path.name)
        return path

    def missing(self) -> list[str]:
        return [f for f in self.files if not (self.out_dir / f).is_file()]

    def write(self) -> Path:
        path = self.out_dir / "manifest.txt"
        with open(path, "w") as fh:
            fh.write(f"subcommand={self.subcommand}\n")
            fh.write(f"config_path={self.config_path or '(defaults)'}\n")
            fh.write(f"out_dir={self.out_dir}\n")
            fh.write(f"seed={self.seed}\n")
            fh.write(f"started={self.started}\n")
            fh.write(f"finished={self.finished}\n")
            for f in self.files:
                fh.write(f"file={f}\n")
            fh.write("# parameters\n")
            fh.write(self.parameters)
        return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value configuration file")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--seed", metavar="U64", type=int, help="override master_seed")
    common.add_argument("--workers", metavar="N", type=int, help="override the worker-process count")
    common.add_argument("--plots", choices=("on", "off"), default="off", help="also write SVG plots")

    p = argparse.ArgumentParser(prog="rdzleak", description="Out-of-zone leakage simulation and Kriging.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("rmse", parents=[common], help="Kriging vs path-loss RMSE over R0 and phi_delta")
    sub.add_parser("nmse", parents=[common], help="parameter-estimation NMSE over phi_delta")
    sub.add_parser("cdf", parents=[common], help="boundary power distribution over guard widths")
    sub.add_parser("spacing", parents=[common], help="adjacent-sensor spacing table")
    pr = sub.add_parser("predict", parents=[common], help="predict powers at one target location")
    pr.add_argument("--layout", required=True, metavar="CSV", help="layout file (kind,id,r_m,phi_rad)")
    pr.add_argument("--measurements", required=True, metavar="CSV", help="tx_id,sn_id,power_dbm file")
    pr.add_argument("--target-r", type=float, metavar="M", help="target radius in metres (default: R0)")
    pr.add_argument("--target-phi-deg", type=float, required=True, metavar="DEG", help="target azimuth")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    try:
        return cfg.replace(**changes) if changes else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _audit_rmse(report: MetricReport) -> list[str]:
    problems = report.check()
    for row in report.rows:
        errs = np.array([
            r["y_krige_dbm"] - r["y_true_dbm"]
            for r in report.records
            if r["R0_m"] == row["R0_m"] and r["phi_delta_deg"] == row["phi_delta_deg"]
        ])
        if errs.size and not math.isclose(row["rmse_krige"] ** 2, float(np.mean(errs**2)), rel_tol=1e-9):
            problems.append(f"rmse: RMSE^2 differs from the mean squared error at R0={row['R0_m']}")
    return problems


def _cmd_rmse(cfg, out: Path, man: RunManifest, plots: bool) -> list[str]:
    rep = run_rmse_sweep(cfg)
    rep.to_csv(man.add(out / "rmse.csv"))
    write_predictions_csv(rep.records, man.add(out / "rmse_predictions.csv"), rep.record_columns)
    if plots:
        from .plots import plot_rmse

        plot_rmse(rep, man.add(out / "rmse.svg"))
    return _audit_rmse(rep)


def _cmd_nmse(cfg, out: Path, man: RunManifest, plots: bool) -> list[str]:
    rep = run_nmse_sweep(cfg)
    rep.to_csv(man.add(out / "nmse.csv"))
    rep.records_to_csv(man.add(out / "nmse_estimates.csv"))
    if plots:
        from .plots import plot_nmse

        plot_nmse(rep, man.add(out / "nmse.svg"))
    return rep.check()


def _cmd_cdf(cfg, out: Path, man: RunManifest, plots: bool) -> list[str]:
    rep = run_power_cdf_sweep(cfg)
    rep.to_csv(man.add(out / "cdf_summary.csv"))
    rows = [
        {"RG_m": row["RG_m"], "power_dbm": v, "probability": p}
        for row, table in zip(rep.rows, rep.tables.values())
        for v, p in table
    ]
    MetricReport("cdf_table", ["RG_m", "power_dbm", "probability"], rows).to_csv(man.add(out / "cdf_table.csv"))
    if plots:
        from .plots import plot_cdf

        plot_cdf(rep, man.add(out / "cdf.svg"))
    return rep.check()


def _cmd_spacing(cfg, out: Path, man: RunManifest, plots: bool) -> list[str]:
    rep = spacing_curve(cfg.spacing_R0_m, cfg.sweep_phi_deg)
    rep.to_csv(man.add(out / "spacing.csv"))
    if plots:
        from .plots import plot_spacing

        plot_spacing(rep, man.add(out / "spacing.svg"))
    return rep.check()


def _cmd_predict(cfg, out: Path, man: RunManifest, args) -> list[str]:
    try:
        layout = read_layout_csv(args.layout)
        meas = MeasurementSet.from_csv(args.measurements, layout)
    except (OSError, KeyError, ValueError) as exc:
        raise _DataError(str(exc)) from None
    r = layout.config.R0 if args.target_r is None else args.target_r
    target = PolarLocation(r, math.radians(args.target_phi_deg))
    if cfg.mode == "oracle":
        fitted = cfg.true_params()
    else:
        fitted = fit_parameters(meas, cfg.p_tx_dbm, cfg.max_lag, cfg.variogram_source)
    k_s = min(cfg.K_s, layout.K)
    sols = predict_all(target, meas, fitted, cfg.p_tx_dbm, k_s)
    records = []
    print("tx_id,y_krige_dbm,y_baseline_dbm,fallback")
    for n, s in enumerate(sols, start=1):
        base = s.predicted_power - s.predicted_shadowing
        print(f"{n},{s.predicted_power:.6f},{base:.6f},{int(s.fallback)}")
        records.append({
            "iter": 0, "target_phi_rad": target.phi, "target_phi_deg": math.degrees(target.phi),
            "tx_id": n, "y_true_dbm": math.nan, "y_krige_dbm": s.predicted_power,
            "y_baseline_dbm": base, "n_local": k_s, "fallback_flag": s.fallback,
        })
    cols = ["iter", "target_phi_rad", "target_phi_deg", "tx_id", "y_true_dbm", "y_krige_dbm",
            "y_baseline_dbm", "n_local", "fallback_flag"]
    write_predictions_csv(records, man.add(out / "predictions.csv"), cols)
    with open(man.add(out / "fitted_params.txt"), "w") as fh:
        fh.write(fitted.to_text())
    return []


class _DataError(RDZError):
    pass


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        man = RunManifest(args.config, cfg.to_text(), out, cfg.master_seed, args.command, started=_now())
        plots = args.plots == "on"
        if args.command == "predict":
            problems = _cmd_predict(cfg, out, man, args)
        else:
            handler = {"rmse": _cmd_rmse, "nmse": _cmd_nmse, "cdf": _cmd_cdf, "spacing": _cmd_spacing}
            problems = handler[args.command](cfg, out, man, plots)
            write_metadata(cfg, man.add(out / "metadata.txt"), {"subcommand": args.command})
        man.finished = _now()
        man.write()
        missing = man.missing()
        if missing:
            problems.append(f"manifest lists missing files: {', '.join(missing)}")
        if problems:
            raise AuditFailed("; ".join(problems))
    except ConfigError as exc:
        print(f"rdzleak: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DataError as exc:
        print(f"rdzleak: input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AuditFailed as exc:
        print(f"rdzleak: audit failed: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except RDZError as exc:
        print(f"rdzleak: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ImportError as exc:
        print(f"rdzleak: plotting unavailable: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
