import math

import numpy as np
import pytest

from rdzleak.experiments import (
    EXP_CDF,
    EXP_RMSE,
    ExperimentConfig,
    iteration_rng,
    normalized_rmse,
    percentile_gaps,
    run_nmse_sweep,
    run_power_cdf_sweep,
    run_rmse_sweep,
    spacing_curve,
    write_metadata,
)

SMALL = dict(sweep_phi_deg=(10.0,), sweep_R0_m=(500.0,), n_iterations=6)


def test_config_defaults_and_validation():
    cfg = ExperimentConfig()
    assert cfg.guard_width(1000.0) == 100.0
    assert cfg.zone().K == 36
    with pytest.raises(ValueError):
        ExperimentConfig(RG_m=600.0)
    with pytest.raises(ValueError):
        ExperimentConfig(mode="magic")
    with pytest.raises(ValueError):
        ExperimentConfig(K_s=20, sweep_phi_deg=(30.0,))
    with pytest.raises(ValueError):
        ExperimentConfig(n_iterations=0)


def test_config_text_and_hash_stable():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.to_text() == b.to_text() and a.content_hash() == b.content_hash()
    assert "RG_m=auto" in a.to_text()
    assert "sweep_phi_deg=5,10,15,20,30" in a.to_text()
    assert a.replace(master_seed=1).content_hash() != a.content_hash()


def test_iteration_rng_independent_streams():
    x = iteration_rng(1, EXP_RMSE, 0).random(4)
    np.testing.assert_array_equal(x, iteration_rng(1, EXP_RMSE, 0).random(4))
    assert not np.allclose(x, iteration_rng(1, EXP_RMSE, 1).random(4))
    assert not np.allclose(x, iteration_rng(1, EXP_CDF, 0).random(4))


def test_oracle_without_shadowing_has_zero_rmse():
    cfg = ExperimentConfig(sigma_w_db=0.0, mode="oracle", **SMALL)
    rep = run_rmse_sweep(cfg)
    row = rep.rows[0]
    assert row["rmse_krige"] == pytest.approx(0.0, abs=1e-9)
    assert row["rmse_baseline"] == pytest.approx(0.0, abs=1e-9)
    assert row["n_predictions"] == 6 * 3 and row["n_failed"] == 0


def test_single_iteration_rmse_is_pooled_error():
    rep = run_rmse_sweep(ExperimentConfig(mode="oracle", **{**SMALL, "n_iterations": 1}))
    errs = np.array([r["y_krige_dbm"] - r["y_true_dbm"] for r in rep.records])
    assert rep.rows[0]["rmse_krige"] == pytest.approx(math.sqrt(np.mean(errs**2)), rel=1e-12)
    assert len(rep.records) == 3
    for n in (1, 2, 3):
        assert rep.rows[0][f"rmse_krige_tx{n}"] == pytest.approx(abs(errs[n - 1]), rel=1e-12)


def test_rmse_records_consistent():
    rep = run_rmse_sweep(ExperimentConfig(**SMALL))
    assert rep.check() == []
    assert set(rep.record_columns) <= set(rep.records[0])
    r = rep.records[0]
    assert r["target_phi_deg"] == pytest.approx(math.degrees(r["target_phi_rad"]))


def test_workers_do_not_change_results(tmp_path):
    one = run_rmse_sweep(ExperimentConfig(**SMALL))
    two = run_rmse_sweep(ExperimentConfig(workers=2, **SMALL))
    one.to_csv(tmp_path / "a.csv")
    two.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_normalized_rmse():
    assert normalized_rmse(3.5, [3.5, 3.5]) == 0.0
    assert normalized_rmse(2.0, [1.0, 3.0]) == pytest.approx(0.5)
    assert normalized_rmse(0.0, [0.1, -0.1]) == pytest.approx(0.1)
    assert math.isnan(normalized_rmse(1.0, []))


def test_nmse_sweep_small():
    rep = run_nmse_sweep(ExperimentConfig(**SMALL))
    row = rep.rows[0]
    assert row["n_failed"] == 0 and len(rep.records) == 6
    etas = np.array([r["eta"] for r in rep.records])
    assert row["nmse_eta"] == pytest.approx(math.sqrt(np.mean(((3.5 - etas) / 3.5) ** 2)))
    assert row["mean_eta"] == pytest.approx(etas.mean())
    with pytest.raises(ValueError):
        run_nmse_sweep(ExperimentConfig(N=1, **SMALL))


def test_cdf_sweep_small():
    cfg = ExperimentConfig(n_cdf_samples=250, sweep_RG_m=(50.0, 300.0))
    rep = run_power_cdf_sweep(cfg)
    assert [r["n_samples"] for r in rep.rows] == [250, 250]
    assert rep.rows[0]["n_realizations"] == 3
    for row in rep.rows:
        assert row["p10_power_dbm"] <= row["p50_power_dbm"] <= row["p90_power_dbm"]
    t = rep.tables["RG_50"]
    assert np.all(np.diff(t[:, 1]) >= 0) and t[-1, 1] == 1.0
    assert percentile_gaps(rep).shape == (1,)


def test_spacing_examples():
    rep = spacing_curve([500.0], [10.0])
    assert rep.rows[0]["d_delta_m"] == pytest.approx(87.156, abs=1e-3)
    curve = spacing_curve(np.arange(100, 2001, 0.1), [10.0])
    d = curve.column("d_delta_m")
    crossing = curve.column("R0_m")[np.argmax(d >= 100.0)]
    assert crossing == pytest.approx(573.7, abs=0.1)


def test_metadata(tmp_path):
    cfg = ExperimentConfig()
    write_metadata(cfg, tmp_path / "m.txt", {"subcommand": "rmse"})
    text = (tmp_path / "m.txt").read_text()
    assert text.startswith(f"config_hash={cfg.content_hash()}\nmaster_seed=20240611\nsubcommand=rmse\n")
    assert text.endswith(cfg.to_text())
