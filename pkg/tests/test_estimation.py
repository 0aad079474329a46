import math
import warnings

import numpy as np
import pytest

from rdzleak.errors import DegenerateVariogram, EstimationFailed, InsufficientSources, SingularDesign
from rdzleak.estimation import (
    FitQualityWarning,
    FittedParams,
    Semivariogram,
    _feasible_grid,
    cross_coeff_loglik,
    dcor_from_range,
    empirical_semivariogram,
    estimate_cross_coeffs,
    estimate_eta,
    estimate_sigma_w,
    exponential_variogram,
    extract_residuals,
    fit_parameters,
    fit_variogram,
)
from rdzleak.geometry import PolarLocation, ZoneConfig, ZoneLayout, angle_cosines, make_layout
from rdzleak.propagation import MeasurementSet, PropagationParams, mean_power, synthesize_measurements
from rdzleak.shadowing import CorrelationParams

from conftest import fixed_layout

PROP = PropagationParams(30.0, 3.5)
CORR = CorrelationParams(8.0, 100.0, 0.7, 0.3)


def noiseless(layout):
    return MeasurementSet(layout, mean_power(PROP, layout.tx_sensor_distances))


def simulate(deg, seed, R0=500.0):
    rng = np.random.default_rng(seed)
    layout = make_layout(ZoneConfig.from_degrees(R0, R0 / 10, deg), rng)
    return synthesize_measurements(layout, PROP, CORR, rng)


def test_eta_noiseless(layout_10deg):
    assert estimate_eta(noiseless(layout_10deg), 30.0) == pytest.approx(3.5, abs=1e-9)


def test_eta_two_point_closed_form():
    cfg = ZoneConfig(500.0, 50.0, math.pi, N=1)
    lay = ZoneLayout(cfg, (PolarLocation(200.0, 0.0),))
    y = np.array([[-40.0, -75.0]])
    x = -10 * np.log10(lay.tx_sensor_distances[0])
    slope = (x[0] * (y[0, 0] - 30) + x[1] * (y[0, 1] - 30)) / (x[0] ** 2 + x[1] ** 2)
    assert estimate_eta(MeasurementSet(lay, y), 30.0) == pytest.approx(slope, rel=1e-14)


def test_eta_singular_design():
    cfg = ZoneConfig.from_degrees(500.0, 50.0, 10.0, 1)
    lay = ZoneLayout(cfg, (PolarLocation(0.0, 0.0),))
    with pytest.raises(SingularDesign):
        estimate_eta(noiseless(lay), 30.0)


def test_eta_unbiased_over_seeds():
    etas = [estimate_eta(simulate(10, s), 30.0) for s in range(500)]
    assert abs(np.mean(etas) - 3.5) < 0.02


def test_residual_identities(layout_10deg):
    m0 = noiseless(layout_10deg)
    np.testing.assert_allclose(extract_residuals(m0, 3.5, 30.0), 0.0, atol=1e-12)
    m = synthesize_measurements(layout_10deg, PROP, CORR, np.random.default_rng(2))
    np.testing.assert_allclose(extract_residuals(m, 3.5, 30.0), m.shadowing_truth, atol=1e-12)
    biased = extract_residuals(m, 3.6, 30.0)
    np.testing.assert_allclose(biased - m.shadowing_truth, np.log10(layout_10deg.tx_sensor_distances), atol=1e-12)


def test_sigma_examples():
    assert estimate_sigma_w(np.zeros((3, 4))) == 0.0
    assert estimate_sigma_w([-1.0, 1.0]) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        estimate_sigma_w([1.0])


@pytest.mark.xfail(
    strict=True,
    reason="the no-intercept path-loss fit absorbs the common shadowing component, "
    "so the residual spread settles near 7.6 dB rather than 8",
)
def test_sigma_ensemble_matches_reference():
    s = [estimate_sigma_w(extract_residuals(m, estimate_eta(m, 30.0), 30.0)) for m in (simulate(10, i) for i in range(300))]
    assert abs(np.mean(s) - 8.0) <= 0.3


def brute_loglik(res, layout, sigma, A, B, eps=1e-9):
    cos = angle_cosines(layout.tx_xy, layout.sensor_xy)
    total = 0.0
    N = layout.N
    for k in range(layout.K):
        C = sigma**2 * (A * cos[k] + B + (1 - A - B + eps) * np.eye(N))
        w = res[:, k]
        total += -0.5 * (np.linalg.slogdet(C)[1] + w @ np.linalg.solve(C, w))
    return total


def test_loglik_matches_direct_evaluation(layout_10deg):
    m = synthesize_measurements(layout_10deg, PROP, CORR, np.random.default_rng(3))
    r = m.shadowing_truth
    s = estimate_sigma_w(r)
    A = np.array([0.0, 0.2, 0.7, 0.5, 0.1])
    B = np.array([0.0, 0.5, 0.3, 0.499, 0.0])
    got = cross_coeff_loglik(r, layout_10deg, s, A, B)
    for a, b, g in zip(A, B, got):
        assert g == pytest.approx(brute_loglik(r, layout_10deg, s, a, b), rel=1e-8)
    assert cross_coeff_loglik(r, layout_10deg, s, 0.7, 0.3) == pytest.approx(got[2])


def test_grid_argmax_matches_exhaustive_single_sensor():
    cfg = ZoneConfig(500.0, 50.0, math.pi, N=2)
    lay = ZoneLayout(cfg, (PolarLocation(100.0, 0.5), PolarLocation(300.0, 2.5)))
    r = np.array([[3.0, -1.0], [2.0, 4.0]])
    s = 8.0
    a_hat, b_hat = estimate_cross_coeffs(r, lay, s, refine_step=None)
    A, B = _feasible_grid(0.01, 1e-3)
    vals = [brute_loglik(r, lay, s, a, b) for a, b in zip(A, B)]
    best = int(np.argmax(vals))
    assert (a_hat, b_hat) == (pytest.approx(A[best]), pytest.approx(B[best]))


def test_refinement_never_worse(layout_10deg):
    for seed in range(5):
        m = synthesize_measurements(layout_10deg, PROP, CORR, np.random.default_rng(seed))
        r = m.shadowing_truth
        s = estimate_sigma_w(r)
        coarse = estimate_cross_coeffs(r, layout_10deg, s, refine_step=None)
        fine = estimate_cross_coeffs(r, layout_10deg, s)
        assert cross_coeff_loglik(r, layout_10deg, s, *fine) >= cross_coeff_loglik(r, layout_10deg, s, *coarse)
        assert fine[0] >= 0 and fine[1] >= 0 and sum(fine) <= 0.999 + 1e-12


def test_cross_coeffs_errors(layout_10deg):
    lay1 = make_layout(ZoneConfig.from_degrees(500.0, 50.0, 10.0, 1), np.random.default_rng(0))
    with pytest.raises(InsufficientSources):
        estimate_cross_coeffs(np.zeros((1, 36)), lay1, 8.0)
    with pytest.raises(EstimationFailed):
        estimate_cross_coeffs(np.zeros((3, 36)), layout_10deg, 0.0)


def test_cross_coeffs_iid_gives_small_A():
    rng = np.random.default_rng(8)
    est = []
    for _ in range(40):
        lay = make_layout(ZoneConfig.from_degrees(500.0, 50.0, 10.0), rng)
        w = rng.normal(0.0, 8.0, (3, 36))
        est.append(estimate_cross_coeffs(w, lay, estimate_sigma_w(w)))
    assert np.mean(est, axis=0)[0] < 0.05


def test_cross_coeffs_recover_reference_values():
    est = []
    for seed in range(200):
        m = simulate(5, seed)
        r = extract_residuals(m, estimate_eta(m, 30.0), 30.0)
        est.append(estimate_cross_coeffs(r, m.layout, estimate_sigma_w(r)))
    a, b = np.mean(est, axis=0)
    assert abs(a - 0.7) <= 0.05 and abs(b - 0.3) <= 0.05


def test_true_params_beat_independence_on_average():
    wins = []
    for seed in range(30):
        m = simulate(10, seed)
        r = m.shadowing_truth
        s = estimate_sigma_w(r)
        wins.append(cross_coeff_loglik(r, m.layout, s, 0.7, 0.3) - cross_coeff_loglik(r, m.layout, s, 0.0, 0.0))
    assert np.mean(wins) > 0


def test_semivariogram_constant_field(layout_10deg):
    m = MeasurementSet(layout_10deg, np.full((3, 36), -70.0))
    vg = empirical_semivariogram(m)
    np.testing.assert_array_equal(vg.gamma, 0.0)
    np.testing.assert_array_equal(vg.pairs, [3 * 35, 3 * 34, 3 * 33])
    np.testing.assert_allclose(vg.lag_distance, np.arange(1, 4) * layout_10deg.config.d_delta)
    with pytest.raises(ValueError):
        empirical_semivariogram(m, max_lag=36)


def test_semivariogram_direct_summation(layout_10deg):
    m = noiseless(layout_10deg)
    vg = empirical_semivariogram(m, max_lag=3)
    y = m.powers
    for M in (1, 2, 3):
        total = sum((y[n, k + M] - y[n, k]) ** 2 for n in range(3) for k in range(36 - M))
        assert vg.gamma[M - 1] == pytest.approx(total / (2 * 3 * (36 - M)), rel=1e-12)


def test_semivariogram_ensemble_lag_one():
    # 64 * (1 - 0.5 ** (43.58 / 100)) = 16.69 dB^2 at the first lag for 5 degrees
    target = 64.0 * (1 - 0.5 ** (ZoneConfig.from_degrees(500, 50, 5).d_delta / 100.0))
    assert target == pytest.approx(16.69, abs=0.01)
    sims = [simulate(5, s) for s in range(200)]
    g_truth = np.mean([empirical_semivariogram(m, values=m.shadowing_truth).gamma[0] for m in sims])
    g_powers = np.mean([empirical_semivariogram(m).gamma[0] for m in sims])
    assert abs(g_truth / target - 1) < 0.10
    assert abs(g_powers / target - 1) < 0.10


def test_variogram_noiseless_inversion():
    h = np.array([43.6, 87.2, 130.8])
    vg = Semivariogram(h, exponential_variogram(h, 64.0, 144.27), np.ones(3))
    D, E = fit_variogram(vg, sill_max=256.0, range_max=5000.0)
    assert D == pytest.approx(64.0, rel=0.01)
    assert E == pytest.approx(144.27, rel=0.01)


def test_variogram_flat_hits_bound_with_warning():
    vg = Semivariogram(np.array([50.0, 100.0, 150.0]), np.full(3, 20.0), np.ones(3))
    with pytest.warns(FitQualityWarning):
        D, E = fit_variogram(vg, sill_max=100.0, range_max=1000.0)
    assert D == pytest.approx(20.0, rel=1e-3)
    assert E <= 1000.0 * 1e-4 * 1.1


def test_variogram_degenerate():
    with pytest.raises(DegenerateVariogram):
        fit_variogram(Semivariogram(np.array([1.0, 2.0]), np.zeros(2), np.ones(2)))


def test_variogram_ensemble_average_range():
    sims = [simulate(10, s) for s in range(300)]
    g = np.mean([empirical_semivariogram(m, values=extract_residuals(m, estimate_eta(m, 30.0), 30.0)).gamma for m in sims], axis=0)
    h = np.arange(1, 4) * sims[0].layout.config.d_delta
    _, E = fit_variogram(Semivariogram(h, g, None), sill_max=256.0, range_max=5000.0)
    assert abs(dcor_from_range(E) / 100.0 - 1) <= 0.15


def test_dcor_from_range():
    assert dcor_from_range(1 / math.log(2)) == pytest.approx(1.0)
    assert dcor_from_range(144.27) == pytest.approx(100.0, abs=0.01)
    with pytest.raises(ValueError):
        dcor_from_range(0.0)


def test_fitted_params_roundtrip():
    f = FittedParams(3.49, 7.9, 0.68, 0.31, 101.5, 63.2, 146.4)
    assert FittedParams.from_text(f.to_text()) == f
    assert FittedParams.csv_header()[:5] == ["eta", "sigma_w", "A", "B", "d_cor"]
    assert [float(v) for v in f.csv_row()] == [3.49, 7.9, 0.68, 0.31, 101.5, 63.2, 146.4]


def test_fit_parameters_invariants():
    for seed in range(5):
        m = simulate(10, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitQualityWarning)
            f = fit_parameters(m, 30.0)
            g = fit_parameters(m, 30.0)
        assert f == g
        assert f.A + f.B <= 1.0 and f.d_cor > 0
        assert f.d_cor == pytest.approx(f.range_ * math.log(2))
    with pytest.raises(ValueError):
        fit_parameters(m, 30.0, variogram_source="other")


def test_fit_parameters_single_transmitter():
    lay = fixed_layout([(200.0, 30.0)])
    m = synthesize_measurements(lay, PROP, CORR, np.random.default_rng(1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitQualityWarning)
        f = fit_parameters(m, 30.0)
    assert (f.A, f.B) == (0.0, 1.0)


def test_semivariogram_csv(tmp_path, layout_10deg):
    vg = empirical_semivariogram(noiseless(layout_10deg))
    vg.to_csv(tmp_path / "vg.csv")
    lines = (tmp_path / "vg.csv").read_text().splitlines()
    assert lines[0] == "lag_m,gamma,pairs" and len(lines) == 4
