"""
Predicting leakage outside the zone
===================================

Krige the received power of every transmitter at an unmonitored point on
the boundary and compare with the path-loss-only prediction.
"""

# %%
import math
import warnings

import numpy as np

from rdzleak import (
    CorrelationParams,
    PolarLocation,
    PropagationParams,
    ZoneConfig,
    fit_parameters,
    make_layout,
    predict_all,
    synthesize_measurements,
)

prop = PropagationParams(30.0, 3.5)
corr = CorrelationParams(8.0, 100.0, 0.7, 0.3)
zone = ZoneConfig.from_degrees(500.0, 50.0, 5.0)
rng = np.random.default_rng(3)

# %%
# One zone, one target halfway between two sensors.
layout = make_layout(zone, rng)
target = PolarLocation(500.0, math.radians(92.5))
m = synthesize_measurements(layout, prop, corr, rng, targets=[target])
fit = fit_parameters(m, prop.p_tx)
for n, sol in enumerate(predict_all(target, m, fit, prop.p_tx), start=1):
    base = sol.predicted_power - sol.predicted_shadowing
    print(f"tx{n}: true {m.target_powers[n - 1, 0]:7.2f}  kriged {sol.predicted_power:7.2f}  path loss {base:7.2f} dBm")

# %%
# RMSE over 100 random zones and targets.
err_k, err_b = [], []
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    for _ in range(100):
        layout = make_layout(zone, rng)
        target = PolarLocation(500.0, rng.uniform(0, 2 * math.pi))
        m = synthesize_measurements(layout, prop, corr, rng, targets=[target])
        fit = fit_parameters(m, prop.p_tx)
        for n, sol in enumerate(predict_all(target, m, fit, prop.p_tx)):
            err_k.append(sol.predicted_power - m.target_powers[n, 0])
            err_b.append(sol.predicted_power - sol.predicted_shadowing - m.target_powers[n, 0])
print(f"Kriging RMSE   {np.sqrt(np.mean(np.square(err_k))):.2f} dB")
print(f"path-loss RMSE {np.sqrt(np.mean(np.square(err_b))):.2f} dB")
