"""
Zone layout and correlated shadowing
====================================

Build one zone, draw a shadowing realisation for every transmitter at the
boundary sensors, and look at how the fields of different transmitters
relate at the same sensor.
"""

# %%
# A zone of radius 500 m with a 50 m guard annulus and a sensor every
# 10 degrees. Transmitters are dropped uniformly inside the core disk.
import numpy as np

from rdzleak import CorrelationParams, PropagationParams, ZoneConfig, make_layout, synthesize_measurements
from rdzleak.shadowing import build_covariance, sensor_points

rng = np.random.default_rng(1)
zone = ZoneConfig.from_degrees(500.0, 50.0, 10.0, N=3)
layout = make_layout(zone, rng)
print(f"{zone.K} sensors, {zone.d_delta:.1f} m apart")
for n, t in enumerate(layout.transmitters, start=1):
    print(f"tx{n}: r = {t.r:6.1f} m, phi = {np.degrees(t.phi):6.1f} deg")

# %%
# Correlation structure. Neighbouring sensors are correlated through the
# exponential distance term; transmitters seen from the same sensor are
# correlated through the angle between them.
corr = CorrelationParams(sigma_w=8.0, d_cor=100.0, A=0.7, B=0.3)
cov = build_covariance(sensor_points(layout), corr, layout, covariance=False)
C = cov.entries
print("sensor 0, tx1 with tx2, tx3:", np.round(C[0, 1:3], 3))
print("tx1, sensor 0 with sensor 1:", round(C[0, 3], 3))

# %%
# One realisation of the received powers.
prop = PropagationParams(p_tx=30.0, eta=3.5)
m = synthesize_measurements(layout, prop, corr, rng)
print("powers at the first five sensors (dBm):")
print(np.round(m.powers[:, :5], 1))

# %%
# Plot the three boundary profiles if matplotlib is around.
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    ang = np.degrees([s.phi for s in layout.sensors])
    fig, ax = plt.subplots(figsize=(6, 3))
    for n in range(3):
        ax.plot(ang, m.powers[n], "o-", ms=3, label=f"tx{n + 1}")
    ax.set_xlabel("sensor azimuth (deg)")
    ax.set_ylabel("power (dBm)")
    ax.legend()
    fig.tight_layout()
    fig.savefig("demo_fields.png", dpi=100)
    print("wrote demo_fields.png")
