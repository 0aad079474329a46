import math

import numpy as np
import pytest

from rdzleak.geometry import PolarLocation, ZoneConfig, ZoneLayout, make_layout
from rdzleak.propagation import PropagationParams
from rdzleak.shadowing import CorrelationParams


@pytest.fixture
def reference_params():
    return PropagationParams(30.0, 3.5), CorrelationParams(8.0, 100.0, 0.7, 0.3)


@pytest.fixture
def layout_10deg():
    cfg = ZoneConfig.from_degrees(500.0, 50.0, 10.0, 3)
    return make_layout(cfg, np.random.default_rng(7))


def fixed_layout(txs, R0=500.0, RG=50.0, phi_deg=10.0):
    """Layout with transmitters given as ``(r, phi_deg)`` pairs."""
    cfg = ZoneConfig.from_degrees(R0, RG, phi_deg, len(txs))
    return ZoneLayout(cfg, tuple(PolarLocation(r, math.radians(p)) for r, p in txs))
