"""Single-node lumped thermal model of a suspended resonator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ThermalNode", "SAPPHIRE", "SILICON", "steady_state_rise", "step_response",
           "envelope_transfer"]


@dataclass(frozen=True)
class ThermalNode:
    """Thermal conductance ``g`` (W/K) and capacitance ``c`` (J/K) to ambient."""

    g: float
    c: float

    def __post_init__(self):
        if not (self.g > 0 and self.c > 0 and np.isfinite(self.g) and np.isfinite(self.c)):
            raise ValueError("thermal conductance and capacitance must be finite and > 0")

    @property
    def tau(self):
        return self.c / self.g

    @classmethod
    def from_tau(cls, g, tau):
        return cls(g=g, c=g * tau)


# LiNbO3-aSi-Al2O3 and LiNbO3-aSi-Si suspended XBARs (G, tau from thermal FEA)
SAPPHIRE = ThermalNode.from_tau(270e-6, 14e-6)
SILICON = ThermalNode.from_tau(109e-6, 37e-6)


def steady_state_rise(p, node):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("dissipated power must be >= 0")
    return p / node.g


def step_response(p, node, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be >= 0")
    return steady_state_rise(p, node) * -np.expm1(-t / node.tau)


def envelope_transfer(node, f_env):
    """First-order low-pass seen by a power envelope at ``f_env`` Hz."""
    f_env = np.asarray(f_env, dtype=float)
    if np.any(f_env < 0):
        raise ValueError("envelope frequency must be >= 0")
    return 1 / (1 + 2j * np.pi * f_env * node.tau)
