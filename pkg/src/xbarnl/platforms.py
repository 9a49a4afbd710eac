"""
The two XBAR filter platforms: LiNbO3-aSi-Al2O3 (sapphire) and LiNbO3-aSi-Si.

Resonator values are the fitted (fs, k2, Q) of the fabricated series and shunt
resonators; thermal nodes come from the thermal FEA. Absolute static
capacitances are not known, so both platforms share one layout scale chosen
to put the simulated IL and bandwidth near the measured filters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import ladder
from .thermal import SAPPHIRE, SILICON, ThermalNode

__all__ = ["Platform", "PLATFORMS", "get_platform"]

TCF_PPM_PER_K = -80.0


@dataclass(frozen=True)
class Platform:
    name: str
    series: dict
    shunt: dict
    thermal: ThermalNode
    c0_series: float = 25e-15
    c0_ratio: float = 2.0
    tcf: float = TCF_PPM_PER_K
    # measured reference points
    delta_f_max: float = 0.0  # Hz, edge drift -9 -> +17 dBm
    delta_il_max: float = 0.0  # dB at 22.2 GHz
    iip3_dbm: float = 0.0
    iip3_f: float = 0.0
    measured: dict = field(default_factory=dict)

    def filter(self, eps=0.0, order="series-shunt-series"):
        return ladder.third_order_ladder(self.series, self.shunt, self.c0_series, self.c0_ratio,
                                         order, self.thermal, eps)


PLATFORMS = {
    "sapphire": Platform(
        "sapphire",
        series={"fs": 21.9e9, "k2": 0.42, "q": 80.0},
        shunt={"fs": 18.0e9, "k2": 0.42, "q": 80.0},
        thermal=SAPPHIRE,
        delta_f_max=29e6, delta_il_max=0.09, iip3_dbm=50.8, iip3_f=22.1e9,
        measured={"fc": 21.8e9, "il": 1.48, "fbw3": 0.177},
    ),
    "silicon": Platform(
        "silicon",
        series={"fs": 22.3e9, "k2": 0.45, "q": 32.0},
        shunt={"fs": 17.8e9, "k2": 0.46, "q": 60.0},
        thermal=SILICON,
        delta_f_max=125e6, delta_il_max=0.2, iip3_dbm=46.5, iip3_f=21.1e9,
        measured={"fc": 21.6e9, "il": 2.47, "fbw3": 0.186},
    ),
}


def get_platform(name):
    try:
        return PLATFORMS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown platform {name!r}; choose from {sorted(PLATFORMS)}") from None
