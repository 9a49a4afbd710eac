"""Self-heating of the two platforms: thermal node numbers, then the power sweep."""
import numpy as np

from xbarnl import drive, ladder, thermal
from xbarnl.platforms import PLATFORMS
from xbarnl.rfnet import FrequencyGrid

for name, pl in PLATFORMS.items():
    node = pl.thermal
    print(f"{name:8s} G {node.g * 1e6:.0f} uW/K  tau {node.tau * 1e6:.1f} us  "
          f"100 uW -> {thermal.steady_state_rise(100e-6, node):.3f} K  "
          f"|H(1 MHz)| {abs(thermal.envelope_transfer(node, 1e6)):.4f}")

# With TCF = -80 ppm/K every kelvin pulls the band down by 80 ppm.
print(f"\n17 K -> {17 * 80} ppm, 70 K -> {70 * 80} ppm")

grid = FrequencyGrid.linspace(10e9, 35e9, 2001)
powers = np.arange(-9.0, 18.0, 2.0)
for name, pl in PLATFORMS.items():
    top = pl.filter()
    # one scalar says how much of the branch dissipation reaches the film
    k = drive.calibrate_coupling(top, grid, pl.tcf, pl.delta_f_max)
    r = drive.power_sweep(top, grid, powers, pl.tcf, 22.2e9, coupling=k, keep_operating_points=True)
    print(f"\n{name}: coupling {k:.3f}")
    print(" P (dBm)  dIL (dB)  df (MHz)  hottest dT (K)")
    for p, dil, df, op in zip(r.powers, r.delta_il, r.delta_f, r.operating_points):
        print(f"  {p:+5.0f}   {dil:+7.3f}   {df / 1e6:+7.1f}   {np.max(op.delta_t):7.1f}")
