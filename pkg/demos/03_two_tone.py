"""Two-tone IMD3: the perturbation solver, its time-domain check, and IIP3 across the band."""
import numpy as np

from xbarnl import drive, imd, ladder, mbvd
from xbarnl.platforms import PLATFORMS
from xbarnl.rfnet import FrequencyGrid

# A 100 MHz toy keeps the same f1/df structure as the 22 GHz filter but lets
# a brute-force RK4 integration resolve the products with a flat-top FFT.
toy = mbvd.from_specs(100e6, 0.47, 50, 32e-12)
top = ladder.LadderTopology([ladder.Branch("series", toy, eps=1e-3)])
for p in (-5.0, 0.0):
    s = imd.TwoToneStimulus(99.9e6, 100e3, p)
    fast = imd.imd3_spectrum(top, s)
    slow = imd.time_domain_oracle(toy, 1e-3, s)
    print(f"P {p:+.0f} dBm: IMD3 solver {fast.p_imd3_hi:7.2f} dBm, oracle {slow['imd3_hi']:7.2f} dBm")

# IIP3 is where the slope-1 and slope-3 lines meet.
# (no instrument here, so no noise floor)
recs = imd.power_sweep_records(top, imd.TwoToneStimulus(99.9e6, 100e3), np.arange(-20.0, -4.0, 2.0),
                               noise_floor=None)
r = imd.iip3_from_records(recs, noise_floor=-np.inf)
print(f"toy IIP3 {r.iip3:.2f} dBm, slopes {r.fund_slope:.3f} / {r.imd3_slope:.3f}")

# Each platform: calibrate eps once at its anchor, then sweep 17-28 GHz.
grid = FrequencyGrid.linspace(10e9, 35e9, 2001)
powers = np.arange(0.0, 21.0, 2.0)
sweeps = {}
for name, pl in PLATFORMS.items():
    t = pl.filter()
    k = drive.calibrate_coupling(t, grid, pl.tcf, pl.delta_f_max)
    kw = dict(mechanisms=("cubic", "thermal"), tcf=pl.tcf, thermal_coupling=k)
    stim = imd.TwoToneStimulus(pl.iip3_f, 1e6)
    eps = imd.calibrate_eps(t, stim, powers, pl.iip3_dbm, **kw)
    print(f"{name}: eps {eps:.3g} 1/V^2 for {pl.iip3_dbm} dBm at {pl.iip3_f / 1e9} GHz")
    sweeps[name] = imd.iip3_vs_frequency(t.with_eps(eps), 17e9, 28e9, 0.5e9, stim, powers, **kw)

print("\n  f (GHz)  sapphire  silicon")
for (f, a), (_, b) in zip(sweeps["sapphire"], sweeps["silicon"]):
    print(f"  {f / 1e9:6.1f}  {a.iip3:8.1f}  {b.iip3:7.1f}")
