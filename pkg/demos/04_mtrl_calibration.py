"""Multiline TRL on a synthetic on-wafer kit, then a DUT pulled out of raw waves."""
import numpy as np

from xbarnl import cal, rfnet
from xbarnl.rfnet import FrequencyGrid, Network

rng = np.random.default_rng(0)
grid = FrequencyGrid.linspace(17e9, 28e9, 23)
f = grid.points
gamma = 20 * np.sqrt(f / 20e9) + 2j * np.pi * f * np.sqrt(6.0) / cal.C_LIGHT  # lossy CPW


def box():
    s = np.empty((f.size, 2, 2), complex)
    s[:, 0, 0] = 0.1 * (rng.normal(size=f.size) + 1j * rng.normal(size=f.size))
    s[:, 1, 1] = 0.1 * (rng.normal(size=f.size) + 1j * rng.normal(size=f.size))
    s[:, 0, 1] = s[:, 1, 0] = 0.9 * np.exp(1j * rng.uniform(0, 2 * np.pi, f.size))
    return Network(grid, s)


# The hidden probe/cable errors, referenced to the centre of a 200 um thru.
truth = cal.ErrorBoxes(box(), box())
lengths = [200e-6, 450e-6, 1200e-6, 2500e-6]
outer = cal.translate_boxes(truth, gamma, lengths[0] / 2)
stds = [cal.LineStandard(l, cal.embed(outer, Network(grid, rfnet.t2s(cal.line_t(gamma, l)))))
        for l in lengths]

# A short-like reflect read through each box.
g = -0.9 + 0.05j
ra = (truth.ta[:, 0, 0] * g + truth.ta[:, 0, 1]) / (truth.ta[:, 1, 0] * g + truth.ta[:, 1, 1])
p = np.linalg.inv(truth.tb)
rb = (p[:, 1, 0] + p[:, 1, 1] * g) / (p[:, 0, 0] + p[:, 0, 1] * g)

res = cal.mtrl(stds[0], stds[1:], (ra, rb), reflect_guess=-1, ereff_est=5.5)
ereff = (res.gamma.imag * cal.C_LIGHT / (2 * np.pi * f)) ** 2
print(f"ereff {ereff.min():.6f} - {ereff.max():.6f}, alpha at 20 GHz "
      f"{np.interp(20e9, f, res.gamma.real):.3f} Np/m")
print(f"gamma error {np.max(np.abs(res.gamma / gamma - 1)):.1e}, reflect {np.mean(res.reflect):.4f}")

# An unknown two-port measured through the same probes.
dut = box()
got = cal.apply_calibration(res.boxes, cal.embed(truth, dut))
print(f"DUT recovered to {np.max(np.abs(got.s - dut.s)):.1e}")
