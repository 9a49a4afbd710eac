"""Build the third-order XBAR ladder from resonator specs and read off its metrics."""
import numpy as np

from xbarnl import ladder, mbvd, rfnet

# Each resonator is given by what a designer actually knows: fs, coupling, Q, C0.
series = mbvd.from_specs(21.9e9, 0.47, 50, 65e-15)
shunt = mbvd.from_specs(18.3e9, 0.53, 50, 130e-15)
for name, p in (("series", series), ("shunt", shunt)):
    m = mbvd.derived_metrics(p)
    print(f"{name:6s} fs {m.fs / 1e9:6.2f} GHz  fp {m.fp / 1e9:6.2f} GHz  k2 {100 * m.k2:4.1f} %  "
          f"Lm {p.lm * 1e9:.3f} nH  Cm {p.cm * 1e15:.2f} fF")

# Series resonators pass near their fs; the shunt one notches below the band.
top = ladder.reference_filter()
grid = rfnet.FrequencyGrid.linspace(10e9, 35e9, 2001)
net = ladder.assemble(top, grid)
m = ladder.filter_metrics(net)
print(f"\nfc {m.fc / 1e9:.3f} GHz, IL {m.il:.2f} dB, FBW3 {100 * m.fbw3:.1f} %, OoB {m.oob:.1f} dB, "
      f"worst in-band RL {m.rl_min:.1f} dB")
print(f"3 dB band {m.f_lo / 1e9:.2f} - {m.f_hi / 1e9:.2f} GHz")

# A coarse text plot of |S21|.
s21 = net.s_db(1, 0)
for f in np.arange(16e9, 28.1e9, 1e9):
    v = np.interp(f, grid.points, s21)
    print(f"{f / 1e9:5.1f} GHz {v:7.2f} dB " + "#" * int(max(0, 40 + 2 * v)))

# The same circuit written as Touchstone and read back.
text = rfnet.write_touchstone(net, "DB", comments=["reference ladder"])
back = rfnet.parse_touchstone(text)
print(f"\nTouchstone round trip error {np.max(np.abs(back.s - net.s)):.1e}")
