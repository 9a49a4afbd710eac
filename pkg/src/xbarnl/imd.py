"""
Two-tone third-order intermodulation of ladder filters.

Two distortion mechanisms live in each branch's motional arm:

* cubic: the motional capacitor voltage is ``x + eps*x**3`` with ``x = q/cm``;
* thermal: the dissipated-power beat at ``delta_f`` heats the branch node,
  which is low-passed by the thermal time constant and modulates ``lm``
  through the TCF.

Both are treated to first order. The linear network is solved at f1 and
f2, each branch's distortion voltage at 2f1-f2 and 2f2-f1 is formed from
those currents, and the sources are re-injected into the linear network at
the product frequencies.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import ladder
from .thermal import envelope_transfer

__all__ = [
    "TwoToneStimulus",
    "TwoToneRecord",
    "Iip3Result",
    "SensitivityLimitError",
    "OracleInstabilityError",
    "NEG_INF_DBM",
    "imd3_spectrum",
    "power_sweep_records",
    "iip3_from_records",
    "iip3_vs_frequency",
    "calibrate_eps",
    "sweep_frequencies",
    "time_domain_oracle",
    "read_two_tone_csv",
    "write_two_tone_csv",
]

Z_LOAD = 50.0
#: marker for an exactly zero product (perfectly linear network)
NEG_INF_DBM = -np.inf


class SensitivityLimitError(ValueError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class OracleInstabilityError(ArithmeticError):
    pass


def _dbm(p_w):
    p_w = np.asarray(p_w, dtype=float)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(p_w) + 30


def _w(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, dtype=float) / 10)


@dataclass(frozen=True)
class TwoToneStimulus:
    """Tones at ``f1`` and ``f1 + delta_f``; ``p_per_tone`` in dBm (available)."""

    f1: float
    delta_f: float
    p_per_tone: float = 0.0

    def __post_init__(self):
        if not self.f1 > 0 or not self.delta_f > 0:
            raise ValueError("f1 and delta_f must be > 0")
        if self.delta_f >= self.f1:
            raise ValueError("delta_f must be much smaller than f1")

    @property
    def f2(self):
        return self.f1 + self.delta_f

    @property
    def f_lo(self):
        return 2 * self.f1 - self.f2

    @property
    def f_hi(self):
        return 2 * self.f2 - self.f1

    def at(self, p_per_tone=None, f1=None):
        return TwoToneStimulus(self.f1 if f1 is None else f1, self.delta_f,
                               self.p_per_tone if p_per_tone is None else p_per_tone)

    @classmethod
    def from_total_power(cls, f1, delta_f, p_total):
        """Two equal tones sharing ``p_total`` dBm (each 3.01 dB lower)."""
        return cls(f1, delta_f, p_total - 10 * np.log10(2))


@dataclass(frozen=True)
class TwoToneRecord:
    p_in: float  # dBm per tone
    p_fund: float  # dBm at f1 into the load
    p_imd3_lo: float  # dBm at 2f1 - f2
    p_imd3_hi: float  # dBm at 2f2 - f1

    def imd3(self, product="max"):
        if product == "lo":
            return self.p_imd3_lo
        if product == "hi":
            return self.p_imd3_hi
        if product == "max":
            return max(self.p_imd3_lo, self.p_imd3_hi)
        raise ValueError(f"product must be 'lo', 'hi' or 'max', got {product!r}")


@dataclass(frozen=True)
class Iip3Result:
    iip3: float
    fund_slope: float
    imd3_slope: float
    fit_range: tuple
    clipped_by_sensitivity: bool = False
    n_points: int = 0


# ---------------------------------------------------------------------------
# perturbation solver


def _branch_state(topology, f, v_src):
    """Branch current, motional current and core split factor at ``f``."""
    sol = ladder.solve(topology, f, v_src, Z_LOAD, Z_LOAD)
    i_b = sol.i_branch[0]
    w = 2 * np.pi * f
    im, zc0, zm = [], [], []
    for k, b in enumerate(topology.branches):
        p = b.resonator
        zmk = p.rm + 1j * w * p.lm + 1 / (1j * w * p.cm)
        zc = 1 / (1j * w * p.c0)
        # current divider between c0 and the motional arm
        im.append(i_b[k] * zc / (zc + zmk))
        zc0.append(zc)
        zm.append(zmk)
    return sol, i_b, np.array(im), np.array(zc0), np.array(zm)


def _inject(topology, f, e_motional):
    """Load voltage produced by series sources ``e_motional`` in the motional arms."""
    zb = ladder.branch_impedances(topology, f)[0]
    w = 2 * np.pi * f
    pairs, nnodes = ladder._node_map(topology.orientations)
    j = np.zeros((1, nnodes), dtype=complex)
    for k, (b, (na, nb)) in enumerate(zip(topology.branches, pairs)):
        if e_motional[k] == 0:
            continue
        p = b.resonator
        zm = p.rm + 1j * w * p.lm + 1 / (1j * w * p.cm)
        zc = 1 / (1j * w * p.c0)
        e = e_motional[k] * zc / (zc + zm)  # Thevenin EMF seen at the branch terminals
        j[0, na] += e / zb[k]
        if nb >= 0:
            j[0, nb] -= e / zb[k]
    sol = ladder.solve(topology, f, 0.0, Z_LOAD, Z_LOAD, zb=zb[None, :], injections=j)
    return sol.v_out[0]


def imd3_spectrum(topology, stim, mechanisms=("cubic",), tcf=-80.0, thermal_coupling=1.0,
                  noise_floor=None):
    """Fundamental and IMD3 output powers for one two-tone stimulus.

    Parameters
    ----------
    topology : LadderTopology
        Per-branch ``eps`` (1/V^2) drives the cubic mechanism; per-branch
        ``thermal`` nodes drive the thermal one.
    stim : TwoToneStimulus
    mechanisms : iterable of {"cubic", "thermal"}
    tcf : float
        ppm/K, used by the thermal mechanism.
    thermal_coupling : float
        Fraction of branch dissipation reaching the thermal node.
    noise_floor : float or None
        dBm added (in linear power) to every output when given.

    Returns
    -------
    TwoToneRecord
        Products that are exactly zero are reported as ``-inf`` dBm.
    """
    mechanisms = set(mechanisms)
    unknown = mechanisms - {"cubic", "thermal"}
    if unknown:
        raise ValueError(f"unknown mechanism(s) {sorted(unknown)}")
    if stim.f_lo <= 0:
        raise ValueError("lower IMD3 frequency 2*f1 - f2 is not positive")
    v = ladder.source_voltage(_w(stim.p_per_tone), Z_LOAD)
    sol1, i1, im1, _, _ = _branch_state(topology, stim.f1, v)
    sol2, i2, im2, _, _ = _branch_state(topology, stim.f2, v)
    nb = len(topology)
    e_lo = np.zeros(nb, dtype=complex)
    e_hi = np.zeros(nb, dtype=complex)

    if "cubic" in mechanisms:
        for k, b in enumerate(topology.branches):
            if b.eps == 0:
                continue
            cm = b.resonator.cm
            x1 = im1[k] / (2j * np.pi * stim.f1 * cm)
            x2 = im2[k] / (2j * np.pi * stim.f2 * cm)
            e_lo[k] += b.eps * 0.75 * x1 * x1 * np.conj(x2)
            e_hi[k] += b.eps * 0.75 * x2 * x2 * np.conj(x1)

    if "thermal" in mechanisms and tcf != 0:
        alpha = tcf * 1e-6
        for k, b in enumerate(topology.branches):
            if b.thermal is None:
                continue
            p = b.resonator
            # dissipation beat at f2 - f1 (peak phasor)
            p_env = p.rm * im2[k] * np.conj(im1[k]) + p.rs * i2[k] * np.conj(i1[k])
            dt_env = thermal_coupling * envelope_transfer(b.thermal, stim.delta_f) * p_env / b.thermal.g
            dl = -2 * alpha * p.lm * dt_env
            # d/dt of L(t) i(t): mixing products at f1 - df and f2 + df
            e_lo[k] += 2j * np.pi * stim.f_lo * 0.5 * np.conj(dl) * im1[k]
            e_hi[k] += 2j * np.pi * stim.f_hi * 0.5 * dl * im2[k]

    v_lo = _inject(topology, stim.f_lo, e_lo) if np.any(e_lo) else 0.0
    v_hi = _inject(topology, stim.f_hi, e_hi) if np.any(e_hi) else 0.0
    p = np.array([abs(sol1.v_out[0]) ** 2, abs(v_lo) ** 2, abs(v_hi) ** 2]) / (2 * Z_LOAD)
    if noise_floor is not None:
        p = p + _w(noise_floor)
    p_fund, p_lo, p_hi = _dbm(p)
    return TwoToneRecord(float(stim.p_per_tone), float(p_fund), float(p_lo), float(p_hi))


def power_sweep_records(topology, stim, powers, **kw):
    """:func:`imd3_spectrum` at each per-tone power in ``powers`` (dBm)."""
    return [imd3_spectrum(topology, stim.at(p_per_tone=float(p)), **kw) for p in powers]


# ---------------------------------------------------------------------------
# IIP3 extraction


def _local_slopes(p_in, y):
    if p_in.size < 2:
        return np.full(p_in.size, np.nan)
    with np.errstate(invalid="ignore"):
        return np.gradient(y, p_in)


def iip3_from_records(records, noise_floor=-110.0, product="max", min_points=4):
    """Fixed-slope (1 and 3) line fit and their intersection.

    Only records whose IMD3 is at least 3 dB above ``noise_floor`` and whose
    local IMD3 slope lies in [2.7, 3.3] are used. With a single qualifying
    record the slope test is skipped.

    Raises
    ------
    SensitivityLimitError
        Fewer than ``min_points`` qualifying records; ``.result`` holds the
        partial estimate (or None) with ``clipped_by_sensitivity`` set.
    """
    recs = sorted(records, key=lambda r: r.p_in)
    p_in = np.array([r.p_in for r in recs], dtype=float)
    fund = np.array([r.p_fund for r in recs], dtype=float)
    imd = np.array([r.imd3(product) for r in recs], dtype=float)
    above = np.isfinite(imd) & (imd > noise_floor + 3.0)
    ok = above.copy()
    if above.sum() >= 2:
        slope = _local_slopes(p_in[above], imd[above])
        ok[above] = (slope >= 2.7) & (slope <= 3.3)
    n = int(ok.sum())
    if n == 0:
        raise SensitivityLimitError("no IMD3 points above the sensitivity limit",
                                    Iip3Result(np.nan, np.nan, np.nan, (np.nan, np.nan), True, 0))
    # least-squares intercepts of fixed-slope lines, then their crossing
    a = np.mean(fund[ok] - p_in[ok])
    b = np.mean(imd[ok] - 3 * p_in[ok])
    iip3 = (a - b) / 2
    if n >= 2:
        fund_slope = float(np.polyfit(p_in[ok], fund[ok], 1)[0])
        imd3_slope = float(np.polyfit(p_in[ok], imd[ok], 1)[0])
    else:
        fund_slope = imd3_slope = np.nan
    res = Iip3Result(float(iip3), fund_slope, imd3_slope, (float(p_in[ok].min()), float(p_in[ok].max())),
                     clipped_by_sensitivity=n < min_points, n_points=n)
    if n < min_points:
        raise SensitivityLimitError(f"only {n} IMD3 point(s) above the sensitivity limit "
                                    f"(need {min_points})", res)
    return res


def sweep_frequencies(f_lo, f_hi, step):
    """Inclusive uniform list ``f_lo, f_lo + step, ..., <= f_hi``."""
    if not f_lo < f_hi or not step > 0:
        raise ValueError("need f_lo < f_hi and step > 0")
    n = int(np.floor((f_hi - f_lo) / step * (1 + 1e-12))) + 1
    return f_lo + step * np.arange(n)


def iip3_vs_frequency(topology, f_lo, f_hi, step, stim, powers, repeats=1, noise_db=0.0, seed=0,
                      noise_floor=-110.0, min_points=4, product="max", **kw):
    """IIP3 at each frequency of a uniform sweep.

    With ``noise_db > 0`` every simulated output gets Gaussian dB noise
    (seeded) and the IIP3 is the arithmetic mean over ``repeats`` runs.
    Sensitivity-limited points come back with ``iip3 = nan`` and the
    ``clipped_by_sensitivity`` flag set instead of raising.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for f in sweep_frequencies(f_lo, f_hi, step):
        base = power_sweep_records(topology, stim.at(f1=float(f)), powers, noise_floor=noise_floor, **kw)
        vals, last = [], None
        for _ in range(repeats if noise_db > 0 else 1):
            recs = base
            if noise_db > 0:
                recs = [TwoToneRecord(r.p_in, *(np.array([r.p_fund, r.p_imd3_lo, r.p_imd3_hi])
                                                + rng.normal(0, noise_db, 3))) for r in base]
            try:
                last = iip3_from_records(recs, noise_floor, product, min_points)
                vals.append(last.iip3)
            except SensitivityLimitError as exc:
                last = exc.result
        if vals:
            out.append((float(f), Iip3Result(float(np.mean(vals)), last.fund_slope, last.imd3_slope,
                                             last.fit_range, len(vals) < (repeats if noise_db > 0 else 1),
                                             last.n_points)))
        else:
            out.append((float(f), Iip3Result(np.nan, np.nan, np.nan, (np.nan, np.nan), True, 0)))
    return out


def calibrate_eps(topology, stim, powers, target_iip3, noise_floor=None, product="max", min_points=1, **kw):
    """Common branch ``eps`` giving ``target_iip3`` dBm at ``stim.f1``.

    With the cubic mechanism alone and no noise floor IIP3 moves by
    ``-10*log10(eps)`` and the answer is closed form. Thermal distortion adds
    coherently and a finite ``noise_floor`` bends the low-power products, so
    either one switches to a 1-D root find on ``log(eps)`` through the same
    extraction the sweep uses.
    """
    mech = set(kw.get("mechanisms", ("cubic",)))
    floor = -np.inf if noise_floor is None else noise_floor

    def iip3(eps, nf=noise_floor, mp=min_points):
        recs = power_sweep_records(topology.with_eps(eps), stim, powers, noise_floor=nf, **kw)
        try:
            return iip3_from_records(recs, -np.inf if nf is None else nf, product, min_points=mp).iip3
        except SensitivityLimitError as exc:
            return exc.result.iip3

    ref = iip3(1.0, None, 1)
    eps = 10 ** ((ref - target_iip3) / 10)
    if mech == {"cubic"} and noise_floor is None:
        return float(eps)
    # thermal-only floor must lie above the target or no eps can reach it
    recs = power_sweep_records(topology.with_eps(0.0), stim, powers, noise_floor=None, **kw)
    if np.isfinite(recs[0].imd3(product)):
        if iip3_from_records(recs, -np.inf, product, 1).iip3 <= target_iip3:
            raise ValueError("thermal distortion alone already sets IIP3 below the target")

    def resid(x):
        v = iip3(np.exp(x))
        # products lost under the floor read as "very linear"
        return (v if np.isfinite(v) else 300.0) - target_iip3

    lo, hi = np.log(eps) - 5, np.log(eps) + 5
    if floor > -np.inf and resid(lo) * resid(hi) > 0:
        raise SensitivityLimitError(f"target IIP3 {target_iip3:.1f} dBm is not reachable above the "
                                    f"{floor:.0f} dBm noise floor", None)
    return float(np.exp(brentq(resid, lo, hi, xtol=1e-10)))


# ---------------------------------------------------------------------------
# time-domain oracle

# scipy.signal.windows.flattop coefficients
_FLATTOP = np.array([0.21557895, 0.41663158, 0.277263158, 0.083578947, 0.006947368])


def _rk4_kernel():
    from numba import njit

    @njit(cache=True)
    def run(c0, cm, lm, rm, rs, ls, eps, r_src, r_load, amp, w1, w2, dt, n_settle, n_anal,
            wk, a):
        # state: v0 (core voltage), q (motional charge), im, i (routing current, only if ls > 0)
        y = np.zeros(4)
        acc = np.zeros(len(wk), dtype=np.complex128)
        wsum = 0.0
        r_tot = r_src + r_load + rs
        k1 = np.zeros(4)
        k2 = np.zeros(4)
        k3 = np.zeros(4)
        k4 = np.zeros(4)
        tmp = np.zeros(4)

        def deriv(t, s, out):
            e = amp * (np.cos(w1 * t) + np.cos(w2 * t))
            x = s[1] / cm
            vc = x + eps * x * x * x
            if ls > 0:
                i = s[3]
                out[3] = (e - r_tot * i - s[0]) / ls
            else:
                i = (e - s[0]) / r_tot
                out[3] = 0.0
            out[0] = (i - s[2]) / c0
            out[1] = s[2]
            out[2] = (s[0] - rm * s[2] - vc) / lm

        n_tot = n_settle + n_anal
        for n in range(n_tot):
            t = n * dt
            if n >= n_settle:
                if ls > 0:
                    i = y[3]
                else:
                    e = amp * (np.cos(w1 * t) + np.cos(w2 * t))
                    i = (e - y[0]) / r_tot
                vl = r_load * i
                ph = 2 * np.pi * (n - n_settle) / n_anal
                w = a[0] - a[1] * np.cos(ph) + a[2] * np.cos(2 * ph) - a[3] * np.cos(3 * ph) + a[4] * np.cos(4 * ph)
                wsum += w
                for m in range(len(wk)):
                    acc[m] += w * vl * np.exp(-1j * wk[m] * t)
            deriv(t, y, k1)
            for m in range(4):
                tmp[m] = y[m] + 0.5 * dt * k1[m]
            deriv(t + 0.5 * dt, tmp, k2)
            for m in range(4):
                tmp[m] = y[m] + 0.5 * dt * k2[m]
            deriv(t + 0.5 * dt, tmp, k3)
            for m in range(4):
                tmp[m] = y[m] + dt * k3[m]
            deriv(t + dt, tmp, k4)
            for m in range(4):
                y[m] += dt / 6 * (k1[m] + 2 * k2[m] + 2 * k3[m] + k4[m])
            if not np.isfinite(y[0] + y[1] + y[2] + y[3]):
                return acc, wsum, n
        return acc, wsum, -1

    return run


_KERNEL = None


def time_domain_oracle(resonator, eps, stim, duration=None, steps_per_cycle=200, settle=None,
                       r_source=50.0, r_load=50.0):
    """Integrate a series-connected nonlinear resonator driven by two tones.

    The resonator sits in series between a ``r_source`` source and a
    ``r_load`` load. A fixed-step RK4 integrates the circuit with the cubic
    motional capacitor; the load voltage is then projected, under a flat-top
    window spanning a whole number of beat periods, onto the four target
    frequencies.

    Returns
    -------
    dict
        Keys ``"f1"``, ``"f2"``, ``"imd3_lo"``, ``"imd3_hi"`` with load power
        in dBm.
    """
    global _KERNEL
    if _KERNEL is None:
        _KERNEL = _rk4_kernel()
    df = stim.delta_f
    duration = 50 / df if duration is None else duration
    if duration < 20 / df:
        raise ValueError("duration must cover at least 20 beat periods")
    p = resonator
    if settle is None:
        # many motional and RC decay times, rounded up to whole beat periods
        tau = max(2 * p.lm / max(p.rm + r_source + r_load, 1e-12), (r_source + r_load) * p.c0)
        settle = np.ceil(40 * tau * df) / df
    n_beats = int(np.floor((duration - settle) * df + 1e-9))
    if n_beats < 10:
        raise ValueError("duration leaves fewer than 10 analysis beat periods after settling")
    t_anal = n_beats / df
    # coherent sampling: every target tone has an integer number of cycles in t_anal
    n_anal = int(np.ceil(steps_per_cycle * stim.f_hi * t_anal))
    dt = t_anal / n_anal
    n_settle = int(round(settle / dt))
    amp = np.sqrt(8 * r_source * _w(stim.p_per_tone))
    fk = np.array([stim.f1, stim.f2, stim.f_lo, stim.f_hi])
    # anchor the phase reference to the window start so coherent bins stay exact
    acc, wsum, bad = _KERNEL(p.c0, p.cm, p.lm, p.rm, p.rs, p.ls, float(eps), r_source, r_load, amp,
                             2 * np.pi * stim.f1, 2 * np.pi * stim.f2, dt, n_settle, n_anal,
                             2 * np.pi * fk, _FLATTOP)
    if bad >= 0:
        raise OracleInstabilityError(f"integration diverged at step {bad} (dt = {dt:.3g} s)")
    amps = 2 * np.abs(acc) / wsum
    pw = amps**2 / (2 * r_load)
    out = _dbm(pw)
    return {"f1": float(out[0]), "f2": float(out[1]), "imd3_lo": float(out[2]), "imd3_hi": float(out[3])}


# ---------------------------------------------------------------------------
# CSV

_COLUMNS = ["f_Hz", "p_in_dBm", "p_fund_dBm", "p_imd3_lo_dBm", "p_imd3_hi_dBm", "iip3_dBm"]


def write_two_tone_csv(path, rows):
    """``rows`` are (f, TwoToneRecord, iip3-or-nan) tuples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        for f, r, iip3 in rows:
            w.writerow([f"{f:.12g}", f"{r.p_in:.9g}", f"{r.p_fund:.9g}", f"{r.p_imd3_lo:.9g}",
                        f"{r.p_imd3_hi:.9g}", f"{iip3:.9g}"])


def read_two_tone_csv(path):
    """Measured or simulated two-tone log grouped by frequency: ``{f: [records]}``."""
    groups = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))
        missing = set(_COLUMNS[:5]) - set(rows.fieldnames or [])
        if missing:
            raise ValueError(f"two-tone CSV is missing columns {sorted(missing)}")
        for row in rows:
            f = float(row["f_Hz"])
            groups.setdefault(f, []).append(TwoToneRecord(
                float(row["p_in_dBm"]), float(row["p_fund_dBm"]),
                float(row["p_imd3_lo_dBm"]), float(row["p_imd3_hi_dBm"])))
    return groups
