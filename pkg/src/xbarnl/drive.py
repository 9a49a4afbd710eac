"""
Electro-thermal self-heating of ladder filters.

Each swept frequency is treated as a CW operating point: branch dissipation
heats that branch's thermal node, the temperature rise detunes the resonator
through its TCF, and the network is re-solved until the temperatures settle.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from . import ladder
from .rfnet import FrequencyGrid, Network, convert

__all__ = [
    "ThermalOperatingPoint",
    "PowerSweepResult",
    "BandEdgeError",
    "detune",
    "lm_scale",
    "solve_operating_point",
    "power_sweep",
    "calibrate_coupling",
    "dbm_to_w",
    "write_power_sweep_csv",
]


class BandEdgeError(ValueError):
    pass


def dbm_to_w(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, dtype=float) / 10)


def _frequency_scale(delta_t, tcf):
    s = 1 + tcf * np.asarray(delta_t, dtype=float) * 1e-6
    if np.any(s <= 0):
        raise ValueError("TCF detuning drives the resonance frequency to zero or below")
    return s


def lm_scale(delta_t, tcf):
    """Multiplier on lm that shifts fs and fp by ``1 + tcf*dT*1e-6``."""
    return 1 / _frequency_scale(delta_t, tcf) ** 2


def detune(p, delta_t, tcf):
    """Resonator with both resonances shifted by ``tcf`` (ppm/K) times ``delta_t`` (K)."""
    return replace(p, lm=p.lm * lm_scale(delta_t, tcf))


@dataclass(frozen=True)
class ThermalOperatingPoint:
    """Self-consistent temperatures, shape ``(nf, nbranch)``."""

    delta_t: np.ndarray
    p_dissipated: np.ndarray
    iterations: int
    converged: np.ndarray  # per frequency

    @property
    def all_converged(self):
        return bool(np.all(self.converged))


def _conductances(topology, coupling):
    # branches without a thermal node never heat
    g = np.array([b.thermal.g if b.thermal is not None else np.inf for b in topology.branches])
    return coupling / g


def solve_operating_point(topology, f, p_incident, tcf, coupling=1.0, damping=0.5, rtol=1e-4,
                          max_iter=100, z_source=50.0, z_load=50.0):
    """Damped fixed point ``dT <- dT + damping*(coupling*P(dT)/G - dT)``.

    Every frequency in ``f`` is an independent operating point; the loop runs
    on all of them at once and freezes each one as it converges.

    Returns
    -------
    op : ThermalOperatingPoint
    net : Network
        S-parameters at the converged (or best) temperatures.
    """
    f = FrequencyGrid(f).points
    if np.any(np.asarray(p_incident) < 0):
        raise ValueError("incident power must be >= 0")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    kappa = _conductances(topology, coupling)
    nb = len(topology)
    dt = np.zeros((f.size, nb))
    done = np.zeros(f.size, dtype=bool)
    p_incident = float(p_incident)

    def dissipation(dt_now):
        zb = ladder.branch_impedances(topology, f, lm_scale(dt_now, tcf))
        return ladder.branch_dissipation(topology, f, p_incident, z_source, z_load, zb=zb), zb

    pd, zb = dissipation(dt)
    it = 0
    if p_incident == 0 or tcf == 0 or not np.any(kappa):
        # no feedback path: one evaluation is the fixed point
        dt = pd * kappa
        done[:] = True
    else:
        while it < max_iter and not done.all():
            it += 1
            target = pd * kappa
            step = damping * (target - dt)
            step[done] = 0.0
            dt = dt + step
            scale = np.maximum(np.max(np.abs(dt), axis=1), 1e-300)
            done |= np.max(np.abs(step), axis=1) <= rtol * scale
            pd, zb = dissipation(dt)
    # zb and pd correspond to the returned dt
    abcd = ladder._abcd_chain(zb, topology.orientations)
    net = Network(FrequencyGrid(f), convert(abcd, "ABCD", "S", z_source, f=f), z_source)
    return ThermalOperatingPoint(dt, pd, it, done), net


@dataclass(frozen=True)
class PowerSweepResult:
    powers: np.ndarray  # dBm
    networks: tuple
    delta_il: np.ndarray  # dB, S21 change at the probe (positive = less loss)
    delta_f: np.ndarray  # Hz, signed shift of the upper band edge
    operating_points: tuple = ()

    @property
    def max_abs_delta_il(self):
        return float(np.max(np.abs(self.delta_il)))

    @property
    def max_abs_delta_f(self):
        return float(np.max(np.abs(self.delta_f)))


def _probe_db(net, probe_f):
    return float(np.interp(probe_f, net.f, net.s_db(1, 0)))


def _upper_edge(net, level, power):
    s21 = net.s_db(1, 0)
    try:
        return ladder.band_edges(net.f, s21, level)[1]
    except ladder.NoPassbandError:
        raise BandEdgeError(f"upper {level:g} dB band edge leaves the grid at {power:g} dBm") from None


def power_sweep(topology, grid, powers, tcf, probe_f, edge_level=2.0, coupling=1.0,
                damping=0.5, keep_operating_points=False):
    """Power-dependent S-parameters and the dIL / df distortion metrics.

    ``delta_il`` is the change of |S21| in dB at ``probe_f``; ``delta_f`` is
    the shift of the upper edge ``edge_level`` dB below each power's own
    transmission peak. Both are referenced to the first (lowest) power.
    """
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    powers = np.asarray(powers, dtype=float)
    if powers.ndim != 1 or powers.size == 0:
        raise ValueError("powers must be a non-empty 1-D sequence")
    if np.any(np.diff(powers) < 0):
        raise ValueError("powers must be ascending")
    if not grid.points[0] <= probe_f <= grid.points[-1]:
        raise ValueError("probe frequency lies outside the grid")
    nets, ops, il, edge = [], [], [], []
    for p in powers:
        op, net = solve_operating_point(topology, grid.points, dbm_to_w(p), tcf, coupling, damping)
        nets.append(net)
        ops.append(op)
        il.append(_probe_db(net, probe_f))
        edge.append(_upper_edge(net, edge_level, p))
    il, edge = np.array(il), np.array(edge)
    return PowerSweepResult(powers, tuple(nets), il - il[0], edge - edge[0],
                            tuple(ops) if keep_operating_points else ())


def calibrate_coupling(topology, grid, tcf, target_df, p_ref=-9.0, p_max=17.0, edge_level=2.0,
                       k0=1.0, max_expand=40):
    """Scalar heating coupling that makes |df(p_max) - df(p_ref)| equal ``target_df`` Hz.

    The coupling multiplies every branch's dissipation before it reaches the
    thermal node; it absorbs the unknown share of heat reaching the film.
    """
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)

    def edge_at(p, coupling):
        _, net = solve_operating_point(topology, grid.points, dbm_to_w(p), tcf, coupling)
        return _upper_edge(net, edge_level, p)

    def err(log_k):
        k = np.exp(log_k)
        return abs(edge_at(p_max, k) - edge_at(p_ref, k)) - target_df

    # geometric bracket search from k0; too much coupling can push fs to zero
    lo = hi = np.log(k0)
    e0 = err(lo)
    step = np.log(2.0) * (1 if e0 < 0 else -1)
    for _ in range(max_expand):
        nxt = hi + step
        try:
            e1 = err(nxt)
        except (ValueError, BandEdgeError):
            step /= 4
            continue
        if np.sign(e1) != np.sign(e0):
            lo, hi = sorted((hi, nxt))
            break
        hi = nxt
    else:
        raise RuntimeError("could not bracket the heating coupling")
    return float(np.exp(brentq(err, lo, hi, xtol=1e-6)))


def write_power_sweep_csv(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["power_dBm", "delta_il_dB", "delta_f_Hz"])
        for p, d_il, d_f in zip(result.powers, result.delta_il, result.delta_f):
            w.writerow([f"{p:.6g}", f"{d_il:.9g}", f"{d_f:.9g}"])
