"""
Ladder filters built from mBVD resonators.

A topology is an ordered list of series and shunt branches walked from
port 1 to port 2. Networks are assembled by chaining ABCD sections; branch
currents and dissipation come from a nodal solve of the same circuit driven
by a Thevenin source.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import mbvd
from .rfnet import FrequencyGrid, Network, convert
from .thermal import ThermalNode

__all__ = [
    "Branch",
    "LadderTopology",
    "FilterMetrics",
    "NoPassbandError",
    "LadderConditioningError",
    "LadderSolution",
    "branch_impedances",
    "assemble",
    "solve",
    "branch_dissipation",
    "filter_metrics",
    "band_edges",
    "third_order_ladder",
    "tune_c0_for_match",
    "reference_filter",
    "image_impedance",
    "power_balance",
    "source_voltage",
]


class NoPassbandError(ValueError):
    pass


class LadderConditioningError(ArithmeticError):
    def __init__(self, msg, frequency=None):
        self.frequency = frequency
        if frequency is not None:
            msg = f"{msg} at f = {frequency:.9g} Hz"
        super().__init__(msg)


@dataclass(frozen=True)
class Branch:
    """One ladder element.

    ``eps`` is the cubic coefficient (1/V^2) of the motional capacitor,
    ``v = x + eps*x**3`` with ``x = q/cm``; it is only used by :mod:`imd`.
    """

    orientation: str
    resonator: mbvd.MbvdParams
    thermal: ThermalNode | None = None
    eps: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.orientation not in ("series", "shunt"):
            raise ValueError(f"orientation must be 'series' or 'shunt', got {self.orientation!r}")
        if not isinstance(self.resonator, mbvd.MbvdParams):
            raise TypeError("resonator must be MbvdParams")
        if self.thermal is not None and not isinstance(self.thermal, ThermalNode):
            raise TypeError("thermal must be a ThermalNode or None")


@dataclass(frozen=True)
class LadderTopology:
    branches: tuple

    def __post_init__(self):
        branches = tuple(self.branches)
        if not branches:
            raise ValueError("a ladder needs at least one branch")
        for b in branches:
            if not isinstance(b, Branch):
                raise TypeError(f"expected Branch, got {type(b).__name__}")
        object.__setattr__(self, "branches", branches)

    def __len__(self):
        return len(self.branches)

    def __iter__(self):
        return iter(self.branches)

    @property
    def orientations(self):
        return [b.orientation for b in self.branches]

    def with_thermal(self, node):
        return LadderTopology([replace(b, thermal=node) for b in self.branches])

    def with_eps(self, eps):
        return LadderTopology([replace(b, eps=eps) for b in self.branches])


@dataclass(frozen=True)
class FilterMetrics:
    fc: float
    il: float
    fbw3: float
    oob: float
    rl_min: float
    f_lo: float
    f_hi: float


def branch_impedances(topology, f, lm_scale=None):
    """Branch impedances, shape ``(nf, nbranch)``.

    ``lm_scale`` (broadcastable to that shape) multiplies each motional
    inductance, which is how thermal detuning enters.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    out = np.empty((f.size, len(topology)), dtype=complex)
    for k, b in enumerate(topology.branches):
        p = b.resonator
        if lm_scale is not None:
            scale = np.broadcast_to(lm_scale, out.shape)[:, k]
            p = replace(p, lm=p.lm * scale)
        out[:, k] = mbvd.impedance(p, f)
    return out


def _abcd_chain(zb, orientations):
    nf = zb.shape[0]
    m = np.broadcast_to(np.eye(2, dtype=complex), (nf, 2, 2)).copy()
    for k, orient in enumerate(orientations):
        sec = np.broadcast_to(np.eye(2, dtype=complex), (nf, 2, 2)).copy()
        if orient == "series":
            sec[:, 0, 1] = zb[:, k]
        else:
            sec[:, 1, 0] = 1 / zb[:, k]
        m = m @ sec
    return m


def assemble(topology, grid, z_ref=50.0, lm_scale=None):
    """Two-port network of the ladder, referenced to ``z_ref`` at both ports."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    zb = branch_impedances(topology, grid.points, lm_scale)
    abcd = _abcd_chain(zb, topology.orientations)
    return Network(grid, convert(abcd, "ABCD", "S", z_ref, f=grid.points), z_ref)


# ---------------------------------------------------------------------------
# nodal solution


def _node_map(orientations):
    """(node_a, node_b) per branch; ground is -1. Returns pairs and node count."""
    pairs, node = [], 0
    for orient in orientations:
        if orient == "series":
            pairs.append((node, node + 1))
            node += 1
        else:
            pairs.append((node, -1))
    return pairs, node + 1


@dataclass(frozen=True)
class LadderSolution:
    """Phasor (peak) solution of a driven ladder, arrays over frequency."""

    f: np.ndarray
    v_branch: np.ndarray  # (nf, nb) voltage from node a to node b
    i_branch: np.ndarray  # (nf, nb) current from node a to node b
    v_in: np.ndarray
    i_in: np.ndarray
    v_out: np.ndarray
    z_source: float
    z_load: float

    @property
    def p_dissipated(self):
        return 0.5 * np.real(self.v_branch * np.conj(self.i_branch))

    @property
    def p_load(self):
        return 0.5 * np.abs(self.v_out) ** 2 / self.z_load

    @property
    def p_input(self):
        return 0.5 * np.real(self.v_in * np.conj(self.i_in))


def _nodal_matrix(zb, pairs, nnodes, z_source, z_load):
    nf = zb.shape[0]
    y = np.zeros((nf, nnodes, nnodes), dtype=complex)
    yb = 1 / zb
    for k, (a, b) in enumerate(pairs):
        y[:, a, a] += yb[:, k]
        if b >= 0:
            y[:, b, b] += yb[:, k]
            y[:, a, b] -= yb[:, k]
            y[:, b, a] -= yb[:, k]
    y[:, 0, 0] += 1 / z_source
    y[:, -1, -1] += 1 / z_load
    return y


def _solve_nodes(y, j, f):
    bad = ~np.all(np.isfinite(y), axis=(1, 2))
    if not bad.any():
        cond = np.linalg.cond(y)
        bad = ~np.isfinite(cond) | (cond > 1e15)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise LadderConditioningError("singular ladder solve (lossless resonance?)", float(f[k]))
    return np.linalg.solve(y, j[..., None])[..., 0]


def solve(topology, f, v_source, z_source=50.0, z_load=50.0, zb=None, injections=None):
    """Nodal solve for a Thevenin source ``v_source`` (peak phasor) at port 1.

    ``injections`` optionally adds current sources, shape ``(nf, nnodes)``.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if zb is None:
        zb = branch_impedances(topology, f)
    pairs, nnodes = _node_map(topology.orientations)
    # a branch this close to a short is an exact lossless resonance in disguise
    short = np.abs(zb) <= 1e-12 * min(z_source, z_load)
    if short.any():
        k = int(np.flatnonzero(short.any(axis=1))[0])
        raise LadderConditioningError("branch impedance vanishes (lossless resonance)", float(f[k]))
    y = _nodal_matrix(zb, pairs, nnodes, z_source, z_load)
    j = np.zeros((f.size, nnodes), dtype=complex)
    j[:, 0] = np.broadcast_to(v_source, f.shape) / z_source
    if injections is not None:
        j = j + injections
    v = _solve_nodes(y, j, f)
    vb = np.empty(zb.shape, dtype=complex)
    for k, (a, b) in enumerate(pairs):
        vb[:, k] = v[:, a] - (v[:, b] if b >= 0 else 0)
    ib = vb / zb
    v_in = v[:, 0]
    i_in = (np.broadcast_to(v_source, f.shape) - v_in) / z_source
    return LadderSolution(f, vb, ib, v_in, i_in, v[:, -1], z_source, z_load)


def source_voltage(p_available, z_source):
    """Peak EMF of a source delivering ``p_available`` W into a conjugate match."""
    return np.sqrt(8 * z_source * np.asarray(p_available, dtype=float))


def branch_dissipation(topology, f, p_incident, z_source=50.0, z_load=50.0, zb=None):
    """Power dissipated in each branch (W) for an incident power ``p_incident``.

    ``p_incident`` is the available power of a source behind ``z_source``.
    Returns shape ``(nbranch,)`` for scalar ``f`` else ``(nf, nbranch)``.
    """
    if np.any(np.asarray(p_incident) < 0):
        raise ValueError("incident power must be >= 0")
    scalar = np.ndim(f) == 0
    sol = solve(topology, f, source_voltage(p_incident, z_source), z_source, z_load, zb=zb)
    p = sol.p_dissipated
    return p[0] if scalar else p


def power_balance(topology, f, p_incident, z_source=50.0, z_load=50.0, zb=None):
    """(dissipated per branch, delivered to load, reflected) in W."""
    sol = solve(topology, f, source_voltage(p_incident, z_source), z_source, z_load, zb=zb)
    z_in = sol.v_in / sol.i_in
    gamma = (z_in - z_source) / (z_in + z_source)
    p_refl = np.abs(gamma) ** 2 * np.asarray(p_incident, dtype=float)
    return sol.p_dissipated, sol.p_load, p_refl


# ---------------------------------------------------------------------------
# metrics


def _crossing(f, y, i_in, i_out, level):
    """Linear interpolation of the ``level`` crossing between two samples."""
    y0, y1 = y[i_in], y[i_out]
    t = (level - y0) / (y1 - y0)
    return f[i_in] + t * (f[i_out] - f[i_in])


def band_edges(f, s21_db, level_db, peak=None):
    """Frequencies where ``s21_db`` falls ``level_db`` below its peak.

    Walks outward from the peak sample and interpolates linearly between the
    bracketing samples. Raises :class:`NoPassbandError` if an edge is not
    found inside the grid.
    """
    f = np.asarray(f, dtype=float)
    s21_db = np.asarray(s21_db, dtype=float)
    k = int(np.argmax(s21_db)) if peak is None else int(peak)
    target = s21_db[k] - level_db
    below = s21_db < target
    lo_idx = np.flatnonzero(below[:k])
    hi_idx = np.flatnonzero(below[k:])
    if lo_idx.size == 0 or hi_idx.size == 0:
        raise NoPassbandError(f"no {level_db:g} dB band edge inside the grid")
    i = lo_idx[-1]
    j = k + hi_idx[0]
    return _crossing(f, s21_db, i, i + 1, target), _crossing(f, s21_db, j - 1, j, target)


def filter_metrics(net, band_hint=None, oob_window=1.5):
    """Centre frequency, insertion loss, 3 dB FBW, OoB rejection and in-band RL.

    The stopband floor is the largest |S21| further than ``oob_window``
    times the 3 dB span from either band edge.
    """
    f = net.f
    s21 = net.s_db(1, 0)
    s11 = net.s_db(0, 0)
    if band_hint is not None:
        lo, hi = band_hint
        inside = np.flatnonzero((f >= lo) & (f <= hi))
        if inside.size == 0:
            raise NoPassbandError("band hint does not overlap the grid")
        k = inside[np.argmax(s21[inside])]
    else:
        k = int(np.argmax(s21))
    f_lo, f_hi = band_edges(f, s21, 3.0, peak=k)
    fc = np.sqrt(f_lo * f_hi)
    span = f_hi - f_lo
    stop = (f < f_lo - oob_window * span) | (f > f_hi + oob_window * span)
    if not stop.any():
        raise NoPassbandError("grid has no stopband samples outside the OoB window")
    il = -s21[k]
    oob = s21[k] - s21[stop].max()
    if oob < 10.0:
        raise NoPassbandError(f"peak is only {oob:.2f} dB above the stopband floor")
    band = (f >= f_lo) & (f <= f_hi)
    rl_min = float(np.min(-s11[band])) if band.any() else float(-s11[k])
    return FilterMetrics(fc=float(fc), il=float(il), fbw3=float(span / fc), oob=float(oob),
                         rl_min=rl_min, f_lo=float(f_lo), f_hi=float(f_hi))


# ---------------------------------------------------------------------------
# design helpers


def third_order_ladder(series, shunt, c0_series, c0_ratio=2.0, order="series-shunt-series",
                       thermal=None, eps=0.0):
    """Build a three-branch ladder from (fs, k2, q) resonator specs.

    ``series`` and ``shunt`` are mappings with keys ``fs``, ``k2``, ``q``;
    the shunt static capacitance is ``c0_ratio * c0_series``.
    """
    rs = mbvd.from_specs(series["fs"], series["k2"], series["q"], c0_series)
    rp = mbvd.from_specs(shunt["fs"], shunt["k2"], shunt["q"], c0_ratio * c0_series)
    seq = order.split("-")
    if sorted(set(seq)) not in (["series", "shunt"], ["series"], ["shunt"]):
        raise ValueError(f"bad branch order {order!r}")
    branches = [Branch(o, rs if o == "series" else rp, thermal, eps, name=f"{o}{i}")
                for i, o in enumerate(seq)]
    return LadderTopology(branches)


def image_impedance(topology, f):
    """Port-1 image impedance ``sqrt(A B / (C D))``."""
    zb = branch_impedances(topology, f)
    m = _abcd_chain(zb, topology.orientations)
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    return np.sqrt(a * b / (c * d))


def tune_c0_for_match(build, band, z_ref=50.0, npts=401, bounds=(1e-15, 1e-11)):
    """Series static capacitance minimising the band-averaged |S11|^2.

    ``build(c0_series)`` returns a :class:`LadderTopology`; ``band`` is the
    (f_lo, f_hi) interval over which the match is averaged.
    """
    f = np.linspace(band[0], band[1], npts)

    def cost(log_c0):
        net = assemble(build(np.exp(log_c0)), f, z_ref)
        return float(np.mean(np.abs(net.s11) ** 2))

    # coarse log scan first; the cost has several shallow minima over decades
    trial = np.linspace(*np.log(bounds), 121)
    k = int(np.argmin([cost(x) for x in trial]))
    lo, hi = trial[max(k - 1, 0)], trial[min(k + 1, trial.size - 1)]
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    return float(np.exp(res.x))


# 50 ohm, ~21.7 GHz reference design: C0 scale and shunt detuning were set once
# by scanning the lossless-routing model, not by the match helper above
REFERENCE_SERIES = {"fs": 21.9e9, "k2": 0.47, "q": 50.0}
REFERENCE_SHUNT = {"fs": 18.3e9, "k2": 0.53, "q": 50.0}
REFERENCE_C0_SERIES = 65e-15


def reference_filter(thermal=None, eps=0.0, order="series-shunt-series"):
    """Third-order 21.7 GHz reference ladder (2:1 shunt:series static capacitance)."""
    return third_order_ladder(REFERENCE_SERIES, REFERENCE_SHUNT, REFERENCE_C0_SERIES, 2.0,
                              order, thermal, eps)
