"""
On-wafer two-port calibration: switch terms, multiline TRL, series-resistor
reference impedance, impedance transformation and error-box de-embedding.

Error boxes follow the cascade convention ``M = A . DUT . B`` with cascading
matrices ``[b1, a1] = T [a2, b2]``; box ``b`` has its port 1 facing the DUT.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .rfnet import (ConversionSingularityError, FrequencyGrid, GridMismatchError, Network, convert,
                    s2t, t2s)

__all__ = [
    "WaveRecord",
    "ErrorBoxes",
    "LineStandard",
    "MtrlResult",
    "SeriesResistorResult",
    "CalibrationError",
    "ReflectAmbiguityError",
    "CalibrationQualityError",
    "switch_term_correct",
    "switch_terms_from_waves",
    "mtrl",
    "line_t",
    "series_resistor_c0",
    "impedance_step",
    "impedance_transform_boxes",
    "translate_boxes",
    "compose_boxes",
    "apply_calibration",
    "embed",
    "read_wave_csv",
    "write_gamma_csv",
    "write_c0_csv",
]

C_LIGHT = 299792458.0


class CalibrationError(ValueError):
    pass


class ReflectAmbiguityError(CalibrationError):
    pass


class CalibrationQualityError(CalibrationError):
    pass


def _freq_msg(f, k):
    return f" at f = {f[k]:.9g} Hz"


@dataclass(frozen=True)
class WaveRecord:
    """Raw waves for one drive direction ("forward" drives port 1)."""

    f: np.ndarray
    a1: np.ndarray
    b1: np.ndarray
    a4: np.ndarray
    b4: np.ndarray
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in ("forward", "reverse"):
            raise ValueError(f"direction must be 'forward' or 'reverse', got {self.direction!r}")
        f = np.atleast_1d(np.asarray(self.f, dtype=float))
        object.__setattr__(self, "f", f)
        for name in ("a1", "b1", "a4", "b4"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=complex))
            if v.shape != f.shape:
                raise GridMismatchError(f"{name} has {v.size} points, grid has {f.size}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, v)

    def scaled(self, c):
        return WaveRecord(self.f, c * self.a1, c * self.b1, c * self.a4, c * self.b4, self.direction)


def switch_terms_from_waves(forward, reverse):
    """``(gamma_f, gamma_r) = (a4/b4 forward, a1/b1 reverse)`` from any two-port measurement."""
    return forward.a4 / forward.b4, reverse.a1 / reverse.b1


def switch_term_correct(forward, reverse, switch_terms=None):
    """Two-port S from forward and reverse wave records.

    The non-driven incident waves are rebuilt from the switch terms,
    ``a4f = gamma_f*b4f`` and ``a1r = gamma_r*b1r``, and
    ``S = [b] [a]^-1``. With zero switch terms this is the plain ratio
    definition.
    """
    if forward.direction != "forward" or reverse.direction != "reverse":
        raise CalibrationError("need one forward and one reverse drive record")
    if forward.f.shape != reverse.f.shape or not np.allclose(forward.f, reverse.f, rtol=1e-12, atol=0):
        raise CalibrationError("forward and reverse records are on different frequency grids")
    f = forward.f
    if switch_terms is None:
        gf = np.zeros(f.size, dtype=complex)
        gr = np.zeros(f.size, dtype=complex)
    else:
        gf, gr = (np.broadcast_to(np.asarray(g, dtype=complex), f.shape) for g in switch_terms)
    a = np.empty((f.size, 2, 2), dtype=complex)
    b = np.empty_like(a)
    a[:, 0, 0], a[:, 1, 0] = forward.a1, gf * forward.b4
    a[:, 0, 1], a[:, 1, 1] = gr * reverse.b1, reverse.a4
    b[:, 0, 0], b[:, 1, 0] = forward.b1, forward.b4
    b[:, 0, 1], b[:, 1, 1] = reverse.b1, reverse.b4
    det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    bad = np.abs(det) <= 1e-300
    if bad.any():
        raise ConversionSingularityError("incident-wave matrix is singular" + _freq_msg(f, np.argmax(bad)),
                                         float(f[np.argmax(bad)]))
    return Network(FrequencyGrid(f), b @ np.linalg.inv(a))


# ---------------------------------------------------------------------------
# error boxes


@dataclass(frozen=True)
class ErrorBoxes:
    a: Network
    b: Network
    z_ref: object = 50.0  # reference impedance of the embedded (DUT) plane

    def __post_init__(self):
        if self.a.nports != 2 or self.b.nports != 2:
            raise ValueError("error boxes must be two-ports")
        if self.a.grid != self.b.grid:
            raise GridMismatchError("error boxes are on different grids")

    @property
    def grid(self):
        return self.a.grid

    @property
    def ta(self):
        return _t(self.a)

    @property
    def tb(self):
        return _t(self.b)

    @classmethod
    def from_t(cls, grid, ta, tb, z_ref=50.0):
        return cls(Network(grid, t2s(ta)), Network(grid, t2s(tb)), z_ref)

    @classmethod
    def identity(cls, grid, z_ref=50.0):
        eye = np.broadcast_to(np.eye(2, dtype=complex), (len(grid), 2, 2))
        return cls.from_t(grid, eye.copy(), eye.copy(), z_ref)


def _t(net):
    s21 = net.s[:, 1, 0]
    bad = np.abs(s21) <= 1e-300
    if bad.any():
        k = int(np.argmax(bad))
        raise ConversionSingularityError("zero transmission in a cascaded network" + _freq_msg(net.f, k),
                                         float(net.f[k]))
    return s2t(net.s)


def embed(boxes, dut):
    """Raw S seen through ``boxes`` for a DUT network (the forward model)."""
    return Network(dut.grid, t2s(boxes.ta @ _t(dut) @ boxes.tb))


def apply_calibration(boxes, raw):
    """De-embed: ``T_dut = T_a^-1 T_raw T_b^-1``."""
    if raw.grid != boxes.grid:
        raise GridMismatchError("raw data and error boxes are on different grids")
    ta, tb = boxes.ta, boxes.tb
    for t, name in ((ta, "a"), (tb, "b")):
        det = t[:, 0, 0] * t[:, 1, 1] - t[:, 0, 1] * t[:, 1, 0]
        bad = ~np.isfinite(det) | (np.abs(det) <= 1e-300)
        if bad.any():
            k = int(np.argmax(bad))
            raise ConversionSingularityError(f"error box {name} is not invertible" + _freq_msg(raw.f, k),
                                             float(raw.f[k]))
    td = np.linalg.solve(ta, _t(raw)) @ np.linalg.inv(tb)
    return Network(raw.grid, t2s(td), boxes.z_ref)


def compose_boxes(outer, inner):
    """Single box pair equivalent to ``outer`` (first tier) around ``inner``."""
    return ErrorBoxes.from_t(outer.grid, outer.ta @ inner.ta, inner.tb @ outer.tb, inner.z_ref)


def line_t(gamma, length):
    """Cascading matrix of a matched line: ``diag(exp(-gamma l), exp(gamma l))``."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=complex))
    t = np.zeros((gamma.size, 2, 2), dtype=complex)
    t[:, 0, 0] = np.exp(-gamma * length)
    t[:, 1, 1] = np.exp(gamma * length)
    return t


def translate_boxes(boxes, gamma, length):
    """Move both reference planes ``length`` metres back toward the VNA.

    The boxes lose ``length`` of matched line at their DUT side, so a DUT
    calibrated with the result includes that line on both ports.
    """
    tl = line_t(_per_f(gamma, boxes.grid), -length)
    return ErrorBoxes.from_t(boxes.grid, boxes.ta @ tl, tl @ boxes.tb, boxes.z_ref)


def _per_f(v, grid):
    v = np.asarray(v, dtype=complex)
    if v.ndim == 0:
        return np.full(len(grid), v)
    if v.shape != (len(grid),):
        raise GridMismatchError("expected one value per frequency")
    return v


def impedance_step(z_from, z_to):
    """S of an ideal junction from ``z_from`` (port 1) to ``z_to`` (port 2), power waves."""
    z_from = np.atleast_1d(np.asarray(z_from, dtype=float))
    z_to = np.atleast_1d(np.asarray(z_to, dtype=float))
    z_from, z_to = np.broadcast_arrays(z_from, z_to)
    g = (z_to - z_from) / (z_to + z_from)
    t = 2 * np.sqrt(z_from * z_to) / (z_from + z_to)
    s = np.empty(z_from.shape + (2, 2), dtype=complex)
    s[..., 0, 0], s[..., 1, 1] = g, -g
    s[..., 0, 1] = s[..., 1, 0] = t
    return s


def impedance_transform_boxes(boxes, z_line, z_target=50.0):
    """Re-reference the embedded plane from ``z_line`` to ``z_target``.

    Only the real part of ``z_line`` is used; calibrating with the result
    equals calibrating with ``boxes`` and then renormalizing to ``z_target``.
    """
    zl = np.real(_per_f(z_line, boxes.grid))
    if np.any(~np.isfinite(zl)) or np.any(zl <= 0):
        raise ValueError("line impedance must be finite with a positive real part")
    up = s2t(impedance_step(zl, z_target))  # z_line -> z_target
    down = s2t(impedance_step(np.full_like(zl, z_target), zl))
    return ErrorBoxes.from_t(boxes.grid, boxes.ta @ up, down @ boxes.tb, float(z_target))


# ---------------------------------------------------------------------------
# multiline TRL


@dataclass(frozen=True)
class LineStandard:
    """Line of ``length`` metres and its switch-corrected raw two-port."""

    length: float
    raw: Network


@dataclass(frozen=True)
class MtrlResult:
    gamma: np.ndarray
    boxes: ErrorBoxes
    reflect: np.ndarray  # reflect coefficient at the thru centre
    degenerate: np.ndarray  # frequencies where every line pair was near-singular
    weight: np.ndarray  # summed pair weight per frequency

    def __iter__(self):
        # allows ``gamma, boxes = mtrl(...)``
        return iter((self.gamma, self.boxes))


def _aligned(v, ref):
    """``v`` scaled to unit norm with its phase matched to ``ref``."""
    v = v / np.linalg.norm(v)
    ph = np.vdot(ref, v)
    return v * (np.conj(ph) / abs(ph)) if abs(ph) > 0 else v


def mtrl(thru, lines, reflect, reflect_guess=-1, ereff_est=None, min_weight=1e-6, z_line=50.0):
    """Multiline TRL from a thru, one or more lines and a symmetric reflect.

    Parameters
    ----------
    thru : LineStandard
    lines : sequence of LineStandard
        Lengths must differ from each other and from the thru.
    reflect : (raw port-1 reflection, raw port-2 reflection)
    reflect_guess : +1 or -1
        Rough sign of the reflect (open or short) to pick the root.
    ereff_est : float, optional
        Effective permittivity guess for choosing the eigenvalue order and
        the phase branch. Without it the shortest pair is assumed to be
        less than half a wavelength long.
    z_line : float
        Label for the (still unknown) line impedance carried by the boxes.

    Returns
    -------
    MtrlResult
        Propagation constant per frequency and error boxes referenced to the
        thru centre in the line impedance. Unpacks as ``gamma, boxes``.
    """
    lines = list(lines)
    if not lines:
        raise CalibrationError("multiline TRL needs at least one line besides the thru")
    stds = [thru] + lines
    lengths = np.array([s.length for s in stds], dtype=float)
    if len(set(np.round(lengths, 15))) != lengths.size:
        raise CalibrationError("line lengths must be distinct")
    grid = thru.raw.grid
    for s in stds:
        if s.raw.grid != grid:
            raise GridMismatchError("all standards must share one frequency grid")
    if reflect_guess not in (1, -1):
        raise ValueError("reflect_guess must be +1 or -1")
    f = grid.points
    nf = f.size
    tm = [_t(s.raw) for s in stds]
    ra = np.broadcast_to(np.asarray(reflect[0], dtype=complex), (nf,))
    rb = np.broadcast_to(np.asarray(reflect[1], dtype=complex), (nf,))

    pairs = [(i, j) for i in range(len(stds)) for j in range(len(stds)) if lengths[i] > lengths[j]]
    gamma = np.empty(nf, dtype=complex)
    ta = np.empty((nf, 2, 2), dtype=complex)
    tb = np.empty((nf, 2, 2), dtype=complex)
    refl = np.empty(nf, dtype=complex)
    degenerate = np.zeros(nf, dtype=bool)
    wsum = np.zeros(nf)
    prev_a = None

    for k in range(nf):
        est = []
        for i, j in pairs:
            dl = lengths[i] - lengths[j]
            lam, vec = np.linalg.eig(tm[i][k] @ np.linalg.inv(tm[j][k]))
            w = abs(lam[0] - lam[1]) ** 2 / 4  # |sinh(gamma dl)|^2
            est.append((w, dl, lam, vec))
        wmax = max(e[0] for e in est)
        if wmax < min_weight:
            degenerate[k] = True
        keep = [e for e in est if e[0] >= min_weight * max(wmax, 1e-300)]

        # order the best-conditioned pair against the estimate, the rest by
        # eigenvector alignment with it (eigenvalue order is fragile near half-wave)
        keep.sort(key=lambda e: -e[0])
        _, dl, lam, vec = keep[0]
        if ereff_est is not None:
            g_ref = 2j * np.pi * f[k] * np.sqrt(ereff_est) / C_LIGHT
            target = np.exp(-g_ref * dl)
            first = 0 if abs(lam[0] - target) + abs(lam[1] - 1 / target) <= \
                abs(lam[1] - target) + abs(lam[0] - 1 / target) else 1
        else:
            # forward wave: positive phase constant on the principal branch
            first = int(np.argmax((-np.log(lam) / dl).imag))
        g_best = -np.log(lam[first]) / dl
        if ereff_est is not None:
            g_best += 2j * np.pi * np.round((g_ref.imag - g_best.imag) * dl / (2 * np.pi)) / dl
        v1_ref, v2_ref = vec[:, first], vec[:, 1 - first]

        g_acc, w_acc = 0.0, 0.0
        cols = []
        for w, dl, lam, vec in keep:
            n0 = abs(np.vdot(v1_ref, vec[:, 0])) / np.linalg.norm(vec[:, 0])
            n1 = abs(np.vdot(v1_ref, vec[:, 1])) / np.linalg.norm(vec[:, 1])
            i1 = 0 if n0 >= n1 else 1
            g = -np.log(lam[i1]) / dl
            g = g + 2j * np.pi * np.round((g_best.imag - g.imag) * dl / (2 * np.pi)) / dl
            g_acc += w * g
            w_acc += w
            cols.append((w, vec[:, i1], vec[:, 1 - i1]))
        gamma[k] = g_acc / w_acc
        wsum[k] = w_acc

        wbest, r1, r2 = max(cols, key=lambda c: c[0])
        c1 = sum(w * _aligned(v1, r1) for w, v1, _ in cols) / w_acc
        c2 = sum(w * _aligned(v2, r2) for w, _, v2 in cols) / w_acc
        cmat = np.column_stack([c1, c2])

        # reflect: w = G d1/d2 from port 1, v = G d2/d1 from port 2
        m0inv = np.linalg.inv(tm[0][k])
        p = m0inv @ c1
        q = m0inv @ c2
        wa = (c2[0] - ra[k] * c2[1]) / (ra[k] * c1[1] - c1[0])
        vb = (p[1] - rb[k] * p[0]) / (rb[k] * q[0] - q[1])
        g_r = np.sqrt(wa * vb)
        if abs(g_r.real) < 0.1 * abs(g_r):
            raise ReflectAmbiguityError("reflect root sign is ambiguous" + _freq_msg(f, k))
        if np.sign(g_r.real) != reflect_guess:
            g_r = -g_r
        refl[k] = g_r
        ratio = wa / g_r  # d1/d2
        d2 = np.sqrt(1 / (ratio * np.linalg.det(cmat)))  # det(T_a) = 1
        a_k = cmat @ np.diag([ratio * d2, d2])
        # keep the box transmission continuous across frequency
        if prev_a is not None and np.real(np.vdot(prev_a.ravel(), a_k.ravel())) < 0:
            a_k = -a_k
        prev_a = a_k
        ta[k] = a_k
        tb[k] = np.linalg.solve(a_k, tm[0][k])

    # reflect sits at the thru centre, so the boxes already end there
    boxes = ErrorBoxes.from_t(grid, ta, tb, z_ref=z_line)
    return MtrlResult(gamma, boxes, refl, degenerate, wsum)


# ---------------------------------------------------------------------------
# series-resistor reference impedance


@dataclass(frozen=True)
class SeriesResistorResult:
    c0: np.ndarray  # F/m per frequency
    z0: np.ndarray  # ohm per frequency, from the broadband C0
    c0_broadband: float

    def __iter__(self):
        return iter((self.c0, self.z0))


def series_resistor_c0(resistor, gamma, r_dc, max_spread=0.2):
    """Line capacitance per unit length from a series-resistor standard.

    ``resistor`` is the calibrated standard in the line-impedance frame, so
    its normalized series impedance is ``x = r_dc / Z0``. With negligible
    line conductance ``gamma / Z0 = j w C0``, hence ``C0 = Im(gamma x / r_dc) / w``.
    The broadband value is the median; ``z0 = gamma / (j w C0)`` uses it.
    """
    gamma = _per_f(gamma, resistor.grid)
    if r_dc <= 0:
        raise ValueError("resistor DC value must be > 0")
    abcd = convert(resistor.s, "S", "ABCD", 1.0, f=resistor.f)
    x = abcd[:, 0, 1]
    w = 2 * np.pi * resistor.f
    c0 = np.imag(gamma * x / r_dc) / w
    if np.any(~np.isfinite(c0)) or np.any(c0 <= 0):
        raise CalibrationQualityError("series-resistor C0 estimate is non-positive")
    c_med = float(np.median(c0))
    spread = (c0.max() - c0.min()) / c_med
    if spread > max_spread:
        raise CalibrationQualityError(f"C0 varies by {100 * spread:.1f}% across the band "
                                      f"(limit {100 * max_spread:.0f}%)")
    z0 = gamma / (1j * w * c_med)
    return SeriesResistorResult(c0, z0, c_med)


# ---------------------------------------------------------------------------
# file I/O

_WAVES = ("a1", "b1", "a4", "b4")


def read_wave_csv(path):
    """Raw-wave CSV -> ``{"forward": WaveRecord, "reverse": WaveRecord}``."""
    rows = {"forward": [], "reverse": []}
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))
        need = {"f_Hz", "drive_direction"} | {f"{p}_{w}" for w in _WAVES for p in ("re", "im")}
        missing = need - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"wave CSV is missing columns {sorted(missing)}")
        for line in reader:
            d = line["drive_direction"].strip().lower()
            if d not in rows:
                raise ValueError(f"unknown drive_direction {d!r}")
            rows[d].append(line)
    out = {}
    for d, rs in rows.items():
        if not rs:
            raise CalibrationError(f"no {d} drive records in {path}")
        rs.sort(key=lambda r: float(r["f_Hz"]))
        f = np.array([float(r["f_Hz"]) for r in rs])
        waves = {w: np.array([float(r[f"re_{w}"]) + 1j * float(r[f"im_{w}"]) for r in rs]) for w in _WAVES}
        out[d] = WaveRecord(f, direction=d, **waves)
    return out


def write_gamma_csv(path, f, gamma, header=()):
    with open(path, "w", newline="") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        w = csv.writer(fh)
        w.writerow(["f_Hz", "alpha_Np_per_m", "beta_rad_per_m"])
        for fk, g in zip(f, gamma):
            w.writerow([f"{fk:.12g}", f"{g.real:.12g}", f"{g.imag:.12g}"])


def write_c0_csv(path, f, c0, z0, header=()):
    with open(path, "w", newline="") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        w = csv.writer(fh)
        w.writerow(["f_Hz", "c0_F_per_m", "re_z0_ohm", "im_z0_ohm"])
        for fk, c, z in zip(f, c0, z0):
            w.writerow([f"{fk:.12g}", f"{c:.12g}", f"{z.real:.12g}", f"{z.imag:.12g}"])
