"""
Frequency-domain network algebra and Touchstone v1 I/O.

All matrices are stored as stacks of shape ``(nfreq, nports, nports)`` in
linear complex form. Reference impedances are real (pseudo-wave definition
with real references, which coincides with the power-wave definition).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FrequencyGrid",
    "Network",
    "TouchstoneError",
    "OptionLineError",
    "FrequencyOrderError",
    "ColumnCountError",
    "ConversionSingularityError",
    "GridMismatchError",
    "parse_touchstone",
    "read_touchstone",
    "write_touchstone",
    "convert",
    "cascade",
    "renormalize",
    "shift_reference_plane",
    "thru",
    "s2t",
    "t2s",
]

_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


class TouchstoneError(ValueError):
    """Touchstone content could not be parsed; ``lineno`` is 1-based."""

    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)


class OptionLineError(TouchstoneError):
    pass


class FrequencyOrderError(TouchstoneError):
    pass


class ColumnCountError(TouchstoneError):
    pass


class ConversionSingularityError(ArithmeticError):
    def __init__(self, msg, frequency=None):
        self.frequency = frequency
        if frequency is not None:
            msg = f"{msg} at f = {frequency:.9g} Hz"
        super().__init__(msg)


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, positive frequency points in Hz."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float)).copy()
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("frequency grid must be a non-empty 1-D sequence")
        if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
            raise ValueError("frequency points must be finite and > 0")
        if pts.size > 1 and np.any(np.diff(pts) <= 0):
            raise ValueError("frequency points must be strictly increasing")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self.points.shape == other.points.shape and np.array_equal(self.points, other.points)

    __hash__ = None

    @classmethod
    def linspace(cls, start, stop, num):
        return cls(np.linspace(start, stop, num))

    @classmethod
    def arange(cls, start, stop, step):
        # inclusive of stop when it lands on the step lattice
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return cls(start + step * np.arange(n))


@dataclass(frozen=True, eq=False)
class Network:
    """n-port S-parameters on a frequency grid.

    Parameters
    ----------
    grid : FrequencyGrid or array_like
        Frequencies in Hz.
    s : array_like
        Complex S-matrices, shape ``(nfreq, n, n)``. A ``(nfreq,)`` array is
        read as a one-port.
    z_ref : float or array_like
        Real, positive reference impedance per port in ohm.
    """

    grid: FrequencyGrid
    s: np.ndarray
    z_ref: np.ndarray = field(default=50.0)

    def __post_init__(self):
        grid = self.grid if isinstance(self.grid, FrequencyGrid) else FrequencyGrid(self.grid)
        s = np.array(self.s, dtype=complex)
        if s.ndim == 1:
            s = s[:, None, None]
        if s.ndim != 3 or s.shape[1] != s.shape[2] or s.shape[0] != len(grid):
            raise ValueError(f"s must have shape (nfreq, n, n); got {s.shape} for {len(grid)} points")
        z = np.broadcast_to(np.asarray(self.z_ref, dtype=float), (s.shape[1],)).copy()
        if np.any(z <= 0) or not np.all(np.isfinite(z)):
            raise ValueError("reference impedances must be real and > 0")
        s.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "z_ref", z)

    @property
    def f(self):
        return self.grid.points

    @property
    def nports(self):
        return self.s.shape[1]

    def __len__(self):
        return len(self.grid)

    def s_db(self, i, j):
        with np.errstate(divide="ignore"):
            return 20 * np.log10(np.abs(self.s[:, i, j]))

    @property
    def s21(self):
        return self.s[:, 1, 0]

    @property
    def s11(self):
        return self.s[:, 0, 0]

    def to(self, kind):
        return convert(self.s, "S", kind, self.z_ref, f=self.f)

    def flipped(self):
        return Network(self.grid, self.s[:, ::-1, ::-1], self.z_ref[::-1])

    def allclose(self, other, rtol=1e-10, atol=0.0):
        return self.grid == other.grid and np.allclose(self.s, other.s, rtol=rtol, atol=atol)


def thru(grid, z_ref=50.0):
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    s = np.zeros((len(grid), 2, 2), dtype=complex)
    s[:, 0, 1] = s[:, 1, 0] = 1.0
    return Network(grid, s, z_ref)


# ---------------------------------------------------------------------------
# Touchstone v1


def _parse_option_line(line, lineno):
    tokens = line[1:].split()
    unit, param, fmt, z = "GHZ", "S", "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i].upper()
        if tok in _UNITS:
            unit = tok
        elif tok in ("S", "Y", "Z", "H", "G"):
            param = tok
        elif tok in ("RI", "MA", "DB"):
            fmt = tok
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise OptionLineError("option 'R' without impedance value", lineno)
            try:
                z = float(tokens[i + 1])
            except ValueError:
                raise OptionLineError(f"bad reference impedance {tokens[i + 1]!r}", lineno) from None
            if z <= 0:
                raise OptionLineError("reference impedance must be > 0", lineno)
            i += 1
        else:
            raise OptionLineError(f"unrecognised option token {tokens[i]!r}", lineno)
        i += 1
    if param != "S":
        raise OptionLineError(f"only S-parameter files are supported, got {param}", lineno)
    return _UNITS[unit], fmt, z


def _pairs_to_complex(a, b, fmt):
    if fmt == "RI":
        return a + 1j * b
    if fmt == "MA":
        return a * np.exp(1j * np.deg2rad(b))
    return 10 ** (a / 20) * np.exp(1j * np.deg2rad(b))


def parse_touchstone(text, nports=None):
    """Parse Touchstone v1 one- or two-port content into a :class:`Network`.

    ``nports`` is inferred from the first data row (3 columns: one-port,
    9 columns: two-port) unless given.
    """
    if not isinstance(text, str):
        text = text.read()
    option = None
    rows, linenos = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if option is not None:
                raise OptionLineError("duplicate option line", lineno)
            option = _parse_option_line(line, lineno)
            continue
        if line.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported", lineno)
        if option is None:
            raise OptionLineError("data before option line", lineno)
        try:
            values = [float(t) for t in line.split()]
        except ValueError:
            raise TouchstoneError(f"non-numeric data {line!r}", lineno) from None
        if nports is None:
            if len(values) == 3:
                nports = 1
            elif len(values) == 9:
                nports = 2
            else:
                raise ColumnCountError(f"expected 3 or 9 columns, got {len(values)}", lineno)
        expected = 1 + 2 * nports**2
        if len(values) != expected:
            raise ColumnCountError(f"expected {expected} columns, got {len(values)}", lineno)
        if rows and values[0] * option[0] <= rows[-1][0]:
            raise FrequencyOrderError("frequencies must be strictly increasing", lineno)
        values[0] *= option[0]
        rows.append(values)
        linenos.append(lineno)
    if option is None:
        raise OptionLineError("missing option line")
    if not rows:
        raise TouchstoneError("no data rows")

    data = np.array(rows)
    f = data[:, 0]
    if f[0] <= 0:
        raise FrequencyOrderError("frequencies must be > 0", linenos[0])
    _, fmt, z = option
    vals = _pairs_to_complex(data[:, 1::2], data[:, 2::2], fmt)
    if nports == 1:
        s = vals[:, :1, None]
    else:
        # v1 two-port column order: S11 S21 S12 S22
        s = vals.reshape(-1, 2, 2).transpose(0, 2, 1)
    return Network(f, s, z)


def read_touchstone(path):
    with open(path) as fh:
        return parse_touchstone(fh.read())


def _complex_to_pairs(c, fmt):
    if fmt == "RI":
        return c.real, c.imag
    ang = np.rad2deg(np.angle(c))
    if fmt == "MA":
        return np.abs(c), ang
    with np.errstate(divide="ignore"):
        return 20 * np.log10(np.abs(c)), ang


def write_touchstone(net, format="RI", unit="GHz", digits=12, comments=()):
    """Render a two-port network as Touchstone v1 text."""
    fmt = format.upper()
    if fmt not in ("RI", "MA", "DB"):
        raise ValueError(f"unknown format {format!r}")
    if net.nports != 2:
        raise ValueError(f"the v1 writer handles two-ports only, got {net.nports} ports")
    if not np.allclose(net.z_ref, net.z_ref[0]):
        raise ValueError("Touchstone v1 requires one reference impedance for all ports")
    scale = _UNITS[unit.upper()]
    lines = [f"! {c}" for c in comments]
    lines.append(f"# {unit} S {fmt} R {net.z_ref[0]:.{digits}g}")
    order = [(0, 0), (1, 0), (0, 1), (1, 1)]
    for k, f in enumerate(net.f):
        cols = [f"{f / scale:.{digits}g}"]
        for i, j in order:
            a, b = _complex_to_pairs(net.s[k, i, j], fmt)
            cols.append(f"{a:.{digits}g}")
            cols.append(f"{b:.{digits}g}")
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# parameter conversions


def _bad_index(mask):
    idx = np.flatnonzero(np.atleast_1d(mask))
    return int(idx[0]) if idx.size else None


def _freq_at(f, k):
    if f is None or k is None:
        return None
    return float(np.atleast_1d(f)[k])


def _check_invertible(mats, what, f):
    cond = np.linalg.cond(mats)
    bad = ~np.isfinite(cond) | (cond > 1e14)
    k = _bad_index(bad)
    if k is not None:
        raise ConversionSingularityError(f"singular {what} matrix", _freq_at(f, k))


def _s_to(s, to, z, f):
    n = s.shape[-1]
    eye = np.eye(n)
    sq = np.sqrt(z)
    if to == "S":
        return s.copy()
    if to == "Z":
        _check_invertible(eye - s, "(I - S)", f)
        zn = (eye + s) @ np.linalg.inv(eye - s)
        return sq[:, None] * zn * sq[None, :]
    if to == "Y":
        _check_invertible(eye + s, "(I + S)", f)
        yn = (eye - s) @ np.linalg.inv(eye + s)
        return yn / sq[:, None] / sq[None, :]
    if to == "ABCD":
        if n != 2:
            raise ValueError("ABCD parameters are defined for two-ports only")
        s11, s12, s21, s22 = s[:, 0, 0], s[:, 0, 1], s[:, 1, 0], s[:, 1, 1]
        k = _bad_index(np.abs(s21) < 1e-300)
        if k is not None:
            raise ConversionSingularityError("S21 = 0, ABCD undefined", _freq_at(f, k))
        z1, z2 = z
        d = 2 * s21
        out = np.empty_like(s)
        out[:, 0, 0] = ((1 + s11) * (1 - s22) + s12 * s21) / d * np.sqrt(z1 / z2)
        out[:, 0, 1] = ((1 + s11) * (1 + s22) - s12 * s21) / d * np.sqrt(z1 * z2)
        out[:, 1, 0] = ((1 - s11) * (1 - s22) - s12 * s21) / d / np.sqrt(z1 * z2)
        out[:, 1, 1] = ((1 - s11) * (1 + s22) + s12 * s21) / d * np.sqrt(z2 / z1)
        return out
    raise ValueError(f"unknown parameter kind {to!r}")


def _to_s(m, frm, z, f):
    n = m.shape[-1]
    eye = np.eye(n)
    sq = np.sqrt(z)
    if frm == "S":
        return m.copy()
    if frm == "Z":
        zn = m / sq[:, None] / sq[None, :]
        _check_invertible(zn + eye, "(Z + I)", f)
        return (zn - eye) @ np.linalg.inv(zn + eye)
    if frm == "Y":
        yn = m * sq[:, None] * sq[None, :]
        _check_invertible(eye + yn, "(I + Y)", f)
        return (eye - yn) @ np.linalg.inv(eye + yn)
    if frm == "ABCD":
        if n != 2:
            raise ValueError("ABCD parameters are defined for two-ports only")
        a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
        z1, z2 = z
        den = a * z2 + b + c * z1 * z2 + d * z1
        k = _bad_index(np.abs(den) < 1e-300)
        if k is not None:
            raise ConversionSingularityError("degenerate ABCD matrix", _freq_at(f, k))
        out = np.empty_like(m)
        out[:, 0, 0] = (a * z2 + b - c * z1 * z2 - d * z1) / den
        out[:, 0, 1] = 2 * (a * d - b * c) * np.sqrt(z1 * z2) / den
        out[:, 1, 0] = 2 * np.sqrt(z1 * z2) / den
        out[:, 1, 1] = (-a * z2 + b - c * z1 * z2 + d * z1) / den
        return out
    raise ValueError(f"unknown parameter kind {frm!r}")


def convert(m, frm, to, z_ref=50.0, f=None):
    """Convert between S, Y, Z and ABCD representations.

    ``m`` is a single ``(n, n)`` matrix or a stack ``(nfreq, n, n)``.
    ``f`` is only used to name the offending frequency in errors.
    """
    frm, to = frm.upper(), to.upper()
    m = np.asarray(m, dtype=complex)
    single = m.ndim == 2
    if single:
        m = m[None]
    z = np.broadcast_to(np.asarray(z_ref, dtype=float), (m.shape[-1],))
    out = _s_to(_to_s(m, frm, z, f), to, z, f)
    return out[0] if single else out


def s2t(s):
    """S -> cascading T, with ``[b1, a1] = T [a2, b2]``."""
    s11, s12, s21, s22 = s[..., 0, 0], s[..., 0, 1], s[..., 1, 0], s[..., 1, 1]
    t = np.empty_like(s)
    t[..., 0, 0] = -(s11 * s22 - s12 * s21)
    t[..., 0, 1] = s11
    t[..., 1, 0] = -s22
    t[..., 1, 1] = 1
    return t / s21[..., None, None]


def t2s(t):
    t11, t12, t21, t22 = t[..., 0, 0], t[..., 0, 1], t[..., 1, 0], t[..., 1, 1]
    s = np.empty_like(t)
    s[..., 0, 0] = t12
    s[..., 0, 1] = t11 * t22 - t12 * t21
    s[..., 1, 0] = 1
    s[..., 1, 1] = -t21
    return s / t22[..., None, None]


# ---------------------------------------------------------------------------
# network operations


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("networks are defined on different frequency grids")


def cascade(a, b):
    """Connect port 2 of ``a`` to port 1 of ``b``."""
    if a.nports != 2 or b.nports != 2:
        raise ValueError("cascade needs two two-port networks")
    _same_grid(a, b)
    if not np.isclose(a.z_ref[1], b.z_ref[0], rtol=1e-12):
        raise GridMismatchError("reference impedances at the joined ports differ")
    sa, sb = a.s, b.s
    den = 1 - sa[:, 1, 1] * sb[:, 0, 0]
    s = np.empty_like(sa)
    s[:, 0, 0] = sa[:, 0, 0] + sa[:, 0, 1] * sa[:, 1, 0] * sb[:, 0, 0] / den
    s[:, 0, 1] = sa[:, 0, 1] * sb[:, 0, 1] / den
    s[:, 1, 0] = sa[:, 1, 0] * sb[:, 1, 0] / den
    s[:, 1, 1] = sb[:, 1, 1] + sb[:, 1, 0] * sb[:, 0, 1] * sa[:, 1, 1] / den
    return Network(a.grid, s, [a.z_ref[0], b.z_ref[1]])


def renormalize(net, z_new):
    """Change the real reference impedance of every port, keeping the circuit."""
    z_new = np.broadcast_to(np.asarray(z_new, dtype=float), (net.nports,)).copy()
    if np.any(z_new <= 0) or not np.all(np.isfinite(z_new)):
        raise ValueError("new reference impedance must be real and > 0")
    z_old = net.z_ref
    r = (z_new - z_old) / (z_new + z_old)
    k = (z_new + z_old) / (2 * np.sqrt(z_new * z_old))
    eye = np.eye(net.nports)
    rs = net.s - np.diag(r)
    lhs = eye - r[:, None] * net.s
    s = k[:, None] * (rs @ np.linalg.inv(lhs)) / k[None, :]
    return Network(net.grid, s, z_new)


def shift_reference_plane(net, gamma, length, port):
    """Scale S by ``exp(-gamma*length)`` once per traversal of ``port``.

    Positive ``length`` adds matched line at the port; negative ``length``
    removes it (moves the plane toward the DUT).
    """
    gamma = np.asarray(gamma, dtype=complex)
    if gamma.ndim == 0:
        gamma = np.full(len(net), gamma)
    elif gamma.shape != (len(net),):
        raise GridMismatchError("gamma must have one value per frequency")
    e = np.exp(-gamma * length)
    fac = np.ones((len(net), net.nports), dtype=complex)
    fac[:, port] = e
    s = net.s * fac[:, :, None] * fac[:, None, :]
    return Network(net.grid, s, net.z_ref)
