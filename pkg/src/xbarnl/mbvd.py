"""
Modified Butterworth-Van Dyke (mBVD) resonator model.

The circuit is a routing section ``rs + j w ls`` in series with a static
capacitance ``c0`` shunted by the motional branch ``rm + j w lm + 1/(j w cm)``.

Coupling is defined as ``k2 = (pi^2/8) (fp^2 - fs^2) / fp^2`` and the quality
factor as the motional Q at ``fs``, ``q = 2 pi fs lm / rm``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "MbvdParams",
    "ResonatorMetrics",
    "FitResult",
    "NoResonanceError",
    "FitConvergenceError",
    "K2_MAX",
    "Q_UNBOUNDED",
    "admittance",
    "impedance",
    "motional_impedance",
    "core_impedance",
    "derived_metrics",
    "from_specs",
    "fit_mbvd",
    "initial_guess",
    "read_admittance_csv",
]

# k2 = (pi^2/8)(1 - fs^2/fp^2); synthesis accepts k2 below 8/pi^2
K2_MAX = 8 / np.pi**2
#: sentinel reported for q when rm == 0
Q_UNBOUNDED = 1e18


class NoResonanceError(ValueError):
    pass


class FitConvergenceError(RuntimeError):
    def __init__(self, msg, best):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class MbvdParams:
    c0: float
    cm: float
    lm: float
    rm: float
    rs: float = 0.0
    ls: float = 0.0

    def __post_init__(self):
        for name in ("c0", "cm", "lm"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ValueError(f"{name} must be > 0")
        for name in ("rm", "rs", "ls"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be >= 0")

    @property
    def fs(self):
        return 1 / (2 * np.pi * np.sqrt(self.lm * self.cm))

    @property
    def fp(self):
        return self.fs * np.sqrt(1 + self.cm / self.c0)

    def scaled(self, impedance):
        """Scale every element so all impedances are multiplied by ``impedance``."""
        return replace(self, c0=self.c0 / impedance, cm=self.cm / impedance, lm=self.lm * impedance,
                       rm=self.rm * impedance, rs=self.rs * impedance, ls=self.ls * impedance)

    def as_array(self):
        return np.array([self.c0, self.cm, self.lm, self.rm, self.rs, self.ls], dtype=float)


@dataclass(frozen=True)
class ResonatorMetrics:
    fs: float
    fp: float
    k2: float
    q: float
    q_bounded: bool = True


def motional_impedance(p, f):
    w = 2 * np.pi * np.asarray(f, dtype=float)
    return p.rm + 1j * w * p.lm + 1 / (1j * w * p.cm)


def core_impedance(p, f):
    """Impedance of c0 in parallel with the motional branch (no routing)."""
    w = 2 * np.pi * np.asarray(f, dtype=float)
    zm = motional_impedance(p, f)
    # written to stay finite when the lossless motional branch shorts
    return zm / (1 + 1j * w * p.c0 * zm)


def impedance(p, f):
    """Terminal impedance in ohm, including the routing section."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be > 0")
    return p.rs + 2j * np.pi * f * p.ls + core_impedance(p, f)


def admittance(p, f):
    """Input admittance in siemens at frequency ``f`` (Hz, scalar or array)."""
    return 1 / impedance(p, f)


def derived_metrics(p):
    fs = float(p.fs)
    fp = float(p.fp)
    k2 = np.pi**2 / 8 * (fp**2 - fs**2) / fp**2
    if p.rm == 0:
        return ResonatorMetrics(fs, fp, k2, Q_UNBOUNDED, q_bounded=False)
    return ResonatorMetrics(fs, fp, k2, 2 * np.pi * fs * p.lm / p.rm)


def from_specs(fs, k2, q, c0):
    """Synthesise lossless-routing mBVD parameters from (fs, k2, q, c0)."""
    if not 0 < k2 < K2_MAX:
        raise ValueError(f"k2 must lie in (0, 8/pi^2 = {K2_MAX:.6f}); got {k2}")
    if fs <= 0 or q <= 0 or c0 <= 0:
        raise ValueError("fs, q and c0 must be > 0")
    ratio2 = 1 / (1 - 8 * k2 / np.pi**2)  # (fp/fs)^2
    cm = c0 * (ratio2 - 1)
    lm = 1 / ((2 * np.pi * fs) ** 2 * cm)
    rm = 2 * np.pi * fs * lm / q
    return MbvdParams(c0=c0, cm=cm, lm=lm, rm=rm)


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitResult:
    params: MbvdParams
    residual_rms: float
    nfev: int
    success: bool
    message: str = ""

    @property
    def metrics(self):
        return derived_metrics(self.params)


def _sorted_samples(f, y):
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=complex)
    order = np.argsort(f, kind="stable")
    return f[order], y[order]


def _locate_resonances(f, y):
    mag = np.abs(y)
    i_s = int(np.argmax(mag))
    if i_s == 0 or i_s == f.size - 1:
        raise NoResonanceError("no admittance maximum inside the sweep")
    above = mag[i_s:]
    i_p = i_s + int(np.argmin(above))
    if i_p == f.size - 1 or i_p == i_s:
        raise NoResonanceError("no admittance minimum above the series resonance")
    return i_s, i_p


def initial_guess(f, y):
    """Deterministic seed from the |Y| extrema and the low-frequency slope."""
    f, y = _sorted_samples(f, y)
    i_s, i_p = _locate_resonances(f, y)
    fs, fp = f[i_s], f[i_p]
    ratio = (fp / fs) ** 2 - 1
    c_total = y[0].imag / (2 * np.pi * f[0])
    if c_total <= 0:
        raise NoResonanceError("low-frequency admittance is not capacitive")
    c0 = c_total / (1 + ratio)
    cm = c0 * ratio
    lm = 1 / ((2 * np.pi * fs) ** 2 * cm)
    g = y[i_s].real
    rm = 1 / g if g > 0 else 1 / abs(y[i_s])
    return MbvdParams(c0=c0, cm=cm, lm=lm, rm=rm)


def _residuals(y_model, y_meas):
    dmag = np.log10(np.abs(y_model)) - np.log10(np.abs(y_meas))
    dphase = np.angle(y_model / y_meas)
    return np.concatenate([dmag, dphase])


def fit_mbvd(f, y, guess=None, fit_routing=True, max_iter=200, xtol=1e-9):
    """Weighted least-squares fit of mBVD parameters to measured admittance.

    The residual weights log10|Y| and phase (radians) equally over all
    samples. Parameters are solved in log space for c0, cm, lm, rm and in
    scaled linear space (bounded at zero) for the routing rs, ls.

    Returns
    -------
    FitResult
        ``residual_rms`` is the RMS of the stacked weighted residual vector.
    """
    f, y = _sorted_samples(f, y)
    if f.size < 12:
        raise ValueError("need at least 12 admittance samples")
    _locate_resonances(f, y)
    if guess is None:
        guess = initial_guess(f, y)

    # routing terms live on a scale set by the motional resistance / inductance
    r_scale = max(guess.rm, 1e-3)
    l_scale = max(guess.lm * 1e-2, 1e-15)

    def unpack(x):
        c0, cm, lm, rm = np.exp(x[:4])
        rs = x[4] * r_scale if fit_routing else guess.rs
        ls = x[5] * l_scale if fit_routing else guess.ls
        return MbvdParams(c0, cm, lm, rm, max(rs, 0.0), max(ls, 0.0))

    x0 = np.concatenate([np.log([guess.c0, guess.cm, guess.lm, max(guess.rm, 1e-12)]),
                         [guess.rs / r_scale, guess.ls / l_scale]])
    # log-space elements may roam ten decades either way of the seed
    lo = np.r_[x0[:4] - 23.0, 0.0, 0.0]
    hi = np.r_[x0[:4] + 23.0, np.inf, np.inf]
    if not fit_routing:
        x0, lo, hi = x0[:4], lo[:4], hi[:4]

    def fun(x):
        if not fit_routing:
            x = np.r_[x, 0.0, 0.0]
        return _residuals(admittance(unpack(x), f), y)

    x0 = np.clip(x0, lo, hi)
    sol = least_squares(fun, x0, bounds=(lo, hi), method="trf", x_scale="jac",
                        xtol=xtol, ftol=1e-15, gtol=1e-15, max_nfev=max_iter * (x0.size + 1))
    xs = sol.x if fit_routing else np.r_[sol.x, 0.0, 0.0]
    params = unpack(xs)
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    if sol.status <= 0:
        raise FitConvergenceError(f"mBVD fit did not converge: {sol.message}",
                                  FitResult(params, rms, sol.nfev, False, sol.message))
    return FitResult(params, rms, sol.nfev, True, sol.message)


def read_admittance_csv(path):
    """Read ``f_Hz, re_Y_S, im_Y_S`` columns; ``#`` lines are comments."""
    f, y = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        header = next(rows)
        cols = [h.strip() for h in header]
        try:
            i_f, i_re, i_im = cols.index("f_Hz"), cols.index("re_Y_S"), cols.index("im_Y_S")
        except ValueError:
            raise ValueError(f"admittance CSV needs f_Hz, re_Y_S, im_Y_S columns; got {cols}") from None
        for row in rows:
            if not row:
                continue
            f.append(float(row[i_f]))
            y.append(float(row[i_re]) + 1j * float(row[i_im]))
    return np.array(f), np.array(y)
