import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbarnl import mbvd, rfnet
from xbarnl.mbvd import MbvdParams


def nodal_admittance(p, f):
    """Independent oracle: 3-node nodal solve of rs-ls / c0 || (rm-lm-cm) in 50-digit arithmetic."""
    mp.mp.dps = 50
    w = 2 * mp.pi * mp.mpf(float(f))
    j = mp.mpc(0, 1)
    # nodes: 1 terminal, 2 after routing, 3 between rm-lm and cm
    y_route = 1 / (mp.mpf(p.rs) + j * w * mp.mpf(p.ls))
    y_c0 = j * w * mp.mpf(p.c0)
    y_rl = 1 / (mp.mpf(p.rm) + j * w * mp.mpf(p.lm))
    y_cm = j * w * mp.mpf(p.cm)
    y = mp.matrix([
        [y_route, -y_route, 0],
        [-y_route, y_route + y_c0 + y_rl, -y_rl],
        [0, -y_rl, y_rl + y_cm],
    ])
    v = mp.lu_solve(y, mp.matrix([1, 0, 0]))
    return complex(1 / v[0])


params = st.builds(
    MbvdParams,
    c0=st.floats(1e-15, 1e-12), cm=st.floats(1e-16, 1e-13), lm=st.floats(1e-10, 1e-7),
    rm=st.floats(0.1, 50), rs=st.floats(0.01, 5), ls=st.floats(1e-13, 1e-10))


@settings(max_examples=80, deadline=None)
@given(p=params, f=st.floats(1e8, 1e11))
def test_admittance_matches_nodal_oracle(p, f):
    y = mbvd.admittance(p, f)
    ref = nodal_admittance(p, f)
    assert abs(y - ref) <= 1e-12 * abs(ref)


def test_series_resonance_limit():
    p = MbvdParams(c0=100e-15, cm=10e-15, lm=1e-9, rm=0.0)
    fs = p.fs
    y_res = abs(mbvd.admittance(p, fs * np.array([1 - 1e-6, 1 + 1e-6])))
    y_off = abs(mbvd.admittance(p, 0.9 * fs))
    assert np.all(20 * np.log10(y_res / y_off) >= 40)


def test_antiresonance_minimum():
    p = MbvdParams(c0=100e-15, cm=10e-15, lm=1e-9, rm=0.0)
    fp = p.fs * np.sqrt(1 + p.cm / p.c0)
    assert fp == pytest.approx(p.fp)
    y = abs(mbvd.admittance(p, fp * np.array([0.99, 1.0, 1.01])))
    assert y[1] <= y[0] and y[1] <= y[2]


def test_metrics_from_elements():
    m = mbvd.derived_metrics(MbvdParams(c0=1e-13, cm=7.8e-14, lm=1e-9, rm=1.0))
    assert m.fs == pytest.approx(18.02e9, rel=5e-4)
    # fp/fs = sqrt(2)
    m = mbvd.derived_metrics(MbvdParams(c0=1e-13, cm=1e-13, lm=1e-9, rm=1.0))
    assert m.k2 == pytest.approx(np.pi**2 / 8 * 0.5, rel=1e-12)
    assert m.k2 == pytest.approx(0.6169, abs=1e-4)


def test_unbounded_q_flag():
    m = mbvd.derived_metrics(MbvdParams(c0=1e-13, cm=1e-14, lm=1e-9, rm=0.0))
    assert not m.q_bounded and m.q == mbvd.Q_UNBOUNDED


def test_shunt_fp_lands_near_22ghz():
    p = mbvd.from_specs(18e9, 0.42, 80, 100e-15)
    assert p.fp == pytest.approx(18e9 / np.sqrt(1 - 8 * 0.42 / np.pi**2), rel=1e-12)
    assert p.fp / 1e9 == pytest.approx(22.16, abs=0.01)


def test_fp_from_specs_k2_046():
    p = mbvd.from_specs(18e9, 0.46, 60, 100e-15)
    # fs/sqrt(1 - 8 k2/pi^2) = 22.7296 GHz
    assert p.fp / 1e9 == pytest.approx(22.7296, abs=1e-4)


def test_from_specs_round_trip_series_resonator():
    m = mbvd.derived_metrics(mbvd.from_specs(21.9e9, 0.42, 80, 55e-15))
    assert (m.fs, m.k2, m.q) == pytest.approx((21.9e9, 0.42, 80), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(fs=st.floats(1e8, 5e10), k2=st.floats(1e-4, 0.8), q=st.floats(5, 5000), c0=st.floats(1e-15, 1e-11))
def test_from_specs_round_trip_property(fs, k2, q, c0):
    m = mbvd.derived_metrics(mbvd.from_specs(fs, k2, q, c0))
    assert m.fs == pytest.approx(fs, rel=1e-10)
    assert m.k2 == pytest.approx(k2, rel=1e-9)
    assert m.q == pytest.approx(q, rel=1e-9)


def test_weak_coupling_limit():
    p = mbvd.from_specs(20e9, 1e-9, 50, 100e-15)
    assert p.cm < 1e-22 and p.fp / p.fs - 1 < 1e-8


def test_k2_bound():
    with pytest.raises(ValueError):
        mbvd.from_specs(20e9, mbvd.K2_MAX, 50, 1e-13)
    with pytest.raises(ValueError):
        mbvd.from_specs(20e9, 0.0, 50, 1e-13)


def test_nonpositive_elements_rejected():
    with pytest.raises(ValueError):
        MbvdParams(c0=0, cm=1e-15, lm=1e-9, rm=1)
    with pytest.raises(ValueError):
        MbvdParams(c0=1e-13, cm=1e-15, lm=1e-9, rm=-1)


def test_scaled_scales_impedance():
    p = MbvdParams(c0=1e-13, cm=2e-14, lm=3e-9, rm=2, rs=0.5, ls=1e-11)
    f = np.linspace(1e9, 30e9, 7)
    assert np.allclose(mbvd.impedance(p.scaled(3.0), f), 3 * mbvd.impedance(p, f))


# -- fitting ---------------------------------------------------------------

TRUE = MbvdParams(c0=60e-15, cm=8e-15, lm=6.5e-9, rm=2.2, rs=0.8, ls=20e-12)


def sweep(p, n=401):
    f = np.linspace(0.8 * p.fs, 1.25 * p.fp, n)
    return f, mbvd.admittance(p, f)


def test_fit_noiseless_recovers_params():
    f, y = sweep(TRUE)
    r = mbvd.fit_mbvd(f, y)
    assert r.success
    assert np.allclose(r.params.as_array(), TRUE.as_array(), rtol=1e-3)


def test_fit_without_routing():
    p = MbvdParams(c0=60e-15, cm=8e-15, lm=6.5e-9, rm=2.2)
    f, y = sweep(p)
    r = mbvd.fit_mbvd(f, y, fit_routing=False)
    assert np.allclose(r.params.as_array()[:4], p.as_array()[:4], rtol=1e-3)


def test_fit_with_noise_monte_carlo():
    f, y = sweep(TRUE)
    fs_err, fp_err, rm_err = [], [], []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        noise = 1 + 0.01 * (rng.normal(size=f.size) + 1j * rng.normal(size=f.size)) / np.sqrt(2)
        r = mbvd.fit_mbvd(f, y * noise)
        fs_err.append(abs(r.params.fs / TRUE.fs - 1))
        fp_err.append(abs(r.params.fp / TRUE.fp - 1))
        rm_err.append(abs(r.params.rm / TRUE.rm - 1))
    assert np.median(fs_err) < 5e-4
    assert np.median(fp_err) < 5e-4
    assert np.median(rm_err) < 0.10


def test_fit_pure_capacitor_has_no_resonance():
    f = np.linspace(1e9, 30e9, 200)
    with pytest.raises(mbvd.NoResonanceError):
        mbvd.fit_mbvd(f, 2j * np.pi * f * 100e-15)


def test_fit_nonconvergence_carries_best_iterate():
    f, y = sweep(TRUE)
    with pytest.raises(mbvd.FitConvergenceError) as e:
        mbvd.fit_mbvd(f, y, guess=MbvdParams(c0=1e-13, cm=1e-15, lm=1e-8, rm=20.0), max_iter=1)
    assert isinstance(e.value.best.params, MbvdParams)


def test_read_admittance_csv(tmp_path):
    f, y = sweep(TRUE, 50)
    p = tmp_path / "y.csv"
    with open(p, "w") as fh:
        fh.write("# measured\nf_Hz,re_Y_S,im_Y_S\n")
        for fk, yk in zip(f, y):
            fh.write(f"{float(fk)!r},{float(yk.real)!r},{float(yk.imag)!r}\n")
    f2, y2 = mbvd.read_admittance_csv(p)
    assert np.array_equal(f2, f) and np.array_equal(y2, y)


def test_impedance_rejects_nonpositive_frequency():
    with pytest.raises(ValueError):
        mbvd.impedance(TRUE, 0.0)


def test_network_of_series_resonator_is_reciprocal():
    f = np.linspace(15e9, 30e9, 11)
    z = mbvd.impedance(TRUE, f)
    m = np.zeros((f.size, 2, 2), complex)
    m[:, 0, 0] = m[:, 1, 1] = 1
    m[:, 0, 1] = z
    s = rfnet.convert(m, "ABCD", "S")
    assert np.allclose(s[:, 0, 1], s[:, 1, 0])


@settings(max_examples=80, deadline=None)
@given(p=params, f=st.floats(1e8, 1e11))
def test_admittance_is_passive(p, f):
    assert mbvd.admittance(p, f).real >= 0


@settings(max_examples=60, deadline=None)
@given(fs=st.floats(10e9, 60e9), k2=st.floats(0.01, 0.6), q=st.floats(10, 500))
def test_round_trip_over_design_range(fs, k2, q):
    m = mbvd.derived_metrics(mbvd.from_specs(fs, k2, q, 100e-15))
    assert (m.fs, m.k2, m.q) == pytest.approx((fs, k2, q), rel=1e-9)


def test_q_and_k2_monotone():
    base = dict(c0=100e-15, cm=10e-15, lm=1e-9)
    qs = [mbvd.derived_metrics(MbvdParams(rm=r, **base)).q for r in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(qs) < 0)
    ks = [mbvd.derived_metrics(MbvdParams(c0=100e-15, cm=cm, lm=1e-9, rm=1.0)).k2
          for cm in (2e-15, 5e-15, 10e-15, 20e-15)]
    assert np.all(np.diff(ks) > 0)


def test_fit_is_idempotent():
    f, y = sweep(TRUE)
    first = mbvd.fit_mbvd(f, y * (1 + 0.005 * np.cos(np.arange(f.size)))).params
    again = mbvd.fit_mbvd(f, mbvd.admittance(first, f), guess=first).params
    assert np.allclose(again.as_array(), first.as_array(), rtol=1e-6)
